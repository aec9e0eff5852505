"""Smoke test for the pyqkdlab extension module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pyqkdlab-*.whl

Then run `python python/smoke_test.py`.
"""

import math

import pyqkdlab as q


def close(a, b, rel=1e-12):
    return math.isclose(a, b, rel_tol=rel, abs_tol=0.0)


def main():
    gys = q.Preset("GYS")
    assert gys.name == "GYS" and close(gys.eta_bob, 0.045)

    link = q.link_efficiency(gys, 100.0)
    assert close(link["eta"], 3.574477056259267e-4)

    stats = q.detection_stats(gys, 0.0, 0.5)
    assert close(stats["p_signal"], 2.2248762806663636e-2)
    assert close(stats["p_s"] + stats["p_m"], stats["p_signal"])

    assert q.binary_entropy(0.5) == 1.0
    assert q.ec_efficiency(0.15) == 1.35
    assert abs(q.residue_gllp(0.01, 0.9) - 0.7270149292241298) < 1e-9
    assert q.residue_lutkenhaus(0.01, 0.9) >= q.residue_gllp(0.01, 0.9)

    decoy = q.rate("gllp-decoy", gys, 50.0, 0.5)
    plain = q.rate("gllp", gys, 50.0, 0.5)
    assert decoy["r"] > plain["r"]
    assert close(decoy["r"], decoy["q"] * decoy["stats"]["p_d"] * decoy["eta_post"], 1e-12)

    mu_star = q.optimal_mu("gllp-decoy", gys, 20.0)
    assert abs(mu_star["argmax"] - q.optimal_mu_decoy_approx(gys.e_detector)) < 0.1

    cutoff = q.cutoff_distance("gllp-decoy", gys, mu="0.5")
    assert 100.0 < cutoff["argmax"] < 160.0

    obs = q.simulate_decoy(gys, 60.0, [0.0, 1e-3, 2e-3])
    passed, _, _ = q.vacuum_check(gys, obs[0])
    assert passed
    est = q.multi_decoy_solve(obs[1:], gys.p_dark)
    eta = q.link_efficiency(gys, 60.0)["eta"]
    assert abs(est["eta"][0] - eta) / eta < 0.01

    custom = q.Preset.from_config("d_b = 0\n", gys)
    assert custom.p_dark == 0.0

    csv = q.sweep("rate-vs-distance", gys, protocols=["gllp-decoy"], mu="0.5", range="0:160:1")
    assert len(csv.splitlines()) == 162

    try:
        q.Preset("NOPE")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    print(f"pyqkdlab smoke test ok: gllp-decoy cutoff {cutoff['argmax']:.2f} km")


if __name__ == "__main__":
    main()
