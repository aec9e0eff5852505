use std::fs;
use std::process::{Command, Output};

use qkdlab::decoy::simulate_decoy_observations;
use qkdlab::ExperimentPreset;

fn qkdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn qkdlab_threads(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdlab"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn table(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const RATE_ARGS: [&str; 7] = [
    "rate-vs-distance",
    "--preset",
    "GYS",
    "--protocol",
    "gllp,gllp-decoy",
    "--mu",
    "0.5",
];

#[test]
fn one_line_per_grid_point_plus_header() {
    let csv = stdout(&qkdlab(&[
        "qber-vs-distance",
        "--preset",
        "GYS",
        "--mu",
        "0.5",
        "--range",
        "0:160:1",
    ]));
    assert_eq!(csv.lines().count(), 162);
    assert!(csv.ends_with('\n'));
}

#[test]
fn output_is_identical_across_runs_and_thread_counts() {
    let one = qkdlab_threads(&RATE_ARGS, 1);
    let many = qkdlab_threads(&RATE_ARGS, 8);
    let again = qkdlab_threads(&RATE_ARGS, 8);
    assert_eq!(stdout(&one), stdout(&many));
    assert_eq!(many.stdout, again.stdout);
}

#[test]
fn emitted_rates_are_recomputable_from_intermediates() {
    let csv = stdout(&qkdlab(&RATE_ARGS));
    let (header, rows) = table(&csv);
    let (q, p_d, eta_post, r) = (
        col(&header, "q"),
        col(&header, "p_d"),
        col(&header, "eta_post"),
        col(&header, "r"),
    );
    for row in &rows {
        let num = |i: usize| row[i].parse::<f64>().unwrap();
        let recomputed = num(q) * num(p_d) * num(eta_post);
        let emitted = num(r);
        assert!(
            (recomputed - emitted).abs() <= 1e-9 * emitted.abs().max(1e-300) || recomputed == emitted,
            "{row:?}: {recomputed} vs {emitted}"
        );
    }
}

#[test]
fn decoy_rate_at_zero_distance_beats_no_decoy() {
    let csv = stdout(&qkdlab(&[
        "rate-vs-distance",
        "--preset",
        "GYS",
        "--protocol",
        "gllp,gllp-decoy",
        "--mu",
        "optimal",
        "--range",
        "0:0:1",
    ]));
    let (header, rows) = table(&csv);
    let (p, r) = (col(&header, "protocol"), col(&header, "r"));
    let rate = |name: &str| {
        rows.iter()
            .find(|row| row[p] == name)
            .map(|row| row[r].parse::<f64>().unwrap())
            .unwrap()
    };
    assert!(rate("gllp-decoy") > rate("gllp"));
}

#[test]
fn gnuplot_friendly_uses_tabs() {
    let csv = stdout(&qkdlab(&[
        "qber-vs-mu",
        "--preset",
        "T8",
        "--range",
        "1e-5:1e-1:1",
        "--gnuplot-friendly",
    ]));
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().all(|l| l.contains('\t') && !l.contains(',')));
}

#[test]
fn config_file_overrides_preset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dark-free.conf");
    fs::write(&path, "# no dark counts\nd_b = 0\n").unwrap();
    let csv = stdout(&qkdlab(&[
        "qber-vs-mu",
        "--preset",
        "GYS",
        "--config",
        path.to_str().unwrap(),
        "--distance",
        "50",
        "--range",
        "1e-6:1e-6:1",
    ]));
    let (header, rows) = table(&csv);
    let delta: f64 = rows[0][col(&header, "delta")].parse().unwrap();
    assert!((delta - 0.033).abs() < 1e-12, "{delta}");
}

#[test]
fn decoy_file_is_solved() {
    let preset = ExperimentPreset::gys();
    let obs = simulate_decoy_observations(&preset, 60.0, &[0.0, 1e-3, 2e-3]).unwrap();
    let text: String = obs
        .iter()
        .map(|o| format!("{:e} {:e} {:e}\n", o.mu, o.p_d_observed, o.delta_observed))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("decoys.txt");
    fs::write(&path, format!("# mu p_d delta\n{text}")).unwrap();

    let csv = stdout(&qkdlab(&[
        "decoy-solve",
        "--preset",
        "GYS",
        "--decoy-file",
        path.to_str().unwrap(),
    ]));
    let (header, rows) = table(&csv);
    assert_eq!(header, ["key", "value"]);
    let value = |k: &str| rows.iter().find(|r| r[0] == k).map(|r| r[1].clone()).unwrap();
    assert_eq!(value("vacuum_pass"), "true");
    assert_eq!(value("m"), "2.000000000e0");
    let eta_true = qkdlab::link_efficiency(&preset, 60.0).unwrap().eta;
    let eta1: f64 = value("eta_1").parse().unwrap();
    assert!((eta1 - eta_true).abs() / eta_true < 0.01, "{eta1} vs {eta_true}");
}

#[test]
fn configuration_errors_exit_with_2() {
    assert_eq!(qkdlab(&["rate-vs-distance", "--preset", "NOPE"]).status.code(), Some(2));
    assert_eq!(qkdlab(&["no-such-command", "--preset", "GYS"]).status.code(), Some(2));
    assert_eq!(
        qkdlab(&["rate-vs-distance", "--preset", "GYS", "--range", "10:0:1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        qkdlab(&["rate-vs-distance", "--preset", "GYS", "--protocol", "bb85"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    fs::write(&path, "alpha = fast\n").unwrap();
    let out = qkdlab(&["qber-vs-mu", "--preset", "GYS", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn domain_errors_exit_with_3() {
    let out = qkdlab(&[
        "optimal-mu-vs-eta",
        "--preset",
        "T8",
        "--protocol",
        "gllp",
        "--range",
        "1e-2:1:1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at eta = 1e-1"));
    let out = qkdlab(&["cutoff", "--preset", "GYS", "--protocol", "gllp", "--threshold", "1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn io_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("out.csv");
    let out = qkdlab(&["qber-vs-mu", "--preset", "GYS", "-o", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let out = qkdlab(&[
        "decoy-solve",
        "--preset",
        "GYS",
        "--decoy-file",
        dir.path().join("absent.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out.csv");
    let mut args = RATE_ARGS.to_vec();
    args.extend(["-o", target.to_str().unwrap()]);
    assert!(qkdlab(&args).status.success());
    assert_eq!(fs::read(&target).unwrap(), qkdlab(&RATE_ARGS).stdout);
}
