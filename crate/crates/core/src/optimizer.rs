//! One-dimensional searches over source intensity and fiber length.

use std::fmt;
use std::str::FromStr;

use crate::channel::link_efficiency;
use crate::error::{QkdError, Result};
use crate::postprocessing::{binary_entropy, rate_for_protocol, EcEfficiencyTable, Protocol};
use crate::preset::ExperimentPreset;

/// Points in the coarse grid that seeds the golden-section search.
pub const COARSE_GRID_POINTS: usize = 64;
/// Lower end of the intensity bracket used when `mu` is optimized implicitly.
pub const DEFAULT_MU_FLOOR: f64 = 1e-7;
/// Bracket width at which implicit intensity optimization stops.
pub const DEFAULT_MU_TOLERANCE: f64 = 1e-9;
/// Step of the forward scan in [`cutoff_distance`], km.
pub const CUTOFF_SCAN_STEP_KM: f64 = 1.0;
/// Final bracket width of [`cutoff_distance`], km.
pub const CUTOFF_RESOLUTION_KM: f64 = 0.01;
/// The forward scan gives up beyond this length.
pub const CUTOFF_SCAN_LIMIT_KM: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationResult {
    pub argmax: f64,
    pub value: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
    pub converged: bool,
}

/// Maximizes `f` on `[lo, hi]`.
///
/// Clamped rate functions are flat zero over parts of the interval, so the
/// search first evaluates a log-spaced grid of [`COARSE_GRID_POINTS`] points,
/// then runs golden-section search between the neighbours of the best one.
pub fn maximize_scalar<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<OptimizationResult>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo > 0.0 && lo < hi) || !hi.is_finite() {
        return Err(QkdError::Domain(format!("bracket ({lo}, {hi}) must satisfy 0 < lo < hi")));
    }
    if !(tol > 0.0) {
        return Err(QkdError::Domain(format!("tolerance {tol} must be > 0")));
    }
    let n = COARSE_GRID_POINTS;
    let ratio = (hi / lo).ln();
    let grid: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => lo * (ratio * k as f64 / (n - 1) as f64).exp(),
        })
        .collect();
    let mut values = Vec::with_capacity(n);
    for &x in &grid {
        values.push(f(x)?);
    }
    let mut iterations = n;
    let (best, best_value) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    if !(best_value > 0.0) {
        return Ok(OptimizationResult {
            argmax: grid[best],
            value: 0.0,
            iterations,
            bracket: (lo, hi),
            converged: false,
        });
    }

    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(n - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    iterations += 2;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        iterations += 1;
        if iterations > 10_000 {
            break;
        }
    }
    // the edges of [a, b] and the coarse winner are candidates too
    let mut argmax = grid[best];
    let mut value = best_value;
    for x in [a, b, 0.5 * (a + b)] {
        let v = f(x)?;
        iterations += 1;
        if v > value {
            argmax = x;
            value = v;
        }
    }
    if !(a..=b).contains(&argmax) {
        // the coarse point still wins; the bracket is its neighbourhood
        a = a.min(argmax);
        b = b.max(argmax);
    }
    Ok(OptimizationResult {
        argmax,
        value,
        iterations,
        bracket: (a, b),
        converged: b - a <= tol,
    })
}

/// Intensity in `bracket` that maximizes the key rate per pulse.
pub fn maximize_rate_over_mu(
    protocol: Protocol,
    preset: &ExperimentPreset,
    distance: f64,
    bracket: (f64, f64),
    tol: f64,
    table: &EcEfficiencyTable,
) -> Result<OptimizationResult> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return Err(QkdError::Domain(format!("mu bracket ({lo}, {hi}) must satisfy 0 < lo < hi <= 1")));
    }
    link_efficiency(preset, distance)?;
    maximize_scalar(
        |mu| Ok(rate_for_protocol(protocol, preset, distance, mu, table)?.r),
        lo,
        hi,
        tol,
    )
}

fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of `-mu e^{-mu} + eta e^{-eta mu} = 0` on (0, 1): the intensity that
/// maximizes the single-photon gain bound without decoys. Close to `eta` for small `eta`.
pub fn optimal_mu_no_decoy_approx(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(QkdError::Domain(format!("eta = {eta} must lie in (0, 1)")));
    }
    Ok(bisect(|mu| -mu * (-mu).exp() + eta * (-eta * mu).exp(), 0.0, 1.0))
}

/// Root of `(1 - mu) e^{-mu} = H2(e) / (1 - H2(e))` on (0, 1]: the decoy-state
/// optimum when dark counts are negligible and error correction is ideal.
pub fn optimal_mu_decoy_approx(e_detector: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&e_detector) {
        return Err(QkdError::Domain(format!("e_detector = {e_detector} must lie in [0, 1/2)")));
    }
    let h = binary_entropy(e_detector)?;
    let target = h / (1.0 - h);
    if target >= 1.0 {
        return Err(QkdError::NoRoot(format!(
            "H2(e)/(1 - H2(e)) = {target:.4} >= 1: error rate too high for a positive key rate"
        )));
    }
    if target == 0.0 {
        return Ok(1.0);
    }
    Ok(bisect(|mu| (1.0 - mu) * (-mu).exp() - target, 0.0, 1.0))
}

/// How the source intensity is chosen at each distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuPolicy {
    Fixed(f64),
    /// Numerically optimal on `(DEFAULT_MU_FLOOR, 1]`.
    Optimal,
    /// `mu` equal to the overall efficiency, the usual choice without decoys.
    EqualsEta,
}

impl fmt::Display for MuPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MuPolicy::Fixed(mu) => write!(f, "{mu}"),
            MuPolicy::Optimal => f.write_str("optimal"),
            MuPolicy::EqualsEta => f.write_str("eta"),
        }
    }
}

impl FromStr for MuPolicy {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(MuPolicy::Optimal),
            "eta" => Ok(MuPolicy::EqualsEta),
            other => {
                let mu: f64 = other.parse().map_err(|_| {
                    QkdError::Config(format!("mu: expected a number, `optimal` or `eta`, got {other:?}"))
                })?;
                if !(mu > 0.0) || !mu.is_finite() {
                    return Err(QkdError::Config(format!("mu: {mu} must be > 0")));
                }
                Ok(MuPolicy::Fixed(mu))
            }
        }
    }
}

/// Intensity and key rate per pulse at `distance` under `policy`.
pub fn rate_with_policy(
    protocol: Protocol,
    preset: &ExperimentPreset,
    distance: f64,
    policy: MuPolicy,
    table: &EcEfficiencyTable,
) -> Result<(f64, f64)> {
    match policy {
        MuPolicy::Fixed(mu) => Ok((mu, rate_for_protocol(protocol, preset, distance, mu, table)?.r)),
        MuPolicy::EqualsEta => {
            let mu = link_efficiency(preset, distance)?.eta;
            if mu == 0.0 {
                return Ok((0.0, 0.0));
            }
            Ok((mu, rate_for_protocol(protocol, preset, distance, mu, table)?.r))
        }
        MuPolicy::Optimal => {
            let opt = maximize_rate_over_mu(
                protocol,
                preset,
                distance,
                (DEFAULT_MU_FLOOR, 1.0),
                DEFAULT_MU_TOLERANCE,
                table,
            )?;
            Ok((opt.argmax, opt.value))
        }
    }
}

/// Distance at which the key rate falls to `threshold`.
///
/// Scans forward on a 1 km grid until the rate first drops to the threshold,
/// then bisects the last step down to 0.01 km. The rate is assumed to stay at
/// or below the threshold beyond the first crossing.
pub fn cutoff_distance(
    protocol: Protocol,
    preset: &ExperimentPreset,
    policy: MuPolicy,
    threshold: f64,
    table: &EcEfficiencyTable,
) -> Result<OptimizationResult> {
    if !(threshold >= 0.0) {
        return Err(QkdError::Domain(format!("threshold {threshold} must be >= 0")));
    }
    let rate = |d: f64| rate_with_policy(protocol, preset, d, policy, table).map(|(_, r)| r);
    let r0 = rate(0.0)?;
    if !(r0 > threshold) {
        return Err(QkdError::NoCutoff(format!(
            "{protocol} rate at 0 km is {r0:e}, not above the threshold {threshold:e}"
        )));
    }
    let mut iterations = 1;
    let mut lo = 0.0;
    let mut hi = loop {
        let next = lo + CUTOFF_SCAN_STEP_KM;
        if next > CUTOFF_SCAN_LIMIT_KM {
            return Err(QkdError::NoCutoff(format!(
                "{protocol} rate stays above {threshold:e} out to {CUTOFF_SCAN_LIMIT_KM} km"
            )));
        }
        iterations += 1;
        if rate(next)? <= threshold {
            break next;
        }
        lo = next;
    };
    while hi - lo > CUTOFF_RESOLUTION_KM {
        let mid = 0.5 * (lo + hi);
        iterations += 1;
        if rate(mid)? > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let argmax = 0.5 * (lo + hi);
    Ok(OptimizationResult {
        argmax,
        value: rate(argmax)?,
        iterations,
        bracket: (lo, hi),
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_on_a_parabola() {
        let res = maximize_scalar(|x| Ok(1.0 - (x - 0.3).powi(2)), 0.01, 1.0, 1e-8).unwrap();
        assert!(res.converged);
        assert!((res.argmax - 0.3).abs() < 1e-7);
        assert!(res.bracket.0 <= res.argmax && res.argmax <= res.bracket.1);
    }

    #[test]
    fn flat_zero_reports_not_converged() {
        let res = maximize_scalar(|_| Ok(0.0), 0.01, 1.0, 1e-4).unwrap();
        assert!(!res.converged);
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn narrow_peak_inside_a_zero_plateau() {
        let f = |x: f64| Ok((1e-3 - ((x - 2e-3) / 1e-3).powi(2) * 1e-3).max(0.0));
        let res = maximize_scalar(f, 1e-6, 1.0, 1e-9).unwrap();
        assert!((res.argmax - 2e-3).abs() < 1e-7, "{}", res.argmax);
    }

    #[test]
    fn bad_brackets() {
        let t = EcEfficiencyTable::builtin();
        let gys = ExperimentPreset::gys();
        assert!(maximize_rate_over_mu(Protocol::GllpDecoy, &gys, 10.0, (0.0, 1.0), 1e-4, &t).is_err());
        assert!(maximize_rate_over_mu(Protocol::GllpDecoy, &gys, 10.0, (0.5, 1.5), 1e-4, &t).is_err());
        assert!(maximize_rate_over_mu(Protocol::GllpDecoy, &gys, 10.0, (0.1, 1.0), 0.0, &t).is_err());
    }

    #[test]
    fn no_decoy_approx_roots() {
        // bisection oracle on the printed transcendental, 40-digit reference
        let mu = optimal_mu_no_decoy_approx(1e-3).unwrap();
        assert!((mu - 1.001_000_499_665_373e-3).abs() < 1e-15);
        let mu = optimal_mu_no_decoy_approx(0.1).unwrap();
        assert!((mu - 0.110_451_503_116_160_9).abs() < 1e-13);
        let g = |m: f64| -m * (-m).exp() + 0.1 * (-0.1 * m).exp();
        assert!(g(mu - 1e-6) > 0.0 && g(mu + 1e-6) < 0.0);
        for eta in [1e-6, 1e-5, 1e-4] {
            assert!((optimal_mu_no_decoy_approx(eta).unwrap() / eta - 1.0).abs() < 1e-3);
        }
        assert!(optimal_mu_no_decoy_approx(0.0).is_err());
        assert!(optimal_mu_no_decoy_approx(1.0).is_err());
    }

    #[test]
    fn decoy_approx_roots() {
        let gys = optimal_mu_decoy_approx(0.033).unwrap();
        assert!((gys - 0.544_115_277_939_695_9).abs() < 1e-12);
        assert!((gys - 0.5).abs() <= 0.1);
        let kth = optimal_mu_decoy_approx(0.01).unwrap();
        assert!((kth - 0.803_668_493_754_683_1).abs() < 1e-12);
        assert!((optimal_mu_decoy_approx(1e-12).unwrap() - 1.0).abs() < 1e-4);
        assert_eq!(optimal_mu_decoy_approx(0.0).unwrap(), 1.0);
        // H2(0.2) / (1 - H2(0.2)) > 1
        assert!(matches!(optimal_mu_decoy_approx(0.2), Err(QkdError::NoRoot(_))));
    }

    #[test]
    fn upper_bound_peaks_at_unit_intensity() {
        let t = EcEfficiencyTable::builtin();
        for (preset, d) in [(ExperimentPreset::gys(), 40.0), (ExperimentPreset::kth(), 10.0)] {
            let res = maximize_rate_over_mu(Protocol::UpperBound, &preset, d, (0.01, 1.0), 1e-4, &t).unwrap();
            assert!((res.argmax - 1.0).abs() <= 1e-4, "{}", res.argmax);
        }
    }

    #[test]
    fn mu_policy_parsing() {
        assert_eq!("optimal".parse::<MuPolicy>().unwrap(), MuPolicy::Optimal);
        assert_eq!("eta".parse::<MuPolicy>().unwrap(), MuPolicy::EqualsEta);
        assert_eq!("0.5".parse::<MuPolicy>().unwrap(), MuPolicy::Fixed(0.5));
        assert!("-1".parse::<MuPolicy>().is_err());
        assert!("lots".parse::<MuPolicy>().is_err());
    }

    #[test]
    fn cutoff_requires_positive_start_and_a_finite_end() {
        let t = EcEfficiencyTable::builtin();
        let gys = ExperimentPreset::gys();
        assert!(matches!(
            cutoff_distance(Protocol::GllpDecoy, &gys, MuPolicy::Fixed(0.5), 1.0, &t),
            Err(QkdError::NoCutoff(_))
        ));
        let dark_free = ExperimentPreset { d_b: 0.0, ..ExperimentPreset::gys() };
        assert!(matches!(
            cutoff_distance(Protocol::UpperBound, &dark_free, MuPolicy::Fixed(0.5), 0.0, &t),
            Err(QkdError::NoCutoff(_))
        ));
    }

    #[test]
    fn cutoff_is_monotone_in_threshold() {
        let t = EcEfficiencyTable::builtin();
        let gys = ExperimentPreset::gys();
        let mut last = f64::INFINITY;
        for threshold in [0.0, 1e-7, 1e-6, 1e-5, 1e-4] {
            let res = cutoff_distance(Protocol::GllpDecoy, &gys, MuPolicy::Fixed(0.5), threshold, &t).unwrap();
            assert!(res.bracket.1 - res.bracket.0 <= CUTOFF_RESOLUTION_KM);
            assert!(res.argmax <= last + CUTOFF_RESOLUTION_KM);
            last = res.argmax;
        }
    }
}
