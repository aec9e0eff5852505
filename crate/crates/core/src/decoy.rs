//! Decoy-state estimation of per-photon-number transmittances.
//!
//! Vacuum decoys pin down the dark-count rate. Weak decoys (`mu << 1`) then
//! expose the single-photon yield: with one weak decoy the multi-photon
//! contribution is dropped outright, with `m` decoys the Poisson expansion of
//! each observed detection probability is truncated after `m` photons and the
//! resulting `m x m` system is solved for `eta_1 .. eta_m`.
//!
//! Observations are assumed to come from a channel that treats decoy and
//! signal pulses of equal photon number identically; nothing here looks at
//! signal-state data.

use std::fmt::Write as _;
use std::path::Path;

use crate::channel::{i_photon_transmittance, link_efficiency, LinkEfficiencies};
use crate::error::{QkdError, Result};
use crate::preset::ExperimentPreset;

pub const DEFAULT_WEAKNESS_GUARD: f64 = 0.1;
/// Photon-number cutoff of the forward model.
pub const FORWARD_TRUNCATION: u32 = 100;
/// Condition estimates above this attach a warning to the solve.
pub const CONDITION_WARNING_THRESHOLD: f64 = 1e12;

/// Measured detection probability and QBER for one decoy intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyObservation {
    /// Mean photon number; 0 for a vacuum decoy.
    pub mu: f64,
    pub p_d_observed: f64,
    pub delta_observed: f64,
}

impl DecoyObservation {
    pub fn new(mu: f64, p_d_observed: f64, delta_observed: f64) -> Self {
        DecoyObservation {
            mu,
            p_d_observed,
            delta_observed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YieldEstimate {
    /// Estimated `eta_1 .. eta_m`, clamped to [0, 1].
    pub eta: Vec<f64>,
    pub p_dark_est: f64,
    /// Single-photon detection probability including coincident dark counts,
    /// at the weakest decoy intensity.
    pub p_s_tilde: f64,
    pub delta_s_tilde: f64,
    /// Estimated error rate of single-photon detections without dark counts.
    pub single_photon_error: f64,
    /// True when some `eta_i` had to be clamped into [0, 1].
    pub clamped: bool,
    /// 1-norm condition estimate of the column-scaled system (multi-decoy only).
    pub condition_estimate: Option<f64>,
    pub condition_warning: Option<String>,
}

impl YieldEstimate {
    pub fn eta1(&self) -> f64 {
        self.eta[0]
    }

    /// `key = value` lines; `eta_i` for each component.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "m = {}", self.eta.len());
        for (i, eta) in self.eta.iter().enumerate() {
            let _ = writeln!(out, "eta_{} = {:.9e}", i + 1, eta);
        }
        let _ = writeln!(out, "p_dark = {:.9e}", self.p_dark_est);
        let _ = writeln!(out, "p_s_tilde = {:.9e}", self.p_s_tilde);
        let _ = writeln!(out, "delta_s_tilde = {:.9e}", self.delta_s_tilde);
        let _ = writeln!(out, "single_photon_error = {:.9e}", self.single_photon_error);
        let _ = writeln!(out, "clamped = {}", self.clamped);
        if let Some(c) = self.condition_estimate {
            let _ = writeln!(out, "condition = {c:.9e}");
        }
        if let Some(w) = &self.condition_warning {
            let _ = writeln!(out, "warning = {w}");
        }
        out
    }
}

/// What an ideal vacuum decoy should show: dark counts only, with random bits.
pub fn expected_vacuum_stats(preset: &ExperimentPreset) -> (f64, f64) {
    (preset.p_dark(), 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacuumCheck {
    pub pass: bool,
    /// Relative deviation of the observed detection probability from the dark-count rate.
    pub p_d_residual: f64,
    /// Relative deviation of the observed QBER from 1/2.
    pub delta_residual: f64,
}

/// Compares a vacuum-decoy observation against the preset's dark counts.
pub fn vacuum_consistency_check(
    observed: &DecoyObservation,
    preset: &ExperimentPreset,
    tolerance: f64,
) -> Result<VacuumCheck> {
    if observed.mu != 0.0 {
        return Err(QkdError::Misuse(format!(
            "vacuum check needs a vacuum decoy, got mu = {}",
            observed.mu
        )));
    }
    if !(tolerance >= 0.0) {
        return Err(QkdError::Domain(format!("tolerance {tolerance} must be >= 0")));
    }
    let (p_expected, delta_expected) = expected_vacuum_stats(preset);
    let p_d_residual = if p_expected > 0.0 {
        (observed.p_d_observed - p_expected).abs() / p_expected
    } else {
        observed.p_d_observed.abs()
    };
    let delta_residual = (observed.delta_observed - delta_expected).abs() / delta_expected;
    Ok(VacuumCheck {
        pass: p_d_residual <= tolerance && delta_residual <= tolerance,
        p_d_residual,
        delta_residual,
    })
}

pub fn weak_decoy_estimate(observed: &DecoyObservation, p_dark: f64) -> Result<YieldEstimate> {
    weak_decoy_estimate_with_guard(observed, p_dark, DEFAULT_WEAKNESS_GUARD)
}

/// Single weak decoy: multi-photon detections are neglected, so everything
/// above the dark-count floor is attributed to single photons.
pub fn weak_decoy_estimate_with_guard(observed: &DecoyObservation, p_dark: f64, guard: f64) -> Result<YieldEstimate> {
    let mu = observed.mu;
    if !(mu > 0.0) {
        return Err(QkdError::Misuse(format!("weak decoy needs mu > 0, got {mu}")));
    }
    if mu > guard {
        return Err(QkdError::WeaknessViolation { mu, guard });
    }
    if !(0.0..1.0).contains(&p_dark) {
        return Err(QkdError::Domain(format!("p_dark = {p_dark} outside [0, 1)")));
    }
    let p_d = observed.p_d_observed;
    if p_d < p_dark {
        return Err(QkdError::InconsistentObservation(format!(
            "observed p_D = {p_d} below the dark-count rate {p_dark}"
        )));
    }
    let e_mu = (-mu).exp();
    let p_s_weak = p_d - p_dark;
    let eta1 = p_s_weak / (mu * e_mu);
    let p_s_tilde = p_d - p_dark * e_mu;

    let mut warning = None;
    let delta_s_tilde = if p_s_weak > 0.0 {
        ((observed.delta_observed * p_d - 0.5 * p_dark * e_mu) / p_s_weak).clamp(0.0, 0.5)
    } else {
        warning = Some("degenerate: no detections above the dark-count rate".to_string());
        0.5
    };
    let single_photon_error = if p_s_weak > 0.0 {
        ((observed.delta_observed * p_d - 0.5 * p_dark) / p_s_weak).clamp(0.0, 0.5)
    } else {
        0.5
    };
    let clamped = !(0.0..=1.0).contains(&eta1);
    Ok(YieldEstimate {
        eta: vec![eta1.clamp(0.0, 1.0)],
        p_dark_est: p_dark,
        p_s_tilde,
        delta_s_tilde,
        single_photon_error,
        clamped,
        condition_estimate: None,
        condition_warning: warning,
    })
}

/// Honest-channel forward model for a list of decoy intensities.
pub fn simulate_decoy_observations(
    preset: &ExperimentPreset,
    distance: f64,
    mus: &[f64],
) -> Result<Vec<DecoyObservation>> {
    let link = link_efficiency(preset, distance)?;
    simulate_at_link(&link, preset.e_detector, mus, FORWARD_TRUNCATION)
}

/// Forward model with an explicit link and photon-number cutoff.
pub fn simulate_at_link(
    link: &LinkEfficiencies,
    e_detector: f64,
    mus: &[f64],
    truncation: u32,
) -> Result<Vec<DecoyObservation>> {
    let p_dark = link.p_dark;
    mus.iter()
        .map(|&mu| {
            if !(mu >= 0.0) || !mu.is_finite() {
                return Err(QkdError::Domain(format!("decoy intensity {mu} must be >= 0")));
            }
            let mut weight = (-mu).exp();
            let mut signal = 0.0;
            for i in 1..=truncation {
                weight *= mu / f64::from(i);
                if weight == 0.0 {
                    break;
                }
                signal += i_photon_transmittance(link.eta, i)? * weight;
            }
            let p_d = p_dark + signal;
            let delta = if p_d > 0.0 {
                (0.5 * p_dark + e_detector * signal) / p_d
            } else {
                0.5
            };
            Ok(DecoyObservation::new(mu, p_d, delta))
        })
        .collect()
}

/// Solves the truncated Poisson system for `eta_1 .. eta_m` from `m` weak decoys.
///
/// Row `j` reads `sum_i eta_i mu_j^i e^{-mu_j} / i! = p_D(mu_j) - p_dark`, which
/// keeps the `m = 1` case identical to [`weak_decoy_estimate`]. The same matrix
/// applied to the error counts `delta_j p_D(mu_j) - p_dark / 2` gives the
/// error-weighted yields, from which the single-photon error follows.
pub fn multi_decoy_solve(observations: &[DecoyObservation], p_dark: f64) -> Result<YieldEstimate> {
    let m = observations.len();
    if m == 0 {
        return Err(QkdError::Misuse("multi-decoy solve needs at least one observation".into()));
    }
    if !(0.0..1.0).contains(&p_dark) {
        return Err(QkdError::Domain(format!("p_dark = {p_dark} outside [0, 1)")));
    }
    for (j, obs) in observations.iter().enumerate() {
        if !(obs.mu > 0.0) || !obs.mu.is_finite() {
            return Err(QkdError::Misuse(format!(
                "decoy {j}: intensity {} must be > 0 (pass the vacuum decoy as p_dark)",
                obs.mu
            )));
        }
        if observations[..j].iter().any(|o| o.mu == obs.mu) {
            return Err(QkdError::SingularSystem(format!("duplicate decoy intensity {}", obs.mu)));
        }
    }

    let mut matrix = vec![vec![0.0; m]; m];
    let mut counts = vec![0.0; m];
    let mut errors = vec![0.0; m];
    for (j, obs) in observations.iter().enumerate() {
        let mut weight = (-obs.mu).exp();
        for (i, cell) in matrix[j].iter_mut().enumerate() {
            weight *= obs.mu / (i + 1) as f64;
            *cell = weight;
        }
        counts[j] = obs.p_d_observed - p_dark;
        errors[j] = obs.delta_observed * obs.p_d_observed - 0.5 * p_dark;
    }

    let solver = ScaledLu::factor(&matrix)?;
    let yields = solver.solve(&counts);
    let error_yields = solver.solve(&errors);
    let condition = solver.condition_estimate();

    let clamped = yields.iter().any(|e| !(0.0..=1.0).contains(e));
    let eta: Vec<f64> = yields.iter().map(|e| e.clamp(0.0, 1.0)).collect();
    let single_photon_error = if yields[0] > 0.0 {
        (error_yields[0] / yields[0]).clamp(0.0, 0.5)
    } else {
        0.5
    };

    let weakest = observations
        .iter()
        .map(|o| o.mu)
        .fold(f64::INFINITY, f64::min);
    let mut estimate = YieldEstimate {
        eta,
        p_dark_est: p_dark,
        p_s_tilde: 0.0,
        delta_s_tilde: 0.5,
        single_photon_error,
        clamped,
        condition_estimate: Some(condition),
        condition_warning: None,
    };
    // Same convention as the weak-decoy estimate, so that m = 1 reproduces it:
    // dark counts on non-vacuum pulses are charged to the single-photon class.
    let e_mu = (-weakest).exp();
    let single = estimate.eta1() * weakest * e_mu;
    let dark_share = p_dark * (1.0 - e_mu);
    estimate.p_s_tilde = single + dark_share;
    if single > 0.0 {
        estimate.delta_s_tilde = ((single_photon_error * single + 0.5 * dark_share) / single).clamp(0.0, 0.5);
    }

    let mut warnings = Vec::new();
    if condition > CONDITION_WARNING_THRESHOLD {
        warnings.push(format!("ill-conditioned system (condition ~ {condition:.3e})"));
    }
    if clamped {
        warnings.push("unphysical eta_i clamped to [0, 1]".to_string());
    }
    if !warnings.is_empty() {
        estimate.condition_warning = Some(warnings.join("; "));
    }
    Ok(estimate)
}

/// LU factorization with partial pivoting of a column-equilibrated matrix.
struct ScaledLu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
    col_scale: Vec<f64>,
}

impl ScaledLu {
    fn factor(matrix: &[Vec<f64>]) -> Result<Self> {
        let n = matrix.len();
        let col_scale: Vec<f64> = (0..n)
            .map(|c| matrix.iter().map(|row| row[c].abs()).fold(0.0, f64::max))
            .collect();
        if let Some(c) = col_scale.iter().position(|&s| s == 0.0) {
            return Err(QkdError::SingularSystem(format!("column {} is zero", c + 1)));
        }
        let mut lu: Vec<Vec<f64>> = matrix
            .iter()
            .map(|row| row.iter().zip(&col_scale).map(|(a, s)| a / s).collect())
            .collect();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let pivot_row = (k..n)
                .max_by(|&a, &b| lu[a][k].abs().total_cmp(&lu[b][k].abs()))
                .unwrap_or(k);
            if lu[pivot_row][k] == 0.0 {
                return Err(QkdError::SingularSystem(format!("zero pivot in column {}", k + 1)));
            }
            lu.swap(k, pivot_row);
            perm.swap(k, pivot_row);
            for r in (k + 1)..n {
                let factor = lu[r][k] / lu[k][k];
                lu[r][k] = factor;
                for c in (k + 1)..n {
                    lu[r][c] -= factor * lu[k][c];
                }
            }
        }
        Ok(ScaledLu { lu, perm, col_scale })
    }

    /// Solves the scaled system, then undoes the column scaling.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.solve_scaled(rhs);
        for (xi, s) in x.iter_mut().zip(&self.col_scale) {
            *xi /= s;
        }
        x
    }

    fn solve_scaled(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..n {
            for c in 0..r {
                y[r] -= self.lu[r][c] * y[c];
            }
        }
        for r in (0..n).rev() {
            for c in (r + 1)..n {
                y[r] -= self.lu[r][c] * y[c];
            }
            y[r] /= self.lu[r][r];
        }
        y
    }

    /// `||A||_1 * ||A^-1||_1` of the scaled matrix, with the inverse formed column by column.
    fn condition_estimate(&self) -> f64 {
        let n = self.lu.len();
        // rebuild the scaled matrix from its factors: P A = L U
        let mut scaled = vec![vec![0.0; n]; n];
        for r in 0..n {
            for c in 0..n {
                let mut sum = 0.0;
                for k in 0..=r.min(c) {
                    let l = if k == r { 1.0 } else { self.lu[r][k] };
                    sum += l * self.lu[k][c];
                }
                scaled[self.perm[r]][c] = sum;
            }
        }
        let norm_a = (0..n)
            .map(|c| scaled.iter().map(|row| row[c].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut norm_inv: f64 = 0.0;
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = self.solve_scaled(&e);
            norm_inv = norm_inv.max(col.iter().map(|v| v.abs()).sum());
        }
        norm_a * norm_inv
    }
}

/// Parses `mu p_d delta` lines (whitespace or comma separated, `#` comments).
pub fn parse_observations(text: &str) -> Result<Vec<DecoyObservation>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() != 3 {
            return Err(QkdError::Config(format!(
                "decoy file line {}: expected `mu p_d delta`, got {} columns",
                lineno + 1,
                cols.len()
            )));
        }
        let mut vals = [0.0; 3];
        for (v, s) in vals.iter_mut().zip(&cols) {
            *v = s.parse().map_err(|_| {
                QkdError::Config(format!("decoy file line {}: bad number {s:?}", lineno + 1))
            })?;
        }
        if vals[0] < 0.0 || vals[1] < 0.0 || !(0.0..=0.5).contains(&vals[2]) {
            return Err(QkdError::Config(format!(
                "decoy file line {}: need mu >= 0, p_d >= 0, 0 <= delta <= 1/2",
                lineno + 1
            )));
        }
        out.push(DecoyObservation::new(vals[0], vals[1], vals[2]));
    }
    if out.is_empty() {
        return Err(QkdError::Config("decoy file contains no observations".into()));
    }
    Ok(out)
}

pub fn load_observations(path: &Path) -> Result<Vec<DecoyObservation>> {
    let text = std::fs::read_to_string(path).map_err(|e| QkdError::io(path.display(), e))?;
    parse_observations(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(eta: f64, p_dark: f64) -> LinkEfficiencies {
        LinkEfficiencies { t_ab: 1.0, eta_bob: eta, eta, p_dark }
    }

    #[test]
    fn vacuum_expectations() {
        assert_eq!(expected_vacuum_stats(&ExperimentPreset::gys()), (1.7e-6, 0.5));
        assert_eq!(expected_vacuum_stats(&ExperimentPreset::kth()), (4e-4, 0.5));
        let clean = ExperimentPreset { d_b: 0.0, ..ExperimentPreset::gys() };
        assert_eq!(expected_vacuum_stats(&clean), (0.0, 0.5));
    }

    #[test]
    fn vacuum_check_cases() {
        let gys = ExperimentPreset::gys();
        let ok = vacuum_consistency_check(&DecoyObservation::new(0.0, 1.7e-6, 0.5), &gys, 0.05).unwrap();
        assert!(ok.pass);
        let doubled = vacuum_consistency_check(&DecoyObservation::new(0.0, 3.4e-6, 0.5), &gys, 0.05).unwrap();
        assert!(!doubled.pass);
        assert!((doubled.p_d_residual - 1.0).abs() < 1e-12);
        let near = vacuum_consistency_check(&DecoyObservation::new(0.0, 1.75e-6, 0.49), &gys, 0.05).unwrap();
        assert!(near.pass);
        assert!((near.p_d_residual - 0.05 / 1.7).abs() < 1e-12);
        assert!((near.delta_residual - 0.02).abs() < 1e-12);
        assert!(matches!(
            vacuum_consistency_check(&DecoyObservation::new(0.1, 1.7e-6, 0.5), &gys, 0.05),
            Err(QkdError::Misuse(_))
        ));
    }

    #[test]
    fn weak_decoy_errors() {
        let obs = DecoyObservation::new(0.2, 1e-3, 0.03);
        assert!(matches!(weak_decoy_estimate(&obs, 1e-6), Err(QkdError::WeaknessViolation { .. })));
        assert!(weak_decoy_estimate_with_guard(&obs, 1e-6, 0.25).is_ok());
        let below = DecoyObservation::new(0.01, 1e-7, 0.5);
        assert!(matches!(weak_decoy_estimate(&below, 1e-6), Err(QkdError::InconsistentObservation(_))));
        assert!(weak_decoy_estimate(&DecoyObservation::new(0.0, 1e-6, 0.5), 1e-6).is_err());
    }

    #[test]
    fn weak_decoy_without_signal_is_flagged() {
        let est = weak_decoy_estimate(&DecoyObservation::new(0.01, 1.7e-6, 0.5), 1.7e-6).unwrap();
        assert_eq!(est.eta1(), 0.0);
        assert_eq!(est.delta_s_tilde, 0.5);
        assert!(est.condition_warning.is_some());
    }

    #[test]
    fn weak_decoy_reduced_formulas() {
        // forward model at eta = 0.04, p_dark = 1.7e-6, e = 0.033, mu = 0.01;
        // expected values from a 40-digit evaluation of the same reduced formulas
        let obs = simulate_at_link(&link(0.04, 1.7e-6), 0.033, &[0.01], FORWARD_TRUNCATION).unwrap()[0];
        assert!((obs.p_d_observed - 4.016_200_106_656_000_9e-4).abs() < 1e-17);
        assert!((obs.delta_observed - 3.497_674_413_355_121e-2).abs() < 1e-14);
        let est = weak_decoy_estimate(&obs, 1.7e-6).unwrap();
        assert!((est.eta1() - 4.039_392_735_930_916e-2).abs() < 1e-13);
        assert!((est.p_s_tilde - 3.999_369_259_482_265e-4).abs() < 1e-16);
        assert!((est.delta_s_tilde - 3.302_114_833_238_56e-2).abs() < 1e-13);
        // neglected multi-photon term is O(mu)
        assert!((est.eta1() / 0.04 - 1.0).abs() < 0.01 * 2.0);
    }

    #[test]
    fn weak_decoy_error_shrinks_with_mu() {
        let l = link(0.04, 1.7e-6);
        let err = |mu: f64| {
            let obs = simulate_at_link(&l, 0.033, &[mu], FORWARD_TRUNCATION).unwrap()[0];
            (weak_decoy_estimate(&obs, 1.7e-6).unwrap().eta1() / 0.04 - 1.0).abs()
        };
        assert!(err(0.001) < 1e-3);
        let ratio = err(0.01) / err(0.001);
        assert!((ratio - 10.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn forward_model_cases() {
        let gys = ExperimentPreset::gys();
        let vac = simulate_decoy_observations(&gys, 50.0, &[0.0]).unwrap();
        assert_eq!(vac[0], DecoyObservation::new(0.0, 1.7e-6, 0.5));
        let obs = simulate_at_link(&link(0.1, 0.0), 0.0, &[0.001], FORWARD_TRUNCATION).unwrap()[0];
        assert!((obs.p_d_observed - 9.999_500_016_666_25e-5).abs() < 1e-18);
    }

    #[test]
    fn one_by_one_system_matches_weak_estimate() {
        let obs = simulate_at_link(&link(1e-4, 1.7e-6), 0.033, &[0.005], FORWARD_TRUNCATION).unwrap();
        let multi = multi_decoy_solve(&obs, 1.7e-6).unwrap();
        let weak = weak_decoy_estimate(&obs[0], 1.7e-6).unwrap();
        assert_eq!(multi.eta1(), weak.eta1());
    }

    #[test]
    fn two_decoys_exact_for_two_photon_model() {
        let obs = simulate_at_link(&link(0.1, 0.0), 0.02, &[0.001, 0.002], 2).unwrap();
        let est = multi_decoy_solve(&obs, 0.0).unwrap();
        assert!((est.eta[0] / 0.1 - 1.0).abs() < 1e-6);
        assert!((est.eta[1] / 0.19 - 1.0).abs() < 1e-6);
        assert!((est.single_photon_error - 0.02).abs() < 1e-6);
        assert!(!est.clamped);
    }

    #[test]
    fn solve_errors() {
        assert!(matches!(multi_decoy_solve(&[], 0.0), Err(QkdError::Misuse(_))));
        let dup = [DecoyObservation::new(0.01, 1e-5, 0.1), DecoyObservation::new(0.01, 1e-5, 0.1)];
        assert!(matches!(multi_decoy_solve(&dup, 0.0), Err(QkdError::SingularSystem(_))));
        let vac = [DecoyObservation::new(0.0, 1e-6, 0.5)];
        assert!(matches!(multi_decoy_solve(&vac, 1e-6), Err(QkdError::Misuse(_))));
    }

    #[test]
    fn unphysical_yields_are_clamped() {
        // detections far below what any eta could produce at the larger intensity
        let obs = [DecoyObservation::new(0.01, 2e-5, 0.05), DecoyObservation::new(0.02, 1e-5, 0.05)];
        let est = multi_decoy_solve(&obs, 0.0).unwrap();
        assert!(est.clamped);
        assert!(est.eta.iter().all(|e| (0.0..=1.0).contains(e)));
        assert!(est.condition_warning.is_some());
    }

    #[test]
    fn close_intensities_warn_about_conditioning() {
        let mus = [0.01, 0.010_000_01, 0.010_000_02];
        let obs = simulate_at_link(&link(1e-3, 0.0), 0.01, &mus, FORWARD_TRUNCATION).unwrap();
        let est = multi_decoy_solve(&obs, 0.0).unwrap();
        assert!(est.condition_estimate.unwrap() > CONDITION_WARNING_THRESHOLD);
        assert!(est.condition_warning.as_deref().unwrap().contains("ill-conditioned"));
    }

    #[test]
    fn observation_file_format() {
        let obs = parse_observations("# mu p_d delta\n0 1.7e-6 0.5\n0.01, 4e-4, 0.035 # weak\n").unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[1], DecoyObservation::new(0.01, 4e-4, 0.035));
        assert!(parse_observations("0.01 4e-4\n").is_err());
        assert!(parse_observations("0.01 x 0.1\n").is_err());
        assert!(parse_observations("").is_err());
    }

    #[test]
    fn key_value_output() {
        let obs = simulate_at_link(&link(0.1, 0.0), 0.02, &[0.001, 0.002], 2).unwrap();
        let text = multi_decoy_solve(&obs, 0.0).unwrap().to_key_value();
        assert!(text.starts_with("m = 2\neta_1 = "));
        assert!(text.contains("\neta_2 = "));
    }
}
