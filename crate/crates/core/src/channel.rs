//! Source, fiber and detector model of a weak-coherent BB84 link.
//!
//! Photon numbers are Poisson distributed with mean `mu`; each photon survives
//! the link independently with probability `eta`. Dark counts are treated as
//! independent of signal clicks and added to the signal detection probability
//! (`p_D ~= p_signal + p_dark`). The exact inclusion-exclusion composition would
//! be `p_signal + p_dark - p_signal * p_dark`; every key-rate expression
//! downstream is written against the additive form.

use crate::error::{QkdError, Result};
use crate::preset::ExperimentPreset;

/// Values below this magnitude are flushed to zero.
pub const FLUSH_THRESHOLD: f64 = 1e-300;

#[inline]
pub(crate) fn flush(x: f64) -> f64 {
    if x.abs() < FLUSH_THRESHOLD {
        0.0
    } else {
        x
    }
}

/// Channel quantities at one distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEfficiencies {
    /// Fiber transmittance.
    pub t_ab: f64,
    pub eta_bob: f64,
    /// Overall transmission and detection efficiency.
    pub eta: f64,
    /// Dark-count probability per pulse, summed over detectors.
    pub p_dark: f64,
}

impl LinkEfficiencies {
    /// Builds a link with a prescribed overall efficiency, keeping the preset's
    /// receiver and detectors. Requires `0 <= eta <= eta_bob`.
    pub fn with_overall_eta(preset: &ExperimentPreset, eta: f64) -> Result<Self> {
        let eta_bob = preset.eta_bob();
        if !(0.0..=eta_bob).contains(&eta) {
            return Err(QkdError::Domain(format!(
                "overall efficiency {eta} outside [0, eta_bob = {eta_bob}]"
            )));
        }
        Ok(LinkEfficiencies {
            t_ab: eta / eta_bob,
            eta_bob,
            eta,
            p_dark: preset.p_dark(),
        })
    }

    /// Fiber length that produces this link's `t_ab` under the given loss coefficient.
    pub fn equivalent_distance(&self, alpha: f64) -> f64 {
        -10.0 * self.t_ab.log10() / alpha
    }
}

/// Per-pulse detection probabilities and error rates for one intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStats {
    pub p_signal: f64,
    /// Detection from a single-photon emission.
    pub p_s: f64,
    /// Detection from a multi-photon emission.
    pub p_m: f64,
    /// Probability that the source emits two or more photons.
    pub s_m: f64,
    pub p_d: f64,
    /// Overall QBER.
    pub delta: f64,
    pub delta_s: f64,
    pub delta_m: f64,
    /// `p_s / p_d`.
    pub f1_decoy: f64,
    /// Untagged fraction when every multi-photon emission is assumed detected.
    pub f1_pessimistic: f64,
}

/// Detection quantities with dark counts folded into each photon-number class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalYields {
    pub p_dark_t: f64,
    pub p_s_t: f64,
    pub p_m_t: f64,
    pub delta_s_t: f64,
    pub delta_m_t: f64,
}

pub fn link_efficiency(preset: &ExperimentPreset, distance_km: f64) -> Result<LinkEfficiencies> {
    if !(distance_km >= 0.0) || !distance_km.is_finite() {
        return Err(QkdError::Domain(format!("distance {distance_km} km must be >= 0")));
    }
    let t_ab = if distance_km == 0.0 {
        1.0
    } else {
        10f64.powf(-preset.alpha * distance_km / 10.0)
    };
    let eta_bob = preset.eta_bob();
    Ok(LinkEfficiencies {
        t_ab: flush(t_ab),
        eta_bob,
        eta: flush(t_ab * eta_bob),
        p_dark: preset.p_dark(),
    })
}

/// Transmittance of an `i`-photon pulse, `1 - (1 - eta)^i`. Zero for vacuum.
pub fn i_photon_transmittance(eta: f64, i: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(QkdError::Domain(format!("eta = {eta} outside [0, 1]")));
    }
    if i == 0 {
        return Ok(0.0);
    }
    // -expm1(i * ln(1 - eta)) keeps precision for small eta
    Ok(-(f64::from(i) * (-eta).ln_1p()).exp_m1())
}

pub fn detection_stats(link: &LinkEfficiencies, mu: f64, e_detector: f64) -> Result<DetectionStats> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(QkdError::Domain(format!("mu = {mu} must be > 0")));
    }
    if !(0.0..=0.5).contains(&e_detector) {
        return Err(QkdError::Domain(format!("e_detector = {e_detector} outside [0, 1/2]")));
    }
    let eta = link.eta;
    let p_dark = link.p_dark;
    let e_mu = (-mu).exp();

    let p_signal = -(-eta * mu).exp_m1();
    let p_s = eta * mu * e_mu;
    let p_m = (p_signal - p_s).max(0.0);
    let s_m = (-(-mu).exp_m1() - mu * e_mu).max(0.0);
    let p_d = p_dark + p_signal;

    let delta = if p_d > 0.0 {
        (0.5 * p_dark + e_detector * p_signal) / p_d
    } else {
        0.5
    };
    let (f1_decoy, f1_pessimistic) = if p_d > 0.0 {
        (p_s / p_d, (p_signal - s_m).max(0.0) / p_d)
    } else {
        (0.0, 0.0)
    };

    Ok(DetectionStats {
        p_signal: flush(p_signal),
        p_s: flush(p_s),
        p_m: flush(p_m),
        s_m: flush(s_m),
        p_d: flush(p_d),
        delta: flush(delta),
        delta_s: e_detector,
        delta_m: e_detector,
        f1_decoy: flush(f1_decoy),
        f1_pessimistic: flush(f1_pessimistic),
    })
}

/// Splits dark counts over the vacuum, single- and multi-photon emission classes.
pub fn dark_adjusted(stats: &DetectionStats, mu: f64, p_dark: f64, e_detector: f64) -> Result<ConditionalYields> {
    if !(mu > 0.0) {
        return Err(QkdError::Domain(format!("mu = {mu} must be > 0")));
    }
    if !(0.0..1.0).contains(&p_dark) {
        return Err(QkdError::Domain(format!("p_dark = {p_dark} outside [0, 1)")));
    }
    if !(0.0..=0.5).contains(&e_detector) {
        return Err(QkdError::Domain(format!("e_detector = {e_detector} outside [0, 1/2]")));
    }
    let e_mu = (-mu).exp();
    let class_error = |p: f64| {
        let total = p_dark + p;
        if total > 0.0 {
            (0.5 * p_dark + e_detector * p) / total
        } else {
            0.5
        }
    };
    Ok(ConditionalYields {
        p_dark_t: flush(p_dark * e_mu),
        p_s_t: flush(stats.p_s + p_dark * mu * e_mu),
        p_m_t: flush(stats.p_m + p_dark * stats.s_m),
        delta_s_t: flush(class_error(stats.p_s)),
        delta_m_t: flush(class_error(stats.p_m)),
    })
}

/// Key bits per second: limited by the detector count rate or by the source rate.
pub fn key_bit_rate(preset: &ExperimentPreset, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(QkdError::Domain(format!("key rate per pulse {r} outside [0, 1]")));
    }
    Ok(preset.nu_b.min(preset.nu_a * r))
}
