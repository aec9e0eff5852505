//! Error-correction and privacy-amplification residues, and key-rate assembly.
//!
//! Every residue has the shape `-f(delta) H2(delta) + sum_g p_g (1 - H2(phase_g))`:
//! error correction is paid once on the whole sifted string, while privacy
//! amplification is accounted separately for each class of detection event.
//! Classes with phase error 1/2 contribute nothing.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::channel::{
    dark_adjusted, detection_stats, flush, key_bit_rate, link_efficiency, ConditionalYields, DetectionStats,
    LinkEfficiencies,
};
use crate::error::{QkdError, Result};
use crate::preset::ExperimentPreset;

/// Binary Shannon entropy in bits, with `H2(0) = H2(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(QkdError::Domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EcMode {
    /// Piecewise linear between knots, flat outside the table.
    #[default]
    Interpolate,
    /// Least-squares line through all knots, never below 1.
    LeastSquaresLine,
}

impl EcMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EcMode::Interpolate => "interpolate",
            EcMode::LeastSquaresLine => "regression",
        }
    }
}

impl FromStr for EcMode {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interpolate" => Ok(EcMode::Interpolate),
            "regression" | "least-squares-line" => Ok(EcMode::LeastSquaresLine),
            other => Err(QkdError::Config(format!(
                "ec-mode: unknown mode {other:?} (expected interpolate or regression)"
            ))),
        }
    }
}

/// Error-correction inefficiency `f(delta) >= 1` as a table of knots.
#[derive(Debug, Clone, PartialEq)]
pub struct EcEfficiencyTable {
    points: Vec<(f64, f64)>,
    mode: EcMode,
}

impl Default for EcEfficiencyTable {
    fn default() -> Self {
        Self::builtin()
    }
}

impl EcEfficiencyTable {
    pub fn new(points: Vec<(f64, f64)>, mode: EcMode) -> Result<Self> {
        if points.is_empty() {
            return Err(QkdError::Config("EC efficiency table is empty".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(QkdError::Config(format!(
                    "EC efficiency table: qber values must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(q, f)) = points.iter().find(|(q, f)| !(*f >= 1.0) || !q.is_finite()) {
            return Err(QkdError::Config(format!(
                "EC efficiency table: factor {f} at qber {q} must be finite and >= 1"
            )));
        }
        Ok(EcEfficiencyTable { points, mode })
    }

    /// Cascade-style upper bounds at QBER 1%, 5%, 10% and 15%.
    pub fn builtin() -> Self {
        EcEfficiencyTable {
            points: vec![(0.01, 1.16), (0.05, 1.16), (0.1, 1.22), (0.15, 1.35)],
            mode: EcMode::Interpolate,
        }
    }

    pub fn with_mode(mut self, mode: EcMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> EcMode {
        self.mode
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Parses two whitespace- or comma-separated columns (`qber factor`), `#` comments.
    pub fn from_text(text: &str, mode: EcMode) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| QkdError::Config(format!("EC table line {}: bad number {s:?}", lineno + 1)))
            };
            if cols.len() != 2 {
                return Err(QkdError::Config(format!(
                    "EC table line {}: expected two columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            points.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::new(points, mode)
    }

    pub fn load(path: &Path, mode: EcMode) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QkdError::io(path.display(), e))?;
        Self::from_text(&text, mode)
    }

    /// Slope and intercept of the least-squares line through the knots.
    pub fn regression_line(&self) -> (f64, f64) {
        let n = self.points.len() as f64;
        let mean_x = self.points.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = self.points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = self.points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
        let sxy: f64 = self.points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
        if sxx == 0.0 {
            return (0.0, mean_y);
        }
        let slope = sxy / sxx;
        (slope, mean_y - slope * mean_x)
    }

    pub fn ec_efficiency(&self, delta: f64) -> Result<f64> {
        if self.points.is_empty() {
            return Err(QkdError::Config("EC efficiency table is empty".into()));
        }
        if !(0.0..=0.5).contains(&delta) {
            return Err(QkdError::Domain(format!("qber {delta} outside [0, 1/2]")));
        }
        match self.mode {
            EcMode::Interpolate => {
                let pts = &self.points;
                let first = pts[0];
                let last = pts[pts.len() - 1];
                if delta <= first.0 {
                    return Ok(first.1);
                }
                if delta >= last.0 {
                    return Ok(last.1);
                }
                let k = pts.partition_point(|p| p.0 <= delta);
                let (x0, y0) = pts[k - 1];
                let (x1, y1) = pts[k];
                Ok(y0 + (y1 - y0) * (delta - x0) / (x1 - x0))
            }
            EcMode::LeastSquaresLine => {
                let (slope, intercept) = self.regression_line();
                Ok((slope * delta + intercept).max(1.0))
            }
        }
    }
}

fn check_residue_inputs(delta: f64, f1: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(QkdError::Domain(format!("qber {delta} outside [0, 1/2]")));
    }
    if !(0.0..=1.0).contains(&f1) {
        return Err(QkdError::Domain(format!("untagged fraction {f1} outside [0, 1]")));
    }
    Ok(())
}

/// Residue against individual attacks when all errors are charged to single photons.
pub fn residue_lutkenhaus(delta: f64, f1: f64, table: &EcEfficiencyTable) -> Result<f64> {
    check_residue_inputs(delta, f1)?;
    if f1 == 0.0 || delta / f1 > 0.5 {
        return Ok(0.0);
    }
    let x = delta / f1;
    let privacy = f1 * (1.0 - (1.0 + 4.0 * x - 4.0 * x * x).log2());
    let ec = table.ec_efficiency(delta)? * binary_entropy(delta)?;
    Ok((privacy - ec).max(0.0))
}

/// Tagged-state residue: privacy amplification on the untagged fraction alone.
pub fn residue_gllp(delta: f64, f1: f64, table: &EcEfficiencyTable) -> Result<f64> {
    check_residue_inputs(delta, f1)?;
    if f1 == 0.0 || delta / f1 > 0.5 {
        return Ok(0.0);
    }
    let ec = table.ec_efficiency(delta)? * binary_entropy(delta)?;
    Ok((-ec + f1 * (1.0 - binary_entropy(delta / f1)?)).max(0.0))
}

/// One class of detection events with its own phase error rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedClass {
    /// Share of all detection events.
    pub probability_fraction: f64,
    pub phase_error: f64,
}

impl TaggedClass {
    pub fn new(probability_fraction: f64, phase_error: f64) -> Self {
        TaggedClass {
            probability_fraction,
            phase_error,
        }
    }
}

/// Residue for an arbitrary set of tagged classes. With one class of weight 1,
/// `f = 1` and equal bit and phase errors this is the CSS rate `1 - 2 H2(delta)`.
pub fn residue_tagged_general(delta_b: f64, classes: &[TaggedClass], table: &EcEfficiencyTable) -> Result<f64> {
    if classes.is_empty() {
        return Err(QkdError::Domain("no tagged classes".into()));
    }
    if !(0.0..=0.5).contains(&delta_b) {
        return Err(QkdError::Domain(format!("bit error {delta_b} outside [0, 1/2]")));
    }
    let mut total = 0.0;
    let mut privacy = 0.0;
    for class in classes {
        if !(0.0..=1.0).contains(&class.probability_fraction) {
            return Err(QkdError::Domain(format!(
                "class fraction {} outside [0, 1]",
                class.probability_fraction
            )));
        }
        if !(0.0..=0.5).contains(&class.phase_error) {
            return Err(QkdError::Domain(format!(
                "class phase error {} outside [0, 1/2]",
                class.phase_error
            )));
        }
        total += class.probability_fraction;
        privacy += class.probability_fraction * (1.0 - binary_entropy(class.phase_error)?);
    }
    if total > 1.0 + 1e-9 {
        return Err(QkdError::Domain(format!("class fractions sum to {total} > 1")));
    }
    let ec = table.ec_efficiency(delta_b)? * binary_entropy(delta_b)?;
    Ok((-ec + privacy).max(0.0))
}

/// The dark-count, single-photon and multi-photon classes of a decoy run.
pub fn decoy_classes(stats: &DetectionStats, yields: &ConditionalYields) -> Result<[TaggedClass; 3]> {
    if !(stats.p_d > 0.0) {
        return Err(QkdError::Domain("detection probability p_D is zero".into()));
    }
    let frac = |p: f64| (p / stats.p_d).min(1.0);
    Ok([
        TaggedClass::new(frac(yields.p_s_t), yields.delta_s_t),
        TaggedClass::new(frac(yields.p_dark_t), 0.5),
        TaggedClass::new(frac(yields.p_m_t), 0.5),
    ])
}

/// Decoy-state residue: only single-photon detections (with their share of dark
/// counts) carry key.
pub fn residue_decoy(stats: &DetectionStats, yields: &ConditionalYields, table: &EcEfficiencyTable) -> Result<f64> {
    let classes = decoy_classes(stats, yields)?;
    residue_tagged_general(stats.delta, &classes, table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Lutkenhaus,
    Gllp,
    GllpDecoy,
    UpperBound,
    Asymptotic,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Lutkenhaus,
        Protocol::Gllp,
        Protocol::GllpDecoy,
        Protocol::UpperBound,
        Protocol::Asymptotic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Lutkenhaus => "lutkenhaus",
            Protocol::Gllp => "gllp",
            Protocol::GllpDecoy => "gllp-decoy",
            Protocol::UpperBound => "upper-bound",
            Protocol::Asymptotic => "asymptotic",
        }
    }

    /// Whether the protocol relies on decoy states (and hence runs at `mu = O(1)`).
    pub fn uses_decoy(&self) -> bool {
        matches!(self, Protocol::GllpDecoy | Protocol::UpperBound | Protocol::Asymptotic)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| QkdError::Config(format!("protocol: unknown protocol {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub protocol: Protocol,
    /// Residue consistent with `r = q * p_d * eta_post`.
    pub eta_post: f64,
    /// Secure key bits per pulse.
    pub r: f64,
    /// Secure key bits per second.
    pub b: f64,
    /// Fraction of detections treated as untagged by this protocol.
    pub untagged_fraction: f64,
    pub q: f64,
    pub link: LinkEfficiencies,
    pub stats: DetectionStats,
    pub yields: Option<ConditionalYields>,
    pub mu: f64,
    pub distance: f64,
}

pub fn rate_for_protocol(
    protocol: Protocol,
    preset: &ExperimentPreset,
    distance: f64,
    mu: f64,
    table: &EcEfficiencyTable,
) -> Result<RateResult> {
    let link = link_efficiency(preset, distance)?;
    let mut result = rate_at_link(protocol, preset, &link, mu, table)?;
    result.distance = distance;
    Ok(result)
}

/// Same as [`rate_for_protocol`] for an explicit link; `distance` is reported as
/// the fiber length equivalent to the link's transmittance.
pub fn rate_at_link(
    protocol: Protocol,
    preset: &ExperimentPreset,
    link: &LinkEfficiencies,
    mu: f64,
    table: &EcEfficiencyTable,
) -> Result<RateResult> {
    let e = preset.e_detector;
    let q = preset.q;
    let stats = detection_stats(link, mu, e)?;

    let (r, untagged_fraction, yields) = match protocol {
        Protocol::Lutkenhaus => {
            let f1 = stats.f1_pessimistic;
            (q * stats.p_d * residue_lutkenhaus(stats.delta, f1, table)?, f1, None)
        }
        Protocol::Gllp => {
            let f1 = stats.f1_pessimistic;
            (q * stats.p_d * residue_gllp(stats.delta, f1, table)?, f1, None)
        }
        Protocol::GllpDecoy => {
            let yields = dark_adjusted(&stats, mu, link.p_dark, e)?;
            let residue = residue_decoy(&stats, &yields, table)?;
            (q * stats.p_d * residue, yields.p_s_t / stats.p_d, Some(yields))
        }
        Protocol::UpperBound => {
            let yields = dark_adjusted(&stats, mu, link.p_dark, e)?;
            let r = q * yields.p_s_t * (1.0 - binary_entropy(e)?);
            (r, yields.p_s_t / stats.p_d, Some(yields))
        }
        Protocol::Asymptotic => {
            let p_d = stats.p_signal;
            let h = binary_entropy(e)?;
            let r = q * (-p_d * table.ec_efficiency(e)? * h + stats.p_s * (1.0 - h)).max(0.0);
            let fraction = if p_d > 0.0 { stats.p_s / p_d } else { 0.0 };
            (r, fraction, None)
        }
    };
    let r = flush(r.max(0.0));
    let eta_post = if stats.p_d > 0.0 { r / (q * stats.p_d) } else { 0.0 };
    let b = key_bit_rate(preset, r.min(1.0))?;
    let distance = if link.t_ab > 0.0 && preset.alpha > 0.0 {
        link.equivalent_distance(preset.alpha).max(0.0)
    } else {
        0.0
    };
    Ok(RateResult {
        protocol,
        eta_post,
        r,
        b,
        untagged_fraction,
        q,
        link: *link,
        stats,
        yields,
        mu,
        distance,
    })
}
