//! Parameter sweeps and deterministic CSV emission for the `qkdlab` CLI.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::{detection_stats, link_efficiency, LinkEfficiencies};
use crate::decoy::{multi_decoy_solve, vacuum_consistency_check, weak_decoy_estimate, DecoyObservation};
use crate::error::{QkdError, Result};
use crate::optimizer::{
    cutoff_distance, maximize_scalar, optimal_mu_decoy_approx, optimal_mu_no_decoy_approx, MuPolicy,
    DEFAULT_MU_FLOOR, DEFAULT_MU_TOLERANCE,
};
use crate::postprocessing::{rate_at_link, EcEfficiencyTable, Protocol, RateResult};
use crate::preset::ExperimentPreset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepCommand {
    QberVsMu,
    QberVsDistance,
    RateVsDistance,
    OptimalMuVsEta,
    OptimalMuVsDistance,
    DecoySolve,
    Cutoff,
}

impl SweepCommand {
    pub const ALL: [SweepCommand; 7] = [
        SweepCommand::QberVsMu,
        SweepCommand::QberVsDistance,
        SweepCommand::RateVsDistance,
        SweepCommand::OptimalMuVsEta,
        SweepCommand::OptimalMuVsDistance,
        SweepCommand::DecoySolve,
        SweepCommand::Cutoff,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepCommand::QberVsMu => "qber-vs-mu",
            SweepCommand::QberVsDistance => "qber-vs-distance",
            SweepCommand::RateVsDistance => "rate-vs-distance",
            SweepCommand::OptimalMuVsEta => "optimal-mu-vs-eta",
            SweepCommand::OptimalMuVsDistance => "optimal-mu-vs-distance",
            SweepCommand::DecoySolve => "decoy-solve",
            SweepCommand::Cutoff => "cutoff",
        }
    }

    /// Whether the swept variable is an intensity or efficiency (log grid by default).
    fn sweeps_probability(&self) -> bool {
        matches!(self, SweepCommand::QberVsMu | SweepCommand::OptimalMuVsEta)
    }

    pub fn default_range(&self) -> SweepRange {
        match self {
            SweepCommand::QberVsMu => SweepRange::new(1e-6, 1.0, 0.1),
            SweepCommand::OptimalMuVsEta => SweepRange::new(1e-4, 1e-1, 0.1),
            _ => SweepRange::new(0.0, 160.0, 1.0),
        }
    }
}

impl FromStr for SweepCommand {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        SweepCommand::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| QkdError::Config(format!("command: unknown command {s:?}")))
    }
}

impl fmt::Display for SweepCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `START:STOP:STEP`. On a logarithmic grid `STEP` is in decades.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        SweepRange { start, stop, step }
    }

    fn validate(&self, log: bool) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(QkdError::Config(format!("range: step {} must be > 0", self.step)));
        }
        if !(self.start <= self.stop) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(QkdError::Config(format!(
                "range: start {} must not exceed stop {}",
                self.start, self.stop
            )));
        }
        if log && !(self.start > 0.0) {
            return Err(QkdError::Config(format!(
                "range: logarithmic grid needs start > 0, got {}",
                self.start
            )));
        }
        Ok(())
    }

    /// Grid points in order, computed from an integer index so that the last
    /// point does not drift with accumulated rounding.
    pub fn points(&self, log: bool) -> Result<Vec<f64>> {
        self.validate(log)?;
        if log {
            let (a, b) = (self.start.log10(), self.stop.log10());
            let n = ((b - a) / self.step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| 10f64.powf(a + k as f64 * self.step)).collect())
        } else {
            let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| self.start + k as f64 * self.step).collect())
        }
    }
}

impl FromStr for SweepRange {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(QkdError::Config(format!("range: expected START:STOP:STEP, got {s:?}")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| QkdError::Config(format!("range: cannot parse {p:?} as a number")))
        };
        Ok(SweepRange::new(num(parts[0])?, num(parts[1])?, num(parts[2])?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub command: SweepCommand,
    pub protocols: Vec<Protocol>,
    pub range: SweepRange,
    /// Logarithmic grid in the swept variable.
    pub log_grid: bool,
    pub mu_policy: MuPolicy,
    /// Fixed fiber length for commands that sweep intensity.
    pub distance: f64,
    pub threshold: f64,
    pub ec_table: EcEfficiencyTable,
    /// Decoy observations for `decoy-solve`.
    pub observations: Vec<DecoyObservation>,
    /// Relative tolerance of the vacuum-decoy check.
    pub vacuum_tolerance: f64,
}

impl SweepSpec {
    /// A spec with the command's default grid and the built-in EC table.
    pub fn new(command: SweepCommand) -> Self {
        SweepSpec {
            command,
            protocols: vec![Protocol::GllpDecoy],
            range: command.default_range(),
            log_grid: command.sweeps_probability(),
            mu_policy: MuPolicy::Fixed(0.5),
            distance: 0.0,
            threshold: 0.0,
            ec_table: EcEfficiencyTable::builtin(),
            observations: Vec::new(),
            vacuum_tolerance: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let needs_protocols = matches!(
            self.command,
            SweepCommand::RateVsDistance
                | SweepCommand::OptimalMuVsEta
                | SweepCommand::OptimalMuVsDistance
                | SweepCommand::Cutoff
        );
        if needs_protocols && self.protocols.is_empty() {
            return Err(QkdError::Config(format!("protocol: {} needs at least one protocol", self.command)));
        }
        if self.command == SweepCommand::DecoySolve && self.observations.is_empty() {
            return Err(QkdError::Config("decoy-file: decoy-solve needs observations".into()));
        }
        if !(self.distance >= 0.0) {
            return Err(QkdError::Config(format!("distance: {} must be >= 0", self.distance)));
        }
        if !(self.threshold >= 0.0) {
            return Err(QkdError::Config(format!("threshold: {} must be >= 0", self.threshold)));
        }
        if matches!(self.command, SweepCommand::QberVsDistance) && !matches!(self.mu_policy, MuPolicy::Fixed(_)) {
            return Err(QkdError::Config("mu: qber-vs-distance needs a fixed intensity".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CsvValue {
    Num(f64),
    Text(String),
}

impl fmt::Display for CsvValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsvValue::Num(x) => write!(f, "{x:.9e}"),
            CsvValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for CsvValue {
    fn from(x: f64) -> Self {
        CsvValue::Num(x)
    }
}

impl From<&str> for CsvValue {
    fn from(s: &str) -> Self {
        CsvValue::Text(s.to_string())
    }
}

impl From<bool> for CsvValue {
    fn from(b: bool) -> Self {
        CsvValue::Text(b.to_string())
    }
}

pub type CsvRow = Vec<CsvValue>;

/// Header plus rows in sweep order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub header: Vec<String>,
    pub rows: Vec<CsvRow>,
}

impl SweepOutput {
    fn new(header: &[&str]) -> Self {
        SweepOutput {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Index of a header column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn number(&self, row: usize, name: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.column(name)?)? {
            CsvValue::Num(x) => Some(*x),
            CsvValue::Text(_) => None,
        }
    }

    pub fn text(&self, row: usize, name: &str) -> Option<&str> {
        match self.rows.get(row)?.get(self.column(name)?)? {
            CsvValue::Text(s) => Some(s),
            CsvValue::Num(_) => None,
        }
    }
}

/// Writes the header and rows, `delimiter`-separated, LF-terminated. Numbers use
/// scientific notation with nine digits after the point.
pub fn emit_csv<W: Write>(output: &SweepOutput, delimiter: char, mut dest: W) -> Result<()> {
    let sep = delimiter.to_string();
    let io = |e| QkdError::io("output", e);
    writeln!(dest, "{}", output.header.join(&sep)).map_err(io)?;
    for row in &output.rows {
        debug_assert_eq!(row.len(), output.header.len());
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(dest, "{}", line.join(&sep)).map_err(io)?;
    }
    dest.flush().map_err(io)
}

pub fn csv_string(output: &SweepOutput, delimiter: char) -> String {
    let mut buf = Vec::new();
    emit_csv(output, delimiter, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is ascii")
}

/// Evaluates `f` at every grid point in parallel; results keep grid order and
/// the first failure (in grid order) names its point.
fn par_rows<F>(points: &[f64], label: &str, f: F) -> Result<Vec<CsvRow>>
where
    F: Fn(f64) -> Result<Vec<CsvRow>> + Sync,
{
    let results: Vec<Result<Vec<CsvRow>>> = points.par_iter().map(|&x| f(x)).collect();
    let mut rows = Vec::new();
    for (x, res) in points.iter().zip(results) {
        match res {
            Ok(mut r) => rows.append(&mut r),
            Err(e) => return Err(annotate(e, &format!("{label} = {x:e}"))),
        }
    }
    Ok(rows)
}

fn annotate(err: QkdError, at: &str) -> QkdError {
    match err {
        QkdError::Domain(m) => QkdError::Domain(format!("{m} (at {at})")),
        QkdError::Config(m) => QkdError::Config(format!("{m} (at {at})")),
        QkdError::NoRoot(m) => QkdError::NoRoot(format!("{m} (at {at})")),
        QkdError::NoCutoff(m) => QkdError::NoCutoff(format!("{m} (at {at})")),
        other => other,
    }
}

fn rate_row(res: &RateResult) -> CsvRow {
    vec![
        res.distance.into(),
        res.protocol.as_str().into(),
        res.mu.into(),
        res.link.eta.into(),
        res.stats.p_d.into(),
        res.stats.delta.into(),
        res.untagged_fraction.into(),
        res.q.into(),
        res.eta_post.into(),
        res.r.into(),
        res.b.into(),
    ]
}

const RATE_HEADER: [&str; 11] = [
    "distance", "protocol", "mu", "eta", "p_d", "delta", "f1", "q", "eta_post", "r", "b",
];

/// Analytic intensity estimate to print next to a numeric optimum.
fn approx_mu(protocol: Protocol, preset: &ExperimentPreset, eta: f64) -> f64 {
    let approx = if protocol.uses_decoy() {
        if protocol == Protocol::UpperBound {
            Ok(1.0)
        } else {
            optimal_mu_decoy_approx(preset.e_detector)
        }
    } else {
        optimal_mu_no_decoy_approx(eta)
    };
    approx.unwrap_or(f64::NAN)
}

fn optimal_at_link(
    protocol: Protocol,
    preset: &ExperimentPreset,
    link: &LinkEfficiencies,
    table: &EcEfficiencyTable,
) -> Result<(f64, f64, bool)> {
    let opt = maximize_scalar(
        |mu| Ok(rate_at_link(protocol, preset, link, mu, table)?.r),
        DEFAULT_MU_FLOOR,
        1.0,
        DEFAULT_MU_TOLERANCE,
    )?;
    Ok((opt.argmax, opt.value, opt.converged))
}

/// Runs a sweep and returns its rows in grid order.
pub fn run_sweep(spec: &SweepSpec, preset: &ExperimentPreset) -> Result<SweepOutput> {
    spec.validate()?;
    preset.validate()?;
    let table = &spec.ec_table;
    match spec.command {
        SweepCommand::QberVsMu => {
            let mut out = SweepOutput::new(&[
                "mu", "distance", "eta", "p_signal", "p_d", "delta", "f1_decoy", "f1_pessimistic",
            ]);
            let link = link_efficiency(preset, spec.distance)?;
            let points = spec.range.points(spec.log_grid)?;
            out.rows = par_rows(&points, "mu", |mu| {
                let s = detection_stats(&link, mu, preset.e_detector)?;
                Ok(vec![vec![
                    mu.into(),
                    spec.distance.into(),
                    link.eta.into(),
                    s.p_signal.into(),
                    s.p_d.into(),
                    s.delta.into(),
                    s.f1_decoy.into(),
                    s.f1_pessimistic.into(),
                ]])
            })?;
            Ok(out)
        }
        SweepCommand::QberVsDistance => {
            let MuPolicy::Fixed(mu) = spec.mu_policy else {
                unreachable!("validated above")
            };
            let mut out = SweepOutput::new(&["distance", "mu", "eta", "p_signal", "p_d", "delta"]);
            let points = spec.range.points(spec.log_grid)?;
            out.rows = par_rows(&points, "distance", |d| {
                let link = link_efficiency(preset, d)?;
                let s = detection_stats(&link, mu, preset.e_detector)?;
                Ok(vec![vec![
                    d.into(),
                    mu.into(),
                    link.eta.into(),
                    s.p_signal.into(),
                    s.p_d.into(),
                    s.delta.into(),
                ]])
            })?;
            Ok(out)
        }
        SweepCommand::RateVsDistance => {
            let mut out = SweepOutput::new(&RATE_HEADER);
            let points = spec.range.points(spec.log_grid)?;
            out.rows = par_rows(&points, "distance", |d| {
                let link = link_efficiency(preset, d)?;
                spec.protocols
                    .iter()
                    .map(|&p| {
                        let mu = match spec.mu_policy {
                            MuPolicy::Fixed(mu) => mu,
                            MuPolicy::EqualsEta => link.eta,
                            MuPolicy::Optimal => optimal_at_link(p, preset, &link, table)?.0,
                        };
                        let mut res = rate_at_link(p, preset, &link, mu, table)?;
                        res.distance = d;
                        Ok(rate_row(&res))
                    })
                    .collect()
            })?;
            Ok(out)
        }
        SweepCommand::OptimalMuVsEta => {
            let mut out = SweepOutput::new(&["eta", "protocol", "mu_opt", "mu_opt_over_eta", "r", "mu_approx", "converged"]);
            let points = spec.range.points(spec.log_grid)?;
            out.rows = par_rows(&points, "eta", |eta| {
                let link = LinkEfficiencies::with_overall_eta(preset, eta)?;
                spec.protocols
                    .iter()
                    .map(|&p| {
                        let (mu, r, converged) = optimal_at_link(p, preset, &link, table)?;
                        Ok(vec![
                            eta.into(),
                            p.as_str().into(),
                            mu.into(),
                            (mu / eta).into(),
                            r.into(),
                            approx_mu(p, preset, eta).into(),
                            converged.into(),
                        ])
                    })
                    .collect()
            })?;
            Ok(out)
        }
        SweepCommand::OptimalMuVsDistance => {
            let mut out = SweepOutput::new(&["distance", "protocol", "eta", "mu_opt", "r", "mu_approx", "converged"]);
            let points = spec.range.points(spec.log_grid)?;
            out.rows = par_rows(&points, "distance", |d| {
                let link = link_efficiency(preset, d)?;
                spec.protocols
                    .iter()
                    .map(|&p| {
                        let (mu, r, converged) = optimal_at_link(p, preset, &link, table)?;
                        Ok(vec![
                            d.into(),
                            p.as_str().into(),
                            link.eta.into(),
                            mu.into(),
                            r.into(),
                            approx_mu(p, preset, link.eta).into(),
                            converged.into(),
                        ])
                    })
                    .collect()
            })?;
            Ok(out)
        }
        SweepCommand::Cutoff => {
            let mut out = SweepOutput::new(&["protocol", "mu_policy", "threshold", "distance", "r", "iterations"]);
            let results: Vec<Result<CsvRow>> = spec
                .protocols
                .par_iter()
                .map(|&p| {
                    let res = cutoff_distance(p, preset, spec.mu_policy, spec.threshold, table)?;
                    Ok(vec![
                        p.as_str().into(),
                        CsvValue::Text(spec.mu_policy.to_string()),
                        spec.threshold.into(),
                        res.argmax.into(),
                        res.value.into(),
                        (res.iterations as f64).into(),
                    ])
                })
                .collect();
            for r in results {
                out.rows.push(r?);
            }
            Ok(out)
        }
        SweepCommand::DecoySolve => decoy_solve_table(spec, preset),
    }
}

/// Vacuum check, weak-decoy and multi-decoy estimates as one key/value table.
fn decoy_solve_table(spec: &SweepSpec, preset: &ExperimentPreset) -> Result<SweepOutput> {
    let mut out = SweepOutput::new(&["key", "value"]);
    let mut push = |k: &str, v: CsvValue| out.rows.push(vec![k.into(), v]);

    let (vacua, weak): (Vec<DecoyObservation>, Vec<DecoyObservation>) =
        spec.observations.iter().partition(|o| o.mu == 0.0);
    let p_dark = match vacua.first() {
        Some(vac) => {
            let check = vacuum_consistency_check(vac, preset, spec.vacuum_tolerance)?;
            push("vacuum_pass", check.pass.into());
            push("vacuum_p_d_residual", check.p_d_residual.into());
            push("vacuum_delta_residual", check.delta_residual.into());
            vac.p_d_observed
        }
        None => preset.p_dark(),
    };
    push("p_dark", p_dark.into());
    if weak.is_empty() {
        return Err(QkdError::Config("decoy-file: no weak decoy (mu > 0) observations".into()));
    }
    let mut weakest = weak.clone();
    weakest.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    if let Ok(single) = weak_decoy_estimate(&weakest[0], p_dark) {
        push("weak_mu", weakest[0].mu.into());
        push("weak_eta_1", single.eta1().into());
        push("weak_p_s_tilde", single.p_s_tilde.into());
        push("weak_delta_s_tilde", single.delta_s_tilde.into());
    }
    let est = multi_decoy_solve(&weak, p_dark)?;
    push("m", (est.eta.len() as f64).into());
    for (i, eta) in est.eta.iter().enumerate() {
        push(&format!("eta_{}", i + 1), (*eta).into());
    }
    push("single_photon_error", est.single_photon_error.into());
    push("p_s_tilde", est.p_s_tilde.into());
    push("delta_s_tilde", est.delta_s_tilde.into());
    push("clamped", est.clamped.into());
    if let Some(c) = est.condition_estimate {
        push("condition", c.into());
    }
    if let Some(w) = &est.condition_warning {
        push("warning", CsvValue::Text(w.replace([',', '\t'], ";")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting_contract() {
        let mut out = SweepOutput::new(&["distance", "r"]);
        out.rows.push(vec![0.0.into(), 0.5.into()]);
        assert_eq!(csv_string(&out, ','), "distance,r\n0.000000000e0,5.000000000e-1\n");
        assert_eq!(csv_string(&out, '\t'), "distance\tr\n0.000000000e0\t5.000000000e-1\n");
    }

    #[test]
    fn range_parsing_and_grids() {
        let r: SweepRange = "0:160:1".parse().unwrap();
        assert_eq!(r.points(false).unwrap().len(), 161);
        let pts = "1e-5:1:1".parse::<SweepRange>().unwrap().points(true).unwrap();
        assert_eq!(pts.len(), 6);
        assert!((pts[5] - 1.0).abs() < 1e-12);
        assert!("0:1".parse::<SweepRange>().is_err());
        assert!("a:1:1".parse::<SweepRange>().is_err());
        assert!(SweepRange::new(0.0, 1.0, 0.0).points(false).is_err());
        assert!(SweepRange::new(2.0, 1.0, 0.1).points(false).is_err());
        assert!(SweepRange::new(0.0, 1.0, 0.1).points(true).is_err());
    }

    #[test]
    fn rate_sweep_has_one_row_per_point_and_protocol() {
        let mut spec = SweepSpec::new(SweepCommand::RateVsDistance);
        spec.protocols = vec![Protocol::Gllp, Protocol::GllpDecoy];
        spec.range = SweepRange::new(0.0, 10.0, 1.0);
        let out = run_sweep(&spec, &ExperimentPreset::gys()).unwrap();
        assert_eq!(out.rows.len(), 22);
        assert_eq!(out.text(1, "protocol"), Some("gllp-decoy"));
        assert!(out.rows.iter().all(|r| r.len() == out.header.len()));
    }

    #[test]
    fn sweep_validation() {
        let mut spec = SweepSpec::new(SweepCommand::RateVsDistance);
        spec.protocols.clear();
        assert!(matches!(run_sweep(&spec, &ExperimentPreset::gys()), Err(QkdError::Config(_))));
        let spec = SweepSpec::new(SweepCommand::DecoySolve);
        assert!(matches!(run_sweep(&spec, &ExperimentPreset::gys()), Err(QkdError::Config(_))));
    }

    #[test]
    fn errors_name_the_grid_point() {
        let mut spec = SweepSpec::new(SweepCommand::OptimalMuVsEta);
        spec.range = SweepRange::new(1e-2, 1.0, 1.0);
        let err = run_sweep(&spec, &ExperimentPreset::t8()).unwrap_err();
        assert!(matches!(&err, QkdError::Domain(m) if m.contains("at eta = 1e-1")), "{err}");
    }
}
