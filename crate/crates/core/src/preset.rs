//! Experimental setups and their plain-text `key=value` config format.
//!
//! The four built-in presets carry the fiber and detector parameters of the
//! T8, G13, KTH and GYS plug-and-play setups. A config file either starts from
//! a built-in (`preset = GYS`) and overrides individual fields, or lists every
//! required field itself.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{QkdError, Result};

pub const BUILTIN_PRESETS: [&str; 4] = ["T8", "G13", "KTH", "GYS"];

const DEFAULT_SIFTING: f64 = 0.5;
const DEFAULT_SOURCE_RATE_HZ: f64 = 1.0e6;
const DEFAULT_DETECTOR_RATE_HZ: f64 = 1.0e6;

/// Detector, fiber and source parameters of one setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: String,
    /// Informational only.
    pub wavelength_nm: f64,
    /// Fiber loss coefficient in dB/km.
    pub alpha: f64,
    /// Internal loss of Bob's apparatus in dB.
    pub t_bob_db: f64,
    /// Probability that an arriving photon hits the wrong detector.
    pub e_detector: f64,
    /// Dark count probability per slot, per detector.
    pub d_b: f64,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Measured overall efficiency of Bob's side. Replaces `10^(-t_bob_db/10) * eta_d`.
    pub eta_bob_override: Option<f64>,
    /// Number of detectors contributing dark counts.
    pub detectors: u32,
    /// Sifting factor.
    pub q: f64,
    /// Source repetition frequency, Hz.
    pub nu_a: f64,
    /// Detector count-rate limit, Hz.
    pub nu_b: f64,
}

impl ExperimentPreset {
    #[allow(clippy::too_many_arguments)]
    fn table_entry(
        name: &str,
        wavelength_nm: f64,
        alpha: f64,
        t_bob_db: f64,
        e_detector: f64,
        d_b: f64,
        eta_d: f64,
        eta_bob_override: Option<f64>,
    ) -> Self {
        ExperimentPreset {
            name: name.to_string(),
            wavelength_nm,
            alpha,
            t_bob_db,
            e_detector,
            d_b,
            eta_d,
            eta_bob_override,
            detectors: 2,
            q: DEFAULT_SIFTING,
            nu_a: DEFAULT_SOURCE_RATE_HZ,
            nu_b: DEFAULT_DETECTOR_RATE_HZ,
        }
    }

    pub fn t8() -> Self {
        Self::table_entry("T8", 830.0, 2.5, 8.0, 0.01, 5e-8, 0.5, None)
    }

    pub fn g13() -> Self {
        Self::table_entry("G13", 1300.0, 0.32, 3.2, 0.0014, 8.2e-5, 0.17, None)
    }

    pub fn kth() -> Self {
        Self::table_entry("KTH", 1550.0, 0.2, 1.0, 0.01, 2e-4, 0.18, None)
    }

    /// GYS reports Bob's overall efficiency directly as 0.045.
    pub fn gys() -> Self {
        Self::table_entry("GYS", 1550.0, 0.21, 5.0, 0.033, 8.5e-7, 0.12, Some(0.045))
    }

    /// Looks up a built-in preset by name (case-insensitive).
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "T8" => Some(Self::t8()),
            "G13" => Some(Self::g13()),
            "KTH" => Some(Self::kth()),
            "GYS" => Some(Self::gys()),
            _ => None,
        }
    }

    /// Efficiency of Bob's side: internal transmission times detector efficiency,
    /// unless the setup reports it directly.
    pub fn eta_bob(&self) -> f64 {
        self.eta_bob_override
            .unwrap_or_else(|| 10f64.powf(-self.t_bob_db / 10.0) * self.eta_d)
    }

    /// Total dark-count probability per pulse over all detectors.
    pub fn p_dark(&self) -> f64 {
        f64::from(self.detectors) * self.d_b
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, key: &str, value: f64, rule: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(QkdError::Config(format!("{key} = {value} violates {rule}")))
            }
        }
        check(self.alpha.is_finite() && self.alpha >= 0.0, "alpha", self.alpha, "alpha >= 0")?;
        check(
            self.t_bob_db.is_finite() && self.t_bob_db >= 0.0,
            "t_bob_db",
            self.t_bob_db,
            "t_bob_db >= 0",
        )?;
        check(
            (0.0..=0.5).contains(&self.e_detector),
            "e_detector",
            self.e_detector,
            "0 <= e_detector <= 1/2",
        )?;
        check((0.0..1.0).contains(&self.d_b), "d_b", self.d_b, "0 <= d_b < 1")?;
        check(
            self.eta_d > 0.0 && self.eta_d <= 1.0,
            "eta_d",
            self.eta_d,
            "0 < eta_d <= 1",
        )?;
        if let Some(eta_bob) = self.eta_bob_override {
            check(eta_bob > 0.0 && eta_bob <= 1.0, "eta_bob", eta_bob, "0 < eta_bob <= 1")?;
        }
        check(self.q > 0.0 && self.q <= 1.0, "q", self.q, "0 < q <= 1")?;
        check(self.nu_a.is_finite() && self.nu_a > 0.0, "nu_a", self.nu_a, "nu_a > 0")?;
        check(self.nu_b.is_finite() && self.nu_b > 0.0, "nu_b", self.nu_b, "nu_b > 0")?;
        if self.detectors == 0 {
            return Err(QkdError::Config("detectors = 0 violates detectors >= 1".into()));
        }
        if self.p_dark() >= 1.0 {
            return Err(QkdError::Config(format!(
                "detectors * d_b = {} must stay below 1",
                self.p_dark()
            )));
        }
        Ok(())
    }

    /// Renders the preset in the config format accepted by [`parse_config`].
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "wavelength = {:e}", self.wavelength_nm);
        let _ = writeln!(out, "alpha = {:e}", self.alpha);
        let _ = writeln!(out, "t_bob_db = {:e}", self.t_bob_db);
        let _ = writeln!(out, "e_detector = {:e}", self.e_detector);
        let _ = writeln!(out, "d_b = {:e}", self.d_b);
        let _ = writeln!(out, "eta_d = {:e}", self.eta_d);
        if let Some(eta_bob) = self.eta_bob_override {
            let _ = writeln!(out, "eta_bob = {eta_bob:e}");
        }
        let _ = writeln!(out, "detectors = {}", self.detectors);
        let _ = writeln!(out, "q = {:e}", self.q);
        let _ = writeln!(out, "nu_a = {:e}", self.nu_a);
        let _ = writeln!(out, "nu_b = {:e}", self.nu_b);
        out
    }
}

const REQUIRED_KEYS: [&str; 6] = ["alpha", "t_bob_db", "e_detector", "d_b", "eta_d", "name"];

/// Parses `key = value` lines. `#` starts a comment. A `preset = NAME` line
/// selects a built-in as the base; otherwise every required key must appear.
/// `base` is used when the text names no preset of its own.
pub fn parse_config(text: &str, base: Option<ExperimentPreset>) -> Result<ExperimentPreset> {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut base = base;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            QkdError::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
        })?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if key == "preset" {
            base = Some(ExperimentPreset::builtin(&value).ok_or_else(|| {
                QkdError::Config(format!("preset: unknown preset {value:?}"))
            })?);
        } else {
            entries.push((key, value));
        }
    }

    let had_base = base.is_some();
    let mut preset = base.unwrap_or_else(|| ExperimentPreset {
        name: String::new(),
        wavelength_nm: 0.0,
        alpha: f64::NAN,
        t_bob_db: f64::NAN,
        e_detector: f64::NAN,
        d_b: f64::NAN,
        eta_d: f64::NAN,
        eta_bob_override: None,
        detectors: 2,
        q: DEFAULT_SIFTING,
        nu_a: DEFAULT_SOURCE_RATE_HZ,
        nu_b: DEFAULT_DETECTOR_RATE_HZ,
    });

    let mut seen: Vec<&str> = Vec::new();
    for (key, value) in &entries {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| QkdError::Config(format!("{key}: cannot parse {value:?} as a number")))
        };
        match key.as_str() {
            "name" => preset.name = value.clone(),
            "wavelength" | "wavelength_nm" => preset.wavelength_nm = num()?,
            "alpha" => preset.alpha = num()?,
            "t_bob_db" | "t_b" => preset.t_bob_db = num()?,
            "e_detector" => preset.e_detector = num()?,
            "d_b" => preset.d_b = num()?,
            "eta_d" => preset.eta_d = num()?,
            "eta_bob" => {
                preset.eta_bob_override = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(num()?)
                }
            }
            "detectors" => {
                preset.detectors = value.parse::<u32>().map_err(|_| {
                    QkdError::Config(format!("detectors: cannot parse {value:?} as a count"))
                })?
            }
            "q" => preset.q = num()?,
            "nu_a" => preset.nu_a = num()?,
            "nu_b" => preset.nu_b = num()?,
            other => return Err(QkdError::Config(format!("{other}: unknown key"))),
        }
        let canonical = match key.as_str() {
            "wavelength_nm" => "wavelength",
            "t_b" => "t_bob_db",
            k => REQUIRED_KEYS.iter().copied().find(|r| *r == k).unwrap_or(""),
        };
        seen.push(canonical);
    }

    if !had_base {
        if let Some(missing) = REQUIRED_KEYS.iter().find(|k| !seen.contains(k)) {
            return Err(QkdError::Config(format!("{missing}: missing required field")));
        }
    }
    preset.validate()?;
    Ok(preset)
}

/// Resolves a preset name or a config file path.
pub fn load_config(name_or_path: &str) -> Result<ExperimentPreset> {
    if let Some(preset) = ExperimentPreset::builtin(name_or_path) {
        return Ok(preset);
    }
    load_config_file(Path::new(name_or_path), None)
}

/// Reads a config file; its keys override `base` when one is given.
pub fn load_config_file(path: &Path, base: Option<ExperimentPreset>) -> Result<ExperimentPreset> {
    let text = std::fs::read_to_string(path).map_err(|e| QkdError::io(path.display(), e))?;
    parse_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_values() {
        let gys = ExperimentPreset::gys();
        assert_eq!(gys.alpha, 0.21);
        assert_eq!(gys.e_detector, 0.033);
        assert_eq!(gys.d_b, 8.5e-7);
        assert_eq!(gys.eta_bob(), 0.045);

        let t8 = ExperimentPreset::t8();
        assert_eq!((t8.alpha, t8.t_bob_db, t8.e_detector, t8.d_b, t8.eta_d), (2.5, 8.0, 0.01, 5e-8, 0.5));
        let g13 = ExperimentPreset::g13();
        assert_eq!((g13.alpha, g13.t_bob_db, g13.e_detector, g13.d_b, g13.eta_d), (0.32, 3.2, 0.0014, 8.2e-5, 0.17));
        let kth = ExperimentPreset::kth();
        assert_eq!((kth.alpha, kth.t_bob_db, kth.e_detector, kth.d_b, kth.eta_d), (0.2, 1.0, 0.01, 2e-4, 0.18));
        for name in BUILTIN_PRESETS {
            ExperimentPreset::builtin(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentPreset::builtin("gys").is_some());
        assert!(ExperimentPreset::builtin("XYZ").is_none());
    }

    #[test]
    fn override_dark_count() {
        let p = parse_config("# kill dark counts\nd_b = 0\n", Some(ExperimentPreset::gys())).unwrap();
        assert_eq!(p.p_dark(), 0.0);
        assert_eq!(p.alpha, 0.21);
    }

    #[test]
    fn preset_line_selects_base() {
        let p = parse_config("preset = T8\nalpha = 3.0", None).unwrap();
        assert_eq!(p.alpha, 3.0);
        assert_eq!(p.eta_d, 0.5);
    }

    #[test]
    fn errors_name_the_key() {
        let err = parse_config("bogus = 1", Some(ExperimentPreset::gys())).unwrap_err();
        assert!(matches!(&err, QkdError::Config(m) if m.starts_with("bogus")), "{err}");
        let err = parse_config("alpha = fast", Some(ExperimentPreset::gys())).unwrap_err();
        assert!(matches!(&err, QkdError::Config(m) if m.starts_with("alpha")), "{err}");
        let err = parse_config("name = x\nalpha = 0.2\nt_bob_db = 1\ne_detector = 0.01\nd_b = 1e-6", None)
            .unwrap_err();
        assert!(matches!(&err, QkdError::Config(m) if m.starts_with("eta_d")), "{err}");
        let err = parse_config("e_detector = 0.7", Some(ExperimentPreset::gys())).unwrap_err();
        assert!(matches!(&err, QkdError::Config(m) if m.starts_with("e_detector")), "{err}");
    }

    #[test]
    fn config_string_round_trip() {
        for name in BUILTIN_PRESETS {
            let p = ExperimentPreset::builtin(name).unwrap();
            let back = parse_config(&p.to_config_string(), None).unwrap();
            assert_eq!(p, back);
        }
    }
}
