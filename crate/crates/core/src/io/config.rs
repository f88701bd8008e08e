//! The TOML run configuration.
//!
//! ```toml
//! [cascade]
//! delta_ueV = 34
//! tau_x_ps = 410
//! tau_xx_ps = 260
//! eta = 0.002
//! irf_fwhm_ps = 42
//!
//! [run]
//! pulses_per_setting = 4560000000
//! seed = 1
//! repetition_mhz = 76
//!
//! [analysis]
//! bin_ps = 4
//! window_ps = 24
//! dt_max_ps = 1500
//! ```
//!
//! Every key is optional and defaults to the values above. `precession_ps`
//! may be given in `[cascade]` instead of (or consistently with)
//! `delta_ueV`. Unknown sections and keys are rejected.

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::cascade::{
    CascadeParams, DEFAULT_DELTA_UEV, DEFAULT_ETA, DEFAULT_IRF_FWHM_PS, DEFAULT_TAU_XX_PS,
    DEFAULT_TAU_X_PS, PLANCK_UEV_PS,
};
use crate::error::{Error, Result};
use crate::simulator::{repetition_period_ps, RunConfig, DEFAULT_REPETITION_MHZ};
use crate::tomography::default_settings;

/// One minute of pulses at 76 MHz, the time spent per projection setting.
pub const DEFAULT_PULSES_PER_SETTING: u64 = 4_560_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSection {
    pub delta_uev: f64,
    pub precession_ps: Option<f64>,
    pub tau_x_ps: f64,
    pub tau_xx_ps: f64,
    pub eta: f64,
    pub irf_fwhm_ps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub pulses_per_setting: u64,
    pub seed: u64,
    pub repetition_mhz: f64,
    pub max_events: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSection {
    pub bin_ps: f64,
    pub window_ps: f64,
    pub dt_max_ps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub cascade: CascadeSection,
    pub run: RunSection,
    pub analysis: AnalysisSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            cascade: CascadeSection {
                delta_uev: DEFAULT_DELTA_UEV,
                precession_ps: None,
                tau_x_ps: DEFAULT_TAU_X_PS,
                tau_xx_ps: DEFAULT_TAU_XX_PS,
                eta: DEFAULT_ETA,
                irf_fwhm_ps: DEFAULT_IRF_FWHM_PS,
            },
            run: RunSection {
                pulses_per_setting: DEFAULT_PULSES_PER_SETTING,
                seed: 1,
                repetition_mhz: DEFAULT_REPETITION_MHZ,
                max_events: None,
            },
            analysis: AnalysisSection {
                bin_ps: 4.0,
                window_ps: 24.0,
                dt_max_ps: 1500.0,
            },
        }
    }
}

const CASCADE_KEYS: [&str; 6] = ["delta_ueV", "precession_ps", "tau_x_ps", "tau_xx_ps", "eta", "irf_fwhm_ps"];
const RUN_KEYS: [&str; 4] = ["pulses_per_setting", "seed", "repetition_mhz", "max_events"];
const ANALYSIS_KEYS: [&str; 3] = ["bin_ps", "window_ps", "dt_max_ps"];

fn section<'a>(root: &'a Table, name: &str, keys: &[&str]) -> Result<Option<&'a Table>> {
    let Some(v) = root.get(name) else {
        return Ok(None);
    };
    let Value::Table(t) = v else {
        return Err(Error::config(format!("[{name}] must be a table")));
    };
    if let Some(k) = t.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(Error::config(format!(
            "unknown key `{k}` in section [{name}] (expected one of: {})",
            keys.join(", ")
        )));
    }
    Ok(Some(t))
}

fn float(t: Option<&Table>, sec: &str, key: &str, default: f64) -> Result<f64> {
    match t.and_then(|t| t.get(key)) {
        None => Ok(default),
        Some(Value::Float(f)) => Ok(*f),
        Some(Value::Integer(i)) => Ok(*i as f64),
        Some(other) => Err(Error::config(format!(
            "key `{key}` in section [{sec}] must be a number, got {}",
            other.type_str()
        ))),
    }
}

fn integer(t: Option<&Table>, sec: &str, key: &str) -> Result<Option<u64>> {
    match t.and_then(|t| t.get(key)) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(Value::Float(f)) if *f >= 0.0 && f.fract() == 0.0 && *f < 1.8e19 => Ok(Some(*f as u64)),
        Some(other) => Err(Error::config(format!(
            "key `{key}` in section [{sec}] must be a non-negative integer, got {other}"
        ))),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(format!("malformed config: {}", e.message())))?;
        if let Some(k) = root.keys().find(|k| !["cascade", "run", "analysis"].contains(&k.as_str())) {
            return Err(Error::config(format!(
                "unknown section or top-level key `{k}` (expected [cascade], [run], [analysis])"
            )));
        }
        let d = Config::default();
        let c = section(&root, "cascade", &CASCADE_KEYS)?;
        let r = section(&root, "run", &RUN_KEYS)?;
        let a = section(&root, "analysis", &ANALYSIS_KEYS)?;

        let precession_ps = match c.and_then(|t| t.get("precession_ps")) {
            None => None,
            Some(_) => Some(float(c, "cascade", "precession_ps", 0.0)?),
        };
        let delta_given = c.is_some_and(|t| t.contains_key("delta_ueV"));
        let delta_uev = match (delta_given, precession_ps) {
            (false, Some(tp)) if tp > 0.0 => PLANCK_UEV_PS / tp,
            _ => float(c, "cascade", "delta_ueV", d.cascade.delta_uev)?,
        };
        let cfg = Config {
            cascade: CascadeSection {
                delta_uev,
                precession_ps,
                tau_x_ps: float(c, "cascade", "tau_x_ps", d.cascade.tau_x_ps)?,
                tau_xx_ps: float(c, "cascade", "tau_xx_ps", d.cascade.tau_xx_ps)?,
                eta: float(c, "cascade", "eta", d.cascade.eta)?,
                irf_fwhm_ps: float(c, "cascade", "irf_fwhm_ps", d.cascade.irf_fwhm_ps)?,
            },
            run: RunSection {
                pulses_per_setting: integer(r, "run", "pulses_per_setting")?
                    .unwrap_or(d.run.pulses_per_setting),
                seed: integer(r, "run", "seed")?.unwrap_or(d.run.seed),
                repetition_mhz: float(r, "run", "repetition_mhz", d.run.repetition_mhz)?,
                max_events: integer(r, "run", "max_events")?,
            },
            analysis: AnalysisSection {
                bin_ps: float(a, "analysis", "bin_ps", d.analysis.bin_ps)?,
                window_ps: float(a, "analysis", "window_ps", d.analysis.window_ps)?,
                dt_max_ps: float(a, "analysis", "dt_max_ps", d.analysis.dt_max_ps)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.cascade_params()
            .map_err(|e| Error::config(format!("[cascade]: {e}")))?;
        let positive = |sec: &str, key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("key `{key}` in section [{sec}] must be > 0, got {v}")))
            }
        };
        if self.run.pulses_per_setting == 0 {
            return Err(Error::config("key `pulses_per_setting` in section [run] must be > 0"));
        }
        // TOML integers are signed, so larger values could not be written back
        for (key, v) in [
            ("pulses_per_setting", Some(self.run.pulses_per_setting)),
            ("seed", Some(self.run.seed)),
            ("max_events", self.run.max_events),
        ] {
            if v.is_some_and(|v| v > i64::MAX as u64) {
                return Err(Error::config(format!("key `{key}` in section [run] must be at most {}", i64::MAX)));
            }
        }
        positive("run", "repetition_mhz", self.run.repetition_mhz)?;
        positive("analysis", "bin_ps", self.analysis.bin_ps)?;
        positive("analysis", "window_ps", self.analysis.window_ps)?;
        positive("analysis", "dt_max_ps", self.analysis.dt_max_ps)?;
        if self.analysis.window_ps < self.analysis.bin_ps {
            return Err(Error::config("key `window_ps` in section [analysis] must be >= bin_ps"));
        }
        Ok(())
    }

    pub fn cascade_params(&self) -> Result<CascadeParams> {
        let c = &self.cascade;
        match c.precession_ps {
            Some(tp) => {
                let p = CascadeParams::with_precession(tp, c.tau_x_ps, c.tau_xx_ps, c.eta, c.irf_fwhm_ps)?;
                let implied = PLANCK_UEV_PS / c.delta_uev;
                if ((implied - tp) / tp).abs() > 1e-3 {
                    return Err(Error::config(format!(
                        "precession_ps = {tp} disagrees with h/delta_ueV = {implied:.3}"
                    )));
                }
                Ok(p)
            }
            None => CascadeParams::new(c.delta_uev, c.tau_x_ps, c.tau_xx_ps, c.eta, c.irf_fwhm_ps),
        }
    }

    /// Simulation setup with the 16 standard settings.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut rc = RunConfig::new(
            self.cascade_params()?,
            default_settings(),
            self.run.pulses_per_setting,
            self.run.seed,
        );
        rc.repetition_period_ps = repetition_period_ps(self.run.repetition_mhz);
        rc.max_events = self.run.max_events.map(|m| m as usize);
        Ok(rc)
    }

    /// Canonical TOML: fixed key order, every key present, shortest
    /// round-trip number formatting.
    pub fn canonical(&self) -> String {
        let c = &self.cascade;
        let mut s = String::new();
        s.push_str("[cascade]\n");
        s.push_str(&format!("delta_ueV = {}\n", fmt_f(c.delta_uev)));
        if let Some(tp) = c.precession_ps {
            s.push_str(&format!("precession_ps = {}\n", fmt_f(tp)));
        }
        s.push_str(&format!("tau_x_ps = {}\n", fmt_f(c.tau_x_ps)));
        s.push_str(&format!("tau_xx_ps = {}\n", fmt_f(c.tau_xx_ps)));
        s.push_str(&format!("eta = {}\n", fmt_f(c.eta)));
        s.push_str(&format!("irf_fwhm_ps = {}\n", fmt_f(c.irf_fwhm_ps)));
        s.push_str("\n[run]\n");
        s.push_str(&format!("pulses_per_setting = {}\n", self.run.pulses_per_setting));
        s.push_str(&format!("seed = {}\n", self.run.seed));
        s.push_str(&format!("repetition_mhz = {}\n", fmt_f(self.run.repetition_mhz)));
        if let Some(m) = self.run.max_events {
            s.push_str(&format!("max_events = {m}\n"));
        }
        s.push_str("\n[analysis]\n");
        s.push_str(&format!("bin_ps = {}\n", fmt_f(self.analysis.bin_ps)));
        s.push_str(&format!("window_ps = {}\n", fmt_f(self.analysis.window_ps)));
        s.push_str(&format!("dt_max_ps = {}\n", fmt_f(self.analysis.dt_max_ps)));
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Config::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

/// Floats in TOML syntax; seeds above 2^63 do not fit TOML integers and are
/// not supported.
fn fmt_f(v: f64) -> String {
    let s = format!("{v}");
    if s.contains(['.', 'e', 'E', 'N', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}
