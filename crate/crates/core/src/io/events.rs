//! Coincidence event files.
//!
//! ```text
//! # cascade-events v1
//! # tool: qdcascade 0.1.0
//! # config-hash: 3f1c9a0b7d2e4410
//! # config: [cascade]
//! # config: delta_ueV = 34.0
//! # ...
//! # setting: 0 H,H
//! # setting: 1 H,V
//! # ...
//! # partial: false
//! pulse_index,setting_id,t1_ps,t2_ps
//! 17,0,312.250000,695.004000
//! ```
//!
//! Times are relative to the excitation pulse and may be slightly negative
//! through detector jitter. Records are strictly increasing in `(setting_id, pulse_index)`, and times
//! carry six fractional digits (1e-6 ps, the simulator's quantum), so
//! `to_string(parse(s)) == s` for any file written here.

use std::fmt::Write as _;
use std::path::Path;

use super::config::Config;
use super::write_atomic;
use crate::error::{Error, Result};
use crate::polarization::{identify_named, named_state, NamedState};
use crate::simulator::{CoincidenceRecord, ProjectionSetting, RunOutput};

pub const MAGIC: &str = "# cascade-events v1";
pub const COLUMNS: &str = "pulse_index,setting_id,t1_ps,t2_ps";

#[derive(Debug, Clone, PartialEq)]
pub struct EventFile {
    pub tool_version: String,
    pub config: Config,
    pub settings: Vec<ProjectionSetting>,
    pub partial: bool,
    pub records: Vec<CoincidenceRecord>,
}

impl EventFile {
    pub fn from_run(config: &Config, settings: &[ProjectionSetting], run: RunOutput) -> Self {
        EventFile {
            tool_version: crate::VERSION.to_string(),
            config: config.clone(),
            settings: settings.to_vec(),
            partial: run.partial,
            records: run.records,
        }
    }

    /// The setting with this id, if declared.
    pub fn setting(&self, id: usize) -> Option<&ProjectionSetting> {
        self.settings.iter().find(|s| s.id == id)
    }

    pub fn to_text(&self) -> Result<String> {
        let mut s = String::with_capacity(64 + 40 * self.records.len());
        s.push_str(MAGIC);
        s.push('\n');
        let _ = writeln!(s, "# tool: qdcascade {}", self.tool_version);
        let _ = writeln!(s, "# config-hash: {}", self.config.hash());
        for line in self.config.canonical().lines() {
            if line.is_empty() {
                s.push_str("# config:\n");
            } else {
                let _ = writeln!(s, "# config: {line}");
            }
        }
        for st in &self.settings {
            let (Some(a), Some(b)) = (identify_named(&st.p1), identify_named(&st.p2)) else {
                return Err(Error::invalid(format!(
                    "setting {} is not a pair of named states and cannot be written",
                    st.id
                )));
            };
            let _ = writeln!(s, "# setting: {} {},{}", st.id, a.label(), b.label());
        }
        let _ = writeln!(s, "# partial: {}", self.partial);
        s.push_str(COLUMNS);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{},{},{:.6},{:.6}", r.pulse_index, r.setting_id, r.t1_ps, r.t2_ps);
        }
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_text()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let data_err = |line: usize, msg: String| Error::Data(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(Error::Data(format!("not an event file (expected `{MAGIC}`)"))),
        }
        let mut tool_version = None;
        let mut hash = None;
        let mut config_text = String::new();
        let mut settings = Vec::new();
        let mut partial = None;
        let mut in_body = false;
        let mut records = Vec::new();
        let mut last: Option<(usize, u64)> = None;

        for (n, line) in lines {
            if !in_body {
                if let Some(rest) = line.strip_prefix("# config: ") {
                    config_text.push_str(rest);
                    config_text.push('\n');
                } else if line == "# config:" {
                    config_text.push('\n');
                } else if let Some(rest) = line.strip_prefix("# tool: qdcascade ") {
                    tool_version = Some(rest.to_string());
                } else if let Some(rest) = line.strip_prefix("# config-hash: ") {
                    hash = Some(rest.to_string());
                } else if let Some(rest) = line.strip_prefix("# setting: ") {
                    settings.push(parse_setting(rest).map_err(|m| data_err(n, m))?);
                } else if let Some(rest) = line.strip_prefix("# partial: ") {
                    partial = Some(match rest {
                        "true" => true,
                        "false" => false,
                        _ => return Err(data_err(n, format!("bad partial flag `{rest}`"))),
                    });
                } else if line == COLUMNS {
                    in_body = true;
                } else {
                    return Err(data_err(n, format!("unexpected header line `{line}`")));
                }
                continue;
            }
            let r = parse_record(line).map_err(|m| data_err(n, m))?;
            if !settings.iter().any(|s: &ProjectionSetting| s.id == r.setting_id) {
                return Err(data_err(n, format!("unknown setting_id {}", r.setting_id)));
            }
            let key = (r.setting_id, r.pulse_index);
            if last.is_some_and(|l| l >= key) {
                return Err(data_err(
                    n,
                    "records must be strictly increasing in (setting_id, pulse_index)".into(),
                ));
            }
            last = Some(key);
            records.push(r);
        }
        if !in_body {
            return Err(Error::Data(format!("missing column header `{COLUMNS}`")));
        }
        let config = Config::parse(&config_text)
            .map_err(|e| Error::Data(format!("embedded config: {e}")))?;
        if let Some(h) = hash {
            if h != config.hash() {
                return Err(Error::Data(format!(
                    "config hash {h} does not match embedded config ({})",
                    config.hash()
                )));
            }
        }
        Ok(EventFile {
            tool_version: tool_version.ok_or_else(|| Error::Data("missing tool line".into()))?,
            config,
            settings,
            partial: partial.ok_or_else(|| Error::Data("missing partial flag".into()))?,
            records,
        })
    }
}

fn parse_setting(s: &str) -> std::result::Result<ProjectionSetting, String> {
    let (id, labels) = s.split_once(' ').ok_or("expected `<id> <a>,<b>`")?;
    let id: usize = id.parse().map_err(|_| format!("bad setting id `{id}`"))?;
    let (a, b) = labels.split_once(',').ok_or("expected `<a>,<b>`")?;
    let a: NamedState = a.parse().map_err(|e| format!("{e}"))?;
    let b: NamedState = b.parse().map_err(|e| format!("{e}"))?;
    Ok(ProjectionSetting::new(id, named_state(a), named_state(b)))
}

fn parse_record(line: &str) -> std::result::Result<CoincidenceRecord, String> {
    let mut f = line.split(',');
    let mut next = |name: &str| f.next().ok_or_else(|| format!("missing field {name}"));
    let pulse_index = next("pulse_index")?;
    let setting_id = next("setting_id")?;
    let t1 = next("t1_ps")?;
    let t2 = next("t2_ps")?;
    if f.next().is_some() {
        return Err("too many fields".into());
    }
    let time = |s: &str| -> std::result::Result<f64, String> {
        let v: f64 = s.parse().map_err(|_| format!("bad time `{s}`"))?;
        if !v.is_finite() {
            return Err(format!("time `{s}` must be finite"));
        }
        Ok(v)
    };
    Ok(CoincidenceRecord {
        pulse_index: pulse_index.parse().map_err(|_| format!("bad pulse_index `{pulse_index}`"))?,
        setting_id: setting_id.parse().map_err(|_| format!("bad setting_id `{setting_id}`"))?,
        t1_ps: time(t1)?,
        t2_ps: time(t2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomography::default_settings;

    fn sample() -> EventFile {
        EventFile {
            tool_version: crate::VERSION.into(),
            config: Config::default(),
            settings: default_settings(),
            partial: false,
            records: vec![
                CoincidenceRecord { pulse_index: 3, setting_id: 0, t1_ps: 1.5, t2_ps: 400.000001 },
                CoincidenceRecord { pulse_index: 9, setting_id: 0, t1_ps: 0.0, t2_ps: 12.0 },
                CoincidenceRecord { pulse_index: 1, setting_id: 5, t1_ps: 77.25, t2_ps: 3.0 },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let text = f.to_text().unwrap();
        let back = EventFile::parse(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_text().unwrap(), text);
    }

    #[test]
    fn rejects_unordered_and_unknown() {
        let mut f = sample();
        f.records.swap(0, 1);
        assert!(EventFile::parse(&f.to_text().unwrap()).is_err());
        let mut f = sample();
        f.records[2].setting_id = 99;
        let err = EventFile::parse(&f.to_text().unwrap()).unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.contains("unknown setting_id")));
    }

    #[test]
    fn rejects_garbage() {
        assert!(EventFile::parse("hello").is_err());
        let text = sample().to_text().unwrap().replace("400.000001", "inf");
        assert!(EventFile::parse(&text).is_err());
    }
}
