//! Run configuration: defaults, flat `key=value` files, and flag overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use swiftagg::{DropoutTiming, FieldSpec, ProtocolParams};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format '{other}' (json|csv)")),
        }
    }
}

pub fn parse_timing(s: &str) -> Result<DropoutTiming, String> {
    match s {
        "before" | "before_sharing" => Ok(DropoutTiming::BeforeSharing),
        "after" | "after_sharing" => Ok(DropoutTiming::AfterSharing),
        "mid" | "mid_sequence" => Ok(DropoutTiming::MidSequence),
        other => Err(format!(
            "unknown dropout timing '{other}' (before|after|mid)"
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DropoutSpec {
    None,
    Ids(Vec<usize>),
    Rate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub model_len: usize,
    pub field_modulus: u64,
    pub seed: u64,
    pub dropout: DropoutSpec,
    pub drop_timing: DropoutTiming,
    pub adversary: Vec<usize>,
    pub server_curious: bool,
    pub repetitions: usize,
    pub format: OutputFormat,
    pub group_shuffle: bool,
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 12,
            t: 2,
            d: 1,
            model_len: 4,
            field_modulus: (1 << 31) - 1,
            seed: 0,
            dropout: DropoutSpec::None,
            drop_timing: DropoutTiming::BeforeSharing,
            adversary: Vec::new(),
            server_curious: false,
            repetitions: 1,
            format: OutputFormat::Json,
            group_shuffle: false,
            timing: false,
        }
    }
}

/// Comma separated user ids; empty string is the empty list.
pub fn parse_ids(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<usize>().map_err(|e| format!("'{x}': {e}")))
        .collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected boolean, got '{other}'")),
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("'{s}': {e}"))
}

impl RunConfig {
    /// Applies one `key=value` setting. Keys match the flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "n" => self.n = parse_num(value)?,
            "t" => self.t = parse_num(value)?,
            "d" => self.d = parse_num(value)?,
            "model-len" | "model_len" => self.model_len = parse_num(value)?,
            "field" => self.field_modulus = parse_num(value)?,
            "seed" => self.seed = parse_num(value)?,
            "drop" => self.dropout = DropoutSpec::Ids(parse_ids(value)?),
            "drop-rate" | "drop_rate" => self.dropout = DropoutSpec::Rate(parse_num(value)?),
            "drop-timing" | "drop_timing" => self.drop_timing = parse_timing(value)?,
            "adversary" => self.adversary = parse_ids(value)?,
            "server-curious" | "server_curious" => self.server_curious = parse_bool(value)?,
            "reps" => self.repetitions = parse_num(value)?,
            "format" => self.format = value.parse()?,
            "shuffle-groups" | "shuffle_groups" => self.group_shuffle = parse_bool(value)?,
            "timing" => self.timing = parse_bool(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file; `#` starts a comment.
    pub fn apply_file_contents(&mut self, name: &str, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let path = format!("{name}:{}", i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(&path, "expected key=value"))?;
            let k = k.trim();
            self.set(k, v.trim())
                .map_err(|m| ConfigError::new(format!("{path} ({k})"), m))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(&name, e))?;
        self.apply_file_contents(&name, &text)
    }

    /// Checks the config against protocol invariants.
    pub fn validate(&self) -> Result<ProtocolParams, ConfigError> {
        let field = FieldSpec::new(self.field_modulus).map_err(|e| ConfigError::new("field", e))?;
        let params = ProtocolParams::new(self.n, self.t, self.d, self.model_len, field)
            .map_err(|e| ConfigError::new("n/t/d", e))?;
        match &self.dropout {
            DropoutSpec::Ids(ids) => {
                let unique: BTreeSet<_> = ids.iter().collect();
                if unique.len() != ids.len() {
                    return Err(ConfigError::new("drop", "duplicate user ids"));
                }
                if ids.len() > self.d {
                    return Err(ConfigError::new(
                        "drop",
                        format!("{} victims exceed d={}", ids.len(), self.d),
                    ));
                }
                check_ids("drop", ids, self.n)?;
            }
            DropoutSpec::Rate(r) if !(0.0..=1.0).contains(r) => {
                return Err(ConfigError::new("drop-rate", format!("{r} not in [0, 1]")));
            }
            _ => {}
        }
        check_ids("adversary", &self.adversary, self.n)?;
        let unique: BTreeSet<_> = self.adversary.iter().collect();
        if unique.len() > self.t {
            return Err(ConfigError::new(
                "adversary",
                format!("{} colluders exceed t={}", unique.len(), self.t),
            ));
        }
        if self.repetitions == 0 {
            return Err(ConfigError::new("reps", "must be >= 1"));
        }
        Ok(params)
    }
}

fn check_ids(path: &str, ids: &[usize], n: usize) -> Result<(), ConfigError> {
    match ids.iter().find(|&&u| u == 0 || u > n) {
        Some(u) => Err(ConfigError::new(path, format!("user {u} outside [1, {n}]"))),
        None => Ok(()),
    }
}
