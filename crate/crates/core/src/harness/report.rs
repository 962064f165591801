use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;

/// Acceptance region of a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    /// Strictly greater.
    Above(f64),
    Within(f64, f64),
}

impl Bound {
    pub fn holds(self, v: f64) -> bool {
        match self {
            Bound::AtMost(t) => v <= t,
            Bound::AtLeast(t) => v >= t,
            Bound::Above(t) => v > t,
            Bound::Within(lo, hi) => lo <= v && v <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self { name: name.into(), value, bound, passed: bound.holds(value), note: None }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Root seed and number of derived per-path seeds of a stochastic phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub root: u64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub checks: Vec<Check>,
    /// Reported quantities that are not pass/fail.
    pub values: BTreeMap<String, serde_json::Value>,
    pub seeds: BTreeMap<String, SeedRange>,
    pub warnings: Vec<String>,
    /// Wall clock per phase; persisted separately so report digests stay stable.
    #[serde(skip)]
    pub phases: Vec<Phase>,
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// SHA-256 of the config's canonical JSON encoding. The output directory is
/// left out: it does not affect any result.
pub fn config_hash(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.outputs.directory.clear();
    let bytes = serde_json::to_vec(&c).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            version: version_string(),
            config: config.clone(),
            config_hash: config_hash(config),
            checks: Vec::new(),
            values: BTreeMap::new(),
            seeds: BTreeMap::new(),
            warnings: Vec::new(),
            phases: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn value(&mut self, key: impl Into<String>, v: impl Serialize) {
        self.values.insert(key.into(), serde_json::to_value(v).expect("value serializes"));
    }

    /// Runs `f`, recording its wall-clock time under `name`.
    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = std::time::Instant::now();
        let out = f(self);
        self.phases.push(Phase { name: name.into(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    /// Every pass flag agrees with its recorded value and bound.
    pub fn consistent(&self) -> bool {
        self.checks.iter().all(|c| c.passed == c.bound.holds(c.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Bound::AtMost(1.0).holds(1.0));
        assert!(!Bound::Above(0.0).holds(0.0));
        assert!(Bound::Within(-2.3, -1.7).holds(-2.0));
        assert!(!Bound::Within(-2.3, -1.7).holds(-1.5));
        assert!(!Bound::AtMost(1.0).holds(f64::NAN));
    }

    #[test]
    fn hash_tracks_the_config() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.mc.seed = Some(2);
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        b.mc.seed = a.mc.seed;
        b.outputs.directory = "elsewhere".into();
        assert_eq!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn flags_are_recomputable() {
        let mut r = RunReport::new("verify", &RunConfig::default());
        r.checks.push(Check::new("x", 0.5, Bound::AtMost(1.0)));
        r.checks.push(Check::new("y", 2.0, Bound::AtMost(1.0)));
        assert!(r.consistent() && !r.passed());
        let back: RunReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back.checks, r.checks);
    }
}
