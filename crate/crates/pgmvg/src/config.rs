//! Run configuration: every tunable of the clustering pipeline in one struct.
//!
//! Defaults follow the reference operating point the pipeline was tuned at;
//! [`RunConfig::validate`] turns a raw config into a [`ValidatedConfig`] that
//! the engine accepts, so invalid combinations are rejected up front rather
//! than deep inside an iteration.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key:?}: {value:?}")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    BadLine { line: usize, text: String },
}

/// All pipeline tunables. Construct with [`RunConfig::default`] and override
/// fields, or parse a `key = value` file with [`RunConfig::from_kv_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Neighbor count for the first pass.
    pub k_init: usize,
    /// Increment applied to k after each iteration.
    pub k_step: usize,
    /// Hard ceiling on k; reaching it stops the run.
    pub k_max: usize,
    /// Merge rule: a secondary score mean above this always merges.
    pub th_high: f64,
    /// Merge rule: overlap only counts when the primary mean exceeds this.
    pub th_low: f64,
    /// Slack added to the overlap comparison between the two fitted bands.
    pub epsilon: f64,
    /// Connected groups smaller than this stay out of the graph.
    pub min_cluster_size: usize,
    /// Stop when newly placed nodes fall below this fraction of active nodes.
    pub stop_new_node_frac: f64,
    /// ...and the relative change in class count falls below this fraction.
    pub stop_cluster_delta_frac: f64,
    /// Outlier filter looks at the similarity of this-ranked neighbor.
    pub outlier_rank: usize,
    /// Rows whose ranked-neighbor similarity exceeds this are dropped.
    pub outlier_threshold: f64,
    /// Lower clamp for fitted standard deviations.
    pub sigma_floor: f64,
    /// Iteration cap for the two-component fit.
    pub em_max_iters: usize,
    /// Relative log-likelihood change that counts as converged.
    pub em_tol: f64,
    /// Seed recorded in outputs; the pipeline itself is deterministic, so this
    /// only matters to consumers that derive randomized work from a run.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k_init: 5,
            k_step: 5,
            k_max: 100,
            th_high: 0.4,
            th_low: 0.2,
            epsilon: 0.05,
            min_cluster_size: 10,
            stop_new_node_frac: 0.01,
            stop_cluster_delta_frac: 0.01,
            outlier_rank: 500,
            outlier_threshold: 0.8,
            sigma_floor: 1e-4,
            em_max_iters: 200,
            em_tol: 1e-6,
            seed: 0,
        }
    }
}

/// A config that passed [`RunConfig::validate`]. The engine only accepts this
/// type, so every run is known-well-formed.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(RunConfig);

impl ValidatedConfig {
    pub fn get(&self) -> &RunConfig {
        &self.0
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = RunConfig;

    fn deref(&self) -> &RunConfig {
        &self.0
    }
}

impl RunConfig {
    pub fn validate(self) -> Result<ValidatedConfig, ConfigError> {
        fn bad(field: &'static str, reason: String) -> ConfigError {
            ConfigError::Invalid { field, reason }
        }
        if self.k_init == 0 {
            return Err(bad("k_init", "must be at least 1".into()));
        }
        if self.k_step == 0 {
            return Err(bad("k_step", "must be at least 1".into()));
        }
        if self.k_max < self.k_init {
            return Err(bad(
                "k_max",
                format!("{} is below k_init {}", self.k_max, self.k_init),
            ));
        }
        for (field, v) in [
            ("th_high", self.th_high),
            ("th_low", self.th_low),
            ("outlier_threshold", self.outlier_threshold),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(bad(field, format!("{v} outside [0, 1]")));
            }
        }
        if self.th_low >= self.th_high {
            return Err(bad(
                "th_low",
                format!("{} must be below th_high {}", self.th_low, self.th_high),
            ));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(bad("epsilon", format!("{} is negative", self.epsilon)));
        }
        if self.min_cluster_size < 2 {
            return Err(bad(
                "min_cluster_size",
                format!("{} leaves too few pairs to score", self.min_cluster_size),
            ));
        }
        for (field, v) in [
            ("stop_new_node_frac", self.stop_new_node_frac),
            ("stop_cluster_delta_frac", self.stop_cluster_delta_frac),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(bad(field, format!("{v} outside [0, 1]")));
            }
        }
        if self.outlier_rank == 0 {
            return Err(bad("outlier_rank", "must be at least 1".into()));
        }
        if !self.sigma_floor.is_finite() || self.sigma_floor <= 0.0 {
            return Err(bad(
                "sigma_floor",
                format!("{} must be positive", self.sigma_floor),
            ));
        }
        if self.em_max_iters == 0 {
            return Err(bad("em_max_iters", "must be at least 1".into()));
        }
        if !self.em_tol.is_finite() || self.em_tol <= 0.0 {
            return Err(bad("em_tol", format!("{} must be positive", self.em_tol)));
        }
        Ok(ValidatedConfig(self))
    }

    /// Parses `key = value` lines. `#` starts a comment, blank lines are
    /// skipped, unknown keys and unparsable values are errors. Keys not
    /// present keep their default.
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let pairs = parse_kv_text(text)?;
        let mut cfg = RunConfig::default();
        for (key, value) in &pairs {
            cfg.set_key(key, value)?;
        }
        Ok(cfg)
    }

    fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        match key {
            "k_init" => self.k_init = num(key, value)?,
            "k_step" => self.k_step = num(key, value)?,
            "k_max" => self.k_max = num(key, value)?,
            "th_high" => self.th_high = num(key, value)?,
            "th_low" => self.th_low = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "min_cluster_size" => self.min_cluster_size = num(key, value)?,
            "stop_new_node_frac" => self.stop_new_node_frac = num(key, value)?,
            "stop_cluster_delta_frac" => self.stop_cluster_delta_frac = num(key, value)?,
            "outlier_rank" => self.outlier_rank = num(key, value)?,
            "outlier_threshold" => self.outlier_threshold = num(key, value)?,
            "sigma_floor" => self.sigma_floor = num(key, value)?,
            "em_max_iters" => self.em_max_iters = num(key, value)?,
            "em_tol" => self.em_tol = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// The config as sorted `key = value` lines, parseable by
    /// [`RunConfig::from_kv_text`].
    pub fn to_kv_text(&self) -> String {
        let mut map = BTreeMap::new();
        map.insert("k_init", self.k_init.to_string());
        map.insert("k_step", self.k_step.to_string());
        map.insert("k_max", self.k_max.to_string());
        map.insert("th_high", self.th_high.to_string());
        map.insert("th_low", self.th_low.to_string());
        map.insert("epsilon", self.epsilon.to_string());
        map.insert("min_cluster_size", self.min_cluster_size.to_string());
        map.insert("stop_new_node_frac", self.stop_new_node_frac.to_string());
        map.insert(
            "stop_cluster_delta_frac",
            self.stop_cluster_delta_frac.to_string(),
        );
        map.insert("outlier_rank", self.outlier_rank.to_string());
        map.insert("outlier_threshold", self.outlier_threshold.to_string());
        map.insert("sigma_floor", self.sigma_floor.to_string());
        map.insert("em_max_iters", self.em_max_iters.to_string());
        map.insert("em_tol", self.em_tol.to_string());
        map.insert("seed", self.seed.to_string());
        let mut out = String::new();
        for (k, v) in map {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

/// Shared `key = value` line parser, also used for synthesis specs.
/// Returns pairs in file order; duplicate keys keep the last occurrence.
pub(crate) fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::BadLine {
                line: lineno + 1,
                text: raw.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::BadLine {
                line: lineno + 1,
                text: raw.to_string(),
            });
        }
        if let Some(slot) = out.iter_mut().find(|(k, _)| *k == key) {
            slot.1 = value;
        } else {
            out.push((key, value));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.k_init, 5);
        assert_eq!(cfg.k_step, 5);
        assert_eq!(cfg.k_max, 100);
        assert_eq!(cfg.th_high, 0.4);
        assert_eq!(cfg.th_low, 0.2);
        assert_eq!(cfg.min_cluster_size, 10);
        assert_eq!(cfg.outlier_rank, 500);
        assert_eq!(cfg.outlier_threshold, 0.8);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn thresholds_must_be_ordered() {
        let cfg = RunConfig {
            th_low: 0.5,
            th_high: 0.4,
            ..RunConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "th_low", .. }));
    }

    #[test]
    fn tiny_min_cluster_size_rejected() {
        let cfg = RunConfig {
            min_cluster_size: 1,
            ..RunConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Invalid {
                field: "min_cluster_size",
                ..
            }
        ));
    }

    #[test]
    fn k_max_below_k_init_rejected() {
        let cfg = RunConfig {
            k_init: 50,
            k_max: 10,
            ..RunConfig::default()
        };
        assert!(matches!(
            cfg.validate().unwrap_err(),
            ConfigError::Invalid { field: "k_max", .. }
        ));
    }

    #[test]
    fn kv_roundtrip() {
        let cfg = RunConfig {
            k_init: 7,
            th_high: 0.35,
            seed: 42,
            ..RunConfig::default()
        };
        let text = cfg.to_kv_text();
        let back = RunConfig::from_kv_text(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn kv_comments_and_blanks() {
        let text = "# a comment\n\nk_init = 9   # trailing\n  k_max=120\n";
        let cfg = RunConfig::from_kv_text(text).unwrap();
        assert_eq!(cfg.k_init, 9);
        assert_eq!(cfg.k_max, 120);
        assert_eq!(cfg.k_step, 5);
    }

    #[test]
    fn kv_unknown_key() {
        let err = RunConfig::from_kv_text("nope = 1").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("nope".into()));
    }

    #[test]
    fn kv_bad_value() {
        let err = RunConfig::from_kv_text("k_init = soon").unwrap_err();
        assert_eq!(
            err,
            ConfigError::BadValue {
                key: "k_init".into(),
                value: "soon".into()
            }
        );
    }

    #[test]
    fn kv_bad_line() {
        let err = RunConfig::from_kv_text("just words").unwrap_err();
        assert!(matches!(err, ConfigError::BadLine { line: 1, .. }));
    }

    #[test]
    fn duplicate_key_keeps_last() {
        let cfg = RunConfig::from_kv_text("k_init = 3\nk_init = 8\n").unwrap();
        assert_eq!(cfg.k_init, 8);
    }
}
