//! Scenario files, presets, replications and sweeps.

pub mod presets;
pub mod report;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belldiag::NoiseParams;
use crate::netmodel::{Channel, LinkModel};
use crate::protocol::{
    ranks_consecutive, ranks_nested, ranks_parallel, validate_config, ConfigError, RankError, TunnelConfig,
};
use crate::sim::ChainParams;

pub use presets::{preset, preset_names, Preset, PRESETS};
pub use report::{
    aggregate, run_replications, sweep, write_csv, Aggregate, CsvRow, ReplicationError, RunResult, SweepParam,
    CSV_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Parallel,
    Nested,
    Consecutive,
}

impl Strategy {
    pub fn ranks(self, n: usize) -> Result<Vec<u32>, RankError> {
        match self {
            Strategy::Parallel => ranks_parallel(n),
            Strategy::Nested => ranks_nested(n),
            Strategy::Consecutive => ranks_consecutive(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default = "defaults::attempt_period")]
    pub attempt_period_s: f64,
    #[serde(default = "defaults::success_prob")]
    pub success_prob: f64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec { attempt_period_s: defaults::attempt_period(), success_prob: defaults::success_prob() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default = "defaults::p0")]
    pub p0: f64,
    /// Memory coherence time; `null` disables dephasing and the cutoff.
    #[serde(default = "defaults::tc")]
    pub tc_s: Option<f64>,
    #[serde(default = "defaults::p_err")]
    pub p_err: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { p0: defaults::p0(), tc_s: defaults::tc(), p_err: defaults::p_err() }
    }
}

/// A scenario as written on disk; every field but `purification` and one of
/// `strategy`/`ranks` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub nodes: Option<usize>,
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub ranks: Option<Vec<u32>>,
    pub purification: Vec<u32>,
    #[serde(default = "defaults::pairs")]
    pub pairs: u64,
    #[serde(default = "defaults::link_length")]
    pub link_length_km: f64,
    #[serde(default = "defaults::speed")]
    pub classical_speed_mps: f64,
    #[serde(default)]
    pub link: LinkSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "defaults::modes")]
    pub modes: usize,
    #[serde(default = "defaults::yes")]
    pub cutoff: bool,
    #[serde(default = "defaults::yes")]
    pub strict: bool,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::runs")]
    pub runs: usize,
    #[serde(default = "defaults::max_sim_time")]
    pub max_sim_time_s: f64,
}

mod defaults {
    pub const NODES: usize = 9;

    pub fn attempt_period() -> f64 {
        10e-6
    }
    pub fn success_prob() -> f64 {
        0.1
    }
    pub fn p0() -> f64 {
        0.01334
    }
    pub fn tc() -> Option<f64> {
        Some(5e-3)
    }
    pub fn p_err() -> f64 {
        0.005
    }
    pub fn pairs() -> u64 {
        100
    }
    pub fn link_length() -> f64 {
        15.0
    }
    pub fn speed() -> f64 {
        2.0e8
    }
    pub fn modes() -> usize {
        16
    }
    pub fn yes() -> bool {
        true
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn runs() -> usize {
        31
    }
    pub fn max_sim_time() -> f64 {
        2.0
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: at `{field}`: {message}")]
    Schema { origin: String, field: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl Scenario {
    /// Parses JSON text, naming the offending field on schema errors, and
    /// validates the result.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
            origin: origin.to_string(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        s.resolve()?;
        Ok(s)
    }

    /// Fills in the node count and rank vector and checks every invariant.
    pub fn resolve(&mut self) -> Result<(), ScenarioError> {
        let ranks = match (&self.strategy, &self.ranks) {
            (Some(st), Some(r)) => {
                if st.ranks(r.len()).as_ref() != Ok(r) {
                    return Err(ScenarioError::Invalid(format!("`ranks` {r:?} do not match strategy {st:?}")));
                }
                r.clone()
            }
            (None, None) => return Err(ScenarioError::Invalid("one of `strategy` or `ranks` is required".into())),
            (Some(st), None) => st.ranks(self.nodes.unwrap_or(defaults::NODES))?,
            (None, Some(r)) => r.clone(),
        };
        if let Some(n) = self.nodes {
            if n != ranks.len() {
                return Err(ScenarioError::Invalid(format!(
                    "`nodes` is {n} but the rank vector has {} entries",
                    ranks.len()
                )));
            }
        }
        self.nodes = Some(ranks.len());
        self.ranks = Some(ranks);
        self.check_numbers()?;
        validate_config(&self.tunnel())?;
        Ok(())
    }

    fn check_numbers(&self) -> Result<(), ScenarioError> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ScenarioError::Invalid(format!("`{what}` must be positive and finite, got {v}")))
            }
        };
        let unit = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ScenarioError::Invalid(format!("`{what}` must lie in [0, 1], got {v}")))
            }
        };
        positive(self.link_length_km, "link_length_km")?;
        positive(self.classical_speed_mps, "classical_speed_mps")?;
        positive(self.link.attempt_period_s, "link.attempt_period_s")?;
        positive(self.max_sim_time_s, "max_sim_time_s")?;
        if !(self.link.success_prob > 0.0 && self.link.success_prob <= 1.0) {
            return Err(ScenarioError::Invalid(format!(
                "`link.success_prob` must lie in (0, 1], got {}",
                self.link.success_prob
            )));
        }
        unit(self.noise.p0, "noise.p0")?;
        unit(self.noise.p_err, "noise.p_err")?;
        if let Some(tc) = self.noise.tc_s {
            positive(tc, "noise.tc_s")?;
        }
        if self.modes == 0 {
            return Err(ScenarioError::Invalid("`modes` must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(ScenarioError::Invalid("`runs` must be at least 1".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| match self.strategy {
            Some(s) => format!("{s:?}"),
            None => "custom".into(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.ranks.as_ref().map_or(self.nodes.unwrap_or(defaults::NODES), Vec::len)
    }

    /// Tunnel configuration; call after [`Scenario::resolve`].
    pub fn tunnel(&self) -> TunnelConfig {
        let ranks = self.ranks.clone().expect("scenario is resolved");
        TunnelConfig::new(ranks, self.purification.clone(), self.pairs)
    }

    pub fn params(&self) -> ChainParams {
        let noise = NoiseParams::new(self.noise.p0, self.noise.tc_s, self.noise.p_err).expect("scenario is validated");
        ChainParams {
            channel: Channel { link_length_m: self.link_length_km * 1e3, speed_mps: self.classical_speed_mps },
            link: LinkModel { attempt_period: self.link.attempt_period_s, success_prob: self.link.success_prob },
            modes: self.modes,
            noise,
            cutoff: self.cutoff,
            strict: self.strict,
            max_sim_time: self.max_sim_time_s,
        }
    }

    /// Replaces the strategy, purification vector and name with a preset's.
    pub fn with_preset(&self, p: &Preset) -> Result<Self, ScenarioError> {
        let base = p.scenario();
        // Generated ranks follow this chain's length; explicit ones carry their own.
        let generated = base.strategy.is_some();
        let mut s = Scenario {
            name: base.name,
            strategy: base.strategy,
            ranks: if generated { None } else { base.ranks },
            nodes: if generated { Some(self.n_nodes()) } else { None },
            purification: base.purification,
            ..self.clone()
        };
        s.resolve()?;
        Ok(s)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    Scenario::from_json(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = Scenario::from_json(r#"{"strategy": "nested", "purification": [0, 1, 1, 0]}"#, "inline").unwrap();
        assert_eq!(s.ranks.as_deref(), Some(&[3, 0, 1, 0, 2, 0, 1, 0, 3][..]));
        assert_eq!(s.nodes, Some(9));
        assert_eq!(s.pairs, 100);
        assert_eq!(s.runs, 31);
        assert_eq!(s.noise.tc_s, Some(5e-3));
        let p = s.params();
        assert!((p.channel.hop_latency() - 75e-6).abs() < 1e-15);
        assert_eq!(p.modes, 16);
    }

    #[test]
    fn null_coherence_time_means_ideal_memory() {
        let s =
            Scenario::from_json(r#"{"strategy": "parallel", "purification": [0, 0], "noise": {"tc_s": null}}"#, "x")
                .unwrap();
        assert_eq!(s.noise.tc_s, None);
        assert_eq!(s.params().noise.dephase_rate, 0.0);
        assert_eq!(s.noise.p_err, 0.005);
    }

    #[test]
    fn resolved_scenarios_round_trip() {
        let s = Scenario::from_json(r#"{"strategy": "consecutive", "nodes": 5, "purification": [0, 0, 0, 0]}"#, "x")
            .unwrap();
        let echoed = serde_json::to_string(&s).unwrap();
        assert_eq!(Scenario::from_json(&echoed, "echo").unwrap(), s);
    }

    #[test]
    fn missing_purification_is_rejected() {
        let err = Scenario::from_json(r#"{"strategy": "parallel"}"#, "x").unwrap_err();
        assert!(err.to_string().contains("purification"), "{err}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = Scenario::from_json(r#"{"strategy": "parallel", "purification": [0, 0], "noise": {"p_er": 1}}"#, "x")
            .unwrap_err();
        match err {
            ScenarioError::Schema { field, .. } => assert_eq!(field, "noise.p_er"),
            other => panic!("{other}"),
        }
        let err = Scenario::from_json(
            r#"{"strategy": "parallel", "purification": [0, 0], "link": {"success_prob": "high"}}"#,
            "x",
        )
        .unwrap_err();
        match err {
            ScenarioError::Schema { field, .. } => assert_eq!(field, "link.success_prob"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn inconsistent_scenarios_are_rejected() {
        for bad in [
            r#"{"strategy": "nested", "nodes": 8, "purification": [0, 0, 0, 0]}"#,
            r#"{"strategy": "nested", "purification": [0, 1]}"#,
            r#"{"ranks": [3, 0, 1, 2, 3], "strategy": "nested", "purification": [0, 0, 0, 0]}"#,
            r#"{"purification": [0, 0]}"#,
            r#"{"ranks": [1, 0, 1], "nodes": 4, "purification": [0, 0]}"#,
            r#"{"strategy": "parallel", "purification": [0, 0], "noise": {"p0": 1.5}}"#,
            r#"{"strategy": "parallel", "purification": [0, 0], "runs": 0}"#,
        ] {
            assert!(Scenario::from_json(bad, "x").is_err(), "{bad}");
        }
    }
}
