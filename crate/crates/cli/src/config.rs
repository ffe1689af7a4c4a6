use std::path::Path;

use pnl_core::datagen::Scenario;
use pnl_core::estimation::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// One JSON document describing a run: the synthetic scenario (needed by
/// `generate`) and the training settings (defaults apply when absent).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
        cfg.train.validate()?;
        if let Some(sc) = &cfg.scenario {
            sc.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Replaces the scenario seed and the training seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.train.seed = seed;
            if let Some(sc) = self.scenario.as_mut() {
                sc.seed = seed;
            }
        }
        self
    }

    pub fn require_scenario(&self) -> CliResult<&Scenario> {
        self.scenario
            .as_ref()
            .ok_or_else(|| CliError::BadInput("config has no \"scenario\" section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_seed_override() {
        let p = Path::new("cfg.json");
        let cfg = RunConfig::from_json("{}", p).unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert!(cfg.require_scenario().is_err());

        let text = r#"{"scenario": {"seed": 1, "n": 2, "t": 600,
            "sources": [{"kind": "uniform"}, {"kind": "laplace"}],
            "distortions": [{"family": "cubic", "c": 0.3}, {"family": "identity"}]},
            "train": {"max_outer_iters": 5}}"#;
        let cfg = RunConfig::from_json(text, p).unwrap().with_seed(Some(9));
        assert_eq!(cfg.train.max_outer_iters, 5);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.require_scenario().unwrap().seed, 9);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let p = Path::new("cfg.json");
        let err = RunConfig::from_json("{\n\"train\": {\n\"w_step\": oops}}", p).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 3, .. }), "{err}");
        let err = RunConfig::from_json("{\"bogus\": 1}", p).unwrap_err();
        assert!(matches!(err, CliError::Parse { .. }));
        let err = RunConfig::from_json("{\"train\": {\"w_step\": -1}}", p).unwrap_err();
        assert!(matches!(err, CliError::Core(_)));
    }
}
