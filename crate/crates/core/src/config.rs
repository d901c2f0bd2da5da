//! JSON run configuration shared by the CLI and the browser demo.
//!
//! ```json
//! {
//!   "description": "free text, ignored",
//!   "game": { "n_orgs": 2, "local_iters": 1, "max_rounds": 1,
//!             "theta0": 10.0, "theta1": 10.0,
//!             "orgs": [ { "unit_revenue": 3.0, "compute_coeff": 0.4, "comm_cost": 0.1 }, ... ] },
//!   "strategies": ["mmzd", "alld"],
//!   "pinning": { "controller": 1, "phi": 0.5, "slice": 0, "search_slices": false,
//!                "phi_grid": [], "weights": null, "completion": "uniform", "alpha0": null },
//!   "sim": { "rounds": 20, "reps": 100, "seed": 7, "initial_state": "full",
//!            "window": 5, "tolerance": 0.01 },
//!   "grid": { "controllers": ["mmzd", "alld", "allc", "rand"],
//!             "opponents": ["alld", "allc", "rand", "tft", "mixed"] },
//!   "output": { "dir": null, "format": "csv" }
//! }
//! ```
//!
//! Only `game` is required. Organizations are numbered from 1 in the file
//! (`pinning.controller`) and from 0 in the library.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::mmzd::{self, Completion, PinningResult, PinningSpec};
use crate::sim::{seats_for, GridPlan, InitialState, SimPlan};
use crate::strategy::StrategyKind;
use crate::DEFAULT_ENUMERATION_CAP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub game: GameConfig,
    /// One kind per organization. Empty means `mmzd` at the controller and
    /// `alld` elsewhere.
    #[serde(default)]
    pub strategies: Vec<StrategyKind>,
    #[serde(default)]
    pub pinning: PinningSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PinningSection {
    /// 1-based organization index.
    pub controller: usize,
    pub phi: f64,
    pub slice: u32,
    /// Try every slice `0..=r` and keep the one pinning the highest welfare.
    pub search_slices: bool,
    /// Extra `phi` values to try alongside `phi`.
    pub phi_grid: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub completion: Completion,
    /// Fixed `alpha0`; when absent the strategy pins the highest feasible
    /// welfare (`alpha0 = alpha0_min`).
    pub alpha0: Option<f64>,
}

impl Default for PinningSection {
    fn default() -> Self {
        Self {
            controller: 1,
            phi: 0.01,
            slice: 0,
            search_slices: false,
            phi_grid: Vec::new(),
            weights: None,
            completion: Completion::Uniform,
            alpha0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub rounds: u32,
    pub reps: u32,
    pub seed: u64,
    pub initial_state: InitialState,
    /// Final rounds averaged for convergence and grid cells.
    pub window: u32,
    /// Allowed deviation from the pinned welfare in convergence reports.
    pub tolerance: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            rounds: 20,
            reps: 100,
            seed: 7,
            initial_state: InitialState::Full,
            window: 5,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub controllers: Vec<StrategyKind>,
    pub opponents: Vec<StrategyKind>,
}

impl Default for GridSection {
    fn default() -> Self {
        use StrategyKind::*;
        Self {
            controllers: vec![Mmzd, Alld, Allc, Rand],
            opponents: vec![Alld, Allc, Rand, Tft, Mixed],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config(
                "output.format",
                format!("expected csv or json, found {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Directory for result files; results go to stdout when absent.
    pub dir: Option<String>,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            format: OutputFormat::Csv,
        }
    }
}

impl RunConfig {
    pub fn new(game: GameConfig) -> Self {
        Self {
            description: None,
            game,
            strategies: Vec::new(),
            pinning: PinningSection::default(),
            sim: SimSection::default(),
            grid: GridSection::default(),
            output: OutputSection::default(),
        }
    }

    /// Parses and validates. Syntax and type errors carry the field path
    /// and the line/column of the offending token.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(
                if path == "." {
                    "config".to_string()
                } else {
                    path
                },
                inner.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        let n = self.game.n_orgs;
        if self.pinning.controller < 1 || self.pinning.controller > n {
            return Err(Error::config(
                "pinning.controller",
                format!("must be in 1..={n}"),
            ));
        }
        self.pinning_spec().validate(&self.game)?;
        for (i, &phi) in self.pinning.phi_grid.iter().enumerate() {
            if phi == 0.0 || !phi.is_finite() {
                return Err(Error::config(
                    format!("pinning.phi_grid[{i}]"),
                    "must be finite and nonzero",
                ));
            }
        }
        if let Some(a) = self.pinning.alpha0 {
            if !a.is_finite() {
                return Err(Error::config("pinning.alpha0", "must be finite"));
            }
        }
        if !self.strategies.is_empty() {
            if self.strategies.len() != n {
                return Err(Error::config(
                    "strategies",
                    format!(
                        "expected {n} entries (one per org), found {}",
                        self.strategies.len()
                    ),
                ));
            }
            for (i, k) in self.strategies.iter().enumerate() {
                if *k == StrategyKind::Mmzd && i + 1 != self.pinning.controller {
                    return Err(Error::config(
                        format!("strategies[{i}]"),
                        format!(
                            "mmzd is only allowed for the controller (org {})",
                            self.pinning.controller
                        ),
                    ));
                }
            }
        }
        let s = &self.sim;
        if s.rounds < 1 {
            return Err(Error::config("sim.rounds", "must be at least 1"));
        }
        if s.reps < 1 {
            return Err(Error::config("sim.reps", "must be at least 1"));
        }
        if s.window < 1 || s.window > s.rounds {
            return Err(Error::config(
                "sim.window",
                format!("must be in 1..={} (sim.rounds)", s.rounds),
            ));
        }
        if !(s.tolerance.is_finite() && s.tolerance >= 0.0) {
            return Err(Error::config("sim.tolerance", "must be finite and >= 0"));
        }
        if let InitialState::Profile(p) = &s.initial_state {
            self.game
                .check_profile(&p.clone().into())
                .map_err(|e| Error::config("sim.initial_state", e.to_string()))?;
        }
        if self.grid.controllers.is_empty() {
            return Err(Error::config("grid.controllers", "must not be empty"));
        }
        if self.grid.opponents.is_empty() {
            return Err(Error::config("grid.opponents", "must not be empty"));
        }
        if let Some(i) = self
            .grid
            .opponents
            .iter()
            .position(|k| *k == StrategyKind::Mmzd)
        {
            return Err(Error::config(
                format!("grid.opponents[{i}]"),
                "mmzd can only be played by the controller",
            ));
        }
        Ok(())
    }

    pub fn pinning_spec(&self) -> PinningSpec {
        let p = &self.pinning;
        PinningSpec {
            controller: p.controller.saturating_sub(1),
            phi: p.phi,
            slice: p.slice,
            weights: p.weights.clone(),
            completion: p.completion.clone(),
        }
    }

    /// Strategy kinds per organization with the default filled in.
    pub fn strategy_kinds(&self) -> Vec<StrategyKind> {
        if !self.strategies.is_empty() {
            return self.strategies.clone();
        }
        let mut kinds = vec![StrategyKind::Alld; self.game.n_orgs];
        kinds[self.pinning.controller - 1] = StrategyKind::Mmzd;
        kinds
    }

    /// `(slices, phis)` tried when searching for the best pinning strategy.
    pub fn search_space(&self) -> (Vec<u32>, Vec<f64>) {
        let slices = if self.pinning.search_slices {
            (0..=self.game.max_rounds).collect()
        } else {
            vec![self.pinning.slice]
        };
        let mut phis = vec![self.pinning.phi];
        phis.extend(self.pinning.phi_grid.iter().copied());
        (slices, phis)
    }

    /// Synthesizes at the configured `alpha0`, or at the best feasible one.
    pub fn resolve_pinning(&self) -> Result<PinningResult> {
        let spec = self.pinning_spec();
        match self.pinning.alpha0 {
            Some(a) => mmzd::synthesize_with_cap(&self.game, &spec, a, DEFAULT_ENUMERATION_CAP),
            None => {
                let (slices, phis) = self.search_space();
                mmzd::search_pinned_welfare(&self.game, &spec, &slices, &phis)
            }
        }
    }

    pub fn needs_pinning(&self) -> bool {
        self.strategy_kinds().contains(&StrategyKind::Mmzd)
    }

    pub fn sim_plan(&self, pinning: Option<&PinningResult>) -> Result<SimPlan> {
        Ok(SimPlan {
            cfg: self.game.clone(),
            seats: seats_for(&self.game, &self.strategy_kinds(), pinning)?,
            rounds: self.sim.rounds,
            reps: self.sim.reps,
            seed: self.sim.seed,
            initial_state: self.sim.initial_state.clone(),
        })
    }

    pub fn grid_plan(&self) -> GridPlan {
        GridPlan {
            rounds: self.sim.rounds,
            reps: self.sim.reps,
            seed: self.sim.seed,
            window: self.sim.window,
            initial_state: self.sim.initial_state.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const C2: &str = r#"{
        "game": { "n_orgs": 2, "local_iters": 1, "max_rounds": 1,
                  "theta0": 10.0, "theta1": 10.0,
                  "orgs": [ { "unit_revenue": 3.0, "compute_coeff": 0.4, "comm_cost": 0.1 },
                            { "unit_revenue": 3.0, "compute_coeff": 0.4, "comm_cost": 0.1 } ] },
        "pinning": { "phi": 0.5 }
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json_str(C2).unwrap();
        assert_eq!(cfg.sim, SimSection::default());
        assert_eq!(
            cfg.strategy_kinds(),
            vec![StrategyKind::Mmzd, StrategyKind::Alld]
        );
        assert_eq!(cfg.pinning_spec().controller, 0);
        let res = cfg.resolve_pinning().unwrap();
        assert!((res.alpha0 - 3.0 / 55.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::from_json_str(C2).unwrap();
        cfg.description = Some("x".into());
        cfg.sim.initial_state = InitialState::Profile(vec![1, 0]);
        cfg.pinning.completion = Completion::Weighted(vec![1.0, 2.0]);
        cfg.pinning.alpha0 = Some(0.05);
        let text = cfg.to_json_string();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = C2.replace(
            "\"compute_coeff\": 0.4, \"comm_cost\": 0.1 } ]",
            "\"compute_coeff\": \"x\", \"comm_cost\": 0.1 } ]",
        );
        let e = RunConfig::from_json_str(&bad).unwrap_err().to_string();
        assert!(e.starts_with("game.orgs[1].compute_coeff"), "{e}");
        assert!(e.contains("line 5"), "{e}");

        let bad = C2.replace("\"phi\": 0.5", "\"phi\": 0.5, \"gamma\": 1");
        let e = RunConfig::from_json_str(&bad).unwrap_err().to_string();
        assert!(e.contains("gamma"), "{e}");

        let bad = C2.replace("\"phi\": 0.5", "\"phi\": 0.5, \"controller\": 3");
        let e = RunConfig::from_json_str(&bad).unwrap_err().to_string();
        assert!(e.starts_with("pinning.controller"), "{e}");

        let bad = C2.replace(
            "\"phi\": 0.5 }",
            "\"phi\": 0.5 }, \"strategies\": [\"alld\", \"mmzd\"]",
        );
        let e = RunConfig::from_json_str(&bad).unwrap_err().to_string();
        assert!(e.starts_with("strategies[1]"), "{e}");

        let bad = C2.replace(
            "\"phi\": 0.5 }",
            "\"phi\": 0.5 }, \"sim\": { \"window\": 30 }",
        );
        let e = RunConfig::from_json_str(&bad).unwrap_err().to_string();
        assert!(e.starts_with("sim.window"), "{e}");

        let e = RunConfig::from_json_str("{ \"game\": ")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn zero_phi_rejected() {
        let bad = C2.replace("\"phi\": 0.5", "\"phi\": 0.0");
        assert!(matches!(
            RunConfig::from_json_str(&bad),
            Err(Error::ZeroPhi)
        ));
    }
}
