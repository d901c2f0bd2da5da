//! Browser bindings. Each export takes a run configuration as JSON text and
//! returns JSON text; the `*_json` functions do the work and are testable
//! natively.

use serde::Serialize;
use silo_games::config::RunConfig;
use silo_games::mmzd::{self, AlphaBounds};
use silo_games::sim::{self, convergence_report, ConvergenceReport};
use silo_games::{analyze_dilemma, PinningSpec, DEFAULT_ENUMERATION_CAP};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn analyze_json(config: &str) -> Result<String, String> {
    let cfg = RunConfig::from_json_str(config).map_err(err)?;
    let report = analyze_dilemma(&cfg.game).map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

/// Bounds for every slice `0..=r` at the given `phi`.
pub fn bounds_json(config: &str, phi: f64) -> Result<String, String> {
    let cfg = RunConfig::from_json_str(config).map_err(err)?;
    let base = cfg.pinning_spec();
    let all = (0..=cfg.game.max_rounds)
        .map(|slice| {
            let spec = PinningSpec {
                phi,
                slice,
                ..base.clone()
            };
            mmzd::bounds_for(&cfg.game, &spec, DEFAULT_ENUMERATION_CAP)
        })
        .collect::<Result<Vec<AlphaBounds>, _>>()
        .map_err(err)?;
    serde_json::to_string(&all).map_err(err)
}

#[derive(Serialize)]
struct WelfareTrace {
    mean_welfare: Vec<f64>,
    std_welfare: Vec<f64>,
    running_mean: Vec<f64>,
    pinned_welfare: Option<f64>,
    convergence: Option<ConvergenceReport>,
}

/// Per-round mean welfare of the configured strategies.
pub fn trajectory_json(config: &str, seed: u64, rounds: u32, reps: u32) -> Result<String, String> {
    let mut cfg = RunConfig::from_json_str(config).map_err(err)?;
    cfg.sim.seed = seed;
    cfg.sim.rounds = rounds;
    cfg.sim.reps = reps;
    cfg.sim.window = cfg.sim.window.min(rounds);
    cfg.validate().map_err(err)?;
    let pinning = if cfg.needs_pinning() {
        Some(cfg.resolve_pinning().map_err(err)?)
    } else {
        None
    };
    let traj = sim::run(&cfg.sim_plan(pinning.as_ref()).map_err(err)?).map_err(err)?;
    let convergence = pinning
        .as_ref()
        .map(|p| convergence_report(&traj, p.pinned_welfare, cfg.sim.window, cfg.sim.tolerance))
        .transpose()
        .map_err(err)?;
    serde_json::to_string(&WelfareTrace {
        mean_welfare: traj.mean_welfare,
        std_welfare: traj.std_welfare,
        running_mean: traj.running_mean,
        pinned_welfare: pinning.map(|p| p.pinned_welfare),
        convergence,
    })
    .map_err(err)
}

#[wasm_bindgen]
pub fn analyze(config: &str) -> Result<String, JsError> {
    analyze_json(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bounds(config: &str, phi: f64) -> Result<String, JsError> {
    bounds_json(config, phi).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn trajectory(config: &str, seed: u64, rounds: u32, reps: u32) -> Result<String, JsError> {
    trajectory_json(config, seed, rounds, reps).map_err(|e| JsError::new(&e))
}
