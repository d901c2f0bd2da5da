use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use silo_games::config::{OutputFormat, RunConfig};
use silo_games::markov::{build_transition_matrix, expected_value, stationary_distribution};
use silo_games::mmzd::{self, aggregate_alpha0_bounds, AlphaBounds};
use silo_games::output::{
    fmt_num, grid_csv, grid_panels, stationary_csv, strategy_file, trajectory_csv,
    trajectory_summary_csv,
};
use silo_games::sim::{self, convergence_report, strategy_grid};
use silo_games::strategy::Strategy;
use silo_games::{analyze_dilemma, Error, PinningResult, StateSpace, DEFAULT_ENUMERATION_CAP};

const THREADS_ENV: &str = "SILO_GAMES_THREADS";

#[derive(Parser)]
#[command(
    name = "silo-games",
    version,
    about = "Cross-silo FL public goods game: dilemma analysis, welfare pinning and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dilemma condition, pure Nash equilibrium and full-participation welfare.
    Analyze(Common),
    /// Feasible alpha0 interval for the pinning strategy.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Scan participation totals instead of enumerating states.
        #[arg(long)]
        aggregate: bool,
    },
    /// Build the pinning strategy and write it as a strategy file.
    Synthesize(Common),
    /// Stationary distribution(s) of the chain induced by the configured strategies.
    Stationary(Common),
    /// Monte-Carlo trajectories of the configured strategies.
    Simulate(Common),
    /// Controller-by-opponent welfare grid.
    Grid(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    phi: Option<f64>,
    /// Fixes the slice and turns off slice search.
    #[arg(long)]
    slice: Option<u32>,
    /// Write result files here instead of printing to stdout.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
}

impl Common {
    fn load(&self) -> anyhow::Result<(RunConfig, Sink)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.sim.seed = s;
        }
        if let Some(r) = self.rounds {
            cfg.sim.rounds = r;
            cfg.sim.window = cfg.sim.window.min(r.max(1));
        }
        if let Some(r) = self.reps {
            cfg.sim.reps = r;
        }
        if let Some(p) = self.phi {
            cfg.pinning.phi = p;
            cfg.pinning.phi_grid.clear();
        }
        if let Some(g) = self.slice {
            cfg.pinning.slice = g;
            cfg.pinning.search_slices = false;
        }
        if let Some(f) = &self.format {
            cfg.output.format = f.parse()?;
        }
        cfg.validate()?;
        let dir = self
            .out
            .clone()
            .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
        Ok((
            cfg.clone(),
            Sink {
                dir,
                format: cfg.output.format,
            },
        ))
    }
}

/// Where results go: files in a directory, or stdout.
struct Sink {
    dir: Option<PathBuf>,
    format: OutputFormat,
}

impl Sink {
    fn ext(&self) -> &'static str {
        match self.format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }

    /// Writes `name.<ext>` into the output directory, or prints it.
    fn emit(&self, name: &str, body: &str) -> anyhow::Result<()> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(format!("{name}.{}", self.ext()));
                fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{body}"),
        }
        Ok(())
    }

    fn emit_json(&self, name: &str, value: &serde_json::Value) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(name, &text)
    }

    fn is_json(&self) -> bool {
        self.format == OutputFormat::Json
    }
}

fn key_value_csv(rows: &[(&str, String)]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["key", "value"]).expect("csv write");
    for (k, v) in rows {
        w.write_record([*k, v.as_str()]).expect("csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

fn analyze(common: &Common) -> anyhow::Result<()> {
    let (cfg, sink) = common.load()?;
    let report = analyze_dilemma(&cfg.game)?;
    if sink.is_json() {
        return sink.emit_json("analyze", &serde_json::to_value(&report)?);
    }
    let mut rows = vec![
        ("is_dilemma", report.is_dilemma.to_string()),
        ("nash_profile", report.nash_profile.to_string()),
        ("nash_welfare", fmt_num(report.nash_welfare)),
        (
            "full_participation_welfare",
            fmt_num(report.full_participation_welfare),
        ),
        (
            "premise_positive_model_value",
            report.premise_positive_model_value.to_string(),
        ),
        (
            "certification",
            serde_json::to_string(&report.certification)?,
        ),
    ];
    let conditions: Vec<String> = report
        .condition_holds_per_org
        .iter()
        .map(|c| c.to_string())
        .collect();
    rows.push(("condition_holds_per_org", conditions.join(" ")));
    sink.emit("analyze", &key_value_csv(&rows))
}

fn bounds_row(b: &AlphaBounds) -> Vec<String> {
    vec![
        (b.controller + 1).to_string(),
        fmt_num(b.phi),
        b.slice.to_string(),
        fmt_num(b.alpha0_min),
        fmt_num(b.alpha0_max),
        b.feasible.to_string(),
        if b.feasible {
            fmt_num(-b.alpha0_min)
        } else {
            String::new()
        },
        format!("{:?}", b.mode).to_lowercase(),
        join_states(&b.binding_min),
        join_states(&b.binding_max),
    ]
}

fn join_states(s: &[silo_games::StateIndex]) -> String {
    s.iter()
        .map(|j| j.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Returns whether any candidate was feasible.
fn bounds(common: &Common, aggregate: bool) -> anyhow::Result<bool> {
    let (cfg, sink) = common.load()?;
    let spec = cfg.pinning_spec();
    let (slices, phis) = cfg.search_space();
    let mut all = Vec::new();
    for &phi in &phis {
        for &slice in &slices {
            let s = silo_games::PinningSpec {
                phi,
                slice,
                ..spec.clone()
            };
            let b = if aggregate {
                if !s.has_unit_weights() {
                    return Err(Error::InvalidConfig {
                        field: "pinning.weights".into(),
                        message: "aggregate bounds need unit weights".into(),
                    }
                    .into());
                }
                s.validate(&cfg.game)?;
                aggregate_alpha0_bounds(&cfg.game, phi, slice, s.controller)?
            } else {
                mmzd::bounds_for(&cfg.game, &s, DEFAULT_ENUMERATION_CAP)?
            };
            all.push(b);
        }
    }
    let any = all.iter().any(|b| b.feasible);
    if sink.is_json() {
        sink.emit_json("bounds", &serde_json::to_value(&all)?)?;
    } else {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record([
            "controller",
            "phi",
            "slice",
            "alpha0_min",
            "alpha0_max",
            "feasible",
            "max_pinned_welfare",
            "mode",
            "binding_min",
            "binding_max",
        ])?;
        for b in &all {
            w.write_record(bounds_row(b))?;
        }
        sink.emit("bounds", &String::from_utf8(w.into_inner()?)?)?;
    }
    Ok(any)
}

fn synthesize(common: &Common) -> anyhow::Result<()> {
    let (cfg, sink) = common.load()?;
    let res = cfg.resolve_pinning()?;
    if sink.is_json() {
        let body = json!({
            "cfg_hash": silo_games::output::cfg_hash(&cfg.game),
            "controller": res.spec.controller + 1,
            "phi": res.spec.phi,
            "slice": res.spec.slice,
            "alpha0": res.alpha0,
            "pinned_welfare": res.pinned_welfare,
            "bounds": res.bounds,
            "completion": res.spec.completion,
            "p_slice": res.slice_probabilities(),
        });
        sink.emit_json("strategy", &body)
    } else {
        sink.emit("strategy", &strategy_file(&cfg.game, &res))
    }
}

fn pinning_if_needed(cfg: &RunConfig) -> anyhow::Result<Option<PinningResult>> {
    Ok(if cfg.needs_pinning() {
        Some(cfg.resolve_pinning()?)
    } else {
        None
    })
}

fn stationary(common: &Common) -> anyhow::Result<()> {
    let (cfg, sink) = common.load()?;
    let pinning = pinning_if_needed(&cfg)?;
    let plan = cfg.sim_plan(pinning.as_ref())?;
    let strategies: Vec<Strategy> = plan
        .seats
        .iter()
        .enumerate()
        .map(|(i, seat)| match seat {
            sim::Seat::Fixed(s) => Ok(s.clone()),
            sim::Seat::Mixed => Err(Error::InvalidConfig {
                field: format!("strategies[{i}]"),
                message: "mixed seats have no fixed transition matrix; use simulate".into(),
            }),
        })
        .collect::<Result<_, _>>()?;
    let tm = build_transition_matrix(&strategies, &cfg.game, DEFAULT_ENUMERATION_CAP)?;
    let res = stationary_distribution(&tm)?;
    let space = StateSpace::for_config(&cfg.game)?;
    let welfare: Vec<f64> = space
        .profiles()
        .map(|p| cfg.game.social_welfare(&p))
        .collect();
    if sink.is_json() {
        let expected = res
            .distributions
            .iter()
            .map(|v| expected_value(v, &welfare))
            .collect::<Result<Vec<_>, _>>()?;
        let body = json!({
            "multiplicity": res.multiplicity,
            "method": res.method,
            "flagged": res.flagged,
            "rank": res.rank,
            "distributions": res.distributions,
            "expected_welfare": expected,
            "pinned_welfare": pinning.as_ref().map(|p| p.pinned_welfare),
        });
        return sink.emit_json("stationary", &body);
    }
    for k in 0..res.multiplicity {
        let name = if res.multiplicity == 1 {
            "stationary".to_string()
        } else {
            format!("stationary_{}", k + 1)
        };
        sink.emit(&name, &stationary_csv(&space, &res, k))?;
    }
    Ok(())
}

fn simulate(common: &Common) -> anyhow::Result<()> {
    let (cfg, sink) = common.load()?;
    let pinning = pinning_if_needed(&cfg)?;
    let plan = cfg.sim_plan(pinning.as_ref())?;
    let traj = sim::run(&plan)?;
    let report = pinning
        .as_ref()
        .map(|p| convergence_report(&traj, p.pinned_welfare, cfg.sim.window, cfg.sim.tolerance))
        .transpose()?;
    if sink.is_json() {
        return sink.emit_json(
            "trajectory",
            &json!({ "trajectory": traj, "convergence": report }),
        );
    }
    sink.emit("trajectory", &trajectory_csv(&traj))?;
    if sink.dir.is_some() {
        sink.emit("summary", &trajectory_summary_csv(&traj))?;
        if let Some(r) = &report {
            let rows = [
                ("target", fmt_num(r.target)),
                ("window", r.window.to_string()),
                ("window_mean", fmt_num(r.window_mean)),
                ("deviation", fmt_num(r.deviation)),
                ("tolerance", fmt_num(r.tolerance)),
                ("within_tolerance", r.within_tolerance.to_string()),
                ("std_of_round_means", fmt_num(r.std_of_round_means)),
                ("std_error", fmt_num(r.std_error)),
            ];
            sink.emit("convergence", &key_value_csv(&rows))?;
        }
    }
    Ok(())
}

fn grid(common: &Common) -> anyhow::Result<()> {
    let (cfg, sink) = common.load()?;
    let pinning = if cfg
        .grid
        .controllers
        .contains(&silo_games::StrategyKind::Mmzd)
    {
        Some(cfg.resolve_pinning()?)
    } else {
        None
    };
    let cells = strategy_grid(
        &cfg.game,
        &cfg.grid.controllers,
        &cfg.grid.opponents,
        pinning.as_ref(),
        &cfg.grid_plan(),
    )?;
    if sink.is_json() {
        return sink.emit_json("grid", &serde_json::to_value(&cells)?);
    }
    if sink.dir.is_some() {
        for (kind, text) in grid_panels(&cells) {
            sink.emit(&format!("grid_{}", kind.name()), &text)?;
        }
        Ok(())
    } else {
        sink.emit("grid", &grid_csv(&cells))
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

/// 2 for infeasible pinning, 1 for everything else.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible(_) | Error::AlphaOutOfBounds { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Analyze(c) => analyze(c),
        Command::Bounds { common, aggregate } => match bounds(common, *aggregate) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: no feasible alpha0 for the requested phi/slice candidates");
                return ExitCode::from(2);
            }
            Err(e) => Err(e),
        },
        Command::Synthesize(c) => synthesize(c),
        Command::Stationary(c) => stationary(c),
        Command::Simulate(c) => simulate(c),
        Command::Grid(c) => grid(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
