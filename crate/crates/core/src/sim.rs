//! Seeded Monte-Carlo runs of the iterated game.
//!
//! Every replication draws from its own ChaCha8 stream (`seed`, stream =
//! replication index), so results do not depend on how replications are
//! scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameConfig, JointProfile};
use crate::mmzd::PinningResult;
use crate::strategy::{Baseline, Strategy, StrategyKind};

/// Previous-outcome profile seen by the first round.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// Every organization at full participation `r`.
    #[default]
    Full,
    Zero,
    /// Each organization's action drawn uniformly from `0..=r`.
    Uniform,
    Profile(Vec<u32>),
}

/// One organization's seat: a fixed strategy, or a mixed seat that draws
/// one of the four pure baselines at the start of every replication.
#[derive(Debug, Clone, PartialEq)]
pub enum Seat {
    Fixed(Strategy),
    Mixed,
}

impl Seat {
    fn kind_label(&self) -> &'static str {
        match self {
            Seat::Fixed(s) => s.label(),
            Seat::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimPlan {
    pub cfg: GameConfig,
    pub seats: Vec<Seat>,
    pub rounds: u32,
    pub reps: u32,
    pub seed: u64,
    pub initial_state: InitialState,
}

impl SimPlan {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.seats.len() != self.cfg.n_orgs {
            return Err(Error::config(
                "strategies",
                format!(
                    "expected {} strategies (n_orgs), found {}",
                    self.cfg.n_orgs,
                    self.seats.len()
                ),
            ));
        }
        if self.rounds < 1 {
            return Err(Error::config("sim.rounds", "must be at least 1"));
        }
        if self.reps < 1 {
            return Err(Error::config("sim.reps", "must be at least 1"));
        }
        if let InitialState::Profile(p) = &self.initial_state {
            self.cfg
                .check_profile(&JointProfile::new(p.clone()))
                .map_err(|e| Error::config("sim.initial_state", e.to_string()))?;
        }
        Ok(())
    }
}

/// Builds seats from strategy kinds. `Mmzd` seats take the synthesized
/// strategy and must sit at its controller index.
pub fn seats_for(
    cfg: &GameConfig,
    kinds: &[StrategyKind],
    mmzd: Option<&PinningResult>,
) -> Result<Vec<Seat>> {
    kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| match kind {
            StrategyKind::Mixed => Ok(Seat::Mixed),
            StrategyKind::Mmzd => {
                let res = mmzd.ok_or_else(|| {
                    Error::config(format!("strategies[{i}]"), "mmzd needs a pinning strategy")
                })?;
                if res.spec.controller != i {
                    return Err(Error::config(
                        format!("strategies[{i}]"),
                        format!(
                            "mmzd must be played by the pinning controller (org {})",
                            res.spec.controller + 1
                        ),
                    ));
                }
                Ok(Seat::Fixed(res.strategy.clone()))
            }
            other => Ok(Seat::Fixed(Strategy::Baseline(
                other.as_baseline().expect("pure baseline kind"),
            ))),
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|seats| {
            if seats.len() == cfg.n_orgs {
                Ok(seats)
            } else {
                Err(Error::config(
                    "strategies",
                    format!("expected {} entries, found {}", cfg.n_orgs, seats.len()),
                ))
            }
        })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub rep: u32,
    /// 1-based game round.
    pub round: u32,
    pub actions: JointProfile,
    pub utilities: Vec<f64>,
    /// Sum of `utilities` in org order.
    pub welfare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub n_orgs: usize,
    pub rounds: u32,
    pub reps: u32,
    /// Strategy label per replication and organization; mixed seats show the
    /// drawn baseline as `mixed:<kind>`.
    pub labels: Vec<Vec<String>>,
    /// Replication-major, round-minor.
    pub records: Vec<RoundRecord>,
    /// Cross-replication mean welfare per round.
    pub mean_welfare: Vec<f64>,
    /// Cross-replication sample standard deviation per round.
    pub std_welfare: Vec<f64>,
    /// Cumulative average of `mean_welfare`.
    pub running_mean: Vec<f64>,
}

impl Trajectory {
    pub fn rep_records(&self, rep: u32) -> &[RoundRecord] {
        let r = self.rounds as usize;
        &self.records[rep as usize * r..(rep as usize + 1) * r]
    }

    /// Per-replication mean welfare over the last `window` rounds.
    pub fn window_means(&self, window: u32) -> Vec<f64> {
        (0..self.reps)
            .map(|rep| {
                let recs = self.rep_records(rep);
                let tail = &recs[recs.len() - window as usize..];
                tail.iter().map(|r| r.welfare).sum::<f64>() / window as f64
            })
            .collect()
    }
}

struct RepOutcome {
    labels: Vec<String>,
    records: Vec<RoundRecord>,
}

fn run_rep(plan: &SimPlan, rep: u32) -> Result<RepOutcome> {
    let cfg = &plan.cfg;
    let n = cfg.n_orgs;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(rep as u64);

    let mut labels = Vec::with_capacity(n);
    let mut players: Vec<&Strategy> = Vec::with_capacity(n);
    let drawn: Vec<Strategy> = plan
        .seats
        .iter()
        .map(|seat| match seat {
            Seat::Fixed(s) => s.clone(),
            Seat::Mixed => {
                Strategy::Baseline(Baseline::ALL[rng.random_range(0..Baseline::ALL.len())])
            }
        })
        .collect();
    for (seat, s) in plan.seats.iter().zip(&drawn) {
        labels.push(match seat {
            Seat::Mixed => format!("mixed:{}", s.label()),
            _ => seat.kind_label().to_string(),
        });
        players.push(s);
    }

    let mut prior = match &plan.initial_state {
        InitialState::Full => JointProfile::uniform(n, cfg.max_rounds),
        InitialState::Zero => JointProfile::uniform(n, 0),
        InitialState::Uniform => JointProfile::new(
            (0..n)
                .map(|_| rng.random_range(0..=cfg.max_rounds))
                .collect(),
        ),
        InitialState::Profile(p) => JointProfile::new(p.clone()),
    };

    let mut records = Vec::with_capacity(plan.rounds as usize);
    for round in 1..=plan.rounds {
        let actions = players
            .iter()
            .enumerate()
            .map(|(i, s)| s.act(cfg, i, &prior, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let actions = JointProfile::new(actions);
        let utilities: Vec<f64> = (0..n).map(|i| cfg.org_utility(i, &actions)).collect();
        let welfare = utilities.iter().sum();
        records.push(RoundRecord {
            rep,
            round,
            actions: actions.clone(),
            utilities,
            welfare,
        });
        prior = actions;
    }
    Ok(RepOutcome { labels, records })
}

#[cfg(feature = "parallel")]
fn run_reps(plan: &SimPlan) -> Result<Vec<RepOutcome>> {
    use rayon::prelude::*;
    (0..plan.reps)
        .into_par_iter()
        .map(|rep| run_rep(plan, rep))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_reps(plan: &SimPlan) -> Result<Vec<RepOutcome>> {
    (0..plan.reps).map(|rep| run_rep(plan, rep)).collect()
}

pub fn run(plan: &SimPlan) -> Result<Trajectory> {
    plan.validate()?;
    let outcomes = run_reps(plan)?;
    let rounds = plan.rounds as usize;
    let mut labels = Vec::with_capacity(outcomes.len());
    let mut records = Vec::with_capacity(outcomes.len() * rounds);
    for o in outcomes {
        labels.push(o.labels);
        records.extend(o.records);
    }
    let per_round: Vec<Vec<f64>> = (0..rounds)
        .map(|t| {
            (0..plan.reps as usize)
                .map(|rep| records[rep * rounds + t].welfare)
                .collect()
        })
        .collect();
    let mean_welfare: Vec<f64> = per_round.iter().map(|xs| mean(xs)).collect();
    let std_welfare = per_round.iter().map(|xs| sample_std(xs)).collect();
    let running_mean = mean_welfare
        .iter()
        .scan(0.0, |acc, &m| {
            *acc += m;
            Some(*acc)
        })
        .enumerate()
        .map(|(t, s)| s / (t + 1) as f64)
        .collect();
    Ok(Trajectory {
        n_orgs: plan.cfg.n_orgs,
        rounds: plan.rounds,
        reps: plan.reps,
        labels,
        records,
        mean_welfare,
        std_welfare,
        running_mean,
    })
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub target: f64,
    pub window: u32,
    /// Mean welfare over the final window, across replications.
    pub window_mean: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
    /// Standard deviation of the per-round means inside the window.
    pub std_of_round_means: f64,
    /// Standard error of `window_mean` from per-replication window means.
    pub std_error: f64,
}

pub fn convergence_report(
    traj: &Trajectory,
    target: f64,
    window: u32,
    tolerance: f64,
) -> Result<ConvergenceReport> {
    if window < 1 || window > traj.rounds {
        return Err(Error::config(
            "window",
            format!("must be in 1..={} (rounds)", traj.rounds),
        ));
    }
    let per_rep = traj.window_means(window);
    let window_mean = mean(&per_rep);
    let deviation = (window_mean - target).abs();
    let tail = &traj.mean_welfare[(traj.rounds - window) as usize..];
    Ok(ConvergenceReport {
        target,
        window,
        window_mean,
        deviation,
        tolerance,
        within_tolerance: deviation <= tolerance,
        std_of_round_means: sample_std(tail),
        std_error: sample_std(&per_rep) / (per_rep.len() as f64).sqrt(),
    })
}

/// Shared settings of every cell in a strategy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPlan {
    pub rounds: u32,
    pub reps: u32,
    pub seed: u64,
    pub window: u32,
    pub initial_state: InitialState,
}

impl Default for GridPlan {
    fn default() -> Self {
        Self {
            rounds: 20,
            reps: 100,
            seed: 7,
            window: 5,
            initial_state: InitialState::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub controller: StrategyKind,
    pub opponent: StrategyKind,
    /// Final-window mean welfare across replications.
    pub mean_welfare: f64,
    /// Standard deviation of per-replication final-window means.
    pub std_welfare: f64,
    pub std_error: f64,
    /// `-alpha0` for the pinning controller.
    pub pinned_target: Option<f64>,
}

/// Runs every `(controller, opponent)` pair: the controller seat plays the
/// controller kind and every other organization plays the opponent kind.
pub fn strategy_grid(
    cfg: &GameConfig,
    controllers: &[StrategyKind],
    opponents: &[StrategyKind],
    mmzd: Option<&PinningResult>,
    plan: &GridPlan,
) -> Result<Vec<GridCell>> {
    let seat = mmzd.map_or(0, |m| m.spec.controller);
    if opponents.contains(&StrategyKind::Mmzd) {
        return Err(Error::config(
            "grid.opponents",
            "mmzd can only be played by the controller",
        ));
    }
    let mut cells = Vec::with_capacity(controllers.len() * opponents.len());
    for &c in controllers {
        for &o in opponents {
            let mut kinds = vec![o; cfg.n_orgs];
            kinds[seat] = c;
            let sim = SimPlan {
                cfg: cfg.clone(),
                seats: seats_for(cfg, &kinds, mmzd)?,
                rounds: plan.rounds,
                reps: plan.reps,
                seed: plan.seed,
                initial_state: plan.initial_state.clone(),
            };
            let traj = run(&sim)?;
            let per_rep = traj.window_means(plan.window.min(plan.rounds));
            let sd = sample_std(&per_rep);
            cells.push(GridCell {
                controller: c,
                opponent: o,
                mean_welfare: mean(&per_rep),
                std_welfare: sd,
                std_error: sd / (per_rep.len() as f64).sqrt(),
                pinned_target: (c == StrategyKind::Mmzd)
                    .then(|| mmzd.map(|m| m.pinned_welfare))
                    .flatten(),
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::OrgParams;
    use crate::mmzd::{synthesize, PinningSpec};
    use approx::assert_abs_diff_eq;

    fn c2() -> GameConfig {
        GameConfig::homogeneous(2, 1, 1, 10.0, 10.0, OrgParams::new(3.0, 0.4, 0.1))
    }

    fn plan(cfg: GameConfig, seats: Vec<Seat>, rounds: u32, reps: u32) -> SimPlan {
        SimPlan {
            cfg,
            seats,
            rounds,
            reps,
            seed: 7,
            initial_state: InitialState::Full,
        }
    }

    #[test]
    fn all_cooperate_is_constant() {
        let cfg = GameConfig::homogeneous(4, 3, 5, 2.0, 3.0, OrgParams::new(2.0, 0.1, 0.2));
        let seats = vec![Seat::Fixed(Strategy::Baseline(Baseline::AllC)); 4];
        let traj = run(&plan(cfg.clone(), seats, 10, 3)).unwrap();
        let full = cfg.social_welfare(&JointProfile::uniform(4, 5));
        for r in &traj.records {
            assert_eq!(r.actions, JointProfile::uniform(4, 5));
            assert_eq!(r.welfare, full);
        }
        let rep = convergence_report(&traj, full, 5, 1e-12).unwrap();
        assert!(rep.deviation < 1e-12);
        assert!(rep.within_tolerance);
    }

    #[test]
    fn welfare_column_is_row_sum() {
        let cfg = GameConfig::homogeneous(3, 2, 4, 2.0, 3.0, OrgParams::new(2.0, 0.1, 0.2));
        let seats = vec![
            Seat::Fixed(Strategy::Baseline(Baseline::Rand)),
            Seat::Mixed,
            Seat::Fixed(Strategy::Baseline(Baseline::Tft)),
        ];
        let traj = run(&plan(cfg.clone(), seats, 15, 8)).unwrap();
        for r in &traj.records {
            assert_eq!(r.welfare, r.utilities.iter().sum::<f64>());
            assert_eq!(r.welfare, cfg.social_welfare(&r.actions));
        }
        assert!(traj.labels.iter().all(|l| l[1].starts_with("mixed:")));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = GameConfig::homogeneous(3, 2, 4, 2.0, 3.0, OrgParams::new(2.0, 0.1, 0.2));
        let seats = vec![
            Seat::Mixed,
            Seat::Mixed,
            Seat::Fixed(Strategy::Baseline(Baseline::Rand)),
        ];
        let p = plan(cfg, seats, 12, 16);
        let a = run(&p).unwrap();
        let b = run(&p).unwrap();
        assert_eq!(a, b);
        let mut q = p.clone();
        q.seed = 8;
        assert_ne!(run(&q).unwrap().records, a.records);
    }

    #[test]
    fn mmzd_vs_alld_absorbs_at_pinned_welfare() {
        let cfg = c2();
        let res = synthesize(&cfg, &PinningSpec::new(0.5, 0), 3.0 / 55.0).unwrap();
        let seats = vec![
            Seat::Fixed(res.strategy.clone()),
            Seat::Fixed(Strategy::Baseline(Baseline::AllD)),
        ];
        let traj = run(&plan(cfg, seats, 20, 1)).unwrap();
        let last = traj.records.last().unwrap();
        assert_eq!(last.actions.actions(), &[1, 0]);
        let rep = convergence_report(&traj, -3.0 / 55.0, 5, 1e-12).unwrap();
        assert!(rep.deviation < 1e-12, "{rep:?}");
    }

    #[test]
    fn window_validation() {
        let cfg = c2();
        let seats = vec![Seat::Fixed(Strategy::Baseline(Baseline::AllC)); 2];
        let traj = run(&plan(cfg, seats, 4, 1)).unwrap();
        assert!(convergence_report(&traj, 0.0, 5, 0.1).is_err());
        assert!(convergence_report(&traj, 0.0, 0, 0.1).is_err());
    }

    #[test]
    fn plan_validation() {
        let cfg = c2();
        let seats = vec![Seat::Fixed(Strategy::Baseline(Baseline::AllC))];
        assert!(run(&plan(cfg.clone(), seats, 4, 1)).is_err());
        let seats = vec![Seat::Fixed(Strategy::Baseline(Baseline::AllC)); 2];
        assert!(run(&plan(cfg.clone(), seats.clone(), 0, 1)).is_err());
        assert!(run(&plan(cfg.clone(), seats.clone(), 3, 0)).is_err());
        let mut p = plan(cfg, seats, 3, 1);
        p.initial_state = InitialState::Profile(vec![0, 2]);
        assert!(run(&p).is_err());
    }

    #[test]
    fn grid_baseline_corners() {
        let cfg = GameConfig::homogeneous(3, 2, 2, 2.0, 3.0, OrgParams::new(2.0, 0.1, 0.2));
        let cells = strategy_grid(
            &cfg,
            &[StrategyKind::Allc, StrategyKind::Alld],
            &[StrategyKind::Allc, StrategyKind::Alld],
            None,
            &GridPlan {
                reps: 4,
                ..GridPlan::default()
            },
        )
        .unwrap();
        assert_eq!(cells.len(), 4);
        assert_abs_diff_eq!(
            cells[0].mean_welfare,
            cfg.social_welfare(&JointProfile::uniform(3, 2)),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(cells[3].mean_welfare, -0.6, epsilon = 1e-12);
        assert!(cells
            .iter()
            .all(|c| c.pinned_target.is_none() && c.std_welfare == 0.0));
    }

    #[test]
    fn mmzd_must_sit_at_controller() {
        let cfg = c2();
        let res = synthesize(&cfg, &PinningSpec::new(0.5, 0), 3.0 / 55.0).unwrap();
        assert!(seats_for(&cfg, &[StrategyKind::Allc, StrategyKind::Mmzd], Some(&res)).is_err());
        assert!(seats_for(&cfg, &[StrategyKind::Mmzd, StrategyKind::Allc], None).is_err());
        assert!(seats_for(&cfg, &[StrategyKind::Mmzd, StrategyKind::Allc], Some(&res)).is_ok());
    }
}
