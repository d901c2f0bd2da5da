//! Multi-player multi-action zero-determinant (MMZD) welfare pinning.
//!
//! The controller fixes one action slice `g` and plays it after state `j`
//! with probability
//!
//! ```text
//! p_{j,g} = phi * (S_j + alpha0) + 1{controller played g in j}
//! ```
//!
//! where `S_j = sum_x w_x U^x(j)`. The column of `M - I` obtained by summing
//! every column whose controller action is `g` equals `p_{j,g} - 1{a(j) = g}`
//! and depends on the controller alone, so every stationary distribution `v`
//! of the induced chain satisfies `v . (S + alpha0) = 0`: the weighted sum of
//! expected utilities is pinned at `-alpha0` whatever the others play.
//! Keeping every `p_{j,g}` in `[0,1]` confines `alpha0` to an interval whose
//! lower end is the best welfare the controller can pin.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameConfig, JointProfile};
use crate::state::{StateIndex, StateSpace};
use crate::strategy::{Strategy, StrategyTable, ROW_TOLERANCE};
use crate::DEFAULT_ENUMERATION_CAP;

/// Feasibility slack when comparing `alpha0` against its bounds.
pub const BOUNDS_TOLERANCE: f64 = 1e-12;

/// How the residual mass `1 - p_{j,g}` is spread over the other actions.
/// The pinned value does not depend on this choice.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Completion {
    #[default]
    Uniform,
    /// All residual mass on the smallest non-slice action.
    Lowest,
    /// All residual mass on the largest non-slice action.
    Highest,
    /// Proportional to the given per-action weights (slice entry ignored).
    Weighted(Vec<f64>),
}

impl Completion {
    fn validate(&self, action_count: usize, slice: u32) -> Result<()> {
        if let Completion::Weighted(w) = self {
            if w.len() != action_count {
                return Err(Error::config(
                    "pinning.completion",
                    format!("expected {action_count} weights, found {}", w.len()),
                ));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::config(
                    "pinning.completion",
                    "weights must be finite and >= 0",
                ));
            }
            let rest: f64 = w
                .iter()
                .enumerate()
                .filter(|(a, _)| *a != slice as usize)
                .map(|(_, x)| x)
                .sum();
            if rest <= 0.0 {
                return Err(Error::config(
                    "pinning.completion",
                    "weights on non-slice actions must not all be zero",
                ));
            }
        }
        Ok(())
    }

    /// Writes `residual` over all actions except `slice` into `row`.
    fn spread(&self, row: &mut [f64], slice: usize, residual: f64) {
        let k = row.len();
        match self {
            Completion::Uniform => {
                let share = residual / (k - 1) as f64;
                for (a, p) in row.iter_mut().enumerate() {
                    if a != slice {
                        *p = share;
                    }
                }
            }
            Completion::Lowest => {
                let a = if slice == 0 { 1 } else { 0 };
                row[a] = residual;
            }
            Completion::Highest => {
                let a = if slice == k - 1 { k - 2 } else { k - 1 };
                row[a] = residual;
            }
            Completion::Weighted(w) => {
                let total: f64 = w
                    .iter()
                    .enumerate()
                    .filter(|(a, _)| *a != slice)
                    .map(|(_, x)| x)
                    .sum();
                for (a, p) in row.iter_mut().enumerate() {
                    if a != slice {
                        *p = residual * w[a] / total;
                    }
                }
            }
        }
    }
}

/// Parameters of the pinning strategy, excluding `alpha0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinningSpec {
    /// Zero-based index of the organization playing the strategy.
    pub controller: usize,
    pub phi: f64,
    pub slice: u32,
    /// Per-organization weights `alpha_x`; `None` means all ones.
    pub weights: Option<Vec<f64>>,
    pub completion: Completion,
}

impl Default for PinningSpec {
    fn default() -> Self {
        Self {
            controller: 0,
            phi: 0.01,
            slice: 0,
            weights: None,
            completion: Completion::Uniform,
        }
    }
}

impl PinningSpec {
    pub fn new(phi: f64, slice: u32) -> Self {
        Self {
            phi,
            slice,
            ..Self::default()
        }
    }

    pub fn validate(&self, cfg: &GameConfig) -> Result<()> {
        if self.phi == 0.0 {
            return Err(Error::ZeroPhi);
        }
        if !self.phi.is_finite() {
            return Err(Error::config("pinning.phi", "must be finite"));
        }
        if self.controller >= cfg.n_orgs {
            return Err(Error::config(
                "pinning.controller",
                format!("must be in 1..={}", cfg.n_orgs),
            ));
        }
        if self.slice > cfg.max_rounds {
            return Err(Error::config(
                "pinning.slice",
                format!("must be in 0..={}", cfg.max_rounds),
            ));
        }
        if let Some(w) = &self.weights {
            if w.len() != cfg.n_orgs {
                return Err(Error::config(
                    "pinning.weights",
                    format!("expected {} weights, found {}", cfg.n_orgs, w.len()),
                ));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("pinning.weights", "must be finite"));
            }
        }
        self.completion.validate(cfg.action_count(), self.slice)
    }

    pub fn has_unit_weights(&self) -> bool {
        self.weights
            .as_ref()
            .is_none_or(|w| w.iter().all(|&x| x == 1.0))
    }

    pub fn weight_vector(&self, n_orgs: usize) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0; n_orgs])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    Enumerated,
    Aggregate,
}

/// Feasible interval of `alpha0` for one `(phi, slice)` choice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaBounds {
    pub alpha0_min: f64,
    pub alpha0_max: f64,
    pub feasible: bool,
    pub phi: f64,
    pub slice: u32,
    pub controller: usize,
    /// States attaining `alpha0_min` (one representative in aggregate mode).
    pub binding_min: Vec<StateIndex>,
    /// States attaining `alpha0_max` (one representative in aggregate mode).
    pub binding_max: Vec<StateIndex>,
    pub mode: BoundsMode,
}

impl AlphaBounds {
    pub fn contains(&self, alpha0: f64) -> bool {
        alpha0 >= self.alpha0_min - BOUNDS_TOLERANCE && alpha0 <= self.alpha0_max + BOUNDS_TOLERANCE
    }
}

impl fmt::Display for AlphaBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "phi={} slice={}: alpha0 in [{}, {}] ({}; binding min {:?}, binding max {:?})",
            self.phi,
            self.slice,
            self.alpha0_min,
            self.alpha0_max,
            if self.feasible {
                "feasible"
            } else {
                "infeasible"
            },
            self.binding_min.iter().map(|s| s.0).collect::<Vec<_>>(),
            self.binding_max.iter().map(|s| s.0).collect::<Vec<_>>(),
        )
    }
}

/// Per-candidate bounds when no `(phi, slice)` choice admits a strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    pub candidates: Vec<AlphaBounds>,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.candidates.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Closed-form welfare-pinning rule. Evaluates the controller's row for any
/// previous outcome without a table, which is what full-scale games need.
#[derive(Debug, Clone, PartialEq)]
pub struct MmzdRule {
    cfg: GameConfig,
    spec: PinningSpec,
    weights: Vec<f64>,
    alpha0: f64,
}

impl MmzdRule {
    pub fn new(cfg: &GameConfig, spec: &PinningSpec, alpha0: f64) -> Result<Self> {
        spec.validate(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            spec: spec.clone(),
            weights: spec.weight_vector(cfg.n_orgs),
            alpha0,
        })
    }

    pub fn spec(&self) -> &PinningSpec {
        &self.spec
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn weighted_welfare(&self, profile: &JointProfile) -> f64 {
        weighted_welfare(&self.cfg, &self.weights, profile)
    }

    /// `p_{j,g}` for the previous outcome `prior`, clamped into `[0,1]` when
    /// within [`ROW_TOLERANCE`] of it.
    pub fn slice_probability(&self, prior: &JointProfile) -> Result<f64> {
        let indicator = if prior.actions()[self.spec.controller] == self.spec.slice {
            1.0
        } else {
            0.0
        };
        let p = self.spec.phi * (self.weighted_welfare(prior) + self.alpha0) + indicator;
        if (-ROW_TOLERANCE..=1.0 + ROW_TOLERANCE).contains(&p) {
            Ok(p.clamp(0.0, 1.0))
        } else {
            Err(Error::NotStochastic {
                org: self.spec.controller + 1,
                state: prior.to_string(),
                detail: format!("slice probability {p} outside [0,1]; alpha0 infeasible"),
            })
        }
    }

    pub fn row(&self, prior: &JointProfile) -> Result<Vec<f64>> {
        let g = self.spec.slice as usize;
        let p = self.slice_probability(prior)?;
        let mut row = vec![0.0; self.cfg.action_count()];
        self.spec.completion.spread(&mut row, g, 1.0 - p);
        row[g] = p;
        Ok(row)
    }
}

/// Result of synthesis: the controller's strategy and what it pins.
#[derive(Debug, Clone, PartialEq)]
pub struct PinningResult {
    /// Tabulated when the state space is enumerable, closed-form otherwise.
    pub strategy: Strategy,
    pub alpha0: f64,
    /// `-alpha0`: the pinned weighted welfare (social welfare for unit weights).
    pub pinned_welfare: f64,
    pub bounds: AlphaBounds,
    pub spec: PinningSpec,
}

impl PinningResult {
    /// Slice probabilities `p_{j,g}` per state, when tabulated.
    pub fn slice_probabilities(&self) -> Option<Vec<f64>> {
        match &self.strategy {
            Strategy::Table(t) => Some(
                t.space()
                    .indices()
                    .map(|j| t.prob(j, self.spec.slice))
                    .collect(),
            ),
            _ => None,
        }
    }
}

fn weighted_welfare(cfg: &GameConfig, weights: &[f64], profile: &JointProfile) -> f64 {
    (0..cfg.n_orgs)
        .map(|x| weights[x] * cfg.org_utility(x, profile))
        .sum()
}

/// `S_j = sum_x alpha_x U^x(decode(j))` over the enumerated state space.
pub fn state_welfare_vector(cfg: &GameConfig, weights: &[f64], cap: u64) -> Result<Vec<f64>> {
    if weights.len() != cfg.n_orgs {
        return Err(Error::Dimension(format!(
            "{} weights for {} orgs",
            weights.len(),
            cfg.n_orgs
        )));
    }
    let space = StateSpace::for_config(cfg)?;
    space.enumerable(cap)?;
    Ok(space
        .profiles()
        .map(|p| weighted_welfare(cfg, weights, &p))
        .collect())
}

/// Interval of `alpha0` that keeps `p_{j,g}` in `[0,1]` at one state.
fn state_interval(s: f64, in_slice: bool, phi: f64) -> (f64, f64) {
    let (lo_off, hi_off) = block_offsets(in_slice, phi);
    (-s + lo_off, -s + hi_off)
}

/// Offsets added to `-S_j` for the lower and upper end of a state's interval.
/// From `0 <= phi (S + alpha0) + I <= 1`.
fn block_offsets(in_slice: bool, phi: f64) -> (f64, f64) {
    let i = if in_slice { 1.0 } else { 0.0 };
    let a = -i / phi;
    let b = (1.0 - i) / phi;
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Exact bounds by enumeration. `welfare` is `S`, indexed like `space`.
pub fn alpha0_bounds(
    space: &StateSpace,
    welfare: &[f64],
    phi: f64,
    slice: u32,
    controller: usize,
) -> Result<AlphaBounds> {
    if phi == 0.0 {
        return Err(Error::ZeroPhi);
    }
    if welfare.len() as u64 != space.len() {
        return Err(Error::Dimension(format!(
            "welfare vector has {} entries for {} states",
            welfare.len(),
            space.len()
        )));
    }
    let intervals: Vec<(f64, f64)> = space
        .indices()
        .map(|j| {
            state_interval(
                welfare[j.as_usize()],
                space.action(j, controller) == slice,
                phi,
            )
        })
        .collect();
    let alpha0_min = intervals
        .iter()
        .map(|x| x.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let alpha0_max = intervals.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let attaining = |pick: fn(&(f64, f64)) -> f64, target: f64| {
        intervals
            .iter()
            .enumerate()
            .filter(|(_, iv)| (pick(iv) - target).abs() <= BOUNDS_TOLERANCE)
            .map(|(j, _)| StateIndex(j as u64))
            .collect()
    };
    Ok(AlphaBounds {
        alpha0_min,
        alpha0_max,
        feasible: alpha0_min <= alpha0_max + BOUNDS_TOLERANCE,
        phi,
        slice,
        controller,
        binding_min: attaining(|iv| iv.0, alpha0_min),
        binding_max: attaining(|iv| iv.1, alpha0_max),
        mode: BoundsMode::Enumerated,
    })
}

/// Extremes of unit-weight welfare over one block of states.
#[derive(Debug, Clone)]
struct BlockExtremes {
    min: f64,
    argmin: JointProfile,
    max: f64,
    argmax: JointProfile,
}

impl BlockExtremes {
    fn absorb(slot: &mut Option<Self>, s: f64, profile: &JointProfile) {
        match slot {
            None => {
                *slot = Some(Self {
                    min: s,
                    argmin: profile.clone(),
                    max: s,
                    argmax: profile.clone(),
                })
            }
            Some(b) => {
                if s < b.min {
                    b.min = s;
                    b.argmin = profile.clone();
                }
                if s > b.max {
                    b.max = s;
                    b.argmax = profile.clone();
                }
            }
        }
    }
}

/// Fills `order` greedily with `total` participation rounds, `r` per org.
fn greedy_profile(base: &mut JointProfile, order: &[usize], total: u64, r: u32) {
    let mut left = total;
    for &x in order {
        let take = left.min(r as u64);
        base.actions_mut()[x] = take as u32;
        left -= take;
    }
}

/// Same bounds as [`alpha0_bounds`] under unit weights, without enumerating
/// states.
///
/// Unit-weight welfare depends on the profile only through the total `T`, the
/// controller's own action and the others' cost `K sum beta_x y_x`. For a fixed
/// controller action and others' total, the cheapest and dearest allocations
/// come from filling organizations in increasing (resp. decreasing) `beta`
/// order, so scanning `(a, T_others)` visits every block extreme.
pub fn aggregate_alpha0_bounds(
    cfg: &GameConfig,
    phi: f64,
    slice: u32,
    controller: usize,
) -> Result<AlphaBounds> {
    if phi == 0.0 {
        return Err(Error::ZeroPhi);
    }
    cfg.validate()?;
    if controller >= cfg.n_orgs || slice > cfg.max_rounds {
        return Err(Error::config(
            "pinning",
            "controller or slice out of range for this game",
        ));
    }
    let space = StateSpace::for_config(cfg)?;
    let r = cfg.max_rounds;
    let mut cheap: Vec<usize> = (0..cfg.n_orgs).filter(|&x| x != controller).collect();
    cheap.sort_by(|&a, &b| {
        cfg.orgs[a]
            .compute_coeff
            .total_cmp(&cfg.orgs[b].compute_coeff)
    });
    let dear: Vec<usize> = cheap.iter().rev().copied().collect();
    let others_max = (cfg.n_orgs as u64 - 1) * r as u64;

    let mut in_block: Option<BlockExtremes> = None;
    let mut out_block: Option<BlockExtremes> = None;
    let mut profile = JointProfile::uniform(cfg.n_orgs, 0);
    for a in 0..=r {
        profile.actions_mut()[controller] = a;
        let slot = if a == slice {
            &mut in_block
        } else {
            &mut out_block
        };
        for t in 0..=others_max {
            greedy_profile(&mut profile, &cheap, t, r);
            BlockExtremes::absorb(slot, cfg.social_welfare(&profile), &profile);
            greedy_profile(&mut profile, &dear, t, r);
            BlockExtremes::absorb(slot, cfg.social_welfare(&profile), &profile);
        }
    }
    let in_block = in_block.expect("slice block is never empty");
    let out_block = out_block.expect("r >= 1 gives a non-slice block");

    let (in_lo, in_hi) = block_offsets(true, phi);
    let (out_lo, out_hi) = block_offsets(false, phi);
    // max over a block of (-S + c) is -(min S) + c
    let lo_in = -in_block.min + in_lo;
    let lo_out = -out_block.min + out_lo;
    let hi_in = -in_block.max + in_hi;
    let hi_out = -out_block.max + out_hi;
    let (alpha0_min, min_at) = if lo_in >= lo_out {
        (lo_in, &in_block.argmin)
    } else {
        (lo_out, &out_block.argmin)
    };
    let (alpha0_max, max_at) = if hi_in <= hi_out {
        (hi_in, &in_block.argmax)
    } else {
        (hi_out, &out_block.argmax)
    };
    Ok(AlphaBounds {
        alpha0_min,
        alpha0_max,
        feasible: alpha0_min <= alpha0_max + BOUNDS_TOLERANCE,
        phi,
        slice,
        controller,
        binding_min: vec![space.encode(min_at)],
        binding_max: vec![space.encode(max_at)],
        mode: BoundsMode::Aggregate,
    })
}

/// Bounds for `spec`, enumerating when the state space is within `cap` and
/// using the aggregate scan otherwise (unit weights only).
pub fn bounds_for(cfg: &GameConfig, spec: &PinningSpec, cap: u64) -> Result<AlphaBounds> {
    spec.validate(cfg)?;
    let space = StateSpace::for_config(cfg)?;
    if space.len() <= cap {
        let s = state_welfare_vector(cfg, &spec.weight_vector(cfg.n_orgs), cap)?;
        alpha0_bounds(&space, &s, spec.phi, spec.slice, spec.controller)
    } else if spec.has_unit_weights() {
        aggregate_alpha0_bounds(cfg, spec.phi, spec.slice, spec.controller)
    } else {
        Err(Error::StateSpaceTooLarge {
            states: space.len() as u128,
            cap,
        })
    }
}

/// Builds the pinning strategy at the given `alpha0`.
pub fn synthesize(cfg: &GameConfig, spec: &PinningSpec, alpha0: f64) -> Result<PinningResult> {
    synthesize_with_cap(cfg, spec, alpha0, DEFAULT_ENUMERATION_CAP)
}

pub fn synthesize_with_cap(
    cfg: &GameConfig,
    spec: &PinningSpec,
    alpha0: f64,
    cap: u64,
) -> Result<PinningResult> {
    let bounds = bounds_for(cfg, spec, cap)?;
    if !bounds.contains(alpha0) {
        let violated = violated_states(cfg, spec, alpha0, &bounds, cap)?;
        return Err(Error::AlphaOutOfBounds {
            alpha0,
            min: bounds.alpha0_min,
            max: bounds.alpha0_max,
            violated,
        });
    }
    let rule = MmzdRule::new(cfg, spec, alpha0)?;
    let space = StateSpace::for_config(cfg)?;
    let strategy = if space.len() <= cap {
        Strategy::Table(StrategyTable::from_fn(space, |_, prior| rule.row(prior))?)
    } else {
        Strategy::Mmzd(rule)
    };
    Ok(PinningResult {
        strategy,
        alpha0,
        pinned_welfare: -alpha0,
        bounds,
        spec: spec.clone(),
    })
}

fn violated_states(
    cfg: &GameConfig,
    spec: &PinningSpec,
    alpha0: f64,
    bounds: &AlphaBounds,
    cap: u64,
) -> Result<Vec<u64>> {
    let space = StateSpace::for_config(cfg)?;
    if space.len() > cap {
        let side = if alpha0 < bounds.alpha0_min {
            &bounds.binding_min
        } else {
            &bounds.binding_max
        };
        return Ok(side.iter().map(|s| s.0).collect());
    }
    let s = state_welfare_vector(cfg, &spec.weight_vector(cfg.n_orgs), cap)?;
    Ok(space
        .indices()
        .filter(|&j| {
            let (lo, hi) = state_interval(
                s[j.as_usize()],
                space.action(j, spec.controller) == spec.slice,
                spec.phi,
            );
            alpha0 < lo - BOUNDS_TOLERANCE || alpha0 > hi + BOUNDS_TOLERANCE
        })
        .map(|j| j.0)
        .collect())
}

/// Synthesizes at `alpha0_min` for `spec`'s slice and `phi`: the largest
/// welfare the controller can pin.
pub fn max_pinned_welfare(cfg: &GameConfig, spec: &PinningSpec) -> Result<PinningResult> {
    search_pinned_welfare(cfg, spec, &[spec.slice], &[spec.phi])
}

/// Tries every `(phi, slice)` pair and keeps the feasible one with the
/// smallest `alpha0_min`; earlier candidates win ties.
pub fn search_pinned_welfare(
    cfg: &GameConfig,
    spec: &PinningSpec,
    slices: &[u32],
    phis: &[f64],
) -> Result<PinningResult> {
    let mut candidates = Vec::with_capacity(slices.len() * phis.len());
    let mut best: Option<(PinningSpec, f64)> = None;
    for &phi in phis {
        for &slice in slices {
            let candidate = PinningSpec {
                phi,
                slice,
                ..spec.clone()
            };
            let b = bounds_for(cfg, &candidate, DEFAULT_ENUMERATION_CAP)?;
            if b.feasible && best.as_ref().is_none_or(|(_, a)| b.alpha0_min < *a) {
                best = Some((candidate, b.alpha0_min));
            }
            candidates.push(b);
        }
    }
    match best {
        Some((s, alpha0)) => synthesize(cfg, &s, alpha0),
        None => Err(Error::Infeasible(InfeasibilityReport { candidates })),
    }
}
