//! One-round-memory strategies and the baseline strategy families.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameConfig, JointProfile};
use crate::mmzd::MmzdRule;
use crate::state::{StateIndex, StateSpace};

/// Tolerance on row sums and entry ranges of a probability row.
pub const ROW_TOLERANCE: f64 = 1e-12;

/// Strategy family names as they appear in config files and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Allc,
    Alld,
    Rand,
    Tft,
    Mixed,
    Mmzd,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Allc => "allc",
            StrategyKind::Alld => "alld",
            StrategyKind::Rand => "rand",
            StrategyKind::Tft => "tft",
            StrategyKind::Mixed => "mixed",
            StrategyKind::Mmzd => "mmzd",
        }
    }

    pub fn as_baseline(self) -> Option<Baseline> {
        match self {
            StrategyKind::Allc => Some(Baseline::AllC),
            StrategyKind::Alld => Some(Baseline::AllD),
            StrategyKind::Rand => Some(Baseline::Rand),
            StrategyKind::Tft => Some(Baseline::Tft),
            StrategyKind::Mixed | StrategyKind::Mmzd => None,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "allc" => Ok(StrategyKind::Allc),
            "alld" => Ok(StrategyKind::Alld),
            "rand" => Ok(StrategyKind::Rand),
            "tft" => Ok(StrategyKind::Tft),
            "mixed" => Ok(StrategyKind::Mixed),
            "mmzd" => Ok(StrategyKind::Mmzd),
            other => Err(Error::config(
                "strategy",
                format!("unknown strategy kind {other:?}"),
            )),
        }
    }
}

/// The four pure baselines. `Mixed` draws from these only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Always participates in all `r` rounds.
    #[serde(rename = "allc")]
    AllC,
    /// Never trains; submits zero updates.
    #[serde(rename = "alld")]
    AllD,
    /// Uniform over `0..=r`.
    Rand,
    /// Uniform over the low half `0..=floor(r/2)` after a round whose total
    /// participation was below `N r / 2`, otherwise uniform over the high half
    /// `floor((r+1)/2)..=r`.
    Tft,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [
        Baseline::AllC,
        Baseline::AllD,
        Baseline::Rand,
        Baseline::Tft,
    ];

    pub fn kind(self) -> StrategyKind {
        match self {
            Baseline::AllC => StrategyKind::Allc,
            Baseline::AllD => StrategyKind::Alld,
            Baseline::Rand => StrategyKind::Rand,
            Baseline::Tft => StrategyKind::Tft,
        }
    }

    /// Probability row over `0..=r` given the previous round's profile.
    pub fn row(self, cfg: &GameConfig, prior: &JointProfile) -> Vec<f64> {
        let r = cfg.max_rounds as usize;
        let mut row = vec![0.0; r + 1];
        match self {
            Baseline::AllC => row[r] = 1.0,
            Baseline::AllD => row[0] = 1.0,
            Baseline::Rand => row.fill(1.0 / (r + 1) as f64),
            Baseline::Tft => {
                let (lo, hi) = tft_support(cfg, prior);
                let w = 1.0 / (hi - lo + 1) as f64;
                row[lo..=hi].fill(w);
            }
        }
        row
    }
}

/// Inclusive action range TFT randomizes over after `prior`.
pub fn tft_support(cfg: &GameConfig, prior: &JointProfile) -> (usize, usize) {
    let r = cfg.max_rounds as usize;
    // total < N r / 2, kept in integers
    if 2 * prior.total() < cfg.max_total() {
        (0, r / 2)
    } else {
        (r.div_ceil(2), r)
    }
}

/// Baseline selection for one organization, or a per-organization mixed
/// assignment drawn from the four pure baselines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineKind {
    Pure(Baseline),
    Mixed(Vec<Baseline>),
}

impl BaselineKind {
    /// Draws one pure baseline per organization, uniformly.
    pub fn draw_mixed<R: Rng + ?Sized>(n_orgs: usize, rng: &mut R) -> Self {
        BaselineKind::Mixed(
            (0..n_orgs)
                .map(|_| Baseline::ALL[rng.random_range(0..Baseline::ALL.len())])
                .collect(),
        )
    }
}

pub fn make_baseline(kind: &BaselineKind, cfg: &GameConfig, org: usize) -> Result<Strategy> {
    if org >= cfg.n_orgs {
        return Err(Error::config(
            "strategies",
            format!("org index {org} out of range for {} orgs", cfg.n_orgs),
        ));
    }
    match kind {
        BaselineKind::Pure(b) => Ok(Strategy::Baseline(*b)),
        BaselineKind::Mixed(assign) => assign
            .get(org)
            .map(|b| Strategy::Baseline(*b))
            .ok_or_else(|| Error::config("strategies", "mixed assignment shorter than n_orgs")),
    }
}

/// Explicit per-state probability table, row-major over states.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    space: StateSpace,
    probs: Vec<f64>,
}

impl StrategyTable {
    /// Builds the table by evaluating `row` at every state, validating rows.
    pub fn from_fn<F>(space: StateSpace, mut row: F) -> Result<Self>
    where
        F: FnMut(StateIndex, &JointProfile) -> Result<Vec<f64>>,
    {
        let k = space.action_count();
        let mut probs = Vec::with_capacity(space.len() as usize * k);
        for j in space.indices() {
            let profile = space.decode(j);
            let r = row(j, &profile)?;
            check_row(&r, k).map_err(|detail| Error::NotStochastic {
                org: 0,
                state: profile.to_string(),
                detail,
            })?;
            probs.extend_from_slice(&r);
        }
        Ok(Self { space, probs })
    }

    pub fn from_rows(space: StateSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() as u64 != space.len() {
            return Err(Error::Dimension(format!(
                "{} rows for {} states",
                rows.len(),
                space.len()
            )));
        }
        let mut it = rows.into_iter();
        Self::from_fn(space, |_, _| Ok(it.next().expect("row count checked")))
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn row(&self, state: StateIndex) -> &[f64] {
        let k = self.space.action_count();
        &self.probs[state.as_usize() * k..(state.as_usize() + 1) * k]
    }

    /// Probability of playing `action` after `state`.
    pub fn prob(&self, state: StateIndex, action: u32) -> f64 {
        self.row(state)[action as usize]
    }
}

/// A one-round-memory strategy: a probability row over `0..=r` for each
/// previous joint outcome, either tabulated or evaluated on demand.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Baseline(Baseline),
    Table(StrategyTable),
    /// Closed-form welfare-pinning rule, evaluated per visited state.
    Mmzd(MmzdRule),
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Baseline(b) => b.kind().name(),
            Strategy::Table(_) => "table",
            Strategy::Mmzd(_) => "mmzd",
        }
    }

    /// Probability row over `0..=r` after the previous outcome `prior`.
    pub fn row(&self, cfg: &GameConfig, prior: &JointProfile) -> Result<Vec<f64>> {
        match self {
            Strategy::Baseline(b) => Ok(b.row(cfg, prior)),
            Strategy::Table(t) => {
                let j = t.space.encode(prior);
                Ok(t.row(j).to_vec())
            }
            Strategy::Mmzd(rule) => rule.row(prior),
        }
    }

    /// Samples this strategy's action after `prior` using one uniform draw.
    pub fn act<R: Rng + ?Sized>(
        &self,
        cfg: &GameConfig,
        org: usize,
        prior: &JointProfile,
        rng: &mut R,
    ) -> Result<u32> {
        let row = self.row(cfg, prior)?;
        check_row(&row, cfg.action_count()).map_err(|detail| Error::NotStochastic {
            org: org + 1,
            state: prior.to_string(),
            detail,
        })?;
        Ok(sample_row(&row, rng.random::<f64>()))
    }

    /// Materializes the full table; fails above `cap` states.
    pub fn tabulate(&self, cfg: &GameConfig, cap: u64) -> Result<StrategyTable> {
        if let Strategy::Table(t) = self {
            return Ok(t.clone());
        }
        let space = StateSpace::for_config(cfg)?;
        space.enumerable(cap)?;
        StrategyTable::from_fn(space, |_, prior| self.row(cfg, prior))
    }
}

/// Checks a row has `k` entries in `[0,1]` summing to 1, within [`ROW_TOLERANCE`].
pub fn check_row(row: &[f64], k: usize) -> std::result::Result<(), String> {
    if row.len() != k {
        return Err(format!("row has {} entries, expected {k}", row.len()));
    }
    if let Some((a, p)) = row
        .iter()
        .enumerate()
        .find(|(_, &p)| !(-ROW_TOLERANCE..=1.0 + ROW_TOLERANCE).contains(&p))
    {
        return Err(format!("probability {p} for action {a} outside [0,1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(format!("row sums to {sum}"));
    }
    Ok(())
}

/// Inverse-CDF sampling with a single uniform `u in [0,1)`. Never returns an
/// action of zero probability.
pub fn sample_row(row: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (a, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last_positive = a;
        if u < acc {
            return a as u32;
        }
    }
    last_positive as u32
}
