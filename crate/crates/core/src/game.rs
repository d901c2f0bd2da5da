//! Utility model of the cross-silo FL game and the social-dilemma analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StateSpace;
use crate::DEFAULT_ENUMERATION_CAP;

/// Per-organization economic parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrgParams {
    /// Unit revenue `m_i` earned from the returned model.
    pub unit_revenue: f64,
    /// Computation cost `beta_i` of one local iteration.
    pub compute_coeff: f64,
    /// Communication cost `C_m^i`, paid every task regardless of participation.
    pub comm_cost: f64,
}

impl OrgParams {
    pub fn new(unit_revenue: f64, compute_coeff: f64, comm_cost: f64) -> Self {
        Self {
            unit_revenue,
            compute_coeff,
            comm_cost,
        }
    }
}

/// Global game parameters plus one [`OrgParams`] per organization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub n_orgs: usize,
    /// Local iterations `K` per global round.
    pub local_iters: u32,
    /// Global aggregation rounds `r` per task; actions are `0..=r`.
    pub max_rounds: u32,
    pub theta0: f64,
    pub theta1: f64,
    pub orgs: Vec<OrgParams>,
}

impl GameConfig {
    /// Homogeneous configuration: every organization gets the same parameters.
    pub fn homogeneous(
        n_orgs: usize,
        local_iters: u32,
        max_rounds: u32,
        theta0: f64,
        theta1: f64,
        org: OrgParams,
    ) -> Self {
        Self {
            n_orgs,
            local_iters,
            max_rounds,
            theta0,
            theta1,
            orgs: vec![org; n_orgs],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_orgs < 2 {
            return Err(Error::config("game.n_orgs", "must be at least 2"));
        }
        if self.local_iters < 1 {
            return Err(Error::config("game.local_iters", "must be at least 1"));
        }
        if self.max_rounds < 1 {
            return Err(Error::config("game.max_rounds", "must be at least 1"));
        }
        if !(self.theta0.is_finite() && self.theta0 > 0.0) {
            return Err(Error::config("game.theta0", "must be finite and > 0"));
        }
        if !(self.theta1.is_finite() && self.theta1 > 0.0) {
            return Err(Error::config("game.theta1", "must be finite and > 0"));
        }
        if self.orgs.len() != self.n_orgs {
            return Err(Error::config(
                "game.orgs",
                format!(
                    "expected {} entries (n_orgs), found {}",
                    self.n_orgs,
                    self.orgs.len()
                ),
            ));
        }
        for (i, org) in self.orgs.iter().enumerate() {
            for (name, v) in [
                ("unit_revenue", org.unit_revenue),
                ("compute_coeff", org.compute_coeff),
                ("comm_cost", org.comm_cost),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config(
                        format!("game.orgs[{i}].{name}"),
                        "must be finite and >= 0",
                    ));
                }
            }
        }
        StateSpace::for_config(self).map(|_| ())
    }

    pub fn action_count(&self) -> usize {
        self.max_rounds as usize + 1
    }

    /// Largest possible total participation `N * r`.
    pub fn max_total(&self) -> u64 {
        self.n_orgs as u64 * self.max_rounds as u64
    }

    /// Precision of the untrained model, `chi_0 = theta0 / theta1`.
    pub fn base_precision(&self) -> f64 {
        self.theta0 / self.theta1
    }

    /// Precision term `theta0 / (theta1 + K * total)` of the trained model.
    pub fn model_precision(&self, total_participation: u64) -> Result<f64> {
        if total_participation > self.max_total() {
            return Err(Error::InvalidProfile(format!(
                "total participation {total_participation} exceeds N*r = {}",
                self.max_total()
            )));
        }
        Ok(self.precision_unchecked(total_participation))
    }

    fn precision_unchecked(&self, total: u64) -> f64 {
        self.theta0 / (self.theta1 + self.local_iters as f64 * total as f64)
    }

    /// Checks length and action range of a profile against this game.
    pub fn check_profile(&self, profile: &JointProfile) -> Result<()> {
        if profile.len() != self.n_orgs {
            return Err(Error::InvalidProfile(format!(
                "expected {} actions, found {}",
                self.n_orgs,
                profile.len()
            )));
        }
        if let Some((i, &a)) = profile
            .actions()
            .iter()
            .enumerate()
            .find(|(_, &a)| a > self.max_rounds)
        {
            return Err(Error::InvalidProfile(format!(
                "org {} plays {a}, above r = {}",
                i + 1,
                self.max_rounds
            )));
        }
        Ok(())
    }

    /// Revenue and cost components of organization `org`'s utility.
    pub fn utility_breakdown(&self, org: usize, profile: &JointProfile) -> UtilityBreakdown {
        debug_assert!(self.check_profile(profile).is_ok());
        let p = &self.orgs[org];
        let chi = self.precision_unchecked(profile.total());
        UtilityBreakdown {
            revenue: p.unit_revenue * (self.base_precision() - chi),
            computation_cost: p.compute_coeff
                * self.local_iters as f64
                * profile.actions()[org] as f64,
            communication_cost: p.comm_cost,
        }
    }

    /// `U^i(y) = m_i (chi_0 - chi(y)) - beta_i K y_i - C_m^i`.
    pub fn org_utility(&self, org: usize, profile: &JointProfile) -> f64 {
        self.utility_breakdown(org, profile).utility()
    }

    /// Sum of all organizations' utilities, accumulated in org order.
    pub fn social_welfare(&self, profile: &JointProfile) -> f64 {
        (0..self.n_orgs).map(|i| self.org_utility(i, profile)).sum()
    }

    /// Utility of `org` when it alone trains for `rounds` rounds.
    fn solo_training_surplus(&self, org: usize, rounds: u32) -> f64 {
        let p = &self.orgs[org];
        let chi = self.precision_unchecked(rounds as u64);
        p.unit_revenue * (self.base_precision() - chi)
            - p.compute_coeff * self.local_iters as f64 * rounds as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityBreakdown {
    pub revenue: f64,
    pub computation_cost: f64,
    pub communication_cost: f64,
}

impl UtilityBreakdown {
    pub fn cost(&self) -> f64 {
        self.computation_cost + self.communication_cost
    }

    pub fn utility(&self) -> f64 {
        self.revenue - self.computation_cost - self.communication_cost
    }
}

/// Action vector `y`, one participation count per organization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointProfile(Vec<u32>);

impl JointProfile {
    pub fn new(actions: Vec<u32>) -> Self {
        Self(actions)
    }

    pub fn uniform(n_orgs: usize, action: u32) -> Self {
        Self(vec![action; n_orgs])
    }

    pub fn actions(&self) -> &[u32] {
        &self.0
    }

    pub fn actions_mut(&mut self) -> &mut [u32] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&a| a as u64).sum()
    }

    /// Copy of this profile with `org`'s action replaced.
    pub fn with_action(&self, org: usize, action: u32) -> Self {
        let mut next = self.clone();
        next.0[org] = action;
        next
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }
}

impl std::fmt::Display for JointProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl From<Vec<u32>> for JointProfile {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

/// Outcome of the exhaustive check that all-zero is a pure Nash equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NashCertification {
    /// Every unilateral deviation from all-zero was checked and none pays.
    /// `pure_equilibria` lists every pure equilibrium found by enumeration.
    Certified {
        profiles_checked: u64,
        pure_equilibria: Vec<JointProfile>,
    },
    /// Some organization strictly gains by leaving all-zero.
    Refuted {
        org: usize,
        deviation: u32,
        gain: f64,
        pure_equilibria: Vec<JointProfile>,
    },
    /// State space above the enumeration cap; only the analytic condition ran.
    Skipped { states: u128, cap: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilemmaReport {
    /// Per org: solo training for any `y_i in 1..=r` yields negative surplus.
    pub condition_holds_per_org: Vec<bool>,
    pub nash_profile: JointProfile,
    pub nash_welfare: f64,
    pub full_participation_welfare: f64,
    pub is_dilemma: bool,
    /// Full-participation welfare is positive. Reported, never enforced.
    pub premise_positive_model_value: bool,
    pub certification: NashCertification,
}

/// Social-dilemma analysis with the default enumeration cap.
pub fn analyze_dilemma(cfg: &GameConfig) -> Result<DilemmaReport> {
    analyze_dilemma_with_cap(cfg, DEFAULT_ENUMERATION_CAP)
}

pub fn analyze_dilemma_with_cap(cfg: &GameConfig, cap: u64) -> Result<DilemmaReport> {
    cfg.validate()?;
    let n = cfg.n_orgs;
    let condition_holds_per_org: Vec<bool> = (0..n)
        .map(|i| (1..=cfg.max_rounds).all(|y| cfg.solo_training_surplus(i, y) < 0.0))
        .collect();

    let nash_profile = JointProfile::uniform(n, 0);
    let full = JointProfile::uniform(n, cfg.max_rounds);
    let nash_welfare = cfg.social_welfare(&nash_profile);
    let full_participation_welfare = cfg.social_welfare(&full);

    let space = StateSpace::for_config(cfg)?;
    let certification = if space.len() > cap {
        NashCertification::Skipped {
            states: space.len() as u128,
            cap,
        }
    } else {
        certify_all_zero(cfg, &space)
    };

    let condition_all = condition_holds_per_org.iter().all(|&c| c);
    Ok(DilemmaReport {
        condition_holds_per_org,
        nash_profile,
        nash_welfare,
        full_participation_welfare,
        is_dilemma: condition_all && nash_welfare < full_participation_welfare,
        premise_positive_model_value: full_participation_welfare > 0.0,
        certification,
    })
}

/// Whether no organization strictly gains by a unilateral deviation.
pub fn is_pure_equilibrium(cfg: &GameConfig, profile: &JointProfile) -> bool {
    best_deviation(cfg, profile).is_none()
}

/// The largest strictly profitable unilateral deviation, if any, as
/// `(org, action, gain)`.
pub fn best_deviation(cfg: &GameConfig, profile: &JointProfile) -> Option<(usize, u32, f64)> {
    let mut best: Option<(usize, u32, f64)> = None;
    for i in 0..cfg.n_orgs {
        let base = cfg.org_utility(i, profile);
        for a in 0..=cfg.max_rounds {
            if a == profile.actions()[i] {
                continue;
            }
            let gain = cfg.org_utility(i, &profile.with_action(i, a)) - base;
            if gain > 0.0 && best.is_none_or(|(_, _, g)| gain > g) {
                best = Some((i, a, gain));
            }
        }
    }
    best
}

fn certify_all_zero(cfg: &GameConfig, space: &StateSpace) -> NashCertification {
    let pure_equilibria: Vec<JointProfile> = space
        .profiles()
        .filter(|p| is_pure_equilibrium(cfg, p))
        .collect();
    match best_deviation(cfg, &JointProfile::uniform(cfg.n_orgs, 0)) {
        None => NashCertification::Certified {
            profiles_checked: space.len(),
            pure_equilibria,
        },
        Some((org, deviation, gain)) => NashCertification::Refuted {
            org,
            deviation,
            gain,
            pure_equilibria,
        },
    }
}
