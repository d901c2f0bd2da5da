//! Game-theoretic engine for the cross-silo federated learning public goods game.
//!
//! Organizations choose how many global aggregation rounds `y_i in {0..r}` to
//! contribute to a shared model. The crate covers:
//!
//! * [`game`]: the utility model and the social-dilemma analysis,
//! * [`state`] and [`strategy`]: mixed-radix joint-action states and
//!   one-round-memory strategies, including the baseline families,
//! * [`markov`]: transition matrices, stationary distributions and the
//!   controlled column of `M - I`,
//! * [`mmzd`]: synthesis of multi-player multi-action zero-determinant
//!   strategies that pin the long-run social welfare,
//! * [`sim`]: seeded Monte-Carlo tournaments,
//! * [`config`] and [`output`]: the JSON run configuration and CSV emission.

pub mod config;
pub mod error;
pub mod game;
pub mod markov;
pub mod mmzd;
pub mod output;
pub mod sim;
pub mod state;
pub mod strategy;

pub use error::{Error, Result};
pub use game::{analyze_dilemma, DilemmaReport, GameConfig, JointProfile, OrgParams};
pub use markov::{StationaryResult, TransitionMatrix};
pub use mmzd::{AlphaBounds, Completion, PinningResult, PinningSpec};
pub use sim::{SimPlan, Trajectory};
pub use state::{StateIndex, StateSpace};
pub use strategy::{Baseline, BaselineKind, Strategy, StrategyKind};

/// States at or below this count are enumerated exactly (matrix builds,
/// Nash certification, exact alpha0 bounds).
pub const DEFAULT_ENUMERATION_CAP: u64 = 4096;
