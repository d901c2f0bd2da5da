//! Mixed-radix encoding of joint action profiles.
//!
//! Organization 1 is the most significant digit, so
//! `index = sum_i y_i * (r+1)^(N-1-i)` (zero-based `i`). States where
//! organization 1 plays 0 form the contiguous block `0..(r+1)^(N-1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameConfig, JointProfile};

/// Index of a joint profile in the enumerated state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateIndex(pub u64);

impl StateIndex {
    pub fn get(self) -> u64 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for StateIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    n_orgs: usize,
    radix: u64,
    len: u64,
    /// `place[i] = radix^(n-1-i)`
    place: Vec<u64>,
}

impl StateSpace {
    /// Fails when `(r+1)^N` does not fit in a `u64`.
    pub fn new(n_orgs: usize, max_rounds: u32) -> Result<Self> {
        let radix = max_rounds as u64 + 1;
        let mut place = vec![1u64; n_orgs];
        let mut len: u64 = 1;
        for i in (0..n_orgs).rev() {
            place[i] = len;
            len = len.checked_mul(radix).ok_or_else(|| {
                Error::config(
                    "game",
                    format!("(r+1)^N = {radix}^{n_orgs} states cannot be indexed in 64 bits"),
                )
            })?;
        }
        Ok(Self {
            n_orgs,
            radix,
            len,
            place,
        })
    }

    pub fn for_config(cfg: &GameConfig) -> Result<Self> {
        Self::new(cfg.n_orgs, cfg.max_rounds)
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_orgs(&self) -> usize {
        self.n_orgs
    }

    pub fn action_count(&self) -> usize {
        self.radix as usize
    }

    /// Number of states sharing one organization's action, `(r+1)^(N-1)`.
    pub fn slice_len(&self) -> u64 {
        self.len / self.radix
    }

    /// State count as `usize`, or an error if it exceeds `cap`.
    pub fn enumerable(&self, cap: u64) -> Result<usize> {
        if self.len > cap {
            Err(Error::StateSpaceTooLarge {
                states: self.len as u128,
                cap,
            })
        } else {
            Ok(self.len as usize)
        }
    }

    pub fn encode(&self, profile: &JointProfile) -> StateIndex {
        debug_assert_eq!(profile.len(), self.n_orgs);
        StateIndex(
            profile
                .actions()
                .iter()
                .zip(&self.place)
                .map(|(&a, &p)| a as u64 * p)
                .sum(),
        )
    }

    pub fn decode(&self, index: StateIndex) -> JointProfile {
        debug_assert!(index.0 < self.len);
        JointProfile::new(
            self.place
                .iter()
                .map(|&p| ((index.0 / p) % self.radix) as u32)
                .collect(),
        )
    }

    /// Action of `org` in state `index`, without decoding the whole profile.
    pub fn action(&self, index: StateIndex, org: usize) -> u32 {
        ((index.0 / self.place[org]) % self.radix) as u32
    }

    pub fn indices(&self) -> impl Iterator<Item = StateIndex> {
        (0..self.len).map(StateIndex)
    }

    /// All profiles in index order.
    pub fn profiles(&self) -> impl Iterator<Item = JointProfile> + '_ {
        self.indices().map(move |j| self.decode(j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn organization_one_is_most_significant() {
        let s = StateSpace::new(2, 1).unwrap();
        let order: Vec<_> = s.profiles().map(|p| p.into_inner()).collect();
        assert_eq!(order, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn leading_block_is_org_one_idle() {
        let s = StateSpace::new(3, 2).unwrap();
        assert_eq!(s.slice_len(), 9);
        for j in s.indices() {
            assert_eq!(s.action(j, 0) == 0, j.0 < 9);
        }
    }

    #[test]
    fn full_scale_fits() {
        let s = StateSpace::new(10, 33).unwrap();
        assert_eq!(s.len(), 34u64.pow(10));
        assert!(s.enumerable(4096).is_err());
        assert!(StateSpace::new(64, 33).is_err());
    }

    #[test]
    fn exhaustive_bijection_small_spaces() {
        for n in 1..=4usize {
            for r in 1..=7u32 {
                let s = StateSpace::new(n, r).unwrap();
                if s.len() > 4096 {
                    continue;
                }
                for j in s.indices() {
                    let p = s.decode(j);
                    assert_eq!(s.encode(&p), j);
                    for (org, &a) in p.actions().iter().enumerate() {
                        assert_eq!(s.action(j, org), a);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn roundtrip_random_profiles(n in 2usize..=10, r in 1u32..=33, seed in any::<u64>()) {
            let s = StateSpace::new(n, r).unwrap();
            let mut x = seed;
            let actions: Vec<u32> = (0..n).map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((x >> 33) % (r as u64 + 1)) as u32
            }).collect();
            let p = JointProfile::new(actions);
            prop_assert_eq!(s.decode(s.encode(&p)), p);
        }
    }
}
