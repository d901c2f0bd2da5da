//! Transition matrices of one-round-memory strategy profiles and their
//! stationary distributions.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::state::StateSpace;
use crate::strategy::Strategy;

/// Row-sum tolerance for a valid transition matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-10;
/// Required `||vM - v||_inf` of a returned stationary vector.
pub const STATIONARY_RESIDUAL: f64 = 1e-8;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Transition probabilities at or below this are structural zeros when
/// classifying communicating classes.
pub const STRUCTURAL_ZERO: f64 = 1e-14;
/// Largest chain for which the SVD rank diagnostic runs.
pub const SVD_DIAGNOSTIC_LIMIT: usize = 1024;
/// Largest chain for which the adjugate route runs (`n^2` minors).
pub const ADJUGATE_LIMIT: usize = 64;

/// Dense one-step transition matrix over the enumerated state space:
/// `M[v][w] = prod_i p^i_{v, a_i(w)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    space: StateSpace,
    m: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Wraps a dense matrix after checking shape, entry range and row sums.
    pub fn from_dense(space: StateSpace, m: DMatrix<f64>) -> Result<Self> {
        let n = space.len() as usize;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension(format!(
                "{}x{} matrix for {n} states",
                m.nrows(),
                m.ncols()
            )));
        }
        for (v, row) in m.row_iter().enumerate() {
            if let Some(x) = row
                .iter()
                .find(|x| !(**x >= 0.0 && **x <= 1.0 + ROW_SUM_TOLERANCE))
            {
                return Err(Error::Numerical(format!(
                    "entry {x} in row {v} outside [0,1]"
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Numerical(format!("row {v} sums to {s}")));
            }
        }
        Ok(Self { space, m })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn len(&self) -> usize {
        self.m.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `M - I`.
    pub fn shifted(&self) -> DMatrix<f64> {
        &self.m - DMatrix::identity(self.len(), self.len())
    }

    /// `||vM - v||_inf`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        let row = DVector::from_column_slice(v).transpose() * &self.m;
        row.iter()
            .zip(v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn build_transition_matrix(
    strategies: &[Strategy],
    cfg: &GameConfig,
    cap: u64,
) -> Result<TransitionMatrix> {
    if strategies.len() != cfg.n_orgs {
        return Err(Error::Dimension(format!(
            "{} strategies for {} orgs",
            strategies.len(),
            cfg.n_orgs
        )));
    }
    let space = StateSpace::for_config(cfg)?;
    let n = space.enumerable(cap)?;
    let mut m = DMatrix::zeros(n, n);
    for v in space.indices() {
        let prior = space.decode(v);
        let rows = strategies
            .iter()
            .map(|s| s.row(cfg, &prior))
            .collect::<Result<Vec<_>>>()?;
        for w in space.indices() {
            let mut p = 1.0;
            for (i, row) in rows.iter().enumerate() {
                p *= row[space.action(w, i) as usize];
                if p == 0.0 {
                    break;
                }
            }
            m[(v.as_usize(), w.as_usize())] = p;
        }
    }
    TransitionMatrix::from_dense(space, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryMethod {
    NullSpace,
    PowerIteration,
    AdjugateRow,
}

/// Two independent counts of the stationary-space dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankDiagnostic {
    /// Closed communicating classes of the support graph.
    pub structural: usize,
    /// Singular values of `M - I` below `RANK_TOLERANCE * sigma_max`.
    pub numeric: usize,
    /// Counts at cutoffs 100x tighter and 100x looser than the default.
    pub numeric_tight: usize,
    pub numeric_loose: usize,
}

impl RankDiagnostic {
    pub fn ambiguous(&self) -> bool {
        self.structural != self.numeric || self.numeric_tight != self.numeric_loose
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryResult {
    /// One probability vector per closed class, ordered by smallest state.
    pub distributions: Vec<Vec<f64>>,
    pub multiplicity: usize,
    pub method: StationaryMethod,
    /// `None` when the chain is above [`SVD_DIAGNOSTIC_LIMIT`] or the method
    /// does not compute it.
    pub rank: Option<RankDiagnostic>,
    /// Set when the rank counts disagree near the tolerance.
    pub flagged: bool,
}

/// Basis of the left null space of `M - I`, one nonnegative normalized vector
/// per closed communicating class.
pub fn stationary_distribution(tm: &TransitionMatrix) -> Result<StationaryResult> {
    let n = tm.len();
    let classes = closed_classes(tm);
    let mut distributions = Vec::with_capacity(classes.len());
    for class in &classes {
        let local = solve_class(tm, class)?;
        let mut v = vec![0.0; n];
        for (&s, &p) in class.iter().zip(&local) {
            v[s] = p;
        }
        let res = tm.residual(&v);
        if res > STATIONARY_RESIDUAL {
            return Err(Error::Numerical(format!(
                "stationary residual {res:e} on class starting at state {}",
                class[0]
            )));
        }
        distributions.push(v);
    }
    let rank = (n <= SVD_DIAGNOSTIC_LIMIT).then(|| rank_diagnostic(tm, classes.len()));
    Ok(StationaryResult {
        multiplicity: distributions.len(),
        distributions,
        method: StationaryMethod::NullSpace,
        flagged: rank.is_some_and(|r| r.ambiguous()),
        rank,
    })
}

/// Closed strongly connected components of the support graph, each sorted,
/// ordered by smallest member.
fn closed_classes(tm: &TransitionMatrix) -> Vec<Vec<usize>> {
    let n = tm.len();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n);
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for v in 0..n {
        for w in 0..n {
            if tm.m[(v, w)] > STRUCTURAL_ZERO {
                g.add_edge(nodes[v], nodes[w], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut component = vec![0usize; n];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter()
                .all(|node| g.neighbors(*node).all(|next| component[next.index()] == *c))
        })
        .map(|(_, scc)| {
            let mut members: Vec<usize> = scc.iter().map(|x| x.index()).collect();
            members.sort_unstable();
            members
        })
        .collect();
    closed.sort_by_key(|c| c[0]);
    closed
}

/// Solves `v (M_CC - I) = 0, sum v = 1` on one closed class.
fn solve_class(tm: &TransitionMatrix, class: &[usize]) -> Result<Vec<f64>> {
    let c = class.len();
    if c == 1 {
        return Ok(vec![1.0]);
    }
    // a = (M_CC - I)^T with the last equation replaced by normalization
    let mut a = DMatrix::<f64>::zeros(c, c);
    for (i, &v) in class.iter().enumerate() {
        for (k, &w) in class.iter().enumerate() {
            a[(k, i)] = tm.m[(v, w)] - if v == w { 1.0 } else { 0.0 };
        }
    }
    for i in 0..c {
        a[(c - 1, i)] = 1.0;
    }
    let mut b = DVector::zeros(c);
    b[c - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular system on a closed class".into()))?;
    clamp_normalize(x.iter().copied().collect())
}

fn clamp_normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(x) = v.iter().find(|x| **x < -1e-12) {
        return Err(Error::Numerical(format!(
            "stationary entry {x:e} is negative beyond tolerance"
        )));
    }
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s.is_nan() || s <= 0.0 {
        return Err(Error::Numerical("stationary vector has zero mass".into()));
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(v)
}

fn rank_diagnostic(tm: &TransitionMatrix, structural: usize) -> RankDiagnostic {
    let sv = tm.shifted().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let count = |rel: f64| {
        if smax == 0.0 {
            sv.len()
        } else {
            sv.iter().filter(|&&s| s <= rel * smax).count()
        }
    };
    RankDiagnostic {
        structural,
        numeric: count(RANK_TOLERANCE),
        numeric_tight: count(RANK_TOLERANCE * 1e-2),
        numeric_loose: count(RANK_TOLERANCE * 1e2),
    }
}

/// Power iteration from the uniform distribution; only meaningful on
/// aperiodic irreducible chains.
pub fn stationary_power(
    tm: &TransitionMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryResult> {
    let n = tm.len();
    let mt = tm.m.transpose();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iter {
        let next = &mt * &v;
        let delta = (&next - &v).amax();
        v = next;
        if delta < tol {
            let dist = clamp_normalize(v.iter().copied().collect())?;
            return Ok(StationaryResult {
                distributions: vec![dist],
                multiplicity: 1,
                method: StationaryMethod::PowerIteration,
                rank: None,
                flagged: false,
            });
        }
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge in {max_iter} steps"
    )))
}

/// Stationary vector from a row of `adj(M - I)`.
///
/// `adj(A) A = det(A) I = 0`, so every row of the adjugate lies in the left
/// null space, and because `A 1 = 0` all rows coincide. Expanding a
/// determinant along a column therefore gives `E = v.f / v.1`, which is the
/// determinant-ratio form of the stationary expectation.
pub fn stationary_adjugate(tm: &TransitionMatrix) -> Result<StationaryResult> {
    let n = tm.len();
    if n > ADJUGATE_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            states: n as u128,
            cap: ADJUGATE_LIMIT as u64,
        });
    }
    if n == 1 {
        return Ok(StationaryResult {
            distributions: vec![vec![1.0]],
            multiplicity: 1,
            method: StationaryMethod::AdjugateRow,
            rank: None,
            flagged: false,
        });
    }
    let a = tm.shifted();
    // row 0 of adj(A): adj[0][j] = (-1)^j det(A without row j and column 0)
    let row: Vec<f64> = (0..n)
        .map(|j| {
            let minor = a.clone().remove_row(j).remove_column(0);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor.determinant()
        })
        .collect();
    let scale = row.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let sum: f64 = row.iter().sum();
    if scale == 0.0 || sum.abs() <= 1e-14 * scale {
        return Err(Error::Numerical(
            "adjugate row vanishes; stationary distribution is not unique".into(),
        ));
    }
    let v: Vec<f64> = row.iter().map(|x| x / sum).collect();
    Ok(StationaryResult {
        distributions: vec![clamp_normalize(v)?],
        multiplicity: 1,
        method: StationaryMethod::AdjugateRow,
        rank: None,
        flagged: false,
    })
}

/// Stationary expectation `v.f / v.1`.
pub fn expected_value(v: &[f64], f: &[f64]) -> Result<f64> {
    if v.len() != f.len() {
        return Err(Error::Dimension(format!(
            "distribution has {} entries, payoff vector {}",
            v.len(),
            f.len()
        )));
    }
    let num: f64 = v.iter().zip(f).map(|(a, b)| a * b).sum();
    let den: f64 = v.iter().sum();
    Ok(num / den)
}

/// `p_hat_j = p^i_{j,g} - 1{a_i(j) = g}`: the sum of all columns of `M - I`
/// whose org-`org` action is `g`. Depends on `org`'s strategy only.
pub fn controlled_column(
    strategy: &Strategy,
    org: usize,
    slice: u32,
    cfg: &GameConfig,
    cap: u64,
) -> Result<Vec<f64>> {
    let table = strategy.tabulate(cfg, cap)?;
    let space = table.space();
    Ok(space
        .indices()
        .map(|j| {
            let ind = if space.action(j, org) == slice {
                1.0
            } else {
                0.0
            };
            table.prob(j, slice) - ind
        })
        .collect())
}
