//! Stochastic validation, k-step tensors, regularity/ergodicity checks, the
//! reduced first-order chain, and limiting distributions.

use std::collections::HashSet;
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::error::{HomcError, Result};
use crate::tensor::{bool_box_product_into, CubicalTensor, Matrix, Shape};

/// Default tolerance for stochastic validation. Entries within this distance
/// of [0, 1] are clamped so downstream positivity patterns stay clean.
pub const DEFAULT_STOCHASTIC_TOL: f64 = 1e-10;

/// Default iteration parameters for [`TransitionTensor::stationary_distribution`].
pub const DEFAULT_STATIONARY_TOL: f64 = 1e-12;
pub const DEFAULT_STATIONARY_MAX_ITER: usize = 1_000_000;

// ---------------------------------------------------------------------------
// TransitionTensor
// ---------------------------------------------------------------------------

/// A cubical tensor validated as stochastic: every entry lies in [0, 1] and
/// each column over the first index sums to 1 (both up to `stochastic_tol`
/// at validation time; entries are clamped to [0, 1] afterwards).
///
/// Entry `(i1, i2, ..., im)` is the transition probability from the context
/// `(i2, ..., im)` (current state first, then past states) to next state `i1`.
#[derive(Debug, Clone)]
pub struct TransitionTensor {
    tensor: CubicalTensor,
    stochastic_tol: f64,
}

impl TransitionTensor {
    /// Validates and wraps a tensor, clamping entries to [0, 1] when they are
    /// within `tol`. Fails with the offending trailing tuple otherwise.
    pub fn validate(tensor: CubicalTensor, tol: f64) -> Result<Self> {
        if tol < 0.0 || !tol.is_finite() {
            return Err(HomcError::InvalidArgument(format!(
                "stochastic tolerance must be nonnegative, got {tol}"
            )));
        }
        let mut tensor = tensor;
        let shape = tensor.shape();
        let n = shape.dim();
        let trailing = shape.trailing_count();
        {
            let values = tensor.values_mut();
            for t in 0..trailing {
                let col = &mut values[t * n..(t + 1) * n];
                let mut sum = 0.0;
                for v in col.iter() {
                    if *v < -tol || *v > 1.0 + tol {
                        return Err(HomcError::NotStochastic {
                            column: trailing_tuple(t, &shape),
                            detail: format!("entry {v} outside [0, 1]"),
                        });
                    }
                    sum += *v;
                }
                if (sum - 1.0).abs() > tol {
                    return Err(HomcError::NotStochastic {
                        column: trailing_tuple(t, &shape),
                        detail: format!("column sums to {sum}"),
                    });
                }
                for v in col.iter_mut() {
                    *v = v.clamp(0.0, 1.0);
                }
            }
        }
        Ok(TransitionTensor {
            tensor,
            stochastic_tol: tol,
        })
    }

    pub fn tensor(&self) -> &CubicalTensor {
        &self.tensor
    }

    pub fn shape(&self) -> Shape {
        self.tensor.shape()
    }

    pub fn stochastic_tol(&self) -> f64 {
        self.stochastic_tol
    }

    /// The k-step transition tensor, i.e. the k-th box power. `k >= 1`.
    pub fn k_step(&self, k: usize) -> Result<CubicalTensor> {
        if k == 0 {
            return Err(HomcError::InvalidArgument(
                "k-step tensor requires k >= 1".into(),
            ));
        }
        Ok(self.tensor.box_power(k))
    }

    /// Checks regularity: does some box power `P^k`, `k <= kmax`, have all
    /// entries positive? Iterates boolean positivity patterns (sound because
    /// entries are nonnegative, so no cancellation). Patterns over a finite
    /// space are eventually periodic, so a revisited pattern without an
    /// all-true member refutes regularity outright.
    pub fn check_regular(&self, kmax: usize) -> ReachabilityVerdict {
        let shape = self.shape();
        let base: Vec<bool> = self.tensor.values().iter().map(|&v| v > 0.0).collect();
        let mut pattern = base.clone();
        let mut scratch = vec![false; pattern.len()];
        let mut seen = HashSet::new();
        seen.insert(hash_bools(&pattern));
        for k in 1..=kmax.max(1) {
            if pattern.iter().all(|&b| b) {
                return ReachabilityVerdict::confirmed(k, kmax);
            }
            if k == kmax {
                break;
            }
            bool_box_product_into(&pattern, &base, &shape, &mut scratch);
            std::mem::swap(&mut pattern, &mut scratch);
            if !seen.insert(hash_bools(&pattern)) {
                return ReachabilityVerdict::refuted(kmax);
            }
        }
        ReachabilityVerdict::undetermined(kmax)
    }

    /// Checks ergodicity: does every entry become positive in *some* box
    /// power `k <= kmax`? Accumulates the union of positivity patterns;
    /// a repeated (pattern, union) pair with an incomplete union means the
    /// iteration has entered a cycle that can never grow the union.
    pub fn check_ergodic(&self, kmax: usize) -> ReachabilityVerdict {
        let shape = self.shape();
        let base: Vec<bool> = self.tensor.values().iter().map(|&v| v > 0.0).collect();
        let mut pattern = base.clone();
        let mut union = base.clone();
        let mut scratch = vec![false; pattern.len()];
        let mut seen = HashSet::new();
        seen.insert((hash_bools(&pattern), hash_bools(&union)));
        for k in 1..=kmax.max(1) {
            if union.iter().all(|&b| b) {
                return ReachabilityVerdict::confirmed(k, kmax);
            }
            if k == kmax {
                break;
            }
            bool_box_product_into(&pattern, &base, &shape, &mut scratch);
            std::mem::swap(&mut pattern, &mut scratch);
            for (u, &p) in union.iter_mut().zip(pattern.iter()) {
                *u |= p;
            }
            if !seen.insert((hash_bools(&pattern), hash_bools(&union))) {
                return ReachabilityVerdict::refuted(kmax);
            }
        }
        ReachabilityVerdict::undetermined(kmax)
    }

    /// Transition matrix `Q` of the reduced first-order chain on the
    /// `N = n^(m-1)` sliding contexts. Equals `khatri_rao(G, matricize(P, 1))`
    /// with `G` the horizontal concatenation of `n` identity matrices of size
    /// `n^(m-2)`; `G` is never materialized — column `t` of the mode-1
    /// matricization is written directly into row block `t mod n^(m-2)`.
    /// For `m = 2` this returns the transition matrix itself.
    pub fn reduced_chain_matrix(&self) -> ReducedChainMatrix {
        let shape = self.shape();
        let n = shape.dim();
        let reduced = shape.trailing_count();
        let block = shape.context_count();
        let mut q = Matrix::zeros(reduced, reduced);
        let values = self.tensor.values();
        for t in 0..reduced {
            let row_base = (t % block) * n;
            for i1 in 0..n {
                let p = values[t * n + i1];
                if p != 0.0 {
                    q.set(row_base + i1, t, p);
                }
            }
        }
        ReducedChainMatrix {
            q,
            source_shape: shape,
        }
    }

    /// One step of distribution propagation: `x = P_(1) * y` where `P_(1)` is
    /// the mode-1 matricization (which is exactly the flat layout, so no
    /// matrix is formed). `y` is a distribution over the `n^(m-1)` contexts;
    /// the result is the next-state distribution over the `n` states.
    pub fn propagate(&self, y: &Distribution) -> Result<Distribution> {
        let shape = self.shape();
        let n = shape.dim();
        if y.len() != shape.trailing_count() {
            return Err(HomcError::ShapeMismatch(format!(
                "distribution length {} does not match context count {}",
                y.len(),
                shape.trailing_count()
            )));
        }
        let values = self.tensor.values();
        let mut x = vec![0.0; n];
        for (t, &w) in y.probs().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let col = &values[t * n..(t + 1) * n];
            for (i, v) in col.iter().enumerate() {
                x[i] += v * w;
            }
        }
        Distribution::new(x)
    }

    /// Limiting probability distribution via an averaged power iteration on
    /// the reduced chain matrix `Q`.
    ///
    /// Iterates `z <- (z + Qz) / 2` from the uniform vector until
    /// `||Qz - z||_1 < tol`. The averaging maps every unit-modulus eigenvalue
    /// of `Q` except 1 strictly inside the unit disk, so the iteration
    /// converges geometrically for every column-stochastic `Q` (including
    /// periodic ones, where the plain power sequence oscillates), and each
    /// iterate stays a probability vector. Returns the fixed point `y`, the
    /// chain distribution `pi` obtained by marginalizing `y` over the current
    /// state, and the final residual `||Qy - y||_1`.
    ///
    /// For regular chains `pi` is the unique limiting distribution. For
    /// chains that are not regular the result is still a fixed point of `Q`
    /// reachable from the uniform start, reported with its residual, but it
    /// carries no limiting-distribution interpretation.
    pub fn stationary_distribution(&self, tol: f64, max_iter: usize) -> Result<StationaryResult> {
        if tol <= 0.0 || !tol.is_finite() {
            return Err(HomcError::InvalidArgument(format!(
                "stationary tolerance must be positive, got {tol}"
            )));
        }
        let rcm = self.reduced_chain_matrix();
        let reduced = rcm.q.rows();
        let mut z = vec![1.0 / reduced as f64; reduced];
        let mut residual = f64::INFINITY;
        for iterations in 0..=max_iter {
            let w = rcm.q.matvec(&z)?;
            residual = z.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
            if residual < tol {
                let y = Distribution::new(z)?;
                let pi = marginal_from_reduced(self.shape().dim(), &y)?;
                return Ok(StationaryResult {
                    pi,
                    y,
                    iterations,
                    residual,
                });
            }
            for (zi, wi) in z.iter_mut().zip(&w) {
                *zi = 0.5 * (*zi + wi);
            }
            // guard against rounding drift of the total mass over long runs
            let total: f64 = z.iter().sum();
            for zi in z.iter_mut() {
                *zi /= total;
            }
        }
        Err(HomcError::NonConvergence {
            what: "stationary distribution iteration",
            iterations: max_iter,
            residual,
        })
    }
}

/// 1-based trailing tuple `(i2, ..., im)` for a trailing offset.
fn trailing_tuple(mut offset: usize, shape: &Shape) -> Vec<usize> {
    let n = shape.dim();
    let mut tuple = Vec::with_capacity(shape.order() - 1);
    for _ in 0..shape.order() - 1 {
        tuple.push(offset % n + 1);
        offset /= n;
    }
    tuple
}

fn hash_bools(bits: &[bool]) -> u64 {
    let mut h = DefaultHasher::new();
    bits.hash(&mut h);
    h.finish()
}

/// Default horizon for regularity/ergodicity checks: `min(n^m, 10^4)`.
pub fn default_kmax(shape: Shape) -> usize {
    shape.element_count().min(10_000)
}

/// Marginalizes a reduced-chain distribution onto the current state:
/// `pi_i = sum over contexts whose first component is i`. This is the action
/// of the mode-1 matricization of the identity tensor.
pub fn marginal_from_reduced(dim: usize, y: &Distribution) -> Result<Distribution> {
    if y.len() % dim != 0 {
        return Err(HomcError::ShapeMismatch(format!(
            "reduced distribution length {} is not a multiple of dim {}",
            y.len(),
            dim
        )));
    }
    let mut pi = vec![0.0; dim];
    for (r, &p) in y.probs().iter().enumerate() {
        pi[r % dim] += p;
    }
    Distribution::new(pi)
}

// ---------------------------------------------------------------------------
// Distribution
// ---------------------------------------------------------------------------

/// A probability vector: nonnegative entries summing to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let mut probs = probs;
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -1e-12 {
                return Err(HomcError::InvalidDistribution(format!(
                    "entry {p} is negative or non-finite"
                )));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
            sum += *p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(HomcError::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Distribution { probs })
    }

    /// Builds a distribution by rescaling a nonnegative vector to unit sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let mut weights = weights;
        let mut sum = 0.0;
        for w in &weights {
            if !w.is_finite() || *w < 0.0 {
                return Err(HomcError::InvalidDistribution(format!(
                    "weight {w} is negative or non-finite"
                )));
            }
            sum += *w;
        }
        if sum <= 0.0 {
            return Err(HomcError::InvalidDistribution(
                "weights sum to zero".into(),
            ));
        }
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(Distribution { probs: weights })
    }

    pub fn uniform(len: usize) -> Self {
        Distribution {
            probs: vec![1.0 / len as f64; len],
        }
    }

    /// Point mass at a zero-based position.
    pub fn point_mass(len: usize, at: usize) -> Result<Self> {
        if at >= len {
            return Err(HomcError::InvalidDistribution(format!(
                "point mass position {at} outside 0..{len}"
            )));
        }
        let mut probs = vec![0.0; len];
        probs[at] = 1.0;
        Ok(Distribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Reachability verdicts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReachStatus {
    /// A witness power was found within the horizon.
    Confirmed,
    /// The pattern iteration entered a cycle that can never succeed.
    RefutedWithinHorizon,
    /// The horizon was exhausted without a witness or a cycle.
    Undetermined,
}

/// Outcome of a regularity or ergodicity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReachabilityVerdict {
    pub status: ReachStatus,
    /// Smallest witnessing power; present iff confirmed.
    pub witness_k: Option<usize>,
    /// The kmax that was searched.
    pub horizon: usize,
}

impl ReachabilityVerdict {
    fn confirmed(witness_k: usize, horizon: usize) -> Self {
        ReachabilityVerdict {
            status: ReachStatus::Confirmed,
            witness_k: Some(witness_k),
            horizon,
        }
    }

    fn refuted(horizon: usize) -> Self {
        ReachabilityVerdict {
            status: ReachStatus::RefutedWithinHorizon,
            witness_k: None,
            horizon,
        }
    }

    fn undetermined(horizon: usize) -> Self {
        ReachabilityVerdict {
            status: ReachStatus::Undetermined,
            witness_k: None,
            horizon,
        }
    }

    pub fn is_confirmed(&self) -> bool {
        self.status == ReachStatus::Confirmed
    }
}

// ---------------------------------------------------------------------------
// ReducedChainMatrix
// ---------------------------------------------------------------------------

/// The `N x N` transition matrix of the reduced first-order chain,
/// `N = n^(m-1)`. Column-stochastic by construction from a validated
/// transition tensor.
#[derive(Debug, Clone)]
pub struct ReducedChainMatrix {
    q: Matrix,
    source_shape: Shape,
}

impl ReducedChainMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn source_shape(&self) -> Shape {
        self.source_shape
    }

    pub fn size(&self) -> usize {
        self.q.rows()
    }
}

/// Result of [`TransitionTensor::stationary_distribution`].
#[derive(Debug, Clone)]
pub struct StationaryResult {
    /// Limiting distribution over the `n` states.
    pub pi: Distribution,
    /// Fixed point of `Q` over the `n^(m-1)` contexts.
    pub y: Distribution,
    pub iterations: usize,
    /// Final `||Qy - y||_1`.
    pub residual: f64,
}
