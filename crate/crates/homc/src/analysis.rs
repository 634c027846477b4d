//! Ever-reaching probabilities, state classification, and mean first passage
//! times.
//!
//! The ever-reaching tensor is the entrywise series `F = sum_k F^[k]` with
//! `F^[1] = P` and `F^[k+1] = (F^[k] - F^[k]_d) box P`; entry `(i1, i2...im)`
//! is the probability of ever reaching state `i1` from context `(i2...im)`.
//!
//! The mean first passage time tensor is the unique solution (for ergodic
//! chains) of `mu = E + (mu - mu_d) box P`, solved either directly block by
//! block or by fixed-point iteration from `mu = E`.

use crate::chain::TransitionTensor;
use crate::error::{HomcError, Result};
use crate::tensor::{box_product_into, reverse_digits, CubicalTensor};

/// Default series/iteration tolerance shared by the ever-reaching series and
/// the iterative mean first passage solver.
pub const DEFAULT_SERIES_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_TERMS: usize = 100_000;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Default classification threshold; diagonal values below `1 - class_tol`
/// count as sub-unit.
pub const DEFAULT_CLASS_TOL: f64 = 1e-3;

/// Pivot magnitude below which an eliminated block is reported singular.
const SINGULAR_PIVOT: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Ever-reaching probabilities
// ---------------------------------------------------------------------------

/// Truncated ever-reaching probability tensor with convergence metadata.
#[derive(Debug, Clone)]
pub struct EverReachResult {
    /// Partial sum of the first-passage series; an approximation to `F`.
    pub f: CubicalTensor,
    /// Number of series terms included in the sum.
    pub terms_used: usize,
    /// True iff the last included term fell below the tolerance.
    pub converged: bool,
    /// Max-abs entry of the final term.
    pub last_term_max: f64,
}

/// Sums the first-passage series until the max-abs entry of the current term
/// drops below `tol` (converged) or `max_terms` terms have been added (not
/// converged — reported, never an error, since no tail bound is available).
/// Uses two scratch tensors beyond the accumulator.
pub fn ever_reaching(
    p: &TransitionTensor,
    tol: f64,
    max_terms: usize,
) -> Result<EverReachResult> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(HomcError::InvalidArgument(format!(
            "series tolerance must be positive, got {tol}"
        )));
    }
    if max_terms == 0 {
        return Err(HomcError::InvalidArgument(
            "max_terms must be at least 1".into(),
        ));
    }
    let mut acc = p.tensor().clone();
    let mut term = p.tensor().clone();
    let mut scratch = CubicalTensor::zeros(p.shape());
    let mut terms_used = 1usize;
    loop {
        let last_term_max = term.max_abs();
        if last_term_max < tol {
            return Ok(EverReachResult {
                f: acc,
                terms_used,
                converged: true,
                last_term_max,
            });
        }
        if terms_used == max_terms {
            return Ok(EverReachResult {
                f: acc,
                terms_used,
                converged: false,
                last_term_max,
            });
        }
        // next term: (term - term_d) box P, the subtraction fused into the
        // kernel by skipping j == i1
        box_product_into(&term, p.tensor(), true, scratch.values_mut());
        std::mem::swap(&mut term, &mut scratch);
        for (a, t) in acc.values_mut().iter_mut().zip(term.values()) {
            *a += t;
        }
        terms_used += 1;
    }
}

// ---------------------------------------------------------------------------
// State classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateClass {
    /// Every diagonal ever-reaching value equals 1 (within tolerance).
    Recurrent,
    /// Some but not all diagonal values fall below 1.
    Transient,
    /// Every diagonal value falls below 1.
    FullyTransient,
}

impl StateClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            StateClass::Recurrent => "recurrent",
            StateClass::Transient => "transient",
            StateClass::FullyTransient => "fully-transient",
        }
    }
}

/// Per-state classification derived from the diagonal fibers of `F`.
#[derive(Debug, Clone)]
pub struct ClassificationReport {
    /// Label of each state `1..=n`.
    pub labels: Vec<StateClass>,
    /// For each state, the `n^(m-2)` values `f[i, i, i3..im]`.
    pub diagonal_values: Vec<Vec<f64>>,
    /// Threshold used: a value counts as "below 1" when `< 1 - class_tol`.
    pub class_tol: f64,
}

/// Applies the recurrent / transient / fully-transient trichotomy to the
/// diagonal of an ever-reaching tensor. The series should have been computed
/// with a tolerance well below `class_tol` for the thresholding to be
/// meaningful (advisory, not enforced).
pub fn classify_states(er: &EverReachResult, class_tol: f64) -> ClassificationReport {
    let shape = er.f.shape();
    let n = shape.dim();
    let contexts = shape.context_count();
    let values = er.f.values();
    let threshold = 1.0 - class_tol;
    let mut labels = Vec::with_capacity(n);
    let mut diagonal_values = Vec::with_capacity(n);
    for i in 0..n {
        let diag_base = i + i * n;
        let fibers: Vec<f64> = (0..contexts)
            .map(|ctx| values[diag_base + ctx * n * n])
            .collect();
        let below = fibers.iter().filter(|&&v| v < threshold).count();
        let label = if below == 0 {
            StateClass::Recurrent
        } else if below == fibers.len() {
            StateClass::FullyTransient
        } else {
            StateClass::Transient
        };
        labels.push(label);
        diagonal_values.push(fibers);
    }
    ClassificationReport {
        labels,
        diagonal_values,
        class_tol,
    }
}

// ---------------------------------------------------------------------------
// Mean first passage times
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfptMethod {
    Direct,
    Iterative,
}

impl MfptMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MfptMethod::Direct => "direct",
            MfptMethod::Iterative => "iterative",
        }
    }
}

/// Mean first passage time tensor with solver metadata.
#[derive(Debug, Clone)]
pub struct MfptResult {
    pub mu: CubicalTensor,
    pub method: MfptMethod,
    /// Fixed-point iterations performed; 0 for the direct solver.
    pub iterations: usize,
    /// Max-abs entry of `mu - E - (mu - mu_d) box P`.
    pub residual_max: f64,
}

/// Direct solver. The linear system over all of `mu` is block diagonal with
/// one `N x N` block per target state (`N = n^(m-1)`) once the unknowns are
/// arranged in reversed linear order; each block is assembled densely and
/// eliminated with partial pivoting, independently of the others.
///
/// A numerically singular block signals a non-ergodic chain and is reported
/// as an error naming the target state.
pub fn mfpt_direct(p: &TransitionTensor) -> Result<MfptResult> {
    let shape = p.shape();
    let n = shape.dim();
    let m = shape.order();
    let reduced = shape.trailing_count();
    let block_cols = shape.context_count(); // n^(m-2)
    let values = p.tensor().values();

    let mut mu = CubicalTensor::zeros(shape);
    // one dense block at a time bounds peak memory at N^2 + O(N)
    let mut a = vec![0.0f64; reduced * reduced];
    let mut x = vec![0.0f64; reduced];
    for target in 0..n {
        a.fill(0.0);
        x.fill(1.0);
        for t_fwd in 0..reduced {
            // row index in reversed order of the trailing tuple
            let row = reverse_digits(t_fwd, m - 1, n);
            a[row * reduced + row] += 1.0;
            // unknown (j, i2..i(m-1)) sits at j*n^(m-2) + floor(row/n)
            let col_base = row / n;
            for j in 0..n {
                if j == target {
                    continue;
                }
                let pj = values[t_fwd * n + j];
                if pj != 0.0 {
                    a[row * reduced + j * block_cols + col_base] -= pj;
                }
            }
        }
        solve_in_place(&mut a, &mut x, reduced).map_err(|_| HomcError::SingularBlock {
            block: target + 1,
        })?;
        // scatter: mu[target, t] = x[reversed(t)]
        let out = mu.values_mut();
        for t_fwd in 0..reduced {
            out[t_fwd * n + target] = x[reverse_digits(t_fwd, m - 1, n)];
        }
    }
    let residual_max = mfpt_residual_max(&mu, p);
    Ok(MfptResult {
        mu,
        method: MfptMethod::Direct,
        iterations: 0,
        residual_max,
    })
}

/// Gaussian elimination with partial pivoting on a row-major square matrix,
/// solving in place into `b`. Fails when the best available pivot is
/// (numerically) zero.
fn solve_in_place(a: &mut [f64], b: &mut [f64], size: usize) -> std::result::Result<(), ()> {
    for col in 0..size {
        let mut piv = col;
        let mut best = a[col * size + col].abs();
        for r in col + 1..size {
            let v = a[r * size + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < SINGULAR_PIVOT {
            return Err(());
        }
        if piv != col {
            for c in col..size {
                a.swap(col * size + c, piv * size + c);
            }
            b.swap(col, piv);
        }
        let (pivot_rows, rest) = a.split_at_mut((col + 1) * size);
        let pivot_row = &pivot_rows[col * size..];
        let pivot = pivot_row[col];
        let b_col = b[col];
        for (r_off, row) in rest.chunks_mut(size).enumerate() {
            let r = col + 1 + r_off;
            let factor = row[col] / pivot;
            if factor != 0.0 {
                for c in col..size {
                    row[c] -= factor * pivot_row[c];
                }
                b[r] -= factor * b_col;
            }
        }
    }
    for r in (0..size).rev() {
        let mut s = b[r];
        for c in r + 1..size {
            s -= a[r * size + c] * b[c];
        }
        b[r] = s / a[r * size + r];
    }
    Ok(())
}

/// Fixed-point solver: iterates `mu <- E + (mu - mu_d) box P` from `mu0`
/// (default: the all-ones tensor, a valid lower bound since every mean first
/// passage time is at least 1) until the max-abs difference between
/// successive iterates drops below `tol`. Convergence is guaranteed for
/// ergodic chains; anything else runs into the iteration cap.
pub fn mfpt_iterative(
    p: &TransitionTensor,
    mu0: Option<&CubicalTensor>,
    tol: f64,
    max_iter: usize,
) -> Result<MfptResult> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(HomcError::InvalidArgument(format!(
            "iteration tolerance must be positive, got {tol}"
        )));
    }
    let shape = p.shape();
    let mut mu = match mu0 {
        Some(t) if t.shape() != shape => {
            return Err(HomcError::ShapeMismatch(
                "initial guess shape does not match transition tensor".into(),
            ));
        }
        Some(t) => t.clone(),
        None => CubicalTensor::ones(shape),
    };
    let mut scratch = CubicalTensor::zeros(shape);
    let mut diff = f64::INFINITY;
    for iteration in 1..=max_iter {
        box_product_into(&mu, p.tensor(), true, scratch.values_mut());
        diff = 0.0f64;
        for (nxt, old) in scratch.values_mut().iter_mut().zip(mu.values()) {
            *nxt += 1.0;
            diff = diff.max((*nxt - old).abs());
        }
        std::mem::swap(&mut mu, &mut scratch);
        if diff < tol {
            let residual_max = mfpt_residual_max(&mu, p);
            return Ok(MfptResult {
                mu,
                method: MfptMethod::Iterative,
                iterations: iteration,
                residual_max,
            });
        }
    }
    Err(HomcError::NonConvergence {
        what: "mean first passage iteration",
        iterations: max_iter,
        residual: diff,
    })
}

/// Max-abs entry of the fixed-point residual `mu - E - (mu - mu_d) box P`.
pub fn mfpt_residual_max(mu: &CubicalTensor, p: &TransitionTensor) -> f64 {
    let mut prod = CubicalTensor::zeros(mu.shape());
    box_product_into(mu, p.tensor(), true, prod.values_mut());
    mu.values()
        .iter()
        .zip(prod.values())
        .fold(0.0f64, |acc, (m, r)| acc.max((m - 1.0 - r).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::TransitionTensor;
    use crate::tensor::{CubicalTensor, Shape};

    fn chain(m: usize, n: usize, values: &[f64]) -> TransitionTensor {
        let t = CubicalTensor::new(Shape::new(m, n).unwrap(), values.to_vec()).unwrap();
        TransitionTensor::validate(t, 1e-12).unwrap()
    }

    fn periodic3() -> TransitionTensor {
        let slice = [0., 1., 0., 0.5, 0., 0.5, 0., 1., 0.];
        let mut v = Vec::new();
        for _ in 0..3 {
            v.extend_from_slice(&slice);
        }
        chain(3, 3, &v)
    }

    fn first3() -> TransitionTensor {
        chain(2, 3, &[0.5, 0.5, 0., 0.5, 0., 0.5, 0., 1., 0.])
    }

    // 3-state second-order chain with one transient, one recurrent, and one
    // fully transient state
    fn mixed3() -> TransitionTensor {
        let third = 1.0 / 3.0;
        let s1 = [0.5, 0.5, 0., third, third, third, 0.5, 0., 0.5];
        let s2 = [1., 0., 0., 0., 1., 0., 0.5, 0.5, 0.];
        let s3 = [0., 1., 0., 0., 0., 1., 0.5, 0.5, 0.];
        let mut v = Vec::new();
        for s in [s1, s2, s3] {
            v.extend_from_slice(&s);
        }
        chain(3, 3, &v)
    }

    #[test]
    fn ever_reaching_ergodic_chain_is_all_ones() {
        let er = ever_reaching(&periodic3(), 1e-6, 100_000).unwrap();
        assert!(er.converged);
        // the truncation tail is of the same order as the tolerance; the
        // observed gap is ~2 tol
        for v in er.f.values() {
            assert!((v - 1.0).abs() < 4e-6, "entry {v}");
        }
    }

    #[test]
    fn ever_reaching_absorbing_first_order() {
        // states 1 and 2 both absorbing: F = I, series stops at term 2
        let p = chain(2, 2, &[1., 0., 0., 1.]);
        let er = ever_reaching(&p, 1e-8, 100).unwrap();
        assert!(er.converged);
        assert_eq!(er.terms_used, 2);
        assert_eq!(er.f.values(), &[1., 0., 0., 1.]);
    }

    #[test]
    fn ever_reaching_partial_sums_monotone_and_bounded() {
        let p = mixed3();
        let mut acc = p.tensor().clone();
        let mut term = p.tensor().clone();
        let mut scratch = CubicalTensor::zeros(p.shape());
        for _ in 0..200 {
            for t in term.values() {
                assert!(*t >= 0.0 && *t <= 1.0 + 1e-12);
            }
            box_product_into(&term, p.tensor(), true, scratch.values_mut());
            std::mem::swap(&mut term, &mut scratch);
            let before = acc.values().to_vec();
            for (a, t) in acc.values_mut().iter_mut().zip(term.values()) {
                *a += t;
            }
            for (after, before) in acc.values().iter().zip(before) {
                assert!(*after >= before - 1e-15);
                assert!(*after <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn ever_reaching_reports_truncation() {
        let er = ever_reaching(&mixed3(), 1e-12, 3).unwrap();
        assert!(!er.converged);
        assert_eq!(er.terms_used, 3);
        assert!(er.last_term_max >= 1e-12);
    }

    #[test]
    fn classify_mixed_chain() {
        let er = ever_reaching(&mixed3(), 1e-8, 100_000).unwrap();
        let report = classify_states(&er, 1e-3);
        assert_eq!(
            report.labels,
            vec![
                StateClass::Transient,
                StateClass::Recurrent,
                StateClass::FullyTransient
            ]
        );
        assert_eq!(report.diagonal_values[0].len(), 3);
    }

    #[test]
    fn classify_periodic_chain_all_recurrent() {
        let er = ever_reaching(&periodic3(), 1e-8, 100_000).unwrap();
        let report = classify_states(&er, 1e-3);
        assert!(report
            .labels
            .iter()
            .all(|l| *l == StateClass::Recurrent));
    }

    #[test]
    fn classify_absorbing_state_recurrent() {
        // n=2, m=3: state 1 absorbs from every context
        let v = [1., 0., 0.3, 0.7, 1., 0., 0.6, 0.4];
        let er = ever_reaching(&chain(3, 2, &v), 1e-9, 100_000).unwrap();
        let report = classify_states(&er, 1e-3);
        assert_eq!(report.labels[0], StateClass::Recurrent);
    }

    #[test]
    fn mfpt_direct_periodic_chain_exact() {
        let res = mfpt_direct(&periodic3()).unwrap();
        let expect_slice = [4., 1., 4., 3., 2., 3., 4., 1., 4.];
        for ctx in 0..3 {
            assert_eq!(&res.mu.values()[ctx * 9..(ctx + 1) * 9], &expect_slice);
        }
        assert_eq!(res.iterations, 0);
        assert!(res.residual_max <= 1e-12);
    }

    #[test]
    fn mfpt_direct_first_order() {
        let res = mfpt_direct(&first3()).unwrap();
        let expect = [2.5, 2., 6., 3., 2.5, 4., 4., 1., 5.];
        for (a, e) in res.mu.values().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn mfpt_direct_first_order_matches_classical_equation() {
        // independent first-order oracle: M = E + (M - M_d) P solved as one
        // n^2 x n^2 system by a local elimination, no block structure
        let p = first3();
        let n = 3;
        let size = n * n;
        let pv = p.tensor().values();
        // unknowns M[i][j] flattened row-major; equation for (i, j):
        // M[i][j] - sum_{k != i} M[i][k] p[k][j] = 1
        let mut a = vec![0.0f64; size * size];
        let mut b = vec![1.0f64; size];
        for i in 0..n {
            for j in 0..n {
                let row = i * n + j;
                a[row * size + row] += 1.0;
                for k in 0..n {
                    if k == i {
                        continue;
                    }
                    a[row * size + (i * n + k)] -= pv[j * n + k];
                }
            }
        }
        for col in 0..size {
            let piv = (col..size)
                .max_by(|&r1, &r2| {
                    a[r1 * size + col]
                        .abs()
                        .partial_cmp(&a[r2 * size + col].abs())
                        .unwrap()
                })
                .unwrap();
            for c in 0..size {
                a.swap(col * size + c, piv * size + c);
            }
            b.swap(col, piv);
            for r in col + 1..size {
                let f = a[r * size + col] / a[col * size + col];
                for c in col..size {
                    a[r * size + c] -= f * a[col * size + c];
                }
                b[r] -= f * b[col];
            }
        }
        for r in (0..size).rev() {
            let mut s = b[r];
            for c in r + 1..size {
                s -= a[r * size + c] * b[c];
            }
            b[r] = s / a[r * size + r];
        }
        let res = mfpt_direct(&p).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mine = res.mu.values()[j * n + i];
                assert!((mine - b[i * n + j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mfpt_direct_singular_for_absorbing_chain() {
        let p = chain(2, 2, &[1., 0., 0., 1.]);
        match mfpt_direct(&p) {
            Err(HomcError::SingularBlock { block }) => assert!(block >= 1),
            other => panic!("expected singular block, got {other:?}"),
        }
    }

    #[test]
    fn mfpt_iterative_first_step_is_two_minus_p() {
        let p = mixed3();
        let e = CubicalTensor::ones(p.shape());
        let mut step = CubicalTensor::zeros(p.shape());
        box_product_into(&e, p.tensor(), true, step.values_mut());
        for (s, pv) in step.values().iter().zip(p.tensor().values()) {
            // (E - E_d) box P entry = sum_{j != i1} p_j = 1 - p; adding E
            // gives the first iterate 2 - p
            assert!((s + 1.0 - (2.0 - pv)).abs() < 1e-14);
        }
    }

    #[test]
    fn mfpt_iterative_matches_direct() {
        let p = periodic3();
        let direct = mfpt_direct(&p).unwrap();
        let iter = mfpt_iterative(&p, None, 1e-9, 100_000).unwrap();
        for (a, b) in iter.mu.values().iter().zip(direct.mu.values()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(iter.residual_max <= 1e-8);
        for v in iter.mu.values() {
            assert!(*v >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn mfpt_iterative_monotone_from_ones() {
        let p = first3();
        let mut prev = CubicalTensor::ones(p.shape());
        let mut next = CubicalTensor::zeros(p.shape());
        for _ in 0..30 {
            box_product_into(&prev, p.tensor(), true, next.values_mut());
            for v in next.values_mut() {
                *v += 1.0;
            }
            for (c, pr) in next.values().iter().zip(prev.values()) {
                assert!(*c >= pr - 1e-12, "iterate decreased: {c} < {pr}");
            }
            std::mem::swap(&mut prev, &mut next);
        }
    }

    #[test]
    fn mfpt_iterative_nonconvergence_reported() {
        // absorbing chain: passage times to the other state are infinite
        let p = chain(2, 2, &[1., 0., 0., 1.]);
        match mfpt_iterative(&p, None, 1e-6, 50) {
            Err(HomcError::NonConvergence { iterations, .. }) => assert_eq!(iterations, 50),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn mfpt_iterative_accepts_custom_start() {
        let p = periodic3();
        let direct = mfpt_direct(&p).unwrap();
        let warm = mfpt_iterative(&p, Some(&direct.mu), 1e-12, 10).unwrap();
        assert_eq!(warm.iterations, 1);
        let bad = CubicalTensor::ones(Shape::new(2, 3).unwrap());
        assert!(mfpt_iterative(&p, Some(&bad), 1e-6, 10).is_err());
    }
}
