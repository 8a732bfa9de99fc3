//! Exact eigenvalue counting `N(T, λ) = #{eigenvalues of T strictly below λ}`.
//!
//! Counts come from the inertia of `T − λI` (Sylvester's law): a Sturm
//! sequence for tridiagonal matrices, a block `LDLᵀ` along lattice slices for
//! general finite-volume operators, and a dense eigensolve below
//! [`DENSE_CUTOFF`] rows. A threshold closer than [`SPECTRUM_TOL`]·‖T‖ to an
//! eigenvalue is reported as [`Error::ThresholdHitsSpectrum`] instead of being
//! resolved either way.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ldlt::Ldlt;
use crate::operator::SparseSymmetricOperator;

/// Relative distance (to the matrix norm) below which a threshold counts as
/// touching the spectrum.
pub const SPECTRUM_TOL: f64 = 1e-9;

/// Matrices smaller than this are counted by a dense eigensolve.
pub const DENSE_CUTOFF: usize = 512;

/// Budget of count evaluations for [`eigenvalues_in_window`].
pub const WINDOW_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InertiaResult {
    pub negatives: usize,
    pub zeros: usize,
    pub positives: usize,
}

impl InertiaResult {
    pub fn size(&self) -> usize {
        self.negatives + self.zeros + self.positives
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMethod {
    /// Sturm for tridiagonal, dense below the cutoff, block `LDLᵀ` otherwise.
    Auto,
    Sturm,
    BlockLdlt,
    Dense,
}

impl CountMethod {
    fn resolve(self, op: &SparseSymmetricOperator) -> Result<CountMethod> {
        Ok(match self {
            CountMethod::Auto => {
                if op.is_tridiagonal() {
                    CountMethod::Sturm
                } else if op.len() < DENSE_CUTOFF {
                    CountMethod::Dense
                } else {
                    CountMethod::BlockLdlt
                }
            }
            CountMethod::Sturm if !op.is_tridiagonal() => {
                return Err(Error::invalid(
                    "method",
                    "Sturm counting needs a tridiagonal operator",
                ))
            }
            m => m,
        })
    }
}

fn spectrum_tolerance(norm: f64) -> f64 {
    SPECTRUM_TOL * norm.max(1.0)
}

/// Number of negative pivots of the tridiagonal `T − λI`.
pub fn sturm_count(diagonal: &[f64], off_diag: &[f64], lambda: f64) -> usize {
    let n = diagonal.len();
    if n == 0 {
        return 0;
    }
    let scale = diagonal
        .iter()
        .map(|d| d.abs())
        .chain(off_diag.iter().map(|e| e.abs()))
        .fold(1.0, f64::max);
    let guard = f64::EPSILON * scale;
    let mut count = 0;
    let mut q = diagonal[0] - lambda;
    for i in 0..n {
        if i > 0 {
            let e = off_diag[i - 1];
            q = diagonal[i] - lambda - e * e / q;
        }
        if q.abs() < guard {
            q = -guard;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Block `LDLᵀ` factorization of `T − σI` along slices of constant first
/// lattice coordinate. Couplings only join a slice to its neighbours, so the
/// operator is block tridiagonal and the Schur complements
/// `S_k = T_kk − σI − B_k S_{k−1}^{-1} B_kᵀ` carry its inertia.
#[derive(Debug, Clone)]
pub struct BlockLdlt {
    slices: Vec<Range<usize>>,
    factors: Vec<Ldlt>,
    /// For each slice: `(local row, local row in previous slice)` of every coupling.
    back_links: Vec<Vec<(usize, usize)>>,
    /// `W_k = S_k^{-1} B_{k+1}ᵀ`, stored `m_k × m_{k+1}` row-major.
    w: Vec<Vec<f64>>,
}

impl BlockLdlt {
    pub fn factor(op: &SparseSymmetricOperator, shift: f64) -> BlockLdlt {
        let slices: Vec<Range<usize>> = op.slices().to_vec();
        let back_links: Vec<Vec<(usize, usize)>> = slices
            .iter()
            .enumerate()
            .map(|(k, r)| {
                if k == 0 {
                    return Vec::new();
                }
                let prev = &slices[k - 1];
                let mut links = Vec::new();
                for i in r.clone() {
                    for &j in op.neighbors(i) {
                        if prev.contains(&j) {
                            links.push((i - r.start, j - prev.start));
                        }
                    }
                }
                links
            })
            .collect();

        let mut factors = Vec::with_capacity(slices.len());
        let mut w: Vec<Vec<f64>> = Vec::with_capacity(slices.len());
        for (k, r) in slices.iter().enumerate() {
            let m = r.len();
            let mut s = vec![0.0; m * m];
            for (li, i) in r.clone().enumerate() {
                s[li * m + li] = op.diagonal()[i] - shift;
                for &j in op.neighbors(i) {
                    if r.contains(&j) {
                        s[li * m + (j - r.start)] = -1.0;
                    }
                }
            }
            if k > 0 {
                // S -= B_k W_{k-1}; B_k has a single −1 per linked row
                let wprev = &w[k - 1];
                let links = &back_links[k];
                // (B_k W_{k-1})[li][lc] = −W_{k-1}[lj][lc]; only linked columns are nonzero
                for &(li, lj) in links {
                    for &(lc, _) in links {
                        s[li * m + lc] += wprev[lj * m + lc];
                    }
                }
            }
            let f = Ldlt::factor_row_major(m, s);
            // W_k = S_k^{-1} B_{k+1}ᵀ; column c of B_{k+1}ᵀ is −e_j for each link (c, j)
            let wk = if k + 1 < slices.len() {
                let next_m = slices[k + 1].len();
                let mut wk = vec![0.0; m * next_m];
                let mut col = vec![0.0; m];
                for &(c, j) in &back_links[k + 1] {
                    col.iter_mut().for_each(|v| *v = 0.0);
                    col[j] = -1.0;
                    if f.solve_in_place(&mut col).is_err() {
                        col.iter_mut().for_each(|v| *v = f64::NAN);
                    }
                    for (row, v) in col.iter().enumerate() {
                        wk[row * next_m + c] = *v;
                    }
                }
                wk
            } else {
                Vec::new()
            };
            factors.push(f);
            w.push(wk);
        }
        BlockLdlt {
            slices,
            factors,
            back_links,
            w,
        }
    }

    pub fn inertia(&self) -> InertiaResult {
        let mut out = InertiaResult {
            negatives: 0,
            zeros: 0,
            positives: 0,
        };
        for f in &self.factors {
            let (n, z, p) = f.inertia();
            out.negatives += n;
            out.zeros += z;
            out.positives += p;
        }
        out
    }

    fn has_nan(&self) -> bool {
        self.w.iter().any(|wk| wk.iter().any(|v| v.is_nan()))
    }

    /// Overwrite `b` with `(T − σI)^{-1} b`.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        if self.has_nan() {
            return Err(Error::NumericalBreakdown("singular leading block".into()));
        }
        let nslices = self.slices.len();
        // forward: z_k = b_k − W_{k−1}ᵀ z_{k−1}
        for k in 1..nslices {
            let (prev, cur) = (self.slices[k - 1].clone(), self.slices[k].clone());
            let m_cur = cur.len();
            let wprev = &self.w[k - 1];
            for (lc, _) in &self.back_links[k] {
                let mut acc = 0.0;
                for (lj, j) in prev.clone().enumerate() {
                    acc += wprev[lj * m_cur + lc] * b[j];
                }
                b[cur.start + lc] -= acc;
            }
        }
        for (k, r) in self.slices.iter().enumerate() {
            self.factors[k].solve_in_place(&mut b[r.clone()])?;
        }
        // backward: x_k = u_k − W_k x_{k+1}
        for k in (0..nslices.saturating_sub(1)).rev() {
            let (cur, next) = (self.slices[k].clone(), self.slices[k + 1].clone());
            let m_next = next.len();
            let wk = &self.w[k];
            if self.back_links[k + 1].is_empty() {
                continue;
            }
            for (li, i) in cur.clone().enumerate() {
                let mut acc = 0.0;
                for &(c, _) in &self.back_links[k + 1] {
                    acc += wk[li * m_next + c] * b[next.start + c];
                }
                b[i] -= acc;
            }
        }
        Ok(())
    }
}

fn dense_eigenvalues(op: &SparseSymmetricOperator) -> Vec<f64> {
    let mut eig: Vec<f64> = op
        .to_dense()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Eigenvalues strictly below `lambda` using the given concrete method.
/// No collision check: thresholds on the spectrum resolve arbitrarily.
pub fn raw_count(op: &SparseSymmetricOperator, lambda: f64, method: CountMethod) -> Result<usize> {
    Ok(match method.resolve(op)? {
        CountMethod::Sturm => {
            let (d, e) = op.tridiagonal().expect("checked tridiagonal");
            sturm_count(&d, &e, lambda)
        }
        CountMethod::Dense => dense_eigenvalues(op)
            .iter()
            .filter(|&&v| v < lambda)
            .count(),
        CountMethod::BlockLdlt => BlockLdlt::factor(op, lambda).inertia().negatives,
        CountMethod::Auto => unreachable!(),
    })
}

/// Inertia of `T − λI`, with eigenvalues within the spectrum tolerance of
/// `λ` reported as zeros.
pub fn inertia_with(
    op: &SparseSymmetricOperator,
    lambda: f64,
    method: CountMethod,
) -> Result<InertiaResult> {
    if !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite"));
    }
    let n = op.len();
    let h = spectrum_tolerance(op.norm_bound());
    let (below, through) = match method.resolve(op)? {
        CountMethod::Dense => {
            let eig = dense_eigenvalues(op);
            (
                eig.iter().filter(|&&v| v < lambda - h).count(),
                eig.iter().filter(|&&v| v < lambda + h).count(),
            )
        }
        m => (raw_count(op, lambda - h, m)?, raw_count(op, lambda + h, m)?),
    };
    if through < below {
        return Err(Error::NumericalBreakdown(format!(
            "inconsistent counts {below} > {through} around {lambda}"
        )));
    }
    Ok(InertiaResult {
        negatives: below,
        zeros: through - below,
        positives: n - through,
    })
}

/// Eigenvalues below `λ − h`, where `h` is the spectrum tolerance: the
/// `negatives` field of [`inertia`] at half the cost, for callers that treat
/// eigenvalues at `λ` as not below it.
pub fn negatives_below(op: &SparseSymmetricOperator, lambda: f64) -> Result<usize> {
    if !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite"));
    }
    raw_count(
        op,
        lambda - spectrum_tolerance(op.norm_bound()),
        CountMethod::Auto,
    )
}

pub fn inertia(op: &SparseSymmetricOperator, lambda: f64) -> Result<InertiaResult> {
    inertia_with(op, lambda, CountMethod::Auto)
}

/// Number of eigenvalues strictly below `lambda`.
pub fn count_below(op: &SparseSymmetricOperator, lambda: f64) -> Result<usize> {
    count_below_with(op, lambda, CountMethod::Auto)
}

pub fn count_below_with(
    op: &SparseSymmetricOperator,
    lambda: f64,
    method: CountMethod,
) -> Result<usize> {
    let inr = inertia_with(op, lambda, method)?;
    if inr.zeros > 0 {
        return Err(Error::ThresholdHitsSpectrum {
            threshold: lambda,
            tolerance: spectrum_tolerance(op.norm_bound()),
        });
    }
    Ok(inr.negatives)
}

/// All eigenvalues in `(a, b)`, ascending, resolved by bisection on the count.
pub fn eigenvalues_in_window(op: &SparseSymmetricOperator, a: f64, b: f64) -> Result<Vec<f64>> {
    if !(a < b) {
        return Err(Error::invalid(
            "window",
            format!("need a < b, got ({a}, {b})"),
        ));
    }
    let method = CountMethod::Auto.resolve(op)?;
    if method == CountMethod::Dense {
        return Ok(dense_eigenvalues(op)
            .into_iter()
            .filter(|&v| a < v && v < b)
            .collect());
    }
    let tol = 1e-12 * op.norm_bound().max(a.abs()).max(b.abs()).max(1.0);
    let mut budget = WINDOW_BUDGET;
    let mut count = |x: f64| -> Result<usize> {
        if budget == 0 {
            return Err(Error::WindowTooWide {
                budget: WINDOW_BUDGET,
            });
        }
        budget -= 1;
        raw_count(op, x, method)
    };
    // eigenvalues equal to `a` are excluded by counting just above it
    let a_eff = a + tol;
    let mut out = Vec::new();
    let mut stack = vec![(a_eff, b, count(a_eff)?, count(b)?)];
    while let Some((lo, hi, clo, chi)) = stack.pop() {
        if chi <= clo {
            continue;
        }
        if hi - lo <= tol {
            let mid = 0.5 * (lo + hi);
            out.extend(std::iter::repeat_n(mid, chi - clo));
            continue;
        }
        let mid = 0.5 * (lo + hi);
        // roundoff can break monotonicity right next to a cluster
        let cmid = count(mid)?.clamp(clo, chi);
        stack.push((mid, hi, cmid, chi));
        stack.push((lo, mid, clo, cmid));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Sorted spectrum of a dense symmetric matrix, for repeated `n₊` queries.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    eigenvalues: Vec<f64>,
    tolerance: f64,
}

impl SymmetricSpectrum {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let mut eigenvalues: Vec<f64> = if x.nrows() == 0 {
            Vec::new()
        } else {
            x.clone().symmetric_eigenvalues().iter().copied().collect()
        };
        eigenvalues.sort_by(f64::total_cmp);
        let norm = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        SymmetricSpectrum {
            eigenvalues,
            tolerance: spectrum_tolerance(norm),
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn largest(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }

    /// Number of eigenvalues strictly greater than `s > 0`.
    pub fn n_plus(&self, s: f64) -> Result<usize> {
        if !(s > 0.0) {
            return Err(Error::invalid("s", format!("must be > 0, got {s}")));
        }
        if self
            .eigenvalues
            .iter()
            .any(|&v| (v - s).abs() <= self.tolerance)
        {
            return Err(Error::ThresholdHitsSpectrum {
                threshold: s,
                tolerance: self.tolerance,
            });
        }
        Ok(self.eigenvalues.iter().filter(|&&v| v > s).count())
    }
}

/// `n₊(s, X)`: number of eigenvalues of the symmetric matrix `X` greater than `s`.
pub fn n_plus(x: &DMatrix<f64>, s: f64) -> Result<usize> {
    SymmetricSpectrum::new(x).n_plus(s)
}

/// Inertia of `X − λI` for an arbitrary dense symmetric matrix via Bunch–Kaufman.
pub fn dense_inertia(x: &DMatrix<f64>, lambda: f64) -> InertiaResult {
    let mut shifted = x.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] -= lambda;
    }
    let (negatives, zeros, positives) = Ldlt::factor(&shifted).inertia();
    InertiaResult {
        negatives,
        zeros,
        positives,
    }
}
