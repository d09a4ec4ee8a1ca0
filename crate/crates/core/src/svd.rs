//! Singular value decompositions with a deterministic sign convention.
//!
//! Factorizations are delegated to `faer`; this module owns the contract the
//! rest of the crate relies on: singular values sorted nonincreasing, column
//! orthonormal factors, and signs fixed so that in every right singular
//! vector the entry of largest magnitude (lowest row on ties) is nonnegative.

use faer::Mat;
use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Relative tolerance below which singular values count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdFactors {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `u diag(sigma) vᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.sigma.view().insert_axis(ndarray::Axis(0));
        us.dot(&self.v.t())
    }

    /// Leading `r` triplets.
    pub fn truncate(&self, r: usize) -> SvdFactors {
        let r = r.min(self.rank());
        SvdFactors {
            u: self.u.slice(s![.., ..r]).to_owned(),
            sigma: self.sigma.slice(s![..r]).to_owned(),
            v: self.v.slice(s![.., ..r]).to_owned(),
        }
    }

    /// Number of singular values above `RANK_TOL * sigma[0]`.
    pub fn numerical_rank(&self) -> usize {
        numerical_rank(self.sigma.as_slice().unwrap_or(&self.sigma.to_vec()))
    }
}

pub fn numerical_rank(sigma: &[f64]) -> usize {
    match sigma.first() {
        Some(&s0) if s0 > 0.0 => sigma.iter().filter(|&&s| s > RANK_TOL * s0).count(),
        _ => 0,
    }
}

pub(crate) fn to_faer(a: ArrayView2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: faer::MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Thin SVD: all `min(n, p)` triplets.
pub fn thin_svd(a: ArrayView2<f64>) -> Result<SvdFactors> {
    let (n, p) = a.dim();
    if n == 0 || p == 0 {
        return Ok(SvdFactors {
            u: Array2::zeros((n, 0)),
            sigma: Array1::zeros(0),
            v: Array2::zeros((p, 0)),
        });
    }
    let m = to_faer(a);
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let u_f = svd.U();
    let v_f = svd.V();
    let mut u = Array2::zeros((n, k));
    let mut v = Array2::zeros((p, k));
    let mut sigma = Array1::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = s[src].max(0.0);
        for i in 0..n {
            u[[i, dst]] = u_f[(i, src)];
        }
        for i in 0..p {
            v[[i, dst]] = v_f[(i, src)];
        }
    }
    let mut f = SvdFactors { u, sigma, v };
    apply_sign_convention(&mut f);
    Ok(f)
}

/// Rank-`r` truncated SVD of a raw array.
pub fn truncated_svd_array(a: ArrayView2<f64>, r: usize) -> Result<SvdFactors> {
    let max = a.nrows().min(a.ncols());
    if r > max {
        return Err(Error::RankTooLarge { requested: r, max });
    }
    Ok(thin_svd(a)?.truncate(r))
}

/// Rank-`r` truncated SVD (best rank-`r` approximation in Frobenius norm).
///
/// If the matrix has numerical rank below `r` the trailing singular values
/// are at rounding level; callers that need a full-rank factor check
/// [`SvdFactors::numerical_rank`].
pub fn truncated_svd(m: &FeatureMatrix, r: usize) -> Result<SvdFactors> {
    if r == 0 {
        return Err(Error::InvalidInput("truncation rank must be positive".into()));
    }
    truncated_svd_array(m.values().view(), r)
}

/// All singular values, nonincreasing.
pub fn singular_values(a: ArrayView2<f64>) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let m = to_faer(a);
    let mut s = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    s.sort_by(|a, b| b.total_cmp(a));
    for v in &mut s {
        *v = v.max(0.0);
    }
    Ok(s)
}

/// Orthonormal basis for the column space via thin QR. Assumes full column
/// rank.
pub fn orthonormalize(a: ArrayView2<f64>) -> Array2<f64> {
    let m = to_faer(a);
    let q = m.qr().compute_thin_Q();
    from_faer(q.as_ref())
}

/// In each column of `v`, make the largest-magnitude entry (first one on
/// ties) nonnegative; flip the matching column of `u` too.
pub fn apply_sign_convention(f: &mut SvdFactors) {
    for k in 0..f.v.ncols() {
        let col = f.v.column(k);
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            f.v.column_mut(k).mapv_inplace(|x| -x);
            f.u.column_mut(k).mapv_inplace(|x| -x);
        }
    }
}

/// `max |aᵀa - I|` entrywise.
pub fn orthonormality_error(a: ArrayView2<f64>) -> f64 {
    let g = a.t().dot(&a);
    g.indexed_iter()
        .map(|((i, j), &x)| (x - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Squared Frobenius norm.
pub fn frob2(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}
