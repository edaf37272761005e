//! Quadratic-Wasserstein computations and the interpolation decoder.
//!
//! For a fixed representation `S~` of a source `S`, the best achievable
//! distortion at realism budget `P` is
//!
//! ```text
//! distortion = mmse + [( sqrt(w2_full) - sqrt(P) )+]^2
//! perception = min(w2_full, P)
//! ```
//!
//! where `mmse = E[|S - S~|^2]` and `w2_full = W2^2(p_S, p_S~)`. The optimum
//! is attained by blending `S~` with a perceptually perfect transport draw
//! `S'`: `S* = (1 - lambda) S' + lambda S~`, `lambda = sqrt(P / w2_full)`
//! clipped to `[0, 1]`. This module provides the Gaussian closed form of
//! `W2^2`, the exact 1-D empirical version, the blend, and the predicted
//! operating point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{bracket_term, distortion_rate};
use crate::types::ext_f64;

const SYMMETRY_TOL: f64 = 1e-12;
const EIGEN_FLOOR: f64 = -1e-10;

// ---------------------------------------------------------------------------
// Gaussian moments
// ---------------------------------------------------------------------------

/// First and second moments of a multivariate Gaussian; the covariance is
/// validated symmetric (tolerance 1e-12, relative to the largest entry) and
/// positive semidefinite (eigenvalues above -1e-10, clipped to 0).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || mean.len() != cov.nrows() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        for &m in &mean {
            if !m.is_finite() {
                return Err(Error::NonFiniteInput {
                    name: "mean[..]",
                    value: m,
                });
            }
        }
        let scale = cov.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
        for i in 0..cov.nrows() {
            for j in (i + 1)..cov.ncols() {
                let delta = (cov[(i, j)] - cov[(j, i)]).abs();
                if !delta.is_finite() || delta > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        delta,
                    });
                }
            }
        }
        let eigen = cov.clone().symmetric_eigen();
        let min_eig = eigen.eigenvalues.min();
        if min_eig < EIGEN_FLOOR * scale {
            return Err(Error::NotPsd {
                eigenvalue: min_eig,
            });
        }
        // Clip the numerically negative part; leave exact inputs untouched.
        let cov = if min_eig < 0.0 {
            let clipped = DMatrix::from_diagonal(&eigen.eigenvalues.map(|l| l.max(0.0)));
            &eigen.eigenvectors * clipped * eigen.eigenvectors.transpose()
        } else {
            cov
        };
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
        })
    }

    /// Independent coordinates: diagonal covariance from per-axis variances.
    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: variances.len(),
            });
        }
        for &v in &variances {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput {
                    name: "variances[..]",
                    value: v,
                });
            }
            if v < 0.0 {
                return Err(Error::NegativeVariance {
                    name: "variances[..]",
                    value: v,
                });
            }
        }
        let cov = DMatrix::from_diagonal(&DVector::from_vec(variances));
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Symmetric PSD square root via eigendecomposition; eigenvalues below the
/// clip floor are an error, the rest are clamped at 0.
fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
    let eigen = m.clone().symmetric_eigen();
    let min_eig = eigen.eigenvalues.min();
    if min_eig < EIGEN_FLOOR * scale {
        return Err(Error::NotPsd {
            eigenvalue: min_eig,
        });
    }
    let roots = DMatrix::from_diagonal(&eigen.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eigen.eigenvectors * roots * eigen.eigenvectors.transpose())
}

/// Squared Gaussian W2:
/// `|m_a - m_b|^2 + tr(S_a + S_b - 2 (S_b^1/2 S_a S_b^1/2)^1/2)`.
pub fn w2_gaussian(a: &GaussianMoments, b: &GaussianMoments) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let rb = sqrt_psd(&b.cov)?;
    let mut inner = &rb * &a.cov * &rb;
    // Symmetrize away multiplication round-off before the second root.
    let inner_t = inner.transpose();
    inner = (inner + inner_t) * 0.5;
    let cross = sqrt_psd(&inner)?;
    let mean_gap = (&a.mean - &b.mean).norm_squared();
    let trace = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    let w2 = mean_gap + trace;
    debug_assert!(w2 > -1e-9, "w2 came out negative: {w2}");
    Ok(w2.max(0.0))
}

/// Exact squared 1-D empirical W2 between equal-size samples: sort both and
/// average the squared gaps of matched order statistics.
pub fn w2_empirical_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput { name: "xs" });
    }
    if xs.len() != ys.len() {
        return Err(Error::UnequalCounts {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).expect("samples must not contain NaN"));
    b.sort_by(|p, q| p.partial_cmp(q).expect("samples must not contain NaN"));
    let n = a.len() as f64;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

// ---------------------------------------------------------------------------
// Interpolation decoder
// ---------------------------------------------------------------------------

/// Blends the MMSE-style representation `s_tilde` with the perceptually
/// perfect draw `s_prime`: `(1 - lambda) s' + lambda s~` with
/// `lambda = sqrt(P / w2_full)` clipped to `[0, 1]`. Returns `s_tilde`
/// unchanged when the budget covers the full mismatch or the mismatch is 0.
pub fn interpolate_reconstruction(
    s_tilde: &[f64],
    s_prime: &[f64],
    w2_full: f64,
    p: f64,
) -> Result<Vec<f64>> {
    if s_tilde.len() != s_prime.len() {
        return Err(Error::UnequalCounts {
            left: s_tilde.len(),
            right: s_prime.len(),
        });
    }
    if p.is_nan() || p == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput { name: "P", value: p });
    }
    if p < 0.0 {
        return Err(Error::NegativeBudget { name: "P", value: p });
    }
    if !w2_full.is_finite() {
        return Err(Error::NonFiniteInput {
            name: "w2_full",
            value: w2_full,
        });
    }
    if w2_full < 0.0 {
        return Err(Error::NegativeBudget {
            name: "w2_full",
            value: w2_full,
        });
    }
    if w2_full == 0.0 || p >= w2_full {
        return Ok(s_tilde.to_vec());
    }
    let lambda = (p / w2_full).sqrt().min(1.0);
    Ok(s_tilde
        .iter()
        .zip(s_prime)
        .map(|(&t, &pr)| (1.0 - lambda) * pr + lambda * t)
        .collect())
}

// ---------------------------------------------------------------------------
// Predicted operating point
// ---------------------------------------------------------------------------

/// Predicted operating point of the interpolation decoder for a fixed
/// representation with the stated MMSE and full mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DPPoint {
    pub mmse: f64,
    pub w2_full: f64,
    #[serde(rename = "P", with = "ext_f64")]
    pub p: f64,
    pub distortion: f64,
    pub perception: f64,
}

pub fn dp_tradeoff_point(mmse: f64, w2_full: f64, p: f64) -> Result<DPPoint> {
    for (name, v) in [("mmse", mmse), ("w2_full", w2_full)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteInput { name, value: v });
        }
        if v < 0.0 {
            return Err(Error::Domain {
                what: format!("{name} must be nonnegative, got {v}"),
            });
        }
    }
    if p.is_nan() || p == f64::NEG_INFINITY {
        return Err(Error::NonFiniteInput { name: "P", value: p });
    }
    if p < 0.0 {
        return Err(Error::NegativeBudget { name: "P", value: p });
    }
    Ok(DPPoint {
        mmse,
        w2_full,
        p,
        distortion: mmse + bracket_term(w2_full, p),
        perception: w2_full.min(p),
    })
}

/// Single-letter reference for a scalar Gaussian test channel at rate `R`
/// without common randomness: both the MMSE and the full mismatch equal the
/// distortion-rate value `gamma * 2^(-2R)`.
pub fn gaussian_dp_reference(gamma: f64, rate: f64, p: f64) -> Result<DPPoint> {
    let d = distortion_rate(gamma, rate)?;
    dp_tradeoff_point(d, d, p)
}

// ---------------------------------------------------------------------------
