//! One-sided kernel-weighted polynomial least squares.
//!
//! Regressors are powers of `(x - c) / scale`; coefficients are reported
//! back in raw units of `(x - c)`. The fitted coefficients are kept as
//! explicit linear combinations of the outcomes so that variances of any
//! linear functional (such as a bias-corrected intercept) can be formed.

use serde::{Deserialize, Serialize};

use crate::data::{RDDataset, Side};
use crate::error::{RdError, Result};
use crate::kernel::KernelSpec;
use crate::linalg::spd_inverse;

/// Highest polynomial order accepted by the engine (order 3 estimation plus
/// one extra order for bias estimation, and the quartic plot overlay).
pub const MAX_ORDER: usize = 4;

/// Leverages this close to one are not inflated by the HC3 correction.
const LEVERAGE_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct PolyFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub leverage: Vec<f64>,
    /// `coef_weights[k][i]`: weight of outcome `i` in raw coefficient `k`.
    pub coef_weights: Vec<Vec<f64>>,
}

impl PolyFit {
    /// HC3 squared residuals `e² / (1 - h)²`.
    pub fn hc3_sq_residuals(&self) -> Vec<f64> {
        self.residuals
            .iter()
            .zip(&self.leverage)
            .map(|(&e, &h)| {
                let d = 1.0 - h;
                if d > LEVERAGE_EPS {
                    (e / d).powi(2)
                } else {
                    e * e
                }
            })
            .collect()
    }

    pub fn coef_variance(&self, k: usize) -> f64 {
        self.coef_weights[k]
            .iter()
            .zip(self.hc3_sq_residuals())
            .map(|(a, s)| a * a * s)
            .sum()
    }
}

/// Weighted polynomial regression of `y` on powers of `offsets`. Rows with
/// zero weight should be filtered out by the caller. Returns `None` if the
/// weighted Gram matrix is numerically singular.
pub(crate) fn poly_wls(
    offsets: &[f64],
    y: &[f64],
    w: &[f64],
    order: usize,
    scale: f64,
) -> Option<PolyFit> {
    let n = offsets.len();
    let dim = order + 1;
    debug_assert!(scale > 0.0);
    let powers = |u: f64| {
        let mut v = vec![1.0; dim];
        for k in 1..dim {
            v[k] = v[k - 1] * u;
        }
        v
    };
    let xs: Vec<Vec<f64>> = offsets.iter().map(|&o| powers(o / scale)).collect();

    let mut gram = vec![0.0; dim * dim];
    for (x, &wi) in xs.iter().zip(w) {
        for a in 0..dim {
            for b in a..dim {
                gram[a * dim + b] += wi * x[a] * x[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            gram[a * dim + b] = gram[b * dim + a];
        }
    }
    let inv = spd_inverse(&gram, dim)?;

    let mut scaled_weights = vec![vec![0.0; n]; dim];
    let mut leverage = vec![0.0; n];
    let mut r = vec![0.0; dim];
    for i in 0..n {
        crate::linalg::mat_vec(&inv, dim, &xs[i], &mut r);
        leverage[i] = w[i] * xs[i].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        for k in 0..dim {
            scaled_weights[k][i] = r[k] * w[i];
        }
    }
    let scaled_coef: Vec<f64> = scaled_weights
        .iter()
        .map(|lk| lk.iter().zip(y).map(|(a, b)| a * b).sum())
        .collect();
    let residuals = xs
        .iter()
        .zip(y)
        .map(|(x, &yi)| yi - x.iter().zip(&scaled_coef).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let coef_weights: Vec<Vec<f64>> = scaled_weights
        .into_iter()
        .enumerate()
        .map(|(k, lk)| {
            let s = scale.powi(k as i32);
            lk.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let coefficients = scaled_coef
        .iter()
        .enumerate()
        .map(|(k, c)| c / scale.powi(k as i32))
        .collect();
    Some(PolyFit {
        coefficients,
        residuals,
        leverage,
        coef_weights,
    })
}

/// Unweighted least squares of `y` on powers of `offsets`, scaled by the
/// largest absolute offset for conditioning.
pub(crate) fn poly_ols(offsets: &[f64], y: &[f64], order: usize) -> Option<PolyFit> {
    let scale = offsets.iter().fold(0.0f64, |m, o| m.max(o.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    poly_wls(offsets, y, &vec![1.0; offsets.len()], order, scale)
}

/// A one-sided local polynomial fit at the cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalPolyFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub order: usize,
    pub bandwidth: f64,
    pub side: Side,
    pub n_effective: usize,
    pub intercept_variance: f64,
    pub residuals: Vec<f64>,
    /// Dataset rows entering the fit (nonzero kernel weight), in dataset order.
    pub rows: Vec<usize>,
    /// Kernel weights for `rows`.
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub(crate) inner: Option<PolyFit>,
    #[serde(skip)]
    pub(crate) offsets: Vec<f64>,
}

impl LocalPolyFit {
    /// Coefficient vector `[intercept, slope_1, ..., slope_p]` in raw units.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = vec![self.intercept];
        v.extend(&self.slopes);
        v
    }

    pub(crate) fn poly(&self) -> &PolyFit {
        self.inner.as_ref().expect("fit internals present")
    }
}

/// Whether a unit at distance `offset = x - c` lies inside bandwidth `h` on `side`.
pub fn in_bandwidth(offset: f64, h: f64, side: Side) -> bool {
    match side {
        Side::Right => (0.0..=h).contains(&offset),
        Side::Left => offset < 0.0 && offset >= -h,
    }
}

pub fn fit_local_poly(
    ds: &RDDataset,
    side: Side,
    h: f64,
    p: usize,
    kernel: KernelSpec,
) -> Result<LocalPolyFit> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(RdError::InvalidArgument(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    if p > MAX_ORDER {
        return Err(RdError::InvalidArgument(format!(
            "polynomial order {p} exceeds the maximum of {MAX_ORDER}"
        )));
    }
    let c = ds.cutoff();
    let mut rows = Vec::new();
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    let mut y = Vec::new();
    for (i, (&x, &yi)) in ds.score().iter().zip(ds.outcome()).enumerate() {
        let off = x - c;
        if !in_bandwidth(off, h, side) {
            continue;
        }
        let w = kernel.weight(off / h);
        if w > 0.0 {
            rows.push(i);
            offsets.push(off);
            weights.push(w);
            y.push(yi);
        }
    }
    if rows.len() < p + 1 {
        return Err(RdError::InsufficientData {
            side,
            have: rows.len(),
            need: p + 1,
        });
    }
    let fit =
        poly_wls(&offsets, &y, &weights, p, h).ok_or(RdError::SingularDesign { side, order: p })?;
    let intercept_variance = fit.coef_variance(0);
    Ok(LocalPolyFit {
        intercept: fit.coefficients[0],
        slopes: fit.coefficients[1..].to_vec(),
        order: p,
        bandwidth: h,
        side,
        n_effective: rows.len(),
        intercept_variance,
        residuals: fit.residuals.clone(),
        rows,
        weights,
        inner: Some(fit),
        offsets,
    })
}

/// Conventional variance of `α̂₊ − α̂₋`; the two sides use disjoint units.
pub fn intercept_covariance(fit_left: &LocalPolyFit, fit_right: &LocalPolyFit) -> f64 {
    fit_left.intercept_variance + fit_right.intercept_variance
}
