//! Sharp RD point estimation with conventional and robust bias-corrected
//! inference.
//!
//! The bias of each one-sided intercept is estimated as
//! `β̂_{p+1} · Σ ℓᵢ (xᵢ − c)^{p+1}`, where `ℓ` are the intercept weights of
//! the order-`p` fit at `h` and `β̂_{p+1}` is the leading coefficient of an
//! order-`p+1` fit at `b ≥ h`. The bias-corrected estimator is then a single
//! linear combination of outcomes, and its robust variance is formed from
//! those combined weights with HC3 residuals of the order-`p+1` fit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, BandwidthMethod, BandwidthResult};
use crate::data::{RDDataset, Side};
use crate::error::{RdError, Result};
use crate::kernel::KernelSpec;
use crate::stats::{normal_critical, normal_two_sided_p, p_from_se};
use crate::wls::{fit_local_poly, in_bandwidth, intercept_covariance, LocalPolyFit};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_ORDER: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDEstimate {
    pub tau_hat: f64,
    pub bias_hat: f64,
    /// `tau_hat - bias_hat`.
    pub tau_bc: f64,
    pub se_conventional: f64,
    pub se_robust: f64,
    pub ci_conventional: [f64; 2],
    pub ci_robust: [f64; 2],
    pub p_conventional: f64,
    pub p_robust: f64,
    pub h: f64,
    pub b: f64,
    pub p_order: usize,
    pub kernel: KernelSpec,
    pub n_left: usize,
    pub n_right: usize,
    pub level: f64,
    pub notes: Vec<String>,
}

impl RDEstimate {
    pub fn covers(&self, value: f64) -> (bool, bool) {
        let inside = |ci: &[f64; 2]| ci[0] <= value && value <= ci[1];
        (inside(&self.ci_conventional), inside(&self.ci_robust))
    }
}

#[derive(Debug, Clone)]
pub struct SharpFit {
    pub tau_hat: f64,
    /// Conventional variance of `tau_hat`.
    pub variance: f64,
    pub left: LocalPolyFit,
    pub right: LocalPolyFit,
}

pub fn estimate_sharp(ds: &RDDataset, h: f64, p: usize, kernel: KernelSpec) -> Result<SharpFit> {
    let left = fit_local_poly(ds, Side::Left, h, p, kernel)?;
    let right = fit_local_poly(ds, Side::Right, h, p, kernel)?;
    Ok(SharpFit {
        tau_hat: right.intercept - left.intercept,
        variance: intercept_covariance(&left, &right),
        left,
        right,
    })
}

struct SideCorrection {
    bias: f64,
    robust_variance: f64,
}

fn side_correction(main: &LocalPolyFit, bias_fit: &LocalPolyFit) -> SideCorrection {
    let p = main.order;
    let main_poly = main.poly();
    let bias_poly = bias_fit.poly();
    let intercept_w = &main_poly.coef_weights[0];
    let reach: f64 = intercept_w
        .iter()
        .zip(&main.offsets)
        .map(|(l, o)| l * o.powi(p as i32 + 1))
        .sum();
    let lead = bias_poly.coefficients[p + 1];
    let lead_w = &bias_poly.coef_weights[p + 1];

    let mut combined: Vec<f64> = lead_w.iter().map(|l| -reach * l).collect();
    let mut sq_resid = bias_poly.hc3_sq_residuals();
    let position: HashMap<usize, usize> = bias_fit
        .rows
        .iter()
        .enumerate()
        .map(|(j, &r)| (r, j))
        .collect();
    let main_sq = main_poly.hc3_sq_residuals();
    for (i, &row) in main.rows.iter().enumerate() {
        match position.get(&row) {
            Some(&j) => combined[j] += intercept_w[i],
            None => {
                combined.push(intercept_w[i]);
                sq_resid.push(main_sq[i]);
            }
        }
    }
    let robust_variance = combined.iter().zip(&sq_resid).map(|(a, s)| a * a * s).sum();
    SideCorrection {
        bias: lead * reach,
        robust_variance,
    }
}

pub fn robust_bc_inference(
    ds: &RDDataset,
    h: f64,
    b: f64,
    p: usize,
    kernel: KernelSpec,
    level: f64,
) -> Result<RDEstimate> {
    if p > 3 {
        return Err(RdError::InvalidArgument(format!(
            "polynomial order must be 0..=3, got {p}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(RdError::InvalidArgument(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    if !(b >= h) {
        return Err(RdError::InvalidArgument(format!(
            "bias bandwidth b = {b} must be at least h = {h}"
        )));
    }
    let sharp = estimate_sharp(ds, h, p, kernel)?;
    let bias_left = fit_local_poly(ds, Side::Left, b, p + 1, kernel)?;
    let bias_right = fit_local_poly(ds, Side::Right, b, p + 1, kernel)?;
    let left = side_correction(&sharp.left, &bias_left);
    let right = side_correction(&sharp.right, &bias_right);

    let mut notes = Vec::new();
    let bias_hat = right.bias - left.bias;
    let v_conv = sharp.variance;
    let mut v_bc = left.robust_variance + right.robust_variance;
    if v_bc < v_conv {
        notes.push(
            "robust variance below conventional; floored at the conventional variance".into(),
        );
        v_bc = v_conv;
    }
    if v_conv == 0.0 {
        notes.push("zero estimated variance (degenerate outcome)".into());
    }
    let se_conventional = v_conv.sqrt();
    let se_robust = v_bc.sqrt();
    let z = normal_critical(level);
    let tau_hat = sharp.tau_hat;
    let tau_bc = tau_hat - bias_hat;
    let c = ds.cutoff();
    let count = |side| {
        ds.score()
            .iter()
            .filter(|&&x| in_bandwidth(x - c, h, side))
            .count()
    };
    Ok(RDEstimate {
        tau_hat,
        bias_hat,
        tau_bc,
        se_conventional,
        se_robust,
        ci_conventional: [tau_hat - z * se_conventional, tau_hat + z * se_conventional],
        ci_robust: [tau_bc - z * se_robust, tau_bc + z * se_robust],
        p_conventional: p_from_se(tau_hat, se_conventional),
        p_robust: p_from_se(tau_bc, se_robust),
        h,
        b,
        p_order: p,
        kernel,
        n_left: count(Side::Left),
        n_right: count(Side::Right),
        level,
        notes,
    })
}

/// Two-sided normal p-value of `tau_hat / se_conventional`.
pub fn conventional_test(est: &RDEstimate) -> Result<f64> {
    if !(est.se_conventional > 0.0) {
        return Err(RdError::Degenerate(
            "zero conventional standard error".into(),
        ));
    }
    Ok(normal_two_sided_p(est.tau_hat / est.se_conventional))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthChoice {
    Select(BandwidthMethod),
    Fixed(f64),
}

impl Default for BandwidthChoice {
    fn default() -> Self {
        BandwidthChoice::Select(BandwidthMethod::Mse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub order: usize,
    pub kernel: KernelSpec,
    pub level: f64,
    pub bandwidth: BandwidthChoice,
    /// Bias bandwidth as a multiple of `h` (at least 1).
    pub b_ratio: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            order: DEFAULT_ORDER,
            kernel: KernelSpec::Triangular,
            level: DEFAULT_LEVEL,
            bandwidth: BandwidthChoice::default(),
            b_ratio: 1.0,
        }
    }
}

/// Select (or take) a bandwidth, then run robust bias-corrected inference.
pub fn estimate(
    ds: &RDDataset,
    opts: &EstimateOptions,
) -> Result<(RDEstimate, Option<BandwidthResult>)> {
    let (h, bw) = match opts.bandwidth {
        BandwidthChoice::Fixed(h) => (h, None),
        BandwidthChoice::Select(method) => {
            let r = bandwidth::select(ds, method, opts.order, opts.kernel)?;
            (r.h, Some(r))
        }
    };
    let mut est =
        robust_bc_inference(ds, h, opts.b_ratio * h, opts.order, opts.kernel, opts.level)?;
    if let Some(r) = &bw {
        est.notes.extend(r.warnings.iter().cloned());
    }
    Ok((est, bw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, f: impl Fn(f64) -> f64) -> RDDataset {
        let score: Vec<f64> = (0..n)
            .map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64)
            .collect();
        let y = score.iter().map(|&x| f(x)).collect();
        RDDataset::new(score, y, 0.0).unwrap()
    }

    #[test]
    fn flat_jump() {
        let ds = grid(200, |x| if x >= 0.0 { 8.0 } else { 5.0 });
        let fit = estimate_sharp(&ds, 0.5, 1, KernelSpec::Triangular).unwrap();
        assert!((fit.tau_hat - 3.0).abs() < 1e-12);
    }

    #[test]
    fn shared_line_has_no_jump() {
        let ds = grid(200, |x| 1.0 + x);
        let fit = estimate_sharp(&ds, 0.7, 1, KernelSpec::Triangular).unwrap();
        assert!(fit.tau_hat.abs() < 1e-12);
    }

    #[test]
    fn noiseless_line_has_zero_bias() {
        let ds = grid(300, |x| if x >= 0.0 { 2.0 + 0.5 * x } else { 1.0 - x });
        let est = robust_bc_inference(&ds, 0.4, 0.4, 1, KernelSpec::Triangular, 0.95).unwrap();
        assert!(est.bias_hat.abs() < 1e-10);
        let mid = 0.5 * (est.ci_robust[0] + est.ci_robust[1]);
        assert!((mid - est.tau_hat).abs() < 1e-10);
    }

    #[test]
    fn bias_equals_quadratic_shift_when_b_equals_h() {
        // with b = h the corrected estimate is the order p+1 intercept
        let ds = grid(400, |x| {
            if x >= 0.0 {
                1.0 + x * x + (9.0 * x).sin()
            } else {
                (3.0 * x).cos()
            }
        });
        let est = robust_bc_inference(&ds, 0.6, 0.6, 1, KernelSpec::Triangular, 0.95).unwrap();
        let quad = estimate_sharp(&ds, 0.6, 2, KernelSpec::Triangular).unwrap();
        assert!((est.tau_bc - quad.tau_hat).abs() < 1e-10);
    }

    #[test]
    fn rejects_b_below_h() {
        let ds = grid(100, |x| x);
        assert!(matches!(
            robust_bc_inference(&ds, 0.5, 0.4, 1, KernelSpec::Triangular, 0.95),
            Err(RdError::InvalidArgument(_))
        ));
    }

    #[test]
    fn conventional_p_values() {
        let mut est =
            robust_bc_inference(&grid(100, |x| x), 0.5, 0.5, 1, KernelSpec::Uniform, 0.95).unwrap();
        est.se_conventional = 1.0;
        est.tau_hat = 0.0;
        assert_eq!(conventional_test(&est).unwrap(), 1.0);
        est.tau_hat = 1.959963984540054;
        assert!((conventional_test(&est).unwrap() - 0.05).abs() < 1e-9);
        est.tau_hat = 3.2905267314919;
        assert!((conventional_test(&est).unwrap() - 0.001).abs() < 1e-9);
        est.se_conventional = 0.0;
        assert!(conventional_test(&est).is_err());
    }

    #[test]
    fn counts_within_h() {
        let ds = grid(100, |x| x);
        let est = robust_bc_inference(&ds, 0.2, 0.2, 1, KernelSpec::Uniform, 0.95).unwrap();
        assert_eq!(est.n_left, 10);
        assert_eq!(est.n_right, 10);
    }
}
