//! Data-driven bandwidth selection for the local polynomial estimator.
//!
//! The MSE of the order-`p` estimator expands as
//! `h^(2p+2) B² + V / (n h)`, whose minimiser is
//! `h = (V / (2 (p+1) B²))^(1/(2p+3)) · n^(-1/(2p+3))` (for `p = 1`:
//! `(V / 4B²)^(1/5) n^(-1/5)`). `B` and `V` are estimated from pilot fits:
//!
//! * a global polynomial of order `p + 2` on each side gives the order
//!   `p + 1` coefficient and a residual variance;
//! * a uniform-kernel histogram estimate gives the score density at the
//!   cutoff, with pilot bandwidth `sd(score) · n^(-1/5)`;
//! * the kernel's boundary constants turn these into `B` and `V`.
//!
//! The coverage-error rule rescales the MSE choice by
//! `n^(1/(2p+3) - 1/(p+3))`, i.e. `n^(-1/20)` for `p = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{RDDataset, Side};
use crate::error::{RdError, Result};
use crate::kernel::KernelSpec;
use crate::stats::sample_sd;
use crate::wls::poly_ols;

/// Relative size of `B²` against `V` below which the curvature is treated
/// as zero and the rule-of-thumb bandwidth is used instead.
pub const DEGENERATE_BIAS_RATIO: f64 = 1e-12;

/// Pilot residual variance below this fraction of the outcome variance means
/// the pilot polynomials fit exactly and their constants carry no signal.
const EXACT_FIT_RATIO: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMethod {
    #[default]
    Mse,
    Cer,
}

impl fmt::Display for BandwidthMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandwidthMethod::Mse => "mse",
            BandwidthMethod::Cer => "cer",
        })
    }
}

impl FromStr for BandwidthMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(BandwidthMethod::Mse),
            "cer" => Ok(BandwidthMethod::Cer),
            other => Err(format!("unknown bandwidth method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotEstimates {
    /// Estimated leading bias constant `B`.
    pub bias_const: f64,
    /// Estimated variance constant `V`.
    pub var_const: f64,
    /// Derivative of order `p + 1` at the cutoff from the left pilot (the
    /// second derivative for local linear estimation).
    pub second_deriv_left: f64,
    pub second_deriv_right: f64,
    pub residual_var_left: f64,
    pub residual_var_right: f64,
    pub density_at_cutoff: f64,
    pub density_bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    pub h: f64,
    pub method: BandwidthMethod,
    /// `h / n^rate_exponent`; equals the estimated optimal constant unless
    /// the bandwidth was clamped.
    pub constant: f64,
    pub rate_exponent: f64,
    pub n: usize,
    pub order: usize,
    pub kernel: KernelSpec,
    pub pilot: PilotEstimates,
    /// Bandwidth before clamping to the data range.
    pub unclamped_h: f64,
    pub warnings: Vec<String>,
}

pub fn mse_rate_exponent(p: usize) -> f64 {
    -1.0 / (2 * p + 3) as f64
}

pub fn cer_rate_exponent(p: usize) -> f64 {
    -1.0 / (p + 3) as f64
}

/// `constant · n^exponent`.
pub fn rate_bandwidth(constant: f64, n: usize, exponent: f64) -> f64 {
    constant * (n as f64).powf(exponent)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

struct SidePilot {
    coef: f64,
    resid_var: f64,
}

fn side_pilot(ds: &RDDataset, side: Side, p: usize) -> Result<SidePilot> {
    let order = p + 2;
    let c = ds.cutoff();
    let rows = ds.rows_on(side);
    if rows.len() < order + 1 {
        return Err(RdError::InsufficientData {
            side,
            have: rows.len(),
            need: order + 1,
        });
    }
    let offsets: Vec<f64> = rows.iter().map(|&i| ds.score()[i] - c).collect();
    let y: Vec<f64> = rows.iter().map(|&i| ds.outcome()[i]).collect();
    let fit = poly_ols(&offsets, &y, order).ok_or(RdError::SingularDesign { side, order })?;
    let ssr: f64 = fit.residuals.iter().map(|e| e * e).sum();
    let dof = (rows.len() - (order + 1)).max(1);
    Ok(SidePilot {
        coef: fit.coefficients[p + 1],
        resid_var: ssr / dof as f64,
    })
}

pub fn pilot_estimates(ds: &RDDataset, p: usize, kernel: KernelSpec) -> Result<PilotEstimates> {
    let y0 = ds.outcome()[0];
    if ds.outcome().iter().all(|&y| y == y0) {
        return Err(RdError::Degenerate("outcome is constant".into()));
    }
    let left = side_pilot(ds, Side::Left, p)?;
    let right = side_pilot(ds, Side::Right, p)?;

    let n = ds.len();
    let h0 = sample_sd(ds.score()) * (n as f64).powf(-0.2);
    let c = ds.cutoff();
    let near = ds.score().iter().filter(|&&x| (x - c).abs() <= h0).count();
    if !(h0 > 0.0) || near == 0 {
        return Err(RdError::Degenerate(
            "no observations near the cutoff for the density pilot".into(),
        ));
    }
    let density = near as f64 / (2.0 * n as f64 * h0);

    let consts = kernel.boundary_constants(p);
    // on the left the offsets are negative, flipping odd powers
    let left_sign = if (p + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let bias_const = consts.bias * (right.coef - left_sign * left.coef);
    let var_const = (left.resid_var + right.resid_var) * consts.variance / density;
    let deriv = factorial(p + 1);
    Ok(PilotEstimates {
        bias_const,
        var_const,
        second_deriv_left: deriv * left.coef,
        second_deriv_right: deriv * right.coef,
        residual_var_left: left.resid_var,
        residual_var_right: right.resid_var,
        density_at_cutoff: density,
        density_bandwidth: h0,
    })
}

fn check_order(p: usize) -> Result<()> {
    if p > 3 {
        return Err(RdError::InvalidArgument(format!(
            "polynomial order must be 0..=3, got {p}"
        )));
    }
    Ok(())
}

pub fn select_mse(ds: &RDDataset, p: usize, kernel: KernelSpec) -> Result<BandwidthResult> {
    check_order(p)?;
    let pilot = pilot_estimates(ds, p, kernel)?;
    let n = ds.len();
    let rate = mse_rate_exponent(p);
    let mut warnings = Vec::new();

    let b2 = pilot.bias_const * pilot.bias_const;
    let outcome_var = crate::stats::sample_variance(ds.outcome());
    let resid_var = pilot.residual_var_left + pilot.residual_var_right;
    let exact_pilot = resid_var <= EXACT_FIT_RATIO * outcome_var;
    let raw_constant =
        if !exact_pilot && pilot.var_const > 0.0 && b2 >= DEGENERATE_BIAS_RATIO * pilot.var_const {
            (pilot.var_const / (2.0 * (p + 1) as f64 * b2)).powf(-rate)
        } else {
            warnings.push(
                "negligible estimated curvature; using rule-of-thumb bandwidth sd(score)*n^rate"
                    .into(),
            );
            sample_sd(ds.score())
        };
    let unclamped_h = rate_bandwidth(raw_constant, n, rate);
    let (left_extent, right_extent) = ds.side_extent();
    let h_max = left_extent.min(right_extent);
    let h = if unclamped_h > h_max {
        warnings.push(format!(
            "bandwidth {unclamped_h} clamped to the data range {h_max}"
        ));
        h_max
    } else {
        unclamped_h
    };
    Ok(BandwidthResult {
        h,
        method: BandwidthMethod::Mse,
        constant: h / (n as f64).powf(rate),
        rate_exponent: rate,
        n,
        order: p,
        kernel,
        pilot,
        unclamped_h,
        warnings,
    })
}

pub fn select_cer(ds: &RDDataset, p: usize, kernel: KernelSpec) -> Result<BandwidthResult> {
    let mse = select_mse(ds, p, kernel)?;
    let n = mse.n;
    let rate = cer_rate_exponent(p);
    let h = mse.h * (n as f64).powf(rate - mse.rate_exponent);
    Ok(BandwidthResult {
        h,
        method: BandwidthMethod::Cer,
        constant: h / (n as f64).powf(rate),
        rate_exponent: rate,
        unclamped_h: mse.unclamped_h * (n as f64).powf(rate - mse.rate_exponent),
        ..mse
    })
}

pub fn select(
    ds: &RDDataset,
    method: BandwidthMethod,
    p: usize,
    kernel: KernelSpec,
) -> Result<BandwidthResult> {
    match method {
        BandwidthMethod::Mse => select_mse(ds, p, kernel),
        BandwidthMethod::Cer => select_cer(ds, p, kernel),
    }
}
