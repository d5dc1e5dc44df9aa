//! Falsification checks for an RD design: covariates treated as outcomes,
//! tests for manipulation of the score, placebo cutoffs and bandwidth
//! sensitivity. Results are evidence to report; nothing here passes or fails
//! the design.

use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, BandwidthResult};
use crate::continuity::{robust_bc_inference, BandwidthChoice, EstimateOptions, RDEstimate};
use crate::data::{RDDataset, Side};
use crate::error::{RdError, Result};
use crate::exec::map_slice;
use crate::locrand::Window;
use crate::stats::{binomial_two_sided_p, normal_two_sided_p, sample_sd};
use crate::wls::poly_wls;

pub const DEFAULT_MULTIPLIERS: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];
pub const DENSITY_TEST_LABEL: &str = "simplified density test";
/// Units required on each side of the cutoff by the density test.
pub const DENSITY_MIN_PER_SIDE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEffect {
    pub covariate: String,
    pub estimate: Option<RDEstimate>,
    /// Bandwidth chosen for this covariate.
    pub bandwidth: Option<f64>,
    pub dropped_rows: usize,
    pub error: Option<String>,
}

/// Bandwidth from `opts`, falling back to `sd(score) n^(-1/5)` (clamped to
/// the data range) when the pilot is degenerate, as for constant outcomes.
fn bandwidth_or_fallback(
    ds: &RDDataset,
    opts: &EstimateOptions,
) -> Result<(f64, Option<BandwidthResult>, Vec<String>)> {
    let method = match opts.bandwidth {
        BandwidthChoice::Fixed(h) => return Ok((h, None, Vec::new())),
        BandwidthChoice::Select(m) => m,
    };
    match bandwidth::select(ds, method, opts.order, opts.kernel) {
        Ok(r) => Ok((r.h, Some(r.clone()), r.warnings)),
        Err(RdError::Degenerate(why)) => {
            let (l, r) = ds.side_extent();
            let h = (sample_sd(ds.score()) * (ds.len() as f64).powf(-0.2)).min(l.min(r));
            Ok((
                h,
                None,
                vec![format!(
                    "bandwidth pilot degenerate ({why}); using rule-of-thumb h = {h}"
                )],
            ))
        }
        Err(e) => Err(e),
    }
}

fn estimate_with_fallback(
    ds: &RDDataset,
    opts: &EstimateOptions,
) -> Result<(RDEstimate, Option<BandwidthResult>)> {
    let (h, bw, mut notes) = bandwidth_or_fallback(ds, opts)?;
    let mut est =
        robust_bc_inference(ds, h, opts.b_ratio * h, opts.order, opts.kernel, opts.level)?;
    notes.append(&mut est.notes);
    est.notes = notes;
    Ok((est, bw))
}

fn covariate_effect(ds: &RDDataset, name: &str, opts: &EstimateOptions) -> CovariateEffect {
    let run = || -> Result<(RDEstimate, usize)> {
        let (cds, dropped) = ds.covariate_as_outcome(name)?;
        Ok((estimate_with_fallback(&cds, opts)?.0, dropped))
    };
    match run() {
        Ok((est, dropped)) => CovariateEffect {
            covariate: name.to_string(),
            bandwidth: Some(est.h),
            estimate: Some(est),
            dropped_rows: dropped,
            error: None,
        },
        Err(e) => CovariateEffect {
            covariate: name.to_string(),
            estimate: None,
            bandwidth: None,
            dropped_rows: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Run the continuity-based estimator on every covariate as if it were the
/// outcome, each with its own MSE bandwidth. Failures are recorded per
/// covariate.
pub fn covariate_balance_continuity(
    ds: &RDDataset,
    opts: &EstimateOptions,
) -> Vec<CovariateEffect> {
    let names: Vec<String> = ds.covariates().iter().map(|c| c.name.clone()).collect();
    map_slice(&names, |name| covariate_effect(ds, name, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinomialTest {
    pub window: Window,
    pub n_minus: usize,
    pub n_plus: usize,
    pub q: f64,
    pub p_value: f64,
}

/// Exact binomial test that treated units in `win` arrive with probability `q`.
pub fn binomial_density_test(ds: &RDDataset, win: &Window, q: f64) -> Result<BinomialTest> {
    if !(q > 0.0 && q < 1.0) {
        return Err(RdError::InvalidArgument(format!(
            "success probability must lie in (0, 1), got {q}"
        )));
    }
    let c = ds.cutoff();
    let (mut n_minus, mut n_plus) = (0usize, 0usize);
    for &x in ds.score() {
        if win.contains(x) {
            if x >= c {
                n_plus += 1;
            } else {
                n_minus += 1;
            }
        }
    }
    if n_plus + n_minus == 0 {
        return Err(RdError::InsufficientData {
            side: Side::Right,
            have: 0,
            need: 1,
        });
    }
    Ok(BinomialTest {
        window: *win,
        n_minus,
        n_plus,
        q,
        p_value: binomial_two_sided_p(n_plus as u64, (n_plus + n_minus) as u64, q),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTest {
    pub label: String,
    /// Estimated density just right of the cutoff minus just left of it.
    pub jump: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub density_left: f64,
    pub density_right: f64,
    pub bandwidth: f64,
    pub bins_per_side: usize,
    pub bin_width: f64,
}

struct SideDensity {
    value: f64,
    variance: f64,
}

fn side_density(
    distances: &[f64],
    n_total: usize,
    h: f64,
    bins: usize,
    side: Side,
) -> Result<SideDensity> {
    let bw = h / bins as f64;
    let mut counts = vec![0.0; bins];
    for &d in distances {
        if d <= h {
            let j = ((d / bw) as usize).min(bins - 1);
            counts[j] += 1.0;
        }
    }
    if counts.iter().filter(|&&c| c > 0.0).count() < 2 {
        return Err(RdError::Degenerate(format!(
            "fewer than two occupied histogram bins on the {side} side"
        )));
    }
    let scale = n_total as f64 * bw;
    let centers: Vec<f64> = (0..bins).map(|j| (j as f64 + 0.5) * bw).collect();
    let density: Vec<f64> = counts.iter().map(|c| c / scale).collect();
    let weights: Vec<f64> = centers.iter().map(|&m| 1.0 - m / h).collect();
    let fit = poly_wls(&centers, &density, &weights, 1, h)
        .ok_or(RdError::SingularDesign { side, order: 1 })?;
    let l = &fit.coef_weights[0];
    // bin counts are treated as independent Poisson draws
    let variance = l.iter().zip(&counts).map(|(w, c)| w * w * c).sum::<f64>() / (scale * scale);
    Ok(SideDensity {
        value: fit.coefficients[0],
        variance,
    })
}

/// Histogram-based test for a discontinuity in the score density at the
/// cutoff.
///
/// Distances from the cutoff are binned into equal-width bins on each side
/// within `h = 2 sd(score) n^(-1/5)` (clamped to the data range), using
/// `round(sqrt(n_h))` bins clamped to `5..=50`, where `n_h` is the smaller
/// in-bandwidth side count. A triangular-weighted line through the bin
/// densities is extrapolated to the cutoff on each side; bin counts are
/// treated as Poisson for the standard error. This is a simple substitute
/// for local-polynomial density estimators, labelled as such in its output.
pub fn density_continuity_test(ds: &RDDataset) -> Result<DensityTest> {
    for side in [Side::Left, Side::Right] {
        let have = ds.count_on(side);
        if have < DENSITY_MIN_PER_SIDE {
            return Err(RdError::InsufficientData {
                side,
                have,
                need: DENSITY_MIN_PER_SIDE,
            });
        }
    }
    let n = ds.len();
    let c = ds.cutoff();
    let (l_ext, r_ext) = ds.side_extent();
    let h = (2.0 * sample_sd(ds.score()) * (n as f64).powf(-0.2)).min(l_ext.min(r_ext));
    if !(h > 0.0) {
        return Err(RdError::Degenerate(
            "no score spread on one side of the cutoff".into(),
        ));
    }
    let dist = |side| -> Vec<f64> {
        ds.rows_on(side)
            .iter()
            .map(|&i| (ds.score()[i] - c).abs())
            .collect()
    };
    let (left, right) = (dist(Side::Left), dist(Side::Right));
    let inside = |d: &[f64]| d.iter().filter(|&&v| v <= h).count();
    let n_h = inside(&left).min(inside(&right));
    let bins = ((n_h as f64).sqrt().round() as usize).clamp(5, 50);
    let fl = side_density(&left, n, h, bins, Side::Left)?;
    let fr = side_density(&right, n, h, bins, Side::Right)?;
    let jump = fr.value - fl.value;
    let se = (fl.variance + fr.variance).sqrt();
    if !(se > 0.0) {
        return Err(RdError::Degenerate("zero density standard error".into()));
    }
    let z = jump / se;
    Ok(DensityTest {
        label: DENSITY_TEST_LABEL.into(),
        jump,
        se,
        z,
        p_value: normal_two_sided_p(z),
        density_left: fl.value,
        density_right: fr.value,
        bandwidth: h,
        bins_per_side: bins,
        bin_width: h / bins as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboResult {
    pub cutoff: f64,
    /// Side of the true cutoff whose units were used.
    pub side: Side,
    pub estimate: Option<RDEstimate>,
    pub bandwidth: Option<BandwidthResult>,
    pub error: Option<String>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles of the scores on each side of the cutoff, control side first.
pub fn default_placebo_cutoffs(ds: &RDDataset) -> Vec<f64> {
    let c = ds.cutoff();
    let mut out = Vec::new();
    for side in [Side::Left, Side::Right] {
        let mut s: Vec<f64> = ds.rows_on(side).iter().map(|&i| ds.score()[i]).collect();
        if s.is_empty() {
            continue;
        }
        s.sort_by(f64::total_cmp);
        for prob in [0.25, 0.5, 0.75] {
            let q = quantile(&s, prob);
            if q != c && !out.contains(&q) {
                out.push(q);
            }
        }
    }
    out
}

/// Estimate a jump at each artificial cutoff using only units that share a
/// treatment status: treated units for cutoffs above the true one, control
/// units for cutoffs below it.
pub fn placebo_cutoffs(
    ds: &RDDataset,
    cutoffs: &[f64],
    opts: &EstimateOptions,
) -> Result<Vec<PlaceboResult>> {
    let c = ds.cutoff();
    if let Some(bad) = cutoffs.iter().find(|&&p| p == c || !p.is_finite()) {
        return Err(RdError::InvalidArgument(format!(
            "placebo cutoff {bad} must be finite and differ from the true cutoff {c}"
        )));
    }
    Ok(map_slice(cutoffs, |&cp| {
        let side = if cp > c { Side::Right } else { Side::Left };
        let run = || -> Result<(RDEstimate, Option<BandwidthResult>)> {
            let sub = ds.subset(&ds.rows_on(side))?.with_cutoff(cp)?;
            estimate_with_fallback(&sub, opts)
        };
        match run() {
            Ok((est, bw)) => PlaceboResult {
                cutoff: cp,
                side,
                estimate: Some(est),
                bandwidth: bw,
                error: None,
            },
            Err(e) => PlaceboResult {
                cutoff: cp,
                side,
                estimate: None,
                bandwidth: None,
                error: Some(e.to_string()),
            },
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub multiplier: f64,
    pub h: f64,
    pub estimate: Option<RDEstimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub base: BandwidthResult,
    pub rows: Vec<SensitivityRow>,
}

/// Re-estimate at `m · h_MSE` for each multiplier `m`. The bias bandwidth
/// scales along with `h`.
pub fn bandwidth_sensitivity(
    ds: &RDDataset,
    multipliers: &[f64],
    opts: &EstimateOptions,
) -> Result<Sensitivity> {
    if let Some(bad) = multipliers.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
        return Err(RdError::InvalidArgument(format!(
            "bandwidth multipliers must be positive, got {bad}"
        )));
    }
    let base = bandwidth::select_mse(ds, opts.order, opts.kernel)?;
    let rows = map_slice(multipliers, |&m| {
        let h = m * base.h;
        match robust_bc_inference(ds, h, opts.b_ratio * h, opts.order, opts.kernel, opts.level) {
            Ok(est) => SensitivityRow {
                multiplier: m,
                h,
                estimate: Some(est),
                error: None,
            },
            Err(e) => SensitivityRow {
                multiplier: m,
                h,
                estimate: None,
                error: Some(format!("skipped: {e}")),
            },
        }
    });
    Ok(Sensitivity { base, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsificationOptions {
    pub estimate: EstimateOptions,
    /// Window for the binomial test; skipped when absent.
    pub window: Option<Window>,
    pub q: f64,
    /// Placebo cutoffs; side quartiles when absent.
    pub placebo_cutoffs: Option<Vec<f64>>,
    pub multipliers: Vec<f64>,
}

impl Default for FalsificationOptions {
    fn default() -> Self {
        FalsificationOptions {
            estimate: EstimateOptions::default(),
            window: None,
            q: 0.5,
            placebo_cutoffs: None,
            multipliers: DEFAULT_MULTIPLIERS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsificationReport {
    pub covariate_effects: Vec<CovariateEffect>,
    pub binomial_test: Option<BinomialTest>,
    pub density_test: Option<DensityTest>,
    pub placebo: Vec<PlaceboResult>,
    pub sensitivity: Option<Sensitivity>,
    pub notes: Vec<String>,
}

/// Run every check, recording failures of individual checks as notes.
pub fn run_falsification(
    ds: &RDDataset,
    opts: &FalsificationOptions,
) -> Result<FalsificationReport> {
    let mut notes = Vec::new();
    let covariate_effects = covariate_balance_continuity(ds, &opts.estimate);
    let binomial_test = match &opts.window {
        Some(w) => match binomial_density_test(ds, w, opts.q) {
            Ok(t) => Some(t),
            Err(e) => {
                notes.push(format!("binomial test skipped: {e}"));
                None
            }
        },
        None => {
            notes.push("binomial test skipped: no window given".into());
            None
        }
    };
    let density_test = match density_continuity_test(ds) {
        Ok(t) => Some(t),
        Err(e) => {
            notes.push(format!("{DENSITY_TEST_LABEL} skipped: {e}"));
            None
        }
    };
    let cutoffs = opts
        .placebo_cutoffs
        .clone()
        .unwrap_or_else(|| default_placebo_cutoffs(ds));
    let placebo = placebo_cutoffs(ds, &cutoffs, &opts.estimate)?;
    let sensitivity = match bandwidth_sensitivity(ds, &opts.multipliers, &opts.estimate) {
        Ok(s) => Some(s),
        Err(e @ RdError::InvalidArgument(_)) => return Err(e),
        Err(e) => {
            notes.push(format!("bandwidth sensitivity skipped: {e}"));
            None
        }
    };
    Ok(FalsificationReport {
        covariate_effects,
        binomial_test,
        density_test,
        placebo,
        sensitivity,
        notes,
    })
}
