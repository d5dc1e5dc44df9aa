//! Data-driven choice of the local-randomization window.
//!
//! Symmetric windows `[c - w, c + w]` are scanned outward from a small
//! starting half-width. In each window every covariate gets a permutation
//! balance test and the smallest p-value is kept. The scan stops at the
//! first window whose minimum falls below the threshold, and the window
//! just inside it is selected.

use serde::{Deserialize, Serialize};

use crate::data::{RDDataset, Side};
use crate::error::{RdError, Result};
use crate::locrand::{balance_pvalues, extract_window, Scheme, StatisticKind, Window};
use crate::stats::sample_sd;

pub const DEFAULT_THRESHOLD: f64 = 0.15;
/// Smallest number of units per side allowed in the starting window.
pub const MIN_UNITS_PER_SIDE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScanRow {
    pub half_width: f64,
    pub window: Window,
    pub min_p: f64,
    pub argmin_covariate: String,
    pub n_minus: usize,
    pub n_plus: usize,
    /// Balance p-value of every covariate, in the requested order.
    pub p_values: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub selected: Window,
    pub selected_half_width: f64,
    pub scan: Vec<WindowScanRow>,
    /// Index into `scan` of the first rejecting window, if any.
    pub first_failure: Option<usize>,
    pub threshold: f64,
    pub statistic_kind: StatisticKind,
    pub seed: u64,
    /// Rows left out because a covariate was missing.
    pub dropped_rows: usize,
    pub notes: Vec<String>,
}

impl WindowResult {
    /// `(half_width, min_p)` for every scanned window.
    pub fn pvalue_curve(&self) -> Vec<(f64, f64)> {
        self.scan.iter().map(|r| (r.half_width, r.min_p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSearch {
    /// Starting half-width; defaults to the smallest one with enough units
    /// on each side.
    pub w_start: Option<f64>,
    /// Step between half-widths; defaults to `sd(score) / 100`.
    pub increment: Option<f64>,
    pub threshold: f64,
    pub statistic: StatisticKind,
    pub scheme: Scheme,
    pub seed: u64,
    /// Stop after this many windows even without a rejection.
    pub max_windows: Option<usize>,
}

impl WindowSearch {
    pub fn new(seed: u64) -> Self {
        WindowSearch {
            w_start: None,
            increment: None,
            threshold: DEFAULT_THRESHOLD,
            statistic: StatisticKind::DiffMeans,
            scheme: Scheme::default(),
            seed,
            max_windows: None,
        }
    }
}

/// Half-width needed to reach `need` units on `side`, if it has that many.
fn reach(ds: &RDDataset, side: Side, need: usize) -> Option<f64> {
    let c = ds.cutoff();
    let mut d: Vec<f64> = ds
        .rows_on(side)
        .iter()
        .map(|&i| (ds.score()[i] - c).abs())
        .collect();
    if d.len() < need {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(d[need - 1])
}

pub fn select_window(
    ds: &RDDataset,
    covariates: &[String],
    search: &WindowSearch,
) -> Result<WindowResult> {
    if covariates.is_empty() {
        return Err(RdError::InvalidArgument(
            "window selection needs at least one covariate".into(),
        ));
    }
    if !(0.0..1.0).contains(&search.threshold) {
        return Err(RdError::InvalidArgument(format!(
            "threshold must lie in [0, 1), got {}",
            search.threshold
        )));
    }
    let mut cols = Vec::with_capacity(covariates.len());
    for name in covariates {
        cols.push(
            ds.covariate(name)
                .ok_or_else(|| RdError::MissingColumn(name.clone()))?,
        );
    }
    let complete: Vec<usize> = (0..ds.len())
        .filter(|&i| cols.iter().all(|c| c.values[i].is_some()))
        .collect();
    let dropped_rows = ds.len() - complete.len();
    let mut notes = Vec::new();
    if dropped_rows > 0 {
        notes.push(format!(
            "{dropped_rows} rows with missing covariates excluded from balance tests"
        ));
    }
    let sub = ds.subset(&complete)?;
    let sub_cols: Vec<_> = covariates
        .iter()
        .map(|name| sub.covariate(name).expect("subset keeps covariates"))
        .collect();

    let (left_extent, right_extent) = sub.side_extent();
    let w_max = left_extent.min(right_extent);
    let mut need_w = 0.0f64;
    for side in [Side::Left, Side::Right] {
        let w = reach(&sub, side, MIN_UNITS_PER_SIDE).ok_or(RdError::InsufficientData {
            side,
            have: sub.count_on(side),
            need: MIN_UNITS_PER_SIDE,
        })?;
        need_w = need_w.max(w);
    }
    let mut w0 = need_w;
    if let Some(ws) = search.w_start {
        if !(ws > 0.0) {
            return Err(RdError::InvalidArgument(format!(
                "starting half-width must be positive, got {ws}"
            )));
        }
        if ws < need_w {
            notes.push(format!(
                "starting half-width {ws} enlarged to {need_w} to reach {MIN_UNITS_PER_SIDE} units per side"
            ));
        }
        w0 = ws.max(need_w);
    }
    if w0 > w_max {
        return Err(RdError::WindowSelection(format!(
            "starting half-width {w0} exceeds the symmetric data range {w_max}"
        )));
    }
    let increment = match search.increment {
        Some(s) if s > 0.0 => s,
        Some(s) => {
            return Err(RdError::InvalidArgument(format!(
                "increment must be positive, got {s}"
            )))
        }
        None => sample_sd(sub.score()) / 100.0,
    };
    if !(increment > 0.0) {
        return Err(RdError::Degenerate("score has zero spread".into()));
    }

    let mut widths = Vec::new();
    let mut k = 0usize;
    loop {
        let w = w0 + k as f64 * increment;
        if w >= w_max * (1.0 - 1e-12) {
            widths.push(w_max);
            break;
        }
        widths.push(w);
        k += 1;
    }
    if let Some(m) = search.max_windows {
        widths.truncate(m.max(1));
    }

    let c = sub.cutoff();
    let mut scan = Vec::new();
    let mut first_failure = None;
    for (k, &w) in widths.iter().enumerate() {
        let win = Window::symmetric(c, w)?;
        let ws = extract_window(&sub, &win)?;
        let values: Vec<(String, Vec<f64>)> = sub_cols
            .iter()
            .map(|col| {
                let v = ws
                    .rows
                    .iter()
                    .map(|&i| col.values[i].expect("complete row"))
                    .collect();
                (col.name.clone(), v)
            })
            .collect();
        let seed = search.seed.wrapping_add(k as u64);
        let results = balance_pvalues(&ws, &values, search.statistic, search.scheme, seed)?;
        let mut row_notes = Vec::new();
        let mut p_values = Vec::with_capacity(results.len());
        for (name, r) in &results {
            row_notes.extend(r.notes.iter().map(|n| format!("{name}: {n}")));
            p_values.push((name.clone(), r.p_value));
        }
        let (argmin, min_p) =
            p_values
                .iter()
                .fold((String::new(), f64::INFINITY), |acc, (n, p)| {
                    if *p < acc.1 {
                        (n.clone(), *p)
                    } else {
                        acc
                    }
                });
        let row = WindowScanRow {
            half_width: w,
            window: win,
            min_p,
            argmin_covariate: argmin,
            n_minus: ws.n_minus,
            n_plus: ws.n_plus,
            p_values,
            notes: row_notes,
        };
        let rejected = row.min_p < search.threshold;
        scan.push(row);
        if rejected {
            first_failure = Some(k);
            break;
        }
    }

    let chosen = match first_failure {
        Some(0) => {
            let r = &scan[0];
            return Err(RdError::WindowSelection(format!(
                "balance rejected in the starting window {}: min p = {} ({}) with {} control and {} treated",
                r.window, r.min_p, r.argmin_covariate, r.n_minus, r.n_plus
            )));
        }
        Some(k) => k - 1,
        None => scan.len() - 1,
    };
    Ok(WindowResult {
        selected: scan[chosen].window,
        selected_half_width: scan[chosen].half_width,
        scan,
        first_failure,
        threshold: search.threshold,
        statistic_kind: search.statistic,
        seed: search.seed,
        dropped_rows,
        notes,
    })
}
