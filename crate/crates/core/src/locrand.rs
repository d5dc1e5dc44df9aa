//! Inference inside a window where treatment is treated as randomly
//! assigned: permutation tests of the sharp null, difference in means,
//! large-sample tests and polynomial outcome adjustment.
//!
//! The assignment mechanism is fixed margins: every vector with exactly the
//! observed number of treated units is equally likely. Exact p-values
//! enumerate all of them; Monte Carlo p-values draw them with generator
//! streams keyed by `(seed, draw)`, so counts do not depend on threading.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{RDDataset, Side};
use crate::error::{RdError, Result};
use crate::exec::{map_indexed, stream_rng};
use crate::stats::{mean, normal_two_sided_p, sample_variance};
use crate::wls::poly_ols;

/// Largest number of assignments enumerated exactly.
pub const ENUMERATION_CAP: u64 = 200_000;
pub const DEFAULT_DRAWS: u64 = 10_000;

const EXACT_CHUNK: u64 = 4096;
const MC_CHUNK: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lower: f64,
    pub upper: f64,
}

impl Window {
    pub fn new(lower: f64, upper: f64, cutoff: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || !(lower <= cutoff && cutoff <= upper) {
            return Err(RdError::InvalidArgument(format!(
                "window [{lower}, {upper}] must contain the cutoff {cutoff}"
            )));
        }
        Ok(Window { lower, upper })
    }

    /// `[c - w, c + w]`.
    pub fn symmetric(cutoff: f64, w: f64) -> Result<Self> {
        if !(w >= 0.0) {
            return Err(RdError::InvalidArgument(format!(
                "window half-width must be nonnegative, got {w}"
            )));
        }
        Window::new(cutoff - w, cutoff + w, cutoff)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub outcomes: Vec<f64>,
    pub treatment: Vec<u8>,
    pub scores: Vec<f64>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub cutoff: f64,
    /// Dataset rows, in dataset order.
    pub rows: Vec<usize>,
}

impl WindowSample {
    /// Build directly from outcomes and a treatment vector.
    pub fn from_parts(outcomes: Vec<f64>, treatment: Vec<u8>) -> Result<Self> {
        if outcomes.len() != treatment.len() {
            return Err(RdError::InvalidArgument(
                "outcome and treatment lengths differ".into(),
            ));
        }
        let n_plus = treatment.iter().filter(|&&d| d == 1).count();
        let n = outcomes.len();
        let scores = treatment
            .iter()
            .map(|&d| if d == 1 { 1.0 } else { -1.0 })
            .collect();
        Ok(WindowSample {
            outcomes,
            treatment,
            scores,
            n_plus,
            n_minus: n - n_plus,
            cutoff: 0.0,
            rows: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Self {
        WindowSample {
            outcomes,
            ..self.clone()
        }
    }

    fn side_values(&self, d: u8) -> Vec<f64> {
        self.outcomes
            .iter()
            .zip(&self.treatment)
            .filter(|(_, &t)| t == d)
            .map(|(&y, _)| y)
            .collect()
    }

    fn require_both_sides(&self, need: usize) -> Result<()> {
        for (side, have) in [(Side::Right, self.n_plus), (Side::Left, self.n_minus)] {
            if have < need {
                return Err(RdError::InsufficientData { side, have, need });
            }
        }
        Ok(())
    }
}

pub fn extract_window(ds: &RDDataset, win: &Window) -> Result<WindowSample> {
    let c = ds.cutoff();
    let rows: Vec<usize> = (0..ds.len())
        .filter(|&i| win.contains(ds.score()[i]))
        .collect();
    let treatment: Vec<u8> = rows
        .iter()
        .map(|&i| u8::from(ds.side(i) == Side::Right))
        .collect();
    let n_plus = treatment.iter().filter(|&&d| d == 1).count();
    let ws = WindowSample {
        outcomes: rows.iter().map(|&i| ds.outcome()[i]).collect(),
        scores: rows.iter().map(|&i| ds.score()[i]).collect(),
        n_minus: rows.len() - n_plus,
        n_plus,
        treatment,
        cutoff: c,
        rows,
    };
    ws.require_both_sides(1)?;
    Ok(ws)
}

pub fn diff_in_means(ws: &WindowSample) -> Result<f64> {
    ws.require_both_sides(1)?;
    Ok(mean(&ws.side_values(1)) - mean(&ws.side_values(0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    #[default]
    DiffMeans,
    Ks,
    RankSum,
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatisticKind::DiffMeans => "diff_means",
            StatisticKind::Ks => "ks",
            StatisticKind::RankSum => "rank_sum",
        })
    }
}

impl FromStr for StatisticKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "diff" | "diff_means" | "diffmeans" => Ok(StatisticKind::DiffMeans),
            "ks" => Ok(StatisticKind::Ks),
            "ranksum" | "rank_sum" => Ok(StatisticKind::RankSum),
            other => Err(format!("unknown statistic `{other}`")),
        }
    }
}

/// How the randomization distribution is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Enumerate when within the cap, otherwise draw.
    Auto {
        draws: u64,
    },
    Exact,
    MonteCarlo {
        draws: u64,
    },
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::Auto {
            draws: DEFAULT_DRAWS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeUsed {
    ExactEnumeration,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub statistic_kind: StatisticKind,
    pub observed: f64,
    pub p_value: f64,
    pub scheme: SchemeUsed,
    pub n_draws: u64,
    pub seed: u64,
    /// `(n_plus, n_minus)`.
    pub fixed_margins: (usize, usize),
    pub notes: Vec<String>,
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial_coefficient(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(acc)
}

/// A statistic with its per-sample precomputation.
#[derive(Debug, Clone)]
enum Prepared {
    Diff {
        y: Vec<f64>,
        total: f64,
        tol: f64,
    },
    Ks {
        order: Vec<usize>,
        group_end: Vec<bool>,
    },
    Rank {
        ranks: Vec<f64>,
        center: f64,
    },
}

impl Prepared {
    fn new(kind: StatisticKind, y: &[f64], k: usize) -> Self {
        let n = y.len();
        match kind {
            StatisticKind::DiffMeans => {
                let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                Prepared::Diff {
                    y: y.to_vec(),
                    total: y.iter().sum(),
                    tol: 1e-10 * scale,
                }
            }
            StatisticKind::Ks => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
                let group_end = (0..n)
                    .map(|p| p + 1 == n || y[order[p + 1]] != y[order[p]])
                    .collect();
                Prepared::Ks { order, group_end }
            }
            StatisticKind::RankSum => Prepared::Rank {
                ranks: mid_ranks(y),
                center: k as f64 * (n as f64 + 1.0) / 2.0,
            },
        }
    }

    fn eval(&self, treated: &[usize], mask: &[bool]) -> f64 {
        match self {
            Prepared::Diff { y, total, .. } => {
                let k = treated.len() as f64;
                let m = (y.len() - treated.len()) as f64;
                let s: f64 = treated.iter().map(|&i| y[i]).sum();
                s / k - (total - s) / m
            }
            Prepared::Ks { order, group_end } => {
                let k = treated.len() as f64;
                let m = (order.len() - treated.len()) as f64;
                let (mut ct, mut cc, mut best) = (0.0, 0.0, 0.0f64);
                for (p, &i) in order.iter().enumerate() {
                    if mask[i] {
                        ct += 1.0;
                    } else {
                        cc += 1.0;
                    }
                    if group_end[p] {
                        best = best.max((ct / k - cc / m).abs());
                    }
                }
                best
            }
            Prepared::Rank { ranks, center } => {
                treated.iter().map(|&i| ranks[i]).sum::<f64>() - center
            }
        }
    }

    /// Whether `value` is at least as extreme as `observed`.
    fn extreme(&self, value: f64, observed: f64) -> bool {
        match self {
            Prepared::Diff { tol, .. } => value.abs() >= observed.abs() - tol,
            Prepared::Ks { .. } => value >= observed - 1e-12,
            Prepared::Rank { .. } => value.abs() >= observed.abs() - 1e-9,
        }
    }
}

/// Mid-ranks (1-based), ties sharing the average rank.
pub fn mid_ranks(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && y[order[j]] == y[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = r;
        }
        i = j;
    }
    ranks
}

fn unrank_combination(mut rank: u64, n: usize, k: usize, out: &mut [usize]) {
    let mut x = 0usize;
    for (i, slot) in out.iter_mut().enumerate().take(k) {
        loop {
            let c = binomial_coefficient((n - x - 1) as u64, (k - i - 1) as u64).unwrap() as u64;
            if rank < c {
                break;
            }
            rank -= c;
            x += 1;
        }
        *slot = x;
        x += 1;
    }
}

/// Advance to the next combination in lexicographic order.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in (i + 1)..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

struct Counts {
    extreme: Vec<u64>,
    scheme: SchemeUsed,
    draws: u64,
}

fn tally(stats: &[Prepared], observed: &[f64], treated: &[usize], mask: &[bool], into: &mut [u64]) {
    for ((s, &obs), c) in stats.iter().zip(observed).zip(into.iter_mut()) {
        if s.extreme(s.eval(treated, mask), obs) {
            *c += 1;
        }
    }
}

fn randomization_counts(
    stats: &[Prepared],
    observed: &[f64],
    n: usize,
    k: usize,
    scheme: Scheme,
    seed: u64,
) -> Result<Counts> {
    let total = binomial_coefficient(n as u64, k as u64);
    let within_cap = matches!(total, Some(t) if t <= ENUMERATION_CAP as u128);
    let draws = match scheme {
        Scheme::Exact if !within_cap => {
            return Err(RdError::EnumerationCap {
                count: total.unwrap_or(u128::MAX),
                cap: ENUMERATION_CAP,
            })
        }
        Scheme::Exact => None,
        Scheme::Auto { .. } if within_cap => None,
        Scheme::Auto { draws } | Scheme::MonteCarlo { draws } => Some(draws),
    };
    let zero = || vec![0u64; stats.len()];
    let merge = |parts: Vec<Vec<u64>>| {
        parts.into_iter().fold(zero(), |mut acc, p| {
            acc.iter_mut().zip(p).for_each(|(a, b)| *a += b);
            acc
        })
    };
    match draws {
        None => {
            let total = total.unwrap() as u64;
            let chunks = total.div_ceil(EXACT_CHUNK) as usize;
            let parts = map_indexed(chunks, |c| {
                let start = c as u64 * EXACT_CHUNK;
                let end = (start + EXACT_CHUNK).min(total);
                let mut comb = vec![0usize; k];
                unrank_combination(start, n, k, &mut comb);
                let mut mask = vec![false; n];
                let mut counts = zero();
                for r in start..end {
                    mask.iter_mut().for_each(|m| *m = false);
                    comb.iter().for_each(|&i| mask[i] = true);
                    tally(stats, observed, &comb, &mask, &mut counts);
                    if r + 1 < end {
                        next_combination(&mut comb, n);
                    }
                }
                counts
            });
            Ok(Counts {
                extreme: merge(parts),
                scheme: SchemeUsed::ExactEnumeration,
                draws: total,
            })
        }
        Some(draws) => {
            if draws == 0 {
                return Err(RdError::InvalidArgument(
                    "Monte Carlo needs at least one draw".into(),
                ));
            }
            let chunks = draws.div_ceil(MC_CHUNK) as usize;
            let parts = map_indexed(chunks, |c| {
                let start = c as u64 * MC_CHUNK;
                let end = (start + MC_CHUNK).min(draws);
                let mut mask = vec![false; n];
                let mut counts = zero();
                for d in start..end {
                    let mut rng = stream_rng(seed, d);
                    let treated = index::sample(&mut rng, n, k).into_vec();
                    mask.iter_mut().for_each(|m| *m = false);
                    treated.iter().for_each(|&i| mask[i] = true);
                    tally(stats, observed, &treated, &mask, &mut counts);
                }
                counts
            });
            Ok(Counts {
                extreme: merge(parts),
                scheme: SchemeUsed::MonteCarlo,
                draws,
            })
        }
    }
}

fn p_value(count: u64, counts: &Counts) -> f64 {
    match counts.scheme {
        SchemeUsed::ExactEnumeration => count as f64 / counts.draws as f64,
        SchemeUsed::MonteCarlo => (1 + count) as f64 / (1 + counts.draws) as f64,
    }
}

fn treated_positions(treatment: &[u8]) -> (Vec<usize>, Vec<bool>) {
    let mask: Vec<bool> = treatment.iter().map(|&d| d == 1).collect();
    let idx = (0..treatment.len()).filter(|&i| mask[i]).collect();
    (idx, mask)
}

/// Permutation p-values for several outcome vectors over one common set of
/// assignments. Constant vectors get p = 1 and a note.
fn multi_permutation(
    ws: &WindowSample,
    columns: &[&[f64]],
    kind: StatisticKind,
    scheme: Scheme,
    seed: u64,
) -> Result<Vec<PermutationResult>> {
    ws.require_both_sides(1)?;
    let n = ws.len();
    let k = ws.n_plus;
    let (treated, mask) = treated_positions(&ws.treatment);

    let active: Vec<usize> = (0..columns.len())
        .filter(|&j| columns[j].iter().any(|&v| v != columns[j][0]))
        .collect();
    let stats: Vec<Prepared> = active
        .iter()
        .map(|&j| Prepared::new(kind, columns[j], k))
        .collect();
    let observed: Vec<f64> = stats.iter().map(|s| s.eval(&treated, &mask)).collect();
    let counts = randomization_counts(&stats, &observed, n, k, scheme, seed)?;

    Ok(
        (0..columns.len())
            .map(|j| {
                let base = PermutationResult {
                    statistic_kind: kind,
                    observed: 0.0,
                    p_value: 1.0,
                    scheme: counts.scheme,
                    n_draws: counts.draws,
                    seed,
                    fixed_margins: (ws.n_plus, ws.n_minus),
                    notes: Vec::new(),
                };
                match active.iter().position(|&a| a == j) {
                    Some(a) => PermutationResult {
                        observed: observed[a],
                        p_value: p_value(counts.extreme[a], &counts),
                        ..base
                    },
                    None => PermutationResult {
                        notes: vec![
                            "all values equal; randomization distribution is degenerate".into()
                        ],
                        ..base
                    },
                }
            })
            .collect(),
    )
}

pub fn permutation_test(
    ws: &WindowSample,
    kind: StatisticKind,
    scheme: Scheme,
    seed: u64,
) -> Result<PermutationResult> {
    Ok(multi_permutation(ws, &[&ws.outcomes], kind, scheme, seed)?.remove(0))
}

/// Per-covariate permutation p-values sharing one set of assignment draws.
pub fn balance_pvalues(
    ws: &WindowSample,
    covariates: &[(String, Vec<f64>)],
    kind: StatisticKind,
    scheme: Scheme,
    seed: u64,
) -> Result<Vec<(String, PermutationResult)>> {
    for (name, v) in covariates {
        if v.len() != ws.len() {
            return Err(RdError::InvalidArgument(format!(
                "covariate `{name}` has {} values for a window of {}",
                v.len(),
                ws.len()
            )));
        }
    }
    let cols: Vec<&[f64]> = covariates.iter().map(|(_, v)| v.as_slice()).collect();
    let res = multi_permutation(ws, &cols, kind, scheme, seed)?;
    Ok(covariates.iter().map(|(n, _)| n.clone()).zip(res).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeSampleResult {
    pub diff: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Normal test of equal means with the unequal-variance standard error.
pub fn large_sample_test(ws: &WindowSample) -> Result<LargeSampleResult> {
    ws.require_both_sides(2)?;
    let t = ws.side_values(1);
    let c = ws.side_values(0);
    let diff = mean(&t) - mean(&c);
    let se = (sample_variance(&t) / t.len() as f64 + sample_variance(&c) / c.len() as f64).sqrt();
    if !(se > 0.0) {
        return Err(RdError::Degenerate("zero pooled variance".into()));
    }
    let z = diff / se;
    Ok(LargeSampleResult {
        diff,
        se,
        z,
        p_value: normal_two_sided_p(z),
    })
}

/// Remove side-specific polynomial trends in `score - cutoff`, keeping each
/// side's fitted value at the cutoff. Order 0 is the identity.
pub fn transform_outcomes(ws: &WindowSample, poly_order: usize) -> Result<WindowSample> {
    if poly_order == 0 {
        return Ok(ws.clone());
    }
    ws.require_both_sides(poly_order + 1)?;
    let mut adjusted = ws.outcomes.clone();
    for (d, side) in [(1u8, Side::Right), (0u8, Side::Left)] {
        let idx: Vec<usize> = (0..ws.len()).filter(|&i| ws.treatment[i] == d).collect();
        let offsets: Vec<f64> = idx.iter().map(|&i| ws.scores[i] - ws.cutoff).collect();
        let y: Vec<f64> = idx.iter().map(|&i| ws.outcomes[i]).collect();
        let fit = poly_ols(&offsets, &y, poly_order).ok_or(RdError::SingularDesign {
            side,
            order: poly_order,
        })?;
        for (&i, &o) in idx.iter().zip(&offsets) {
            let trend: f64 = (1..=poly_order)
                .map(|k| fit.coefficients[k] * o.powi(k as i32))
                .sum();
            adjusted[i] -= trend;
        }
    }
    Ok(ws.with_outcomes(adjusted))
}

/// Everything reported for one window (the usual local-randomization table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRandomizationReport {
    pub window: Window,
    pub n_minus: usize,
    pub n_plus: usize,
    pub adjustment_order: usize,
    pub diff_in_means: f64,
    pub permutation: PermutationResult,
    pub large_sample: Option<LargeSampleResult>,
    pub notes: Vec<String>,
}

pub fn analyze_window(
    ds: &RDDataset,
    win: &Window,
    kind: StatisticKind,
    scheme: Scheme,
    seed: u64,
    adjustment_order: usize,
) -> Result<LocalRandomizationReport> {
    let ws = transform_outcomes(&extract_window(ds, win)?, adjustment_order)?;
    let permutation = permutation_test(&ws, kind, scheme, seed)?;
    let mut notes = Vec::new();
    let large_sample = match large_sample_test(&ws) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("large-sample test unavailable: {e}"));
            None
        }
    };
    Ok(LocalRandomizationReport {
        window: *win,
        n_minus: ws.n_minus,
        n_plus: ws.n_plus,
        adjustment_order,
        diff_in_means: diff_in_means(&ws)?,
        permutation,
        large_sample,
        notes,
    })
}
