//! RD plots: binned outcome means on each side of the cutoff with a global
//! polynomial fit per side drawn over them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{RDDataset, Side};
use crate::error::{RdError, Result};
use crate::wls::poly_ols;

pub const DEFAULT_BINS: usize = 20;
pub const DEFAULT_OVERLAY_ORDER: usize = 4;
pub const OVERLAY_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Equal-width intervals.
    #[default]
    Even,
    /// Equal-count intervals.
    Quantile,
}

impl FromStr for Binning {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "even" => Ok(Binning::Even),
            "quantile" => Ok(Binning::Quantile),
            other => Err(format!(
                "unknown binning `{other}` (expected even or quantile)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub midpoint: f64,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedPlotData {
    pub side: Side,
    /// Non-empty bins, ordered by score.
    pub bins: Vec<Bin>,
    /// Coefficients of the global fit in powers of `score - cutoff`.
    pub overlay_coefficients: Vec<f64>,
    /// `(score, fitted value)` samples of the global fit.
    pub overlay: Vec<(f64, f64)>,
    pub poly_order: usize,
    pub binning: Binning,
    pub n_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub cutoff: f64,
    pub left: BinnedPlotData,
    pub right: BinnedPlotData,
}

struct SideData {
    x: Vec<f64>,
    y: Vec<f64>,
    lo: f64,
    hi: f64,
}

fn side_data(ds: &RDDataset, side: Side) -> Result<SideData> {
    let rows = ds.rows_on(side);
    if rows.is_empty() {
        return Err(RdError::InsufficientData {
            side,
            have: 0,
            need: 1,
        });
    }
    let x: Vec<f64> = rows.iter().map(|&i| ds.score()[i]).collect();
    let y: Vec<f64> = rows.iter().map(|&i| ds.outcome()[i]).collect();
    let c = ds.cutoff();
    let (min, max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    // left covers [min, c), right covers [c, max]
    let (lo, hi) = match side {
        Side::Left => (min, c),
        Side::Right => (c, max),
    };
    Ok(SideData { x, y, lo, hi })
}

fn edges(sd: &SideData, n_bins: usize, binning: Binning) -> Vec<f64> {
    let mut e = Vec::with_capacity(n_bins + 1);
    e.push(sd.lo);
    match binning {
        Binning::Even => {
            let w = (sd.hi - sd.lo) / n_bins as f64;
            e.extend((1..n_bins).map(|k| sd.lo + k as f64 * w));
        }
        Binning::Quantile => {
            let mut s = sd.x.clone();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            e.extend((1..n_bins).map(|k| s[(k * n / n_bins).min(n - 1)]));
        }
    }
    e.push(sd.hi);
    e
}

fn side_bins(sd: &SideData, n_bins: usize, binning: Binning) -> Vec<Bin> {
    let e = edges(sd, n_bins, binning);
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&x, &y) in sd.x.iter().zip(&sd.y) {
        // interior edges are lower-inclusive
        let k = e[1..n_bins].partition_point(|&edge| edge <= x);
        sums[k] += y;
        counts[k] += 1;
    }
    (0..n_bins)
        .filter(|&k| counts[k] > 0)
        .map(|k| Bin {
            lower: e[k],
            upper: e[k + 1],
            midpoint: 0.5 * (e[k] + e[k + 1]),
            mean: sums[k] / counts[k] as f64,
            count: counts[k],
        })
        .collect()
}

/// Binned outcome means on each side (left, right).
pub fn bin_means(ds: &RDDataset, n_bins: usize, binning: Binning) -> Result<(Vec<Bin>, Vec<Bin>)> {
    if n_bins == 0 {
        return Err(RdError::InvalidArgument(
            "number of bins must be at least 1".into(),
        ));
    }
    let left = side_data(ds, Side::Left)?;
    let right = side_data(ds, Side::Right)?;
    Ok((
        side_bins(&left, n_bins, binning),
        side_bins(&right, n_bins, binning),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub coefficients: Vec<f64>,
    pub curve: Vec<(f64, f64)>,
}

fn side_overlay(sd: &SideData, c: f64, order: usize, side: Side) -> Result<Overlay> {
    if sd.x.len() < order + 1 {
        return Err(RdError::InsufficientData {
            side,
            have: sd.x.len(),
            need: order + 1,
        });
    }
    let offsets: Vec<f64> = sd.x.iter().map(|x| x - c).collect();
    let fit = poly_ols(&offsets, &sd.y, order).ok_or(RdError::SingularDesign { side, order })?;
    let coefficients = fit.coefficients;
    let curve = (0..OVERLAY_POINTS)
        .map(|k| {
            let x = sd.lo + (sd.hi - sd.lo) * k as f64 / (OVERLAY_POINTS - 1) as f64;
            let u = x - c;
            let y = coefficients.iter().rev().fold(0.0, |acc, b| acc * u + b);
            (x, y)
        })
        .collect();
    Ok(Overlay {
        coefficients,
        curve,
    })
}

/// Unweighted global polynomial of `order` in `score - cutoff` on each side
/// (left, right), sampled at evenly spaced scores.
pub fn global_poly_overlay(ds: &RDDataset, order: usize) -> Result<(Overlay, Overlay)> {
    let c = ds.cutoff();
    let left = side_overlay(&side_data(ds, Side::Left)?, c, order, Side::Left)?;
    let right = side_overlay(&side_data(ds, Side::Right)?, c, order, Side::Right)?;
    Ok((left, right))
}

/// Bins and overlay for both sides.
pub fn rd_plot(ds: &RDDataset, n_bins: usize, binning: Binning, order: usize) -> Result<PlotData> {
    let (lb, rb) = bin_means(ds, n_bins, binning)?;
    let (lo, ro) = global_poly_overlay(ds, order)?;
    let pack = |side, bins, ov: Overlay| BinnedPlotData {
        side,
        bins,
        overlay_coefficients: ov.coefficients,
        overlay: ov.curve,
        poly_order: order,
        binning,
        n_bins,
    };
    Ok(PlotData {
        cutoff: ds.cutoff(),
        left: pack(Side::Left, lb, lo),
        right: pack(Side::Right, rb, ro),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Json,
    Csv,
    Svg,
}

impl FromStr for PlotFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(PlotFormat::Json),
            "csv" => Ok(PlotFormat::Csv),
            "svg" => Ok(PlotFormat::Svg),
            other => Err(format!("unknown plot format `{other}`")),
        }
    }
}

fn render_csv(data: &PlotData) -> String {
    let mut out = String::from("section,side,x,y,count,lower,upper\n");
    for side in [&data.left, &data.right] {
        for b in &side.bins {
            let _ = writeln!(
                out,
                "bin,{},{},{},{},{},{}",
                side.side, b.midpoint, b.mean, b.count, b.lower, b.upper
            );
        }
    }
    for side in [&data.left, &data.right] {
        for (x, y) in &side.overlay {
            let _ = writeln!(out, "curve,{},{x},{y},,,", side.side);
        }
    }
    out
}

fn render_svg(data: &PlotData) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 40.0;
    let points = data
        .left
        .bins
        .iter()
        .chain(&data.right.bins)
        .map(|b| (b.midpoint, b.mean))
        .chain(data.left.overlay.iter().chain(&data.right.overlay).copied());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    x0 = x0.min(data.cutoff);
    x1 = x1.max(data.cutoff);
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect class="frame" x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for side in [&data.left, &data.right] {
        let pts: Vec<String> = side
            .overlay
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="overlay {}" fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
            side.side,
            pts.join(" ")
        );
        for b in &side.bins {
            let _ = writeln!(
                out,
                r#"<circle class="bin {}" cx="{:.2}" cy="{:.2}" r="3" fill="black"/>"#,
                side.side,
                sx(b.midpoint),
                sy(b.mean)
            );
        }
    }
    let xc = sx(data.cutoff);
    let _ = writeln!(
        out,
        r#"<line class="cutoff" x1="{xc:.2}" y1="{PAD}" x2="{xc:.2}" y2="{}" stroke="firebrick" stroke-dasharray="4 3"/>"#,
        H - PAD
    );
    out.push_str("</svg>\n");
    out
}

pub fn render_plot(data: &PlotData, format: PlotFormat) -> Result<String> {
    Ok(match format {
        PlotFormat::Json => serde_json::to_string_pretty(data)
            .map_err(|e| RdError::InvalidData(format!("plot serialization failed: {e}")))?,
        PlotFormat::Csv => render_csv(data),
        PlotFormat::Svg => render_svg(data),
    })
}

/// Write the plot to `path` in `format`.
pub fn emit_plot(data: &PlotData, format: PlotFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_plot(data, format)?;
    fs::write(path, text).map_err(|source| RdError::Io {
        path: path.to_path_buf(),
        source,
    })
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
    fn single_bin_is_side_mean() {
        let ds = grid(100, |x| x * x + x);
        let (l, r) = bin_means(&ds, 1, Binning::Even).unwrap();
        let mean = |side| {
            let rows = ds.rows_on(side);
            rows.iter().map(|&i| ds.outcome()[i]).sum::<f64>() / rows.len() as f64
        };
        assert!((l[0].mean - mean(Side::Left)).abs() < 1e-12);
        assert!((r[0].mean - mean(Side::Right)).abs() < 1e-12);
        assert_eq!(l[0].count + r[0].count, 100);
    }

    #[test]
    fn two_points_one_bin() {
        let ds = RDDataset::new(vec![-1.0, 1.0, 3.0], vec![9.0, 0.0, 4.0], 1.0).unwrap();
        let (_, r) = bin_means(&ds, 1, Binning::Even).unwrap();
        assert_eq!(r[0].mean, 2.0);
        assert_eq!(r[0].midpoint, 2.0);
        assert_eq!((r[0].lower, r[0].upper), (1.0, 3.0));
    }

    #[test]
    fn quantile_bins_have_equal_counts() {
        let score: Vec<f64> = (0..120)
            .map(|i| ((i as f64) - 59.5).powi(3) / 1000.0)
            .collect();
        let ds = RDDataset::new(score, vec![1.0; 120], 0.0).unwrap();
        let (l, r) = bin_means(&ds, 6, Binning::Quantile).unwrap();
        assert_eq!(l.len(), 6);
        assert!(l.iter().chain(&r).all(|b| b.count == 10));
    }

    #[test]
    fn partitions_never_straddle_cutoff() {
        let ds = grid(333, |x| x);
        for binning in [Binning::Even, Binning::Quantile] {
            let (l, r) = bin_means(&ds, 7, binning).unwrap();
            assert!(l.iter().all(|b| b.upper <= 0.0));
            assert!(r.iter().all(|b| b.lower >= 0.0));
            let total: usize = l.iter().chain(&r).map(|b| b.count).sum();
            assert_eq!(total, 333);
            // count-weighted bin means reproduce the side mean
            let weighted: f64 = l.iter().map(|b| b.mean * b.count as f64).sum::<f64>()
                / l.iter().map(|b| b.count).sum::<usize>() as f64;
            let rows = ds.rows_on(Side::Left);
            let direct = rows.iter().map(|&i| ds.outcome()[i]).sum::<f64>() / rows.len() as f64;
            assert!((weighted - direct).abs() < 1e-12);
        }
        assert!(bin_means(&ds, 0, Binning::Even).is_err());
    }

    #[test]
    fn exact_quartic_recovered() {
        let ds = grid(400, |x| {
            if x >= 0.0 {
                1.0 + x - 2.0 * x.powi(4)
            } else {
                0.5 * x * x + 3.0 * x.powi(3)
            }
        });
        let (l, r) = global_poly_overlay(&ds, 4).unwrap();
        let want_r = [1.0, 1.0, 0.0, 0.0, -2.0];
        let want_l = [0.0, 0.0, 0.5, 3.0, 0.0];
        for k in 0..5 {
            assert!(
                (r.coefficients[k] - want_r[k]).abs() < 1e-6,
                "{:?}",
                r.coefficients
            );
            assert!(
                (l.coefficients[k] - want_l[k]).abs() < 1e-6,
                "{:?}",
                l.coefficients
            );
        }
        assert_eq!(r.curve.len(), OVERLAY_POINTS);
    }

    #[test]
    fn order_zero_overlay_is_side_mean_and_gap_matches_jump() {
        let ds = grid(200, |x| if x >= 0.0 { 8.0 } else { 5.0 });
        let (l, r) = global_poly_overlay(&ds, 0).unwrap();
        assert!(l.curve.iter().all(|&(_, y)| (y - 5.0).abs() < 1e-12));
        let gap = r.coefficients[0] - l.coefficients[0];
        let tau = crate::continuity::estimate_sharp(&ds, 0.5, 1, crate::KernelSpec::Triangular)
            .unwrap()
            .tau_hat;
        assert!((gap - tau).abs() < 1e-10 && (gap - 3.0).abs() < 1e-12);
    }

    #[test]
    fn formats() {
        let ds = grid(100, |x| x + if x >= 0.0 { 1.0 } else { 0.0 });
        let data = rd_plot(&ds, 5, Binning::Even, 2).unwrap();
        let json = render_plot(&data, PlotFormat::Json).unwrap();
        let back: PlotData = serde_json::from_str(&json).unwrap();
        assert_eq!(back, data);

        let csv = render_plot(&data, PlotFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.iter().filter(|l| l.starts_with("bin,")).count(), 10);
        assert_eq!(
            lines.iter().filter(|l| l.starts_with("curve,")).count(),
            2 * OVERLAY_POINTS
        );

        let svg = render_plot(&data, PlotFormat::Svg).unwrap();
        assert_eq!(svg.matches(r#"class="cutoff""#).count(), 1);
        assert_eq!(svg.matches("<line").count(), 1);

        let dir = tempfile::tempdir().unwrap();
        emit_plot(&data, PlotFormat::Svg, dir.path().join("p.svg")).unwrap();
        assert!(matches!(
            emit_plot(&data, PlotFormat::Csv, dir.path().join("missing/p.csv")),
            Err(RdError::Io { .. })
        ));
    }

    #[test]
    fn within_bin_order_is_irrelevant() {
        let ds = grid(60, |x| (5.0 * x).sin());
        let rev: Vec<usize> = (0..60).rev().collect();
        let flipped = ds.subset(&rev).unwrap();
        let (a, b) = bin_means(&ds, 4, Binning::Even).unwrap();
        let (c, d) = bin_means(&flipped, 4, Binning::Even).unwrap();
        for (x, y) in a.iter().chain(&b).zip(c.iter().chain(&d)) {
            assert_eq!((x.count, x.lower, x.upper), (y.count, y.lower, y.upper));
            assert!((x.mean - y.mean).abs() < 1e-12);
        }
    }
}
