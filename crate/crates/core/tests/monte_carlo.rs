//! Simulation checks with known answers. Replication counts are small
//! enough to keep the suite quick while leaving several standard errors of
//! room in each tolerance.

use sharprd::continuity::{estimate_sharp, EstimateOptions};
use sharprd::falsification::{bandwidth_sensitivity, binomial_density_test, placebo_cutoffs};
use sharprd::locrand::{
    extract_window, permutation_test, Scheme, StatisticKind, Window, WindowSample,
};
use sharprd::simulate::{monte_carlo_coverage, replicate, DGPSpec};
use sharprd::KernelSpec;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn reported_variance_matches_sampling_variance() {
    let spec = DGPSpec::new(vec![0.0, 1.0], vec![1.0, 2.0], 1.0, -1.0, 1.0, 0.0)
        .unwrap()
        .heteroskedastic(true);
    let fits = replicate(&spec, 800, 2000, 3, |_, ds| {
        estimate_sharp(ds, 0.5, 1, KernelSpec::Triangular).map(|f| (f.tau_hat, f.variance))
    })
    .unwrap();
    let (tau, var): (Vec<f64>, Vec<f64>) = fits.into_iter().map(Result::unwrap).unzip();
    let m = mean(&tau);
    let empirical = tau.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (tau.len() - 1) as f64;
    let ratio = empirical / mean(&var);
    assert!((0.8..=1.2).contains(&ratio), "empirical/reported = {ratio}");
}

#[test]
fn placebo_intervals_cover_zero() {
    // jump only at the true cutoff, smooth elsewhere
    let spec = DGPSpec::new(
        vec![0.0, 1.0, 0.5],
        vec![1.0, 1.0, 0.5],
        1.0,
        -1.0,
        1.0,
        0.0,
    )
    .unwrap();
    let opts = EstimateOptions::default();
    let hits = replicate(&spec, 2000, 300, 4, |_, ds| {
        let rows = placebo_cutoffs(ds, &[-0.5, 0.5], &opts)?;
        Ok::<_, sharprd::RdError>(
            rows.iter()
                .map(|r| r.estimate.as_ref().is_some_and(|e| e.covers(0.0).1))
                .collect::<Vec<_>>(),
        )
    })
    .unwrap();
    let flat: Vec<bool> = hits.into_iter().flat_map(Result::unwrap).collect();
    let rate = flat.iter().filter(|&&c| c).count() as f64 / flat.len() as f64;
    assert!((0.92..=0.98).contains(&rate), "placebo coverage {rate}");
}

#[test]
fn smaller_bandwidth_multiplier_has_smaller_bias() {
    let spec = DGPSpec::new(
        vec![0.0, 0.5, -3.0],
        vec![1.0, 0.5, 3.0],
        0.5,
        -1.0,
        1.0,
        0.0,
    )
    .unwrap();
    let opts = EstimateOptions::default();
    let errs = replicate(&spec, 1000, 500, 5, |_, ds| {
        let s = bandwidth_sensitivity(ds, &[0.5, 1.5], &opts)?;
        let err = |i: usize| s.rows[i].estimate.as_ref().map(|e| (e.tau_hat - 1.0).abs());
        Ok::<_, sharprd::RdError>((err(0), err(1)))
    })
    .unwrap();
    let (small, large): (Vec<f64>, Vec<f64>) = errs
        .into_iter()
        .map(|r| {
            let (a, b) = r.unwrap();
            (a.unwrap(), b.unwrap())
        })
        .unzip();
    assert!(
        mean(&small) <= mean(&large),
        "{} vs {}",
        mean(&small),
        mean(&large)
    );
}

#[test]
fn untilted_scores_give_uniform_binomial_p() {
    let spec = DGPSpec::new(vec![0.0], vec![0.0], 1.0, -1.0, 1.0, 0.0).unwrap();
    let win = Window::symmetric(0.0, 0.2).unwrap();
    let ps = replicate(&spec, 500, 1000, 6, |_, ds| {
        binomial_density_test(ds, &win, 0.5).map(|t| t.p_value)
    })
    .unwrap();
    let ps: Vec<f64> = ps.into_iter().map(Result::unwrap).collect();
    // discreteness makes the test conservative, never anti-conservative
    let size = ps.iter().filter(|&&p| p < 0.05).count() as f64 / ps.len() as f64;
    assert!(size <= 0.065, "size {size}");
    assert!(size >= 0.02, "size {size}");
}

#[test]
fn coverage_is_reproducible_and_wide_intervals_cover() {
    let spec = DGPSpec::new(vec![0.0, 1.0], vec![0.5, 1.0], 1.0, -1.0, 1.0, 0.0).unwrap();
    let opts = EstimateOptions::default();
    let a = monte_carlo_coverage(&spec, 400, 100, 0.95, 8, &opts).unwrap();
    let b = monte_carlo_coverage(&spec, 400, 100, 0.95, 8, &opts).unwrap();
    assert_eq!(a, b);
    let wide = monte_carlo_coverage(&spec, 400, 100, 0.999999, 8, &opts).unwrap();
    assert_eq!(wide.empirical_conventional, 1.0);
    assert_eq!(wide.empirical_robust, 1.0);
}

#[test]
fn monte_carlo_p_tracks_exact_p() {
    let spec = DGPSpec::new(vec![0.0], vec![0.4], 1.0, -1.0, 1.0, 0.0).unwrap();
    let samples = replicate(&spec, 150, 6, 9, |_, ds| {
        extract_window(ds, &Window::symmetric(0.0, 0.12).unwrap())
    })
    .unwrap();
    let mut compared = 0;
    for ws in samples.into_iter().map(Result::unwrap) {
        let ws: WindowSample = ws;
        let exact = permutation_test(&ws, StatisticKind::DiffMeans, Scheme::Exact, 0);
        let Ok(exact) = exact else { continue };
        let mc = permutation_test(
            &ws,
            StatisticKind::DiffMeans,
            Scheme::MonteCarlo { draws: 100_000 },
            1,
        )
        .unwrap();
        assert!((exact.p_value - mc.p_value).abs() < 0.01);
        compared += 1;
    }
    assert!(compared >= 4);
}
