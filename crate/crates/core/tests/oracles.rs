mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharprd::continuity::estimate_sharp;
use sharprd::falsification::binomial_density_test;
use sharprd::locrand::{
    balance_pvalues, diff_in_means, extract_window, permutation_test, Scheme, StatisticKind,
    Window, WindowSample,
};
use sharprd::stats::binomial_two_sided_p;
use sharprd::wls::fit_local_poly;
use sharprd::{KernelSpec, RDDataset, Side};
use support::oracle::{self, Stat};

fn random_sample(rng: &mut ChaCha8Rng, n: usize, integer: bool) -> (Vec<f64>, Vec<u8>) {
    let k = rng.random_range(1..n);
    let y: Vec<f64> = (0..n)
        .map(|_| {
            if integer {
                rng.random_range(0..4) as f64
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
        .collect();
    let mut d = vec![0u8; n];
    for i in rand::seq::index::sample(rng, n, k) {
        d[i] = 1;
    }
    (y, d)
}

#[test]
fn permutation_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for trial in 0..150 {
        let n = rng.random_range(2..=9);
        let (y, d) = random_sample(&mut rng, n, trial % 2 == 0);
        let ws = WindowSample::from_parts(y.clone(), d.clone()).unwrap();
        for (kind, stat) in [
            (StatisticKind::DiffMeans, Stat::Diff),
            (StatisticKind::Ks, Stat::Ks),
            (StatisticKind::RankSum, Stat::Rank),
        ] {
            let got = permutation_test(&ws, kind, Scheme::Exact, 0)
                .unwrap()
                .p_value;
            let want = oracle::brute_force_p(&y, &d, stat);
            assert_eq!(got, want, "y={y:?} d={d:?} {kind:?}");
        }
    }
}

#[test]
fn balance_pvalues_match_standalone_tests() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 30;
    let d: Vec<u8> = (0..n).map(|i| u8::from(i < 14)).collect();
    let balanced: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let rigged: Vec<f64> = d
        .iter()
        .map(|&t| t as f64 + rng.random_range(0.0..0.8))
        .collect();
    let ws = WindowSample::from_parts(vec![0.0; n], d).unwrap();
    let covs = vec![
        ("a".to_string(), balanced.clone()),
        ("b".to_string(), rigged.clone()),
    ];
    let scheme = Scheme::MonteCarlo { draws: 100_000 };
    let joint = balance_pvalues(&ws, &covs, StatisticKind::DiffMeans, scheme, 3).unwrap();
    for ((_, r), v) in joint.iter().zip([balanced, rigged]) {
        let alone =
            permutation_test(&ws.with_outcomes(v), StatisticKind::DiffMeans, scheme, 99).unwrap();
        assert!((r.p_value - alone.p_value).abs() < 0.01);
    }
    let min = joint.iter().map(|(_, r)| r.p_value).fold(1.0, f64::min);
    assert_eq!(min, joint[1].1.p_value);
    let flat = vec![("c".to_string(), vec![4.0; n])];
    assert_eq!(
        balance_pvalues(&ws, &flat, StatisticKind::Ks, scheme, 1).unwrap()[0]
            .1
            .p_value,
        1.0
    );
}

#[test]
fn binomial_matches_exact_summation() {
    for n in 1..=40u64 {
        for k in 0..=n {
            for q in [0.5, 0.3] {
                let got = binomial_two_sided_p(k, n, q);
                let want = oracle::binomial_p(k, n, q);
                assert!(
                    (got - want).abs() < 1e-12,
                    "n={n} k={k} q={q}: {got} vs {want}"
                );
            }
        }
    }
    // 39 units, 20 treated: every count except 19 and 20 is less likely
    let masses = oracle::binomial_masses(39, 0.5);
    let hand: f64 = masses
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != 19 && *j != 20)
        .map(|(_, m)| m)
        .sum::<f64>()
        + masses[19]
        + masses[20];
    assert!((binomial_two_sided_p(20, 39, 0.5) - hand).abs() < 1e-12);
    assert!((hand - 1.0).abs() < 1e-12);
}

#[test]
fn binomial_window_counts() {
    let score: Vec<f64> = (0..39)
        .map(|i| {
            if i < 20 {
                0.1 + i as f64 * 0.01
            } else {
                -0.1 - i as f64 * 0.01
            }
        })
        .collect();
    let ds = RDDataset::new(score, vec![0.0; 39], 0.0).unwrap();
    let t = binomial_density_test(&ds, &Window::symmetric(0.0, 1.0).unwrap(), 0.5).unwrap();
    assert_eq!((t.n_plus, t.n_minus), (20, 19));
    assert!((t.p_value - oracle::binomial_p(20, 39, 0.5)).abs() < 1e-12);
}

#[test]
fn local_fit_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..200 {
        let n = rng.random_range(12..60);
        let c = rng.random_range(-1.0..1.0);
        let score: Vec<f64> = (0..n).map(|_| c + rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = score
            .iter()
            .map(|x| (3.0 * x).sin() + rng.random_range(-0.5..0.5))
            .collect();
        let ds = RDDataset::new(score.clone(), y.clone(), c).unwrap();
        let (kernel, name) = [
            (KernelSpec::Triangular, "triangular"),
            (KernelSpec::Uniform, "uniform"),
            (KernelSpec::Epanechnikov, "epanechnikov"),
        ][trial % 3];
        let p = trial % 3;
        let h = rng.random_range(0.8..2.0);
        for side in [Side::Left, Side::Right] {
            let Ok(fit) = fit_local_poly(&ds, side, h, p, kernel) else {
                continue;
            };
            let (mut u, mut yy, mut w) = (Vec::new(), Vec::new(), Vec::new());
            for (x, v) in score.iter().zip(&y) {
                let o = x - c;
                let inside = match side {
                    Side::Right => (0.0..=h).contains(&o),
                    Side::Left => o < 0.0 && o >= -h,
                };
                let k = oracle::kernel(name, o / h);
                if inside && k > 0.0 {
                    u.push(o);
                    yy.push(*v);
                    w.push(k);
                }
            }
            let want = oracle::wls(&u, &yy, &w, p);
            let got = fit.coefficients();
            for (a, b) in got.iter().zip(&want) {
                assert!(
                    (a - b).abs() < 1e-8 * (1.0 + b.abs()),
                    "{got:?} vs {want:?}"
                );
            }
        }
    }
}

#[test]
fn diff_in_means_bridges_to_uniform_local_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let n = rng.random_range(20..200);
        let c = rng.random_range(-0.5..0.5);
        let score: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = score
            .iter()
            .map(|x| 2.0 * x + rng.random_range(-1.0..1.0))
            .collect();
        let ds = RDDataset::new(score, y, c).unwrap();
        let w = rng.random_range(0.1..0.5);
        let Ok(ws) = extract_window(&ds, &Window::symmetric(c, w).unwrap()) else {
            continue;
        };
        let fit = estimate_sharp(&ds, w, 0, KernelSpec::Uniform).unwrap();
        assert!((diff_in_means(&ws).unwrap() - fit.tau_hat).abs() < 1e-10);
    }
}
