//! Independent reference implementations used by the oracle tests. They
//! favour directness over speed and share no code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

/// Which statistic the brute-force enumerator evaluates.
#[derive(Clone, Copy, Debug)]
pub enum Stat {
    Diff,
    Ks,
    Rank,
}

fn mean_of(y: &[f64], pick: impl Fn(usize) -> bool) -> f64 {
    let (s, c) = (0..y.len())
        .filter(|&i| pick(i))
        .fold((0.0, 0.0), |(s, c), i| (s + y[i], c + 1.0));
    s / c
}

fn ks(y: &[f64], treated: &[bool]) -> f64 {
    let k = treated.iter().filter(|&&t| t).count() as f64;
    let m = treated.len() as f64 - k;
    let mut best = 0.0f64;
    for &v in y {
        let ft = (0..y.len()).filter(|&i| treated[i] && y[i] <= v).count() as f64 / k;
        let fc = (0..y.len()).filter(|&i| !treated[i] && y[i] <= v).count() as f64 / m;
        best = best.max((ft - fc).abs());
    }
    best
}

fn mid_rank(y: &[f64], i: usize) -> f64 {
    let below = y.iter().filter(|&&v| v < y[i]).count() as f64;
    let equal = y.iter().filter(|&&v| v == y[i]).count() as f64;
    below + (equal + 1.0) / 2.0
}

fn statistic(y: &[f64], treated: &[bool], stat: Stat) -> f64 {
    match stat {
        Stat::Diff => mean_of(y, |i| treated[i]) - mean_of(y, |i| !treated[i]),
        Stat::Ks => ks(y, treated),
        Stat::Rank => {
            let k = treated.iter().filter(|&&t| t).count() as f64;
            let n = y.len() as f64;
            (0..y.len())
                .filter(|&i| treated[i])
                .map(|i| mid_rank(y, i))
                .sum::<f64>()
                - k * (n + 1.0) / 2.0
        }
    }
}

/// Exact two-sided permutation p-value by enumerating every bitmask with
/// the observed number of treated units.
pub fn brute_force_p(y: &[f64], d: &[u8], stat: Stat) -> f64 {
    let n = y.len();
    assert!(n <= 20);
    let k = d.iter().filter(|&&v| v == 1).count() as u32;
    let observed_mask: Vec<bool> = d.iter().map(|&v| v == 1).collect();
    if y.iter().all(|&v| v == y[0]) {
        return 1.0;
    }
    let obs = statistic(y, &observed_mask, stat);
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut hits, mut total) = (0u64, 0u64);
    for bits in 0u32..(1 << n) {
        if bits.count_ones() != k {
            continue;
        }
        let mask: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        let t = statistic(y, &mask, stat);
        let extreme = match stat {
            Stat::Diff => t.abs() >= obs.abs() - 1e-10 * scale,
            Stat::Ks => t >= obs - 1e-12,
            Stat::Rank => t.abs() >= obs.abs() - 1e-9,
        };
        total += 1;
        hits += u64::from(extreme);
    }
    hits as f64 / total as f64
}

fn choose(n: u64, k: u64) -> u128 {
    // Pascal's rule, exact in u128 for n <= 120
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for j in 1..row.len() {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    row[k as usize]
}

/// Binomial point masses for `n` trials.
pub fn binomial_masses(n: u64, q: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| choose(n, k) as f64 * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32))
        .collect()
}

/// Two-sided exact binomial p-value: sum of masses no larger than the
/// observed one.
pub fn binomial_p(successes: u64, n: u64, q: f64) -> f64 {
    let m = binomial_masses(n, q);
    let obs = m[successes as usize];
    m.iter()
        .filter(|&&v| v <= obs * (1.0 + 1e-7))
        .sum::<f64>()
        .min(1.0)
}

/// Weighted least squares of `y` on `1, u, ..., u^p` by Gaussian
/// elimination with partial pivoting on the raw normal equations.
pub fn wls(u: &[f64], y: &[f64], w: &[f64], p: usize) -> Vec<f64> {
    let d = p + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for ((&ui, &yi), &wi) in u.iter().zip(y).zip(w) {
        for r in 0..d {
            for c in 0..d {
                a[r][c] += wi * ui.powi((r + c) as i32);
            }
            a[r][d] += wi * ui.powi(r as i32) * yi;
        }
    }
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=d {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..d).map(|r| a[r][d] / a[r][r]).collect()
}

/// Triangular, uniform and Epanechnikov weights.
pub fn kernel(name: &str, u: f64) -> f64 {
    let a = u.abs();
    match name {
        "triangular" => (1.0 - a).max(0.0),
        "uniform" => f64::from(u8::from(a <= 1.0)),
        "epanechnikov" => (0.75 * (1.0 - u * u)).max(0.0),
        _ => panic!("unknown kernel {name}"),
    }
}
