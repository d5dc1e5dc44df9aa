//! Synthetic RD data with a known effect at the cutoff, and Monte Carlo
//! harnesses built on it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::continuity::{estimate, BandwidthChoice, EstimateOptions};
use crate::data::RDDataset;
use crate::error::{RdError, Result};
use crate::exec::{map_indexed, stream_rng};

/// Smallest replication count accepted by the coverage harness.
pub const MIN_REPS: usize = 100;
const TAU_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ScoreDist {
    Uniform {
        lower: f64,
        upper: f64,
    },
    /// Piecewise-uniform on `[lower, upper]` whose density right of the
    /// cutoff is `ratio` times the density left of it.
    Tilted {
        lower: f64,
        upper: f64,
        ratio: f64,
    },
}

impl ScoreDist {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            ScoreDist::Uniform { lower, upper } | ScoreDist::Tilted { lower, upper, .. } => {
                (lower, upper)
            }
        }
    }

    fn sample(&self, cutoff: f64, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ScoreDist::Uniform { lower, upper } => rng.random_range(lower..upper),
            ScoreDist::Tilted {
                lower,
                upper,
                ratio,
            } => {
                let left_mass = cutoff - lower;
                let right_mass = ratio * (upper - cutoff);
                if rng.random::<f64>() * (left_mass + right_mass) < right_mass {
                    rng.random_range(cutoff..upper)
                } else {
                    rng.random_range(lower..cutoff)
                }
            }
        }
    }
}

/// Covariate `z = poly(x - c) + shift · D + noise`. With `balanced_within`
/// set, the shift applies only to treated units farther than that from the
/// cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(default)]
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub treated_shift: f64,
    #[serde(default)]
    pub balanced_within: Option<f64>,
    #[serde(default = "one")]
    pub noise_sd: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGPSpec {
    /// Control regression, coefficients in powers of `x - cutoff`.
    pub mu0: Vec<f64>,
    /// Treated regression, coefficients in powers of `x - cutoff`.
    pub mu1: Vec<f64>,
    pub noise_sd: f64,
    /// Scale the noise by `1 + |x - cutoff|`.
    pub heteroskedastic: bool,
    pub score_dist: ScoreDist,
    pub cutoff: f64,
    pub tau_true: f64,
    pub covariates: Vec<CovariateSpec>,
}

fn horner(coef: &[f64], u: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, b| acc * u + b)
}

impl DGPSpec {
    /// Homoskedastic DGP with uniform scores on `[lower, upper]`; the effect
    /// is computed from the two regressions.
    pub fn new(
        mu0: Vec<f64>,
        mu1: Vec<f64>,
        noise_sd: f64,
        lower: f64,
        upper: f64,
        cutoff: f64,
    ) -> Result<Self> {
        let tau_true = horner(&mu1, 0.0) - horner(&mu0, 0.0);
        let spec = DGPSpec {
            mu0,
            mu1,
            noise_sd,
            heteroskedastic: false,
            score_dist: ScoreDist::Uniform { lower, upper },
            cutoff,
            tau_true,
            covariates: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_score_dist(mut self, dist: ScoreDist) -> Result<Self> {
        self.score_dist = dist;
        self.validate()?;
        Ok(self)
    }

    pub fn with_covariate(mut self, cov: CovariateSpec) -> Result<Self> {
        self.covariates.push(cov);
        self.validate()?;
        Ok(self)
    }

    pub fn heteroskedastic(mut self, on: bool) -> Self {
        self.heteroskedastic = on;
        self
    }

    pub fn mu0_at(&self, x: f64) -> f64 {
        horner(&self.mu0, x - self.cutoff)
    }

    pub fn mu1_at(&self, x: f64) -> f64 {
        horner(&self.mu1, x - self.cutoff)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RdError::InvalidArgument(m));
        if self.mu0.is_empty() || self.mu1.is_empty() {
            return bad("both regressions need at least one coefficient".into());
        }
        if self.mu0.iter().chain(&self.mu1).any(|v| !v.is_finite()) {
            return bad("regression coefficients must be finite".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!(
                "noise sd must be nonnegative, got {}",
                self.noise_sd
            ));
        }
        let (lo, hi) = self.score_dist.bounds();
        if !(lo < self.cutoff && self.cutoff < hi) {
            return bad(format!(
                "cutoff {} must lie strictly inside [{lo}, {hi}]",
                self.cutoff
            ));
        }
        if let ScoreDist::Tilted { ratio, .. } = self.score_dist {
            if !(ratio > 0.0 && ratio.is_finite()) {
                return bad(format!("density ratio must be positive, got {ratio}"));
            }
        }
        let implied = self.mu1_at(self.cutoff) - self.mu0_at(self.cutoff);
        if (implied - self.tau_true).abs() > TAU_TOLERANCE {
            return bad(format!(
                "stored effect {} differs from the regressions' gap {implied} at the cutoff",
                self.tau_true
            ));
        }
        for c in &self.covariates {
            if c.name.is_empty() || !(c.noise_sd >= 0.0) {
                return bad(format!("invalid covariate specification `{}`", c.name));
            }
        }
        Ok(())
    }
}

/// Draw `n` units with generator `rng`.
pub fn generate_with(spec: &DGPSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<RDDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(RdError::InvalidArgument(
            "sample size must be at least 1".into(),
        ));
    }
    let c = spec.cutoff;
    let mut score = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    let mut covs: Vec<Vec<f64>> = vec![Vec::with_capacity(n); spec.covariates.len()];
    for _ in 0..n {
        let x = spec.score_dist.sample(c, rng);
        let u = x - c;
        let scale = if spec.heteroskedastic {
            1.0 + u.abs()
        } else {
            1.0
        };
        let e: f64 = rng.sample(StandardNormal);
        // potential outcomes; only the one on the unit's side is observed
        let y0 = spec.mu0_at(x) + spec.noise_sd * scale * e;
        let y1 = spec.mu1_at(x) + spec.noise_sd * scale * e;
        let treated = x >= c;
        score.push(x);
        outcome.push(if treated { y1 } else { y0 });
        for (cs, col) in spec.covariates.iter().zip(covs.iter_mut()) {
            let shifted = treated && cs.balanced_within.is_none_or(|w| u.abs() > w);
            let e: f64 = rng.sample(StandardNormal);
            let z = horner(&cs.coefficients, u)
                + if shifted { cs.treated_shift } else { 0.0 }
                + cs.noise_sd * e;
            col.push(z);
        }
    }
    let mut ds = RDDataset::new(score, outcome, c)?;
    for (cs, col) in spec.covariates.iter().zip(covs) {
        ds = ds.with_complete_covariate(cs.name.clone(), col)?;
    }
    Ok(ds)
}

/// Draw `n` units; identical seeds give identical datasets.
pub fn generate(spec: &DGPSpec, n: usize, seed: u64) -> Result<RDDataset> {
    generate_with(spec, n, &mut stream_rng(seed, 0))
}

/// Apply `f` to `reps` independent datasets, replication `r` drawn from
/// stream `r` under `seed`. Results are in replication order regardless of
/// scheduling.
pub fn replicate<T, F>(spec: &DGPSpec, n: usize, reps: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &RDDataset) -> T + Sync + Send,
{
    spec.validate()?;
    map_indexed(reps, |r| {
        let ds = generate_with(spec, n, &mut stream_rng(seed, r as u64))?;
        Ok(f(r, &ds))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub nominal: f64,
    pub empirical_conventional: f64,
    pub empirical_robust: f64,
    pub reps: usize,
    /// Replications that produced an estimate; rates are over these.
    pub successful: usize,
    pub failed: usize,
    pub n: usize,
    pub mean_h: f64,
    /// Mean of `tau_hat - tau_true`.
    pub mean_bias: f64,
    /// Mean of `tau_bc - tau_true`.
    pub mean_bias_corrected: f64,
    pub mean_length_conventional: f64,
    pub mean_length_robust: f64,
    /// First few failure messages.
    pub failures: Vec<String>,
}

struct RepOutcome {
    covered: (bool, bool),
    h: f64,
    err: f64,
    err_bc: f64,
    len: (f64, f64),
}

/// Coverage of conventional and robust intervals over `reps` replications.
/// `opts.level` is replaced by `level`.
pub fn monte_carlo_coverage(
    spec: &DGPSpec,
    n: usize,
    reps: usize,
    level: f64,
    seed: u64,
    opts: &EstimateOptions,
) -> Result<CoverageResult> {
    if reps < MIN_REPS {
        return Err(RdError::InvalidArgument(format!(
            "at least {MIN_REPS} replications required, got {reps}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(RdError::InvalidArgument(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let opts = EstimateOptions { level, ..*opts };
    let tau = spec.tau_true;
    let outcomes = replicate(spec, n, reps, seed, |_, ds| {
        estimate(ds, &opts).map(|(est, _)| RepOutcome {
            covered: est.covers(tau),
            h: est.h,
            err: est.tau_hat - tau,
            err_bc: est.tau_bc - tau,
            len: (
                est.ci_conventional[1] - est.ci_conventional[0],
                est.ci_robust[1] - est.ci_robust[0],
            ),
        })
    })?;
    let mut failures = Vec::new();
    let mut ok = Vec::with_capacity(reps);
    for o in outcomes {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(e.to_string()),
        }
    }
    let failed = failures.len();
    failures.truncate(5);
    let m = ok.len();
    if m == 0 {
        return Err(RdError::Degenerate(format!(
            "every replication failed; first error: {}",
            failures.first().map(String::as_str).unwrap_or("unknown")
        )));
    }
    let avg = |f: &dyn Fn(&RepOutcome) -> f64| ok.iter().map(f).sum::<f64>() / m as f64;
    let hits_conv = ok.iter().filter(|o| o.covered.0).count();
    let hits_rob = ok.iter().filter(|o| o.covered.1).count();
    Ok(CoverageResult {
        nominal: level,
        empirical_conventional: hits_conv as f64 / m as f64,
        empirical_robust: hits_rob as f64 / m as f64,
        reps,
        successful: m,
        failed,
        n,
        mean_h: avg(&|o| o.h),
        mean_bias: avg(&|o| o.err),
        mean_bias_corrected: avg(&|o| o.err_bc),
        mean_length_conventional: avg(&|o| o.len.0),
        mean_length_robust: avg(&|o| o.len.1),
        failures,
    })
}

/// Simulation settings read from a TOML file of `key = value` lines:
///
/// ```toml
/// n = 1000
/// reps = 500
/// seed = 7
/// mu0 = [0.0, 0.5, 2.0]
/// mu1 = [1.0, 0.5, -2.0]
/// noise_sd = 1.0
/// score = { dist = "uniform", lower = -1.0, upper = 1.0 }
/// ```
///
/// Optional keys: `level` (0.95), `cutoff` (0), `heteroskedastic` (false),
/// `tau_true` (checked against the regressions when given), `order` (1),
/// `bandwidth` (fixed `h`; selected by MSE when absent) and `[[covariates]]`
/// tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: Option<u64>,
    #[serde(default = "default_level")]
    pub level: f64,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub heteroskedastic: bool,
    pub score: ScoreDist,
    #[serde(default)]
    pub cutoff: f64,
    pub tau_true: Option<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
}

fn default_level() -> f64 {
    0.95
}

fn default_order() -> usize {
    1
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RdError::InvalidData(format!("simulation config: {e}")))
    }

    pub fn dgp(&self) -> Result<DGPSpec> {
        let implied = horner(&self.mu1, 0.0) - horner(&self.mu0, 0.0);
        let spec = DGPSpec {
            mu0: self.mu0.clone(),
            mu1: self.mu1.clone(),
            noise_sd: self.noise_sd,
            heteroskedastic: self.heteroskedastic,
            score_dist: self.score,
            cutoff: self.cutoff,
            tau_true: self.tau_true.unwrap_or(implied),
            covariates: self.covariates.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            order: self.order,
            level: self.level,
            bandwidth: match self.bandwidth {
                Some(h) => BandwidthChoice::Fixed(h),
                None => BandwidthChoice::default(),
            },
            ..EstimateOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuity::estimate_sharp;
    use crate::KernelSpec;

    #[test]
    fn noiseless_constants_give_exact_jump() {
        let spec = DGPSpec::new(vec![5.0], vec![8.0], 0.0, -1.0, 1.0, 0.0).unwrap();
        assert_eq!(spec.tau_true, 3.0);
        let ds = generate(&spec, 500, 1).unwrap();
        for i in 0..ds.len() {
            let want = if ds.score()[i] >= 0.0 { 8.0 } else { 5.0 };
            assert_eq!(ds.outcome()[i], want);
        }
        let fit = estimate_sharp(&ds, 0.5, 1, KernelSpec::Triangular).unwrap();
        assert!((fit.tau_hat - 3.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_polynomial_is_exact_at_matching_order() {
        let spec = DGPSpec::new(
            vec![1.0, -2.0, 0.5],
            vec![2.0, 1.0, 3.0],
            0.0,
            -2.0,
            3.0,
            0.5,
        )
        .unwrap();
        let ds = generate(&spec, 800, 2).unwrap();
        let fit = estimate_sharp(&ds, 1.0, 2, KernelSpec::Epanechnikov).unwrap();
        assert!((fit.tau_hat - spec.tau_true).abs() < 1e-8);
    }

    #[test]
    fn same_seed_same_data() {
        let spec = DGPSpec::new(vec![0.0, 1.0], vec![1.0, 1.0], 1.0, -1.0, 1.0, 0.0)
            .unwrap()
            .with_covariate(CovariateSpec {
                name: "z".into(),
                coefficients: vec![0.0, 1.0],
                treated_shift: 0.0,
                balanced_within: None,
                noise_sd: 1.0,
            })
            .unwrap();
        let a = generate(&spec, 300, 9).unwrap();
        let b = generate(&spec, 300, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&spec, 300, 10).unwrap());
    }

    #[test]
    fn rejects_inconsistent_effect() {
        let mut spec = DGPSpec::new(vec![0.0], vec![1.0], 1.0, -1.0, 1.0, 0.0).unwrap();
        spec.tau_true = 1.5;
        assert!(spec.validate().is_err());
        assert!(generate(&spec, 10, 0).is_err());
        assert!(DGPSpec::new(vec![0.0], vec![1.0], 1.0, -1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn tilted_scores_follow_ratio() {
        let spec = DGPSpec::new(vec![0.0], vec![0.0], 1.0, -1.0, 1.0, 0.0)
            .unwrap()
            .with_score_dist(ScoreDist::Tilted {
                lower: -1.0,
                upper: 1.0,
                ratio: 3.0,
            })
            .unwrap();
        let ds = generate(&spec, 40_000, 4).unwrap();
        let share = ds.count_on(crate::Side::Right) as f64 / ds.len() as f64;
        assert!((share - 0.75).abs() < 0.01, "{share}");
    }

    #[test]
    fn balanced_within_limits_shift() {
        let spec = DGPSpec::new(vec![0.0], vec![0.0], 1.0, -1.0, 1.0, 0.0)
            .unwrap()
            .with_covariate(CovariateSpec {
                name: "z".into(),
                coefficients: vec![],
                treated_shift: 100.0,
                balanced_within: Some(0.5),
                noise_sd: 0.0,
            })
            .unwrap();
        let ds = generate(&spec, 200, 3).unwrap();
        let z = &ds.covariate("z").unwrap().values;
        for (x, v) in ds.score().iter().zip(z) {
            let want = if *x >= 0.0 && x.abs() > 0.5 {
                100.0
            } else {
                0.0
            };
            assert_eq!(v.unwrap(), want);
        }
    }

    #[test]
    fn coverage_harness_limits() {
        let spec = DGPSpec::new(vec![0.0, 1.0], vec![1.0, 1.0], 1.0, -1.0, 1.0, 0.0).unwrap();
        let opts = EstimateOptions::default();
        assert!(monte_carlo_coverage(&spec, 200, 99, 0.95, 1, &opts).is_err());
        let r = monte_carlo_coverage(&spec, 200, 100, 0.999999, 1, &opts).unwrap();
        assert_eq!(r.empirical_conventional, 1.0);
        assert_eq!(r.empirical_robust, 1.0);
        assert_eq!(r.successful + r.failed, 100);
        let k = r.empirical_robust * r.successful as f64;
        assert_eq!(k, k.round());
        let again = monte_carlo_coverage(&spec, 200, 100, 0.999999, 1, &opts).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn config_round_trip() {
        let text = r#"
            n = 500
            reps = 200
            seed = 3
            mu0 = [0.0, 0.5]
            mu1 = [2.0, 0.5]
            noise_sd = 0.5
            score = { dist = "tilted", lower = -1.0, upper = 1.0, ratio = 1.0 }

            [[covariates]]
            name = "age"
            coefficients = [40.0, 3.0]
            noise_sd = 2.0
        "#;
        let cfg = SimConfig::parse(text).unwrap();
        let spec = cfg.dgp().unwrap();
        assert_eq!(spec.tau_true, 2.0);
        assert_eq!(cfg.level, 0.95);
        assert_eq!(spec.covariates[0].treated_shift, 0.0);
        assert!(SimConfig::parse("n = 1\nreps = 1\nmu0=[0]\nmu1=[0]\nscore={dist=\"uniform\",lower=-1,upper=1}\nbogus = 1").is_err());
        let wrong = text.replace("noise_sd = 0.5", "noise_sd = 0.5\ntau_true = 1.0");
        assert!(SimConfig::parse(&wrong).unwrap().dgp().is_err());
    }
}
