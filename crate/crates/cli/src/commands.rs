use std::fs;
use std::path::Path;

use serde::Serialize;
use sharprd::bandwidth::{self, BandwidthResult};
use sharprd::continuity::{estimate, BandwidthChoice, EstimateOptions, RDEstimate};
use sharprd::falsification::{run_falsification, FalsificationOptions, FalsificationReport};
use sharprd::locrand::{analyze_window, LocalRandomizationReport, Scheme, Window};
use sharprd::rdplot::{rd_plot, render_plot, PlotFormat};
use sharprd::simulate::{monte_carlo_coverage, CoverageResult, SimConfig};
use sharprd::window::{select_window, WindowResult, WindowSearch};
use sharprd::{load_csv, validate, CsvSchema, RDDataset};

use crate::args::*;
use crate::render::{self, interval, num, opt_num, Table};
use crate::CliError;

fn load(args: &DataArgs) -> Result<RDDataset, CliError> {
    let schema = CsvSchema::new(&args.score, &args.outcome).with_covariates(&args.covariates);
    let ds = load_csv(&args.data, &schema, args.cutoff)?;
    for w in validate(&ds).warnings {
        eprintln!("warning: {w}");
    }
    Ok(ds)
}

fn resolve_seed(flag: Option<u64>, fallback: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(fallback) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::usage(format!(
                "{SEED_ENV} must be a nonnegative integer, got `{v}`"
            ))
        }),
        Err(_) => Err(CliError::usage(format!(
            "a seed is required: pass --seed or set {SEED_ENV}"
        ))),
    }
}

fn parse_window(text: &str, cutoff: f64) -> Result<Window, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || CliError::usage(format!("--window expects `lower,upper`, got `{text}`"));
    let [a, b] = parts.as_slice() else {
        return Err(bad());
    };
    let lower: f64 = a.parse().map_err(|_| bad())?;
    let upper: f64 = b.parse().map_err(|_| bad())?;
    Ok(Window::new(lower, upper, cutoff)?)
}

fn scheme(args: &PermutationArgs) -> Scheme {
    match args.scheme {
        SchemeArg::Auto => Scheme::Auto { draws: args.draws },
        SchemeArg::Exact => Scheme::Exact,
        SchemeArg::Mc => Scheme::MonteCarlo { draws: args.draws },
    }
}

fn fit_options(fit: &FitArgs, bandwidth: BandwidthChoice) -> EstimateOptions {
    EstimateOptions {
        order: fit.order,
        kernel: fit.kernel,
        level: fit.level,
        bandwidth,
        b_ratio: fit.b_ratio,
    }
}

fn report<T: Serialize>(
    command: &str,
    format: Format,
    value: &T,
    tables: impl FnOnce() -> Vec<Table>,
) -> Result<String, CliError> {
    match format {
        Format::Json => render::json(command, value),
        other => render::tables(other, &tables()),
    }
}

fn estimate_row(t: &mut Table, label: &str, e: &RDEstimate, f: Format) {
    t.push(vec![
        label.to_string(),
        num(e.tau_hat, f, 3),
        interval(e.ci_robust, f, 3),
        num(e.p_robust, f, 4),
        num(e.h, f, 3),
        e.n_left.to_string(),
        e.n_right.to_string(),
    ]);
}

fn estimate_table() -> Table {
    Table::new(["", "RD effect", "robust CI", "robust p", "h", "N_l", "N_r"])
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    effect: f64,
    robust_ci: [f64; 2],
    robust_p: f64,
    h: f64,
    n_left: usize,
    n_right: usize,
    estimate: &'a RDEstimate,
    bandwidth: Option<&'a BandwidthResult>,
}

pub fn estimate_cmd(args: &EstimateArgs) -> Result<String, CliError> {
    let ds = load(&args.data)?;
    let choice = match args.h {
        Some(h) => BandwidthChoice::Fixed(h),
        None => BandwidthChoice::Select(args.bandwidth_method),
    };
    let (est, bw) = estimate(&ds, &fit_options(&args.fit, choice))?;
    let out = EstimateReport {
        effect: est.tau_hat,
        robust_ci: est.ci_robust,
        robust_p: est.p_robust,
        h: est.h,
        n_left: est.n_left,
        n_right: est.n_right,
        estimate: &est,
        bandwidth: bw.as_ref(),
    };
    let f = args.output.format;
    report("estimate", f, &out, || {
        let mut t = estimate_table();
        estimate_row(&mut t, "estimate", &est, f);
        vec![t]
    })
}

pub fn bandwidth_cmd(args: &BandwidthArgs) -> Result<String, CliError> {
    let ds = load(&args.data)?;
    let r = bandwidth::select(&ds, args.method, args.order, args.kernel)?;
    let f = args.output.format;
    report("bandwidth", f, &r, || {
        let mut t = Table::new([
            "method",
            "order",
            "kernel",
            "h",
            "constant",
            "rate",
            "n",
            "unclamped_h",
        ]);
        t.push(vec![
            r.method.to_string(),
            r.order.to_string(),
            r.kernel.to_string(),
            num(r.h, f, 4),
            num(r.constant, f, 4),
            num(r.rate_exponent, f, 4),
            r.n.to_string(),
            num(r.unclamped_h, f, 4),
        ]);
        vec![t]
    })
}

fn locrand_table(r: &LocalRandomizationReport, f: Format) -> Table {
    let mut t = Table::new([
        "RD effect",
        "Fisher p",
        "large-sample p",
        "window",
        "N_minus",
        "N_plus",
    ]);
    t.push(vec![
        num(r.diff_in_means, f, 3),
        num(r.permutation.p_value, f, 4),
        opt_num(r.large_sample.as_ref().map(|l| l.p_value), f, 4),
        interval([r.window.lower, r.window.upper], f, 3),
        r.n_minus.to_string(),
        r.n_plus.to_string(),
    ]);
    t
}

pub fn locrand_cmd(args: &LocrandArgs) -> Result<String, CliError> {
    let seed = resolve_seed(args.perm.seed, None)?;
    let ds = load(&args.data)?;
    let win = parse_window(&args.window, ds.cutoff())?;
    let r = analyze_window(
        &ds,
        &win,
        args.perm.stat,
        scheme(&args.perm),
        seed,
        args.adjust,
    )?;
    let f = args.output.format;
    report("locrand", f, &r, || vec![locrand_table(&r, f)])
}

fn window_table(r: &WindowResult, f: Format) -> Table {
    let mut t = Table::new(["window", "min balance p", "covariate", "N_minus", "N_plus"]);
    for row in &r.scan {
        t.push(vec![
            interval([row.window.lower, row.window.upper], f, 3),
            num(row.min_p, f, 3),
            row.argmin_covariate.clone(),
            row.n_minus.to_string(),
            row.n_plus.to_string(),
        ]);
    }
    t
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn window_cmd(args: &WindowArgs) -> Result<String, CliError> {
    let seed = resolve_seed(args.perm.seed, None)?;
    if args.data.covariates.is_empty() {
        return Err(CliError::usage("window selection needs --covariates"));
    }
    let ds = load(&args.data)?;
    let search = WindowSearch {
        w_start: args.w_start,
        increment: args.increment,
        threshold: args.threshold,
        statistic: args.perm.stat,
        scheme: scheme(&args.perm),
        seed,
        max_windows: args.max_windows,
    };
    let r = select_window(&ds, &args.data.covariates, &search)?;
    if let Some(path) = &args.curve {
        let mut t = Table::new(["half_width", "min_p"]);
        for (w, p) in r.pvalue_curve() {
            t.push(vec![w.to_string(), p.to_string()]);
        }
        write_file(path, &t.to_csv()?)?;
    }
    let f = args.output.format;
    report("window", f, &r, || {
        let mut t = window_table(&r, f);
        t.title = Some(format!(
            "selected window {} (threshold {})",
            interval([r.selected.lower, r.selected.upper], f, 3),
            r.threshold
        ));
        vec![t]
    })
}

fn falsify_tables(r: &FalsificationReport, f: Format) -> Vec<(&'static str, Table)> {
    let mut cov = Table::new([
        "covariate",
        "estimate",
        "robust CI",
        "robust p",
        "h",
        "N_l",
        "N_r",
        "note",
    ])
    .titled("covariate balance");
    for c in &r.covariate_effects {
        let mut row = match &c.estimate {
            Some(e) => vec![
                c.covariate.clone(),
                num(e.tau_hat, f, 3),
                interval(e.ci_robust, f, 3),
                num(e.p_robust, f, 4),
                num(e.h, f, 3),
                e.n_left.to_string(),
                e.n_right.to_string(),
            ],
            None => {
                let mut v = vec![c.covariate.clone()];
                v.extend(std::iter::repeat_n("NA".to_string(), 6));
                v
            }
        };
        row.push(
            c.error
                .clone()
                .or_else(|| c.estimate.as_ref()?.notes.first().cloned())
                .unwrap_or_default(),
        );
        cov.push(row);
    }

    let mut binom = Table::new(["window", "N_minus", "N_plus", "q", "p"]).titled("binomial test");
    if let Some(b) = &r.binomial_test {
        binom.push(vec![
            interval([b.window.lower, b.window.upper], f, 3),
            b.n_minus.to_string(),
            b.n_plus.to_string(),
            num(b.q, f, 2),
            num(b.p_value, f, 4),
        ]);
    }

    let mut dens =
        Table::new(["test", "jump", "se", "z", "p", "bandwidth", "bins"]).titled("density test");
    if let Some(d) = &r.density_test {
        dens.push(vec![
            d.label.clone(),
            num(d.jump, f, 4),
            num(d.se, f, 4),
            num(d.z, f, 3),
            num(d.p_value, f, 4),
            num(d.bandwidth, f, 3),
            d.bins_per_side.to_string(),
        ]);
    }

    let mut placebo = Table::new([
        "cutoff",
        "side",
        "estimate",
        "robust CI",
        "robust p",
        "h",
        "note",
    ])
    .titled("placebo cutoffs");
    for p in &r.placebo {
        let mut row = vec![num(p.cutoff, f, 3), p.side.to_string()];
        match &p.estimate {
            Some(e) => row.extend([
                num(e.tau_hat, f, 3),
                interval(e.ci_robust, f, 3),
                num(e.p_robust, f, 4),
                num(e.h, f, 3),
            ]),
            None => row.extend(std::iter::repeat_n("NA".to_string(), 4)),
        }
        row.push(p.error.clone().unwrap_or_default());
        placebo.push(row);
    }

    let mut sens = Table::new([
        "multiplier",
        "h",
        "estimate",
        "robust CI",
        "robust p",
        "note",
    ])
    .titled("bandwidth sensitivity");
    if let Some(s) = &r.sensitivity {
        for row in &s.rows {
            let mut cells = vec![num(row.multiplier, f, 2), num(row.h, f, 3)];
            match &row.estimate {
                Some(e) => cells.extend([
                    num(e.tau_hat, f, 3),
                    interval(e.ci_robust, f, 3),
                    num(e.p_robust, f, 4),
                ]),
                None => cells.extend(std::iter::repeat_n("NA".to_string(), 3)),
            }
            cells.push(row.error.clone().unwrap_or_default());
            sens.push(cells);
        }
    }
    vec![
        ("covariates", cov),
        ("binomial", binom),
        ("density", dens),
        ("placebo", placebo),
        ("sensitivity", sens),
    ]
}

pub fn falsify_cmd(args: &FalsifyArgs) -> Result<String, CliError> {
    let ds = load(&args.data)?;
    let window = args
        .window
        .as_deref()
        .map(|w| parse_window(w, ds.cutoff()))
        .transpose()?;
    let opts = FalsificationOptions {
        estimate: fit_options(&args.fit, BandwidthChoice::default()),
        window,
        q: args.q,
        placebo_cutoffs: (!args.placebo.is_empty()).then(|| args.placebo.clone()),
        multipliers: args.multipliers.clone(),
    };
    let r = run_falsification(&ds, &opts)?;
    if let Some(dir) = &args.tables_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
        for (name, t) in falsify_tables(&r, Format::Csv) {
            write_file(&dir.join(format!("{name}.csv")), &t.to_csv()?)?;
        }
    }
    let f = args.output.format;
    report("falsify", f, &r, || {
        let mut tables: Vec<Table> = falsify_tables(&r, f).into_iter().map(|(_, t)| t).collect();
        if f == Format::Csv {
            for t in &mut tables {
                t.title = None;
            }
        }
        tables
    })
}

pub fn plot_cmd(args: &PlotArgs) -> Result<String, CliError> {
    let ds = load(&args.data)?;
    let data = rd_plot(&ds, args.bins, args.binning, args.order)?;
    match args.format {
        PlotFormat::Json => render::json("plot", &data),
        other => Ok(render_plot(&data, other)?),
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    seed: u64,
    config: &'a SimConfig,
    tau_true: f64,
    coverage: &'a CoverageResult,
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<String, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = SimConfig::parse(&text)?;
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let spec = cfg.dgp()?;
    let cov = monte_carlo_coverage(
        &spec,
        cfg.n,
        cfg.reps,
        cfg.level,
        seed,
        &cfg.estimate_options(),
    )?;
    let out = SimulateReport {
        seed,
        config: &cfg,
        tau_true: spec.tau_true,
        coverage: &cov,
    };
    let f = args.output.format;
    report("simulate", f, &out, || {
        let mut t = Table::new([
            "n",
            "reps",
            "successful",
            "nominal",
            "conventional",
            "robust",
            "mean h",
            "mean bias",
            "mean bias (bc)",
        ]);
        t.push(vec![
            cov.n.to_string(),
            cov.reps.to_string(),
            cov.successful.to_string(),
            num(cov.nominal, f, 3),
            num(cov.empirical_conventional, f, 3),
            num(cov.empirical_robust, f, 3),
            num(cov.mean_h, f, 4),
            num(cov.mean_bias, f, 4),
            num(cov.mean_bias_corrected, f, 4),
        ]);
        vec![t]
    })
}
