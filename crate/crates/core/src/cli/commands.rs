use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::clean::{aggregate, linear_interpolate, remove_range_flagged, remove_wiper_anomalies, WiperPhase};
use crate::cli::config::{PhaseSetting, RunConfig};
use crate::corr::{
    argmax_lags, conditional_ccf, estimate_lag_time, evaluate_lag_time, evaluation_rows, sieve_bootstrap_ci,
    BootstrapOptions, LagOutcome, LagTimeEstimate,
};
use crate::error::{Error, Result};
use crate::gam::{Frame, Term};
use crate::impute::{impute_series, ImputeOptions};
use crate::io::{format_timestamp, format_value, read_csv, read_flags, write_series, write_table};
use crate::normalize::ConditionalNormalizer;
use crate::series::{CovariateSet, TimeSeries};
use crate::synth::simulate;

/// Settings resolved from flags, environment and config.
#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub profile_median: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn load(cfg: &RunConfig) -> Result<CovariateSet> {
    read_csv(cfg.input()?, cfg.data.step)
}

fn column<'a>(data: &'a CovariateSet, name: &str, input: &Path) -> Result<&'a TimeSeries> {
    data.column(name).ok_or_else(|| Error::Input {
        path: input.display().to_string(),
        message: format!("no column named `{name}`"),
    })
}

fn check_covariates(cfg: &RunConfig, data: &CovariateSet) -> Result<()> {
    let input = cfg.input()?;
    for c in &cfg.roles.covariates {
        column(data, c, &input)?;
    }
    Ok(())
}

fn na_or<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn json_file(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn clean(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let input = cfg.input()?;
    let data = load(cfg)?;
    let c = &cfg.clean;
    let flags = if c.range_flags {
        let path = cfg
            .data
            .flags
            .as_deref()
            .map(|p| cfg.resolve(p))
            .ok_or_else(|| Error::Config("clean.range_flags needs data.flags".into()))?;
        read_flags(path, &data)?
    } else {
        HashMap::new()
    };
    if let Some(w) = &c.wiper_variable {
        column(&data, w, &input)?;
    }
    for v in &c.interpolate {
        column(&data, v, &input)?;
    }

    let mut cleaned = Vec::with_capacity(data.width());
    let mut report = Vec::with_capacity(data.width());
    for s in data.columns() {
        let observed_in = s.observed_count();
        let mut cur = s.clone();
        let mut range_removed = 0;
        if let Some(f) = flags.get(s.name()) {
            cur = remove_range_flagged(&cur, f)?;
            range_removed = observed_in - cur.observed_count();
        }
        let mut wiper = (0, None);
        if c.wiper_variable.as_deref() == Some(s.name()) {
            let period = c
                .wiper_period
                .ok_or_else(|| Error::Config("clean.wiper_period is required with clean.wiper_variable".into()))?;
            let phase = match &c.wiper_phase {
                None => WiperPhase::Auto,
                Some(PhaseSetting::Fixed(p)) => WiperPhase::Fixed(*p),
                Some(PhaseSetting::Named(n)) if n == "auto" => WiperPhase::Auto,
                Some(PhaseSetting::Named(n)) => {
                    return Err(Error::Config(format!(
                        "clean.wiper_phase must be an integer or \"auto\", got `{n}`"
                    )));
                }
            };
            let r = remove_wiper_anomalies(&cur, period, phase)?;
            wiper = (r.removed, Some(r.phase));
            cur = r.series;
        }
        if let Some(step) = c.aggregate {
            cur = aggregate(&cur, step)?;
        }
        let observed_aggregated = cur.observed_count();
        let mut interpolated = 0;
        if c.interpolate.iter().any(|v| v == s.name()) {
            let f = linear_interpolate(&cur)?;
            interpolated = f.imputed_count();
            cur = f.series;
        }
        report.push(vec![
            s.name().to_string(),
            observed_in.to_string(),
            range_removed.to_string(),
            wiper.0.to_string(),
            na_or(wiper.1),
            observed_aggregated.to_string(),
            interpolated.to_string(),
            cur.observed_count().to_string(),
        ]);
        cleaned.push(cur);
    }
    let out = ctx.path("cleaned.csv");
    write_series(&out, &cleaned.iter().collect::<Vec<_>>())?;
    let rep = ctx.path("clean_report.csv");
    write_table(
        &rep,
        &[
            "variable",
            "observed_in",
            "range_flag_removed",
            "wiper_removed",
            "wiper_phase",
            "observed_after_aggregation",
            "interpolated",
            "observed_out",
        ],
        report,
    )?;
    Ok(vec![out, rep])
}

/// Response, upstream and downstream variables named in the config, in that order.
fn role_variables(cfg: &RunConfig) -> Vec<String> {
    let r = &cfg.roles;
    let mut names: Vec<String> = Vec::new();
    for v in [&r.response, &r.upstream, &r.downstream].into_iter().flatten() {
        if !names.contains(v) {
            names.push(v.clone());
        }
    }
    names
}

pub fn normalize(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let input = cfg.input()?;
    let data = load(cfg)?;
    check_covariates(cfg, &data)?;
    let vars = role_variables(cfg);
    if vars.is_empty() {
        return Err(Error::Config(
            "normalize needs roles.response, roles.upstream or roles.downstream".into(),
        ));
    }
    let terms = cfg.terms();
    let mut written = Vec::new();
    let mut header = vec!["timestamp".to_string()];
    let mut cols: Vec<Vec<String>> = Vec::new();
    for v in &vars {
        let y = column(&data, v, &input)?;
        let model = ConditionalNormalizer::fit(y, &data, &terms)?;
        let norm = model.normalize(y, &data)?;
        let path = ctx.path(&format!("model_{v}.json"));
        std::fs::write(&path, model.to_json() + "\n").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
        header.extend([v.clone(), format!("{v}_star"), format!("{v}_mean"), format!("{v}_var")]);
        cols.push(
            (0..y.len())
                .map(|i| y.get(i).map_or_else(|| "NA".to_string(), format_value))
                .collect(),
        );
        cols.push(norm.y_star.raw_values().iter().map(|x| format_value(*x)).collect());
        cols.push(norm.mean_hat.iter().map(|x| format_value(*x)).collect());
        cols.push(norm.var_hat.iter().map(|x| format_value(*x)).collect());
    }
    let rows = (0..data.len()).map(|i| {
        let mut r = vec![format_timestamp(data.timestamp(i))];
        r.extend(cols.iter().map(|c| c[i].clone()));
        r
    });
    let path = ctx.path("normalized.csv");
    write_table(&path, &header.iter().map(String::as_str).collect::<Vec<_>>(), rows)?;
    written.insert(0, path);
    Ok(written)
}

pub fn impute(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let input = cfg.input()?;
    let data = load(cfg)?;
    check_covariates(cfg, &data)?;
    let name = cfg.role("response", &cfg.roles.response)?;
    let y = column(&data, &name, &input)?;
    let opts = ImputeOptions {
        max_order: cfg.model.max_ar_order,
        nonnegative: cfg.clean.nonnegative,
    };
    let imp = impute_series(y, &data, &cfg.terms(), &opts)?;
    let rows = (0..y.len()).map(|i| {
        let known = !imp.series.is_missing(i);
        let bound = |b: &[f64]| if known { format_value(b[i]) } else { "NA".to_string() };
        vec![
            format_timestamp(y.timestamp(i)),
            imp.series.get(i).map_or_else(|| "NA".to_string(), format_value),
            u8::from(imp.imputed[i]).to_string(),
            bound(&imp.lo95),
            bound(&imp.hi95),
        ]
    });
    let path = ctx.path("imputed.csv");
    write_table(&path, &["timestamp", "value", "imputed_flag", "lo95", "hi95"], rows)?;
    let model = ctx.path("impute_model.json");
    json_file(
        &model,
        &serde_json::json!({
            "normalizer": imp.normalizer,
            "ar": imp.ar,
            "imputed": imp.imputed_count(),
            "negatives_masked": imp.negatives_masked,
        }),
    )?;
    Ok(vec![path, model])
}

struct CcfRun {
    data: CovariateSet,
    x_star: TimeSeries,
    y_star: TimeSeries,
    terms: Vec<Term>,
    models: Vec<LagOutcome>,
    estimate: LagTimeEstimate,
}

fn run_ccf(cfg: &RunConfig) -> Result<CcfRun> {
    let input = cfg.input()?;
    let data = load(cfg)?;
    check_covariates(cfg, &data)?;
    let xname = cfg.role("upstream", &cfg.roles.upstream)?;
    let yname = cfg.role("downstream", &cfg.roles.downstream)?;
    let terms = cfg.terms();
    let star = |name: &str| -> Result<TimeSeries> {
        let s = column(&data, name, &input)?;
        Ok(ConditionalNormalizer::fit(s, &data, &terms)?
            .normalize(s, &data)?
            .y_star)
    };
    let x_star = star(&xname)?;
    let y_star = star(&yname)?;
    let models = conditional_ccf(&x_star, &y_star, &data, cfg.corr.max_lag, &terms)?;
    for m in &models {
        if let LagOutcome::Skipped { lag, reason } = m {
            log::warn!("lag {lag} skipped: {reason}");
        }
    }
    let rows = evaluation_rows(&models, &data);
    let estimate = estimate_lag_time(&models, &data, &rows)?;
    Ok(CcfRun {
        data,
        x_star,
        y_star,
        terms,
        models,
        estimate,
    })
}

fn lag_header(first: &[&str], max_lag: usize) -> Vec<String> {
    let mut h: Vec<String> = first.iter().map(|s| s.to_string()).collect();
    h.extend((1..=max_lag).map(|k| format!("c_{k}")));
    h
}

/// Per-row correlations of all lags `1..=max_lag`, NA where a lag was skipped.
fn lag_cells(lags: &[usize], curves: &[Vec<f64>], i: usize, max_lag: usize) -> Vec<String> {
    (1..=max_lag)
        .map(|k| match lags.iter().position(|l| *l == k) {
            Some(j) => format_value(curves[j][i]),
            None => "NA".to_string(),
        })
        .collect()
}

/// Evenly spaced points over the observed range of a covariate.
fn covariate_grid(values: &[f64], points: usize) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn write_tables<S: AsRef<str>>(path: &Path, header: &[S], rows: Vec<Vec<String>>) -> Result<()> {
    write_table(path, &header.iter().map(AsRef::as_ref).collect::<Vec<_>>(), rows)
}

pub fn ccf(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let run = run_ccf(cfg)?;
    let k = cfg.corr.max_lag;
    let est = &run.estimate;

    let matrix = ctx.path("ccf_matrix.csv");
    let rows = (0..est.len())
        .map(|i| {
            let mut r = vec![format_timestamp(run.data.timestamp(est.rows[i]))];
            r.extend(lag_cells(&est.lags, &est.curves, i, k));
            r
        })
        .collect();
    write_tables(&matrix, &lag_header(&["timestamp"], k), rows)?;

    let smooths = ctx.path("ccf_smooths.csv");
    let mut rows = Vec::new();
    for m in run.models.iter().filter_map(LagOutcome::fitted) {
        for t in &run.terms {
            let values: Vec<f64> = est
                .rows
                .iter()
                .map(|r| run.data.column(&t.covariate).expect("checked").raw_values()[*r])
                .collect();
            let grid = covariate_grid(&values, cfg.corr.profile_points);
            let (fx, se) = m.model.term_effect(&t.covariate, &grid)?;
            for ((v, f), s) in grid.iter().zip(&fx).zip(&se) {
                rows.push(vec![
                    m.lag.to_string(),
                    t.covariate.clone(),
                    format_value(*v),
                    format_value(*f),
                    format_value(*s),
                ]);
            }
        }
    }
    write_tables(&smooths, &["lag", "covariate", "value", "effect", "se"], rows)?;

    let lags = ctx.path("ccf_lags.csv");
    let rows = run
        .models
        .iter()
        .map(|m| match m {
            LagOutcome::Fitted(f) => vec![
                f.lag.to_string(),
                "fitted".into(),
                f.n_used.to_string(),
                format_value(f.model.edf),
                format_value(f.model.intercept),
                f.residual_ar.order.to_string(),
                String::new(),
            ],
            LagOutcome::Skipped { lag, reason } => vec![
                lag.to_string(),
                "skipped".into(),
                "0".into(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                reason.clone(),
            ],
        })
        .collect();
    write_tables(
        &lags,
        &[
            "lag",
            "status",
            "n_used",
            "edf",
            "intercept",
            "residual_ar_order",
            "message",
        ],
        rows,
    )?;
    Ok(vec![matrix, smooths, lags])
}

fn level_label(alpha: f64) -> String {
    format!("{}", ((1.0 - alpha) * 100.0).round() as i64)
}

pub fn lagtime(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let run = run_ccf(cfg)?;
    let k = cfg.corr.max_lag;
    let opts = BootstrapOptions {
        replicates: cfg.corr.replicates,
        alphas: cfg.corr.alphas.clone(),
        seed: ctx.seed.unwrap_or(cfg.corr.seed),
        burn_in: cfg.corr.burn_in,
    };
    let boot = sieve_bootstrap_ci(&run.models, &run.data, &run.estimate.rows, &opts)?;
    let est = run.estimate.clone().with_bounds(&boot);
    let eval = evaluate_lag_time(&run.x_star, &run.y_star, &run.data, &est, &run.models)?;

    let main = ctx.path("lagtime.csv");
    let mut header = vec!["timestamp".to_string(), "d_t".into(), "c_max".into()];
    for b in &est.bounds {
        let l = level_label(b.alpha);
        header.push(format!("lo{l}"));
        header.push(format!("hi{l}"));
    }
    let rows = (0..est.len())
        .map(|i| {
            let mut r = vec![
                format_timestamp(run.data.timestamp(est.rows[i])),
                est.lag_time[i].to_string(),
                format_value(est.c_max[i]),
            ];
            for b in &est.bounds {
                r.push(b.lower[i].to_string());
                r.push(b.upper[i].to_string());
            }
            r
        })
        .collect();
    write_tables(&main, &header, rows)?;

    let table = ctx.path("lagtime_eval.csv");
    let rows = (0..est.len())
        .map(|i| {
            let mut r = vec![
                format_timestamp(run.data.timestamp(est.rows[i])),
                est.lag_time[i].to_string(),
                format_value(eval.lead_fit[i]),
            ];
            r.extend(lag_cells(&est.lags, &est.curves, i, k));
            r
        })
        .collect();
    write_tables(&table, &lag_header(&["timestamp", "d_t", "lead_fit"], k), rows)?;

    let summary = ctx.path("lagtime_summary.csv");
    let metrics: Vec<(&str, String)> = vec![
        ("rows", est.len().to_string()),
        ("lags_fitted", est.lags.len().to_string()),
        ("evaluation_fraction", format_value(eval.fraction)),
        ("evaluation_fraction_inclusive", format_value(eval.fraction_inclusive)),
        ("lead_rows", eval.n_used.to_string()),
        ("replicates", opts.replicates.to_string()),
        ("replicates_completed", boot.completed.to_string()),
        ("replicates_dropped", boot.dropped.to_string()),
        ("seed", opts.seed.to_string()),
    ];
    write_tables(
        &summary,
        &["metric", "value"],
        metrics.into_iter().map(|(m, v)| vec![m.to_string(), v]).collect(),
    )?;
    let mut written = vec![main, table, summary];

    if ctx.profile_median {
        let profile = ctx.path("lagtime_profile.csv");
        write_tables(
            &profile,
            &lag_header(&["covariate", "value", "d_t"], k),
            median_profile(cfg, &run)?,
        )?;
        written.push(profile);
    }
    Ok(written)
}

/// Lag curves along each covariate with the others held at their medians.
fn median_profile(cfg: &RunConfig, run: &CcfRun) -> Result<Vec<Vec<String>>> {
    let names: Vec<&str> = run.terms.iter().map(|t| t.covariate.as_str()).collect();
    let mut frame = Frame::with_rows(run.estimate.len());
    for n in &names {
        let col = run.data.column(n).expect("checked").raw_values();
        frame.push(*n, run.estimate.rows.iter().map(|r| col[*r]).collect());
    }
    let medians = frame.medians();
    let k = cfg.corr.max_lag;
    let mut rows = Vec::new();
    for n in &names {
        let grid = covariate_grid(frame.column(n).expect("pushed"), cfg.corr.profile_points);
        let mut f = Frame::with_rows(grid.len());
        for m in &names {
            let v = if m == n {
                grid.clone()
            } else {
                vec![medians.column(m).expect("pushed")[0]; grid.len()]
            };
            f.push(*m, v);
        }
        let curves = run
            .models
            .iter()
            .filter_map(LagOutcome::fitted)
            .map(|m| m.correlation(&f))
            .collect::<Result<Vec<_>>>()?;
        let lags: Vec<usize> = run
            .models
            .iter()
            .filter_map(LagOutcome::fitted)
            .map(|m| m.lag)
            .collect();
        let d = argmax_lags(&lags, &curves);
        for (i, v) in grid.iter().enumerate() {
            let mut r = vec![n.to_string(), format_value(*v), na_or(d[i])];
            r.extend(lag_cells(&lags, &curves, i, k));
            rows.push(r);
        }
    }
    Ok(rows)
}

pub fn synth(cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let mut spec = cfg
        .synth
        .clone()
        .ok_or_else(|| Error::Config("synth needs a [synth] section".into()))?;
    if let Some(s) = ctx.seed {
        spec.seed = s;
    }
    let d = simulate(&spec)?;
    let data = ctx.path("synth.csv");
    let z = d.z.column("z").expect("synthetic covariate");
    write_series(&data, &[&d.x, &d.y, z])?;
    let truth = ctx.path("truth.csv");
    let t = &d.truth;
    let rows = (0..d.y.len())
        .map(|i| {
            vec![
                format_timestamp(d.y.timestamp(i)),
                format_value(t.z[i]),
                format_value(t.mean[i]),
                format_value(t.variance[i]),
                format_value(t.noise[i]),
                na_or(t.lag.as_ref().map(|l| l[i])),
                format_value(t.y_complete[i]),
            ]
        })
        .collect();
    write_tables(
        &truth,
        &["timestamp", "z", "mean", "variance", "noise", "lag", "y_complete"],
        rows,
    )?;
    Ok(vec![data, truth])
}
