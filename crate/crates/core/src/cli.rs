//! Command-line workflows: simulate, estimate, lmtest, mc, forecast.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimation::{
    coefficient_inference, estimate_mar, estimate_mstar, estimate_mtar, FitResult, GridPoint, PValueTable,
};
use crate::experiments::{run_monte_carlo, summarize_against};
use crate::io::{matrix_to_csv, read_json, read_series, write_atomic, write_json, write_mc, write_series};
use crate::linearity::{lm_test_score, lm_test_tr2, LmTestResult};
use crate::model::{check_stationarity, next_transition_value, one_step_forecast, simulate_path, ModelKind, ModelSpec};
use crate::series::{standardize_series, MatrixSeries};
use crate::tensor::RealMatrix;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "matreg", version, about = "Matrix autoregressions: MAR, MTAR and MSTAR")]
pub struct Cli {
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// More logging (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a series from the `[dgp]` table.
    Simulate(Common),
    /// Fit a model to a series.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Model to fit (`mar`, `mtar`, `mstar`).
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// LM linearity test, score and TR² forms.
    Lmtest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        series: Option<PathBuf>,
        /// Taylor order K.
        #[arg(long)]
        order: Option<usize>,
    },
    /// Monte Carlo study from the `[dgp]` and `[mc]` tables.
    Mc(Common),
    /// One-step conditional-mean forecast from a fit file.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        fit: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key.path=value`, applied after the config file; repeatable, last wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: $MATREG_OUT_DIR, then `out_dir`, then ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn load(&self, extra: Vec<String>) -> Result<(Config, PathBuf)> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        overrides.extend(extra);
        let cfg = Config::load(self.config.as_deref(), &overrides)?;
        let out = cfg.resolve_out_dir(self.out.as_deref());
        Ok((cfg, out))
    }
}

fn path_override(key: &str, p: &Option<PathBuf>) -> Option<String> {
    p.as_ref()
        .map(|p| format!("{key}={}", toml::Value::String(p.display().to_string())))
}

pub fn log_level(cli: &Cli) -> log::LevelFilter {
    match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (_, 0) => log::LevelFilter::Warn,
        (_, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let (cfg, out) = common.load(Vec::new())?;
            cmd_simulate(&cfg, &out)
        }
        Command::Estimate { common, model, series } => {
            let mut extra: Vec<String> = model.map(|m| format!("estimate.model={m}")).into_iter().collect();
            extra.extend(path_override("series", &series));
            let (cfg, out) = common.load(extra)?;
            cmd_estimate(&cfg, &out)
        }
        Command::Lmtest { common, series, order } => {
            let mut extra: Vec<String> = order.map(|k| format!("lmtest.order={k}")).into_iter().collect();
            extra.extend(path_override("series", &series));
            let (cfg, out) = common.load(extra)?;
            cmd_lmtest(&cfg, &out)
        }
        Command::Mc(common) => {
            let (cfg, out) = common.load(Vec::new())?;
            cmd_mc(&cfg, &out)
        }
        Command::Forecast { common, series, fit } => {
            let mut extra: Vec<String> = path_override("series", &series).into_iter().collect();
            extra.extend(path_override("fit", &fit));
            let (cfg, out) = common.load(extra)?;
            cmd_forecast(&cfg, &out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub t_len: usize,
    pub burn_in: Option<usize>,
    pub stationary: bool,
    pub radii: Vec<f64>,
    pub model: ModelSpec,
}

pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<()> {
    let dgp = cfg
        .dgp
        .as_ref()
        .ok_or_else(|| Error::Config("simulate needs a [dgp] table".into()))?;
    let model = dgp.model()?;
    let report = check_stationarity(&model)?;
    let series = simulate_path(&model, dgp.t_len, &dgp.sim_options(cfg.seed)?)?;
    write_series(&series, &out.join("series.csv"))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        t_len: dgp.t_len,
        burn_in: dgp.burn_in,
        stationary: report.stationary,
        radii: report.radii,
        model,
    };
    write_json(&manifest, &out.join("manifest.json"))?;
    println!("wrote {} frames to {}", series.len(), out.join("series.csv").display());
    Ok(())
}

fn require_series(cfg: &Config) -> Result<MatrixSeries> {
    let path = cfg
        .series
        .as_ref()
        .ok_or_else(|| Error::Usage("no input series (set `series` or pass --series)".into()))?;
    read_series(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub standardized: bool,
    pub threshold: Option<f64>,
    pub slope: Option<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub fit: FitResult,
}

pub fn estimate_document(cfg: &Config, series: &MatrixSeries) -> Result<FitDocument> {
    let est = &cfg.estimate;
    let standardized = est.standardize();
    let data = if standardized {
        standardize_series(series)?
    } else {
        series.clone()
    };
    let mut fit = match est.model {
        ModelKind::Mar => estimate_mar(&data, &est.ils)?,
        ModelKind::Mtar => estimate_mtar(&data, &est.threshold_grid(), &est.ils)?,
        ModelKind::Mstar => estimate_mstar(&data, &est.slope_grid(), &est.ils)?,
    };
    fit.model.source = est.source;
    if est.inference && fit.pvalues.is_none() {
        fit.pvalues = Some(coefficient_inference(&fit, &data)?);
    } else if !est.inference {
        fit.pvalues = None;
    }
    Ok(FitDocument {
        schema_version: SCHEMA_VERSION,
        kind: est.model,
        standardized,
        threshold: fit.threshold(),
        slope: fit.slope(),
        row_labels: series.row_labels().to_vec(),
        col_labels: series.col_labels().to_vec(),
        fit,
    })
}

fn write_matrix(out: &mut String, name: &str, mat: &RealMatrix, p: Option<&Vec<Vec<Option<f64>>>>) {
    let _ = writeln!(out, "{name}:");
    for i in 0..mat.nrows() {
        let mut line = String::from(" ");
        for j in 0..mat.ncols() {
            let _ = write!(line, " {:>12.6}", mat[(i, j)]);
            if let Some(p) = p {
                match p[i][j] {
                    Some(v) => {
                        let _ = write!(line, " (p={v:.4})");
                    }
                    None => line.push_str(" (p=  NA  )"),
                }
            }
        }
        let _ = writeln!(out, "{line}");
    }
}

/// Human-readable summary, a pure function of the fit document.
pub fn render_report(doc: &FitDocument) -> String {
    let fit = &doc.fit;
    let (m, n) = fit.model.dims();
    let mut out = String::new();
    let _ = writeln!(out, "model: {} ({m}x{n}), {} transitions", doc.kind, fit.n_obs);
    let _ = writeln!(out, "standardized: {}", doc.standardized);
    let _ = writeln!(out, "ssq: {:.10e}", fit.ssq);
    if let Some(c) = doc.threshold {
        let _ = writeln!(out, "threshold c: {c:.10}");
    }
    if let Some(g) = doc.slope {
        let _ = writeln!(out, "slope gamma: {g:.10}");
    }
    let _ = writeln!(
        out,
        "converged: {} after {} sweeps; parameters: {}",
        fit.converged, fit.sweeps_used, fit.n_params
    );
    if let Some(f) = fit.flatness {
        let _ = writeln!(out, "profile flatness: {f:.6e}");
    }
    let pv: Option<&PValueTable> = fit.pvalues.as_ref();
    write_matrix(&mut out, "A", &fit.model.regime1.left, pv.map(|p| &p.a));
    write_matrix(&mut out, "B", &fit.model.regime1.right, pv.map(|p| &p.b));
    if let Some(r2) = &fit.model.regime2 {
        write_matrix(&mut out, "C", &r2.left, pv.and_then(|p| p.c.as_ref()));
        write_matrix(&mut out, "D", &r2.right, pv.and_then(|p| p.d.as_ref()));
    }
    out
}

#[derive(Debug, Serialize)]
struct ProfileDump<'a> {
    schema_version: u32,
    error: String,
    grid_profile: &'a [GridPoint],
}

pub fn cmd_estimate(cfg: &Config, out: &Path) -> Result<()> {
    cfg.check_model_grids()?;
    let series = require_series(cfg)?;
    let doc = match estimate_document(cfg, &series) {
        Ok(doc) => doc,
        Err(err) => {
            if let Error::NoAdmissibleCandidate { profile, .. } = &err {
                let dump = ProfileDump {
                    schema_version: SCHEMA_VERSION,
                    error: err.to_string(),
                    grid_profile: profile,
                };
                write_json(&dump, &out.join("grid_profile.json"))?;
            }
            return Err(err);
        }
    };
    write_json(&doc, &out.join("fit.json"))?;
    let report = render_report(&doc);
    write_atomic(&out.join("report.txt"), report.as_bytes())?;
    print!("{report}");
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmTestDocument {
    pub schema_version: u32,
    pub taylor_order: usize,
    pub transitions: usize,
    pub dims: [usize; 2],
    pub score: LmTestResult,
    pub tr2: LmTestResult,
}

pub fn cmd_lmtest(cfg: &Config, out: &Path) -> Result<()> {
    let series = require_series(cfg)?;
    let k = cfg.lmtest.order;
    let score = lm_test_score(&series, k)?;
    let tr2 = lm_test_tr2(&series, k)?;
    let (m, n) = series.dims();
    let doc = LmTestDocument {
        schema_version: SCHEMA_VERSION,
        taylor_order: k,
        transitions: series.len() - 1,
        dims: [m, n],
        score,
        tr2,
    };
    write_json(&doc, &out.join("lmtest.json"))?;
    println!("LM linearity test, K = {k}, dof = {}", doc.score.dof);
    println!(
        "  score: statistic {:.6}, p-value {:.6}",
        doc.score.statistic, doc.score.p_value
    );
    println!(
        "  TR2:   statistic {:.6}, p-value {:.6}",
        doc.tr2.statistic, doc.tr2.p_value
    );
    println!("  rank conditions on X'X and Z_K'(I - P_X)Z_K satisfied");
    Ok(())
}

pub fn cmd_mc(cfg: &Config, out: &Path) -> Result<()> {
    let mc = cfg.mc_config()?;
    let rows = run_monte_carlo(&mc)?;
    write_mc(&rows, &out.join("mc_rows.csv"))?;
    let summary = summarize_against(&rows, &mc.dgp);
    write_json(&summary, &out.join("mc_summary.json"))?;
    for s in &summary.estimators {
        println!(
            "{:<7} rows {:>4}  converged {:.3}  median frob1 {}  median frob2 {}  mse(c) {}",
            s.estimator,
            s.rows,
            s.convergence_rate,
            s.frob_regime1
                .as_ref()
                .map_or("-".into(), |b| format!("{:.4e}", b.median)),
            s.frob_regime2
                .as_ref()
                .map_or("-".into(), |b| format!("{:.4e}", b.median)),
            s.mse_c.map_or("-".into(), |v| format!("{v:.4e}")),
        );
    }
    Ok(())
}

pub fn cmd_forecast(cfg: &Config, out: &Path) -> Result<()> {
    let fit_path = cfg
        .fit
        .as_ref()
        .ok_or_else(|| Error::Usage("no fit file (set `fit` or pass --fit)".into()))?;
    if !fit_path.exists() {
        return Err(Error::Usage(format!("fit file {} does not exist", fit_path.display())));
    }
    let doc: FitDocument = read_json(fit_path)?;
    let series = require_series(cfg)?;
    let data = if doc.standardized {
        log::warn!("fit was estimated on standardized data; the forecast is in standardized units");
        standardize_series(&series)?
    } else {
        series
    };
    let model = &doc.fit.model;
    let s_next = match (model.transition, cfg.forecast.s_next) {
        (None, _) => 0.0,
        (Some(_), Some(s)) => s,
        (Some(_), None) => next_transition_value(model.source, &data)?,
    };
    let f = one_step_forecast(model, &data, s_next)?;
    write_atomic(
        &out.join("forecast.csv"),
        &matrix_to_csv(&f, data.row_labels(), data.col_labels())?,
    )?;
    println!("one-step forecast (s_next = {s_next}):");
    for i in 0..f.nrows() {
        let row: Vec<String> = (0..f.ncols()).map(|j| format!("{:.10e}", f[(i, j)])).collect();
        println!("  {}", row.join("  "));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from([
            "matreg", "estimate", "--config", "a.toml", "--set", "seed=3", "--set", "x.y=z", "--model", "mtar", "-v",
        ])
        .unwrap();
        assert_eq!(log_level(&cli), log::LevelFilter::Info);
        match cli.command {
            Command::Estimate { common, model, .. } => {
                assert_eq!(common.overrides, vec!["seed=3", "x.y=z"]);
                assert_eq!(model.as_deref(), Some("mtar"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forecast_without_fit_is_usage_error() {
        let cfg = Config::default();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(cmd_forecast(&cfg, dir.path()), Err(Error::Usage(_))));
    }
}
