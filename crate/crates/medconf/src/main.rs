//! `medconf`: calibrate and apply conformal median and quantile intervals,
//! and run the Monte-Carlo experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 a failed
//! trial or a violated coverage floor.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use medconf::artifact::ModelArtifact;
use medconf::config::{Format, Method, Options, RunConfig};
use medconf::evaluation::{
    overcoverage_experiment, predictive_coverage_audit, quantile_extension_audit, run_study, sharpness_experiment,
    Check, MetricsTable,
};
use medconf::io::{self as dataio, format_value, interval_cells, DataError};
use medconf_core::rng::{derive_seed, stream};
use medconf_core::{unconditional_median_interval, unconditional_median_ranks, ConformalModel, Rank, SplitIndices};

#[derive(Parser)]
#[command(
    name = "medconf",
    version,
    about = "Conformal intervals for conditional medians and quantiles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a score on a CSV and freeze the calibrated model.
    Calibrate(Options),
    /// Intervals from a frozen model.
    Predict(Options),
    /// Metric table (AC, SDAC, MCC, AW, SDAW) over repeated trials.
    Evaluate(Options),
    /// Median engine with the zero regressor on P^δ.
    Sharpness(Options),
    /// Median engine with the randomized regressor and n2 = ⌊2/α⌋ + 1.
    Overcoverage(Options),
    /// Predictive and one-sided coverage floors.
    Audit(Options),
    /// Draws from a synthetic distribution.
    Sample(Options),
    /// Distribution-free interval for an unconditional median.
    Median1d(Options),
}

enum Failure {
    Config(String),
    Data(String),
    Threshold(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Threshold(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Threshold(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, opts) = match &cli.command {
        Command::Calibrate(o) => ("calibrate", o),
        Command::Predict(o) => ("predict", o),
        Command::Evaluate(o) => ("evaluate", o),
        Command::Sharpness(o) => ("sharpness", o),
        Command::Overcoverage(o) => ("overcoverage", o),
        Command::Audit(o) => ("audit", o),
        Command::Sample(o) => ("sample", o),
        Command::Median1d(o) => ("median1d", o),
    };
    match run(name, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(name: &str, opts: &Options) -> Outcome {
    let base = match &opts.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            Some(RunConfig::parse_saved(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let cfg = RunConfig::resolve(name, opts, base);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(config_err)?;
    pool.install(|| match name {
        "calibrate" => calibrate(&cfg, opts),
        "predict" => predict(&cfg, opts),
        "evaluate" => evaluate(&cfg, opts),
        "sharpness" => sharpness(&cfg, opts),
        "overcoverage" => overcoverage(&cfg, opts),
        "audit" => audit(&cfg, opts),
        "sample" => sample(&cfg, opts),
        "median1d" => median1d(&cfg, opts),
        _ => unreachable!("clap only yields known subcommands"),
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| data_err(format!("{}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn input(opts: &Options) -> Result<File, Failure> {
    let path = opts.input.as_deref().ok_or_else(|| config_err("--input is required"))?;
    dataio::open(path).map_err(data_err)
}

fn calibrate(cfg: &RunConfig, opts: &Options) -> Outcome {
    let out_path = opts
        .out
        .as_deref()
        .ok_or_else(|| config_err("--out is required for the model artifact"))?;
    let named = dataio::read_dataset(input(opts)?, opts.response.as_deref()).map_err(data_err)?;
    let data = &named.data;
    let n = data.len();
    let n1 = cfg.n1_for(n);
    if n1 >= n {
        return Err(config_err(format!("n1 = {n1} leaves no calibration points out of {n}")));
    }
    let [kind] = cfg.score[..] else {
        return Err(config_err("calibrate takes exactly one --score"));
    };
    let score = cfg.score_config(kind);
    let split = SplitIndices::random(n, n1, &mut stream(cfg.seed, &[0])).map_err(config_err)?;
    let fit_seed = derive_seed(cfg.seed, &[1]);
    let model = match cfg.method[..] {
        [Method::Median] => ConformalModel::fit_median_interval(data, &split, &score, cfg.alpha, fit_seed),
        [Method::Quantile] => {
            ConformalModel::fit_quantile_interval(data, &split, &score, cfg.spec().map_err(config_err)?, fit_seed)
        }
        _ => return Err(config_err("calibrate takes --method median or --method quantile")),
    }
    .map_err(|e| match e {
        medconf_core::Error::InvalidParameter { .. } | medconf_core::Error::NoCenter(_) => config_err(e),
        _ => data_err(e),
    })?;
    let (lo, hi) = model.thresholds();
    if !(lo.is_finite() && hi.is_finite()) {
        eprintln!(
            "warning: n2 = {} calibration points are too few for alpha = {}; intervals will be unbounded",
            model.n2(),
            cfg.alpha
        );
    }
    ModelArtifact::new(model.clone(), named.features, named.response)
        .save(out_path)
        .map_err(data_err)?;
    println!(
        "n1 = {}, n2 = {}, thresholds = ({}, {})",
        model.n1(),
        model.n2(),
        format_value(lo),
        format_value(hi)
    );
    Ok(())
}

fn predict(cfg: &RunConfig, opts: &Options) -> Outcome {
    let path = opts.model.as_deref().ok_or_else(|| config_err("--model is required"))?;
    let artifact = ModelArtifact::load(path).map_err(data_err)?;
    let model = &artifact.model;
    let mut queries = opts
        .x
        .iter()
        .map(|s| dataio::parse_point(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data_err)?;
    if opts.input.is_some() {
        let q = dataio::read_queries(input(opts)?, model.dim(), opts.response.as_deref()).map_err(data_err)?;
        queries.extend(q);
    }
    let intervals = queries
        .iter()
        .map(|x| model.predict(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data_err)?;
    let mut out = output(opts.out.as_deref())?;
    let write = |out: &mut dyn Write| -> io::Result<()> {
        if intervals.is_empty() {
            return Ok(());
        }
        match (cfg.format, opts.input.is_some()) {
            (Format::Json, _) => {
                for iv in &intervals {
                    let [lo, hi] = interval_cells(iv);
                    writeln!(out, "{}", serde_json::json!({ "lo": lo, "hi": hi }))?;
                }
            }
            (Format::Csv, true) => {
                writeln!(out, "lo,hi")?;
                for iv in &intervals {
                    let [lo, hi] = interval_cells(iv);
                    writeln!(out, "{lo},{hi}")?;
                }
            }
            (Format::Csv, false) => {
                for iv in &intervals {
                    writeln!(out, "{iv}")?;
                }
            }
        }
        out.flush()
    };
    write(&mut out).map_err(data_err)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn write_table(cfg: &RunConfig, table: &MetricsTable, out: &mut dyn Write) -> io::Result<()> {
    match cfg.format {
        Format::Json => {
            let rows: Vec<_> = table
                .cells
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "dist": c.dist.name(),
                        "score": c.procedure.score_name(),
                        "method": c.procedure.method(),
                        "backend": c.procedure.backend_name(),
                        "q": c.procedure.target(),
                        "alpha": c.procedure.alpha(),
                        "metrics": c.metrics,
                    })
                })
                .collect();
            writeln!(out, "{}", serde_json::json!({ "config": cfg, "cells": rows }))?;
        }
        Format::Csv => {
            writeln!(out, "{}", cfg.echo())?;
            writeln!(
                out,
                "dist,score,method,backend,q,alpha,trials,failed,ac,sdac,mcc,aw,sdaw,infinite,empty,predictive,lower_rate,upper_rate"
            )?;
            for c in &table.cells {
                let m = &c.metrics;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    c.dist.name(),
                    c.procedure.score_name(),
                    c.procedure.method(),
                    c.procedure.backend_name(),
                    c.procedure.target(),
                    c.procedure.alpha(),
                    m.trials,
                    m.failed,
                    format_value(m.ac),
                    opt(m.sdac),
                    opt(m.mcc),
                    opt(m.aw),
                    opt(m.sdaw),
                    m.infinite,
                    m.empty,
                    format_value(m.predictive),
                    format_value(m.lower_rate),
                    format_value(m.upper_rate),
                )?;
            }
        }
    }
    out.flush()
}

fn write_reports(table: &MetricsTable, path: &Path) -> Outcome {
    let mut out = output(Some(path))?;
    for c in &table.cells {
        for r in &c.reports {
            let line = serde_json::json!({
                "dist": c.dist.name(),
                "score": c.procedure.score_name(),
                "method": c.procedure.method(),
                "report": r,
            });
            writeln!(out, "{line}").map_err(data_err)?;
        }
    }
    out.flush().map_err(data_err)
}

fn study_table(cfg: &RunConfig, opts: &Options) -> Result<MetricsTable, Failure> {
    let study = cfg.study().map_err(config_err)?;
    let table = run_study(&study).map_err(config_err)?;
    if let Some(path) = &opts.reports {
        write_reports(&table, path)?;
    }
    Ok(table)
}

fn failed_trials(table: &MetricsTable) -> Outcome {
    match table.failed_trials() {
        0 => Ok(()),
        k => {
            let why = table
                .cells
                .iter()
                .flat_map(|c| &c.reports)
                .find_map(|r| r.failed.clone())
                .unwrap_or_default();
            Err(Failure::Threshold(format!("{k} trial(s) failed; first: {why}")))
        }
    }
}

fn evaluate(cfg: &RunConfig, opts: &Options) -> Outcome {
    let table = study_table(cfg, opts)?;
    write_table(cfg, &table, &mut *output(opts.out.as_deref())?).map_err(data_err)?;
    failed_trials(&table)
}

fn sharpness(cfg: &RunConfig, opts: &Options) -> Outcome {
    let est =
        sharpness_experiment(cfg.delta, cfg.n, cfg.alpha, cfg.trials, cfg.test_n, cfg.seed).map_err(config_err)?;
    let mut out = output(opts.out.as_deref())?;
    let write = |out: &mut dyn Write| -> io::Result<()> {
        match cfg.format {
            Format::Json => writeln!(out, "{}", serde_json::json!({ "config": cfg, "result": est }))?,
            Format::Csv => {
                writeln!(out, "{}", cfg.echo())?;
                writeln!(out, "delta,n,alpha,trials,test_n,coverage,se")?;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    cfg.delta, cfg.n, cfg.alpha, cfg.trials, cfg.test_n, est.coverage, est.se
                )?;
            }
        }
        out.flush()
    };
    write(&mut out).map_err(data_err)
}

fn overcoverage(cfg: &RunConfig, opts: &Options) -> Outcome {
    let mut rows = Vec::new();
    for &id in &cfg.dist {
        let dist = cfg.distribution(id).map_err(config_err)?;
        let est = overcoverage_experiment(dist, cfg.c, cfg.alpha, cfg.n, cfg.trials, cfg.test_n, cfg.seed)
            .map_err(config_err)?;
        rows.push((dist, est));
    }
    let mut out = output(opts.out.as_deref())?;
    let write = |out: &mut dyn Write| -> io::Result<()> {
        match cfg.format {
            Format::Json => {
                let rows: Vec<_> = rows
                    .iter()
                    .map(|(d, e)| serde_json::json!({ "dist": d.name(), "result": e }))
                    .collect();
                writeln!(out, "{}", serde_json::json!({ "config": cfg, "rows": rows }))?;
            }
            Format::Csv => {
                writeln!(out, "{}", cfg.echo())?;
                writeln!(out, "dist,c,alpha,n1,n2,coverage,se,infinite")?;
                for (d, e) in &rows {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        d.name(),
                        cfg.c,
                        cfg.alpha,
                        e.n1,
                        e.n2,
                        e.coverage,
                        e.se,
                        e.infinite
                    )?;
                }
            }
        }
        out.flush()
    };
    write(&mut out).map_err(data_err)?;
    match rows.iter().map(|(_, e)| e.infinite).sum::<usize>() {
        0 => Ok(()),
        k => Err(Failure::Threshold(format!("{k} unbounded interval(s)"))),
    }
}

fn audit(cfg: &RunConfig, opts: &Options) -> Outcome {
    let table = study_table(cfg, opts)?;
    let checks: Vec<Check> = predictive_coverage_audit(&table)
        .into_iter()
        .chain(quantile_extension_audit(&table))
        .collect();
    let mut out = output(opts.out.as_deref())?;
    let write = |out: &mut dyn Write| -> io::Result<()> {
        match cfg.format {
            Format::Json => writeln!(out, "{}", serde_json::json!({ "config": cfg, "checks": checks }))?,
            Format::Csv => {
                writeln!(out, "{}", cfg.echo())?;
                writeln!(out, "dist,procedure,check,value,floor,se,pass")?;
                for c in &checks {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        c.dist,
                        c.procedure,
                        c.name,
                        c.value,
                        c.floor,
                        c.se,
                        c.passed()
                    )?;
                }
            }
        }
        out.flush()
    };
    write(&mut out).map_err(data_err)?;
    failed_trials(&table)?;
    match checks.iter().filter(|c| !c.passed()).count() {
        0 => Ok(()),
        k => Err(Failure::Threshold(format!("{k} coverage floor(s) violated"))),
    }
}

fn sample(cfg: &RunConfig, opts: &Options) -> Outcome {
    let [id] = cfg.dist[..] else {
        return Err(config_err("sample takes exactly one --dist"));
    };
    let dist = cfg.distribution(id).map_err(config_err)?;
    let data = dist.sample_dataset(cfg.n, &mut stream(cfg.seed, &[0]));
    let mut out = output(opts.out.as_deref())?;
    writeln!(out, "{}", cfg.echo()).map_err(data_err)?;
    dataio::write_dataset(&mut out, &data, &dataio::feature_names(dist.dim())).map_err(data_err)?;
    out.flush().map_err(data_err)
}

fn median1d(cfg: &RunConfig, opts: &Options) -> Outcome {
    let y: Vec<f64> = match (&opts.y, &opts.input) {
        (Some(y), _) => y.clone(),
        (None, Some(_)) => {
            let table = dataio::read_table(input(opts)?).map_err(data_err)?;
            let col = match opts.response.as_deref() {
                Some(name) => table
                    .header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| data_err(DataError::MissingColumn(name.into())))?,
                None => table.header.len() - 1,
            };
            table.rows.iter().map(|r| r[col]).collect()
        }
        (None, None) => return Err(config_err("median1d needs --y or --input")),
    };
    let iv = unconditional_median_interval(&y, cfg.alpha).map_err(|e| match e {
        medconf_core::Error::InvalidParameter { .. } => config_err(e),
        _ => data_err(e),
    })?;
    let (lo, hi) = unconditional_median_ranks(y.len(), cfg.alpha).map_err(config_err)?;
    let rank = |r: Rank| match r {
        Rank::At(k) => k.to_string(),
        Rank::NegInf => "-inf".into(),
        Rank::PosInf => "inf".into(),
    };
    let mut out = output(opts.out.as_deref())?;
    let line = match cfg.format {
        Format::Json => {
            let [l, h] = interval_cells(&iv);
            serde_json::json!({ "lo": l, "hi": h, "ranks": [rank(lo), rank(hi)] }).to_string()
        }
        Format::Csv => iv.to_string(),
    };
    writeln!(out, "{line}").and_then(|_| out.flush()).map_err(data_err)
}
