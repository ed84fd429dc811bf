//! Monte-Carlo harness: repeated split, fit, calibrate and evaluate trials on
//! synthetic laws whose conditional quantiles are known in closed form.
//!
//! Every trial draws from streams keyed by `(seed, role, distribution, trial)`,
//! so results do not depend on scheduling or on which other cells run in the
//! same study. Procedures evaluated together on one distribution share the
//! trial's data and its fitted backends.

use std::sync::Arc;

use medconf_core::conformal::{absolute_calibration_scores, calibration_scores};
use medconf_core::models::fit_mad;
use medconf_core::rng::{derive_seed, hash_bits, stream};
use medconf_core::{
    Backend, BackendConfig, Engine, Interval, LabeledDataset, Level, LocalScore, QrfBaseline, QuantileSpec,
    ScoreConfig, ScorePair, SplitIndices, SyntheticDistribution,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const DATA: u64 = 1;
const FIT: u64 = 2;
const TEST: u64 = 3;
const PROBE: u64 = 4;
const QRF_FIT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("split n1 = {n1} must lie in 1..{n}")]
    Split { n: usize, n1: usize },
    #[error("`{0}` must be at least 1")]
    Zero(&'static str),
    #[error(transparent)]
    Core(#[from] medconf_core::Error),
    #[error("trial failed: {0}")]
    Trial(String),
}

/// An interval-producing procedure evaluated by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    /// Symmetric median engine on `|f|`.
    Median { score: ScoreConfig, alpha: f64 },
    /// Two-sided quantile engine.
    Quantile { score: ScoreConfig, spec: QuantileSpec },
    /// Uncalibrated forest band fitted on all `n` points.
    Qrf { backend: BackendConfig, alpha: f64 },
}

impl Procedure {
    /// The level whose true conditional quantile the interval should cover.
    pub fn target(&self) -> f64 {
        match self {
            Procedure::Quantile { spec, .. } => spec.q(),
            _ => 0.5,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Procedure::Median { alpha, .. } | Procedure::Qrf { alpha, .. } => *alpha,
            Procedure::Quantile { spec, .. } => spec.alpha(),
        }
    }

    pub fn method(&self) -> &'static str {
        match self {
            Procedure::Median { .. } => "median",
            Procedure::Quantile { .. } => "quantile",
            Procedure::Qrf { .. } => "qrf",
        }
    }

    pub fn score_name(&self) -> &'static str {
        match self {
            Procedure::Median { score, .. } | Procedure::Quantile { score, .. } => score.kind().name(),
            Procedure::Qrf { .. } => "qrf",
        }
    }

    pub fn backend_name(&self) -> &'static str {
        match self {
            Procedure::Median { score, .. } | Procedure::Quantile { score, .. } => {
                backend_of(score).map_or("-", |b| b.name())
            }
            Procedure::Qrf { backend, .. } => backend.name(),
        }
    }

    fn score(&self) -> Option<&ScoreConfig> {
        match self {
            Procedure::Median { score, .. } | Procedure::Quantile { score, .. } => Some(score),
            Procedure::Qrf { .. } => None,
        }
    }
}

fn backend_of(score: &ScoreConfig) -> Option<&BackendConfig> {
    match score {
        ScoreConfig::Residual { backend }
        | ScoreConfig::Normalized { backend, .. }
        | ScoreConfig::Cqr { backend, .. }
        | ScoreConfig::Cdf { backend }
        | ScoreConfig::Log { backend } => Some(backend),
        ScoreConfig::Zero | ScoreConfig::Randomized { .. } => None,
    }
}

/// One (distribution, procedure) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub dist: SyntheticDistribution,
    pub procedure: Procedure,
    pub n: usize,
    pub n1: usize,
    pub trials: usize,
    pub test_n: usize,
    pub probe_count: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn n2(&self) -> usize {
        self.n - self.n1
    }
}

/// Several procedures on several distributions, sharing data per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub dists: Vec<SyntheticDistribution>,
    pub procedures: Vec<Procedure>,
    pub n: usize,
    pub n1: usize,
    pub trials: usize,
    pub test_n: usize,
    pub probe_count: usize,
    pub seed: u64,
}

impl Study {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n1 == 0 || self.n1 >= self.n {
            return Err(ConfigError::Split { n: self.n, n1: self.n1 });
        }
        if self.trials == 0 {
            return Err(ConfigError::Zero("trials"));
        }
        if self.test_n == 0 {
            return Err(ConfigError::Zero("test_n"));
        }
        for d in &self.dists {
            d.validate()?;
        }
        Ok(())
    }
}

impl From<&TrialConfig> for Study {
    fn from(cfg: &TrialConfig) -> Self {
        Study {
            dists: vec![cfg.dist],
            procedures: vec![cfg.procedure.clone()],
            n: cfg.n,
            n1: cfg.n1,
            trials: cfg.trials,
            test_n: cfg.test_n,
            probe_count: cfg.probe_count,
            seed: cfg.seed,
        }
    }
}

/// Outcome of one trial of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    /// Set when fitting or calibration failed; all rates are then zero.
    pub failed: Option<String>,
    /// Fraction of test points whose true target quantile lies in the interval.
    pub coverage: f64,
    /// Fraction of test points whose fresh response lies in the interval.
    pub predictive: f64,
    /// Fraction with `Y >= lower end`.
    pub lower_rate: f64,
    /// Fraction with `Y <= upper end`.
    pub upper_rate: f64,
    /// Mean width over bounded intervals; `None` when every interval was unbounded.
    pub mean_width: Option<f64>,
    pub infinite: usize,
    pub empty: usize,
    pub probe_hits: Vec<bool>,
}

impl TrialReport {
    fn failed(trial: usize, why: String) -> Self {
        TrialReport {
            trial,
            failed: Some(why),
            coverage: 0.0,
            predictive: 0.0,
            lower_rate: 0.0,
            upper_rate: 0.0,
            mean_width: None,
            infinite: 0,
            empty: 0,
            probe_hits: Vec::new(),
        }
    }
}

/// AC, SDAC, MCC, AW and SDAW plus the predictive side rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub trials: usize,
    pub failed: usize,
    pub test_n: usize,
    pub ac: f64,
    pub sdac: Option<f64>,
    pub mcc: Option<f64>,
    pub aw: Option<f64>,
    pub sdaw: Option<f64>,
    pub predictive: f64,
    pub lower_rate: f64,
    pub upper_rate: f64,
    pub infinite: usize,
    pub empty: usize,
}

impl CellMetrics {
    /// Aggregates raw reports. Failed trials are counted and otherwise ignored.
    pub fn from_reports(reports: &[TrialReport], test_n: usize) -> Self {
        let ok: Vec<&TrialReport> = reports.iter().filter(|r| r.failed.is_none()).collect();
        let coverage: Vec<f64> = ok.iter().map(|r| r.coverage).collect();
        let widths: Vec<f64> = ok.iter().filter_map(|r| r.mean_width).collect();
        let probes = ok.first().map_or(0, |r| r.probe_hits.len());
        let mcc = (probes > 0).then(|| {
            (0..probes)
                .map(|p| ok.iter().filter(|r| r.probe_hits[p]).count() as f64 / ok.len() as f64)
                .fold(f64::INFINITY, f64::min)
        });
        CellMetrics {
            trials: reports.len(),
            failed: reports.len() - ok.len(),
            test_n,
            ac: mean(&coverage).unwrap_or(f64::NAN),
            sdac: sample_sd(&coverage),
            mcc,
            aw: mean(&widths),
            sdaw: sample_sd(&widths),
            predictive: mean(&ok.iter().map(|r| r.predictive).collect::<Vec<_>>()).unwrap_or(f64::NAN),
            lower_rate: mean(&ok.iter().map(|r| r.lower_rate).collect::<Vec<_>>()).unwrap_or(f64::NAN),
            upper_rate: mean(&ok.iter().map(|r| r.upper_rate).collect::<Vec<_>>()).unwrap_or(f64::NAN),
            infinite: ok.iter().map(|r| r.infinite).sum(),
            empty: ok.iter().map(|r| r.empty).sum(),
        }
    }

    /// Test points behind each pooled rate.
    pub fn points(&self) -> usize {
        (self.trials - self.failed) * self.test_n
    }

    /// Binomial standard error of a pooled rate near `p`.
    pub fn se(&self, p: f64) -> f64 {
        binomial_se(p, self.points())
    }
}

pub fn binomial_se(p: f64, m: usize) -> f64 {
    (p * (1.0 - p) / m as f64).sqrt()
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Standard deviation with the `n - 1` divisor.
pub fn sample_sd(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v)?;
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dist: SyntheticDistribution,
    pub procedure: Procedure,
    pub metrics: CellMetrics,
    pub reports: Vec<TrialReport>,
}

/// One row per (distribution, procedure) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub cells: Vec<CellResult>,
}

impl MetricsTable {
    pub fn find(&self, dist: &str, score: &str, method: &str) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.dist.name() == dist && c.procedure.score_name() == score && c.procedure.method() == method)
    }

    pub fn failed_trials(&self) -> usize {
        self.cells.iter().map(|c| c.metrics.failed).sum()
    }
}

/// Stable key for a distribution and its parameters.
fn dist_key(d: &SyntheticDistribution) -> u64 {
    let parts = match *d {
        SyntheticDistribution::PDelta { delta } => [0.0, delta, 0.0],
        SyntheticDistribution::PDeltaQuantile { q, delta } => [1.0, delta, q],
        SyntheticDistribution::Dist1 => [2.0, 0.0, 0.0],
        SyntheticDistribution::Dist2 => [3.0, 0.0, 0.0],
        SyntheticDistribution::Dist3 => [4.0, 0.0, 0.0],
    };
    hash_bits(&parts)
}

/// Probe covariates for a distribution, fixed across trials.
pub fn probes(d: &SyntheticDistribution, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, &[PROBE, dist_key(d)]);
    (0..count).map(|_| d.sample_covariate(&mut rng)).collect()
}

pub fn run_trials(cfg: &TrialConfig) -> Result<CellResult, ConfigError> {
    let mut table = run_study(&Study::from(cfg))?;
    Ok(table.cells.remove(0))
}

/// Runs every cell of the study. Trials run in parallel on the current
/// rayon pool; the result is independent of the pool size.
pub fn run_study(study: &Study) -> Result<MetricsTable, ConfigError> {
    study.validate()?;
    let probe_sets: Vec<Vec<Vec<f64>>> = study
        .dists
        .iter()
        .map(|d| probes(d, study.probe_count, study.seed))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..study.dists.len())
        .flat_map(|d| (0..study.trials).map(move |t| (d, t)))
        .collect();
    let results: Vec<Vec<TrialReport>> = jobs
        .par_iter()
        .map(|&(d, t)| run_trial(study, &study.dists[d], &probe_sets[d], t))
        .collect();

    let mut cells = Vec::new();
    for (d, dist) in study.dists.iter().enumerate() {
        for (p, procedure) in study.procedures.iter().enumerate() {
            let reports: Vec<TrialReport> = (0..study.trials)
                .map(|t| results[d * study.trials + t][p].clone())
                .collect();
            cells.push(CellResult {
                dist: *dist,
                procedure: procedure.clone(),
                metrics: CellMetrics::from_reports(&reports, study.test_n),
                reports,
            });
        }
    }
    Ok(MetricsTable { cells })
}

/// Center and spread backends fitted once per trial and shared by scores.
struct Shared<'a> {
    train: &'a LabeledDataset,
    seed: u64,
    centers: Vec<(BackendConfig, Result<Arc<Backend>, String>)>,
    spreads: Vec<(BackendConfig, Result<Arc<Backend>, String>)>,
}

impl Shared<'_> {
    fn center(&mut self, b: &BackendConfig) -> Result<Arc<Backend>, String> {
        if let Some((_, fit)) = self.centers.iter().find(|(c, _)| c == b) {
            return fit.clone();
        }
        let fit = b
            .fit(self.train, derive_seed(self.seed, &[0]))
            .map(Arc::new)
            .map_err(|e| e.to_string());
        self.centers.push((b.clone(), fit.clone()));
        fit
    }

    fn spread(&mut self, b: &BackendConfig) -> Result<Arc<Backend>, String> {
        if let Some((_, fit)) = self.spreads.iter().find(|(c, _)| c == b) {
            return fit.clone();
        }
        let center = self.center(b)?;
        let fit = fit_mad(self.train, &*center, b, derive_seed(self.seed, &[1]))
            .map(Arc::new)
            .map_err(|e| e.to_string());
        self.spreads.push((b.clone(), fit.clone()));
        fit
    }

    /// Same result as `config.fit(train, seed)`, reusing earlier fits.
    fn fit(&mut self, config: &ScoreConfig) -> Result<ScorePair, String> {
        let err = |e: medconf_core::Error| e.to_string();
        match config {
            ScoreConfig::Residual { backend } => Ok(ScorePair::residual(self.center(backend)?)),
            ScoreConfig::Normalized { backend, gamma } => {
                ScorePair::normalized(self.center(backend)?, self.spread(backend)?, *gamma).map_err(err)
            }
            ScoreConfig::Cqr {
                backend,
                lo_level,
                hi_level,
            } => ScorePair::cqr(self.center(backend)?, *lo_level, *hi_level).map_err(err),
            ScoreConfig::Cdf { backend } => Ok(ScorePair::cdf(self.center(backend)?)),
            _ => config.fit(self.train, self.seed).map_err(err),
        }
    }
}

/// A fitted score frozen at every test point and probe.
struct Frozen {
    config: ScoreConfig,
    pair: ScorePair,
    locals: Vec<LocalScore>,
    sorted: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Default)]
struct Tally {
    covered: usize,
    predictive: usize,
    lower: usize,
    upper: usize,
    width_sum: f64,
    bounded: usize,
    infinite: usize,
    empty: usize,
}

impl Tally {
    fn add(&mut self, iv: &Interval, target: f64, y: f64) {
        self.covered += iv.contains(target) as usize;
        self.predictive += iv.contains(y) as usize;
        match iv.bounds() {
            Some((lo, hi)) => {
                self.lower += (y >= lo) as usize;
                self.upper += (y <= hi) as usize;
            }
            None => self.empty += 1,
        }
        if iv.is_bounded() {
            self.width_sum += iv.width();
            self.bounded += 1;
        } else {
            self.infinite += 1;
        }
    }

    fn report(self, trial: usize, m: usize, probe_hits: Vec<bool>) -> TrialReport {
        let rate = |k: usize| k as f64 / m as f64;
        TrialReport {
            trial,
            failed: None,
            coverage: rate(self.covered),
            predictive: rate(self.predictive),
            lower_rate: rate(self.lower),
            upper_rate: rate(self.upper),
            mean_width: (self.bounded > 0).then(|| self.width_sum / self.bounded as f64),
            infinite: self.infinite,
            empty: self.empty,
            probe_hits,
        }
    }
}

fn run_trial(study: &Study, dist: &SyntheticDistribution, probes: &[Vec<f64>], trial: usize) -> Vec<TrialReport> {
    let key = dist_key(dist);
    let t = trial as u64;
    let mut rng = stream(study.seed, &[DATA, key, t]);
    let data = dist.sample_dataset(study.n, &mut rng);
    let split = match SplitIndices::random(study.n, study.n1, &mut rng) {
        Ok(s) => s,
        Err(e) => return vec![TrialReport::failed(trial, e.to_string()); study.procedures.len()],
    };
    let train = data.subset(split.train());
    let calib = data.subset(split.calibration());
    let fit_seed = derive_seed(study.seed, &[FIT, key, t]);

    let mut test_rng = stream(study.seed, &[TEST, key, t]);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(study.test_n + probes.len());
    let mut ys = Vec::with_capacity(study.test_n);
    for _ in 0..study.test_n {
        let x = dist.sample_covariate(&mut test_rng);
        ys.push(dist.sample_response(&x, &mut test_rng));
        points.push(x);
    }
    points.extend(probes.iter().cloned());

    let mut shared = Shared {
        train: &train,
        seed: fit_seed,
        centers: Vec::new(),
        spreads: Vec::new(),
    };
    let mut frozen: Vec<(ScoreConfig, Result<Frozen, String>)> = Vec::new();
    let mut qrf: Vec<(BackendConfig, Result<Arc<Backend>, String>)> = Vec::new();

    let mut out = Vec::with_capacity(study.procedures.len());
    for procedure in &study.procedures {
        let q = procedure.target();
        let targets: Result<Vec<f64>, String> = points
            .iter()
            .map(|x| dist.true_quantile(x, q).map_err(|e| e.to_string()))
            .collect();
        let intervals = targets.and_then(|targets| {
            let intervals = match procedure {
                Procedure::Qrf { backend, alpha } => {
                    let fit = match qrf.iter().find(|(b, _)| b == backend) {
                        Some((_, fit)) => fit.clone(),
                        None => {
                            let fit = backend
                                .fit(&data, derive_seed(fit_seed, &[QRF_FIT]))
                                .map(Arc::new)
                                .map_err(|e| e.to_string());
                            qrf.push((backend.clone(), fit.clone()));
                            fit
                        }
                    };
                    let model = QrfBaseline::from_backend(fit?, *alpha);
                    points
                        .iter()
                        .map(|x| model.predict(x).map_err(|e| e.to_string()))
                        .collect::<Result<Vec<_>, _>>()?
                }
                Procedure::Median { score, .. } | Procedure::Quantile { score, .. } => {
                    let at = match frozen.iter().position(|(c, _)| c == score) {
                        Some(i) => i,
                        None => {
                            let f = freeze(&mut shared, score, &points);
                            frozen.push((score.clone(), f));
                            frozen.len() - 1
                        }
                    };
                    let f = frozen[at].1.as_mut().map_err(|e| e.clone())?;
                    let engine = engine_for(procedure, f, &calib).map_err(|e| remap(e, &split))?;
                    f.locals.iter().map(|l| engine.invert(l)).collect()
                }
            };
            Ok((intervals, targets))
        });
        out.push(match intervals {
            Ok((intervals, targets)) => {
                let mut tally = Tally::default();
                for j in 0..study.test_n {
                    tally.add(&intervals[j], targets[j], ys[j]);
                }
                let hits = (study.test_n..points.len())
                    .map(|j| intervals[j].contains(targets[j]))
                    .collect();
                tally.report(trial, study.test_n, hits)
            }
            Err(why) => TrialReport::failed(trial, why),
        });
    }
    out
}

fn freeze(shared: &mut Shared, config: &ScoreConfig, points: &[Vec<f64>]) -> Result<Frozen, String> {
    let pair = shared.fit(config)?;
    let locals = points
        .iter()
        .map(|x| pair.at(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(Frozen {
        config: config.clone(),
        pair,
        locals,
        sorted: None,
    })
}

fn engine_for(procedure: &Procedure, f: &mut Frozen, calib: &LabeledDataset) -> Result<Engine, medconf_core::Error> {
    debug_assert!(procedure.score() == Some(&f.config));
    match procedure {
        Procedure::Median { alpha, .. } => Engine::median(&absolute_calibration_scores(&f.pair, calib)?, *alpha),
        Procedure::Quantile { spec, .. } => {
            if f.sorted.is_none() {
                f.sorted = Some(calibration_scores(&f.pair, calib)?);
            }
            let (lo, hi) = f.sorted.as_ref().expect("just filled");
            Engine::quantile(lo, hi, *spec)
        }
        Procedure::Qrf { .. } => unreachable!("the forest band has no engine"),
    }
}

fn remap(e: medconf_core::Error, split: &SplitIndices) -> String {
    use medconf_core::Error;
    let row = |r: usize| split.calibration().get(r).copied().unwrap_or(r);
    match e {
        Error::ZeroSpread { row: r } => Error::ZeroSpread { row: row(r) },
        Error::NonPositiveResponse { row: r, value } => Error::NonPositiveResponse { row: row(r), value },
        other => other,
    }
    .to_string()
}

/// Per-probe coverage frequency across the successful trials of a cell.
pub fn conditional_probe_coverage(cell: &CellResult) -> Vec<f64> {
    let ok: Vec<&TrialReport> = cell.reports.iter().filter(|r| r.failed.is_none()).collect();
    let probes = ok.first().map_or(0, |r| r.probe_hits.len());
    (0..probes)
        .map(|p| ok.iter().filter(|r| r.probe_hits[p]).count() as f64 / ok.len() as f64)
        .collect()
}

/// A pooled Monte-Carlo rate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub coverage: f64,
    pub se: f64,
    pub points: usize,
    pub infinite: usize,
    pub n1: usize,
    pub n2: usize,
}

impl CoverageEstimate {
    fn from_cell(cell: &CellResult, n1: usize, n2: usize) -> Self {
        let m = &cell.metrics;
        CoverageEstimate {
            coverage: m.ac,
            se: m.se(m.ac),
            points: m.points(),
            infinite: m.infinite,
            n1,
            n2,
        }
    }
}

/// The median engine with the zero regressor on `P^δ`, split in half.
pub fn sharpness_experiment(
    delta: f64,
    n: usize,
    alpha: f64,
    trials: usize,
    test_n: usize,
    seed: u64,
) -> Result<CoverageEstimate, ConfigError> {
    let cfg = TrialConfig {
        dist: SyntheticDistribution::p_delta(delta)?,
        procedure: Procedure::Median {
            score: ScoreConfig::Zero,
            alpha,
        },
        n,
        n1: n / 2,
        trials,
        test_n,
        probe_count: 0,
        seed,
    };
    let cell = run_trials(&cfg)?;
    Ok(CoverageEstimate::from_cell(&cell, cfg.n1, cfg.n2()))
}

/// `⌊2/α⌋ + 1`, the calibration size at which the randomized regressor
/// gives a finite median-engine threshold.
pub fn overcoverage_n2(alpha: f64) -> usize {
    match Level::from(alpha) {
        Level::Ratio { num, den } if num > 0 => (2 * den / num) as usize + 1,
        _ => (2.0 / alpha).floor() as usize + 1,
    }
}

/// The median engine with the randomized regressor and `n2 = ⌊2/α⌋ + 1`.
pub fn overcoverage_experiment(
    dist: SyntheticDistribution,
    c: f64,
    alpha: f64,
    n: usize,
    trials: usize,
    test_n: usize,
    seed: u64,
) -> Result<CoverageEstimate, ConfigError> {
    let n2 = overcoverage_n2(alpha);
    if n2 >= n {
        return Err(ConfigError::Split { n, n1: 0 });
    }
    let cfg = TrialConfig {
        dist,
        procedure: Procedure::Median {
            score: ScoreConfig::Randomized { c },
            alpha,
        },
        n,
        n1: n - n2,
        trials,
        test_n,
        probe_count: 0,
        seed,
    };
    let cell = run_trials(&cfg)?;
    if let Some(why) = cell.reports.iter().find_map(|r| r.failed.clone()) {
        return Err(ConfigError::Trial(why));
    }
    Ok(CoverageEstimate::from_cell(&cell, cfg.n1, n2))
}

/// A rate compared against a guaranteed floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub dist: String,
    pub procedure: String,
    pub name: String,
    pub value: f64,
    pub floor: f64,
    pub se: f64,
}

impl Check {
    /// Within three standard errors of the floor.
    pub fn passed(&self) -> bool {
        self.value >= self.floor - 3.0 * self.se
    }
}

fn check(cell: &CellResult, name: &str, value: f64, floor: f64) -> Check {
    Check {
        dist: cell.dist.name().to_string(),
        procedure: format!("{}/{}", cell.procedure.method(), cell.procedure.score_name()),
        name: name.to_string(),
        value,
        floor,
        se: cell.metrics.se(floor),
    }
}

/// Predictive-coverage floors: `1 - α/2` for the median engine and `1 - α`
/// for the quantile engine, next to the target coverage `1 - α`.
pub fn predictive_coverage_audit(table: &MetricsTable) -> Vec<Check> {
    let mut out = Vec::new();
    for cell in &table.cells {
        let m = &cell.metrics;
        match &cell.procedure {
            Procedure::Median { alpha, .. } => {
                out.push(check(cell, "median", m.ac, 1.0 - alpha));
                out.push(check(cell, "predictive", m.predictive, 1.0 - alpha / 2.0));
            }
            Procedure::Quantile { spec, .. } => {
                out.push(check(cell, "quantile", m.ac, 1.0 - spec.alpha()));
                out.push(check(cell, "predictive", m.predictive, 1.0 - spec.alpha()));
            }
            Procedure::Qrf { .. } => {}
        }
    }
    out
}

/// One-sided rates of the quantile engine: `P{Y >= L} >= 1 - rq` and
/// `P{Y <= U} >= 1 - s(1 - q)`, plus the quantile coverage they imply.
pub fn quantile_extension_audit(table: &MetricsTable) -> Vec<Check> {
    let mut out = Vec::new();
    for cell in &table.cells {
        if let Procedure::Quantile { spec, .. } = &cell.procedure {
            let m = &cell.metrics;
            let q = spec.q();
            out.push(check(cell, "lower", m.lower_rate, 1.0 - spec.r() * q));
            out.push(check(cell, "upper", m.upper_rate, 1.0 - spec.s() * (1.0 - q)));
            out.push(check(cell, "quantile", m.ac, 1.0 - spec.alpha()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Study {
        Study {
            dists: vec![SyntheticDistribution::Dist2],
            procedures: vec![
                Procedure::Median {
                    score: ScoreConfig::Residual {
                        backend: BackendConfig::Knn { k: 20 },
                    },
                    alpha: 0.1,
                },
                Procedure::Quantile {
                    score: ScoreConfig::Cdf {
                        backend: BackendConfig::Knn { k: 20 },
                    },
                    spec: QuantileSpec::symmetric(0.5, 0.1).unwrap(),
                },
            ],
            n: 300,
            n1: 150,
            trials: 4,
            test_n: 50,
            probe_count: 10,
            seed: 9,
        }
    }

    #[test]
    fn sample_sd_uses_n_minus_one() {
        assert_eq!(sample_sd(&[1.0, 3.0]), Some(2f64.sqrt()));
        assert_eq!(sample_sd(&[1.0]), None);
    }

    #[test]
    fn overcoverage_split_rule() {
        assert_eq!(overcoverage_n2(0.1), 21);
        assert_eq!(overcoverage_n2(0.05), 41);
        assert_eq!(overcoverage_n2(0.3), 7);
    }

    #[test]
    fn invalid_studies_are_rejected() {
        let mut s = small();
        s.n1 = s.n;
        assert!(matches!(s.validate(), Err(ConfigError::Split { .. })));
        let mut s = small();
        s.trials = 0;
        assert_eq!(s.validate(), Err(ConfigError::Zero("trials")));
    }

    #[test]
    fn shared_fits_match_direct_fits() {
        let d = SyntheticDistribution::Dist1;
        let train = d.sample_dataset(200, &mut stream(1, &[]));
        let mut shared = Shared {
            train: &train,
            seed: 5,
            centers: Vec::new(),
            spreads: Vec::new(),
        };
        let backend = BackendConfig::Forest(medconf_core::ForestConfig {
            trees: 5,
            ..Default::default()
        });
        for config in [
            ScoreConfig::Cdf {
                backend: backend.clone(),
            },
            ScoreConfig::Normalized {
                backend: backend.clone(),
                gamma: 0.1,
            },
            ScoreConfig::Residual { backend },
            ScoreConfig::Randomized { c: 2.0 },
        ] {
            assert_eq!(shared.fit(&config).unwrap(), config.fit(&train, 5).unwrap());
        }
        assert_eq!(shared.centers.len(), 1);
    }

    #[test]
    fn cells_do_not_depend_on_their_neighbours() {
        let study = small();
        let both = run_study(&study).unwrap();
        for (i, p) in study.procedures.iter().enumerate() {
            let alone = run_trials(&TrialConfig {
                dist: study.dists[0],
                procedure: p.clone(),
                n: study.n,
                n1: study.n1,
                trials: study.trials,
                test_n: study.test_n,
                probe_count: study.probe_count,
                seed: study.seed,
            })
            .unwrap();
            assert_eq!(alone, both.cells[i]);
        }
    }

    #[test]
    fn failures_are_reported_per_cell() {
        let mut study = small();
        study.dists = vec![SyntheticDistribution::Dist1];
        study.procedures.push(Procedure::Median {
            score: ScoreConfig::Log {
                backend: BackendConfig::Knn { k: 5 },
            },
            alpha: 0.1,
        });
        let table = run_study(&study).unwrap();
        assert_eq!(table.cells[0].metrics.failed, 0);
        assert_eq!(table.cells[2].metrics.failed, study.trials);
        assert!(table.cells[2].reports[0]
            .failed
            .as_ref()
            .unwrap()
            .contains("not strictly positive"));
        assert_eq!(table.failed_trials(), study.trials);
    }
}
