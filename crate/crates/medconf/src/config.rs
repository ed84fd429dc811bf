//! Run configuration shared by every subcommand.
//!
//! Flags are parsed into [`Options`] (everything optional), optionally layered
//! over a saved [`RunConfig`], and resolved into a complete `RunConfig` that
//! is echoed at the top of every result file.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use medconf_core::{BackendConfig, ForestConfig, QuantileSpec, ScoreConfig, ScoreKind, SyntheticDistribution};
use serde::{Deserialize, Serialize};

use crate::evaluation::{Procedure, Study};

/// Prefix of the header line carrying the effective configuration.
pub const ECHO_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistId {
    P1,
    P2,
    P3,
    Pdelta,
    PdeltaQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendId {
    Forest,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Symmetric median engine.
    Median,
    /// Two-sided quantile engine.
    Quantile,
    /// Uncalibrated quantile-forest band.
    Qrf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

fn parse_score(s: &str) -> Result<ScoreKind, String> {
    s.parse().map_err(|e| format!("unknown score `{s}`: {e}"))
}

/// Command-line flags; unset flags fall back to `--config`, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Saved configuration (JSON, or a result file with a config header).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Distributions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dist: Option<Vec<DistId>>,
    /// Scores, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_score)]
    pub score: Option<Vec<ScoreKind>>,
    /// Interval procedures, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<Method>>,
    #[arg(long)]
    pub backend: Option<BackendId>,
    /// Trees per forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Minimum forest leaf size.
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Neighbours for the k-NN backend.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Training split size; defaults to half the data.
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    /// Stabilizer added to the spread estimate of the normalized score.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Scale of the randomized regressor.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub test_n: Option<usize>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub format: Option<Format>,
    /// n = 5000, 500 trials, 5000 test points unless given explicitly.
    #[arg(long)]
    pub full_scale: bool,
    /// Input CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Response column of the input CSV; defaults to the last column.
    #[arg(long)]
    pub response: Option<String>,
    /// Model artifact to read.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Query point, comma separated; repeatable.
    #[arg(long = "x", allow_hyphen_values = true)]
    pub x: Vec<String>,
    /// Sample values for `median1d`, comma separated.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    pub y: Option<Vec<f64>>,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Raw per-trial reports as JSON lines.
    #[arg(long)]
    pub reports: Option<PathBuf>,
}

/// The effective configuration of a run, with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub dist: Vec<DistId>,
    pub score: Vec<ScoreKind>,
    pub method: Vec<Method>,
    pub backend: BackendId,
    pub trees: usize,
    pub min_leaf: usize,
    pub k: usize,
    pub n: usize,
    pub n1: Option<usize>,
    pub alpha: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub gamma: f64,
    pub c: f64,
    pub delta: f64,
    pub trials: usize,
    pub test_n: usize,
    pub probes: usize,
    pub seed: u64,
    pub format: Format,
}

impl RunConfig {
    pub fn defaults(command: &str, full_scale: bool) -> Self {
        let (n, trials, test_n) = if full_scale { (5000, 500, 5000) } else { (2000, 50, 500) };
        let forest = ForestConfig::default();
        RunConfig {
            command: command.to_string(),
            dist: vec![DistId::P2],
            score: vec![ScoreKind::Residual],
            method: vec![Method::Quantile],
            backend: BackendId::Forest,
            trees: forest.trees,
            min_leaf: forest.min_leaf,
            k: 50,
            n,
            n1: None,
            alpha: 0.1,
            q: 0.5,
            r: 0.05,
            s: 0.05,
            gamma: 0.01,
            c: 100.0,
            delta: 0.001,
            trials,
            test_n,
            probes: 100,
            seed: 0,
            format: Format::Csv,
        }
    }

    /// Layers `opts` over `base` (or the defaults). When `alpha` changes and
    /// `r`, `s` are not given, they follow as `alpha / 2`.
    pub fn resolve(command: &str, opts: &Options, base: Option<RunConfig>) -> Self {
        let mut c = base.unwrap_or_else(|| Self::defaults(command, opts.full_scale));
        c.command = command.to_string();
        if opts.full_scale {
            let p = Self::defaults(command, true);
            c.n = p.n;
            c.trials = p.trials;
            c.test_n = p.test_n;
        }
        macro_rules! take {
            ($($f:ident),*) => {$(if let Some(v) = opts.$f.clone() { c.$f = v; })*};
        }
        take!(
            dist, score, method, backend, trees, min_leaf, k, n, alpha, q, gamma, c, delta, trials, test_n, probes,
            seed, format
        );
        if opts.n1.is_some() {
            c.n1 = opts.n1;
        }
        if opts.alpha.is_some() {
            c.r = c.alpha / 2.0;
            c.s = c.alpha / 2.0;
        }
        take!(r, s);
        c
    }

    /// Reads a saved configuration: plain JSON, or the first line of a
    /// result file written with [`RunConfig::echo`].
    pub fn parse_saved(text: &str) -> Result<Self, serde_json::Error> {
        match text.lines().next().and_then(|l| l.strip_prefix(ECHO_PREFIX)) {
            Some(json) => serde_json::from_str(json),
            None => serde_json::from_str(text),
        }
    }

    /// The header line for result files.
    pub fn echo(&self) -> String {
        format!(
            "{ECHO_PREFIX}{}",
            serde_json::to_string(self).expect("config serializes")
        )
    }

    pub fn n1_for(&self, n: usize) -> usize {
        self.n1.unwrap_or(n / 2)
    }

    pub fn distribution(&self, id: DistId) -> Result<SyntheticDistribution, medconf_core::Error> {
        match id {
            DistId::P1 => Ok(SyntheticDistribution::Dist1),
            DistId::P2 => Ok(SyntheticDistribution::Dist2),
            DistId::P3 => Ok(SyntheticDistribution::Dist3),
            DistId::Pdelta => SyntheticDistribution::p_delta(self.delta),
            DistId::PdeltaQ => SyntheticDistribution::p_delta_quantile(self.q, self.delta),
        }
    }

    pub fn distributions(&self) -> Result<Vec<SyntheticDistribution>, medconf_core::Error> {
        self.dist.iter().map(|&d| self.distribution(d)).collect()
    }

    pub fn backend_config(&self) -> BackendConfig {
        match self.backend {
            BackendId::Forest => BackendConfig::Forest(ForestConfig {
                trees: self.trees,
                min_leaf: self.min_leaf,
                ..ForestConfig::default()
            }),
            BackendId::Knn => BackendConfig::Knn { k: self.k },
        }
    }

    pub fn spec(&self) -> Result<QuantileSpec, medconf_core::Error> {
        QuantileSpec::new(self.q, self.alpha, self.r, self.s)
    }

    /// The score to fit for `kind`. The quantile score's levels are
    /// `2rq` and `1 - 2s(1 - q)`, which is `α/2`, `1 - α/2` at the median.
    pub fn score_config(&self, kind: ScoreKind) -> ScoreConfig {
        let backend = self.backend_config();
        match kind {
            ScoreKind::Residual => ScoreConfig::Residual { backend },
            ScoreKind::Normalized => ScoreConfig::Normalized {
                backend,
                gamma: self.gamma,
            },
            ScoreKind::Cqr => ScoreConfig::Cqr {
                backend,
                lo_level: 2.0 * self.r * self.q,
                hi_level: 1.0 - 2.0 * self.s * (1.0 - self.q),
            },
            ScoreKind::Cdf => ScoreConfig::Cdf { backend },
            ScoreKind::Log => ScoreConfig::Log { backend },
            ScoreKind::Zero => ScoreConfig::Zero,
            ScoreKind::Randomized => ScoreConfig::Randomized { c: self.c },
        }
    }

    pub fn procedures(&self) -> Result<Vec<Procedure>, medconf_core::Error> {
        let mut out = Vec::new();
        for method in &self.method {
            match method {
                Method::Qrf => out.push(Procedure::Qrf {
                    backend: self.backend_config(),
                    alpha: self.alpha,
                }),
                Method::Median => out.extend(self.score.iter().map(|&k| Procedure::Median {
                    score: self.score_config(k),
                    alpha: self.alpha,
                })),
                Method::Quantile => {
                    let spec = self.spec()?;
                    out.extend(self.score.iter().map(|&k| Procedure::Quantile {
                        score: self.score_config(k),
                        spec,
                    }));
                }
            }
        }
        Ok(out)
    }

    pub fn study(&self) -> Result<Study, medconf_core::Error> {
        Ok(Study {
            dists: self.distributions()?,
            procedures: self.procedures()?,
            n: self.n,
            n1: self.n1_for(self.n),
            trials: self.trials,
            test_n: self.test_n,
            probe_count: self.probes,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_saved_config() {
        let base = RunConfig::defaults("evaluate", false);
        let opts = Options {
            alpha: Some(0.2),
            n: Some(300),
            ..Options::default()
        };
        let c = RunConfig::resolve("evaluate", &opts, Some(base));
        assert_eq!((c.n, c.alpha, c.r, c.s), (300, 0.2, 0.1, 0.1));
        assert_eq!(c.trials, 50);
    }

    #[test]
    fn full_scale_defaults() {
        let opts = Options {
            full_scale: true,
            trials: Some(7),
            ..Options::default()
        };
        let c = RunConfig::resolve("evaluate", &opts, None);
        assert_eq!((c.n, c.trials, c.test_n), (5000, 7, 5000));
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::defaults("sample", false);
        assert_eq!(RunConfig::parse_saved(&format!("{}\nx0,y\n", c.echo())).unwrap(), c);
        assert_eq!(RunConfig::parse_saved(&serde_json::to_string(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn cqr_levels_at_the_median() {
        let c = RunConfig::defaults("evaluate", false);
        let ScoreConfig::Cqr { lo_level, hi_level, .. } = c.score_config(ScoreKind::Cqr) else {
            unreachable!()
        };
        assert_eq!((lo_level, hi_level), (0.05, 0.95));
    }
}
