//! Synthetic distributions with closed-form conditional quantiles.
//!
//! | name       | x                                   | y given x                                          |
//! |------------|-------------------------------------|----------------------------------------------------|
//! | `pdelta`   | `U[-0.5, 0.5]`                      | `x·B`, `B ~ Bern(0.5 + δ)`                          |
//! | `pdelta-q` | `U[-0.5, 0.5]`                      | `x·B`, `B ~ Bern(q + 1[x >= 0](1 - 2q) + δ)`        |
//! | `p1`       | equicorrelated `N(0, Σ)` in 10 dims | `(x1 + x2)^2 - x3 + σ(x)ε`, `σ = 0.1 + 0.25‖x‖²`    |
//! | `p2`       | `U[-4π, 4π]`                        | `U^{1/4}·(1 + |x| sin² x)`                          |
//! | `p3`       | `U[-1, 1]`                          | `B·f(x)`, `B ~ Bern(0.5 + 2·10⁻⁴)`, sawtooth `f`    |
//!
//! `Σ = 0.75·I + 0.25·𝟙𝟙ᵀ` is sampled through its one-factor form
//! `x = 0.5·z0·𝟙 + √0.75·z`.
//!
//! The two-atom laws (`y ∈ {0, v}`) use the generalized inverse
//! `Q(q) = inf{y : F(y) >= q}` as their conditional quantile.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::check_dim;
use crate::special::normal_quantile;

pub const DIST1_DIM: usize = 10;
pub const DIST3_DELTA: f64 = 1e-4;
pub const DIST3_GAMMA: f64 = 0.04;
pub const DIST3_M: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SyntheticDistribution {
    PDelta { delta: f64 },
    PDeltaQuantile { q: f64, delta: f64 },
    Dist1,
    Dist2,
    Dist3,
}

/// `Q(level)` for the law with mass `p` on `v` and `1 - p` on 0.
pub fn two_atom_quantile(v: f64, p: f64, level: f64) -> f64 {
    if v < 0.0 {
        if level <= p {
            v
        } else {
            0.0
        }
    } else if v > 0.0 {
        if level <= 1.0 - p {
            0.0
        } else {
            v
        }
    } else {
        0.0
    }
}

/// The sawtooth `γ{Mx} - γ/2 - (-1)^⌊Mx⌋(1 - γ/2)` with `{r} = r - ⌊r⌋`.
pub fn dist3_f(x: f64) -> f64 {
    let r = DIST3_M * x;
    let fl = libm::floor(r);
    let sign = if (fl as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    DIST3_GAMMA * (r - fl) - DIST3_GAMMA / 2.0 - sign * (1.0 - DIST3_GAMMA / 2.0)
}

/// `1 + |x| sin² x`.
pub fn dist2_f(x: f64) -> f64 {
    let s = libm::sin(x);
    1.0 + libm::fabs(x) * s * s
}

/// Conditional mean of the first distribution, `(x1 + x2)^2 - x3`.
pub fn dist1_center(x: &[f64]) -> f64 {
    (x[0] + x[1]) * (x[0] + x[1]) - x[2]
}

/// `0.1 + 0.25‖x‖²`.
pub fn dist1_sigma(x: &[f64]) -> f64 {
    0.1 + 0.25 * x.iter().map(|v| v * v).sum::<f64>()
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

impl SyntheticDistribution {
    pub fn p_delta(delta: f64) -> Result<Self> {
        let d = SyntheticDistribution::PDelta { delta };
        d.validate()?;
        Ok(d)
    }

    pub fn p_delta_quantile(q: f64, delta: f64) -> Result<Self> {
        let d = SyntheticDistribution::PDeltaQuantile { q, delta };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SyntheticDistribution::PDelta { delta } => {
                if delta > 0.0 && delta < 0.5 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter {
                        name: "delta",
                        value: delta,
                        expected: "(0, 0.5)",
                    })
                }
            }
            SyntheticDistribution::PDeltaQuantile { q, delta } => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::InvalidParameter {
                        name: "q",
                        value: q,
                        expected: "(0, 1)",
                    });
                }
                for rate in [q + delta, 1.0 - q + delta] {
                    if !(rate > 0.0 && rate < 1.0) {
                        return Err(Error::InvalidParameter {
                            name: "delta",
                            value: delta,
                            expected: "a value keeping q + delta and 1 - q + delta in (0, 1)",
                        });
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SyntheticDistribution::PDelta { .. } => "pdelta",
            SyntheticDistribution::PDeltaQuantile { .. } => "pdelta-q",
            SyntheticDistribution::Dist1 => "p1",
            SyntheticDistribution::Dist2 => "p2",
            SyntheticDistribution::Dist3 => "p3",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SyntheticDistribution::Dist1 => DIST1_DIM,
            _ => 1,
        }
    }

    /// Probability of the nonzero atom at `x` for the two-atom laws.
    fn success_rate(&self, x: f64) -> Option<f64> {
        match *self {
            SyntheticDistribution::PDelta { delta } => Some(0.5 + delta),
            SyntheticDistribution::PDeltaQuantile { q, delta } => {
                Some(if x >= 0.0 { 1.0 - q + delta } else { q + delta })
            }
            SyntheticDistribution::Dist3 => Some(0.5 + 2.0 * DIST3_DELTA),
            _ => None,
        }
    }

    /// Appends one covariate draw to `out`.
    pub fn sample_covariate_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            SyntheticDistribution::PDelta { .. } | SyntheticDistribution::PDeltaQuantile { .. } => {
                out.push(rng.random::<f64>() - 0.5)
            }
            SyntheticDistribution::Dist1 => {
                let z0: f64 = StandardNormal.sample(rng);
                let scale = libm::sqrt(0.75);
                for _ in 0..DIST1_DIM {
                    let z: f64 = StandardNormal.sample(rng);
                    out.push(0.5 * z0 + scale * z);
                }
            }
            SyntheticDistribution::Dist2 => out.push(rng.random_range(-4.0 * PI..4.0 * PI)),
            SyntheticDistribution::Dist3 => out.push(rng.random_range(-1.0..1.0)),
        }
    }

    pub fn sample_covariate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        self.sample_covariate_into(rng, &mut x);
        x
    }

    /// One response draw at covariate `x`.
    pub fn sample_response<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        match self {
            SyntheticDistribution::PDelta { .. } | SyntheticDistribution::PDeltaQuantile { .. } => {
                let p = self.success_rate(x[0]).unwrap();
                if bernoulli(rng, p) {
                    x[0]
                } else {
                    0.0
                }
            }
            SyntheticDistribution::Dist1 => {
                let eps: f64 = StandardNormal.sample(rng);
                dist1_center(x) + dist1_sigma(x) * eps
            }
            SyntheticDistribution::Dist2 => {
                let u = 1.0 - rng.random::<f64>();
                libm::pow(u, 0.25) * dist2_f(x[0])
            }
            SyntheticDistribution::Dist3 => {
                let p = self.success_rate(x[0]).unwrap();
                if bernoulli(rng, p) {
                    dist3_f(x[0])
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let x = self.sample_covariate(rng);
        let y = self.sample_response(&x, rng);
        (x, y)
    }

    /// `n` i.i.d. draws.
    pub fn sample_dataset<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> LabeledDataset {
        let dim = self.dim();
        let mut xs = Vec::with_capacity(n * dim);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let start = xs.len();
            self.sample_covariate_into(rng, &mut xs);
            ys.push(self.sample_response(&xs[start..], rng));
        }
        LabeledDataset::new(xs, ys, dim).expect("samplers produce finite values")
    }

    /// Exact conditional `level`-quantile of `Y` given `X = x`.
    pub fn true_quantile(&self, x: &[f64], level: f64) -> Result<f64> {
        check_dim(self.dim(), x)?;
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::InvalidParameter {
                name: "q",
                value: level,
                expected: "[0, 1]",
            });
        }
        Ok(match self {
            SyntheticDistribution::PDelta { .. } | SyntheticDistribution::PDeltaQuantile { .. } => {
                two_atom_quantile(x[0], self.success_rate(x[0]).unwrap(), level)
            }
            SyntheticDistribution::Dist1 => dist1_center(x) + dist1_sigma(x) * normal_quantile(level),
            SyntheticDistribution::Dist2 => libm::pow(level, 0.25) * dist2_f(x[0]),
            SyntheticDistribution::Dist3 => two_atom_quantile(dist3_f(x[0]), self.success_rate(x[0]).unwrap(), level),
        })
    }

    pub fn true_median(&self, x: &[f64]) -> Result<f64> {
        self.true_quantile(x, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn two_atom_generalized_inverse() {
        // brute force: smallest atom whose cumulative probability reaches the level
        let brute = |v: f64, p: f64, level: f64| {
            let mut atoms = [(v, p), (0.0, 1.0 - p)];
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            for (a, w) in atoms {
                acc += w;
                if acc >= level {
                    return a;
                }
            }
            atoms[1].0
        };
        for v in [-0.7, -0.01, 0.01, 0.7] {
            for p in [0.3, 0.5002, 0.9] {
                for i in 1..100 {
                    let level = i as f64 / 100.0;
                    assert_eq!(two_atom_quantile(v, p, level), brute(v, p, level), "{v} {p} {level}");
                }
            }
        }
    }

    #[test]
    fn dist3_f_values() {
        assert!((dist3_f(0.0) + 1.0).abs() < 1e-15);
        for i in 0..=200_000 {
            let x = -1.0 + 2.0 * i as f64 / 200_000.0;
            let f = dist3_f(x).abs();
            assert!(f >= 1.0 - DIST3_GAMMA - 1e-12 && f <= 1.0 + 1e-12, "{x}: {f}");
        }
    }

    #[test]
    fn medians_in_closed_form() {
        let pd = SyntheticDistribution::p_delta(0.001).unwrap();
        assert_eq!(pd.true_median(&[0.3]).unwrap(), 0.3);
        assert_eq!(pd.true_median(&[-0.3]).unwrap(), -0.3);
        let d2 = SyntheticDistribution::Dist2;
        assert!((d2.true_median(&[0.0]).unwrap() - 0.840_896_415_253_714_6).abs() < 1e-12);
        let half_pi = PI / 2.0;
        let expected = libm::pow(0.5, 0.25) * (1.0 + half_pi);
        assert!((d2.true_median(&[half_pi]).unwrap() - expected).abs() < 1e-12);
        assert_eq!(d2.true_quantile(&[3.0], 1.0).unwrap(), dist2_f(3.0));
        let d1 = SyntheticDistribution::Dist1;
        assert_eq!(d1.true_median(&[0.0; 10]).unwrap(), 0.0);
        let d3 = SyntheticDistribution::Dist3;
        for x in [-0.9, -0.03, 0.0, 0.02, 0.5] {
            assert_eq!(d3.true_median(&[x]).unwrap(), dist3_f(x));
        }
    }

    #[test]
    fn p_delta_quantile_pins_quantile_on_the_line() {
        for q in [0.1, 0.25, 0.5, 0.9] {
            let d = SyntheticDistribution::p_delta_quantile(q, 0.001).unwrap();
            for x in [-0.4, -0.1, 0.0, 0.2, 0.45] {
                assert_eq!(d.true_quantile(&[x], q).unwrap(), x, "{q} {x}");
            }
        }
        assert_eq!(
            SyntheticDistribution::p_delta_quantile(0.5, 0.001),
            Ok(SyntheticDistribution::PDeltaQuantile { q: 0.5, delta: 0.001 })
        );
    }

    #[test]
    fn parameter_validation() {
        assert!(SyntheticDistribution::p_delta(0.0).is_err());
        assert!(SyntheticDistribution::p_delta(0.5).is_err());
        assert!(SyntheticDistribution::p_delta_quantile(0.1, 0.95).is_err());
        assert!(SyntheticDistribution::p_delta_quantile(1.0, 0.001).is_err());
        let d = SyntheticDistribution::Dist1;
        assert!(d.true_quantile(&[0.0; 3], 0.5).is_err());
        assert!(d.true_quantile(&[0.0; 10], 1.5).is_err());
    }

    #[test]
    fn supports() {
        let mut rng = stream(1, &[]);
        for _ in 0..10_000 {
            let (x, y) = SyntheticDistribution::p_delta(0.1).unwrap().sample(&mut rng);
            assert!((-0.5..=0.5).contains(&x[0]));
            assert!(y == 0.0 || y == x[0]);
            let (x, y) = SyntheticDistribution::Dist2.sample(&mut rng);
            assert!(y > 0.0 && y <= dist2_f(x[0]));
            let (x, y) = SyntheticDistribution::Dist3.sample(&mut rng);
            assert!((-1.0..1.0).contains(&x[0]));
            assert!(y == 0.0 || y == dist3_f(x[0]));
        }
    }

    #[test]
    fn dataset_matches_pointwise_sampling() {
        let d = SyntheticDistribution::Dist1;
        let data = d.sample_dataset(20, &mut stream(5, &[]));
        let mut rng = stream(5, &[]);
        for (x, y) in data.iter() {
            let (x2, y2) = d.sample(&mut rng);
            assert_eq!(x, &x2[..]);
            assert_eq!(y, y2);
        }
    }
}
