use alloc::vec::Vec;

/// Slack on cumulative weights when locating a step quantile, so that a
/// level sitting exactly on a cumulative boundary is not pushed to the next
/// atom by rounding in the weight sums.
const CUMULATIVE_SLACK: f64 = 1e-12;

/// A discrete conditional law: distinct ascending atoms with positive weights.
///
/// Two functions are derived from it. The step CDF and step quantile are the
/// usual weighted empirical ones. The interpolated CDF `G` jumps from 0 to the
/// first cumulative weight at the smallest atom and is linear between
/// consecutive atoms up to 1 at the largest; its inverse is continuous and
/// strictly increasing on `(first weight, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSample {
    atoms: Vec<f64>,
    cumulative: Vec<f64>,
    mean: f64,
    max_weight: f64,
}

impl ConditionalSample {
    /// Builds from `(value, weight)` pairs in any order. Returns `None` when
    /// the pairs are empty or carry no weight.
    pub fn from_weighted(mut pairs: Vec<(f64, f64)>) -> Option<Self> {
        pairs.retain(|&(_, w)| w > 0.0);
        if pairs.is_empty() {
            return None;
        }
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut atoms = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, w) in pairs {
            match atoms.last() {
                Some(&last) if last == v => *weights.last_mut().unwrap() += w,
                _ => {
                    atoms.push(v);
                    weights.push(w);
                }
            }
        }
        let mean = atoms.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>() / total;
        let max_weight = weights.iter().fold(0.0f64, |m, w| m.max(*w)) / total;
        let mut running = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                running += w;
                running / total
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Some(Self {
            atoms,
            cumulative,
            mean,
            max_weight,
        })
    }

    /// Equal weight on every value.
    pub fn from_equal(values: &[f64]) -> Option<Self> {
        Self::from_weighted(values.iter().map(|&v| (v, 1.0)).collect())
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn min(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max(&self) -> f64 {
        *self.atoms.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Largest single-atom probability; the granularity of the step CDF.
    pub fn max_atom_weight(&self) -> f64 {
        self.max_weight
    }

    /// Weighted empirical quantile `inf{y : F(y) >= q}`; the minimum at `q <= 0`.
    pub fn quantile(&self, q: f64) -> f64 {
        let j = self
            .cumulative
            .partition_point(|&c| c < q - CUMULATIVE_SLACK)
            .min(self.atoms.len() - 1);
        self.atoms[j]
    }

    /// Right-continuous step CDF.
    pub fn step_cdf(&self, y: f64) -> f64 {
        let j = self.atoms.partition_point(|&a| a <= y);
        if j == 0 {
            0.0
        } else {
            self.cumulative[j - 1]
        }
    }

    /// Interpolated CDF `G`.
    pub fn cdf(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        let j = self.atoms.partition_point(|&a| a <= y);
        if j == 0 {
            return 0.0;
        }
        if j == self.atoms.len() {
            return 1.0;
        }
        let (a0, a1) = (self.atoms[j - 1], self.atoms[j]);
        let (c0, c1) = (self.cumulative[j - 1], self.cumulative[j]);
        c0 + (y - a0) / (a1 - a0) * (c1 - c0)
    }

    /// Generalized inverse of `G`: the leftmost `y` with `G(y) >= p`, with `p`
    /// clamped to `[0, 1]`.
    pub fn inverse_cdf(&self, p: f64) -> f64 {
        let j = self.cumulative.partition_point(|&c| c < p);
        if j == 0 {
            return self.atoms[0];
        }
        if j >= self.atoms.len() {
            return self.max();
        }
        let (a0, a1) = (self.atoms[j - 1], self.atoms[j]);
        let (c0, c1) = (self.cumulative[j - 1], self.cumulative[j]);
        let y = a0 + (p - c0) / (c1 - c0) * (a1 - a0);
        y.clamp(a0, a1)
    }
}
