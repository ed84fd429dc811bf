use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Covariate rows and responses, stored row-major. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledDataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl LabeledDataset {
    /// `x` holds `y.len()` rows of `dim` features each.
    pub fn new(x: Vec<f64>, y: Vec<f64>, dim: usize) -> Result<Self> {
        let rows = if dim == 0 { y.len() } else { x.len() / dim };
        if (dim == 0 && !x.is_empty()) || (dim > 0 && x.len() % dim != 0) || rows != y.len() {
            return Err(Error::LengthMismatch {
                rows,
                responses: y.len(),
            });
        }
        if dim > 0 {
            if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: pos / dim,
                    column: pos % dim,
                });
            }
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, column: dim });
        }
        Ok(Self { dim, x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut x = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            x.extend_from_slice(row);
        }
        if rows.len() != y.len() {
            return Err(Error::LengthMismatch {
                rows: rows.len(),
                responses: y.len(),
            });
        }
        Self::new(x, y, dim)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.y[i]))
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self { dim: self.dim, x, y }
    }

    /// Same covariates with new responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.dim)
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if let Some(column) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: self.len(),
                column,
            });
        }
        if !y.is_finite() {
            return Err(Error::NonFinite {
                row: self.len(),
                column: self.dim,
            });
        }
        self.x.extend_from_slice(x);
        self.y.push(y);
        Ok(())
    }
}

/// Disjoint proper-training and calibration index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitIndices {
    train: Vec<usize>,
    calibration: Vec<usize>,
}

impl SplitIndices {
    pub fn new(train: Vec<usize>, calibration: Vec<usize>, n: usize) -> Result<Self> {
        let invalid = Error::InvalidSplit { n, n1: train.len() };
        if train.len() + calibration.len() != n {
            return Err(invalid);
        }
        let mut seen = alloc::vec![false; n];
        for &i in train.iter().chain(&calibration) {
            if i >= n || seen[i] {
                return Err(invalid);
            }
            seen[i] = true;
        }
        Ok(Self { train, calibration })
    }

    /// Seeded Fisher–Yates permutation of `0..n`; the first `n1` entries form
    /// the training set. Both sets are returned in ascending order.
    pub fn random<R: Rng + ?Sized>(n: usize, n1: usize, rng: &mut R) -> Result<Self> {
        if n1 > n {
            return Err(Error::InvalidSplit { n, n1 });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let mut calibration = perm.split_off(n1);
        perm.sort_unstable();
        calibration.sort_unstable();
        Ok(Self {
            train: perm,
            calibration,
        })
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn calibration(&self) -> &[usize] {
        &self.calibration
    }

    pub fn n1(&self) -> usize {
        self.train.len()
    }

    pub fn n2(&self) -> usize {
        self.calibration.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;

    #[test]
    fn rejects_non_finite_with_position() {
        let err = LabeledDataset::new(vec![0.0, 1.0, f64::NAN, 2.0], vec![1.0, 2.0], 2);
        assert_eq!(err, Err(Error::NonFinite { row: 1, column: 0 }));
        let err = LabeledDataset::new(vec![0.0, 1.0], vec![1.0, f64::INFINITY], 1);
        assert_eq!(err, Err(Error::NonFinite { row: 1, column: 1 }));
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(LabeledDataset::new(vec![0.0, 1.0, 2.0], vec![1.0], 2).is_err());
        assert!(LabeledDataset::new(vec![0.0, 1.0], vec![1.0], 1).is_err());
    }

    #[test]
    fn subset_keeps_order() {
        let d = LabeledDataset::new(vec![0.0, 1.0, 2.0], vec![10.0, 11.0, 12.0], 1).unwrap();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.responses(), &[12.0, 10.0]);
        assert_eq!(s.row(0), &[2.0]);
    }

    #[test]
    fn random_split_partitions() {
        let split = SplitIndices::random(101, 40, &mut stream(3, &[])).unwrap();
        assert_eq!(split.n1(), 40);
        assert_eq!(split.n2(), 61);
        let mut all: Vec<usize> = split.train().iter().chain(split.calibration()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        let again = SplitIndices::random(101, 40, &mut stream(3, &[])).unwrap();
        assert_eq!(split, again);
        assert!(SplitIndices::random(3, 4, &mut stream(3, &[])).is_err());
    }

    #[test]
    fn explicit_split_validation() {
        assert!(SplitIndices::new(vec![0, 1], vec![2], 3).is_ok());
        assert!(SplitIndices::new(vec![0, 1], vec![1], 3).is_err());
        assert!(SplitIndices::new(vec![0, 3], vec![1], 3).is_err());
    }
}
