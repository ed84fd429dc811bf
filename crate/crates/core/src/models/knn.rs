use alloc::vec::Vec;

use super::{check_dim, ConditionalModel, ConditionalSample};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// k-nearest-neighbour conditional model: the conditional law at `x` is the
/// empirical law of the `k` training responses closest to `x` in Euclidean
/// distance. Distance ties go to the lower training index.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KnnModel {
    train: LabeledDataset,
    k: usize,
}

impl KnnModel {
    pub fn fit(train: &LabeledDataset, k: usize) -> Result<Self> {
        if k == 0 || k > train.len() {
            return Err(Error::NeighborsOutOfRange { k, n: train.len() });
        }
        Ok(Self {
            train: train.clone(),
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Training indices of the `k` nearest neighbours of `x`, nearest first.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_dim(self.train.dim(), x)?;
        let mut dist: Vec<(f64, usize)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, (row, _))| {
                let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(cmp);
        Ok(dist.into_iter().map(|(_, i)| i).collect())
    }
}

impl ConditionalModel for KnnModel {
    fn dim(&self) -> usize {
        self.train.dim()
    }

    fn conditional(&self, x: &[f64]) -> Result<ConditionalSample> {
        let ys: Vec<f64> = self.neighbors(x)?.into_iter().map(|i| self.train.response(i)).collect();
        Ok(ConditionalSample::from_equal(&ys).expect("k >= 1"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid() -> LabeledDataset {
        let x: Vec<f64> = (0..11).map(f64::from).collect();
        LabeledDataset::new(x.clone(), x, 1).unwrap()
    }

    #[test]
    fn all_neighbors_give_global_quantiles() {
        let d = grid();
        let m = KnnModel::fit(&d, d.len()).unwrap();
        for x in [-3.0, 4.2, 20.0] {
            assert_eq!(m.predict_quantile(&[x], 0.5).unwrap(), 5.0);
            assert_eq!(m.predict_quantile(&[x], 0.0).unwrap(), 0.0);
            assert_eq!(m.predict_mean(&[x]).unwrap(), 5.0);
        }
    }

    #[test]
    fn single_neighbor_returns_its_response() {
        let m = KnnModel::fit(&grid(), 1).unwrap();
        for q in [0.0, 0.3, 1.0] {
            assert_eq!(m.predict_quantile(&[7.0], q).unwrap(), 7.0);
        }
    }

    #[test]
    fn three_neighbors_mid_grid() {
        let m = KnnModel::fit(&grid(), 3).unwrap();
        assert_eq!(m.neighbors(&[5.1]).unwrap(), vec![5, 6, 4]);
        assert_eq!(m.predict_quantile(&[5.1], 0.5).unwrap(), 5.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let m = KnnModel::fit(&grid(), 1).unwrap();
        assert_eq!(m.neighbors(&[4.5]).unwrap(), vec![4]);
    }

    #[test]
    fn k_out_of_range() {
        assert_eq!(
            KnnModel::fit(&grid(), 0),
            Err(Error::NeighborsOutOfRange { k: 0, n: 11 })
        );
        assert!(KnnModel::fit(&grid(), 12).is_err());
    }
}
