//! Observation sets with cached sufficient statistics.

use crate::error::{bail_domain, Result};
use crate::expfam::ExpFam;

/// A fixed list of observations from one family's sample space. Sufficient
/// statistics are computed once at construction; every engine downstream
/// works from the cache. Ground-truth component labels can be attached when
/// the data came from a synthetic mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    family: ExpFam,
    points: Vec<Vec<f64>>,
    suffs: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(family: ExpFam, points: Vec<Vec<f64>>) -> Result<Self> {
        family.validate()?;
        let suffs = points
            .iter()
            .map(|x| family.suff_stat(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            family,
            points,
            suffs,
            labels: None,
        })
    }

    /// Convenience constructor for one-dimensional observation spaces.
    pub fn from_scalars(family: ExpFam, values: &[f64]) -> Result<Self> {
        Self::new(family, values.iter().map(|v| vec![*v]).collect())
    }

    /// Attaches generating-component labels, one per point.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.points.len() {
            bail_domain!(
                "{} labels for {} points",
                labels.len(),
                self.points.len()
            );
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn family(&self) -> &ExpFam {
        &self.family
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Cached s(x_j).
    pub fn suff(&self, j: usize) -> &[f64] {
        &self.suffs[j]
    }

    pub fn suffs(&self) -> &[Vec<f64>] {
        &self.suffs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// The first `m` points as their own dataset (labels carried along).
    /// Growing-n experiments evaluate every n on prefixes of one draw.
    pub fn prefix(&self, m: usize) -> Result<Dataset> {
        if m == 0 || m > self.n() {
            bail_domain!("prefix length {m} out of range for {} points", self.n());
        }
        Ok(Dataset {
            family: self.family.clone(),
            points: self.points[..m].to_vec(),
            suffs: self.suffs[..m].to_vec(),
            labels: self.labels.as_ref().map(|l| l[..m].to_vec()),
        })
    }

    /// Summed sufficient statistic over a set of indices.
    pub fn suff_sum_of(&self, indices: &[usize]) -> Vec<f64> {
        let k = self.family.suff_dim();
        let mut acc = vec![0.0; k];
        for &j in indices {
            for (a, b) in acc.iter_mut().zip(&self.suffs[j]) {
                *a += b;
            }
        }
        acc
    }

    /// Indices sorted by point value (lexicographic, total order on floats).
    ///
    /// The exact engines fold data in this order, which makes their output a
    /// function of the multiset of points alone: feeding a permutation of the
    /// same points reproduces every result bit for bit.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&self.points[a], &self.points[b]);
            for (x, y) in pa.iter().zip(pb) {
                match x.total_cmp(y) {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
            std::cmp::Ordering::Equal
        });
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caches_sufficient_statistics() {
        let d = Dataset::from_scalars(ExpFam::NormalGamma, &[2.0, -1.0]).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.suff(0), &[2.0, 4.0]);
        assert_eq!(d.suff(1), &[-1.0, 1.0]);
        assert_eq!(d.suff_sum_of(&[0, 1]), vec![1.0, 5.0]);
    }

    #[test]
    fn rejects_points_outside_the_sample_space() {
        assert!(Dataset::from_scalars(ExpFam::PoissonGamma, &[1.0, 2.5]).is_err());
        assert!(Dataset::from_scalars(ExpFam::ExponentialGamma, &[0.0]).is_err());
        let gauss = ExpFam::GaussianKnownVariance {
            variances: vec![1.0, 1.0],
        };
        assert!(Dataset::new(gauss, vec![vec![0.0]]).is_err());
    }

    #[test]
    fn prefix_keeps_labels_and_cache() {
        let d = Dataset::from_scalars(ExpFam::PoissonGamma, &[0.0, 3.0, 1.0])
            .unwrap()
            .with_labels(vec![0, 1, 0])
            .unwrap();
        let p = d.prefix(2).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.labels(), Some(&[0usize, 1][..]));
        assert_eq!(p.suff(1), &[3.0]);
        assert!(d.prefix(4).is_err());
        assert!(d.prefix(0).is_err());
    }

    #[test]
    fn canonical_order_sorts_lexicographically() {
        let gauss = ExpFam::GaussianKnownVariance {
            variances: vec![1.0, 1.0],
        };
        let d = Dataset::new(
            gauss,
            vec![vec![1.0, 5.0], vec![-2.0, 0.0], vec![1.0, -3.0]],
        )
        .unwrap();
        assert_eq!(d.canonical_order(), vec![1, 2, 0]);
    }
}
