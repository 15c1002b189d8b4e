use ndarray::Array2;

use crate::losses::PairLabels;

/// Class-equality similarity over a fixed id space.
///
/// Two numeric conventions are exposed: contrastive pair labels
/// (`0` similar, `1` dissimilar) and sign similarity (`+1` similar,
/// `−1` dissimilar).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarityOracle {
    labels: Vec<u8>,
}

impl SimilarityOracle {
    pub fn new(labels: Vec<u8>) -> Self {
        SimilarityOracle { labels }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn similar(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    /// Contrastive label `y`: 0 similar, 1 dissimilar.
    pub fn y(&self, i: usize, j: usize) -> u8 {
        u8::from(!self.similar(i, j))
    }

    /// Sign similarity: +1 similar, −1 dissimilar.
    pub fn s(&self, i: usize, j: usize) -> f64 {
        if self.similar(i, j) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn pair_labels(&self, ids: &[usize]) -> PairLabels {
        let classes: Vec<u8> = ids.iter().map(|&i| self.labels[i]).collect();
        PairLabels::from_classes(&classes)
    }

    /// `rows.len() × cols.len()` sign-similarity matrix.
    pub fn sign_similarity(&self, rows: &[usize], cols: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| self.s(rows[a], cols[b]))
    }

    /// Number of other ids sharing the class of `i`.
    pub fn peers(&self, i: usize) -> usize {
        self.labels.iter().filter(|&&l| l == self.labels[i]).count() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conventions_agree() {
        let o = SimilarityOracle::new(vec![0, 1, 0]);
        assert!(o.similar(0, 0));
        assert_eq!((o.y(0, 2), o.s(0, 2)), (0, 1.0));
        assert_eq!((o.y(0, 1), o.s(1, 0)), (1, -1.0));
        let s = o.sign_similarity(&[0, 1, 2], &[0, 1, 2]);
        assert_eq!(s, s.t());
        assert!(s.diag().iter().all(|&v| v == 1.0));
        assert_eq!(o.peers(0), 1);
        assert!(o.pair_labels(&[0, 1, 2]).dissimilar(0, 1));
    }
}
