use crate::rarity::l1_slices;

/// A classifier over fixed-length feature vectors.
pub trait Classifier {
    fn fit(&mut self, features: Vec<Vec<f64>>, labels: Vec<usize>);
    fn predict(&self, x: &[f64]) -> usize;
}

/// 1-nearest-neighbor under Manhattan distance; ties go to the earliest
/// training sample.
#[derive(Debug, Clone, Default)]
pub struct NearestNeighbor {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl Classifier for NearestNeighbor {
    fn fit(&mut self, features: Vec<Vec<f64>>, labels: Vec<usize>) {
        assert_eq!(features.len(), labels.len());
        self.features = features;
        self.labels = labels;
    }

    fn predict(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (f, &l) in self.features.iter().zip(&self.labels) {
            let d = l1_slices(f, x).expect("features share one layout");
            if d < best.0 {
                best = (d, l);
            }
        }
        best.1
    }
}
