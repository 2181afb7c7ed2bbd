use ndarray::{Array1, Array2};
use rand::Rng;

use super::{slice_of, slice_of_mut, uniform_matrix, uniform_vector, ParamSet};
use crate::ctc::PosteriorMatrix;

/// Dense classification layer plus a two-output (arousal, valence)
/// regression layer over the same input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `[classes, input]`
    pub class_weight: Array2<f64>,
    pub class_bias: Array1<f64>,
    /// `[2, input]`
    pub regression_weight: Array2<f64>,
    pub regression_bias: Array1<f64>,
}

impl HeadParams {
    pub fn new<R: Rng>(input: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            class_weight: uniform_matrix(classes, input, rng),
            class_bias: uniform_vector(classes, rng),
            regression_weight: uniform_matrix(2, input, rng),
            regression_bias: uniform_vector(2, rng),
        }
    }

    pub fn zeros(input: usize, classes: usize) -> Self {
        Self {
            class_weight: Array2::zeros((classes, input)),
            class_bias: Array1::zeros(classes),
            regression_weight: Array2::zeros((2, input)),
            regression_bias: Array1::zeros(2),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.class_weight.ncols()
    }

    pub fn classes(&self) -> usize {
        self.class_weight.nrows()
    }

    pub fn logits(&self, x: &Array1<f64>) -> Array1<f64> {
        self.class_weight.dot(x) + &self.class_bias
    }

    /// Unbounded `(arousal, valence)` outputs.
    pub fn regress(&self, x: &Array1<f64>) -> Array1<f64> {
        self.regression_weight.dot(x) + &self.regression_bias
    }
}

/// Per-frame softmax posteriors from hidden states.
pub fn classify_frames(head: &HeadParams, hidden: &[Array1<f64>]) -> PosteriorMatrix {
    let logits = Array2::from_shape_fn((hidden.len(), head.classes()), |(t, k)| {
        head.class_bias[k] + head.class_weight.row(k).dot(&hidden[t])
    });
    PosteriorMatrix::from_logits(logits.view())
}

impl ParamSet for HeadParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            slice_of(&self.class_weight),
            self.class_bias.as_slice().unwrap(),
            slice_of(&self.regression_weight),
            self.regression_bias.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            slice_of_mut(&mut self.class_weight),
            self.class_bias.as_slice_mut().unwrap(),
            slice_of_mut(&mut self.regression_weight),
            self.regression_bias.as_slice_mut().unwrap(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_is_uniform() {
        let head = HeadParams::zeros(3, 4);
        let y = classify_frames(&head, &[Array1::ones(3), Array1::zeros(3)]);
        assert!(y.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn saturation() {
        let mut head = HeadParams::zeros(2, 3);
        head.class_weight[[1, 0]] = 100.0;
        let y = classify_frames(&head, &[ndarray::array![1.0, 0.0]]);
        assert!(y.get(0, 1) > 1.0 - 1e-12);
    }

    #[test]
    fn rows_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut head = HeadParams::new(4, 5, &mut rng);
            head.class_weight.mapv_inplace(|v| v * 50.0);
            let hs: Vec<Array1<f64>> = (0..6)
                .map(|_| Array1::from_shape_simple_fn(4, || rng.gen_range(-3.0..3.0)))
                .collect();
            let y = classify_frames(&head, &hs);
            for row in y.probs().axis_iter(Axis(0)) {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }
}
