//! Frame encoder + LSTM sequence classifier with hand-derived gradients.

mod encoder;
mod head;
mod lstm;
mod seq;

pub use encoder::{Conv3x3, EncoderCache, EncoderParams, EncoderShape, CONV_OUT_1, CONV_OUT_2};
pub use head::{classify_frames, HeadParams};
pub use lstm::{LstmParams, LstmState, LstmTrace};
pub use seq::{
    fit, predict_interval, train, Backward, Example, IntervalPrediction, LossMode, ModelShape, Objective,
    RegressionTarget, SeqInput, SeqModel, Target, TrainConfig, TrainOutcome,
};

use ndarray::{Array1, Array2};
use rand::Rng;

/// Uniform initialization range `[-INIT_SCALE, INIT_SCALE]`.
pub const INIT_SCALE: f64 = 0.1;

/// Uniform access to the trainable tensors of a parameter container.
///
/// Gradient containers reuse the parameter types, so the same traversal
/// order applies to both.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, values.len(), "flat parameter length mismatch");
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// `self += scale · other`
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn uniform_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-INIT_SCALE..=INIT_SCALE))
}

pub(crate) fn uniform_vector<R: Rng>(len: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.gen_range(-INIT_SCALE..=INIT_SCALE))
}

pub(crate) fn slice_of(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

pub(crate) fn slice_of_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored in standard layout")
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
