use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;

use super::{slice_of, slice_of_mut, uniform_matrix, uniform_vector, ParamSet};
use crate::audio::{SpectroFrame, BANDS, FRAME_COLUMNS};
use crate::{Error, Result};

/// Spatial side after the first stride-2 3×3 convolution of a 40×40 frame.
pub const CONV_OUT_1: usize = (BANDS - 3) / 2 + 1;
/// Spatial side after the second convolution.
pub const CONV_OUT_2: usize = (CONV_OUT_1 - 3) / 2 + 1;

/// The log channel is roughly in [-25, 10]; it is scaled into the same
/// order of magnitude as the two [0, 1] channels before the first conv.
pub const LOG_CHANNEL_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub embed_dim: usize,
}

/// 3×3, stride 2, no padding, tanh activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub in_channels: usize,
    /// `[out, in·9]`, kernel taps ordered `(channel, row, col)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Conv3x3 {
    fn out_channels(&self) -> usize {
        self.weight.nrows()
    }

    // Patch matrix `[out_h·out_w, in·9]`.
    fn im2col(&self, input: &Array3<f64>) -> Array2<f64> {
        let (c, h, w) = input.dim();
        let (oh, ow) = ((h - 3) / 2 + 1, (w - 3) / 2 + 1);
        let mut patches = Array2::zeros((oh * ow, c * 9));
        for i in 0..oh {
            for j in 0..ow {
                let mut row = patches.row_mut(i * ow + j);
                let mut k = 0;
                for ch in 0..c {
                    for di in 0..3 {
                        for dj in 0..3 {
                            row[k] = input[[ch, 2 * i + di, 2 * j + dj]];
                            k += 1;
                        }
                    }
                }
            }
        }
        patches
    }

    fn col2im(&self, dpatches: &Array2<f64>, h: usize, w: usize) -> Array3<f64> {
        let ow = (w - 3) / 2 + 1;
        let mut out = Array3::zeros((self.in_channels, h, w));
        for (p, row) in dpatches.axis_iter(Axis(0)).enumerate() {
            let (i, j) = (p / ow, p % ow);
            let mut k = 0;
            for ch in 0..self.in_channels {
                for di in 0..3 {
                    for dj in 0..3 {
                        out[[ch, 2 * i + di, 2 * j + dj]] += row[k];
                        k += 1;
                    }
                }
            }
        }
        out
    }

    /// Returns `(patches, activation [out, oh, ow])`.
    fn forward(&self, input: &Array3<f64>) -> (Array2<f64>, Array3<f64>) {
        let (_, h, w) = input.dim();
        let (oh, ow) = ((h - 3) / 2 + 1, (w - 3) / 2 + 1);
        let patches = self.im2col(input);
        let mut pre = patches.dot(&self.weight.t());
        pre += &self.bias;
        let act = pre
            .t()
            .as_standard_layout()
            .mapv(f64::tanh)
            .into_shape_with_order((self.out_channels(), oh, ow))
            .expect("conv output shape");
        (patches, act)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub conv1: Conv3x3,
    pub conv2: Conv3x3,
    /// `[embed_dim, conv2_channels · CONV_OUT_2²]`
    pub dense_weight: Array2<f64>,
    pub dense_bias: Array1<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    patches1: Array2<f64>,
    act1: Array3<f64>,
    patches2: Array2<f64>,
    act2_flat: Array1<f64>,
    pub embedding: Array1<f64>,
}

impl EncoderParams {
    pub fn new<R: Rng>(shape: EncoderShape, rng: &mut R) -> Self {
        let (c1, c2, d) = (shape.conv1_channels, shape.conv2_channels, shape.embed_dim);
        Self {
            conv1: Conv3x3 {
                in_channels: 3,
                weight: uniform_matrix(c1, 27, rng),
                bias: uniform_vector(c1, rng),
            },
            conv2: Conv3x3 {
                in_channels: c1,
                weight: uniform_matrix(c2, c1 * 9, rng),
                bias: uniform_vector(c2, rng),
            },
            dense_weight: uniform_matrix(d, c2 * CONV_OUT_2 * CONV_OUT_2, rng),
            dense_bias: uniform_vector(d, rng),
        }
    }

    pub fn shape(&self) -> EncoderShape {
        EncoderShape {
            conv1_channels: self.conv1.out_channels(),
            conv2_channels: self.conv2.out_channels(),
            embed_dim: self.dense_weight.nrows(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.dense_weight.nrows()
    }

    /// Stacks the three channels into the encoder input, scaling the log channel.
    pub fn frame_input(frame: &SpectroFrame) -> Result<Array3<f64>> {
        for ch in &frame.channels {
            if ch.dim() != (BANDS, FRAME_COLUMNS) {
                return Err(Error::Dimension(format!(
                    "frame channel is {:?}, expected ({BANDS}, {FRAME_COLUMNS})",
                    ch.dim()
                )));
            }
        }
        Ok(Array3::from_shape_fn((3, BANDS, FRAME_COLUMNS), |(c, i, j)| {
            let v = frame.channels[c][[i, j]];
            if c == 0 {
                v * LOG_CHANNEL_SCALE
            } else {
                v
            }
        }))
    }

    pub fn forward_cached(&self, frame: &SpectroFrame) -> Result<EncoderCache> {
        let input = Self::frame_input(frame)?;
        let (patches1, act1) = self.conv1.forward(&input);
        let (patches2, act2) = self.conv2.forward(&act1);
        let act2_flat = Array1::from_iter(act2.iter().copied());
        let embedding = (self.dense_weight.dot(&act2_flat) + &self.dense_bias).mapv(f64::tanh);
        Ok(EncoderCache {
            patches1,
            act1,
            patches2,
            act2_flat,
            embedding,
        })
    }

    pub fn encode_frame(&self, frame: &SpectroFrame) -> Result<Array1<f64>> {
        Ok(self.forward_cached(frame)?.embedding)
    }

    /// Accumulates parameter gradients for one frame into `grads`.
    pub fn backward(&self, cache: &EncoderCache, d_embedding: &Array1<f64>, grads: &mut EncoderParams) {
        let dz3 = d_embedding * &cache.embedding.mapv(|e| 1.0 - e * e);
        grads.dense_weight.scaled_add(1.0, &outer(&dz3, &cache.act2_flat));
        grads.dense_bias += &dz3;

        let d_act2 = self.dense_weight.t().dot(&dz3);
        let c2 = self.conv2.out_channels();
        let positions2 = CONV_OUT_2 * CONV_OUT_2;
        // [c2, positions] → [positions, c2]
        let dz2 = Array2::from_shape_fn((positions2, c2), |(p, o)| {
            let a = cache.act2_flat[o * positions2 + p];
            d_act2[o * positions2 + p] * (1.0 - a * a)
        });
        grads.conv2.weight.scaled_add(1.0, &dz2.t().dot(&cache.patches2));
        grads.conv2.bias += &dz2.sum_axis(Axis(0));
        let dpatches2 = dz2.dot(&self.conv2.weight);
        let d_act1 = self.conv2.col2im(&dpatches2, CONV_OUT_1, CONV_OUT_1);

        let c1 = self.conv1.out_channels();
        let positions1 = CONV_OUT_1 * CONV_OUT_1;
        let dz1 = Array2::from_shape_fn((positions1, c1), |(p, o)| {
            let (i, j) = (p / CONV_OUT_1, p % CONV_OUT_1);
            let a = cache.act1[[o, i, j]];
            d_act1[[o, i, j]] * (1.0 - a * a)
        });
        grads.conv1.weight.scaled_add(1.0, &dz1.t().dot(&cache.patches1));
        grads.conv1.bias += &dz1.sum_axis(Axis(0));
    }
}

pub(crate) fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

impl ParamSet for EncoderParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            slice_of(&self.conv1.weight),
            self.conv1.bias.as_slice().unwrap(),
            slice_of(&self.conv2.weight),
            self.conv2.bias.as_slice().unwrap(),
            slice_of(&self.dense_weight),
            self.dense_bias.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            slice_of_mut(&mut self.conv1.weight),
            self.conv1.bias.as_slice_mut().unwrap(),
            slice_of_mut(&mut self.conv2.weight),
            self.conv2.bias.as_slice_mut().unwrap(),
            slice_of_mut(&mut self.dense_weight),
            self.dense_bias.as_slice_mut().unwrap(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng) -> SpectroFrame {
        let mut ch = || Array2::from_shape_simple_fn((40, 40), || rng.gen_range(0.0..1.0));
        SpectroFrame {
            channels: [ch().mapv(|v| v * 20.0 - 15.0), ch(), ch()],
            start_time: 0.0,
        }
    }

    // Direct nested-loop evaluation of the same network.
    fn naive_encode(p: &EncoderParams, frame: &SpectroFrame) -> Vec<f64> {
        let conv = |input: &Vec<Vec<Vec<f64>>>, c: &Conv3x3| -> Vec<Vec<Vec<f64>>> {
            let side = (input[0].len() - 3) / 2 + 1;
            (0..c.weight.nrows())
                .map(|o| {
                    (0..side)
                        .map(|i| {
                            (0..side)
                                .map(|j| {
                                    let mut acc = c.bias[o];
                                    for (ch, plane) in input.iter().enumerate() {
                                        for di in 0..3 {
                                            for dj in 0..3 {
                                                acc +=
                                                    c.weight[[o, ch * 9 + di * 3 + dj]] * plane[2 * i + di][2 * j + dj];
                                            }
                                        }
                                    }
                                    acc.tanh()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        let input: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|c| {
                let s = if c == 0 { LOG_CHANNEL_SCALE } else { 1.0 };
                (0..40)
                    .map(|i| (0..40).map(|j| frame.channels[c][[i, j]] * s).collect())
                    .collect()
            })
            .collect();
        let a2 = conv(&conv(&input, &p.conv1), &p.conv2);
        let flat: Vec<f64> = a2.iter().flatten().flatten().copied().collect();
        (0..p.dense_weight.nrows())
            .map(|k| {
                let z: f64 = p.dense_bias[k]
                    + flat
                        .iter()
                        .enumerate()
                        .map(|(i, v)| p.dense_weight[[k, i]] * v)
                        .sum::<f64>();
                z.tanh()
            })
            .collect()
    }

    fn shape() -> EncoderShape {
        EncoderShape {
            conv1_channels: 3,
            conv2_channels: 2,
            embed_dim: 5,
        }
    }

    #[test]
    fn output_sides() {
        assert_eq!(CONV_OUT_1, 19);
        assert_eq!(CONV_OUT_2, 9);
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = EncoderParams::new(shape(), &mut rng).zeros_like();
        let e = p.encode_frame(&random_frame(&mut rng)).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let p = EncoderParams::new(shape(), &mut rng);
            let f = random_frame(&mut rng);
            let got = p.encode_frame(&f).unwrap();
            let want = naive_encode(&p, &f);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-6, "{g} vs {w}");
            }
            assert_eq!(p.encode_frame(&f).unwrap(), got);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = EncoderParams::new(shape(), &mut rng);
        let bad = SpectroFrame {
            channels: [
                Array2::zeros((40, 39)),
                Array2::zeros((40, 40)),
                Array2::zeros((40, 40)),
            ],
            start_time: 0.0,
        };
        assert!(matches!(p.encode_frame(&bad), Err(Error::Dimension(_))));
    }
}
