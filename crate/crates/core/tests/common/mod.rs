#![allow(dead_code)]

use emoseq::audio::SpectroFrame;
use emoseq::ctc::PosteriorMatrix;
use emoseq::model::{
    EncoderShape, LossMode, ModelShape, Objective, ParamSet, RegressionTarget, SeqInput, SeqModel, Target,
};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Gradient components smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Worst relative error between `analytic` and central differences of
/// `loss` over the coordinates in `coords` (all when `None`).
pub fn fd_worst<P: ParamSet>(params: &P, analytic: &P, coords: Option<&[usize]>, loss: impl Fn(&P) -> f64) -> f64 {
    let base = params.flat();
    let grad = analytic.flat();
    let all: Vec<usize> = (0..base.len()).collect();
    let coords = coords.unwrap_or(&all);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let mut v = base.clone();
        v[i] = base[i] + FD_STEP;
        probe.set_flat(&v);
        let up = loss(&probe);
        v[i] = base[i] - FD_STEP;
        probe.set_flat(&v);
        let down = loss(&probe);
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// Dirichlet-ish random posterior matrix.
pub fn random_posteriors(rng: &mut ChaCha8Rng, t: usize, n: usize) -> PosteriorMatrix {
    let mut m = Array2::from_shape_simple_fn((t, n), || rng.gen_range(0.01..1.0f64));
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    PosteriorMatrix::new(m).unwrap()
}

/// Collapse a path: merge repeats, then drop blanks.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != blank {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Visits every length-`t` path over `n` symbols with its probability.
pub fn for_each_path(y: &PosteriorMatrix, mut f: impl FnMut(&[usize], f64)) {
    let (t, n) = (y.frames(), y.classes());
    let mut path = vec![0usize; t];
    loop {
        let p: f64 = path.iter().enumerate().map(|(i, &s)| y.get(i, s)).product();
        f(&path, p);
        let mut i = 0;
        loop {
            if i == t {
                return;
            }
            path[i] += 1;
            if path[i] < n {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Sum of path probabilities over every path that collapses to `label`.
pub fn enumerate_label_probability(y: &PosteriorMatrix, label: &[usize], blank: usize) -> f64 {
    let mut total = 0.0;
    for_each_path(y, |path, p| {
        if collapse_path(path, blank) == label {
            total += p;
        }
    });
    total
}

pub fn random_frame(rng: &mut ChaCha8Rng, start_time: f64) -> SpectroFrame {
    let values: Vec<f64> = (0..3 * 40 * 40).map(|_| rng.gen_range(0.0..1.0)).collect();
    SpectroFrame::from_flat(&values, start_time).unwrap()
}

pub fn random_input(rng: &mut ChaCha8Rng, t: usize, shape: &ModelShape) -> SeqInput {
    match shape.encoder {
        Some(_) => SeqInput::Frames((0..t).map(|i| random_frame(rng, i as f64 * 0.2)).collect()),
        None => SeqInput::Embeddings(
            (0..t)
                .map(|_| Array1::from_shape_simple_fn(shape.input_dim, || rng.gen_range(-1.0..1.0)))
                .collect(),
        ),
    }
}

/// Random small model shape with `d, h ≤ 8`.
pub fn random_shape(rng: &mut ChaCha8Rng, mode: LossMode, with_encoder: bool) -> ModelShape {
    let d = rng.gen_range(1..=8);
    ModelShape {
        emotions: rng.gen_range(2..=4),
        encoder: with_encoder.then(|| EncoderShape {
            conv1_channels: rng.gen_range(1..=2),
            conv2_channels: rng.gen_range(1..=2),
            embed_dim: d,
        }),
        input_dim: d,
        hidden: rng.gen_range(1..=8),
        loss_mode: mode,
    }
}

/// Model whose weights are drawn wider than the default init so that the
/// gradient check exercises non-linear regimes.
pub fn random_model(rng: &mut ChaCha8Rng, shape: &ModelShape, scale: f64) -> SeqModel {
    let mut m = SeqModel::new(shape, rng).unwrap();
    let v: Vec<f64> = (0..m.num_params()).map(|_| rng.gen_range(-scale..scale)).collect();
    m.set_flat(&v);
    m
}

pub struct GradInstance {
    pub model: SeqModel,
    pub input: SeqInput,
    pub target: Target,
    pub regression: Option<RegressionTarget>,
    pub upstream: Option<Array1<f64>>,
}

impl GradInstance {
    pub fn objective(&self) -> Objective<'_> {
        Objective {
            target: Some(&self.target),
            regression: self.regression,
            upstream: self.upstream.as_ref(),
        }
    }
}

pub fn random_grad_instance(rng: &mut ChaCha8Rng, mode: LossMode, with_encoder: bool) -> GradInstance {
    let shape = random_shape(rng, mode, with_encoder);
    let model = random_model(rng, &shape, 0.5);
    let t = rng.gen_range(1..=6);
    let input = random_input(rng, t, &shape);
    let target = match mode {
        LossMode::FramewiseCe => Target::Framewise((0..t).map(|_| rng.gen_range(0..shape.emotions)).collect()),
        LossMode::Ctc => {
            let mut label = vec![rng.gen_range(0..shape.emotions)];
            if t >= 3 && rng.gen_bool(0.5) {
                label.push(rng.gen_range(0..shape.emotions));
            }
            if emoseq::ctc::min_frames(&label) > t {
                label.truncate(1);
            }
            Target::Ctc(label)
        }
    };
    let regression = rng.gen_bool(0.5).then(|| RegressionTarget {
        arousal: rng.gen_range(0.0..1.0),
        valence: rng.gen_range(-1.0..1.0),
        weight: rng.gen_range(0.1..2.0),
    });
    let upstream = rng
        .gen_bool(0.3)
        .then(|| Array1::from_shape_simple_fn(shape.hidden, || rng.gen_range(-1.0..1.0)));
    GradInstance {
        model,
        input,
        target,
        regression,
        upstream,
    }
}

/// Worst FD relative error for one instance over `coords` (all when `None`).
pub fn check_instance(inst: &GradInstance, coords: Option<&[usize]>) -> f64 {
    let obj = inst.objective();
    let analytic = inst.model.backward(&inst.input, &obj).unwrap().grads;
    fd_worst(&inst.model, &analytic, coords, |m| m.loss(&inst.input, &obj).unwrap())
}
