use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoder::{outer, EncoderCache, EncoderParams, EncoderShape};
use super::head::{classify_frames, HeadParams};
use super::lstm::LstmParams;
use super::ParamSet;
use crate::audio::SpectroFrame;
use crate::ctc::{self, log_softmax_rows};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Cross-entropy of every frame against the interval label.
    FramewiseCe,
    /// CTC against the single-symbol label; the head gains a blank class.
    Ctc,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::FramewiseCe => "framewise_ce",
            LossMode::Ctc => "ctc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "framewise_ce" => Some(LossMode::FramewiseCe),
            "ctc" => Some(LossMode::Ctc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub emotions: usize,
    /// `None` when the model consumes precomputed embeddings.
    pub encoder: Option<EncoderShape>,
    /// LSTM input width: the encoder's embedding size or the external
    /// embedding size.
    pub input_dim: usize,
    pub hidden: usize,
    pub loss_mode: LossMode,
}

/// Sequence fed to one modality branch.
#[derive(Debug, Clone, PartialEq)]
pub enum SeqInput {
    Frames(Vec<SpectroFrame>),
    Embeddings(Vec<Array1<f64>>),
}

impl SeqInput {
    pub fn len(&self) -> usize {
        match self {
            SeqInput::Frames(f) => f.len(),
            SeqInput::Embeddings(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> SeqInput {
        match self {
            SeqInput::Frames(f) => SeqInput::Frames(f[range].to_vec()),
            SeqInput::Embeddings(e) => SeqInput::Embeddings(e[range].to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// One class index per frame.
    Framewise(Vec<usize>),
    /// Label sequence without blanks.
    Ctc(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionTarget {
    pub arousal: f64,
    pub valence: f64,
    pub weight: f64,
}

/// What the loss is made of for one backward pass.
#[derive(Debug, Clone, Default)]
pub struct Objective<'a> {
    pub target: Option<&'a Target>,
    /// Squared error of the regression head on the final hidden state.
    pub regression: Option<RegressionTarget>,
    /// Gradient arriving at the final hidden state from a downstream layer;
    /// contributes the surrogate term `upstream · h_T` to the reported loss.
    pub upstream: Option<&'a Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqModel {
    pub encoder: Option<EncoderParams>,
    pub lstm: LstmParams,
    pub head: HeadParams,
    pub loss_mode: LossMode,
    pub emotions: usize,
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub loss: f64,
    pub grads: SeqModel,
    /// Final hidden state (the interval embedding).
    pub embedding: Array1<f64>,
}

struct Forward {
    encoder_caches: Vec<EncoderCache>,
    trace: super::lstm::LstmTrace,
}

impl SeqModel {
    pub fn new(shape: &ModelShape, rng: &mut ChaCha8Rng) -> Result<Self> {
        if shape.emotions < 1 || shape.hidden == 0 || shape.input_dim == 0 {
            return Err(Error::Validation(format!("degenerate model shape {shape:?}")));
        }
        let encoder = match shape.encoder {
            Some(e) if e.embed_dim != shape.input_dim => {
                return Err(Error::Dimension(format!(
                    "encoder embedding {} != LSTM input {}",
                    e.embed_dim, shape.input_dim
                )))
            }
            Some(e) => Some(EncoderParams::new(e, rng)),
            None => None,
        };
        let lstm = LstmParams::new(shape.input_dim, shape.hidden, rng);
        let classes = match shape.loss_mode {
            LossMode::FramewiseCe => shape.emotions,
            LossMode::Ctc => shape.emotions + 1,
        };
        let head = HeadParams::new(shape.hidden, classes, rng);
        Ok(Self {
            encoder,
            lstm,
            head,
            loss_mode: shape.loss_mode,
            emotions: shape.emotions,
        })
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            emotions: self.emotions,
            encoder: self.encoder.as_ref().map(EncoderParams::shape),
            input_dim: self.lstm.input_dim(),
            hidden: self.lstm.hidden(),
            loss_mode: self.loss_mode,
        }
    }

    /// Blank class index in CTC mode (the last class).
    pub fn blank(&self) -> Option<usize> {
        (self.loss_mode == LossMode::Ctc).then_some(self.emotions)
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden()
    }

    fn embed(&self, input: &SeqInput) -> Result<(Vec<Array1<f64>>, Vec<EncoderCache>)> {
        if input.is_empty() {
            return Err(Error::EmptyInput("sequence has no frames".into()));
        }
        match (input, &self.encoder) {
            (SeqInput::Frames(frames), Some(enc)) => {
                let caches = frames
                    .iter()
                    .map(|f| enc.forward_cached(f))
                    .collect::<Result<Vec<_>>>()?;
                Ok((caches.iter().map(|c| c.embedding.clone()).collect(), caches))
            }
            (SeqInput::Embeddings(rows), None) => {
                if let Some(r) = rows.iter().find(|r| r.len() != self.lstm.input_dim()) {
                    return Err(Error::Dimension(format!(
                        "embedding of width {} for a model expecting {}",
                        r.len(),
                        self.lstm.input_dim()
                    )));
                }
                Ok((rows.clone(), Vec::new()))
            }
            (SeqInput::Frames(_), None) => Err(Error::Dimension(
                "model has no frame encoder; it expects embedding sequences".into(),
            )),
            (SeqInput::Embeddings(_), Some(_)) => Err(Error::Dimension(
                "model has a frame encoder; it expects spectrogram frames".into(),
            )),
        }
    }

    fn run(&self, input: &SeqInput) -> Result<Forward> {
        let (xs, encoder_caches) = self.embed(input)?;
        Ok(Forward {
            encoder_caches,
            trace: self.lstm.forward(&xs),
        })
    }

    /// Per-frame class posteriors and the final hidden state.
    pub fn posteriors(&self, input: &SeqInput) -> Result<(ctc::PosteriorMatrix, Array1<f64>)> {
        let fwd = self.run(input)?;
        let y = classify_frames(&self.head, &fwd.trace.hidden_states);
        Ok((y, fwd.trace.final_state.hidden))
    }

    fn frame_logits(&self, hs: &[Array1<f64>]) -> Array2<f64> {
        let mut logits = Array2::zeros((hs.len(), self.head.classes()));
        for (mut row, h) in logits.axis_iter_mut(Axis(0)).zip(hs) {
            row.assign(&self.head.logits(h));
        }
        logits
    }

    fn check_target(&self, target: &Target, frames: usize) -> Result<()> {
        match (target, self.loss_mode) {
            (Target::Framewise(labels), LossMode::FramewiseCe) => {
                if labels.len() != frames {
                    return Err(Error::Dimension(format!(
                        "{} frame labels for {frames} frames",
                        labels.len()
                    )));
                }
                if let Some(&bad) = labels.iter().find(|&&l| l >= self.emotions) {
                    return Err(Error::InvalidLabel(format!("class {bad} out of range")));
                }
                Ok(())
            }
            (Target::Ctc(labels), LossMode::Ctc) => {
                if let Some(&bad) = labels.iter().find(|&&l| l >= self.emotions) {
                    return Err(Error::InvalidLabel(format!("emotion {bad} out of range")));
                }
                Ok(())
            }
            _ => Err(Error::Validation(format!(
                "target kind does not match {} model",
                self.loss_mode.name()
            ))),
        }
    }

    /// Loss value and gradient for every parameter.
    pub fn backward(&self, input: &SeqInput, objective: &Objective) -> Result<Backward> {
        let fwd = self.run(input)?;
        let hs = &fwd.trace.hidden_states;
        let frames = hs.len();
        let hidden = self.hidden();
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        let mut d_hidden = vec![Array1::<f64>::zeros(hidden); frames];

        if let Some(target) = objective.target {
            self.check_target(target, frames)?;
            let logits = self.frame_logits(hs);
            let d_logits = match target {
                Target::Framewise(labels) => {
                    let log_y = log_softmax_rows(logits.view());
                    let scale = 1.0 / frames as f64;
                    let mut d = log_y.mapv(|v| v.exp() * scale);
                    for (t, &k) in labels.iter().enumerate() {
                        loss -= log_y[[t, k]] * scale;
                        d[[t, k]] -= scale;
                    }
                    d
                }
                Target::Ctc(label) => {
                    let (l, d) = ctc::ctc_loss_and_grad(logits.view(), label, self.emotions)?;
                    loss += l;
                    d
                }
            };
            for (t, d) in d_logits.axis_iter(Axis(0)).enumerate() {
                let d = d.to_owned();
                grads.head.class_weight.scaled_add(1.0, &outer(&d, &hs[t]));
                grads.head.class_bias += &d;
                d_hidden[t] += &self.head.class_weight.t().dot(&d);
            }
        }

        let last = &hs[frames - 1];
        if let Some(r) = objective.regression {
            let out = self.head.regress(last);
            let err = [out[0] - r.arousal, out[1] - r.valence];
            loss += r.weight * (err[0] * err[0] + err[1] * err[1]);
            let d = Array1::from(vec![2.0 * r.weight * err[0], 2.0 * r.weight * err[1]]);
            grads.head.regression_weight.scaled_add(1.0, &outer(&d, last));
            grads.head.regression_bias += &d;
            d_hidden[frames - 1] += &self.head.regression_weight.t().dot(&d);
        }
        if let Some(up) = objective.upstream {
            if up.len() != hidden {
                return Err(Error::Dimension(format!(
                    "upstream gradient width {} != hidden {hidden}",
                    up.len()
                )));
            }
            loss += up.dot(last);
            d_hidden[frames - 1] += up;
        }

        let dxs = self.lstm.backward(&fwd.trace, &d_hidden, &mut grads.lstm);
        if let (Some(enc), Some(enc_grads)) = (&self.encoder, grads.encoder.as_mut()) {
            for (cache, dx) in fwd.encoder_caches.iter().zip(&dxs) {
                enc.backward(cache, dx, enc_grads);
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss is {loss}")));
        }
        Ok(Backward {
            loss,
            grads,
            embedding: fwd.trace.final_state.hidden,
        })
    }

    /// Loss only; same value as [`SeqModel::backward`] reports.
    pub fn loss(&self, input: &SeqInput, objective: &Objective) -> Result<f64> {
        let fwd = self.run(input)?;
        let hs = &fwd.trace.hidden_states;
        let mut loss = 0.0;
        if let Some(target) = objective.target {
            self.check_target(target, hs.len())?;
            let logits = self.frame_logits(hs);
            loss += match target {
                Target::Framewise(labels) => {
                    let log_y = log_softmax_rows(logits.view());
                    -labels.iter().enumerate().map(|(t, &k)| log_y[[t, k]]).sum::<f64>() / hs.len() as f64
                }
                Target::Ctc(label) => ctc::ctc_loss_and_grad(logits.view(), label, self.emotions)?.0,
            };
        }
        let last = &hs[hs.len() - 1];
        if let Some(r) = objective.regression {
            let out = self.head.regress(last);
            loss += r.weight * ((out[0] - r.arousal).powi(2) + (out[1] - r.valence).powi(2));
        }
        if let Some(up) = objective.upstream {
            loss += up.dot(last);
        }
        Ok(loss)
    }

    /// Training target for an interval whose frames all carry `class`.
    pub fn target_for(&self, class: usize, frames: usize) -> Target {
        match self.loss_mode {
            LossMode::FramewiseCe => Target::Framewise(vec![class; frames]),
            LossMode::Ctc => Target::Ctc(vec![class]),
        }
    }
}

impl ParamSet for SeqModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.as_ref().map(ParamSet::tensors).unwrap_or_default();
        out.extend(self.lstm.tensors());
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.as_mut().map(ParamSet::tensors_mut).unwrap_or_default();
        out.extend(self.lstm.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalPrediction {
    /// Distribution over the emotions (no blank).
    pub class_probs: Vec<f64>,
    /// Final LSTM hidden state.
    pub embedding: Array1<f64>,
}

/// Interval-level class distribution and embedding.
///
/// Framewise models average the per-frame softmax rows. CTC models score
/// each emotion by the probability of its single-symbol labeling and
/// normalize over emotions.
pub fn predict_interval(model: &SeqModel, input: &SeqInput) -> Result<IntervalPrediction> {
    let (y, embedding) = model.posteriors(input)?;
    let class_probs = match model.blank() {
        None => y.probs().mean_axis(Axis(0)).expect("nonempty").to_vec(),
        Some(blank) => {
            let scores: Vec<f64> = ctc::single_symbol_probabilities(&y, blank)
                .into_iter()
                .map(|(_, p)| p)
                .collect();
            let total: f64 = scores.iter().sum();
            if total > 0.0 {
                scores.iter().map(|p| p / total).collect()
            } else {
                vec![1.0 / model.emotions as f64; model.emotions]
            }
        }
    };
    Ok(IntervalPrediction { class_probs, embedding })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the arousal/valence squared error when targets are present.
    pub regression_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_mode: LossMode::FramewiseCe,
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            regression_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Validation(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: SeqInput,
    pub class: usize,
    /// `(arousal, valence)`
    pub regression: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SeqModel,
    /// Mean example loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Initializes a model from `config.seed` and trains it with [`fit`].
pub fn train(shape: &ModelShape, config: &TrainConfig, data: &[Example]) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shape = ModelShape {
        loss_mode: config.loss_mode,
        ..*shape
    };
    let model = SeqModel::new(&shape, &mut rng)?;
    fit(model, config, data, &mut rng)
}

/// Mini-batch SGD with a fixed learning rate.
///
/// Example order is reshuffled every epoch by `rng`. Gradients within a batch
/// are summed in ascending position order and averaged.
pub fn fit(mut model: SeqModel, config: &TrainConfig, data: &[Example], rng: &mut ChaCha8Rng) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    if let Some(bad) = data.iter().find(|e| e.class >= model.emotions) {
        return Err(Error::InvalidLabel(format!("class {} out of range", bad.class)));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc = model.zeros_like();
            for &i in batch {
                let ex = &data[i];
                let target = model.target_for(ex.class, ex.input.len());
                let objective = Objective {
                    target: Some(&target),
                    regression: ex.regression.map(|(a, v)| RegressionTarget {
                        arousal: a,
                        valence: v,
                        weight: config.regression_weight,
                    }),
                    upstream: None,
                };
                let b = model.backward(&ex.input, &objective)?;
                epoch_loss += b.loss;
                acc.add_scaled(&b.grads, 1.0);
            }
            model.add_scaled(&acc, -config.learning_rate / batch.len() as f64);
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("parameters diverged during training".into()));
        }
        loss_trace.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainOutcome { model, loss_trace })
}
