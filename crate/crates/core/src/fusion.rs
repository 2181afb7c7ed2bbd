//! Decision-level fusion of per-modality interval embeddings.
//!
//! Each modality branch is a [`SeqModel`]; its final LSTM hidden state over
//! an interval is that modality's embedding. Embeddings are concatenated in
//! slot order (absent modalities contribute zeros) and passed through one
//! dense softmax layer for the emotion class and a parallel dense layer for
//! arousal and valence. Utterance predictions average interval outputs.

use ndarray::{s, Array1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctc::argmax;
use crate::model::{HeadParams, Objective, ParamSet, SeqInput, SeqModel};
use crate::{Error, Result};

pub const AROUSAL_RANGE: (f64, f64) = (0.0, 1.0);
pub const VALENCE_RANGE: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalitySlot {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityEmbedding {
    pub modality: String,
    pub vector: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedOutput {
    pub class_probs: Vec<f64>,
    pub arousal: f64,
    pub valence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePrediction {
    pub class_probs: Vec<f64>,
    pub predicted_class: usize,
    pub arousal: f64,
    pub valence: f64,
}

/// Concatenates embeddings in slot order, zero-filling absent modalities.
pub fn concat_embeddings(slots: &[ModalitySlot], embeddings: &[ModalityEmbedding]) -> Result<Array1<f64>> {
    for e in embeddings {
        let Some(slot) = slots.iter().find(|s| s.name == e.modality) else {
            return Err(Error::Dimension(format!(
                "no fusion slot for modality {:?}",
                e.modality
            )));
        };
        if slot.dim != e.vector.len() {
            return Err(Error::Dimension(format!(
                "modality {:?} embedding has width {}, slot expects {}",
                e.modality,
                e.vector.len(),
                slot.dim
            )));
        }
    }
    let total: usize = slots.iter().map(|s| s.dim).sum();
    let mut z = Array1::zeros(total);
    let mut offset = 0;
    for slot in slots {
        if let Some(e) = embeddings.iter().find(|e| e.modality == slot.name) {
            z.slice_mut(s![offset..offset + slot.dim]).assign(&e.vector);
        }
        offset += slot.dim;
    }
    Ok(z)
}

fn softmax(logits: &Array1<f64>) -> Vec<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn apply_head(z: &Array1<f64>, head: &HeadParams) -> FusedOutput {
    let r = head.regress(z);
    FusedOutput {
        class_probs: softmax(&head.logits(z)),
        arousal: r[0].clamp(AROUSAL_RANGE.0, AROUSAL_RANGE.1),
        valence: r[1].clamp(VALENCE_RANGE.0, VALENCE_RANGE.1),
    }
}

/// Class distribution and clamped arousal/valence for one interval.
pub fn fuse(slots: &[ModalitySlot], embeddings: &[ModalityEmbedding], head: &HeadParams) -> Result<FusedOutput> {
    let z = concat_embeddings(slots, embeddings)?;
    if z.len() != head.input_dim() {
        return Err(Error::Dimension(format!(
            "fused width {} != head input {}",
            z.len(),
            head.input_dim()
        )));
    }
    Ok(apply_head(&z, head))
}

/// Averages interval outputs; the class is the argmax of the mean (ties to
/// the lowest index).
pub fn aggregate_utterance(outputs: &[FusedOutput]) -> Result<UtterancePrediction> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::EmptyInput("utterance has no intervals".into()))?;
    let n = outputs.len() as f64;
    let classes = first.class_probs.len();
    if outputs.iter().any(|o| o.class_probs.len() != classes) {
        return Err(Error::Dimension("interval class vectors differ in length".into()));
    }
    let class_probs: Vec<f64> = (0..classes)
        .map(|k| outputs.iter().map(|o| o.class_probs[k]).sum::<f64>() / n)
        .collect();
    Ok(UtterancePrediction {
        predicted_class: argmax(class_probs.iter().copied()),
        class_probs,
        arousal: outputs.iter().map(|o| o.arousal).sum::<f64>() / n,
        valence: outputs.iter().map(|o| o.valence).sum::<f64>() / n,
    })
}

/// Modality branches plus the shared fusion head.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub slots: Vec<ModalitySlot>,
    pub branches: Vec<SeqModel>,
    pub head: HeadParams,
}

impl FusionModel {
    pub fn new(branches: Vec<(String, SeqModel)>, rng: &mut ChaCha8Rng) -> Result<Self> {
        let emotions = match branches.first() {
            Some((_, m)) => m.emotions,
            None => return Err(Error::EmptyInput("fusion needs at least one modality".into())),
        };
        if branches.iter().any(|(_, m)| m.emotions != emotions) {
            return Err(Error::Validation("branches disagree on the emotion count".into()));
        }
        let slots: Vec<ModalitySlot> = branches
            .iter()
            .map(|(name, m)| ModalitySlot {
                name: name.clone(),
                dim: m.hidden(),
            })
            .collect();
        let input: usize = slots.iter().map(|s| s.dim).sum();
        Ok(Self {
            head: HeadParams::new(input, emotions, rng),
            slots,
            branches: branches.into_iter().map(|(_, m)| m).collect(),
        })
    }

    pub fn emotions(&self) -> usize {
        self.head.classes()
    }

    fn check_inputs(&self, inputs: &[Option<SeqInput>]) -> Result<()> {
        if inputs.len() != self.slots.len() {
            return Err(Error::Dimension(format!(
                "{} modality inputs for {} slots",
                inputs.len(),
                self.slots.len()
            )));
        }
        Ok(())
    }

    pub fn interval_embeddings(&self, inputs: &[Option<SeqInput>]) -> Result<Vec<ModalityEmbedding>> {
        self.check_inputs(inputs)?;
        let mut out = Vec::new();
        for ((slot, branch), input) in self.slots.iter().zip(&self.branches).zip(inputs) {
            if let Some(input) = input {
                let (_, h) = branch.posteriors(input)?;
                out.push(ModalityEmbedding {
                    modality: slot.name.clone(),
                    vector: h,
                });
            }
        }
        Ok(out)
    }

    pub fn predict_interval(&self, inputs: &[Option<SeqInput>]) -> Result<FusedOutput> {
        fuse(&self.slots, &self.interval_embeddings(inputs)?, &self.head)
    }

    pub fn predict_utterance(&self, intervals: &[Vec<Option<SeqInput>>]) -> Result<UtterancePrediction> {
        let outs = intervals
            .iter()
            .map(|iv| self.predict_interval(iv))
            .collect::<Result<Vec<_>>>()?;
        aggregate_utterance(&outs)
    }
}

impl ParamSet for FusionModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.branches.iter().flat_map(ParamSet::tensors).collect();
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.branches.iter_mut().flat_map(ParamSet::tensors_mut).collect();
        out.extend(self.head.tensors_mut());
        out
    }
}

/// One interval with a sequence per modality slot (`None` = absent).
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalExample {
    pub inputs: Vec<Option<SeqInput>>,
    pub class: usize,
    pub arousal: f64,
    pub valence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// λ in `CE + λ·(SE_arousal + SE_valence)`.
    pub regression_weight: f64,
    /// Backpropagate into the modality branches as well as the head.
    pub joint: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            regression_weight: 1.0,
            joint: false,
        }
    }
}

/// Joint loss of one example and its gradient for every parameter of the
/// model. Branch gradients are zero unless `joint` is set.
pub fn fusion_loss_and_grad(
    model: &FusionModel,
    example: &MultimodalExample,
    regression_weight: f64,
    joint: bool,
) -> Result<(f64, FusionModel)> {
    model.check_inputs(&example.inputs)?;
    if example.class >= model.emotions() {
        return Err(Error::Validation(format!(
            "class {} out of range for {} emotions",
            example.class,
            model.emotions()
        )));
    }
    let embeddings = model.interval_embeddings(&example.inputs)?;
    let z = concat_embeddings(&model.slots, &embeddings)?;
    let head = &model.head;
    let probs = softmax(&head.logits(&z));
    let r = head.regress(&z);
    let err = [r[0] - example.arousal, r[1] - example.valence];
    let loss = -probs[example.class].ln() + regression_weight * (err[0] * err[0] + err[1] * err[1]);

    let mut grads = model.zeros_like();
    let mut d_logits = Array1::from(probs);
    d_logits[example.class] -= 1.0;
    let d_reg = Array1::from(vec![2.0 * regression_weight * err[0], 2.0 * regression_weight * err[1]]);
    for (k, &d) in d_logits.iter().enumerate() {
        grads.head.class_weight.row_mut(k).scaled_add(d, &z);
        grads.head.class_bias[k] += d;
    }
    for (k, &d) in d_reg.iter().enumerate() {
        grads.head.regression_weight.row_mut(k).scaled_add(d, &z);
        grads.head.regression_bias[k] += d;
    }

    if joint {
        let dz = head.class_weight.t().dot(&d_logits) + head.regression_weight.t().dot(&d_reg);
        let mut offset = 0;
        for (i, (slot, input)) in model.slots.iter().zip(&example.inputs).enumerate() {
            if let Some(input) = input {
                let up = dz.slice(s![offset..offset + slot.dim]).to_owned();
                let b = model.branches[i].backward(
                    input,
                    &Objective {
                        upstream: Some(&up),
                        ..Default::default()
                    },
                )?;
                grads.branches[i] = b.grads;
            }
            offset += slot.dim;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("fusion loss is {loss}")));
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub model: FusionModel,
    pub loss_trace: Vec<f64>,
}

/// Mini-batch SGD on the fusion head (and the branches when `joint`).
pub fn train_fusion(
    mut model: FusionModel,
    config: &FusionConfig,
    data: &[MultimodalExample],
) -> Result<FusionOutcome> {
    if !(config.learning_rate >= 0.0) || config.batch_size == 0 {
        return Err(Error::Validation(
            "learning rate must be >= 0 and batch size > 0".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("fusion training set is empty".into()));
    }
    if let Some(bad) = data.iter().find(|e| e.class >= model.emotions()) {
        return Err(Error::Validation(format!("class {} out of range", bad.class)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc = model.zeros_like();
            for &i in batch {
                let (loss, g) = fusion_loss_and_grad(&model, &data[i], config.regression_weight, config.joint)?;
                epoch_loss += loss;
                acc.add_scaled(&g, 1.0);
            }
            model.add_scaled(&acc, -config.learning_rate / batch.len() as f64);
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("fusion parameters diverged".into()));
        }
        loss_trace.push(epoch_loss / data.len() as f64);
    }
    Ok(FusionOutcome { model, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LossMode, ModelShape};
    use ndarray::array;
    use rand::Rng;

    fn slots() -> Vec<ModalitySlot> {
        vec![
            ModalitySlot {
                name: "audio".into(),
                dim: 3,
            },
            ModalitySlot {
                name: "face".into(),
                dim: 3,
            },
        ]
    }

    fn emb(name: &str, v: Array1<f64>) -> ModalityEmbedding {
        ModalityEmbedding {
            modality: name.into(),
            vector: v,
        }
    }

    #[test]
    fn zero_head() {
        let head = HeadParams::zeros(6, 7);
        let out = fuse(&slots(), &[emb("audio", array![1.0, 2.0, 3.0])], &head).unwrap();
        assert!(out.class_probs.iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
        assert_eq!((out.arousal, out.valence), (0.0, 0.0));
    }

    // Hand-set fixture: logits = W·[a; f] + b with
    //   a = (1, 0, -1), f = (0.5, 0.5, 0)
    //   W row 0 = (1, 0, 0, 0, 0, 0), row 1 = (0, 0, 0, 2, 0, 0), b = (0, 0.5)
    //   logits = (1, 1.5) → softmax = (1/(1+e^0.5), e^0.5/(1+e^0.5))
    //   regression rows (0.5,0,0,0,0,0) and (0,0,0,0,0,-4), bias (0.1, 0.2)
    //   → arousal 0.6, valence 0.2
    #[test]
    fn hand_computed_fixture() {
        let mut head = HeadParams::zeros(6, 2);
        head.class_weight[[0, 0]] = 1.0;
        head.class_weight[[1, 3]] = 2.0;
        head.class_bias = array![0.0, 0.5];
        head.regression_weight[[0, 0]] = 0.5;
        head.regression_weight[[1, 5]] = -4.0;
        head.regression_bias = array![0.1, 0.2];
        let out = fuse(
            &slots(),
            &[emb("audio", array![1.0, 0.0, -1.0]), emb("face", array![0.5, 0.5, 0.0])],
            &head,
        )
        .unwrap();
        let e = 0.5f64.exp();
        assert!((out.class_probs[0] - 1.0 / (1.0 + e)).abs() < 1e-9);
        assert!((out.class_probs[1] - e / (1.0 + e)).abs() < 1e-9);
        assert!((out.arousal - 0.6).abs() < 1e-12);
        assert!((out.valence - 0.2).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let head = HeadParams::zeros(6, 7);
        assert!(fuse(&slots(), &[emb("audio", array![1.0])], &head).is_err());
        assert!(fuse(&slots(), &[emb("body", array![1.0, 2.0, 3.0])], &head).is_err());
        assert!(fuse(&slots(), &[], &HeadParams::zeros(5, 7)).is_err());
    }

    #[test]
    fn single_modality_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let head = HeadParams::new(6, 4, &mut rng);
            let a = Array1::from_shape_simple_fn(3, || rng.gen_range(-2.0..2.0));
            let fused = fuse(&slots(), &[emb("audio", a.clone())], &head).unwrap();
            let sub = HeadParams {
                class_weight: head.class_weight.slice(s![.., 0..3]).to_owned(),
                class_bias: head.class_bias.clone(),
                regression_weight: head.regression_weight.slice(s![.., 0..3]).to_owned(),
                regression_bias: head.regression_bias.clone(),
            };
            let alone = fuse(&[slots()[0].clone()], &[emb("audio", a)], &sub).unwrap();
            for (x, y) in fused.class_probs.iter().zip(&alone.class_probs) {
                assert!((x - y).abs() < 1e-12);
            }
            let sum: f64 = fused.class_probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9 && fused.class_probs.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn clamping() {
        let mut head = HeadParams::zeros(6, 2);
        head.regression_bias = array![5.0, -9.0];
        let out = fuse(&slots(), &[], &head).unwrap();
        assert_eq!((out.arousal, out.valence), (1.0, -1.0));
        head.regression_bias = array![-5.0, 9.0];
        let out = fuse(&slots(), &[], &head).unwrap();
        assert_eq!((out.arousal, out.valence), (0.0, 1.0));
    }

    fn fo(p: &[f64], a: f64, v: f64) -> FusedOutput {
        FusedOutput {
            class_probs: p.to_vec(),
            arousal: a,
            valence: v,
        }
    }

    #[test]
    fn aggregation() {
        let one = aggregate_utterance(&[fo(&[0.2, 0.8], 0.3, -0.1)]).unwrap();
        assert_eq!(one.class_probs, vec![0.2, 0.8]);
        assert_eq!((one.predicted_class, one.arousal, one.valence), (1, 0.3, -0.1));

        let a = fo(&[0.6, 0.4], 0.2, 0.0);
        let b = fo(&[0.45, 0.55], 0.4, 0.5);
        let p = aggregate_utterance(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.predicted_class, 0);
        assert!((p.class_probs[0] - 0.525).abs() < 1e-15);
        assert!((p.arousal - 0.3).abs() < 1e-15);
        assert_eq!(aggregate_utterance(&[b, a]).unwrap(), p);
        assert!(matches!(aggregate_utterance(&[]), Err(Error::EmptyInput(_))));
        let tie = aggregate_utterance(&[fo(&[0.5, 0.5], 0.0, 0.0)]).unwrap();
        assert_eq!(tie.predicted_class, 0);
    }

    fn tiny_model(rng: &mut ChaCha8Rng) -> FusionModel {
        let shape = ModelShape {
            emotions: 3,
            encoder: None,
            input_dim: 2,
            hidden: 3,
            loss_mode: LossMode::FramewiseCe,
        };
        let a = SeqModel::new(&shape, rng).unwrap();
        let b = SeqModel::new(&ModelShape { hidden: 2, ..shape }, rng).unwrap();
        FusionModel::new(vec![("a".into(), a), ("b".into(), b)], rng).unwrap()
    }

    fn seq(rng: &mut ChaCha8Rng, t: usize) -> SeqInput {
        SeqInput::Embeddings(
            (0..t)
                .map(|_| Array1::from_shape_simple_fn(2, || rng.gen_range(-1.0..1.0)))
                .collect(),
        )
    }

    #[test]
    fn lambda_zero_leaves_regression_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = tiny_model(&mut rng);
        let ex = MultimodalExample {
            inputs: vec![Some(seq(&mut rng, 3)), Some(seq(&mut rng, 3))],
            class: 1,
            arousal: 0.9,
            valence: -0.8,
        };
        let (_, g) = fusion_loss_and_grad(&model, &ex, 0.0, true).unwrap();
        assert!(g.head.regression_weight.iter().all(|&v| v == 0.0));
        assert!(g.head.regression_bias.iter().all(|&v| v == 0.0));
        let bad = MultimodalExample { class: 3, ..ex };
        assert!(matches!(
            fusion_loss_and_grad(&model, &bad, 1.0, false),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn frozen_branches_get_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = tiny_model(&mut rng);
        let ex = MultimodalExample {
            inputs: vec![Some(seq(&mut rng, 3)), None],
            class: 0,
            arousal: 0.5,
            valence: 0.0,
        };
        let (_, g) = fusion_loss_and_grad(&model, &ex, 1.0, false).unwrap();
        assert!(g.branches.iter().all(|b| b.flat().iter().all(|&v| v == 0.0)));
        let (_, g) = fusion_loss_and_grad(&model, &ex, 1.0, true).unwrap();
        assert!(g.branches[0].flat().iter().any(|&v| v != 0.0));
        assert!(g.branches[1].flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_difference_on_tiny_fixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = tiny_model(&mut rng);
        let ex = MultimodalExample {
            inputs: vec![Some(seq(&mut rng, 4)), Some(seq(&mut rng, 2))],
            class: 2,
            arousal: 0.7,
            valence: -0.3,
        };
        let (_, g) = fusion_loss_and_grad(&model, &ex, 0.5, true).unwrap();
        let base = model.flat();
        let analytic = g.flat();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut m = model.clone();
            let mut p = base.clone();
            p[i] += h;
            m.set_flat(&p);
            let up = fusion_loss_and_grad(&m, &ex, 0.5, true).unwrap().0;
            p[i] -= 2.0 * h;
            m.set_flat(&p);
            let down = fusion_loss_and_grad(&m, &ex, 0.5, true).unwrap().0;
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic[i] - numeric).abs() / denom < 1e-4,
                "param {i}: {} vs {numeric}",
                analytic[i]
            );
        }
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = tiny_model(&mut rng);
        let data: Vec<MultimodalExample> = (0..12)
            .map(|i| MultimodalExample {
                inputs: vec![Some(seq(&mut rng, 3)), Some(seq(&mut rng, 3))],
                class: i % 3,
                arousal: 0.5,
                valence: 0.0,
            })
            .collect();
        let cfg = FusionConfig {
            epochs: 30,
            joint: true,
            ..Default::default()
        };
        let out = train_fusion(model, &cfg, &data).unwrap();
        assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0]);
    }
}
