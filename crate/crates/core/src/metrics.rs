//! Utterance-level evaluation metrics.

use serde::Serialize;

use crate::{Error, Result};

/// Square count matrix, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("confusion matrix must be square".into()));
        }
        Ok(Self {
            classes: n,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Dimension(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::InvalidLabel(format!(
                "pair ({truth}, {predicted}) outside {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    fn support(&self, k: usize) -> u64 {
        (0..self.classes).map(|p| self.get(k, p)).sum()
    }

    fn predicted(&self, k: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, k)).sum()
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            Err(Error::EmptyInput("confusion matrix has no entries".into()))
        } else {
            Ok(())
        }
    }
}

/// Mean per-class recall over classes with at least one true example.
pub fn unweighted_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    cm.check_nonempty()?;
    let recalls: Vec<f64> = (0..cm.classes())
        .filter_map(|k| {
            let support = cm.support(k);
            (support > 0).then(|| cm.get(k, k) as f64 / support as f64)
        })
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Mean per-class F1 over classes that occur in the truth or the predictions.
///
/// A class with no true positives scores 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.check_nonempty()?;
    let scores: Vec<f64> = (0..cm.classes())
        .filter(|&k| cm.support(k) > 0 || cm.predicted(k) > 0)
        .map(|k| {
            let tp = cm.get(k, k) as f64;
            if tp == 0.0 {
                return 0.0;
            }
            // 2·P·R / (P + R) == 2·TP / (support + predicted)
            2.0 * tp / (cm.support(k) + cm.predicted(k)) as f64
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no values for MSE".into()));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predictions.len() as f64)
}

/// The JSON metrics report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub unweighted_accuracy: f64,
    pub macro_f1: f64,
    pub mse_arousal: f64,
    pub mse_valence: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn compute(cm: &ConfusionMatrix, arousal: (&[f64], &[f64]), valence: (&[f64], &[f64])) -> Result<Self> {
        Ok(Self {
            unweighted_accuracy: unweighted_accuracy(cm)?,
            macro_f1: macro_f1(cm)?,
            mse_arousal: mse(arousal.0, arousal.1)?,
            mse_valence: mse(valence.0, valence.1)?,
            confusion: cm.rows(),
        })
    }
}
