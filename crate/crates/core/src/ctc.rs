//! Connectionist temporal classification over per-frame posteriors.
//!
//! A posterior matrix `y` is `T × N` with `y[[t, i]]` the probability that
//! frame `t` carries class `i`; one class index is the blank. A path is one
//! class per frame; collapsing a path merges adjacent repeats and then drops
//! blanks. The probability of a label sequence is the total probability of
//! every path that collapses to it.
//!
//! Two evaluators are provided: [`label_probability_bruteforce`] enumerates
//! paths (small `T` only, used as an oracle) and
//! [`label_probability_forward`] runs the log-space forward recursion over
//! the blank-interleaved label.

use ndarray::{Array2, ArrayView2, Axis};

use crate::{Error, Result};

/// Largest `T` accepted by the enumeration oracle.
pub const MAX_ENUM_FRAMES: usize = 12;
/// Upper bound on `N^T` paths visited by the enumeration oracle.
pub const MAX_ENUM_PATHS: u64 = 1 << 24;

const ROW_SUM_TOL: f64 = 1e-9;

/// Symbol names with one distinguished blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<String>,
    blank: usize,
}

impl Alphabet {
    pub fn new(symbols: Vec<String>, blank: usize) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::Validation(
                "alphabet needs at least one symbol plus blank".into(),
            ));
        }
        if blank >= symbols.len() {
            return Err(Error::Validation(format!("blank index {blank} out of range")));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::Validation(format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Self { symbols, blank })
    }

    /// Emotion names followed by a trailing blank `"-"`.
    pub fn with_trailing_blank<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut symbols: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        symbols.push("-".into());
        let blank = symbols.len() - 1;
        Self::new(symbols, blank)
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, i: usize) -> &str {
        &self.symbols[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == name)
    }

    pub fn render(&self, seq: &[usize]) -> String {
        seq.iter().map(|&i| self.symbol(i)).collect::<Vec<_>>().join(" ")
    }
}

/// Validated `T × N` matrix of per-frame class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    probs: Array2<f64>,
}

impl PosteriorMatrix {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        if probs.ncols() < 2 {
            return Err(Error::Dimension("posterior matrix needs at least 2 classes".into()));
        }
        for (t, row) in probs.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Validation(format!("row {t} has entries outside [0, 1]")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!("row {t} sums to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    /// Row-wise softmax of unnormalized scores.
    pub fn from_logits(logits: ArrayView2<f64>) -> Self {
        Self {
            probs: log_softmax_rows(logits).mapv(f64::exp),
        }
    }

    pub fn frames(&self) -> usize {
        self.probs.nrows()
    }

    pub fn classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.probs[[t, i]]
    }
}

pub(crate) fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Product of the posteriors selected by `path`, one per frame.
pub fn path_probability(y: &PosteriorMatrix, path: &[usize]) -> Result<f64> {
    if path.len() != y.frames() {
        return Err(Error::Dimension(format!(
            "path length {} != frame count {}",
            path.len(),
            y.frames()
        )));
    }
    if let Some(&bad) = path.iter().find(|&&i| i >= y.classes()) {
        return Err(Error::InvalidLabel(format!("class {bad} out of range")));
    }
    let log_p: f64 = path.iter().enumerate().map(|(t, &i)| y.get(t, i).ln()).sum();
    Ok(log_p.exp())
}

/// Merges adjacent repeats, then removes blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if prev != Some(s) && s != blank {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Fewest frames able to emit `label`: one per symbol plus one blank between
/// each pair of equal neighbours.
pub fn min_frames(label: &[usize]) -> usize {
    label.len() + label.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_label(label: &[usize], classes: usize, blank: usize) -> Result<()> {
    if blank >= classes {
        return Err(Error::InvalidLabel(format!(
            "blank {blank} out of range for {classes} classes"
        )));
    }
    for &s in label {
        if s == blank {
            return Err(Error::InvalidLabel("label sequence contains the blank".into()));
        }
        if s >= classes {
            return Err(Error::InvalidLabel(format!(
                "symbol {s} out of range for {classes} classes"
            )));
        }
    }
    Ok(())
}

/// Every length-`frames` path over `classes` symbols that collapses to
/// `label`, found by filtering the full enumeration. Oracle use only.
pub fn expand_labelings(label: &[usize], frames: usize, classes: usize, blank: usize) -> Result<Vec<Vec<usize>>> {
    check_label(label, classes, blank)?;
    if frames == 0 {
        return Err(Error::Validation("path length must be at least 1".into()));
    }
    if frames > MAX_ENUM_FRAMES {
        return Err(Error::TooLarge(format!(
            "T = {frames} exceeds the enumeration limit of {MAX_ENUM_FRAMES}"
        )));
    }
    let total = (classes as u64)
        .checked_pow(frames as u32)
        .filter(|&n| n <= MAX_ENUM_PATHS)
        .ok_or_else(|| Error::TooLarge(format!("{classes}^{frames} paths")))?;
    let mut found = Vec::new();
    let mut path = vec![0usize; frames];
    for _ in 0..total {
        if collapse(&path, blank) == label {
            found.push(path.clone());
        }
        // odometer increment, last frame fastest
        for digit in path.iter_mut().rev() {
            *digit += 1;
            if *digit < classes {
                break;
            }
            *digit = 0;
        }
    }
    Ok(found)
}

/// Sum of path probabilities over the enumerated expansion set.
pub fn label_probability_bruteforce(y: &PosteriorMatrix, label: &[usize], blank: usize) -> Result<f64> {
    expand_labelings(label, y.frames(), y.classes(), blank)?
        .iter()
        .map(|p| path_probability(y, p))
        .sum()
}

/// Result of the forward recursion.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub probability: f64,
    pub log_probability: f64,
    /// `T × (2|L| + 1)` log forward variables over the blank-interleaved label.
    pub log_alpha: Array2<f64>,
}

fn extended_label(label: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * label.len() + 1);
    ext.push(blank);
    for &s in label {
        ext.push(s);
        ext.push(blank);
    }
    ext
}

fn forward_lattice(log_y: ArrayView2<f64>, ext: &[usize], blank: usize) -> Array2<f64> {
    let (frames, width) = (log_y.nrows(), ext.len());
    let mut alpha = Array2::from_elem((frames, width), f64::NEG_INFINITY);
    alpha[[0, 0]] = log_y[[0, ext[0]]];
    if width > 1 {
        alpha[[0, 1]] = log_y[[0, ext[1]]];
    }
    for t in 1..frames {
        for s in 0..width {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_sum_exp(acc, alpha[[t - 1, s - 1]]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_sum_exp(acc, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = acc + log_y[[t, ext[s]]];
        }
    }
    alpha
}

// beta[t][s]: log probability of finishing the label from state s at frame t,
// counting emissions of frames t+1.. only.
fn backward_lattice(log_y: ArrayView2<f64>, ext: &[usize], blank: usize) -> Array2<f64> {
    let (frames, width) = (log_y.nrows(), ext.len());
    let mut beta = Array2::from_elem((frames, width), f64::NEG_INFINITY);
    beta[[frames - 1, width - 1]] = 0.0;
    if width > 1 {
        beta[[frames - 1, width - 2]] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..width {
            let mut acc = beta[[t + 1, s]] + log_y[[t + 1, ext[s]]];
            if s + 1 < width {
                acc = log_sum_exp(acc, beta[[t + 1, s + 1]] + log_y[[t + 1, ext[s + 1]]]);
            }
            if s + 2 < width && ext[s + 2] != blank && ext[s + 2] != ext[s] {
                acc = log_sum_exp(acc, beta[[t + 1, s + 2]] + log_y[[t + 1, ext[s + 2]]]);
            }
            beta[[t, s]] = acc;
        }
    }
    beta
}

fn final_log_prob(alpha: &Array2<f64>) -> f64 {
    let (t, w) = (alpha.nrows() - 1, alpha.ncols());
    let last = alpha[[t, w - 1]];
    if w > 1 {
        log_sum_exp(last, alpha[[t, w - 2]])
    } else {
        last
    }
}

fn forward_from_log(log_y: ArrayView2<f64>, label: &[usize], blank: usize) -> Result<ForwardPass> {
    check_label(label, log_y.ncols(), blank)?;
    if log_y.nrows() == 0 {
        return Err(Error::EmptyInput("posterior matrix has no frames".into()));
    }
    let ext = extended_label(label, blank);
    let log_alpha = forward_lattice(log_y, &ext, blank);
    let log_probability = final_log_prob(&log_alpha);
    Ok(ForwardPass {
        probability: log_probability.exp(),
        log_probability,
        log_alpha,
    })
}

/// `P(label | y)` by the log-space forward recursion.
pub fn label_probability_forward(y: &PosteriorMatrix, label: &[usize], blank: usize) -> Result<ForwardPass> {
    forward_from_log(y.probs().mapv(f64::ln).view(), label, blank)
}

/// CTC loss `-ln P(label | softmax(logits))` and its gradient w.r.t. the logits.
pub fn ctc_loss_and_grad(logits: ArrayView2<f64>, label: &[usize], blank: usize) -> Result<(f64, Array2<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CTC logits".into()));
    }
    check_label(label, logits.ncols(), blank)?;
    let frames = logits.nrows();
    if min_frames(label) > frames {
        return Err(Error::InfeasibleLabel(format!(
            "label of length {} needs at least {} frames, got {frames}",
            label.len(),
            min_frames(label)
        )));
    }
    let log_y = log_softmax_rows(logits);
    let fwd = forward_from_log(log_y.view(), label, blank)?;
    let log_p = fwd.log_probability;
    if log_p == f64::NEG_INFINITY {
        return Err(Error::InfeasibleLabel("label probability underflowed to zero".into()));
    }
    let ext = extended_label(label, blank);
    let beta = backward_lattice(log_y.view(), &ext, blank);

    let mut grad = log_y.mapv(f64::exp);
    for t in 0..frames {
        for (s, &sym) in ext.iter().enumerate() {
            let occ = fwd.log_alpha[[t, s]] + beta[[t, s]] - log_p;
            if occ > f64::NEG_INFINITY {
                grad[[t, sym]] -= occ.exp();
            }
        }
    }
    Ok((-log_p, grad))
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Most probable path (framewise argmax) and its collapsed labeling.
pub fn best_path_decode(y: &PosteriorMatrix, blank: usize) -> (Vec<usize>, Vec<usize>) {
    let path: Vec<usize> = y
        .probs()
        .axis_iter(Axis(0))
        .map(|row| argmax(row.iter().copied()))
        .collect();
    let label = collapse(&path, blank);
    (path, label)
}

/// `P((e) | y)` for every non-blank class `e`, in class order.
///
/// A single-symbol label expands to exactly the `-* e+ -*` paths, i.e. the
/// `E`, `-E`, `E-`, `-E-` emotion patterns stretched over `T` frames.
pub fn single_symbol_probabilities(y: &PosteriorMatrix, blank: usize) -> Vec<(usize, f64)> {
    let log_y = y.probs().mapv(f64::ln);
    (0..y.classes())
        .filter(|&e| e != blank)
        .map(|e| {
            let p = forward_from_log(log_y.view(), &[e], blank)
                .map(|f| f.probability)
                .unwrap_or(0.0);
            (e, p)
        })
        .collect()
}

/// The single emotion whose patterns carry the most probability mass.
pub fn constrained_emotion_decode(y: &PosteriorMatrix, blank: usize) -> (usize, f64) {
    let scores = single_symbol_probabilities(y, blank);
    let best = argmax(scores.iter().map(|&(_, p)| p));
    scores[best]
}
