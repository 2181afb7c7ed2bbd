//! WebAssembly bindings for the browser demo in `www/`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use emoseq::audio::{waveform_to_frames, WaveForm, WORKING_RATE};
use emoseq::ctc::{self, PosteriorMatrix};
use emoseq::metrics::{ConfusionMatrix, MetricsReport};
use emoseq::{emotion_index, EMOTIONS};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: emoseq::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Spectrogram frames of a synthetic harmonic tone.
#[wasm_bindgen]
pub struct FrameView {
    frames: Vec<[Vec<f32>; 3]>,
    start_times: Vec<f64>,
}

#[wasm_bindgen]
impl FrameView {
    pub fn count(&self) -> usize {
        self.frames.len()
    }

    pub fn start_time(&self, frame: usize) -> f64 {
        self.start_times[frame]
    }

    /// Row-major 40×40 values of one channel; row 0 is the lowest band.
    pub fn channel(&self, frame: usize, channel: usize) -> Vec<f32> {
        self.frames[frame][channel].clone()
    }
}

/// Renders `seconds` of a three-harmonic tone at `fundamental_hz` plus seeded
/// white noise and converts it to frames.
#[wasm_bindgen]
pub fn tone_frames(fundamental_hz: f64, seconds: f64, noise: f64, seed: u64) -> Result<FrameView, JsError> {
    let rate = WORKING_RATE as f64;
    let n = (seconds.clamp(0.0, 30.0) * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let tone: f64 = (1..=3)
                .map(|h| 0.4 / h as f64 * (2.0 * PI * fundamental_hz * h as f64 * t).sin())
                .sum();
            tone + noise * rng.gen_range(-1.0..1.0)
        })
        .collect();
    let wave = WaveForm::new(samples, WORKING_RATE).map_err(js_err)?;
    let seq = waveform_to_frames(&wave).map_err(js_err)?;
    Ok(FrameView {
        start_times: seq.frames.iter().map(|f| f.start_time).collect(),
        frames: seq
            .frames
            .iter()
            .map(|f| f.channels.clone().map(|c| c.iter().map(|&v| v as f32).collect()))
            .collect(),
    })
}

/// Posterior rows (one frame per line, comma-separated); the last column is
/// the blank. Symbols are named `A`, `B`, ... and the blank `-`.
fn parse_posteriors(text: &str) -> Result<PosteriorMatrix, JsError> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| JsError::new(&format!("not a number: {v:?}")))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let width = rows.first().map_or(0, Vec::len);
    if width < 2 || rows.iter().any(|r| r.len() != width) {
        return Err(JsError::new("need at least two columns and equal-width rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    PosteriorMatrix::new(Array2::from_shape_vec((rows.len(), width), flat).expect("rectangular")).map_err(js_err)
}

fn symbol_name(i: usize, blank: usize) -> String {
    if i == blank {
        "-".into()
    } else {
        char::from(b'A' + i as u8).to_string()
    }
}

/// Best path, its collapsed labeling, the constrained single-emotion decode
/// and `P(label | y)` for `label` (letters, e.g. `AB`) by both the forward
/// recursion and path enumeration.
#[wasm_bindgen]
pub fn ctc_report(posteriors: &str, label: &str) -> Result<String, JsError> {
    let y = parse_posteriors(posteriors)?;
    if y.classes() > 27 {
        return Err(JsError::new("at most 26 symbols plus the blank"));
    }
    let blank = y.classes() - 1;
    let label: Vec<usize> = label
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c.to_ascii_uppercase() {
            u @ 'A'..='Z' => Ok(u as usize - 'A' as usize),
            _ => Err(JsError::new(&format!("label symbol {c:?} is not a letter"))),
        })
        .collect::<Result<_, _>>()?;
    let render = |seq: &[usize]| seq.iter().map(|&i| symbol_name(i, blank)).collect::<Vec<_>>().join(" ");
    let (path, labeling) = ctc::best_path_decode(&y, blank);
    let mut out = String::new();
    let _ = writeln!(out, "best path:   {}", render(&path));
    let _ = writeln!(out, "labeling:    {}", render(&labeling));
    let (e, p) = ctc::constrained_emotion_decode(&y, blank);
    let _ = writeln!(out, "constrained: {} (P = {p:.6})", symbol_name(e, blank));
    let fwd = ctc::label_probability_forward(&y, &label, blank).map_err(js_err)?;
    let _ = writeln!(out, "P({}) forward:     {:.12}", render(&label), fwd.probability);
    match ctc::label_probability_bruteforce(&y, &label, blank) {
        Ok(p) => {
            let _ = writeln!(out, "P({}) enumeration: {p:.12}", render(&label));
        }
        Err(e) => {
            let _ = writeln!(out, "enumeration skipped: {e}");
        }
    }
    Ok(out)
}

fn parse_labels(text: &str) -> Result<Vec<usize>, JsError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| emotion_index(s).ok_or_else(|| JsError::new(&format!("unknown emotion {s:?}"))))
        .collect()
}

/// Classification metrics as JSON for two lists of emotion names.
#[wasm_bindgen]
pub fn metrics_report(truth: &str, predicted: &str) -> Result<String, JsError> {
    let truth = parse_labels(truth)?;
    let predicted = parse_labels(predicted)?;
    let cm = ConfusionMatrix::from_labels(&truth, &predicted, EMOTIONS.len()).map_err(js_err)?;
    let zeros = vec![0.0; truth.len()];
    let report = MetricsReport::compute(&cm, (&zeros, &zeros), (&zeros, &zeros)).map_err(js_err)?;
    Ok(format!(
        "{{\"unweighted_accuracy\":{},\"macro_f1\":{},\"confusion\":{:?}}}",
        report.unweighted_accuracy, report.macro_f1, report.confusion
    ))
}

#[wasm_bindgen]
pub fn emotions() -> Vec<String> {
    EMOTIONS.iter().map(|s| s.to_string()).collect()
}
