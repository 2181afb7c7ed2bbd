//! Seeded synthetic datasets standing in for real recordings.
//!
//! * `separable_tones`: one WAV per utterance; class `k` is a harmonic tone
//!   with fundamental `200 + 150·k` Hz plus white noise.
//! * `complementary_modalities`: two embedding-sequence modalities over four
//!   classes. Modality `m1` only reveals whether the class is in {0, 1} or
//!   {2, 3}; modality `m2` only whether it is in {0, 2} or {1, 3}. Either
//!   one alone can tell at most two classes apart; together they identify
//!   all four.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::write_atomic;
use crate::audio::{tensor, write_wav_pcm16, WaveForm, WORKING_RATE};
use crate::{Error, Result, EMOTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    SeparableTones,
    ComplementaryModalities,
}

impl SynthKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "separable_tones" => Some(Self::SeparableTones),
            "complementary_modalities" => Some(Self::ComplementaryModalities),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub seed: u64,
    /// Class count for `separable_tones`; `complementary_modalities` is always 4.
    pub classes: usize,
    /// Every `holdout`-th utterance goes to the test split (0 = all train).
    pub holdout: usize,
}

pub const TONE_NOISE_STD: f64 = 0.02;
pub const TONE_MIN_SECONDS: f64 = 1.6;
pub const TONE_MAX_SECONDS: f64 = 3.0;
pub const COMPLEMENTARY_FRAMES: usize = 10;
pub const COMPLEMENTARY_DIM: usize = 4;
pub const COMPLEMENTARY_NOISE_STD: f64 = 0.3;

pub fn tone_fundamental(class: usize) -> f64 {
    200.0 + 150.0 * class as f64
}

/// Fixed per-class (arousal, valence) targets.
pub fn class_affect(class: usize, classes: usize) -> (f64, f64) {
    let frac = if classes > 1 {
        class as f64 / (classes - 1) as f64
    } else {
        0.5
    };
    (0.2 + 0.6 * frac, -0.6 + 1.2 * frac)
}

/// Harmonic tone for `class` with seeded phase and noise.
pub fn tone_waveform(class: usize, seconds: f64, rng: &mut ChaCha8Rng) -> WaveForm {
    let f0 = tone_fundamental(class);
    let n = (seconds * WORKING_RATE as f64).round() as usize;
    let noise = Normal::new(0.0, TONE_NOISE_STD).expect("valid std");
    let phases: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / WORKING_RATE as f64;
            let tone: f64 = (0..3)
                .map(|h| 0.4 / (1 << h) as f64 * (2.0 * PI * f0 * (h + 1) as f64 * t + phases[h]).sin())
                .sum();
            tone + noise.sample(rng)
        })
        .collect();
    WaveForm {
        samples,
        sample_rate: WORKING_RATE,
    }
}

/// Embedding sequence for one modality of the complementary set:
/// `sign · direction + noise` on every frame.
pub fn complementary_sequence(bit: bool, direction: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, COMPLEMENTARY_NOISE_STD).expect("valid std");
    let sign = if bit { 1.0 } else { -1.0 };
    (0..COMPLEMENTARY_FRAMES)
        .map(|_| direction.iter().map(|d| sign * d + noise.sample(rng)).collect())
        .collect()
}

/// Writes the dataset files and `manifest.csv` under `out_dir`; returns the
/// manifest path. Identical specs produce byte-identical files.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf> {
    if spec.n == 0 {
        return Err(Error::Validation("n must be positive".into()));
    }
    let classes = match spec.kind {
        SynthKind::SeparableTones => spec.classes,
        SynthKind::ComplementaryModalities => 4,
    };
    if classes == 0 || classes > EMOTIONS.len() {
        return Err(Error::Validation(format!(
            "class count must be in 1..={}",
            EMOTIONS.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut manifest = String::from("utterance_id,label,arousal,valence,split");
    match spec.kind {
        SynthKind::SeparableTones => manifest.push_str(",audio\n"),
        SynthKind::ComplementaryModalities => manifest.push_str(",m1,m2\n"),
    }
    // Unit directions for the two modalities.
    let dir1 = [0.5, 0.5, 0.5, 0.5];
    let dir2 = [0.5, -0.5, 0.5, -0.5];

    for i in 0..spec.n {
        let class = i % classes;
        let id = format!("utt{i:04}");
        let split = if spec.holdout > 0 && i % spec.holdout == spec.holdout - 1 {
            "test"
        } else {
            "train"
        };
        let (arousal, valence) = class_affect(class, classes);
        let _ = write!(manifest, "{id},{},{arousal},{valence},{split}", EMOTIONS[class]);
        match spec.kind {
            SynthKind::SeparableTones => {
                let seconds = rng.gen_range(TONE_MIN_SECONDS..=TONE_MAX_SECONDS);
                let wave = tone_waveform(class, seconds, &mut rng);
                let name = format!("{id}.wav");
                write_atomic(&out_dir.join(&name), &write_wav_pcm16(&wave)?)?;
                let _ = writeln!(manifest, ",{name}");
            }
            SynthKind::ComplementaryModalities => {
                let m1 = complementary_sequence(class >= 2, &dir1, &mut rng);
                let m2 = complementary_sequence(class % 2 == 1, &dir2, &mut rng);
                for (name, rows) in [("m1", &m1), ("m2", &m2)] {
                    let t = tensor::embeddings_to_tensor(rows)?;
                    write_atomic(&out_dir.join(format!("{id}_{name}.emsq")), &tensor::encode(&t))?;
                }
                let _ = writeln!(manifest, ",{id}_m1.emsq,{id}_m2.emsq");
            }
        }
    }
    let path = out_dir.join("manifest.csv");
    write_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}
