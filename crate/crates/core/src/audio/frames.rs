use std::ops::Range;

use ndarray::{s, Array2};

use super::spectrogram::{Spectrogram, BANDS};
use crate::{Error, Result};

/// Spectrogram columns per frame (0.4 s).
pub const FRAME_COLUMNS: usize = 40;
/// Columns between frame starts (50% overlap).
pub const FRAME_HOP_COLUMNS: usize = 20;
pub const FRAME_RATE_HZ: f64 = 5.0;
pub const FRAME_STEP_SECONDS: f64 = 0.2;
/// Frames per 2 s interval.
pub const INTERVAL_FRAMES: usize = 10;
/// Shortest trailing remainder kept as its own interval.
pub const MIN_TAIL_FRAMES: usize = 2;
/// Quantization levels used by histogram equalization.
pub const EQ_LEVELS: usize = 256;

/// One 0.4 s audio frame: `[log, norm(log), equalized(norm(log))]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroFrame {
    pub channels: [Array2<f64>; 3],
    pub start_time: f64,
}

impl SpectroFrame {
    /// Channel-major flattening, `3 × 40 × 40` values.
    pub fn flatten(&self) -> Vec<f64> {
        self.channels.iter().flat_map(|c| c.iter().copied()).collect()
    }

    pub fn from_flat(values: &[f64], start_time: f64) -> Result<Self> {
        let plane = BANDS * FRAME_COLUMNS;
        if values.len() != 3 * plane {
            return Err(Error::Dimension(format!(
                "frame needs {} values, got {}",
                3 * plane,
                values.len()
            )));
        }
        let channel = |i: usize| {
            Array2::from_shape_vec((BANDS, FRAME_COLUMNS), values[i * plane..(i + 1) * plane].to_vec())
                .expect("plane size checked")
        };
        Ok(Self {
            channels: [channel(0), channel(1), channel(2)],
            start_time,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<SpectroFrame>,
    pub frame_rate: f64,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A span of at most 2 s of frames from one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub utterance_id: String,
    pub start: f64,
    pub duration: f64,
    pub frames: Vec<SpectroFrame>,
}

/// `(x - min) / (max - min)` over the whole matrix; all zeros when constant.
pub fn min_max_normalize(x: &Array2<f64>) -> Array2<f64> {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    if !(range > 0.0) {
        return Array2::zeros(x.raw_dim());
    }
    x.mapv(|v| ((v - lo) / range).clamp(0.0, 1.0))
}

/// Histogram equalization of values in `[0, 1]`.
///
/// Values are quantized to 256 levels and each level is replaced by the
/// empirical CDF at that level, so the output lies in `(0, 1]`.
pub fn equalize_hist(x: &Array2<f64>) -> Array2<f64> {
    let top = (EQ_LEVELS - 1) as f64;
    let level = |v: f64| (v.clamp(0.0, 1.0) * top).round() as usize;
    let mut hist = [0usize; EQ_LEVELS];
    for &v in x {
        hist[level(v)] += 1;
    }
    let total = x.len() as f64;
    let mut cdf = [0.0f64; EQ_LEVELS];
    let mut running = 0usize;
    for (c, h) in cdf.iter_mut().zip(hist) {
        running += h;
        *c = running as f64 / total;
    }
    x.mapv(|v| cdf[level(v)])
}

/// Builds the three frame channels from a log-power matrix.
pub fn channelize(log_values: &Array2<f64>) -> [Array2<f64>; 3] {
    let norm = min_max_normalize(log_values);
    let eq = equalize_hist(&norm);
    [log_values.clone(), norm, eq]
}

/// Cuts a spectrogram into 40-column frames every 20 columns, normalizing
/// and equalizing each frame on its own.
pub fn slice_frames(spec: &Spectrogram) -> Result<FrameSequence> {
    let cols = spec.columns();
    if cols < FRAME_COLUMNS {
        return Err(Error::TooShort(format!(
            "{cols} spectrogram columns, need at least {FRAME_COLUMNS} for one frame"
        )));
    }
    let count = (cols - FRAME_COLUMNS) / FRAME_HOP_COLUMNS + 1;
    let frames = (0..count)
        .map(|k| {
            let start = k * FRAME_HOP_COLUMNS;
            let block = spec.values.slice(s![.., start..start + FRAME_COLUMNS]).to_owned();
            SpectroFrame {
                channels: channelize(&block),
                start_time: k as f64 * FRAME_STEP_SECONDS,
            }
        })
        .collect();
    Ok(FrameSequence {
        frames,
        frame_rate: FRAME_RATE_HZ,
    })
}

/// Frame index ranges of the 2 s intervals for a sequence of `n` frames.
///
/// Full intervals hold 10 frames; a trailing remainder is kept only when it
/// has at least 2 frames.
pub fn interval_spans(n: usize) -> Vec<Range<usize>> {
    let mut spans: Vec<Range<usize>> = (0..n / INTERVAL_FRAMES)
        .map(|i| i * INTERVAL_FRAMES..(i + 1) * INTERVAL_FRAMES)
        .collect();
    let tail = n % INTERVAL_FRAMES;
    if tail >= MIN_TAIL_FRAMES {
        spans.push(n - tail..n);
    }
    spans
}

pub fn segment_intervals(seq: &FrameSequence, utterance_id: &str) -> Vec<Interval> {
    interval_spans(seq.len())
        .into_iter()
        .map(|span| Interval {
            utterance_id: utterance_id.to_string(),
            start: span.start as f64 * FRAME_STEP_SECONDS,
            duration: span.len() as f64 / FRAME_RATE_HZ,
            frames: seq.frames[span].to_vec(),
        })
        .collect()
}
