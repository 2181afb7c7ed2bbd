use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::WaveForm;
use crate::{Error, Result};

pub const WORKING_RATE: u32 = 16_000;
/// 20 ms analysis window.
pub const WINDOW_SAMPLES: usize = 320;
/// 10 ms hop between columns.
pub const HOP_SAMPLES: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const BANDS: usize = 40;
pub const MAX_FREQ_HZ: f64 = 4000.0;
/// Added to band power before the logarithm so silence stays finite.
pub const LOG_FLOOR: f64 = 1e-10;

/// Log-power spectrogram with 40 linear bands over 0–4000 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `[BANDS, columns]`, band 0 is the lowest frequency.
    pub values: Array2<f64>,
    pub band_edges: Vec<f64>,
    pub column_hop: f64,
    pub window: f64,
}

impl Spectrogram {
    pub fn columns(&self) -> usize {
        self.values.ncols()
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// FFT bin index → band index, `None` above 4000 Hz.
fn bin_bands() -> Vec<Option<usize>> {
    let bin_hz = WORKING_RATE as f64 / FFT_SIZE as f64;
    let band_hz = MAX_FREQ_HZ / BANDS as f64;
    (0..=FFT_SIZE / 2)
        .map(|k| {
            let f = k as f64 * bin_hz;
            if f > MAX_FREQ_HZ {
                None
            } else {
                Some(((f / band_hz).floor() as usize).min(BANDS - 1))
            }
        })
        .collect()
}

/// Short-time log-power spectrum of a 16 kHz signal.
///
/// Each column is a Hann-windowed 320-sample frame, zero-padded to 512,
/// whose power bins are mean-aggregated into 40 bands of 100 Hz.
pub fn compute_spectrogram(wave: &WaveForm) -> Result<Spectrogram> {
    if wave.sample_rate != WORKING_RATE {
        return Err(Error::Validation(format!(
            "spectrogram expects {WORKING_RATE} Hz input, got {} Hz",
            wave.sample_rate
        )));
    }
    let n = wave.samples.len();
    if n < WINDOW_SAMPLES {
        return Err(Error::TooShort(format!(
            "{n} samples is shorter than one {WINDOW_SAMPLES}-sample window"
        )));
    }
    let columns = (n - WINDOW_SAMPLES) / HOP_SAMPLES + 1;
    let window = hann(WINDOW_SAMPLES);
    let bands_of = bin_bands();
    let mut counts = [0usize; BANDS];
    for b in bands_of.iter().flatten() {
        counts[*b] += 1;
    }

    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_SIZE);
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    let mut values = Array2::zeros((BANDS, columns));
    for col in 0..columns {
        let start = col * HOP_SAMPLES;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, (s, w)) in wave.samples[start..start + WINDOW_SAMPLES]
            .iter()
            .zip(&window)
            .enumerate()
        {
            buf[i].re = s * w;
        }
        fft.process(&mut buf);
        let mut sums = [0.0f64; BANDS];
        for (k, band) in bands_of.iter().enumerate() {
            if let Some(b) = band {
                sums[*b] += buf[k].norm_sqr();
            }
        }
        for b in 0..BANDS {
            values[[b, col]] = (sums[b] / counts[b] as f64 + LOG_FLOOR).ln();
        }
    }

    let band_edges = (0..=BANDS).map(|i| MAX_FREQ_HZ * i as f64 / BANDS as f64).collect();
    Ok(Spectrogram {
        values,
        band_edges,
        column_hop: HOP_SAMPLES as f64 / WORKING_RATE as f64,
        window: WINDOW_SAMPLES as f64 / WORKING_RATE as f64,
    })
}
