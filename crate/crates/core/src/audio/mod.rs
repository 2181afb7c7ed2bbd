//! Audio frontend: WAV ingestion, resampling, log-power spectrogram and the
//! 3-channel 40×40 frame representation.

mod frames;
mod resample;
mod spectrogram;
pub mod tensor;
mod wav;

pub use frames::{
    channelize, equalize_hist, interval_spans, min_max_normalize, segment_intervals, slice_frames, FrameSequence,
    Interval, SpectroFrame, EQ_LEVELS, FRAME_COLUMNS, FRAME_HOP_COLUMNS, FRAME_RATE_HZ, FRAME_STEP_SECONDS,
    INTERVAL_FRAMES, MIN_TAIL_FRAMES,
};
pub use resample::resample;
pub use spectrogram::{
    compute_spectrogram, Spectrogram, BANDS, FFT_SIZE, HOP_SAMPLES, LOG_FLOOR, MAX_FREQ_HZ, WINDOW_SAMPLES,
    WORKING_RATE,
};
pub use wav::{read_wav, read_wav_bytes, write_wav_pcm16, WaveForm};

use std::path::Path;

use crate::Result;

/// Full audio path: read, resample to the working rate, spectrogram, frames.
pub fn wav_to_frames(path: &Path) -> Result<FrameSequence> {
    let wave = read_wav(path)?;
    waveform_to_frames(&wave)
}

pub fn waveform_to_frames(wave: &WaveForm) -> Result<FrameSequence> {
    let wave = resample(wave, WORKING_RATE);
    let spec = compute_spectrogram(&wave)?;
    slice_frames(&spec)
}
