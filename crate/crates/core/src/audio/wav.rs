use std::io::{Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

/// Mono audio signal with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveForm {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl WaveForm {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Format(e.to_string()),
        hound::Error::Unsupported => Error::UnsupportedCodec("only PCM integer and 32-bit float are supported".into()),
        hound::Error::FormatError(msg) => {
            if msg.contains("format tag") || msg.contains("compression") {
                Error::UnsupportedCodec(msg.to_string())
            } else {
                Error::Format(msg.to_string())
            }
        }
        other => Error::Format(other.to_string()),
    }
}

/// Reads a PCM WAV file, averaging channels down to mono.
pub fn read_wav(path: &Path) -> Result<WaveForm> {
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::Io(path.to_path_buf(), io),
        other => map_hound(other),
    })?;
    decode(reader)
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<WaveForm> {
    let reader = WavReader::new(std::io::Cursor::new(bytes)).map_err(map_hound)?;
    decode(reader)
}

fn decode<R: Read + Seek>(mut reader: WavReader<R>) -> Result<WaveForm> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(map_hound)?
        }
        (fmt, bits) => return Err(Error::UnsupportedCodec(format!("{bits}-bit {fmt:?} samples"))),
    };
    if interleaved.len() % channels != 0 {
        return Err(Error::Format("truncated final sample frame".into()));
    }
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    WaveForm::new(samples, spec.sample_rate)
}

/// Encodes a mono 16-bit PCM WAV into memory.
pub fn write_wav_pcm16(wave: &WaveForm) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = WavWriter::new(&mut cursor, spec).map_err(map_hound)?;
        for &s in &wave.samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v).map_err(map_hound)?;
        }
        writer.finalize().map_err(map_hound)?;
    }
    Ok(cursor.into_inner())
}
