//! Flat little-endian f32 tensor files.
//!
//! Layout: magic `EMSQ1`, then four u32 values (count, channels, height,
//! width), then `count·channels·height·width` f32 values in row-major order.
//! Frame files use `(n, 3, 40, 40)`; embedding sequences use `(n, 1, 1, d)`.

use std::fmt::Write as _;

use super::{FrameSequence, SpectroFrame, FRAME_RATE_HZ, FRAME_STEP_SECONDS};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"EMSQ1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    /// `[count, channels, height, width]`
    pub shape: [u32; 4],
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn item_len(&self) -> usize {
        self.shape[1..].iter().map(|&d| d as usize).product()
    }

    pub fn items(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.item_len().max(1))
    }

    pub fn is_frames(&self) -> bool {
        self.shape[1..] == [3, 40, 40]
    }
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 16 + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    for d in t.shape {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 21 || &bytes[..5] != MAGIC {
        return Err(Error::Format("not an EMSQ1 tensor file".into()));
    }
    let mut shape = [0u32; 4];
    for (i, d) in shape.iter_mut().enumerate() {
        let o = 5 + 4 * i;
        *d = u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    }
    let expected = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
    let body = &bytes[21..];
    match expected {
        Some(n) if n.checked_mul(4) == Some(body.len()) => {}
        _ => {
            return Err(Error::Format(format!(
                "tensor body has {} bytes, header shape {:?}",
                body.len(),
                shape
            )))
        }
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor { shape, data })
}

pub fn frames_to_tensor(seq: &FrameSequence) -> Tensor {
    Tensor {
        shape: [seq.len() as u32, 3, 40, 40],
        data: seq.frames.iter().flat_map(|f| f.flatten()).map(|v| v as f32).collect(),
    }
}

pub fn tensor_to_frames(t: &Tensor) -> Result<FrameSequence> {
    if !t.is_frames() {
        return Err(Error::Dimension(format!(
            "expected (n, 3, 40, 40) frames, got {:?}",
            t.shape
        )));
    }
    let frames = t
        .items()
        .enumerate()
        .map(|(k, item)| {
            let values: Vec<f64> = item.iter().map(|&v| v as f64).collect();
            SpectroFrame::from_flat(&values, k as f64 * FRAME_STEP_SECONDS)
        })
        .collect::<Result<_>>()?;
    Ok(FrameSequence {
        frames,
        frame_rate: FRAME_RATE_HZ,
    })
}

/// Embedding sequence `(n, 1, 1, d)` as row vectors.
pub fn tensor_to_embeddings(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    if t.shape[1] != 1 || t.shape[2] != 1 || t.shape[3] == 0 {
        return Err(Error::Dimension(format!(
            "expected (n, 1, 1, d) embeddings, got {:?}",
            t.shape
        )));
    }
    Ok(t.items().map(|it| it.iter().map(|&v| v as f64).collect()).collect())
}

pub fn embeddings_to_tensor(rows: &[Vec<f64>]) -> Result<Tensor> {
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension(
            "embedding rows must be nonempty and equal length".into(),
        ));
    }
    Ok(Tensor {
        shape: [rows.len() as u32, 1, 1, d as u32],
        data: rows.iter().flatten().map(|&v| v as f32).collect(),
    })
}

/// CSV dump: `frame,start_time,channel,band,column,value`.
pub fn frames_to_csv(seq: &FrameSequence) -> String {
    let mut out = String::from("frame,start_time,channel,band,column,value\n");
    for (k, f) in seq.frames.iter().enumerate() {
        for (c, ch) in f.channels.iter().enumerate() {
            for ((b, col), v) in ch.indexed_iter() {
                let _ = writeln!(out, "{k},{:.1},{c},{b},{col},{}", f.start_time, *v as f32);
            }
        }
    }
    out
}
