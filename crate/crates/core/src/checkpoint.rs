//! Versioned binary checkpoints for [`FusionModel`].
//!
//! Layout (all integers u32 little-endian unless noted):
//!
//! ```text
//! "EMCK" version
//! emotions branch_count
//! per branch: name_len name_utf8 loss_mode(0 = framewise_ce, 1 = ctc)
//!             has_encoder conv1_channels conv2_channels input_dim hidden
//! head_input head_classes
//! param_count (u64)  param_count × f32
//! ```
//!
//! Parameters are stored as f32, so saving rounds each f64 parameter to the
//! nearest f32. Loading then saving reproduces the file byte for byte.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fusion::{FusionModel, ModalitySlot};
use crate::model::{EncoderShape, HeadParams, LossMode, ModelShape, ParamSet, SeqModel};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMCK";
pub const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(model: &FusionModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, model.emotions());
    put_u32(&mut out, model.branches.len());
    for (slot, branch) in model.slots.iter().zip(&model.branches) {
        put_u32(&mut out, slot.name.len());
        out.extend_from_slice(slot.name.as_bytes());
        let shape = branch.shape();
        put_u32(&mut out, (shape.loss_mode == LossMode::Ctc) as usize);
        put_u32(&mut out, shape.encoder.is_some() as usize);
        let (c1, c2) = shape.encoder.map_or((0, 0), |e| (e.conv1_channels, e.conv2_channels));
        put_u32(&mut out, c1);
        put_u32(&mut out, c2);
        put_u32(&mut out, shape.input_dim);
        put_u32(&mut out, shape.hidden);
    }
    put_u32(&mut out, model.head.input_dim());
    put_u32(&mut out, model.head.classes());
    let params = model.flat();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FusionModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not an EMCK checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let emotions = r.usize()?;
    let count = r.usize()?;
    if count == 0 || count > 16 {
        return Err(Error::Format(format!("implausible branch count {count}")));
    }
    // Shapes only; the values are overwritten below.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut slots = Vec::with_capacity(count);
    let mut branches = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.usize()?;
        let name =
            String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("modality name is not UTF-8".into()))?;
        let loss_mode = match r.u32()? {
            0 => LossMode::FramewiseCe,
            1 => LossMode::Ctc,
            m => return Err(Error::Format(format!("unknown loss mode {m}"))),
        };
        let has_encoder = r.u32()? != 0;
        let (c1, c2, input_dim, hidden) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        let shape = ModelShape {
            emotions,
            encoder: has_encoder.then_some(EncoderShape {
                conv1_channels: c1,
                conv2_channels: c2,
                embed_dim: input_dim,
            }),
            input_dim,
            hidden,
            loss_mode,
        };
        let branch = SeqModel::new(&shape, &mut rng)?;
        slots.push(ModalitySlot { name, dim: hidden });
        branches.push(branch);
    }
    let (head_in, head_classes) = (r.usize()?, r.usize()?);
    if head_in != slots.iter().map(|s| s.dim).sum::<usize>() || head_classes != emotions {
        return Err(Error::Format("fusion head shape disagrees with branches".into()));
    }
    let mut model = FusionModel {
        slots,
        branches,
        head: HeadParams::zeros(head_in, head_classes),
    };
    let n = r.u64()? as usize;
    if n != model.num_params() {
        return Err(Error::Format(format!(
            "checkpoint holds {n} parameters, shape needs {}",
            model.num_params()
        )));
    }
    let values: Vec<f64> = r
        .take(4 * n)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    model.set_flat(&values);
    Ok(model)
}
