//! `VDIM` checkpoint files with an optional `HATT` attention section.
//!
//! Layout: `VDIM`, version, guidance width, channel count, then every
//! upsampling and downsampler tensor in declaration order. An attention
//! section follows as `HATT`, head count, tensor count, tensors. Each tensor
//! is rank, dims, float32 payload. The neighborhood radius is not stored;
//! loaded parameters use the default.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::{FormatError, Reader, Writer};
use crate::hiwin_attn::AttnParams;
use crate::numerics::Tensor;
use crate::vdim::{DownLevelParams, DownsamplerParams, JbuParams, VdimParams, DEFAULT_RADIUS, UPSAMPLE_LEVELS};

const VDIM_MAGIC: &[u8; 4] = b"VDIM";
const HATT_MAGIC: &[u8; 4] = b"HATT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vdim: VdimParams,
    pub down: DownsamplerParams,
    pub attn: Option<AttnParams>,
}

impl Checkpoint {
    pub fn channels(&self) -> usize {
        self.down.channels()
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::default();
    w.tag(VDIM_MAGIC);
    w.u32(VERSION);
    w.u32(ckpt.vdim.guidance_dim() as u32);
    w.u32(ckpt.channels() as u32);
    for t in ckpt.vdim.tensors().into_iter().chain(ckpt.down.tensors()) {
        w.tensor(t);
    }
    if let Some(attn) = &ckpt.attn {
        let tensors = attn.tensors();
        w.tag(HATT_MAGIC);
        w.u32(attn.heads as u32);
        w.u32(tensors.len() as u32);
        for t in tensors {
            w.tensor(t);
        }
    }
    w.buf
}

fn expect_shape(t: &Tensor, shape: &[usize], what: &str) -> Result<(), FormatError> {
    if t.shape() != shape {
        return Err(FormatError::Invalid(format!("{what} has shape {:?}, expected {shape:?}", t.shape())));
    }
    Ok(())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.expect_tag(VDIM_MAGIC)?;
    let version = r.u32("VDIM header")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { format: "VDIM", version }.into());
    }
    let d = r.u32("VDIM header")? as usize;
    let c = r.u32("VDIM header")? as usize;

    let mut levels = Vec::with_capacity(UPSAMPLE_LEVELS);
    for l in 1..=UPSAMPLE_LEVELS {
        let proj_weight = r.tensor("guidance projection")?;
        let proj_bias = r.tensor("guidance bias")?;
        let log_sigma_dist = r.tensor("sigma_dist")?;
        let log_sigma_sim = r.tensor("sigma_sim")?;
        let what = format!("level {l} upsampling");
        expect_shape(&proj_weight, &[3, d], &what)?;
        expect_shape(&proj_bias, &[d], &what)?;
        expect_shape(&log_sigma_dist, &[], &what)?;
        expect_shape(&log_sigma_sim, &[], &what)?;
        levels.push(JbuParams { proj_weight, proj_bias, log_sigma_dist, log_sigma_sim });
    }
    let mut down_levels = Vec::with_capacity(UPSAMPLE_LEVELS);
    for l in 1..=UPSAMPLE_LEVELS {
        let saliency = r.tensor("saliency")?;
        let scale = r.tensor("scale")?;
        let shift = r.tensor("shift")?;
        let what = format!("level {l} downsampler");
        for t in [&saliency, &scale, &shift] {
            expect_shape(t, &[c], &what)?;
        }
        down_levels.push(DownLevelParams { saliency, scale, shift });
    }

    let attn = match r.peek_tag() {
        None => None,
        Some(_) => {
            r.expect_tag(HATT_MAGIC)?;
            let heads = r.u32("HATT header")? as usize;
            let count = r.u32("HATT header")? as usize;
            if count > 64 {
                return Err(FormatError::Invalid(format!("implausible HATT tensor count {count}")).into());
            }
            let tensors = (0..count).map(|_| r.tensor("attention tensor")).collect::<Result<Vec<_>, _>>()?;
            let attn = AttnParams::from_tensors(tensors, heads)
                .map_err(|e| FormatError::Invalid(format!("attention section: {e}")))?;
            if attn.channels() != c {
                return Err(FormatError::Invalid(format!("attention has {} channels, header says {c}", attn.channels())).into());
            }
            Some(attn)
        }
    };
    if !r.at_end() {
        return Err(FormatError::Invalid(format!("{} trailing bytes after checkpoint", r.remaining())).into());
    }
    for t in levels.iter().flat_map(|l| [&l.proj_weight, &l.proj_bias, &l.log_sigma_dist, &l.log_sigma_sim]) {
        if !t.all_finite() {
            return Err(Error::NonFinite("checkpoint contains non-finite upsampling weights".into()));
        }
    }
    Ok(Checkpoint {
        vdim: VdimParams { levels, radius: DEFAULT_RADIUS },
        down: DownsamplerParams { levels: down_levels },
        attn,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}
