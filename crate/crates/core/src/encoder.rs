//! Level-0 patch features: a seeded stand-in for a frozen ViT, plus the
//! `ISPF` feature file format for features computed elsewhere.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::{FormatError, Reader, Writer};
use crate::image_io::{Image, PATCH};
use crate::numerics::Tensor;

pub const DEFAULT_CHANNELS: usize = 64;

/// Which image a feature map was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Slice(usize),
    Overview,
    /// Loaded from a file that does not record provenance.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub level: usize,
    pub origin: Origin,
    pub data: Tensor,
}

impl FeatureMap {
    pub fn new(level: usize, origin: Origin, data: Tensor) -> Result<Self> {
        data.hwc()?;
        Ok(Self { level, origin, data })
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderKind {
    /// Patch flatten, seeded linear map, tanh.
    Synthetic,
    /// Features read from an `ISPF` file.
    FileBacked(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub patch: usize,
    pub channels: usize,
    pub seed: u64,
}

impl EncoderSpec {
    pub fn synthetic(channels: usize, seed: u64) -> Self {
        Self {
            kind: EncoderKind::Synthetic,
            patch: PATCH,
            channels,
            seed,
        }
    }
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self::synthetic(DEFAULT_CHANNELS, 0)
    }
}

/// Weights of the synthetic patch embedding, `[patch*patch*3, C]` plus a
/// bias. Reusable across many `encode` calls.
#[derive(Debug, Clone)]
pub struct PatchEmbedding {
    patch: usize,
    channels: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl PatchEmbedding {
    pub fn new(patch: usize, channels: usize, seed: u64) -> Self {
        let fan_in = patch * patch * 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e2c0_de00_0001);
        // Gain chosen so tanh sees unit-scale inputs on [0, 1] images.
        let bound = 3.0 * (3.0 / fan_in as f64).sqrt();
        let weight = (0..fan_in * channels).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = (0..channels).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self { patch, channels, weight, bias }
    }

    pub fn encode(&self, image: &Image) -> Result<Tensor> {
        let p = self.patch;
        let (h, w) = (image.height(), image.width());
        if h % p != 0 || w % p != 0 {
            return Err(Error::InvalidArgument(format!("image {w}x{h} is not a multiple of patch {p}")));
        }
        let (gh, gw, c) = (h / p, w / p, self.channels);
        let mut out = Tensor::zeros(&[gh, gw, c]);
        let mut acc = vec![0.0; c];
        for gy in 0..gh {
            for gx in 0..gw {
                acc.copy_from_slice(&self.bias);
                let mut row = 0;
                for py in 0..p {
                    for px in 0..p {
                        let rgb = image.pixel(gy * p + py, gx * p + px);
                        for v in rgb {
                            let centered = v - 0.5;
                            let wrow = &self.weight[row * c..(row + 1) * c];
                            for (a, wv) in acc.iter_mut().zip(wrow) {
                                *a += centered * wv;
                            }
                            row += 1;
                        }
                    }
                }
                for (o, a) in out.pixel_mut(gy, gx).iter_mut().zip(&acc) {
                    *o = a.tanh();
                }
            }
        }
        Ok(out)
    }
}

/// Level-0 features for `image`.
pub fn encode(image: &Image, spec: &EncoderSpec, origin: Origin) -> Result<FeatureMap> {
    let p = spec.patch;
    if p == 0 || image.height() % p != 0 || image.width() % p != 0 {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} is not a multiple of patch {p}",
            image.width(),
            image.height()
        )));
    }
    match &spec.kind {
        EncoderKind::Synthetic => {
            let data = PatchEmbedding::new(p, spec.channels, spec.seed).encode(image)?;
            FeatureMap::new(0, origin, data)
        }
        EncoderKind::FileBacked(path) => {
            let mut map = load_features(path)?;
            let want = (image.height() / p, image.width() / p);
            if map.dims() != want || map.level != 0 {
                return Err(Error::Shape(format!(
                    "feature file {} holds a level-{} {:?} map; image needs level 0 {:?}",
                    path.display(),
                    map.level,
                    map.dims(),
                    want
                )));
            }
            map.origin = origin;
            Ok(map)
        }
    }
}

const ISPF_MAGIC: &[u8; 4] = b"ISPF";
const ISPF_VERSION: u32 = 1;

pub fn encode_features(map: &FeatureMap) -> Vec<u8> {
    let mut w = Writer::default();
    w.tag(ISPF_MAGIC);
    w.u32(ISPF_VERSION);
    w.u32(map.level as u32);
    w.u32(map.height() as u32);
    w.u32(map.width() as u32);
    w.u32(map.channels() as u32);
    w.f32s(map.data.data());
    w.buf
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMap, FormatError> {
    let mut r = Reader::new(bytes);
    r.expect_tag(ISPF_MAGIC)?;
    let version = r.u32("ISPF header")?;
    if version != ISPF_VERSION {
        return Err(FormatError::UnsupportedVersion { format: "ISPF", version });
    }
    let level = r.u32("ISPF header")? as usize;
    let h = r.u32("ISPF header")? as usize;
    let w = r.u32("ISPF header")? as usize;
    let c = r.u32("ISPF header")? as usize;
    let count = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| FormatError::Invalid(format!("ISPF dims {h}x{w}x{c} overflow")))?;
    let data = r.f32s(count, "ISPF payload")?;
    if !r.at_end() {
        return Err(FormatError::Invalid(format!("{} trailing bytes after ISPF payload", r.remaining())));
    }
    let tensor = Tensor::new(vec![h, w, c], data).expect("count matches dims");
    Ok(FeatureMap { level, origin: Origin::External, data: tensor })
}

pub fn save_features(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_features(map))?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMap> {
    Ok(decode_features(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::synth_corpus;

    #[test]
    fn output_dims_follow_patch_grid() {
        let spec = EncoderSpec::synthetic(64, 1);
        let f = encode(&Image::constant(336, 336, [0.3; 3]), &spec, Origin::Overview).unwrap();
        assert_eq!(f.data.shape(), &[24, 24, 64]);
        let spec = EncoderSpec::synthetic(16, 1);
        let f = encode(&Image::constant(112, 112, [0.3; 3]), &spec, Origin::Overview).unwrap();
        assert_eq!(f.data.shape(), &[8, 8, 16]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let img = &synth_corpus(2, 1, 56)[0];
        let a = encode(img, &EncoderSpec::synthetic(8, 5), Origin::Slice(0)).unwrap();
        let b = encode(img, &EncoderSpec::synthetic(8, 5), Origin::Slice(0)).unwrap();
        let c = encode(img, &EncoderSpec::synthetic(8, 6), Origin::Slice(0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn constant_image_gives_constant_features() {
        let f = encode(&Image::constant(56, 84, [0.7, 0.1, 0.4]), &EncoderSpec::synthetic(12, 3), Origin::Overview)
            .unwrap();
        let first = f.data.pixel(0, 0).to_vec();
        for y in 0..f.height() {
            for x in 0..f.width() {
                assert_eq!(f.data.pixel(y, x), first.as_slice());
            }
        }
    }

    #[test]
    fn rejects_non_patch_multiple() {
        let r = encode(&Image::constant(50, 56, [0.0; 3]), &EncoderSpec::default(), Origin::Overview);
        assert!(r.is_err());
    }

    #[test]
    fn truncated_feature_file() {
        let map = FeatureMap::new(1, Origin::Overview, Tensor::full(&[2, 2, 3], 0.5)).unwrap();
        let bytes = encode_features(&map);
        let err = decode_features(&bytes[..bytes.len() - 5]).unwrap_err();
        assert_eq!(
            err,
            FormatError::Truncated { what: "ISPF payload".into(), expected: 48, actual: 43 }
        );
    }

    #[test]
    fn level_survives_round_trip() {
        let map = FeatureMap::new(1, Origin::Overview, Tensor::full(&[2, 3, 4], -0.25)).unwrap();
        let back = decode_features(&encode_features(&map)).unwrap();
        assert_eq!(back.level, 1);
        assert_eq!(back.data, map.data);
    }

    #[test]
    fn wrong_magic() {
        assert!(matches!(decode_features(b"ISPX\x01\0\0\0"), Err(FormatError::BadMagic { .. })));
    }
}
