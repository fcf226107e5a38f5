use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Width of the guidance projection applied to RGB pixels.
pub const GUIDANCE_DIM: usize = 32;
/// Neighborhood radius; the window side is `2 * radius + 1 = 7`.
pub const DEFAULT_RADIUS: usize = 3;
/// Number of upsampling steps (levels 1 and 2).
pub const UPSAMPLE_LEVELS: usize = 2;

/// Guided-upsampling weights for one pyramid level.
///
/// The widths are stored as logs so that the effective `sigma` values stay
/// strictly positive under unconstrained updates.
#[derive(Debug, Clone, PartialEq)]
pub struct JbuParams {
    /// `[3, d]` projection of RGB guidance pixels.
    pub proj_weight: Tensor,
    /// `[d]`
    pub proj_bias: Tensor,
    /// Scalar `ln(sigma_dist)`.
    pub log_sigma_dist: Tensor,
    /// Scalar `ln(sigma_sim)`.
    pub log_sigma_sim: Tensor,
}

impl JbuParams {
    pub fn init(guidance_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let proj_weight = (0..3 * guidance_dim).map(|_| rng.random_range(-0.1..0.1)).collect();
        let proj_bias = (0..guidance_dim).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self {
            proj_weight: Tensor::new(vec![3, guidance_dim], proj_weight).expect("3*d values"),
            proj_bias: Tensor::new(vec![guidance_dim], proj_bias).expect("d values"),
            log_sigma_dist: Tensor::scalar(0.0),
            log_sigma_sim: Tensor::scalar(0.0),
        }
    }

    pub fn guidance_dim(&self) -> usize {
        self.proj_bias.len()
    }

    pub fn sigma_dist(&self) -> f64 {
        self.log_sigma_dist.item().exp()
    }

    pub fn sigma_sim(&self) -> f64 {
        self.log_sigma_sim.item().exp()
    }

    /// Projects one RGB pixel into guidance space.
    pub fn project(&self, rgb: [f64; 3], out: &mut [f64]) {
        let d = self.guidance_dim();
        let w = self.proj_weight.data();
        out.copy_from_slice(self.proj_bias.data());
        for (c, v) in rgb.iter().enumerate() {
            for (o, wv) in out.iter_mut().zip(&w[c * d..(c + 1) * d]) {
                *o += v * wv;
            }
        }
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.proj_weight, &self.proj_bias, &self.log_sigma_dist, &self.log_sigma_sim]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.proj_weight,
            &mut self.proj_bias,
            &mut self.log_sigma_dist,
            &mut self.log_sigma_sim,
        ]
    }
}

/// Trainable guided-upsampling parameters, one set per upsampling step.
#[derive(Debug, Clone, PartialEq)]
pub struct VdimParams {
    /// `levels[0]` produces level 1, `levels[1]` produces level 2.
    pub levels: Vec<JbuParams>,
    pub radius: usize,
}

impl VdimParams {
    pub fn init(seed: u64) -> Self {
        Self::init_with(seed, GUIDANCE_DIM, DEFAULT_RADIUS)
    }

    pub fn init_with(seed: u64, guidance_dim: usize, radius: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7d1a_0000_0000_0001);
        Self {
            levels: (0..UPSAMPLE_LEVELS).map(|_| JbuParams::init(guidance_dim, &mut rng)).collect(),
            radius,
        }
    }

    pub fn guidance_dim(&self) -> usize {
        self.levels[0].guidance_dim()
    }

    /// Parameters producing level `target` (1 or 2).
    pub fn for_level(&self, target: usize) -> Result<&JbuParams> {
        target
            .checked_sub(1)
            .and_then(|i| self.levels.get(i))
            .ok_or_else(|| Error::InvalidArgument(format!("no upsampling parameters for level {target}")))
    }

    /// All tensors in declaration order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.levels.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.levels.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// Attention-downsampler weights for one level: a 1x1 saliency
/// projection and a per-channel affine normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DownLevelParams {
    /// `[C]` saliency logit weights.
    pub saliency: Tensor,
    /// `[C]`
    pub scale: Tensor,
    /// `[C]`
    pub shift: Tensor,
}

impl DownLevelParams {
    /// Mean pooling to start with: zero saliency and identity affine.
    pub fn identity(channels: usize) -> Self {
        Self {
            saliency: Tensor::zeros(&[channels]),
            scale: Tensor::full(&[channels], 1.0),
            shift: Tensor::zeros(&[channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.saliency.len()
    }

    fn tensors(&self) -> [&Tensor; 3] {
        [&self.saliency, &self.scale, &self.shift]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.saliency, &mut self.scale, &mut self.shift]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownsamplerParams {
    /// `levels[0]` reads level 1, `levels[1]` reads level 2.
    pub levels: Vec<DownLevelParams>,
}

impl DownsamplerParams {
    pub fn init(channels: usize) -> Self {
        Self {
            levels: (0..UPSAMPLE_LEVELS).map(|_| DownLevelParams::identity(channels)).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels()
    }

    pub fn for_level(&self, source: usize) -> Result<&DownLevelParams> {
        source
            .checked_sub(1)
            .and_then(|i| self.levels.get(i))
            .ok_or_else(|| Error::InvalidArgument(format!("no downsampler for level {source}")))
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.levels.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.levels.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}
