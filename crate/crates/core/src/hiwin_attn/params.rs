use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::window::PROPOSALS;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Query grid side; `N * N = 144` tokens per image.
pub const DEFAULT_N: usize = 12;
pub const DEFAULT_HEADS: usize = 4;
/// Levels of the pyramid the keys are drawn from.
pub const KEY_LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct HiwinConfig {
    pub n: usize,
    /// Candidate sampling grids `(r_w, r_h)`, in tie-break order.
    pub proposals: Vec<(usize, usize)>,
    pub heads: usize,
}

impl Default for HiwinConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            proposals: PROPOSALS.to_vec(),
            heads: DEFAULT_HEADS,
        }
    }
}

impl HiwinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.heads == 0 || self.proposals.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "bad attention config: n={}, heads={}, {} proposals",
                self.n,
                self.heads,
                self.proposals.len()
            )));
        }
        if self.proposals.iter().any(|&(w, h)| w == 0 || h == 0) {
            return Err(Error::InvalidArgument("grid proposals must be non-empty".into()));
        }
        Ok(())
    }
}

/// Row-vector linear map `y = x W + b` with `W: [C_in, C_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub(crate) fn init(c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (c_in as f64).sqrt();
        let weight = (0..c_in * c_out).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = (0..c_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            weight: Tensor::new(vec![c_in, c_out], weight).expect("c_in*c_out values"),
            bias: Tensor::new(vec![c_out], bias).expect("c_out values"),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.c_out();
        out.copy_from_slice(self.bias.data());
        for (row, &xv) in self.weight.data().chunks_exact(n).zip(x) {
            for (o, wv) in out.iter_mut().zip(row) {
                *o += xv * wv;
            }
        }
    }

    /// Applies the map to each `C_in`-wide row of `xs`.
    pub fn apply_rows(&self, xs: &[f64]) -> Vec<f64> {
        let (ci, co) = (self.c_in(), self.c_out());
        let mut out = vec![0.0; xs.len() / ci * co];
        for (x, o) in xs.chunks_exact(ci).zip(out.chunks_exact_mut(co)) {
            self.apply(x, o);
        }
        out
    }
}

/// Learnable queries, level embeddings, and the four attention
/// projections.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    /// `[N, N, C]`
    pub queries: Tensor,
    /// `[3, C]`, added to keys only.
    pub level_embed: Tensor,
    pub q_proj: Linear,
    pub k_proj: Linear,
    pub v_proj: Linear,
    pub out_proj: Linear,
    pub heads: usize,
}

impl AttnParams {
    pub fn init(config: &HiwinConfig, channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if channels == 0 || channels % 4 != 0 || channels % config.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "{channels} channels must be a positive multiple of 4 and of {} heads",
                config.heads
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4a77_0000_0000_0003);
        let mut uniform = |n: usize, bound: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let n = config.n;
        let queries = Tensor::new(vec![n, n, channels], uniform(n * n * channels, 0.1))?;
        let level_embed = Tensor::new(vec![KEY_LEVELS, channels], uniform(KEY_LEVELS * channels, 0.1))?;
        Ok(Self {
            queries,
            level_embed,
            q_proj: Linear::init(channels, channels, &mut rng),
            k_proj: Linear::init(channels, channels, &mut rng),
            v_proj: Linear::init(channels, channels, &mut rng),
            out_proj: Linear::init(channels, channels, &mut rng),
            heads: config.heads,
        })
    }

    pub fn n(&self) -> usize {
        self.queries.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.queries.shape()[2]
    }

    pub fn level(&self, l: usize) -> &[f64] {
        let c = self.channels();
        &self.level_embed.data()[l * c..(l + 1) * c]
    }

    /// All tensors in declaration order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.queries, &self.level_embed];
        for l in [&self.q_proj, &self.k_proj, &self.v_proj, &self.out_proj] {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    /// Rebuilds parameters from tensors in [`AttnParams::tensors`] order.
    pub fn from_tensors(tensors: Vec<Tensor>, heads: usize) -> Result<Self> {
        let [queries, level_embed, qw, qb, kw, kb, vw, vb, ow, ob]: [Tensor; 10] = tensors
            .try_into()
            .map_err(|t: Vec<Tensor>| Error::InvalidArgument(format!("expected 10 attention tensors, got {}", t.len())))?;
        let (n, _, c) = queries.hwc()?;
        if queries.shape()[1] != n {
            return Err(Error::Shape(format!("query grid {:?} is not square", queries.shape())));
        }
        if level_embed.shape() != [KEY_LEVELS, c] {
            return Err(Error::Shape(format!("level embeddings {:?}, expected [3, {c}]", level_embed.shape())));
        }
        let linear = |weight: Tensor, bias: Tensor| -> Result<Linear> {
            if weight.shape() != [c, c] || bias.shape() != [c] {
                return Err(Error::Shape(format!(
                    "projection {:?} + {:?}, expected [{c}, {c}] + [{c}]",
                    weight.shape(),
                    bias.shape()
                )));
            }
            Ok(Linear { weight, bias })
        };
        if heads == 0 || c % heads != 0 || c % 4 != 0 {
            return Err(Error::InvalidArgument(format!("{c} channels cannot be split over {heads} heads")));
        }
        Ok(Self {
            queries,
            level_embed,
            q_proj: linear(qw, qb)?,
            k_proj: linear(kw, kb)?,
            v_proj: linear(vw, vb)?,
            out_proj: linear(ow, ob)?,
            heads,
        })
    }
}

/// Fixed 2D sinusoidal embedding of a point in `[0,1]^2`: `C/4`
/// geometric frequencies from `pi` to `64 pi`, sine and cosine, first for
/// `y` then for `x`.
pub fn sinusoidal_2d(y: f64, x: f64, out: &mut [f64]) {
    let f = out.len() / 4;
    for k in 0..f {
        let omega = std::f64::consts::PI * 64f64.powf(k as f64 / f.max(2).saturating_sub(1) as f64);
        out[2 * k] = (y * omega).sin();
        out[2 * k + 1] = (y * omega).cos();
        out[2 * f + 2 * k] = (x * omega).sin();
        out[2 * f + 2 * k + 1] = (x * omega).cos();
    }
}
