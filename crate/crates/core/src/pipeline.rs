//! End-to-end orchestration (slice, encode, build pyramids, compress,
//! assemble) and the two baseline projectors.

use std::thread;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{encode, EncoderSpec, Origin};
use crate::error::{Error, Result};
use crate::hiwin_attn::{attend, compress, isp_grid, sinusoidal_2d, AttnParams, HiwinConfig, Linear, TokenMap};
use crate::image_io::{build_image_pyramid, Image};
use crate::numerics::{bilinear_resize, Tensor};
use crate::slicing::{compute_slice_layout, extract_slices, SliceLayout, MAX_SLICES};
use crate::token_org::{assemble, AssembledTokens};
use crate::vdim::{build_isp, InverseSemanticPyramid, VdimParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projector {
    Hiwin,
    /// Bilinear downsample of the finest level, then a linear map.
    Mlp,
    /// Global cross-attention with no window restriction.
    Resampler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub encoder: EncoderSpec,
    pub hiwin: HiwinConfig,
    pub projector: Projector,
    pub max_slices: usize,
    /// Worker threads for per-image work; results do not depend on it.
    pub threads: usize,
    /// Seeds the MLP baseline weights.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderSpec::default(),
            hiwin: HiwinConfig::default(),
            projector: Projector::Hiwin,
            max_slices: MAX_SLICES,
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub layout: SliceLayout,
    /// Sampling grid `(r_w, r_h)` per image: overview first, then slices.
    pub grids: Vec<(usize, usize)>,
    pub tokens: AssembledTokens,
}

impl PipelineOutput {
    pub fn token_count(&self) -> usize {
        self.tokens.token_count()
    }
}

/// Encodes `image` (whose sides must be patch multiples) and expands it
/// into a three-level pyramid.
pub fn image_isp(image: &Image, encoder: &EncoderSpec, vdim: &VdimParams, origin: Origin) -> Result<InverseSemanticPyramid> {
    let f0 = encode(image, encoder, origin)?;
    let pyramid = build_image_pyramid(image, encoder.patch, 3)?;
    build_isp(&f0, &pyramid, vdim)
}

/// Seeded linear map of the MLP baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub proj: Linear,
}

impl MlpParams {
    pub fn init(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b1a_5e00_0000_0002);
        Self {
            proj: Linear::init(channels, channels, &mut rng),
        }
    }
}

/// Bilinearly resamples the finest level to `n x n` and applies the MLP
/// projection to every cell.
pub fn baseline_mlp(isp: &InverseSemanticPyramid, n: usize, params: &MlpParams) -> Result<TokenMap> {
    let top = isp.levels.last().expect("pyramid has at least one level");
    if params.proj.c_in() != top.channels() {
        return Err(Error::Shape(format!(
            "MLP expects {} channels, pyramid has {}",
            params.proj.c_in(),
            top.channels()
        )));
    }
    let small = bilinear_resize(&top.data, n, n)?;
    let data = params.proj.apply_rows(small.data());
    TokenMap::new(Tensor::new(vec![n, n, params.proj.c_out()], data)?, top.origin)
}

/// Every query attends to every feature of every level. Keys get the same
/// level and position embeddings as in windowed attention, evaluated at
/// cell centers.
pub fn baseline_resampler(isp: &InverseSemanticPyramid, params: &AttnParams) -> Result<TokenMap> {
    let c = params.channels();
    if isp.channels() != c || isp.levels.len() != params.level_embed.shape()[0] {
        return Err(Error::Shape(format!(
            "resampler expects 3 levels of {c} channels, got {} of {}",
            isp.levels.len(),
            isp.channels()
        )));
    }
    let total: usize = isp.levels.iter().map(|l| l.height() * l.width()).sum();
    let mut keys = Vec::with_capacity(total * c);
    let mut values = Vec::with_capacity(total * c);
    let mut pos = vec![0.0; c];
    for (l, map) in isp.levels.iter().enumerate() {
        let (h, w) = map.dims();
        let phi = params.level(l);
        for y in 0..h {
            for x in 0..w {
                let f = map.data.pixel(y, x);
                sinusoidal_2d((y as f64 + 0.5) / h as f64, (x as f64 + 0.5) / w as f64, &mut pos);
                keys.extend(f.iter().zip(phi).zip(&pos).map(|((a, b), p)| a + b + p));
                values.extend_from_slice(f);
            }
        }
    }
    let k = params.k_proj.apply_rows(&keys);
    let v = params.v_proj.apply_rows(&values);

    let n = params.n();
    let mut out = Tensor::zeros(&[n, n, c]);
    let (mut q, mut qp, mut mixed) = (vec![0.0; c], vec![0.0; c], vec![0.0; c]);
    for i in 0..n {
        for j in 0..n {
            sinusoidal_2d((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64, &mut q);
            for (qv, base) in q.iter_mut().zip(params.queries.pixel(i, j)) {
                *qv += base;
            }
            params.q_proj.apply(&q, &mut qp);
            attend(&qp, &k, &v, params.heads, &mut mixed);
            params.out_proj.apply(&mixed, out.pixel_mut(i, j));
        }
    }
    if !out.all_finite() {
        return Err(Error::NonFinite("resampler produced non-finite tokens".into()));
    }
    TokenMap::new(out, isp.level(0).origin)
}

fn project(isp: &InverseSemanticPyramid, attn: &AttnParams, config: &PipelineConfig) -> Result<TokenMap> {
    match config.projector {
        Projector::Hiwin => compress(isp, attn, &config.hiwin),
        Projector::Mlp => baseline_mlp(isp, config.hiwin.n, &MlpParams::init(isp.channels(), config.seed)),
        Projector::Resampler => baseline_resampler(isp, attn),
    }
}

fn process(image: &Image, origin: Origin, vdim: &VdimParams, attn: &AttnParams, config: &PipelineConfig) -> Result<((usize, usize), TokenMap)> {
    let isp = image_isp(image, &config.encoder, vdim, origin)?;
    Ok((isp_grid(&isp, &config.hiwin), project(&isp, attn, config)?))
}

/// Slices `image`, compresses the overview and every slice, and stitches
/// the results. Output is identical for any thread count.
pub fn run_pipeline(image: &Image, vdim: &VdimParams, attn: &AttnParams, config: &PipelineConfig) -> Result<PipelineOutput> {
    if attn.channels() != config.encoder.channels {
        return Err(Error::Shape(format!(
            "encoder emits {} channels, attention expects {}",
            config.encoder.channels,
            attn.channels()
        )));
    }
    let layout = compute_slice_layout(image.width(), image.height(), config.max_slices)?;
    let slices = extract_slices(image, &layout)?;
    let mut jobs: Vec<(&Image, Origin)> = vec![(&slices.overview, Origin::Overview)];
    jobs.extend(slices.slices.iter().enumerate().map(|(k, s)| (s, Origin::Slice(k))));

    let threads = config.threads.clamp(1, jobs.len());
    let results: Vec<Result<((usize, usize), TokenMap)>> = if threads == 1 {
        jobs.iter().map(|&(img, o)| process(img, o, vdim, attn, config)).collect()
    } else {
        let mut slots: Vec<Option<Result<_>>> = (0..jobs.len()).map(|_| None).collect();
        thread::scope(|scope| {
            let chunk = jobs.len().div_ceil(threads);
            for (job_chunk, slot_chunk) in jobs.chunks(chunk).zip(slots.chunks_mut(chunk)) {
                scope.spawn(move || {
                    for (&(img, o), slot) in job_chunk.iter().zip(slot_chunk) {
                        *slot = Some(process(img, o, vdim, attn, config));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every job ran")).collect()
    };

    let mut grids = Vec::with_capacity(results.len());
    let mut maps = Vec::with_capacity(results.len());
    for r in results {
        let (grid, map) = r?;
        grids.push(grid);
        maps.push(map);
    }
    let overview = maps.remove(0);
    let tokens = assemble(&maps, &layout, overview)?;
    Ok(PipelineOutput { layout, grids, tokens })
}
