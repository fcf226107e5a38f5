//! Visual detail injection: guided upsampling into an inverse semantic
//! pyramid, the attention downsampler, the multi-level reconstruction
//! loss, and pretraining.

mod down;
mod jbu;
mod params;
mod train;

pub use down::window_weights;
pub use jbu::{jbu_upsample_tensor, kernel_at, KernelBreakdown};
pub use params::{
    DownLevelParams, DownsamplerParams, JbuParams, VdimParams, DEFAULT_RADIUS, GUIDANCE_DIM, UPSAMPLE_LEVELS,
};
pub use train::{corpus_loss, pretrain_prepared, pretrain_vdim, PreparedSample, TrainConfig, TrainReport};

use crate::encoder::FeatureMap;
use crate::error::{Error, Result};
use crate::image_io::{ImagePyramid, Image};
use crate::numerics::{Gradients, Tape, Tensor, Var};

/// Feature maps `{F^0, F^1, F^2}` of one image, doubling in resolution
/// per level.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseSemanticPyramid {
    pub levels: Vec<FeatureMap>,
}

impl InverseSemanticPyramid {
    pub fn new(levels: Vec<FeatureMap>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
        }
        let c = levels[0].channels();
        for pair in levels.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            if hi.dims() != (2 * lo.height(), 2 * lo.width()) || hi.channels() != c {
                return Err(Error::Shape(format!(
                    "level {} is {:?}x{}, expected double of {:?}x{}",
                    hi.level,
                    hi.dims(),
                    hi.channels(),
                    lo.dims(),
                    c
                )));
            }
        }
        Ok(Self { levels })
    }

    pub fn level(&self, l: usize) -> &FeatureMap {
        &self.levels[l]
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels()
    }

    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|l| l.dims()).collect()
    }

    /// Image dims implied by level 0 and the patch size.
    pub fn image_dims(&self, patch: usize) -> (usize, usize) {
        let (h, w) = self.levels[0].dims();
        (h * patch, w * patch)
    }
}

/// Upsamples level `level` to `level + 1` guided by `guidance`, the image
/// pyramid level matching the target resolution.
pub fn jbu_upsample(features: &FeatureMap, guidance: &Image, params: &VdimParams, level: usize) -> Result<FeatureMap> {
    let p = params.for_level(level + 1)?;
    let out = jbu::jbu_upsample_tensor(&features.data, guidance, p, params.radius)?;
    FeatureMap::new(level + 1, features.origin, out)
}

/// Reduces a level-1 or level-2 map back to the level-0 grid of an image
/// of `image_dims = (H, W)` using `patch x patch` windows.
pub fn attention_downsample(
    high: &FeatureMap,
    image_dims: (usize, usize),
    params: &DownsamplerParams,
    patch: usize,
) -> Result<FeatureMap> {
    let p = params.for_level(high.level)?;
    let (out, _) = down::down_forward(&high.data, image_dims, p, patch)?;
    FeatureMap::new(0, high.origin, out)
}

/// Expands `f0` into a three-level pyramid.
pub fn build_isp(f0: &FeatureMap, pyramid: &ImagePyramid, vdim: &VdimParams) -> Result<InverseSemanticPyramid> {
    if pyramid.levels.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "image pyramid has {} levels, need 3",
            pyramid.levels.len()
        )));
    }
    let f1 = jbu_upsample(f0, pyramid.level(1), vdim, 0)?;
    let f2 = jbu_upsample(&f1, pyramid.level(2), vdim, 1)?;
    InverseSemanticPyramid::new(vec![f0.clone(), f1, f2])
}

/// `1/2 * sum_{l=1,2} mean((F^0 - Down(F^l))^2)`, with the squared norm
/// taken as a per-element mean.
pub fn mlr_loss(isp: &InverseSemanticPyramid, down: &DownsamplerParams, image_dims: (usize, usize), patch: usize) -> Result<f64> {
    if isp.levels.len() != 3 {
        return Err(Error::InvalidArgument(format!("MLR loss needs 3 levels, got {}", isp.levels.len())));
    }
    let f0 = &isp.levels[0].data;
    let mut total = 0.0;
    for l in 1..=2 {
        let d = attention_downsample(&isp.levels[l], image_dims, down, patch)?;
        total += mse(f0, &d.data)?;
    }
    Ok(0.5 * total)
}

/// MLR loss of pre-downsampled levels: `1/2 * (mse(F0, D1) + mse(F0, D2))`.
pub fn mlr_from_downsampled(f0: &Tensor, down1: &Tensor, down2: &Tensor) -> Result<f64> {
    Ok(0.5 * (mse(f0, down1)? + mse(f0, down2)?))
}

fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let total = a.data().iter().zip(b.data()).fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y));
    Ok(total / a.len().max(1) as f64)
}

/// Tape handles for every trainable tensor, in declaration order.
pub struct ParamVars {
    pub vdim: Vec<Var>,
    pub down: Vec<Var>,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, vdim: &VdimParams, down: &DownsamplerParams) -> Self {
        Self {
            vdim: vdim.tensors().into_iter().map(|t| tape.param(t.clone())).collect(),
            down: down.tensors().into_iter().map(|t| tape.param(t.clone())).collect(),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = Var> + '_ {
        self.vdim.iter().chain(&self.down).copied()
    }

    /// Gradients in the same order as `VdimParams::tensors` followed by
    /// `DownsamplerParams::tensors`.
    pub fn collect<'g>(&self, grads: &'g Gradients) -> Vec<&'g Tensor> {
        self.all().map(|v| grads.get(v).expect("registered params always get gradients")).collect()
    }
}

fn jbu_params_from(values: &[&Tensor]) -> JbuParams {
    JbuParams {
        proj_weight: values[0].clone(),
        proj_bias: values[1].clone(),
        log_sigma_dist: values[2].clone(),
        log_sigma_sim: values[3].clone(),
    }
}

fn down_params_from(values: &[&Tensor]) -> DownLevelParams {
    DownLevelParams {
        saliency: values[0].clone(),
        scale: values[1].clone(),
        shift: values[2].clone(),
    }
}

/// Records one guided-upsampling step on the tape.
pub fn record_jbu(tape: &mut Tape, features: Var, guidance: &Image, level_vars: &[Var], radius: usize) -> Result<Var> {
    let values: Vec<&Tensor> = level_vars.iter().map(|&v| tape.value(v)).collect();
    let params = jbu_params_from(&values);
    let (out, cache) = jbu::jbu_forward(tape.value(features), guidance, &params, radius)?;
    let mut parents = vec![features];
    parents.extend_from_slice(level_vars);
    Ok(tape.op(
        out,
        &parents,
        Box::new(move |g, parents, need| {
            let params = jbu_params_from(&parents[1..]);
            let grads = jbu::jbu_backward(&cache, &params, g, need[0]).expect("shapes fixed at forward time");
            vec![
                grads.input,
                Some(grads.proj_weight),
                Some(grads.proj_bias),
                Some(Tensor::scalar(grads.log_sigma_dist)),
                Some(Tensor::scalar(grads.log_sigma_sim)),
            ]
        }),
    ))
}

/// Records one attention-downsampling step on the tape.
pub fn record_down(tape: &mut Tape, high: Var, image_dims: (usize, usize), level_vars: &[Var], patch: usize) -> Result<Var> {
    let values: Vec<&Tensor> = level_vars.iter().map(|&v| tape.value(v)).collect();
    let params = down_params_from(&values);
    let (out, cache) = down::down_forward(tape.value(high), image_dims, &params, patch)?;
    let mut parents = vec![high];
    parents.extend_from_slice(level_vars);
    Ok(tape.op(
        out,
        &parents,
        Box::new(move |g, parents, need| {
            let params = down_params_from(&parents[1..]);
            let grads = down::down_backward(&cache, &params, g, need[0]).expect("shapes fixed at forward time");
            vec![grads.input, Some(grads.saliency), Some(grads.scale), Some(grads.shift)]
        }),
    ))
}

/// Records the full MLR loss of one image: pyramid construction from
/// `f0` followed by both reconstruction terms. Returns the scalar node.
pub fn record_mlr(
    tape: &mut Tape,
    vars: &ParamVars,
    f0: &Tensor,
    pyramid: &ImagePyramid,
    radius: usize,
) -> Result<Var> {
    let patch = pyramid.patch;
    let (h0, w0, _) = f0.hwc()?;
    let image_dims = (h0 * patch, w0 * patch);
    let f0_var = tape.constant(f0.clone());
    let f1 = record_jbu(tape, f0_var, pyramid.level(1), &vars.vdim[0..4], radius)?;
    let f2 = record_jbu(tape, f1, pyramid.level(2), &vars.vdim[4..8], radius)?;
    let mut terms = Vec::with_capacity(2);
    for (level_var, dvars) in [(f1, &vars.down[0..3]), (f2, &vars.down[3..6])] {
        let d = record_down(tape, level_var, image_dims, dvars, patch)?;
        let r = tape.sub(f0_var, d)?;
        terms.push(tape.mean_square(r));
    }
    let sum = tape.sum_scalars(&terms)?;
    Ok(tape.scale(sum, 0.5))
}

/// MLR loss and its gradients for a single image.
pub fn mlr_loss_and_grads(
    f0: &Tensor,
    pyramid: &ImagePyramid,
    vdim: &VdimParams,
    down: &DownsamplerParams,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, vdim, down);
    let loss = record_mlr(&mut tape, &vars, f0, pyramid, vdim.radius)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), vars.collect(&grads).into_iter().cloned().collect()))
}

/// Largest relative error between tape gradients and central differences
/// of step `h`, over every upsampling and downsampler parameter.
pub fn mlr_gradient_check(
    f0: &Tensor,
    pyramid: &ImagePyramid,
    vdim: &VdimParams,
    down: &DownsamplerParams,
    h: f64,
) -> Result<f64> {
    let (_, grads) = mlr_loss_and_grads(f0, pyramid, vdim, down)?;
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().iter().copied()).collect();
    let x0: Vec<f64> = vdim
        .tensors()
        .into_iter()
        .chain(down.tensors())
        .flat_map(|t| t.data().iter().copied())
        .collect();
    let f0_map = FeatureMap::new(0, crate::encoder::Origin::Overview, f0.clone())?;
    let (fh, fw) = f0_map.dims();
    let image_dims = (fh * pyramid.patch, fw * pyramid.patch);
    let (mut v, mut d) = (vdim.clone(), down.clone());
    crate::numerics::grad_check(
        |x| {
            let mut offset = 0;
            for t in v.tensors_mut().into_iter().chain(d.tensors_mut()) {
                let n = t.len();
                t.data_mut().copy_from_slice(&x[offset..offset + n]);
                offset += n;
            }
            build_isp(&f0_map, pyramid, &v)
                .and_then(|isp| mlr_loss(&isp, &d, image_dims, pyramid.patch))
                .unwrap_or(f64::NAN)
        },
        &x0,
        &analytic,
        h,
    )
}

#[cfg(test)]
mod tests;
