//! Learnable attention downsampler mapping a high-resolution level back to
//! the patch grid of level 0.
//!
//! The level is bilinearly upsampled to full image resolution, split into
//! non-overlapping `patch x patch` windows, and each window is reduced to
//! one cell by a saliency-softmax weighted average of affinely normalized
//! features.

use super::params::DownLevelParams;
use crate::error::{Error, Result};
use crate::numerics::{softmax_backward, softmax_in_place, ResizePlan, Tensor};

pub(crate) struct DownCache {
    plan: ResizePlan,
    up: Tensor,
    /// Saliency softmax per window, in window-pixel order.
    alpha: Vec<f64>,
    patch: usize,
}

pub(crate) struct DownGrads {
    pub input: Option<Tensor>,
    pub saliency: Tensor,
    pub scale: Tensor,
    pub shift: Tensor,
}

fn window_pixels(gy: usize, gx: usize, patch: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..patch).flat_map(move |py| (0..patch).map(move |px| (gy * patch + py, gx * patch + px)))
}

pub(crate) fn down_forward(
    high: &Tensor,
    image_dims: (usize, usize),
    params: &DownLevelParams,
    patch: usize,
) -> Result<(Tensor, DownCache)> {
    let (h, w, c) = high.hwc()?;
    let (ih, iw) = image_dims;
    if patch == 0 || ih % patch != 0 || iw % patch != 0 {
        return Err(Error::InvalidArgument(format!(
            "image dims {iw}x{ih} are not multiples of the {patch}px window"
        )));
    }
    if params.channels() != c {
        return Err(Error::Shape(format!(
            "downsampler has {} channels, features have {c}",
            params.channels()
        )));
    }
    let plan = ResizePlan::new(h, w, ih, iw)?;
    let up = plan.apply(high)?;
    let (gh, gw) = (ih / patch, iw / patch);
    let win = patch * patch;
    let k = params.saliency.data();
    let scale = params.scale.data();
    let shift = params.shift.data();

    let mut out = Tensor::zeros(&[gh, gw, c]);
    let mut alpha = vec![0.0; gh * gw * win];
    for gy in 0..gh {
        for gx in 0..gw {
            let cell = gy * gw + gx;
            let arow = &mut alpha[cell * win..(cell + 1) * win];
            for (slot, (y, x)) in arow.iter_mut().zip(window_pixels(gy, gx, patch)) {
                *slot = up.pixel(y, x).iter().zip(k).fold(0.0, |acc, (u, kv)| acc + u * kv);
            }
            softmax_in_place(arow);
            let o = out.pixel_mut(gy, gx);
            for (&a, (y, x)) in arow.iter().zip(window_pixels(gy, gx, patch)) {
                for (ov, uv) in o.iter_mut().zip(up.pixel(y, x)) {
                    *ov += a * uv;
                }
            }
            for ((ov, s), b) in o.iter_mut().zip(scale).zip(shift) {
                *ov = s * *ov + b;
            }
        }
    }
    Ok((out, DownCache { plan, up, alpha, patch }))
}

pub(crate) fn down_backward(
    cache: &DownCache,
    params: &DownLevelParams,
    grad_out: &Tensor,
    need_input: bool,
) -> Result<DownGrads> {
    let (gh, gw, c) = grad_out.hwc()?;
    let patch = cache.patch;
    let win = patch * patch;
    let k = params.saliency.data();
    let scale = params.scale.data();
    let (ih, iw, _) = cache.up.hwc()?;

    let mut grad_up = Tensor::zeros(&[ih, iw, c]);
    let mut g_k = vec![0.0; c];
    let mut g_scale = vec![0.0; c];
    let mut g_shift = vec![0.0; c];
    let mut pooled = vec![0.0; c];
    let mut d_alpha = vec![0.0; win];
    let mut d_logit = vec![0.0; win];
    for gy in 0..gh {
        for gx in 0..gw {
            let cell = gy * gw + gx;
            let arow = &cache.alpha[cell * win..(cell + 1) * win];
            let g = grad_out.pixel(gy, gx);

            pooled.iter_mut().for_each(|v| *v = 0.0);
            for (&a, (y, x)) in arow.iter().zip(window_pixels(gy, gx, patch)) {
                for (pv, uv) in pooled.iter_mut().zip(cache.up.pixel(y, x)) {
                    *pv += a * uv;
                }
            }
            for ch in 0..c {
                g_shift[ch] += g[ch];
                g_scale[ch] += g[ch] * pooled[ch];
            }
            // out = scale * sum(alpha u) + shift, so d out / d alpha_i = scale . u_i
            for (da, (y, x)) in d_alpha.iter_mut().zip(window_pixels(gy, gx, patch)) {
                *da = cache
                    .up
                    .pixel(y, x)
                    .iter()
                    .zip(scale)
                    .zip(g)
                    .fold(0.0, |acc, ((u, s), gv)| acc + u * s * gv);
            }
            softmax_backward(arow, &d_alpha, &mut d_logit);
            for ((&a, &dl), (y, x)) in arow.iter().zip(&d_logit).zip(window_pixels(gy, gx, patch)) {
                let u = cache.up.pixel(y, x);
                for ch in 0..c {
                    g_k[ch] += dl * u[ch];
                }
                if need_input {
                    let gu = grad_up.pixel_mut(y, x);
                    for ch in 0..c {
                        gu[ch] += a * scale[ch] * g[ch] + dl * k[ch];
                    }
                }
            }
        }
    }
    let input = if need_input { Some(cache.plan.adjoint(&grad_up)?) } else { None };
    Ok(DownGrads {
        input,
        saliency: Tensor::new(vec![c], g_k)?,
        scale: Tensor::new(vec![c], g_scale)?,
        shift: Tensor::new(vec![c], g_shift)?,
    })
}

/// Saliency softmax weights of window `(gy, gx)` for inspection.
pub fn window_weights(high: &Tensor, image_dims: (usize, usize), params: &DownLevelParams, patch: usize, gy: usize, gx: usize) -> Result<Vec<f64>> {
    let (_, cache) = down_forward(high, image_dims, params, patch)?;
    let gw = image_dims.1 / patch;
    let win = patch * patch;
    let cell = gy * gw + gx;
    Ok(cache.alpha[cell * win..(cell + 1) * win].to_vec())
}
