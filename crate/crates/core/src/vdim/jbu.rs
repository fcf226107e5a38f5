//! Joint bilateral upsampling guided by an RGB image level.
//!
//! Each output pixel `p` averages the bilinearly upsampled features over
//! the 7x7 neighborhood `U` around it with weight
//!
//! ```text
//! w(p, q) = D_dist(p, q) * D_sim(p, q) / sum_{q' in U} D_dist(p, q') * D_sim(p, q')
//! D_dist  = exp(-|p - q|^2 / (2 sigma_dist^2))
//! D_sim   = softmax_{q in U}( <theta(I[p]), theta(I[q])> / sigma_sim^2 )
//! ```
//!
//! The softmax denominator of `D_sim` cancels under the final
//! normalization, so the kernel is computed as a single softmax over
//! `<theta_p, theta_q> / sigma_sim^2 - |p - q|^2 / (2 sigma_dist^2)`.
//! Neighbors outside the map are clamped to the edge.

use super::params::JbuParams;
use crate::error::{Error, Result};
use crate::image_io::Image;
use crate::numerics::{softmax_backward, softmax_in_place, softmax_into, ResizePlan, Tensor};

/// Forward intermediates needed by the backward pass.
pub(crate) struct JbuCache {
    plan: ResizePlan,
    up: Tensor,
    guidance: Vec<f64>,
    /// `<theta_p, theta_q>` per pixel and neighbor.
    dots: Vec<f64>,
    /// Normalized kernel per pixel and neighbor.
    weights: Vec<f64>,
    radius: usize,
    image: Image,
}

/// Parameter and input gradients of one upsampling step.
pub(crate) struct JbuGrads {
    pub input: Option<Tensor>,
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
    pub log_sigma_dist: f64,
    pub log_sigma_sim: f64,
}

fn offsets(radius: usize) -> Vec<(isize, isize, f64)> {
    let r = radius as isize;
    let mut out = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            out.push((dy, dx, (dy * dy + dx * dx) as f64));
        }
    }
    out
}

#[inline]
fn clamp_index(v: usize, d: isize, len: usize) -> usize {
    (v as isize + d).clamp(0, len as isize - 1) as usize
}

fn check_dims(features: &Tensor, image: &Image) -> Result<(usize, usize, usize)> {
    let (h, w, c) = features.hwc()?;
    if (image.height(), image.width()) != (2 * h, 2 * w) {
        return Err(Error::Shape(format!(
            "guidance image is {}x{}, expected {}x{} for a {}x{} feature map",
            image.height(),
            image.width(),
            2 * h,
            2 * w,
            h,
            w
        )));
    }
    Ok((h, w, c))
}

fn project_image(image: &Image, params: &JbuParams) -> Vec<f64> {
    let d = params.guidance_dim();
    let (h, w) = (image.height(), image.width());
    let mut g = vec![0.0; h * w * d];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) * d;
            params.project(image.pixel(y, x), &mut g[i..i + d]);
        }
    }
    g
}

/// The two kernel factors and their normalized product at one output
/// pixel, in neighborhood order (row-major offsets).
#[derive(Debug, Clone)]
pub struct KernelBreakdown {
    pub dist: Vec<f64>,
    pub sim: Vec<f64>,
    pub combined: Vec<f64>,
}

/// Evaluates the kernel factors at output pixel `(y, x)` from their
/// literal definitions, for inspection and testing.
pub fn kernel_at(image: &Image, params: &JbuParams, radius: usize, y: usize, x: usize) -> KernelBreakdown {
    let d = params.guidance_dim();
    let (h, w) = (image.height(), image.width());
    let sd = params.sigma_dist();
    let ss2 = params.sigma_sim().powi(2);
    let mut gp = vec![0.0; d];
    let mut gq = vec![0.0; d];
    params.project(image.pixel(y, x), &mut gp);
    let offs = offsets(radius);
    let mut dist = Vec::with_capacity(offs.len());
    let mut logits = Vec::with_capacity(offs.len());
    for &(dy, dx, d2) in &offs {
        let (qy, qx) = (clamp_index(y, dy, h), clamp_index(x, dx, w));
        params.project(image.pixel(qy, qx), &mut gq);
        let dot: f64 = gp.iter().zip(&gq).map(|(a, b)| a * b).sum();
        logits.push(dot / ss2);
        dist.push((-d2 / (2.0 * sd * sd)).exp());
    }
    let mut sim = vec![0.0; logits.len()];
    softmax_into(&logits, &mut sim);
    let total: f64 = dist.iter().zip(&sim).map(|(a, b)| a * b).sum();
    let combined = dist.iter().zip(&sim).map(|(a, b)| a * b / total).collect();
    KernelBreakdown { dist, sim, combined }
}

pub(crate) fn jbu_forward(
    features: &Tensor,
    image: &Image,
    params: &JbuParams,
    radius: usize,
) -> Result<(Tensor, JbuCache)> {
    let (h, w, c) = check_dims(features, image)?;
    let (oh, ow) = (2 * h, 2 * w);
    let plan = ResizePlan::new(h, w, oh, ow)?;
    let up = plan.apply(features)?;
    let d = params.guidance_dim();
    let guidance = project_image(image, params);
    let offs = offsets(radius);
    let k = offs.len();
    let inv_s2 = (-2.0 * params.log_sigma_sim.item()).exp();
    let inv_2d2 = 0.5 * (-2.0 * params.log_sigma_dist.item()).exp();

    let mut out = Tensor::zeros(&[oh, ow, c]);
    let mut dots = vec![0.0; oh * ow * k];
    let mut weights = vec![0.0; oh * ow * k];
    for y in 0..oh {
        for x in 0..ow {
            let p = y * ow + x;
            let gp = &guidance[p * d..(p + 1) * d];
            let wrow = &mut weights[p * k..(p + 1) * k];
            let drow = &mut dots[p * k..(p + 1) * k];
            for (n, &(dy, dx, d2)) in offs.iter().enumerate() {
                let q = clamp_index(y, dy, oh) * ow + clamp_index(x, dx, ow);
                let gq = &guidance[q * d..(q + 1) * d];
                let dot = gp.iter().zip(gq).fold(0.0, |acc, (a, b)| acc + a * b);
                drow[n] = dot;
                wrow[n] = dot * inv_s2 - d2 * inv_2d2;
            }
            softmax_in_place(wrow);
            let o = out.pixel_mut(y, x);
            for (n, &(dy, dx, _)) in offs.iter().enumerate() {
                let (qy, qx) = (clamp_index(y, dy, oh), clamp_index(x, dx, ow));
                let wn = wrow[n];
                for (ov, uv) in o.iter_mut().zip(up.pixel(qy, qx)) {
                    *ov += wn * uv;
                }
            }
        }
    }
    if !out.all_finite() {
        return Err(Error::NonFinite("guided upsampling produced non-finite features".into()));
    }
    let cache = JbuCache {
        plan,
        up,
        guidance,
        dots,
        weights,
        radius,
        image: image.clone(),
    };
    Ok((out, cache))
}

pub(crate) fn jbu_backward(cache: &JbuCache, params: &JbuParams, grad_out: &Tensor, need_input: bool) -> Result<JbuGrads> {
    let (oh, ow, c) = grad_out.hwc()?;
    let d = params.guidance_dim();
    let offs = offsets(cache.radius);
    let k = offs.len();
    let inv_s2 = (-2.0 * params.log_sigma_sim.item()).exp();
    let inv_2d2 = 0.5 * (-2.0 * params.log_sigma_dist.item()).exp();

    let mut grad_up = Tensor::zeros(&[oh, ow, c]);
    let mut grad_guid = vec![0.0; oh * ow * d];
    let mut d_inv_s2 = 0.0;
    let mut d_inv_2d2 = 0.0;
    let mut a = vec![0.0; k];
    let mut dl = vec![0.0; k];
    for y in 0..oh {
        for x in 0..ow {
            let p = y * ow + x;
            let g = grad_out.pixel(y, x);
            let wrow = &cache.weights[p * k..(p + 1) * k];
            for (n, &(dy, dx, _)) in offs.iter().enumerate() {
                let (qy, qx) = (clamp_index(y, dy, oh), clamp_index(x, dx, ow));
                a[n] = g.iter().zip(cache.up.pixel(qy, qx)).fold(0.0, |acc, (u, v)| acc + u * v);
                let wn = wrow[n];
                for (gu, gv) in grad_up.pixel_mut(qy, qx).iter_mut().zip(g) {
                    *gu += wn * gv;
                }
            }
            softmax_backward(wrow, &a, &mut dl);
            for (n, &(dy, dx, d2)) in offs.iter().enumerate() {
                let q = clamp_index(y, dy, oh) * ow + clamp_index(x, dx, ow);
                let dn = dl[n];
                d_inv_s2 += dn * cache.dots[p * k + n];
                d_inv_2d2 -= dn * d2;
                let s = dn * inv_s2;
                for j in 0..d {
                    let gq = cache.guidance[q * d + j];
                    let gp = cache.guidance[p * d + j];
                    grad_guid[p * d + j] += s * gq;
                    grad_guid[q * d + j] += s * gp;
                }
            }
        }
    }

    let mut proj_weight = Tensor::zeros(&[3, d]);
    let mut proj_bias = Tensor::zeros(&[d]);
    {
        let gw = proj_weight.data_mut();
        let gb = proj_bias.data_mut();
        for y in 0..oh {
            for x in 0..ow {
                let rgb = cache.image.pixel(y, x);
                let gg = &grad_guid[(y * ow + x) * d..(y * ow + x + 1) * d];
                for (j, &v) in gg.iter().enumerate() {
                    gb[j] += v;
                    for (ch, &pix) in rgb.iter().enumerate() {
                        gw[ch * d + j] += pix * v;
                    }
                }
            }
        }
    }
    let input = if need_input { Some(cache.plan.adjoint(&grad_up)?) } else { None };
    Ok(JbuGrads {
        input,
        proj_weight,
        proj_bias,
        // d(inv_s2)/d(log sigma) = -2 inv_s2, likewise for inv_2d2.
        log_sigma_dist: -2.0 * inv_2d2 * d_inv_2d2,
        log_sigma_sim: -2.0 * inv_s2 * d_inv_s2,
    })
}

/// Doubles the resolution of `features` under guidance of `image`, whose
/// dimensions must be exactly twice those of `features`.
pub fn jbu_upsample_tensor(features: &Tensor, image: &Image, params: &JbuParams, radius: usize) -> Result<Tensor> {
    jbu_forward(features, image, params, radius).map(|(out, _)| out)
}
