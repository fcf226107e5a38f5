//! Separable bilinear resampling with half-pixel (align-corners = false)
//! coordinates and clamp-to-edge borders.

use super::Tensor;
use crate::error::{Error, Result};

/// Two-tap interpolation weights along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub w_lo: f64,
    pub w_hi: f64,
}

/// Taps mapping `out_len` output positions onto an input axis of `in_len`.
pub fn axis_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            if in_len == out_len {
                return Tap { lo: o, hi: o, w_lo: 1.0, w_hi: 0.0 };
            }
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            let frac = if lo == hi { 0.0 } else { src - lo as f64 };
            Tap { lo, hi, w_lo: 1.0 - frac, w_hi: frac }
        })
        .collect()
}

/// Precomputed resampling plan between two fixed grid sizes, reusable
/// for forward and adjoint passes.
#[derive(Debug, Clone)]
pub struct ResizePlan {
    in_h: usize,
    in_w: usize,
    rows: Vec<Tap>,
    cols: Vec<Tap>,
}

impl ResizePlan {
    pub fn new(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Result<Self> {
        if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
            return Err(Error::InvalidArgument(format!(
                "bilinear resize needs non-empty grids, got {in_h}x{in_w} -> {out_h}x{out_w}"
            )));
        }
        Ok(Self {
            in_h,
            in_w,
            rows: axis_taps(in_h, out_h),
            cols: axis_taps(in_w, out_w),
        })
    }

    pub fn out_dims(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn apply(&self, src: &Tensor) -> Result<Tensor> {
        let (h, w, c) = src.hwc()?;
        if (h, w) != (self.in_h, self.in_w) {
            return Err(Error::Shape(format!(
                "resize plan expects {}x{}, got {h}x{w}",
                self.in_h, self.in_w
            )));
        }
        let (oh, ow) = self.out_dims();
        let mut out = Tensor::zeros(&[oh, ow, c]);
        let data = src.data();
        let dst = out.data_mut();
        for (oy, ry) in self.rows.iter().enumerate() {
            for (ox, rx) in self.cols.iter().enumerate() {
                let o = (oy * ow + ox) * c;
                let corners = [
                    (ry.lo, rx.lo, ry.w_lo * rx.w_lo),
                    (ry.lo, rx.hi, ry.w_lo * rx.w_hi),
                    (ry.hi, rx.lo, ry.w_hi * rx.w_lo),
                    (ry.hi, rx.hi, ry.w_hi * rx.w_hi),
                ];
                for (y, x, wt) in corners {
                    if wt == 0.0 {
                        continue;
                    }
                    let s = (y * w + x) * c;
                    for ch in 0..c {
                        dst[o + ch] += wt * data[s + ch];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of [`apply`](Self::apply): scatters output gradients back
    /// onto the input grid.
    pub fn adjoint(&self, grad_out: &Tensor) -> Result<Tensor> {
        let (oh, ow, c) = grad_out.hwc()?;
        if (oh, ow) != self.out_dims() {
            return Err(Error::Shape(format!(
                "resize adjoint expects {:?}, got {oh}x{ow}",
                self.out_dims()
            )));
        }
        let mut grad_in = Tensor::zeros(&[self.in_h, self.in_w, c]);
        let g = grad_out.data();
        let dst = grad_in.data_mut();
        let w = self.in_w;
        for (oy, ry) in self.rows.iter().enumerate() {
            for (ox, rx) in self.cols.iter().enumerate() {
                let o = (oy * ow + ox) * c;
                let corners = [
                    (ry.lo, rx.lo, ry.w_lo * rx.w_lo),
                    (ry.lo, rx.hi, ry.w_lo * rx.w_hi),
                    (ry.hi, rx.lo, ry.w_hi * rx.w_lo),
                    (ry.hi, rx.hi, ry.w_hi * rx.w_hi),
                ];
                for (y, x, wt) in corners {
                    if wt == 0.0 {
                        continue;
                    }
                    let s = (y * w + x) * c;
                    for ch in 0..c {
                        dst[s + ch] += wt * g[o + ch];
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

/// Resizes an `[h, w, c]` tensor to `[out_h, out_w, c]`.
pub fn bilinear_resize(src: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, _) = src.hwc()?;
    let plan = ResizePlan::new(h, w, out_h, out_w)?;
    if (h, w) == (out_h, out_w) {
        return Ok(src.clone());
    }
    plan.apply(src)
}

/// Bilinear sample of an `[h, w, c]` map at continuous pixel-index
/// coordinates, clamping taps to rows `y_range` and columns `x_range`
/// (inclusive).
pub fn sample_clamped(
    map: &Tensor,
    y: f64,
    x: f64,
    y_range: (usize, usize),
    x_range: (usize, usize),
    out: &mut [f64],
) {
    let (y0, fy, y1) = clamp_taps(y, y_range);
    let (x0, fx, x1) = clamp_taps(x, x_range);
    out.iter_mut().for_each(|v| *v = 0.0);
    let corners = [
        (y0, x0, (1.0 - fy) * (1.0 - fx)),
        (y0, x1, (1.0 - fy) * fx),
        (y1, x0, fy * (1.0 - fx)),
        (y1, x1, fy * fx),
    ];
    for (yy, xx, wt) in corners {
        if wt == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(map.pixel(yy, xx)) {
            *o += wt * v;
        }
    }
}

fn clamp_taps(pos: f64, (lo, hi): (usize, usize)) -> (usize, f64, usize) {
    let p = pos.clamp(lo as f64, hi as f64);
    let i0 = (p.floor() as usize).min(hi);
    let i1 = (i0 + 1).min(hi);
    let frac = if i1 == i0 { 0.0 } else { p - i0 as f64 };
    (i0, frac, i1)
}
