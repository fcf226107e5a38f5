//! Principal-component projection of feature maps for visualization.

use super::Tensor;
use crate::error::{Error, Result};

const MIN_ITERS: usize = 50;
const MAX_ITERS: usize = 2000;
const TOLERANCE: f64 = 1e-7;

/// Leading principal directions of a feature map.
#[derive(Debug, Clone)]
pub struct Principal {
    /// Unit vectors of length `C`; zero vectors stand in for missing rank.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalue for each component.
    pub variances: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Top-`k` principal directions of the `h*w` samples of an `[h, w, C]`
/// map, by power iteration with deflation.
pub fn principal_components(features: &Tensor, k: usize) -> Result<Principal> {
    let (h, w, c) = features.hwc()?;
    let n = h * w;
    if n < 3 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 3 samples, got {n}")));
    }
    let mut mean = vec![0.0; c];
    for px in features.data().chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; c * c];
    for px in features.data().chunks_exact(c) {
        for a in 0..c {
            let da = px[a] - mean[a];
            for b in a..c {
                cov[a * c + b] += da * (px[b] - mean[b]);
            }
        }
    }
    for a in 0..c {
        for b in a..c {
            let v = cov[a * c + b] / n as f64;
            cov[a * c + b] = v;
            cov[b * c + a] = v;
        }
    }
    let trace: f64 = (0..c).map(|i| cov[i * c + i]).sum();
    let floor = trace.abs() * 1e-12;

    let mut components = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for idx in 0..k {
        let (vec, val) = power_iterate(&cov, c, idx);
        if val <= floor || !val.is_finite() {
            components.push(vec![0.0; c]);
            variances.push(0.0);
            continue;
        }
        for a in 0..c {
            for b in 0..c {
                cov[a * c + b] -= val * vec[a] * vec[b];
            }
        }
        components.push(vec);
        variances.push(val);
    }
    Ok(Principal { components, variances, mean })
}

fn power_iterate(mat: &[f64], c: usize, seed: usize) -> (Vec<f64>, f64) {
    // Deterministic start vector with no symmetry to get stuck on.
    let mut v: Vec<f64> = (0..c)
        .map(|i| 1.0 + 0.1 * (((i + 3 * seed) * 7919 % 97) as f64 / 97.0))
        .collect();
    normalize(&mut v);
    let mut next = vec![0.0; c];
    let mut eigen = 0.0;
    for iter in 0..MAX_ITERS {
        for a in 0..c {
            next[a] = (0..c).fold(0.0, |acc, b| acc + mat[a * c + b] * v[b]);
        }
        let norm = normalize(&mut next);
        if norm == 0.0 {
            return (vec![0.0; c], 0.0);
        }
        let delta = v.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut v, &mut next);
        eigen = norm;
        if iter + 1 >= MIN_ITERS && delta < TOLERANCE {
            break;
        }
    }
    // Rayleigh quotient is a better eigenvalue estimate than the last norm.
    let rayleigh = (0..c).fold(0.0, |acc, a| {
        acc + v[a] * (0..c).fold(0.0, |s, b| s + mat[a * c + b] * v[b])
    });
    if rayleigh.is_finite() {
        eigen = rayleigh;
    }
    // Sign convention: largest-magnitude entry positive.
    let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (v, eigen)
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().fold(0.0, |acc, x| acc + x * x).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Projects mean-centered features onto the top-`k` components, giving an
/// `[h, w, k]` map of scores.
pub fn pca_project(features: &Tensor, k: usize) -> Result<(Tensor, Principal)> {
    let (h, w, c) = features.hwc()?;
    let pc = principal_components(features, k)?;
    let mut out = Tensor::zeros(&[h, w, k]);
    for (px, o) in features.data().chunks_exact(c).zip(out.data_mut().chunks_exact_mut(k)) {
        for (slot, comp) in o.iter_mut().zip(&pc.components) {
            *slot = px
                .iter()
                .zip(&pc.mean)
                .zip(comp)
                .fold(0.0, |acc, ((x, m), e)| acc + (x - m) * e);
        }
    }
    Ok((out, pc))
}

/// Renders a feature map as RGB: the top three principal scores, each
/// min-max scaled to `[0, 1]`. Channels with no spread map to 0.5.
pub fn pca_rgb(features: &Tensor) -> Result<Tensor> {
    let (mut scores, _) = pca_project(features, 3)?;
    for ch in 0..3 {
        let (lo, hi) = scores
            .data()
            .iter()
            .skip(ch)
            .step_by(3)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        for v in scores.data_mut().iter_mut().skip(ch).step_by(3) {
            *v = if range > 1e-12 { (*v - lo) / range } else { 0.5 };
        }
    }
    Ok(scores)
}
