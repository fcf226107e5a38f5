use super::params::{sinusoidal_2d, AttnParams, HiwinConfig, KEY_LEVELS};
use super::window::{bin_centers, generate_windows, roi_align, select_grid, WindowSet};
use crate::encoder::Origin;
use crate::error::{Error, Result};
use crate::numerics::{softmax_in_place, Tensor};
use crate::vdim::InverseSemanticPyramid;

/// `N x N x C` compressed tokens of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMap {
    pub data: Tensor,
    pub origin: Origin,
}

impl TokenMap {
    pub fn new(data: Tensor, origin: Origin) -> Result<Self> {
        let (h, w, _) = data.hwc()?;
        if h != w {
            return Err(Error::Shape(format!("token map must be square, got {h}x{w}")));
        }
        Ok(Self { data, origin })
    }

    pub fn n(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn token(&self, i: usize, j: usize) -> &[f64] {
        self.data.pixel(i, j)
    }
}

/// Keys and values of one window, `3 * r_w * r_h` rows of width `C`,
/// level 0 first. Keys carry the level and sample-position embeddings;
/// values are the raw samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowKv {
    pub keys: Tensor,
    pub values: Tensor,
}

/// Attention result of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAttention {
    pub token: Vec<f64>,
    /// One softmax row per head, over the window's keys.
    pub weights: Vec<Vec<f64>>,
}

fn check_isp(isp: &InverseSemanticPyramid, params: &AttnParams) -> Result<()> {
    if isp.levels.len() != KEY_LEVELS {
        return Err(Error::InvalidArgument(format!("attention needs 3 pyramid levels, got {}", isp.levels.len())));
    }
    if isp.channels() != params.channels() {
        return Err(Error::Shape(format!(
            "pyramid has {} channels, attention expects {}",
            isp.channels(),
            params.channels()
        )));
    }
    Ok(())
}

/// Grid chosen for `isp` from its level-0 dims.
pub fn isp_grid(isp: &InverseSemanticPyramid, config: &HiwinConfig) -> (usize, usize) {
    let (h, w) = isp.level(0).dims();
    select_grid(w, h, &config.proposals)
}

pub fn isp_windows(isp: &InverseSemanticPyramid, n: usize) -> Result<WindowSet> {
    generate_windows(&isp.dims(), n)
}

/// RoI-aligned samples of window `(i, j)` from every level.
pub fn assemble_kv(
    isp: &InverseSemanticPyramid,
    windows: &WindowSet,
    grid: (usize, usize),
    params: &AttnParams,
    (i, j): (usize, usize),
) -> Result<WindowKv> {
    check_isp(isp, params)?;
    let c = params.channels();
    let per_level = grid.0 * grid.1;
    let mut keys = Tensor::zeros(&[KEY_LEVELS * per_level, c]);
    let mut values = Tensor::zeros(&[KEY_LEVELS * per_level, c]);
    let mut pos = vec![0.0; c];
    for (l, map) in isp.levels.iter().enumerate() {
        let (h, w) = map.dims();
        let b = windows.get(l, i, j);
        let samples = roi_align(&map.data, b, grid)?;
        let phi = params.level(l);
        let rows = l * per_level * c..(l + 1) * per_level * c;
        values.data_mut()[rows.clone()].copy_from_slice(samples.data());
        let kd = &mut keys.data_mut()[rows];
        for ((krow, s), (y, x)) in kd.chunks_exact_mut(c).zip(samples.data().chunks_exact(c)).zip(bin_centers(b, grid)) {
            sinusoidal_2d(y / h as f64, x / w as f64, &mut pos);
            for (((k, sv), pv), lv) in krow.iter_mut().zip(s).zip(&pos).zip(phi) {
                *k = sv + lv + pv;
            }
        }
    }
    Ok(WindowKv { keys, values })
}

/// Multi-head scaled dot-product attention of one projected query over
/// projected key/value rows. Writes the concatenated head outputs.
pub(crate) fn attend(q: &[f64], keys: &[f64], values: &[f64], heads: usize, out: &mut [f64]) -> Vec<Vec<f64>> {
    let c = q.len();
    let dh = c / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let rows = keys.len() / c;
    let mut weights = Vec::with_capacity(heads);
    out.iter_mut().for_each(|v| *v = 0.0);
    for hd in 0..heads {
        let cols = hd * dh..(hd + 1) * dh;
        let qh = &q[cols.clone()];
        let mut a: Vec<f64> = keys
            .chunks_exact(c)
            .map(|k| k[cols.clone()].iter().zip(qh).fold(0.0, |acc, (x, y)| acc + x * y) * scale)
            .collect();
        softmax_in_place(&mut a);
        let oh = &mut out[cols.clone()];
        for (&wt, v) in a.iter().zip(values.chunks_exact(c)) {
            for (o, vv) in oh.iter_mut().zip(&v[cols.clone()]) {
                *o += wt * vv;
            }
        }
        debug_assert_eq!(a.len(), rows);
        weights.push(a);
    }
    weights
}

/// Query `(i, j)` plus its window-center embedding, projected.
fn project_query(params: &AttnParams, n: usize, i: usize, j: usize) -> Vec<f64> {
    let c = params.channels();
    let mut q = vec![0.0; c];
    sinusoidal_2d((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64, &mut q);
    for (qv, base) in q.iter_mut().zip(params.queries.pixel(i, j)) {
        *qv += base;
    }
    let mut out = vec![0.0; c];
    params.q_proj.apply(&q, &mut out);
    out
}

/// Attention of query `(i, j)` over its own window only.
pub fn attend_window(
    isp: &InverseSemanticPyramid,
    windows: &WindowSet,
    grid: (usize, usize),
    params: &AttnParams,
    (i, j): (usize, usize),
) -> Result<WindowAttention> {
    let kv = assemble_kv(isp, windows, grid, params, (i, j))?;
    let c = params.channels();
    let q = project_query(params, params.n(), i, j);
    let k = params.k_proj.apply_rows(kv.keys.data());
    let v = params.v_proj.apply_rows(kv.values.data());
    let mut mixed = vec![0.0; c];
    let weights = attend(&q, &k, &v, params.heads, &mut mixed);
    let mut token = vec![0.0; c];
    params.out_proj.apply(&mixed, &mut token);
    Ok(WindowAttention { token, weights })
}

/// Compresses a pyramid into an `N x N x C` token map, one windowed
/// cross-attention per query.
pub fn compress(isp: &InverseSemanticPyramid, params: &AttnParams, config: &HiwinConfig) -> Result<TokenMap> {
    config.validate()?;
    check_isp(isp, params)?;
    if params.n() != config.n {
        return Err(Error::Shape(format!("queries form a {0}x{0} grid, config asks for {1}", params.n(), config.n)));
    }
    let n = config.n;
    let c = params.channels();
    let grid = isp_grid(isp, config);
    let windows = isp_windows(isp, n)?;
    let mut out = Tensor::zeros(&[n, n, c]);
    for i in 0..n {
        for j in 0..n {
            let a = attend_window(isp, &windows, grid, params, (i, j))?;
            out.pixel_mut(i, j).copy_from_slice(&a.token);
        }
    }
    if !out.all_finite() {
        return Err(Error::NonFinite("attention produced non-finite tokens".into()));
    }
    TokenMap::new(out, isp.level(0).origin)
}
