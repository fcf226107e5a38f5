//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Images cross the boundary as tightly packed RGBA bytes, the layout a
//! canvas `ImageData` uses.

use hiwin_core::encoder::{EncoderSpec, Origin};
use hiwin_core::hiwin_attn::{attend_window, isp_grid, isp_windows, select_grid, AttnParams, HiwinConfig, PROPOSALS};
use hiwin_core::image_io::{synth_corpus, Image};
use hiwin_core::numerics::pca_rgb;
use hiwin_core::pipeline::image_isp;
use hiwin_core::slicing::{compute_slice_layout, MAX_SLICES, NATIVE_SIDE};
use hiwin_core::vdim::{InverseSemanticPyramid, VdimParams};
use hiwin_core::Error;
use wasm_bindgen::prelude::*;

const CHANNELS: usize = 32;

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn to_rgba(rgb: &[f64]) -> Vec<u8> {
    rgb.chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2]].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).into_iter().chain([255]))
        .collect()
}

fn from_rgba(rgba: &[u8], width: usize, height: usize) -> hiwin_core::Result<Image> {
    let rgb = rgba.chunks_exact(4).flat_map(|p| p[..3].iter().map(|&v| v as f64 / 255.0)).collect();
    Image::new(height, width, rgb)
}

/// One image from the synthetic corpus as RGBA; `kind` cycles through
/// gradients, checkerboards, rectangles and strokes.
#[wasm_bindgen]
pub fn synth_image(seed: u32, kind: u32, size: u32) -> Vec<u8> {
    let k = kind as usize % 4;
    let img = synth_corpus(seed as u64, k + 1, size as usize).swap_remove(k);
    to_rgba(img.tensor().data())
}

/// Slicing layout of a `width x height` image, flattened as
/// `[rows, cols, grid_w, grid_h, x0, y0, x1, y1, ...]` with one rect per
/// slice in row-major order. The grid is the one chosen for slice `(0, 0)`.
pub fn layout_summary(width: usize, height: usize) -> hiwin_core::Result<Vec<u32>> {
    let l = compute_slice_layout(width, height, MAX_SLICES)?;
    let (rh, rw) = l.resized_dims[0];
    let grid = select_grid(rw / 14, rh / 14, &PROPOSALS);
    let mut out = vec![l.rows as u32, l.cols as u32, grid.0 as u32, grid.1 as u32];
    for r in &l.slice_rects {
        out.extend([r.x0, r.y0, r.x1, r.y1].map(|v| v as u32));
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn slice_layout(width: u32, height: u32) -> Result<Vec<u32>, JsError> {
    layout_summary(width as usize, height as usize).map_err(js_err)
}

/// An image resized to the native side together with its pyramid and
/// attention weights.
#[wasm_bindgen]
pub struct Demo {
    image: Image,
    encoder: EncoderSpec,
    vdim: VdimParams,
    attn: AttnParams,
    config: HiwinConfig,
    isp: InverseSemanticPyramid,
}

impl Demo {
    pub fn build(image: &Image, seed: u64) -> hiwin_core::Result<Self> {
        let image = image.resize(NATIVE_SIDE, NATIVE_SIDE)?;
        let encoder = EncoderSpec::synthetic(CHANNELS, seed);
        let vdim = VdimParams::init(seed);
        let config = HiwinConfig::default();
        let attn = AttnParams::init(&config, CHANNELS, seed)?;
        let isp = image_isp(&image, &encoder, &vdim, Origin::Overview)?;
        Ok(Self { image, encoder, vdim, attn, config, isp })
    }

    pub fn pyramid(&self) -> &InverseSemanticPyramid {
        &self.isp
    }

    /// Rebuilds the pyramid with both upsampling steps using the given
    /// log widths.
    pub fn apply_sigmas(&mut self, log_sigma_dist: f64, log_sigma_sim: f64) -> hiwin_core::Result<()> {
        for p in &mut self.vdim.levels {
            p.log_sigma_dist.data_mut()[0] = log_sigma_dist;
            p.log_sigma_sim.data_mut()[0] = log_sigma_sim;
        }
        self.isp = image_isp(&self.image, &self.encoder, &self.vdim, Origin::Overview)?;
        Ok(())
    }

    /// `[x0, y0, x1, y1, grid_w, grid_h]` per level in normalized image
    /// coordinates, followed by the head-averaged attention weight of every
    /// sample, level-major and row-major within a level.
    pub fn window_attention(&self, i: usize, j: usize) -> hiwin_core::Result<Vec<f64>> {
        let n = self.config.n;
        if i >= n || j >= n {
            return Err(Error::InvalidArgument(format!("query ({i}, {j}) is outside the {n}x{n} grid")));
        }
        let windows = isp_windows(&self.isp, n)?;
        let grid = isp_grid(&self.isp, &self.config);
        let a = attend_window(&self.isp, &windows, grid, &self.attn, (i, j))?;
        let mut out = Vec::new();
        for (l, map) in self.isp.levels.iter().enumerate() {
            let (h, w) = map.dims();
            let b = windows.get(l, i, j);
            out.extend([b.x0 / w as f64, b.y0 / h as f64, b.x1 / w as f64, b.y1 / h as f64, grid.0 as f64, grid.1 as f64]);
        }
        let heads = a.weights.len() as f64;
        out.extend((0..a.weights[0].len()).map(|k| a.weights.iter().map(|w| w[k]).sum::<f64>() / heads));
        Ok(out)
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(rgba: &[u8], width: u32, height: u32, seed: u32) -> Result<Demo, JsError> {
        let image = from_rgba(rgba, width as usize, height as usize).map_err(js_err)?;
        Demo::build(&image, seed as u64).map_err(js_err)
    }

    pub fn set_sigmas(&mut self, log_sigma_dist: f64, log_sigma_sim: f64) -> Result<(), JsError> {
        self.apply_sigmas(log_sigma_dist, log_sigma_sim).map_err(js_err)
    }

    /// Side length of pyramid level `level`.
    pub fn level_side(&self, level: usize) -> usize {
        self.isp.levels.get(level).map_or(0, |l| l.width())
    }

    /// Principal-component RGBA rendering of pyramid level `level`.
    pub fn pca(&self, level: usize) -> Result<Vec<u8>, JsError> {
        let map = self.isp.levels.get(level).ok_or_else(|| JsError::new("no such level"))?;
        let rgb = pca_rgb(&map.data).map_err(js_err)?;
        Ok(to_rgba(rgb.data()))
    }

    pub fn image(&self) -> Vec<u8> {
        to_rgba(self.image.tensor().data())
    }

    pub fn attention(&self, i: usize, j: usize) -> Result<Vec<f64>, JsError> {
        self.window_attention(i, j).map_err(js_err)
    }
}
