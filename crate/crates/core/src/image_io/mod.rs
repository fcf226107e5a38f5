//! RGB images, P6 file I/O, image pyramids, and the synthetic training
//! corpus.

mod ppm;
mod synth;

pub use ppm::{decode_ppm, encode_ppm, load_ppm, save_ppm, PpmError};
pub use synth::{checkerboard, synth_corpus, SynthKind};

use crate::error::{Error, Result};
use crate::numerics::{bilinear_resize, Tensor};

/// Default ViT patch side.
pub const PATCH: usize = 14;

/// An RGB image with values in `[0, 1]`, stored as `[h, w, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Tensor,
}

/// Pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

impl Image {
    /// Wraps raw `[h, w, 3]` values, clamping them into `[0, 1]`.
    pub(crate) fn from_raw(h: usize, w: usize, mut data: Vec<f64>) -> Self {
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Self {
            pixels: Tensor::new(vec![h, w, 3], data).expect("caller supplies h*w*3 values"),
        }
    }

    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!("image must be non-empty, got {h}x{w}")));
        }
        if data.len() != h * w * 3 {
            return Err(Error::Shape(format!("{h}x{w} RGB image needs {} values, got {}", h * w * 3, data.len())));
        }
        Ok(Self::from_raw(h, w, data))
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let (h, w, c) = t.hwc()?;
        if c != 3 {
            return Err(Error::Shape(format!("image needs 3 channels, got {c}")));
        }
        Self::new(h, w, t.into_data())
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend(f(y, x));
            }
        }
        Self::from_raw(h, w, data)
    }

    pub fn constant(h: usize, w: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(h, w, |_, _| rgb)
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let p = self.pixels.pixel(y, x);
        [p[0], p[1], p[2]]
    }

    pub fn resize(&self, h: usize, w: usize) -> Result<Image> {
        Ok(Image {
            pixels: bilinear_resize(&self.pixels, h, w)?,
        })
    }

    pub fn crop(&self, rect: Rect) -> Result<Image> {
        if rect.x1 > self.width() || rect.y1 > self.height() || rect.width() == 0 || rect.height() == 0 {
            return Err(Error::InvalidArgument(format!(
                "crop {rect:?} outside {}x{} image",
                self.width(),
                self.height()
            )));
        }
        Ok(Image::from_fn(rect.height(), rect.width(), |y, x| self.pixel(rect.y0 + y, rect.x0 + x)))
    }

    /// Swaps rows and columns.
    pub fn transpose(&self) -> Image {
        Image::from_fn(self.width(), self.height(), |y, x| self.pixel(x, y))
    }

    /// Mean over all pixels and channels.
    pub fn mean(&self) -> f64 {
        self.pixels.sum() / self.pixels.len() as f64
    }
}

/// Resizes each side to the nearest positive multiple of `patch`.
pub fn resize_to_patch_multiple(image: &Image, patch: usize) -> Result<Image> {
    let snap = |v: usize| ((v as f64 / patch as f64).round() as usize).max(1) * patch;
    let (h, w) = (snap(image.height()), snap(image.width()));
    if (h, w) == (image.height(), image.width()) {
        return Ok(image.clone());
    }
    image.resize(h, w)
}

/// Guidance images for each pyramid level; level `l` is
/// `(H * 2^l / patch) x (W * 2^l / patch)`.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    pub patch: usize,
    pub levels: Vec<Image>,
}

impl ImagePyramid {
    pub fn level(&self, l: usize) -> &Image {
        &self.levels[l]
    }
}

/// Resamples every level directly from `image` (not cascaded).
pub fn build_image_pyramid(image: &Image, patch: usize, levels: usize) -> Result<ImagePyramid> {
    let (h, w) = (image.height(), image.width());
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::InvalidArgument(format!(
            "image {w}x{h} is not a multiple of patch size {patch}"
        )));
    }
    let levels = (0..levels)
        .map(|l| image.resize((h << l) / patch, (w << l) / patch))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImagePyramid { patch, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pyramid_dims_double() {
        let img = Image::constant(336, 336, [0.2, 0.4, 0.6]);
        let p = build_image_pyramid(&img, PATCH, 3).unwrap();
        let dims: Vec<_> = p.levels.iter().map(|l| (l.height(), l.width())).collect();
        assert_eq!(dims, vec![(24, 24), (48, 48), (96, 96)]);

        let img = Image::constant(112, 112, [0.5; 3]);
        let p = build_image_pyramid(&img, PATCH, 3).unwrap();
        let dims: Vec<_> = p.levels.iter().map(|l| (l.height(), l.width())).collect();
        assert_eq!(dims, vec![(8, 8), (16, 16), (32, 32)]);
    }

    #[test]
    fn constant_pyramid_stays_constant() {
        let img = Image::constant(112, 224, [0.5, 0.5, 0.5]);
        let p = build_image_pyramid(&img, PATCH, 3).unwrap();
        for level in &p.levels {
            assert!(level.tensor().data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn pyramid_rejects_non_multiple() {
        let img = Image::constant(100, 112, [0.0; 3]);
        assert!(build_image_pyramid(&img, PATCH, 3).is_err());
    }

    #[test]
    fn snaps_to_patch_multiple() {
        let img = Image::constant(100, 31, [0.1; 3]);
        let r = resize_to_patch_multiple(&img, PATCH).unwrap();
        assert_eq!((r.height(), r.width()), (98, 28));
    }

    #[test]
    fn values_are_clamped() {
        let img = Image::new(1, 1, vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(img.pixel(0, 0), [0.0, 0.5, 1.0]);
    }
}
