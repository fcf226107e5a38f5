//! Adaptive partition of a high-resolution image into at most
//! `max_slices` slices plus a fixed-size overview.

use crate::error::{Error, Result};
use crate::image_io::{Image, Rect, PATCH};

/// Side of the encoder's native input, and of the overview image.
pub const NATIVE_SIDE: usize = 336;
pub const MAX_SLICES: usize = 6;
const MIN_SIDE: usize = 56;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceLayout {
    pub rows: usize,
    pub cols: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Row-major: slice `(i, j)` is at index `i * cols + j`.
    pub slice_rects: Vec<Rect>,
    /// `(height, width)` each slice is resized to before encoding.
    pub resized_dims: Vec<(usize, usize)>,
    pub overview_dims: (usize, usize),
}

impl SliceLayout {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn rect(&self, row: usize, col: usize) -> Rect {
        self.slice_rects[row * self.cols + col]
    }
}

/// Slice-aspect mismatch `|log(width * r / (height * c))|` as an exact
/// ratio `num / den >= 1`, so that comparisons are symmetric under
/// transposition.
fn aspect_mismatch(width: usize, height: usize, cols: usize, rows: usize) -> (u128, u128) {
    let a = width as u128 * rows as u128;
    let b = height as u128 * cols as u128;
    if a >= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Picks the `cols x rows` grid whose slices are closest to square among
/// partitions of `ideal - 1`, `ideal`, and `ideal + 1` slices, where
/// `ideal = ceil(area / 336^2)` clamped to `[1, max_slices]`. Ties go to
/// fewer slices, then fewer columns.
pub fn compute_slice_layout(width: usize, height: usize, max_slices: usize) -> Result<SliceLayout> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::InvalidArgument(format!(
            "image {width}x{height} is smaller than the {MIN_SIDE}px minimum side"
        )));
    }
    if max_slices == 0 {
        return Err(Error::InvalidArgument("max_slices must be at least 1".into()));
    }
    let native_area = NATIVE_SIDE * NATIVE_SIDE;
    let ideal = (width * height).div_ceil(native_area).clamp(1, max_slices);

    let mut best: Option<(usize, usize, (u128, u128))> = None;
    for n in [ideal.saturating_sub(1), ideal, ideal + 1] {
        if n == 0 || n > max_slices {
            continue;
        }
        for cols in 1..=n {
            if n % cols != 0 {
                continue;
            }
            let rows = n / cols;
            let score = aspect_mismatch(width, height, cols, rows);
            let better = match best {
                None => true,
                Some((bc, br, (bn, bd))) => {
                    // score < best  <=>  num/den < bn/bd
                    let lhs = score.0 * bd;
                    let rhs = bn * score.1;
                    lhs < rhs || (lhs == rhs && (n < bc * br || (n == bc * br && cols < bc)))
                }
            };
            if better {
                best = Some((cols, rows, score));
            }
        }
    }
    let (cols, rows, _) = best.expect("n = ideal always yields a candidate");

    let xs: Vec<usize> = (0..=cols).map(|k| k * width / cols).collect();
    let ys: Vec<usize> = (0..=rows).map(|k| k * height / rows).collect();
    let mut slice_rects = Vec::with_capacity(rows * cols);
    let mut resized_dims = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let rect = Rect { x0: xs[j], y0: ys[i], x1: xs[j + 1], y1: ys[i + 1] };
            resized_dims.push((snap_side(rect.height()), snap_side(rect.width())));
            slice_rects.push(rect);
        }
    }
    Ok(SliceLayout {
        rows,
        cols,
        image_width: width,
        image_height: height,
        slice_rects,
        resized_dims,
        overview_dims: (NATIVE_SIDE, NATIVE_SIDE),
    })
}

/// Nearest multiple of the patch size within `[56, 336]`.
fn snap_side(side: usize) -> usize {
    let k = (side as f64 / PATCH as f64).round() as usize;
    (k * PATCH).clamp(MIN_SIDE, NATIVE_SIDE)
}

/// Slice images (row-major) and the overview.
#[derive(Debug, Clone)]
pub struct Slices {
    pub slices: Vec<Image>,
    pub overview: Image,
}

pub fn extract_slices(image: &Image, layout: &SliceLayout) -> Result<Slices> {
    if (image.width(), image.height()) != (layout.image_width, layout.image_height) {
        return Err(Error::InvalidArgument(format!(
            "layout computed for {}x{}, image is {}x{}",
            layout.image_width,
            layout.image_height,
            image.width(),
            image.height()
        )));
    }
    let slices = layout
        .slice_rects
        .iter()
        .zip(&layout.resized_dims)
        .map(|(&rect, &(h, w))| image.crop(rect)?.resize(h, w))
        .collect::<Result<Vec<_>>>()?;
    let (oh, ow) = layout.overview_dims;
    Ok(Slices {
        slices,
        overview: image.resize(oh, ow)?,
    })
}
