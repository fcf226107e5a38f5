use crate::error::{Error, Result};
use crate::numerics::{sample_clamped, Tensor};

/// The five grid proposals `(r_w, r_h)`, in the order used for ties.
pub const PROPOSALS: [(usize, usize); 5] = [(3, 3), (2, 3), (3, 2), (2, 4), (4, 2)];

/// Pooling score of grid `(r_w, r_h)` for a `w x h` map: the negated
/// distance between the two aspect ratios in log space.
pub fn grid_score(w: usize, h: usize, grid: (usize, usize)) -> f64 {
    -((w as f64 / h as f64).ln() - (grid.0 as f64 / grid.1 as f64).ln()).abs()
}

/// Picks the proposal whose aspect ratio best matches `w x h`. The first
/// proposal wins ties.
///
/// # Panics
/// If `proposals` is empty or either dim is zero.
pub fn select_grid(w: usize, h: usize, proposals: &[(usize, usize)]) -> (usize, usize) {
    assert!(w > 0 && h > 0, "map dims must be positive");
    let mut best = *proposals.first().expect("at least one grid proposal");
    let mut best_score = grid_score(w, h, best);
    for &p in &proposals[1..] {
        let s = grid_score(w, h, p);
        if s > best_score {
            best = p;
            best_score = s;
        }
    }
    best
}

/// Axis-aligned box in continuous feature-cell coordinates; cell `(y, x)`
/// covers `[x, x+1) x [y, y+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl RoiBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    fn clamped(&self, h: usize, w: usize) -> RoiBox {
        RoiBox {
            x0: self.x0.clamp(0.0, w as f64),
            y0: self.y0.clamp(0.0, h as f64),
            x1: self.x1.clamp(0.0, w as f64),
            y1: self.y1.clamp(0.0, h as f64),
        }
    }

    /// Inclusive row and column ranges of the cells the box overlaps,
    /// within a `h x w` map.
    pub fn cell_span(&self, h: usize, w: usize) -> ((usize, usize), (usize, usize)) {
        let b = self.clamped(h, w);
        (span(b.y0, b.y1, h), span(b.x0, b.x1, w))
    }
}

fn span(lo: f64, hi: f64, len: usize) -> (usize, usize) {
    let first = (lo.floor() as usize).min(len - 1);
    let last = (hi.ceil() as usize).saturating_sub(1).clamp(first, len - 1);
    (first, last)
}

/// Per-level `N x N` boxes tiling each pyramid level, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub n: usize,
    /// `(h, w)` of each level.
    pub level_dims: Vec<(usize, usize)>,
    pub boxes: Vec<Vec<RoiBox>>,
}

impl WindowSet {
    pub fn get(&self, level: usize, i: usize, j: usize) -> RoiBox {
        self.boxes[level][i * self.n + j]
    }
}

/// Splits every level into `n x n` equal boxes with fractional sides
/// `(W_l / n, H_l / n)`.
pub fn generate_windows(level_dims: &[(usize, usize)], n: usize) -> Result<WindowSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("window grid side must be at least 1".into()));
    }
    let boxes = level_dims
        .iter()
        .map(|&(h, w)| {
            let edge = |k: usize, len: usize| (k * len) as f64 / n as f64;
            (0..n)
                .flat_map(|i| {
                    (0..n).map(move |j| RoiBox {
                        x0: edge(j, w),
                        y0: edge(i, h),
                        x1: edge(j + 1, w),
                        y1: edge(i + 1, h),
                    })
                })
                .collect()
        })
        .collect();
    Ok(WindowSet {
        n,
        level_dims: level_dims.to_vec(),
        boxes,
    })
}

/// Bin-center points of `b` split into `grid = (r_w, r_h)` bins, as
/// continuous `(y, x)` coordinates, row-major.
pub fn bin_centers(b: RoiBox, grid: (usize, usize)) -> impl Iterator<Item = (f64, f64)> {
    let (rw, rh) = grid;
    let (bw, bh) = (b.width() / rw as f64, b.height() / rh as f64);
    (0..rh).flat_map(move |r| (0..rw).map(move |c| (b.y0 + (r as f64 + 0.5) * bh, b.x0 + (c as f64 + 0.5) * bw)))
}

/// RoI-align with one bilinear sample per bin center. Interpolation taps
/// are clamped to the cells the box overlaps, so the result depends only
/// on features inside the box. Returns `[r_h, r_w, C]`.
pub fn roi_align(map: &Tensor, b: RoiBox, grid: (usize, usize)) -> Result<Tensor> {
    let (h, w, c) = map.hwc()?;
    let (rw, rh) = grid;
    if rw == 0 || rh == 0 {
        return Err(Error::InvalidArgument(format!("empty sampling grid {rw}x{rh}")));
    }
    let clamped = b.clamped(h, w);
    if clamped.width() <= 0.0 || clamped.height() <= 0.0 {
        return Err(Error::InvalidArgument(format!("box {b:?} has no area inside the {w}x{h} map")));
    }
    let (ys, xs) = clamped.cell_span(h, w);
    let mut out = Tensor::zeros(&[rh, rw, c]);
    for (k, (y, x)) in bin_centers(clamped, grid).enumerate() {
        let (r, col) = (k / rw, k % rw);
        sample_clamped(map, y - 0.5, x - 0.5, ys, xs, out.pixel_mut(r, col));
    }
    Ok(out)
}
