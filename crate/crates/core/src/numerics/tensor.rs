use crate::error::{Error, Result};

/// Dense row-major array of `f64` values.
///
/// Feature maps are stored as `[h, w, c]` with the channel axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds an `[h, w, c]` tensor from a per-element function.
    pub fn from_hwc_fn(h: usize, w: usize, c: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data.push(f(y, x, ch));
                }
            }
        }
        Self {
            shape: vec![h, w, c],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// `(h, w, c)` of a rank-3 tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[h, w, c] => Ok((h, w, c)),
            other => Err(Error::Shape(format!("expected [h, w, c], got {other:?}"))),
        }
    }

    pub fn at3(&self, y: usize, x: usize, c: usize) -> f64 {
        let (w, ch) = (self.shape[1], self.shape[2]);
        self.data[(y * w + x) * ch + c]
    }

    /// Channel vector at `(y, x)` of an `[h, w, c]` tensor.
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let (w, c) = (self.shape[1], self.shape[2]);
        let start = (y * w + x) * c;
        &self.data[start..start + c]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let (w, c) = (self.shape[1], self.shape[2]);
        let start = (y * w + x) * c;
        &mut self.data[start..start + c]
    }

    pub fn ensure_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise `self + alpha * other`, accumulated in place.
    pub fn add_scaled(&mut self, other: &Tensor, alpha: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Left-to-right sum.
    pub fn sum(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc + v)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Range `(min, max)` over all values.
    pub fn min_max(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }
}
