use super::Tensor;
use crate::error::{Error, Result};

/// Max-subtracted softmax of a slice, written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    let inv = 1.0 / total;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// In-place variant of [`softmax_into`].
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = 1.0 / total;
    values.iter_mut().for_each(|v| *v *= inv);
}

/// Vector-Jacobian product of softmax: given probabilities `p` and the
/// upstream gradient `g`, returns `p * (g - <p, g>)` in `out`.
pub fn softmax_backward(p: &[f64], g: &[f64], out: &mut [f64]) {
    let dot = p.iter().zip(g).fold(0.0, |acc, (a, b)| acc + a * b);
    for ((o, &pi), &gi) in out.iter_mut().zip(p).zip(g) {
        *o = pi * (gi - dot);
    }
}

/// Softmax of a tensor along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::InvalidArgument(format!(
            "softmax axis {axis} out of range for rank {}",
            shape.len()
        )));
    }
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.clone();
    let mut lane = vec![0.0; extent];
    let data = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * extent * inner + i;
            for (k, v) in lane.iter_mut().enumerate() {
                *v = data[base + k * inner];
            }
            softmax_in_place(&mut lane);
            for (k, v) in lane.iter().enumerate() {
                data[base + k * inner] = *v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let t = Tensor::new(vec![3], vec![0.0; 3]).unwrap();
        let s = softmax(&t, 0).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let t = Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap();
        let s = softmax(&t, 0).unwrap();
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] >= 0.0 && s.data()[1] < 1e-300);
    }

    #[test]
    fn matches_direct_formula() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let s = softmax(&t, 0).unwrap();
        let z: f64 = (1..=3).map(|i| (i as f64).exp()).sum();
        for (i, v) in s.data().iter().enumerate() {
            assert!((v - ((i + 1) as f64).exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn middle_axis_slices_sum_to_one() {
        let t = Tensor::from_hwc_fn(2, 5, 3, |y, x, c| (y as f64 - x as f64 * 1.5 + c as f64) * 40.0);
        let s = softmax(&t, 1).unwrap();
        for y in 0..2 {
            for c in 0..3 {
                let total: f64 = (0..5).map(|x| s.at3(y, x, c)).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_axis() {
        assert!(softmax(&Tensor::zeros(&[2]), 1).is_err());
    }
}
