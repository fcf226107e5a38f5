use super::Tensor;
use crate::error::{Error, Result};

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    /// Fresh state for parameters of the given shapes.
    pub fn new(shapes: &[&[usize]], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_params(params: &[&Tensor], lr: f64) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(&shapes, lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one Adam update to `params` in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::Shape(format!(
                "adam slot {i}: param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                state.first[i].shape()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correct1 = 1.0 - b1.powi(t);
    let correct2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / correct1;
            let v_hat = *vv / correct2;
            *pv -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut state = AdamState::for_params(&[&p], 1e-3);
        for _ in 0..5 {
            adam_step(&mut [&mut p], &[&g], &mut state).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::scalar(1.0);
        let mut state = AdamState::for_params(&[&p], 1e-3);
        adam_step(&mut [&mut p], &[&g], &mut state).unwrap();
        // m_hat = 1, v_hat = 1 => delta = lr / (1 + eps)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-15);
    }

    #[test]
    fn descends_a_parabola() {
        // Adam moves at most ~lr per step, so 200 steps need lr well above
        // 1e-3 to cover the distance from 0 to 2.
        let mut x = Tensor::scalar(0.0);
        let mut state = AdamState::for_params(&[&x], 0.1);
        for _ in 0..200 {
            let g = Tensor::scalar(2.0 * (x.item() - 2.0));
            adam_step(&mut [&mut x], &[&g], &mut state).unwrap();
        }
        assert!((x.item() - 2.0).abs() < 0.5, "x = {}", x.item());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut state = AdamState::for_params(&[&p], 1e-3);
        assert!(adam_step(&mut [&mut p], &[&g], &mut state).is_err());
    }
}
