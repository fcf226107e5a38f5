//! Reverse-mode differentiation over tensor-valued operations.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards
//! is a valid reverse topological order. Operations are coarse: each one
//! carries a hand-derived vector-Jacobian product, which keeps the tape
//! short enough to train on full feature maps.

use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Vector-Jacobian product of one operation.
///
/// Receives the gradient of the output, the parent values, and a mask of
/// which parents need a gradient; returns one entry per parent.
pub type Backward = Box<dyn Fn(&Tensor, &[&Tensor], &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<Backward>,
    trainable: bool,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the trainable leaves of a tape.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    grads: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.grads.keys().copied()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            trainable: true,
            requires_grad: true,
        })
    }

    /// A leaf treated as fixed input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            trainable: false,
            requires_grad: false,
        })
    }

    /// Records an operation whose output `value` was computed from
    /// `parents`.
    pub fn op(&mut self, value: Tensor, parents: &[Var], backward: Backward) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(Node {
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            backward: Some(backward),
            trainable: false,
            requires_grad,
        })
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        va.ensure_same_shape(vb)?;
        let mut out = va.clone();
        out.add_scaled(vb, 1.0);
        Ok(self.op(
            out,
            &[a, b],
            Box::new(|g, _, need| vec![need[0].then(|| g.clone()), need[1].then(|| g.clone())]),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        va.ensure_same_shape(vb)?;
        let mut out = va.clone();
        out.add_scaled(vb, -1.0);
        Ok(self.op(
            out,
            &[a, b],
            Box::new(|g, _, need| vec![need[0].then(|| g.clone()), need[1].then(|| g.map(|v| -v))]),
        ))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|v| v * factor);
        self.op(out, &[a], Box::new(move |g, _, _| vec![Some(g.map(|v| v * factor))]))
    }

    /// Mean of squared entries, as a scalar.
    pub fn mean_square(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = v.len().max(1) as f64;
        let total = v.data().iter().fold(0.0, |acc, x| acc + x * x);
        self.op(
            Tensor::scalar(total / n),
            &[a],
            Box::new(move |g, parents, _| {
                let k = 2.0 * g.item() / n;
                vec![Some(parents[0].map(|x| k * x))]
            }),
        )
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let mut total = 0.0;
        for &t in terms {
            let v = self.value(t);
            if v.len() != 1 {
                return Err(Error::Shape(format!("sum_scalars got shape {:?}", v.shape())));
            }
            total += v.item();
        }
        let n = terms.len();
        Ok(self.op(
            Tensor::scalar(total),
            terms,
            Box::new(move |g, _, need| (0..n).map(|i| need[i].then(|| g.clone())).collect()),
        ))
    }

    /// Back-propagates from a scalar node; returns gradients for every
    /// trainable leaf that the scalar depends on (zero if unreachable).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut adjoints: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adjoints[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = adjoints[idx].take() else {
                continue;
            };
            let parent_values: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let need: Vec<bool> = node.parents.iter().map(|&p| self.nodes[p].requires_grad).collect();
            let parent_grads = backward(&grad, &parent_values, &need);
            for ((&p, pg), &needed) in node.parents.iter().zip(parent_grads).zip(&need) {
                let (Some(pg), true) = (pg, needed) else { continue };
                if pg.shape() != self.nodes[p].value.shape() {
                    return Err(Error::Shape(format!(
                        "gradient shape {:?} does not match value shape {:?}",
                        pg.shape(),
                        self.nodes[p].value.shape()
                    )));
                }
                match &mut adjoints[p] {
                    Some(acc) => acc.add_scaled(&pg, 1.0),
                    slot @ None => *slot = Some(pg),
                }
            }
        }

        let mut grads = BTreeMap::new();
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.trainable {
                let g = adjoints[idx].take().unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                grads.insert(Var(idx), g);
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_only_for_trainable_leaves() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        let c = tape.constant(Tensor::new(vec![2], vec![0.5, 0.5]).unwrap());
        let d = tape.sub(p, c).unwrap();
        let loss = tape.mean_square(d);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.len(), 1);
        // d/dp mean((p - c)^2) = (p - c)
        assert_eq!(grads.get(p).unwrap().data(), &[0.5, -2.5]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::scalar(3.0));
        let a = tape.scale(p, 2.0);
        let b = tape.scale(p, 5.0);
        let s = tape.sum_scalars(&[a, b]).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(p).unwrap().item(), 7.0);
    }

    #[test]
    fn unreachable_param_gets_zero() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::zeros(&[3]));
        let q = tape.param(Tensor::scalar(1.0));
        let loss = tape.mean_square(q);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::zeros(&[3]));
        assert!(tape.backward(p).is_err());
    }
}
