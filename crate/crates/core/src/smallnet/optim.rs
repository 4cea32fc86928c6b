use super::net::{Grads, SmallCnn};
use super::NetError;
use crate::scalar::Scalar;

/// Momentum buffers, one per parameter tensor, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T = f32> {
    pub velocity: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &SmallCnn<T>) -> Self {
        Self { velocity: net.params().iter().map(|p| vec![T::zero(); p.len()]).collect() }
    }
}

/// `v <- mu*v + g`, then `w <- w - lr*(g + mu*v)` (Nesterov) or
/// `w <- w - lr*v` (classical momentum).
pub fn momentum_update<T: Scalar>(w: &mut [T], g: &[T], v: &mut [T], lr: T, momentum: T, nesterov: bool) {
    for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = momentum * *v + g;
        let step = if nesterov { g + momentum * *v } else { *v };
        *w -= lr * step;
    }
}

/// Applies one update to every parameter tensor. Weight decay is expected
/// to be folded into `grads` already.
pub fn sgd_nesterov_step<T: Scalar>(
    net: &mut SmallCnn<T>,
    grads: &Grads<T>,
    state: &mut OptimizerState<T>,
    lr: T,
    momentum: T,
    nesterov: bool,
) -> Result<(), NetError> {
    let params = net.params_mut();
    if grads.tensors.len() != params.len() || state.velocity.len() != params.len() {
        return Err(NetError::Shape("gradient/state tensor count differs from parameters".into()));
    }
    for ((w, g), v) in params.into_iter().zip(&grads.tensors).zip(&mut state.velocity) {
        if w.len() != g.len() || w.len() != v.len() {
            return Err(NetError::Shape("gradient/state tensor shape differs from parameters".into()));
        }
        momentum_update(w, g, v, lr, momentum, nesterov);
    }
    Ok(())
}
