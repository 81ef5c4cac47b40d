//! Parameter updates and gradient-norm clipping.

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use super::AutodiffError;

/// Rescales every gradient in `store` so the global L2 norm is at most
/// `max_norm`. Returns the factor applied (1.0 when nothing changed).
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let norm = store.grad_norm();
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let scale = max_norm / norm;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.grad_mut(id).scale_in_place(scale);
    }
    scale
}

/// Plain gradient descent: `p ← p − η·g`.
///
/// Any `1/m` averaging over a mini-batch is expected to already be part of
/// the loss.
pub fn sgd_step(store: &mut ParamStore, lr: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let g = store.grad(id).clone();
        for (p, d) in store.value_mut(id).data_mut().iter_mut().zip(g.data()) {
            *p -= lr * d;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { lr: 5.5e-5, rho: 0.99, eps: 1e-8 }
    }
}

/// RMSprop state: one running mean of squared gradients per parameter.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    acc: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, store: &ParamStore) -> Self {
        let acc = store
            .ids()
            .map(|id| {
                let (r, c) = store.value(id).shape();
                Tensor::zeros(r, c)
            })
            .collect();
        Self { config, acc }
    }

    /// `acc ← ρ·acc + (1−ρ)·g²`, `p ← p − η·g / √(acc + ε)`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), AutodiffError> {
        if self.acc.len() != store.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "rmsprop",
                left: (self.acc.len(), 1),
                right: (store.len(), 1),
            });
        }
        let RmsPropConfig { lr, rho, eps } = self.config;
        let ids: Vec<_> = store.ids().collect();
        for (id, acc) in ids.into_iter().zip(&mut self.acc) {
            if acc.shape() != store.value(id).shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "rmsprop",
                    left: acc.shape(),
                    right: store.value(id).shape(),
                });
            }
            let g = store.grad(id).clone();
            let p = store.value_mut(id);
            for ((pv, a), &gv) in p.data_mut().iter_mut().zip(acc.data_mut()).zip(g.data()) {
                *a = rho * *a + (1.0 - rho) * gv * gv;
                *pv -= lr * gv / (*a + eps).sqrt();
            }
        }
        Ok(())
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with_grad(values: Vec<f64>, grads: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::row_vector(values));
        s.grad_mut(id).data_mut().copy_from_slice(&grads);
        s
    }

    #[test]
    fn sgd_single_step() {
        let mut s = store_with_grad(vec![0.0], vec![1.0]);
        sgd_step(&mut s, 0.1);
        assert_eq!(s.value(s.id("p").unwrap()).data(), &[-0.1]);
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut s = store_with_grad(vec![0.0, 0.0], vec![0.3, 0.4]);
        assert_eq!(clip_grad_norm(&mut s, 1.0), 1.0);
        assert_eq!(s.grad(s.id("p").unwrap()).data(), &[0.3, 0.4]);
    }

    #[test]
    fn clip_rescales_large_gradients() {
        let mut s = store_with_grad(vec![0.0, 0.0], vec![0.0, 4.0]);
        let scale = clip_grad_norm(&mut s, 1.0);
        assert!((scale - 0.25).abs() < 1e-15);
        assert!((s.grad_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clip_with_zero_gradients_is_a_no_op() {
        let mut s = store_with_grad(vec![1.0], vec![0.0]);
        assert_eq!(clip_grad_norm(&mut s, 1.0), 1.0);
        assert_eq!(s.grad_norm(), 0.0);
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        let cfg = RmsPropConfig { lr: 0.01, rho: 0.9, eps: 1e-8 };
        let g = 0.7;
        let mut s = store_with_grad(vec![0.0], vec![g]);
        let mut opt = RmsProp::new(cfg, &s);
        opt.step(&mut s).unwrap();
        let expected = -cfg.lr * g / ((1.0 - cfg.rho) * g * g + cfg.eps).sqrt();
        assert!((s.value(s.id("p").unwrap()).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_minimises_a_parabola() {
        // f(p) = p², ∇f = 2p. Independent recurrence below is the oracle.
        let cfg = RmsPropConfig { lr: 0.01, rho: 0.99, eps: 1e-8 };
        let mut s = store_with_grad(vec![1.0], vec![0.0]);
        let id = s.id("p").unwrap();
        let mut opt = RmsProp::new(cfg, &s);
        let (mut p_ref, mut acc_ref) = (1.0f64, 0.0f64);
        for _ in 0..200 {
            let p = s.value(id).item();
            s.grad_mut(id).data_mut()[0] = 2.0 * p;
            opt.step(&mut s).unwrap();

            let g = 2.0 * p_ref;
            acc_ref = cfg.rho * acc_ref + (1.0 - cfg.rho) * g * g;
            p_ref -= cfg.lr * g / (acc_ref + cfg.eps).sqrt();
        }
        let p = s.value(id).item();
        assert_eq!(p, p_ref);
        assert!(p.abs() < 0.5, "p = {p}");
        assert!(opt.accumulators()[0].data()[0] >= 0.0);
    }
}
