//! Adaptive-moment optimizer with bias correction.

use std::collections::BTreeMap;

use thiserror::Error;

use super::params::ParamBundle;
use super::tensor::Tensor;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient for parameter {path}")]
    NonFiniteGradient { path: String },
    #[error("gradient shape {grad:?} does not match parameter {path} with shape {param:?}")]
    ShapeMismatch {
        path: String,
        grad: Vec<usize>,
        param: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(
        &mut self,
        params: &mut ParamBundle,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<(), OptimError> {
        for (path, g) in grads {
            if !g.all_finite() {
                return Err(OptimError::NonFiniteGradient { path: path.clone() });
            }
            let p = params.get(path);
            if p.shape() != g.shape() {
                return Err(OptimError::ShapeMismatch {
                    path: path.clone(),
                    grad: g.shape().to_vec(),
                    param: p.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (path, g) in grads {
            let m = self
                .m
                .entry(path.clone())
                .or_insert_with(|| Tensor::new(g.shape().to_vec(), vec![0.0; g.len()]));
            let v = self
                .v
                .entry(path.clone())
                .or_insert_with(|| Tensor::new(g.shape().to_vec(), vec![0.0; g.len()]));
            let p = params.get_mut(path);
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            for ((pv, mv), (vv, gv)) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut().zip(g.data().iter()))
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        params.version += 1;
        Ok(())
    }
}

/// Scale gradients in place so their global l2 norm does not exceed
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= k;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle_with(path: &str, vals: Vec<f64>) -> ParamBundle {
        let mut b = ParamBundle::new();
        b.insert(path, Tensor::row_vec(vals));
        b
    }

    #[test]
    fn zero_gradient_no_change() {
        let mut params = bundle_with("w", vec![1.0, -2.0]);
        let before = params.get("w").clone();
        let mut opt = Adam::new(0.01);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::row_vec(vec![0.0, 0.0]));
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params.get("w"), &before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = bundle_with("w", vec![1.0, 1.0, 1.0]);
        let mut opt = Adam::new(0.1);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::row_vec(vec![3.0, -0.5, 1e-4]));
        opt.step(&mut params, &grads).unwrap();
        let w = params.get("w").data();
        // bias correction makes mhat = g and vhat = g^2, so the first update
        // is -lr * g / (|g| + eps) which is approximately -lr * sign(g)
        assert!((w[0] - (1.0 - 0.1)).abs() < 1e-6);
        assert!((w[1] - (1.0 + 0.1)).abs() < 1e-6);
        assert!((w[2] - (1.0 - 0.1)).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_names_the_path() {
        let mut params = bundle_with("deep.layer.w", vec![1.0]);
        let mut opt = Adam::new(0.1);
        let mut grads = BTreeMap::new();
        grads.insert("deep.layer.w".to_string(), Tensor::row_vec(vec![f64::NAN]));
        let err = opt.step(&mut params, &grads).unwrap_err();
        assert!(err.to_string().contains("deep.layer.w"));
    }

    #[test]
    fn clip_scales_down_only_when_needed() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), Tensor::row_vec(vec![3.0, 4.0]));
        let norm = clip_global_norm(&mut grads, 10.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert_eq!(grads["a"].data(), &[3.0, 4.0]);
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads["a"].data()[0] - 0.6).abs() < 1e-12);
    }
}
