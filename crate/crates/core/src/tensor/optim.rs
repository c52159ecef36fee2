use alloc::string::String;

use super::Tensor;

/// A named learnable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Parameter { name: name.into(), grad: zeros.clone(), adam_m: zeros.clone(), adam_v: zeros, value }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Gradients are
/// zeroed afterwards.
pub fn adam_step<'p>(params: impl IntoIterator<Item = &'p mut Parameter>, cfg: &AdamConfig, t: u64) {
    assert!(t >= 1, "adam step count starts at 1");
    let t = t as f64;
    let bias1 = 1.0 - libm::pow(cfg.beta1, t);
    let bias2 = 1.0 - libm::pow(cfg.beta2, t);
    for p in params {
        let Parameter { value, grad, adam_m, adam_v, .. } = p;
        let it = value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(adam_m.data_mut().iter_mut().zip(adam_v.data_mut().iter_mut()));
        for ((w, &g), (m, v)) in it {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *w -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
        p.zero_grad();
    }
}
