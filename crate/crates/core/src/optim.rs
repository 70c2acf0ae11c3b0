//! AdamW with decoupled weight decay.

use crate::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay rate; each step multiplies parameters by
    /// `1 - lr * weight_decay` before the moment update is applied.
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> AdamWConfig {
        AdamWConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer bound to a fixed parameter list. Parameters whose gradient is
/// absent in a given step (e.g. a masked-out branch never entered the graph)
/// are left untouched, including their decay.
pub struct AdamW {
    cfg: AdamWConfig,
    params: Vec<Tensor>,
    slots: Vec<Slot>,
    t: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, params: &[Tensor]) -> AdamW {
        let slots = params
            .iter()
            .map(|p| Slot {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
            })
            .collect();
        AdamW {
            cfg,
            params: params.to_vec(),
            slots,
            t: 0,
        }
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// Applies one update from the gradients currently stored on the
    /// parameters, then clears them.
    pub fn step(&mut self) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let shrink = 1.0 - c.lr * c.weight_decay;
        for (p, slot) in self.params.iter().zip(&mut self.slots) {
            let Some(g) = p.grad() else { continue };
            let mut data = p.data_mut();
            for i in 0..g.len() {
                slot.m[i] = c.beta1 * slot.m[i] + (1.0 - c.beta1) * g[i];
                slot.v[i] = c.beta2 * slot.v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                data[i] = data[i] * shrink - c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
            drop(data);
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_in_sign_direction() {
        // With zero moment state, bias correction makes the first update
        // exactly lr * g / (|g| + eps), i.e. almost lr * sign(g).
        let p = Tensor::param(&[2], vec![1.0, 1.0]);
        p.accumulate_grad(&[0.4, -2.5]);
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.0), &[p.clone()]);
        opt.step();
        let d = p.to_vec();
        assert!((d[0] - 0.9).abs() < 1e-6, "got {}", d[0]);
        assert!((d[1] - 1.1).abs() < 1e-6, "got {}", d[1]);
    }

    #[test]
    fn decay_is_decoupled_from_gradient() {
        // Zero gradient: the Adam update vanishes but the decay still bites.
        let p = Tensor::param(&[1], vec![2.0]);
        p.accumulate_grad(&[0.0]);
        let mut opt = AdamW::new(AdamWConfig::new(0.5, 0.1), &[p.clone()]);
        opt.step();
        assert!((p.value() - 2.0 * 0.95).abs() < 1e-12);
    }

    #[test]
    fn params_without_gradient_are_skipped() {
        let p = Tensor::param(&[1], vec![2.0]);
        let mut opt = AdamW::new(AdamWConfig::new(0.5, 0.1), &[p.clone()]);
        opt.step();
        assert_eq!(p.value(), 2.0);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let p = Tensor::param(&[1], vec![-4.0]);
        let mut opt = AdamW::new(AdamWConfig::new(0.05, 0.0), &[p.clone()]);
        for _ in 0..2000 {
            let diff = p.add_scalar(-3.0);
            diff.mul(&diff).sum().backward();
            opt.step();
        }
        assert!((p.value() - 3.0).abs() < 1e-3, "ended at {}", p.value());
    }

    #[test]
    fn moments_bind_by_position() {
        // Two steps with the same gradient shrink the effective step only
        // via bias correction; state must persist across steps.
        let p = Tensor::param(&[1], vec![0.0]);
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.0), &[p.clone()]);
        p.accumulate_grad(&[1.0]);
        opt.step();
        let after_one = p.value();
        p.accumulate_grad(&[1.0]);
        opt.step();
        assert!((after_one + 0.1).abs() < 1e-6);
        assert!((p.value() + 0.2).abs() < 1e-4);
    }
}
