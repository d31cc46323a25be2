use serde::{Deserialize, Serialize};

use super::param::{Module, Param, ParamVisitor};
use super::Scalar;

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam optimizer with bias correction.
///
/// Moment buffers are keyed by the module's visit order, which is fixed for a
/// given architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first_moment: Vec::new(), second_moment: Vec::new() }
    }

    /// Applies one update from the gradients currently stored in `module`.
    pub fn step(&mut self, module: &mut dyn Module<T>) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let mut visitor = AdamVisitor { adam: self, index: 0, bc1, bc2 };
        module.visit("", &mut visitor);
    }
}

struct AdamVisitor<'a, T> {
    adam: &'a mut Adam<T>,
    index: usize,
    bc1: f64,
    bc2: f64,
}

impl<T: Scalar> ParamVisitor<T> for AdamVisitor<'_, T> {
    fn param(&mut self, _name: &str, p: &mut Param<T>) {
        let a = &mut *self.adam;
        if a.first_moment.len() == self.index {
            a.first_moment.push(vec![T::zero(); p.len()]);
            a.second_moment.push(vec![T::zero(); p.len()]);
        }
        let c = a.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let step_size = T::from_f64(c.lr / self.bc1);
        let inv_sqrt_bc2 = T::from_f64(1.0 / self.bc2.sqrt());
        let eps = T::from_f64(c.eps);
        let m = &mut a.first_moment[self.index];
        let v = &mut a.second_moment[self.index];
        assert_eq!(m.len(), p.len(), "optimizer state does not match parameter");
        for i in 0..p.len() {
            let g = p.grad[i];
            m[i] = b1 * m[i] + one_b1 * g;
            v[i] = b2 * v[i] + one_b2 * g * g;
            p.value[i] = p.value[i] - step_size * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
        }
        self.index += 1;
    }

    fn buffer(&mut self, _: &str, _: &mut Vec<T>) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic(Param<f64>);

    impl Module<f64> for Quadratic {
        fn visit(&mut self, _: &str, v: &mut dyn ParamVisitor<f64>) {
            v.param("x", &mut self.0);
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut q = Quadratic(Param::new(vec![2], vec![1.0, -3.0]));
        q.0.grad = vec![4.0, -0.5];
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        adam.step(&mut q);
        // with bias correction the first update is lr * sign(g)
        assert!((q.0.value[0] - 0.9).abs() < 1e-6);
        assert!((q.0.value[1] + 2.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut q = Quadratic(Param::new(vec![1], vec![5.0]));
        let mut adam = Adam::new(AdamConfig::with_lr(0.05));
        for _ in 0..2000 {
            q.0.grad = vec![2.0 * q.0.value[0]];
            adam.step(&mut q);
        }
        assert!(q.0.value[0].abs() < 1e-2);
    }
}
