use super::param::{join_name, Module, Param, ParamVisitor};
use super::{Scalar, Tensor};

/// Per-channel batch normalization with running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    eps: f64,
    momentum: f64,
}

/// Saved state needed to backpropagate a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(vec![channels], T::one()),
            beta: Param::zeros(vec![channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> (Tensor<T>, BatchNormCache<T>) {
        let [n, c, _, _] = x.shape();
        assert_eq!(c, self.channels(), "batch-norm channel mismatch");
        let plane = x.plane();
        let count = (n * plane) as f64;
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(c);
        for ch in 0..c {
            let mut sum = 0.0;
            for i in 0..n {
                let s = &x.sample(i)[ch * plane..(ch + 1) * plane];
                sum += s.iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mean = sum / count;
            let mut sq = 0.0;
            for i in 0..n {
                let s = &x.sample(i)[ch * plane..(ch + 1) * plane];
                sq += s.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
            }
            let var = sq / count;
            let istd = 1.0 / (var + self.eps).sqrt();
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            let (mean_t, istd_t) = (T::from_f64(mean), T::from_f64(istd));
            for i in 0..n {
                let src = &x.sample(i)[ch * plane..(ch + 1) * plane];
                let xh = &mut xhat.sample_mut(i)[ch * plane..(ch + 1) * plane];
                for (d, &s) in xh.iter_mut().zip(src) {
                    *d = (s - mean_t) * istd_t;
                }
                let yd = &mut y.sample_mut(i)[ch * plane..(ch + 1) * plane];
                let xh = &xhat.sample(i)[ch * plane..(ch + 1) * plane];
                for (d, &v) in yd.iter_mut().zip(xh) {
                    *d = v * g + b;
                }
            }
            let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
            let m = self.momentum;
            self.running_mean[ch] = T::from_f64((1.0 - m) * self.running_mean[ch].as_f64() + m * mean);
            self.running_var[ch] = T::from_f64((1.0 - m) * self.running_var[ch].as_f64() + m * unbiased);
            inv_std.push(istd_t);
        }
        (y, BatchNormCache { xhat, inv_std })
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let [n, c, _, _] = x.shape();
        assert_eq!(c, self.channels(), "batch-norm channel mismatch");
        let plane = x.plane();
        let mut y = x.clone();
        for ch in 0..c {
            let istd = T::from_f64(1.0 / (self.running_var[ch].as_f64() + self.eps).sqrt());
            let scale = self.gamma.value[ch] * istd;
            let shift = self.beta.value[ch] - self.running_mean[ch] * scale;
            for i in 0..n {
                for v in &mut y.sample_mut(i)[ch * plane..(ch + 1) * plane] {
                    *v = *v * scale + shift;
                }
            }
        }
        y
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Tensor<T>, param_grads: bool) -> Tensor<T> {
        let [n, c, _, _] = dy.shape();
        let plane = dy.plane();
        let count = T::from_f64((n * plane) as f64);
        let mut dx = Tensor::zeros(dy.shape());
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for i in 0..n {
                let d = &dy.sample(i)[ch * plane..(ch + 1) * plane];
                let xh = &cache.xhat.sample(i)[ch * plane..(ch + 1) * plane];
                for (&a, &b) in d.iter().zip(xh) {
                    sum_dy = sum_dy + a;
                    sum_dy_xhat = sum_dy_xhat + a * b;
                }
            }
            if param_grads {
                self.gamma.grad[ch] = self.gamma.grad[ch] + sum_dy_xhat;
                self.beta.grad[ch] = self.beta.grad[ch] + sum_dy;
            }
            let g = self.gamma.value[ch];
            let k = g * cache.inv_std[ch] / count;
            for i in 0..n {
                let d = &dy.sample(i)[ch * plane..(ch + 1) * plane];
                let xh = &cache.xhat.sample(i)[ch * plane..(ch + 1) * plane];
                let out = &mut dx.sample_mut(i)[ch * plane..(ch + 1) * plane];
                for ((o, &a), &b) in out.iter_mut().zip(d).zip(xh) {
                    *o = k * (count * a - sum_dy - b * sum_dy_xhat);
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        v.param(&join_name(prefix, "weight"), &mut self.gamma);
        v.param(&join_name(prefix, "bias"), &mut self.beta);
        v.buffer(&join_name(prefix, "running_mean"), &mut self.running_mean);
        v.buffer(&join_name(prefix, "running_var"), &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn train_output_is_normalized_and_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::from_vec([2, 2, 3, 3], (0..36).map(|_| rng.random_range(-2.0..3.0)).collect());
        let dy = Tensor::<f64>::from_vec([2, 2, 3, 3], (0..36).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.gamma.value = vec![1.5, 0.7];
        bn.beta.value = vec![0.1, -0.2];
        let (y, cache) = bn.clone().forward_train(&x);
        let mean0: f64 = (0..2).flat_map(|i| y.sample(i)[..9].to_vec()).sum::<f64>() / 18.0;
        assert!((mean0 - 0.1).abs() < 1e-12);

        let dx = bn.backward(&cache, &dy, true);
        let obj = |x: &Tensor<f64>| -> f64 {
            let (y, _) = bn.clone().forward_train(x);
            y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for idx in [0, 5, 17, 30] {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let fd = (obj(&xp) - obj(&xm)) / (2.0 * h);
            assert!((fd - dx.data()[idx]).abs() < 1e-6, "{fd} vs {}", dx.data()[idx]);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 2], vec![1.0, 3.0]);
        let mut bn = BatchNorm2d::<f64>::new(1);
        bn.forward_train(&x);
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        // unbiased variance of {1, 3} is 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-12);
    }
}
