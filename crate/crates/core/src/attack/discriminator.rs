//! Convolutional discriminator scoring image realness.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::ops::{leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward};
use crate::nn::{join_name, BatchNorm2d, BatchNormCache, Conv2d, Module, ParamVisitor, Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Seven 4x4 stride-2 convolutions; the first stage has no batch norm and
/// the last ends in a sigmoid instead of a leaky ReLU.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub widths: [usize; 7],
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self { widths: [256, 128, 64, 32, 16, 8, 4] }
    }
}

impl DiscriminatorSpec {
    /// Input sides must be multiples of this.
    pub const STRIDE: usize = 128;
}

#[derive(Clone, Debug)]
struct Stage<T> {
    conv: Conv2d<T>,
    bn: Option<BatchNorm2d<T>>,
}

struct StageTape<T> {
    input: Tensor<T>,
    bn: Option<BatchNormCache<T>>,
    /// Pre-activation for hidden stages, post-sigmoid output for the last.
    act: Tensor<T>,
}

/// Realness scores: `N x widths[6] x H/128 x W/128`, strictly inside `(0, 1)`.
pub type RealnessGrid<T> = Tensor<T>;

#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    spec: DiscriminatorSpec,
    stages: Vec<Stage<T>>,
}

pub struct DiscriminatorTape<T> {
    stages: Vec<StageTape<T>>,
}

impl<T> DiscriminatorTape<T> {
    pub fn scores(&self) -> &Tensor<T> {
        &self.stages.last().expect("non-empty").act
    }
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(spec: DiscriminatorSpec, rng: &mut impl Rng) -> Result<Self> {
        if spec.widths.contains(&0) {
            return Err(crate::Error::Config(format!("discriminator widths must be positive: {spec:?}")));
        }
        let mut cin = 3;
        let stages = spec
            .widths
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let conv = Conv2d::new(cin, cout, 4, 2, 1, rng);
                cin = cout;
                Stage { conv, bn: (i > 0).then(|| BatchNorm2d::new(cout)) }
            })
            .collect();
        Ok(Self { spec, stages })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    fn check_input(x: &Tensor<T>) -> Result<()> {
        let s = DiscriminatorSpec::STRIDE;
        if x.channels() != 3 {
            return Err(invalid!("discriminator expects 3 channels, got {}", x.channels()));
        }
        if x.height() == 0 || x.width() == 0 || x.height() % s != 0 || x.width() % s != 0 {
            return Err(invalid!("discriminator input {}x{} is not a positive multiple of {s}", x.height(), x.width()));
        }
        Ok(())
    }

    /// Inference with running statistics.
    pub fn forward(&self, x: &Tensor<T>) -> Result<RealnessGrid<T>> {
        Self::check_input(x)?;
        let last = self.stages.len() - 1;
        let mut t = x.clone();
        for (i, st) in self.stages.iter().enumerate() {
            let mut z = st.conv.forward(&t);
            if let Some(bn) = &st.bn {
                z = bn.forward_eval(&z);
            }
            t = if i == last { sigmoid(&z) } else { leaky_relu(&z, LEAKY_SLOPE) };
        }
        Ok(t)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<DiscriminatorTape<T>> {
        Self::check_input(x)?;
        let last = self.stages.len() - 1;
        let mut tapes = Vec::with_capacity(self.stages.len());
        let mut t = x.clone();
        for (i, st) in self.stages.iter_mut().enumerate() {
            let mut z = st.conv.forward(&t);
            let mut cache = None;
            if let Some(bn) = st.bn.as_mut() {
                let (y, c) = bn.forward_train(&z);
                z = y;
                cache = Some(c);
            }
            let (act, next) = if i == last {
                let s = sigmoid(&z);
                (s.clone(), s)
            } else {
                let a = leaky_relu(&z, LEAKY_SLOPE);
                (z, a)
            };
            tapes.push(StageTape { input: t, bn: cache, act });
            t = next;
        }
        Ok(DiscriminatorTape { stages: tapes })
    }

    /// Backpropagates score gradients. Parameter gradients are accumulated only
    /// when `param_grads` is set; the input-image gradient is always returned.
    pub fn backward(&mut self, tape: &DiscriminatorTape<T>, d_scores: &Tensor<T>, param_grads: bool) -> Tensor<T> {
        let last = self.stages.len() - 1;
        let mut d = d_scores.clone();
        for i in (0..self.stages.len()).rev() {
            let t = &tape.stages[i];
            let st = &mut self.stages[i];
            let mut dz = if i == last { sigmoid_backward(&t.act, &d) } else { leaky_relu_backward(&t.act, &d, LEAKY_SLOPE) };
            if let (Some(bn), Some(cache)) = (st.bn.as_mut(), t.bn.as_ref()) {
                dz = bn.backward(cache, &dz, param_grads);
            }
            if param_grads {
                st.conv.accumulate_grads(&t.input, &dz);
            }
            d = st.conv.input_grad(t.input.shape(), &dz);
        }
        d
    }
}

impl<T: Scalar> Module<T> for Discriminator<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        for (i, st) in self.stages.iter_mut().enumerate() {
            st.conv.visit(&join_name(prefix, &format!("stage{i}.conv")), v);
            if let Some(bn) = st.bn.as_mut() {
                bn.visit(&join_name(prefix, &format!("stage{i}.bn")), v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_shape_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Discriminator::<f32>::new(DiscriminatorSpec { widths: [8, 8, 8, 8, 8, 8, 4] }, &mut rng).unwrap();
        let grid = d.forward(&Tensor::full([1, 3, 256, 128], 0.5)).unwrap();
        assert_eq!(grid.shape(), [1, 4, 2, 1]);
        assert!(grid.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(d.forward(&Tensor::zeros([1, 3, 100, 128])).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut d = Discriminator::<f64>::new(DiscriminatorSpec { widths: [3, 3, 3, 3, 3, 3, 2] }, &mut rng).unwrap();
        let x = Tensor::from_vec([2, 3, 128, 128], (0..2 * 3 * 128 * 128).map(|_| rng.random_range(0.0..1.0)).collect());
        let tape = d.forward_train(&x).unwrap();
        let w = Tensor::from_vec(tape.scores().shape(), vec![0.3, -0.7, 1.1, 0.4]);
        let dx = d.backward(&tape, &w, false);
        let obj = |x: &Tensor<f64>| -> f64 {
            let t = d.clone().forward_train(x).unwrap();
            t.scores().data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        for idx in [0, 1000, 40_000, 70_001] {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let fd = (obj(&xp) - obj(&xm)) / (2.0 * h);
            let a = dx.data()[idx];
            assert!((fd - a).abs() <= 1e-4 * fd.abs().max(1e-4), "idx {idx}: fd {fd} analytic {a}");
        }
    }
}
