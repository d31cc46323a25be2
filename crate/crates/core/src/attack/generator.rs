//! U-Net generator mapping sparse feature maps to RGB images.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::ops::{max_pool2, max_pool2_backward, relu, relu_backward, sigmoid, sigmoid_backward, upsample2, upsample2_backward};
use crate::nn::{BatchNorm2d, BatchNormCache, Conv2d, Module, ParamVisitor, Scalar, Tensor};

/// Total downsampling factor of the encoder.
pub const GENERATOR_STRIDE: usize = 32;

/// Generator architecture: five 3x3 encoder stages (each followed by 2x max-pool)
/// and five upsampling decoder stages with concatenated skip connections.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Descriptor dimension of the input map.
    pub in_channels: usize,
    /// Encoder widths; the decoder mirrors them in reverse order.
    pub widths: [usize; 5],
}

impl GeneratorSpec {
    pub fn new(in_channels: usize) -> Self {
        Self { in_channels, widths: [64, 128, 256, 512, 1024] }
    }

    pub fn with_widths(mut self, widths: [usize; 5]) -> Self {
        self.widths = widths;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.widths.contains(&0) {
            return Err(crate::Error::Config(format!("generator channels must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Convolution, batch normalization and ReLU.
#[derive(Clone, Debug)]
pub(crate) struct ConvBnRelu<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

struct StageTape<T> {
    input: Tensor<T>,
    bn: BatchNormCache<T>,
    out: Tensor<T>,
}

impl<T: Scalar> ConvBnRelu<T> {
    fn new(cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        Self { conv: Conv2d::new(cin, cout, 3, 1, 1, rng), bn: BatchNorm2d::new(cout) }
    }

    fn forward_train(&mut self, x: Tensor<T>) -> StageTape<T> {
        let z = self.conv.forward(&x);
        let (b, bn) = self.bn.forward_train(&z);
        StageTape { input: x, bn, out: relu(&b) }
    }

    fn forward_eval(&self, x: &Tensor<T>) -> Tensor<T> {
        relu(&self.bn.forward_eval(&self.conv.forward(x)))
    }

    fn backward(&mut self, tape: &StageTape<T>, dy: &Tensor<T>, need_input: bool) -> Option<Tensor<T>> {
        let db = relu_backward(&tape.out, dy);
        let dz = self.bn.backward(&tape.bn, &db, true);
        self.conv.accumulate_grads(&tape.input, &dz);
        need_input.then(|| self.conv.input_grad(tape.input.shape(), &dz))
    }
}

impl<T: Scalar> Module<T> for ConvBnRelu<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        self.conv.visit(&format!("{prefix}.conv"), v);
        self.bn.visit(&format!("{prefix}.bn"), v);
    }
}

/// The reconstruction network.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    spec: GeneratorSpec,
    encoder: Vec<ConvBnRelu<T>>,
    decoder: Vec<ConvBnRelu<T>>,
    head: Conv2d<T>,
}

/// Intermediate values of a training-mode forward pass.
pub struct GeneratorTape<T> {
    encoder: Vec<StageTape<T>>,
    pool_args: Vec<Vec<u32>>,
    decoder: Vec<StageTape<T>>,
    head_input: Tensor<T>,
    output: Tensor<T>,
}

impl<T> GeneratorTape<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

impl<T: Scalar> Generator<T> {
    pub fn new(spec: GeneratorSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let w = spec.widths;
        let mut encoder = Vec::with_capacity(5);
        let mut cin = spec.in_channels;
        for &cout in &w {
            encoder.push(ConvBnRelu::new(cin, cout, rng));
            cin = cout;
        }
        let mut decoder = Vec::with_capacity(5);
        for j in 0..5 {
            let cout = w[4 - j];
            decoder.push(ConvBnRelu::new(cin, cout, rng));
            // concatenated with the encoder output of the same resolution
            cin = 2 * cout;
        }
        let head = Conv2d::new(cin, 3, 1, 1, 0, rng);
        Ok(Self { spec, encoder, decoder, head })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.spec.in_channels {
            return Err(invalid!(
                "feature map has {} channels but the generator expects {}",
                x.channels(),
                self.spec.in_channels
            ));
        }
        Ok(())
    }

    /// Inference with running batch-norm statistics. Inputs of any size are
    /// zero-padded to a multiple of [`GENERATOR_STRIDE`] and cropped back.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (h, w) = (x.height(), x.width());
        if h == 0 || w == 0 {
            return Err(invalid!("empty feature map"));
        }
        let ph = h.div_ceil(GENERATOR_STRIDE) * GENERATOR_STRIDE;
        let pw = w.div_ceil(GENERATOR_STRIDE) * GENERATOR_STRIDE;
        let mut t = x.pad_to(ph, pw);
        let mut skips = Vec::with_capacity(5);
        for stage in &self.encoder {
            let r = stage.forward_eval(&t);
            t = max_pool2(&r).0;
            skips.push(r);
        }
        for (j, stage) in self.decoder.iter().enumerate() {
            let r = stage.forward_eval(&upsample2(&t));
            t = Tensor::concat_channels(&r, &skips[4 - j]);
        }
        Ok(sigmoid(&self.head.forward(&t)).crop_to(h, w))
    }

    /// Training-mode forward pass using batch statistics. Spatial dimensions
    /// must be multiples of [`GENERATOR_STRIDE`].
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<GeneratorTape<T>> {
        self.check_input(x)?;
        if x.height() % GENERATOR_STRIDE != 0 || x.width() % GENERATOR_STRIDE != 0 || x.height() == 0 || x.width() == 0 {
            return Err(invalid!(
                "training input {}x{} is not a positive multiple of {GENERATOR_STRIDE}",
                x.height(),
                x.width()
            ));
        }
        let mut encoder = Vec::with_capacity(5);
        let mut pool_args = Vec::with_capacity(5);
        let mut t = x.clone();
        for stage in &mut self.encoder {
            let tape = stage.forward_train(t);
            let (p, arg) = max_pool2(&tape.out);
            t = p;
            pool_args.push(arg);
            encoder.push(tape);
        }
        let mut decoder: Vec<StageTape<T>> = Vec::with_capacity(5);
        for (j, stage) in self.decoder.iter_mut().enumerate() {
            let tape = stage.forward_train(upsample2(&t));
            t = Tensor::concat_channels(&tape.out, &encoder[4 - j].out);
            decoder.push(tape);
        }
        let output = sigmoid(&self.head.forward(&t));
        Ok(GeneratorTape { encoder, pool_args, decoder, head_input: t, output })
    }

    /// Accumulates parameter gradients for `d_output = dL/d(output)`.
    pub fn backward(&mut self, tape: &GeneratorTape<T>, d_output: &Tensor<T>) {
        let d_logits = sigmoid_backward(&tape.output, d_output);
        self.head.accumulate_grads(&tape.head_input, &d_logits);
        let mut d = self.head.input_grad(tape.head_input.shape(), &d_logits);
        let mut d_skip: Vec<Option<Tensor<T>>> = vec![None, None, None, None, None];
        for j in (0..5).rev() {
            let st = &tape.decoder[j];
            let (d_out, d_s) = d.split_channels(st.out.channels());
            d_skip[4 - j] = Some(d_s);
            let du = self.decoder[j].backward(st, &d_out, true).expect("input gradient requested");
            d = upsample2_backward(&du);
        }
        for i in (0..5).rev() {
            let st = &tape.encoder[i];
            let mut dr = max_pool2_backward(st.out.shape(), &tape.pool_args[i], &d);
            dr.add_assign(d_skip[i].as_ref().expect("skip gradient set"));
            match self.encoder[i].backward(st, &dr, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

impl<T: Scalar> Module<T> for Generator<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        for (i, s) in self.encoder.iter_mut().enumerate() {
            s.visit(&crate::nn::join_name(prefix, &format!("enc{i}")), v);
        }
        for (i, s) in self.decoder.iter_mut().enumerate() {
            s.visit(&crate::nn::join_name(prefix, &format!("dec{i}")), v);
        }
        self.head.visit(&crate::nn::join_name(prefix, "head"), v);
    }
}
