use rand::Rng;

use super::param::{join_name, Module, Param, ParamVisitor};
use super::scalar::{gemm, MatRef};
use super::{Scalar, Tensor};

/// Upper bound on the im2col scratch buffer, in elements.
const COLS_BUDGET: usize = 1 << 22;

/// 2-D convolution over NCHW tensors, lowered to im2col + GEMM.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// Default initialization: uniform in `±1/sqrt(fan_in)` for weights and bias.
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((in_ch * kernel * kernel) as f64).sqrt();
        Self {
            weight: Param::uniform(vec![out_ch, in_ch, kernel, kernel], bound, rng),
            bias: Param::uniform(vec![out_ch], bound, rng),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    /// He-normal weights and zero bias.
    pub fn new_he(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (in_ch * kernel * kernel) as f64).sqrt();
        Self {
            weight: Param::normal(vec![out_ch, in_ch, kernel, kernel], std, rng),
            bias: Param::zeros(vec![out_ch]),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel;
        let oh = (h + 2 * self.pad).saturating_sub(k) / self.stride + 1;
        let ow = (w + 2 * self.pad).saturating_sub(k) / self.stride + 1;
        (oh, ow)
    }

    fn rows_per_chunk(&self, oh: usize, ow: usize) -> usize {
        let kdim = self.in_ch * self.kernel * self.kernel;
        (COLS_BUDGET / (kdim * ow).max(1)).clamp(1, oh)
    }

    /// Fills `cols` (`kdim x (rows*ow)`, row-major) for output rows `r0..r0+rows`.
    fn im2col(&self, x: &[T], h: usize, w: usize, ow: usize, r0: usize, rows: usize, cols: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let ncols = rows * ow;
        for c in 0..self.in_ch {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..rows {
                        let iy = ((r0 + oy) * s + ky) as isize - p;
                        let line = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            line.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            *v = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds `cols` back into the input gradient.
    fn col2im(&self, cols: &[T], h: usize, w: usize, ow: usize, r0: usize, rows: usize, dx: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let ncols = rows * ow;
        for c in 0..self.in_ch {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..rows {
                        let iy = ((r0 + oy) * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let line = &src[oy * ow..(oy + 1) * ow];
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &v) in line.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] = dst[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.in_ch, "conv input channel mismatch");
        let (oh, ow) = self.output_size(h, w);
        let kdim = self.in_ch * self.kernel * self.kernel;
        let mut out = Tensor::zeros([n, self.out_ch, oh, ow]);
        let chunk = self.rows_per_chunk(oh, ow);
        let mut cols = vec![T::zero(); kdim * chunk * ow];
        let wmat = MatRef::row_major(&self.weight.value, self.out_ch, kdim);
        for i in 0..n {
            let xs = x.sample(i);
            let ys = out.sample_mut(i);
            let mut r0 = 0;
            while r0 < oh {
                let rows = chunk.min(oh - r0);
                let ncols = rows * ow;
                self.im2col(xs, h, w, ow, r0, rows, &mut cols[..kdim * ncols]);
                let cm = MatRef::row_major(&cols[..kdim * ncols], kdim, ncols);
                gemm(T::one(), wmat, cm, T::zero(), &mut ys[r0 * ow..], oh * ow);
                r0 += rows;
            }
            for (o, plane) in ys.chunks_mut(oh * ow).enumerate() {
                let b = self.bias.value[o];
                plane.iter_mut().for_each(|v| *v = *v + b);
            }
        }
        out
    }

    /// Backpropagates `dy` through the convolution applied to `x`: accumulates
    /// parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        self.accumulate_grads(x, dy);
        self.input_grad(x.shape(), dy)
    }

    /// Adds `dL/dW` and `dL/db` for input `x` and output gradient `dy`.
    pub fn accumulate_grads(&mut self, x: &Tensor<T>, dy: &Tensor<T>) {
        let [n, _, h, w] = x.shape();
        let (oh, ow) = self.output_size(h, w);
        assert_eq!(dy.shape(), [n, self.out_ch, oh, ow], "conv output gradient shape mismatch");
        let kdim = self.in_ch * self.kernel * self.kernel;
        let chunk = self.rows_per_chunk(oh, ow);
        let mut cols = vec![T::zero(); kdim * chunk * ow];
        for i in 0..n {
            let dys = dy.sample(i);
            for (o, plane) in dys.chunks(oh * ow).enumerate() {
                let s = plane.iter().fold(T::zero(), |a, &b| a + b);
                self.bias.grad[o] = self.bias.grad[o] + s;
            }
            let mut r0 = 0;
            while r0 < oh {
                let rows = chunk.min(oh - r0);
                let ncols = rows * ow;
                let dy_chunk = MatRef { data: &dys[r0 * ow..], rows: self.out_ch, cols: ncols, rs: oh * ow, cs: 1 };
                self.im2col(x.sample(i), h, w, ow, r0, rows, &mut cols[..kdim * ncols]);
                let cm = MatRef::row_major(&cols[..kdim * ncols], kdim, ncols);
                gemm(T::one(), dy_chunk, cm.t(), T::one(), &mut self.weight.grad, kdim);
                r0 += rows;
            }
        }
    }

    /// `dL/dx` for an input of shape `input_shape` given the output gradient.
    pub fn input_grad(&self, input_shape: [usize; 4], dy: &Tensor<T>) -> Tensor<T> {
        let [n, _, h, w] = input_shape;
        let (oh, ow) = self.output_size(h, w);
        assert_eq!(dy.shape(), [n, self.out_ch, oh, ow], "conv output gradient shape mismatch");
        let kdim = self.in_ch * self.kernel * self.kernel;
        let chunk = self.rows_per_chunk(oh, ow);
        let mut dcols = vec![T::zero(); kdim * chunk * ow];
        let mut dx = Tensor::zeros(input_shape);
        let wmat = MatRef::row_major(&self.weight.value, self.out_ch, kdim);
        for i in 0..n {
            let dys = dy.sample(i);
            let mut r0 = 0;
            while r0 < oh {
                let rows = chunk.min(oh - r0);
                let ncols = rows * ow;
                let dy_chunk = MatRef { data: &dys[r0 * ow..], rows: self.out_ch, cols: ncols, rs: oh * ow, cs: 1 };
                gemm(T::one(), wmat.t(), dy_chunk, T::zero(), &mut dcols[..kdim * ncols], ncols);
                self.col2im(&dcols[..kdim * ncols], h, w, ow, r0, rows, dx.sample_mut(i));
                r0 += rows;
            }
        }
        dx
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        v.param(&join_name(prefix, "weight"), &mut self.weight);
        v.param(&join_name(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let [n, c, h, w] = x.shape();
        let (oh, ow) = conv.output_size(h, w);
        let k = conv.kernel;
        let mut out = Tensor::zeros([n, conv.out_ch, oh, ow]);
        for b in 0..n {
            for o in 0..conv.out_ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.value[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                                    let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += conv.weight.value[((o * c + ci) * k + ky) * k + kx]
                                            * x.at(b, ci, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        *out.at_mut(b, o, oy, ox) = acc;
                    }
                }
            }
        }
        out
    }

    fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(k, s, p) in &[(3, 1, 1), (4, 2, 1), (1, 1, 0)] {
            let conv = Conv2d::<f64>::new(3, 5, k, s, p, &mut rng);
            let x = random_tensor([2, 3, 9, 8], &mut rng);
            let fast = conv.forward(&x);
            let slow = naive_conv(&conv, &x);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::<f64>::new(2, 3, 4, 2, 1, &mut rng);
        let x = random_tensor([1, 2, 6, 6], &mut rng);
        let dy = random_tensor([1, 3, 3, 3], &mut rng);
        let objective = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
            c.forward(x).data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
        };
        let dx = conv.backward(&x, &dy);
        let h = 1e-6;
        for idx in [0, 7, 20, 35, 71] {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let fd = (objective(&conv, &xp) - objective(&conv, &xm)) / (2.0 * h);
            assert!((fd - dx.data()[idx]).abs() < 1e-7, "dx[{idx}]");
        }
        for idx in [0, 13, 50, 95] {
            let mut cp = conv.clone();
            cp.weight.value[idx] += h;
            let mut cm = conv.clone();
            cm.weight.value[idx] -= h;
            let fd = (objective(&cp, &x) - objective(&cm, &x)) / (2.0 * h);
            assert!((fd - conv.weight.grad[idx]).abs() < 1e-7, "dw[{idx}]");
        }
        let bias_fd: f64 = dy.sample(0)[..9].iter().sum();
        assert!((conv.bias.grad[0] - bias_fd).abs() < 1e-12);
    }
}
