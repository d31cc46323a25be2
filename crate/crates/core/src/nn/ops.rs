//! Parameter-free layers and their gradients.

use super::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its output.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = y.data().iter().zip(dy.data()).map(|(&o, &d)| if o > T::zero() { d } else { T::zero() }).collect();
    Tensor::from_vec(dy.shape(), data)
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::from_f64(slope);
    x.map(|v| if v > T::zero() { v } else { v * s })
}

/// Gradient of leaky ReLU given its input.
pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::from_f64(slope);
    let data = x.data().iter().zip(dy.data()).map(|(&i, &d)| if i > T::zero() { d } else { d * s }).collect();
    Tensor::from_vec(dy.shape(), data)
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Gradient of the logistic function given its output.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = y.data().iter().zip(dy.data()).map(|(&o, &d)| d * o * (T::one() - o)).collect();
    Tensor::from_vec(dy.shape(), data)
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and flat argmax indices.
pub fn max_pool2<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut arg = vec![0u32; n * c * oh * ow];
    let src = x.data();
    let dst = out.data_mut();
    for nc in 0..n * c {
        let base = nc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = (nc * oh + oy) * ow + ox;
                dst[o] = src[best];
                arg[o] = best as u32;
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward<T: Scalar>(input_shape: [usize; 4], argmax: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        d[i as usize] = d[i as usize] + g;
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    let src = x.data();
    let dst = out.data_mut();
    for nc in 0..n * c {
        for y in 0..2 * h {
            let row = &src[(nc * h + y / 2) * w..(nc * h + y / 2 + 1) * w];
            let out_row = &mut dst[(nc * 2 * h + y) * 2 * w..(nc * 2 * h + y + 1) * 2 * w];
            for (x2, v) in out_row.iter_mut().enumerate() {
                *v = row[x2 / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let [n, c, h2, w2] = dy.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Tensor::zeros([n, c, h, w]);
    let src = dy.data();
    let dst = dx.data_mut();
    for nc in 0..n * c {
        for y in 0..h2 {
            for x in 0..w2 {
                let o = (nc * h + y / 2) * w + x / 2;
                dst[o] = dst[o] + src[(nc * h2 + y) * w2 + x];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_and_upsample_shapes_and_gradients() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 7.0, 6.0]);
        let (p, arg) = max_pool2(&x);
        assert_eq!(p.data(), &[5.0, 7.0]);
        let dx = max_pool2_backward(x.shape(), &arg, &Tensor::from_vec([1, 1, 1, 2], vec![1.0, 2.0]));
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);

        let u = upsample2(&p);
        assert_eq!(u.shape(), [1, 1, 2, 4]);
        assert_eq!(u.data(), &[5.0, 5.0, 7.0, 7.0, 5.0, 5.0, 7.0, 7.0]);
        let g = upsample2_backward(&x);
        assert_eq!(g.data(), &[13.0, 15.0]);
    }

    #[test]
    fn activation_gradients() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![-1.0, 0.5, 2.0]);
        let ones = Tensor::full([1, 1, 1, 3], 1.0);
        assert_eq!(relu_backward(&relu(&x), &ones).data(), &[0.0, 1.0, 1.0]);
        assert_eq!(leaky_relu_backward(&x, &ones, 0.2).data(), &[0.2, 1.0, 1.0]);
        let s = sigmoid(&x);
        let g = sigmoid_backward(&s, &ones);
        let h = 1e-6;
        let fd = (1.0 / (1.0 + (-(0.5 + h) as f64).exp()) - 1.0 / (1.0 + (-(0.5 - h) as f64).exp())) / (2.0 * h);
        assert!((g.data()[1] - fd).abs() < 1e-9);
    }
}
