use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::Scalar;

/// A trainable array together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(shape: Vec<usize>, value: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::zero(); value.len()];
        Self { shape, value, grad }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![T::zero(); len])
    }

    pub fn filled(shape: Vec<usize>, v: T) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![v; len])
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Self {
        let len: usize = shape.iter().product();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
        let value = (0..len).map(|_| T::from_f64(dist.sample(rng))).collect();
        Self::new(shape, value)
    }

    pub fn normal(shape: Vec<usize>, std: f64, rng: &mut impl Rng) -> Self {
        let len: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("valid std");
        let value = (0..len).map(|_| T::from_f64(dist.sample(rng))).collect();
        Self::new(shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Visitor over the named parameters and buffers of a model.
///
/// Buffers (batch-norm running statistics) are persisted but not optimized.
pub trait ParamVisitor<T> {
    fn param(&mut self, name: &str, p: &mut Param<T>);
    fn buffer(&mut self, name: &str, b: &mut Vec<T>);
}

/// Anything that exposes its parameters to a [`ParamVisitor`] in a fixed order.
pub trait Module<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor<T>);
}

pub fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Zeroes every gradient of a module.
pub fn zero_grads<T: Scalar>(m: &mut dyn Module<T>) {
    struct Z;
    impl<T: Scalar> ParamVisitor<T> for Z {
        fn param(&mut self, _: &str, p: &mut Param<T>) {
            p.zero_grad();
        }
        fn buffer(&mut self, _: &str, _: &mut Vec<T>) {}
    }
    m.visit("", &mut Z);
}

/// Counts scalar parameters of a module.
pub fn param_count<T: Scalar>(m: &mut dyn Module<T>) -> usize {
    struct C(usize);
    impl<T: Scalar> ParamVisitor<T> for C {
        fn param(&mut self, _: &str, p: &mut Param<T>) {
            self.0 += p.len();
        }
        fn buffer(&mut self, _: &str, _: &mut Vec<T>) {}
    }
    let mut c = C(0);
    m.visit("", &mut c);
    c.0
}
