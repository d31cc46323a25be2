use super::Scalar;

/// Dense NCHW tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn full(shape: [usize; 4], value: T) -> Self {
        Self { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape/data mismatch");
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let [_, ch, h, w] = self.shape;
        self.data[((n * ch + c) * h + y) * w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut T {
        let [_, ch, h, w] = self.shape;
        &mut self.data[((n * ch + c) * h + y) * w + x]
    }

    /// All channels of one sample as a contiguous slice.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.shape[1] * self.plane();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape[1] * self.plane();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect() }
    }

    /// Stacks single-sample tensors along the batch axis.
    pub fn stack(items: &[Self]) -> Self {
        assert!(!items.is_empty(), "cannot stack zero tensors");
        let [_, c, h, w] = items[0].shape;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        for t in items {
            assert_eq!([c, h, w], [t.shape[1], t.shape[2], t.shape[3]], "stack shape mismatch");
            data.extend_from_slice(&t.data);
        }
        Self { shape: [data.len() / (c * h * w), c, h, w], data }
    }

    /// Copies into a larger zero tensor, placing the source at the top-left corner.
    pub fn pad_to(&self, height: usize, width: usize) -> Self {
        let [n, c, h, w] = self.shape;
        assert!(height >= h && width >= w);
        if height == h && width == w {
            return self.clone();
        }
        let mut out = Self::zeros([n, c, height, width]);
        for nc in 0..n * c {
            for y in 0..h {
                let src = &self.data[(nc * h + y) * w..(nc * h + y + 1) * w];
                out.data[(nc * height + y) * width..(nc * height + y) * width + w].copy_from_slice(src);
            }
        }
        out
    }

    /// Top-left crop.
    pub fn crop_to(&self, height: usize, width: usize) -> Self {
        let [n, c, h, w] = self.shape;
        assert!(height <= h && width <= w);
        if height == h && width == w {
            return self.clone();
        }
        let mut out = Self::zeros([n, c, height, width]);
        for nc in 0..n * c {
            for y in 0..height {
                let src = &self.data[(nc * h + y) * w..(nc * h + y) * w + width];
                out.data[(nc * height + y) * width..(nc * height + y + 1) * width].copy_from_slice(src);
            }
        }
        out
    }

    /// Concatenates two tensors along the channel axis.
    pub fn concat_channels(a: &Self, b: &Self) -> Self {
        let [n, ca, h, w] = a.shape;
        assert_eq!([n, h, w], [b.shape[0], b.shape[2], b.shape[3]], "concat shape mismatch");
        let cb = b.shape[1];
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            data.extend_from_slice(a.sample(i));
            data.extend_from_slice(b.sample(i));
        }
        Self { shape: [n, ca + cb, h, w], data }
    }

    /// Inverse of [`Tensor::concat_channels`]: splits off the first `ca` channels.
    pub fn split_channels(&self, ca: usize) -> (Self, Self) {
        let [n, c, h, w] = self.shape;
        assert!(ca <= c);
        let plane = h * w;
        let mut a = Vec::with_capacity(n * ca * plane);
        let mut b = Vec::with_capacity(n * (c - ca) * plane);
        for i in 0..n {
            let s = self.sample(i);
            a.extend_from_slice(&s[..ca * plane]);
            b.extend_from_slice(&s[ca * plane..]);
        }
        (Self { shape: [n, ca, h, w], data: a }, Self { shape: [n, c - ca, h, w], data: b })
    }
}
