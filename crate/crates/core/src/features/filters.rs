//! Single-channel `f64` planes and the filters the detectors share.

use crate::image::Image;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Debug)]
pub(crate) struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

/// Reflect-101 border handling.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

impl Plane {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self { h, w, data: vec![0.0; h * w] }
    }

    pub fn luma(image: &Image) -> Self {
        Self { h: image.height(), w: image.width(), data: image.luma() }
    }

    /// One colour channel of an image.
    pub fn channel(image: &Image, c: usize) -> Self {
        Self { h: image.height(), w: image.width(), data: image.pixels().iter().skip(c).step_by(3).map(|&v| v as f64).collect() }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.w + c]
    }

    #[inline]
    pub fn at_reflect(&self, r: isize, c: isize) -> f64 {
        self.data[reflect(r, self.h) * self.w + reflect(c, self.w)]
    }

    /// Bilinear sample at `(base_r + off_r, base_c + off_c)`, splitting the
    /// integer base from the fractional offset so integer translations of the
    /// base give bit-identical results. Coordinates outside are reflected.
    #[inline]
    pub fn sample(&self, base_r: isize, off_r: f64, base_c: isize, off_c: f64) -> f64 {
        let fr = off_r.floor();
        let fc = off_c.floor();
        let (wr, wc) = (off_r - fr, off_c - fc);
        let r0 = base_r + fr as isize;
        let c0 = base_c + fc as isize;
        let a = self.at_reflect(r0, c0);
        let b = self.at_reflect(r0, c0 + 1);
        let c = self.at_reflect(r0 + 1, c0);
        let d = self.at_reflect(r0 + 1, c0 + 1);
        (a * (1.0 - wc) + b * wc) * (1.0 - wr) + (c * (1.0 - wc) + d * wc) * wr
    }

    /// Separable correlation with a symmetric kernel of odd length.
    pub fn separable(&self, kernel: &[f64]) -> Plane {
        let r = (kernel.len() / 2) as isize;
        let mut tmp = Plane::zeros(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                let mut s = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    s += kv * self.at_reflect(y as isize, x as isize + k as isize - r);
                }
                tmp.data[y * self.w + x] = s;
            }
        }
        let mut out = Plane::zeros(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                let mut s = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    s += kv * tmp.at_reflect(y as isize + k as isize - r, x as isize);
                }
                out.data[y * self.w + x] = s;
            }
        }
        out
    }

    pub fn blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        self.separable(&gaussian_kernel(sigma))
    }

    /// Every other row and column.
    pub fn decimate(&self) -> Plane {
        let (h, w) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut out = Plane::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                out.data[y * w + x] = self.at(2 * y, 2 * x);
            }
        }
        out
    }

    /// 3x3 Sobel derivatives `(d/dx, d/dy)`.
    pub fn sobel(&self) -> (Plane, Plane) {
        let mut gx = Plane::zeros(self.h, self.w);
        let mut gy = Plane::zeros(self.h, self.w);
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let p = |dy: isize, dx: isize| self.at_reflect(y + dy, x + dx);
                let i = y as usize * self.w + x as usize;
                gx.data[i] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
                gy.data[i] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            }
        }
        (gx, gy)
    }
}

/// Sobel derivatives of the luma, taken per channel before weighting so that a
/// constant offset of all pixels leaves them unchanged.
pub(crate) fn luma_sobel(image: &Image) -> (Plane, Plane) {
    let mut gx = Plane::zeros(image.height(), image.width());
    let mut gy = gx.clone();
    for (c, wgt) in LUMA.iter().enumerate() {
        let (cx, cy) = Plane::channel(image, c).sobel();
        for (o, v) in gx.data.iter_mut().zip(&cx.data) {
            *o += wgt * v;
        }
        for (o, v) in gy.data.iter_mut().zip(&cy.data) {
            *o += wgt * v;
        }
    }
    (gx, gy)
}

/// Normalized Gaussian taps with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Central-difference gradient magnitude and angle in `[0, 2pi)`.
pub(crate) struct Gradients {
    pub mag: Plane,
    pub ang: Plane,
}

impl Gradients {
    pub fn of(p: &Plane) -> Self {
        let mut mag = Plane::zeros(p.h, p.w);
        let mut ang = Plane::zeros(p.h, p.w);
        for y in 0..p.h as isize {
            for x in 0..p.w as isize {
                let dx = p.at_reflect(y, x + 1) - p.at_reflect(y, x - 1);
                let dy = p.at_reflect(y + 1, x) - p.at_reflect(y - 1, x);
                let i = y as usize * p.w + x as usize;
                mag.data[i] = dx.hypot(dy);
                ang.data[i] = wrap_angle(dy.atan2(dx));
            }
        }
        Self { mag, ang }
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let w = a.rem_euclid(t);
    if w >= t {
        0.0
    } else {
        w
    }
}

/// `f64` angle as an `f32` strictly below `2pi`.
pub(crate) fn angle_f32(a: f64) -> f32 {
    let v = wrap_angle(a) as f32;
    if v >= std::f32::consts::TAU {
        0.0
    } else {
        v
    }
}

/// Splits a coordinate into integer base and fractional offset.
#[inline]
pub(crate) fn split(v: f32) -> (isize, f64) {
    let v = v as f64;
    let b = v.floor();
    (b as isize, v - b)
}

/// Dominant gradient direction around a point, from a 36-bin
/// Gaussian-weighted histogram with parabolic peak interpolation.
pub(crate) fn dominant_orientation(grad: &Gradients, x: f32, y: f32, scale: f32) -> f32 {
    const BINS: usize = 36;
    let sigma = 1.5 * scale as f64;
    let radius = (3.0 * sigma).round() as isize;
    let (xi, fx) = split(x);
    let (yi, fy) = split(y);
    let mut hist = [0.0f64; BINS];
    let (h, w) = (grad.mag.h as isize, grad.mag.w as isize);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (r, c) = (yi + dy, xi + dx);
            if r < 0 || c < 0 || r >= h || c >= w {
                continue;
            }
            let (ox, oy) = (dx as f64 - fx, dy as f64 - fy);
            let d2 = ox * ox + oy * oy;
            if d2 > (radius * radius) as f64 {
                continue;
            }
            let m = grad.mag.at(r as usize, c as usize) * (-d2 / (2.0 * sigma * sigma)).exp();
            let a = grad.ang.at(r as usize, c as usize);
            let bin = ((a / std::f64::consts::TAU * BINS as f64) as usize).min(BINS - 1);
            hist[bin] += m;
        }
    }
    let (best, &peak) = hist.iter().enumerate().fold((0, &0.0), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    if peak <= 0.0 {
        return 0.0;
    }
    let l = hist[(best + BINS - 1) % BINS];
    let r = hist[(best + 1) % BINS];
    let denom = l - 2.0 * peak + r;
    let off = if denom < 0.0 { (0.5 * (l - r) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    angle_f32((best as f64 + 0.5 + off) * std::f64::consts::TAU / BINS as f64)
}
