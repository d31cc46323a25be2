use crate::error::{invalid, Result};
use crate::image::Image;

/// Side of the Gaussian comparison window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable filtering over positions where the window fits entirely.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, a)| a * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity of the luma channels, dynamic range 1.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let (h, w) = (a.height(), a.width());
    if (h, w) != (b.height(), b.width()) {
        return Err(invalid!("ssim needs equal sizes, got {h}x{w} and {}x{}", b.height(), b.width()));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(invalid!("ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"));
    }
    let (la, lb) = (a.luma(), b.luma());
    let k = window();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter_valid(&la, h, w, &k);
    let mu_b = filter_valid(&lb, h, w, &k);
    let e_aa = filter_valid(&prod(&la, &la), h, w, &k);
    let e_bb = filter_valid(&prod(&lb, &lb), h, w, &k);
    let e_ab = filter_valid(&prod(&la, &lb), h, w, &k);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok((total / mu_a.len() as f64).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_constant_pair() {
        let a = Image::from_fn(20, 24, |r, c| [(r as f32) / 20.0, (c as f32) / 24.0, 0.5]).unwrap();
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let z = Image::filled(16, 16, 0.0).unwrap();
        let o = Image::filled(16, 16, 1.0).unwrap();
        let expected = 1e-4 / 1.0001;
        assert!((ssim(&z, &o).unwrap() - expected).abs() < 1e-7);
    }

    #[test]
    fn rejects_small_or_mismatched() {
        let a = Image::filled(10, 30, 0.5).unwrap();
        assert!(ssim(&a, &a).is_err());
        let b = Image::filled(12, 12, 0.5).unwrap();
        assert!(ssim(&b, &Image::filled(12, 13, 0.5).unwrap()).is_err());
    }
}
