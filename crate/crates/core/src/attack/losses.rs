//! Reconstruction, perceptual and adversarial objectives.
//!
//! All reductions are means over elements, so weights do not depend on the
//! image resolution.

use serde::{Deserialize, Serialize};

use super::perceptual::{PerceptualTaps, TapTape};
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::nn::{Scalar, Tensor};

/// Clamp applied to discriminator scores before taking logarithms.
pub const SCORE_EPS: f64 = 1e-7;

fn check_same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(invalid!("shape mismatch: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean absolute error and its gradient with respect to `recon`.
pub fn mae_with_grad<T: Scalar>(recon: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    check_same_shape(recon, target)?;
    let n = recon.len().max(1) as f64;
    let inv = T::from_f64(1.0 / n);
    let mut total = 0.0;
    let grad = recon
        .data()
        .iter()
        .zip(target.data())
        .map(|(&r, &t)| {
            let d = r - t;
            total += d.abs().as_f64();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((total / n, Tensor::from_vec(recon.shape(), grad)))
}

/// Pixelwise L1 distance, averaged over all pixels and channels.
pub fn loss_mae(recon: &Image, target: &Image) -> Result<f64> {
    if (recon.height(), recon.width()) != (target.height(), target.width()) {
        return Err(invalid!(
            "image sizes differ: {}x{} vs {}x{}",
            recon.height(),
            recon.width(),
            target.height(),
            target.width()
        ));
    }
    let n = recon.pixels().len() as f64;
    Ok(recon.pixels().iter().zip(target.pixels()).map(|(a, b)| (*a as f64 - *b as f64).abs()).sum::<f64>() / n)
}

/// Sum over taps of the mean squared activation difference, given the target's
/// precomputed taps. Returns the loss, the gradient with respect to `recon`,
/// and the per-tap loss terms.
pub fn perceptual_with_grad<T: Scalar>(
    recon: &Tensor<T>,
    target_taps: &[Tensor<T>],
    backbone: &PerceptualTaps<T>,
) -> Result<(f64, Tensor<T>)> {
    let tape: TapTape<T> = backbone.forward(recon)?;
    let mut total = 0.0;
    let mut d_taps = Vec::with_capacity(3);
    for (r, t) in tape.taps().iter().zip(target_taps) {
        check_same_shape(r, t)?;
        let n = r.len() as f64;
        let scale = T::from_f64(2.0 / n);
        let mut sum = 0.0;
        let g = r
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| {
                let d = a - b;
                sum += (d * d).as_f64();
                d * scale
            })
            .collect();
        total += sum / n;
        d_taps.push(Tensor::from_vec(r.shape(), g));
    }
    Ok((total, backbone.backward(&tape, &d_taps)))
}

/// Perceptual distance between two images.
pub fn loss_perceptual<T: Scalar>(recon: &Image, target: &Image, taps: &PerceptualTaps<T>) -> Result<f64> {
    let (r, t) = (recon.to_tensor::<T>(), target.to_tensor::<T>());
    check_same_shape(&r, &t)?;
    let rt = taps.taps(&r)?;
    let tt = taps.taps(&t)?;
    Ok(rt
        .iter()
        .zip(&tt)
        .map(|(a, b)| {
            let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (*x - *y).as_f64().powi(2)).sum();
            s / a.len() as f64
        })
        .sum())
}

/// Generator and discriminator terms of the non-saturating adversarial loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialTerms {
    /// `-mean(log D(fake))`
    pub generator: f64,
    /// `-mean(log D(real)) - mean(log(1 - D(fake)))`
    pub discriminator: f64,
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

pub fn adversarial_losses(real_scores: &[f64], fake_scores: &[f64]) -> AdversarialTerms {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| if v.is_empty() { 0.0 } else { v.iter().map(|&s| f(clamp_score(s))).sum::<f64>() / v.len() as f64 };
    let generator = -mean(fake_scores, &|s| s.ln());
    let discriminator = -mean(real_scores, &|s| s.ln()) - mean(fake_scores, &|s| (1.0 - s).ln());
    AdversarialTerms { generator: generator.max(0.0), discriminator: discriminator.max(0.0) }
}

/// Gradient of the generator term with respect to the fake scores.
pub fn generator_adv_grad<T: Scalar>(fake: &Tensor<T>) -> Tensor<T> {
    let n = fake.len() as f64;
    fake.map(|s| {
        let v = s.as_f64();
        if v <= SCORE_EPS || v >= 1.0 - SCORE_EPS {
            T::zero()
        } else {
            T::from_f64(-1.0 / (n * v))
        }
    })
}

/// Gradients of the discriminator term with respect to real and fake scores.
pub fn discriminator_adv_grads<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let inside = |v: f64| v > SCORE_EPS && v < 1.0 - SCORE_EPS;
    let dr = real.map(|s| {
        let v = s.as_f64();
        if inside(v) { T::from_f64(-1.0 / (nr * v)) } else { T::zero() }
    });
    let df = fake.map(|s| {
        let v = s.as_f64();
        if inside(v) { T::from_f64(1.0 / (nf * (1.0 - v))) } else { T::zero() }
    });
    (dr, df)
}

/// Weights of the combined generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub perceptual: f64,
    pub adversarial: f64,
    /// First (1-based) epoch in which the adversarial term contributes.
    pub adversarial_start: usize,
}

/// `mae + alpha * perc`, plus `beta * adv_gen` once `epoch >= adversarial_start`.
pub fn total_loss(mae: f64, perc: f64, adv_gen: f64, weights: &LossWeights, epoch: usize) -> f64 {
    let base = mae + weights.perceptual * perc;
    if epoch >= weights.adversarial_start {
        base + weights.adversarial * adv_gen
    } else {
        base
    }
}
