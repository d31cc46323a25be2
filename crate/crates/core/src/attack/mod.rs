//! The reconstruction attack: networks, objectives, training and inference.

mod checkpoint;
mod discriminator;
mod generator;
mod infer;
mod losses;
mod perceptual;
mod train;

pub use checkpoint::{Checkpoint, EpochLosses};
pub use discriminator::{Discriminator, DiscriminatorSpec, DiscriminatorTape, RealnessGrid, LEAKY_SLOPE};
pub use generator::{Generator, GeneratorSpec, GeneratorTape, GENERATOR_STRIDE};
pub use infer::{discriminator_forward, generator_forward, reconstruct, reconstruct_from_features, MitigationInput};
pub use losses::{
    adversarial_losses, discriminator_adv_grads, generator_adv_grad, loss_mae, loss_perceptual, mae_with_grad,
    perceptual_with_grad, total_loss, AdversarialTerms, LossWeights, SCORE_EPS,
};
pub use perceptual::{BackboneSource, PerceptualTaps, TapTape, TAP_CHANNELS};
pub use train::{train_attack, CropSource, FixedSamples, SampleSource, TrainConfig, Trainer};
