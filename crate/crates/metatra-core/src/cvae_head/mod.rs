//! The probabilistic prediction head: latent Gaussians from past/future
//! encoders, reparameterized sampling, residual recurrent decoders, and the
//! combined training loss.

pub mod decoder;
pub mod latent;
pub mod model;

pub use decoder::{displacements_to_positions, register_gru, GruLayout};
pub use latent::{
    kl_divergence, sample_latent, standard_noise, LatentDistribution, LatentSample, Provenance,
};
pub use model::{
    backward_train, decode, forward_train, future_encoder, init_model, loss_and_grad, loss_total,
    past_encoder, predict_k, prepare_batch, prepare_window, HeadLayout, LossBreakdown,
    LossHalves, LossWeights, MixPlan, ModelLayout, Phase, PredictionOutput, PreparedWindow,
    TrainCache, TrainNoise,
};
