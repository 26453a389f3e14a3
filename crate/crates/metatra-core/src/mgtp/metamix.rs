//! Latent mixup for the meta-test phase: `Z_mix = Z_T + (1 - rho) * Z_add`
//! with `rho ~ Beta(1,1)` per batch and `Z_add` drawn from the aggregated
//! source posterior. The decoder then runs on both halves, doubling the
//! effective batch.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::cvae_head::model::MixPlan;
use crate::cvae_head::{LatentSample, PreparedWindow, Provenance};
use crate::mgtp::aggregate::SourcePriorAggregate;

/// Result of mixing one latent matrix.
#[derive(Debug, Clone)]
pub struct MixOutcome {
    pub z_mix: LatentSample,
    pub rho: f64,
    /// False when the source aggregate was unavailable and `z_mix == z_t`.
    pub mixed: bool,
}

fn draw_rho(rng: &mut ChaCha8Rng) -> f64 {
    // Beta(1,1); kept as an explicit Beta draw to match the stated sampler.
    rand_distr::Beta::new(1.0, 1.0).expect("valid shape").sample(rng)
}

fn draw_from_aggregate(
    rows: usize,
    mu: ArrayView1<'_, f64>,
    sigma: ArrayView1<'_, f64>,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    Array2::from_shape_fn((rows, mu.len()), |(_, c)| {
        mu[c] + sigma[c].max(0.0) * rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

/// Mix one batch's meta-test latents with draws from the source aggregate.
pub fn metamix(
    z_t: ArrayView2<'_, f64>,
    aggregate: Option<(ArrayView1<'_, f64>, ArrayView1<'_, f64>)>,
    rng: &mut ChaCha8Rng,
) -> MixOutcome {
    let rho = draw_rho(rng);
    match aggregate {
        None => MixOutcome {
            z_mix: LatentSample { z: z_t.to_owned(), provenance: Provenance::Mixed },
            rho,
            mixed: false,
        },
        Some((mu, sigma)) => {
            let z_add = draw_from_aggregate(z_t.nrows(), mu, sigma, rng);
            let z_mix = &z_t.to_owned() + &(z_add.mapv(|v| v * (1.0 - rho)));
            MixOutcome {
                z_mix: LatentSample { z: z_mix, provenance: Provenance::Mixed },
                rho,
                mixed: true,
            }
        }
    }
}

/// Draw the per-window mixing plan consumed by the training forward pass.
/// Returns the plan and whether real mixing happened (false = fallback).
pub fn draw_mix_plan(
    prepared: &[PreparedWindow],
    d_latent: usize,
    aggregate: &SourcePriorAggregate,
    rng: &mut ChaCha8Rng,
) -> (MixPlan, bool) {
    let rho = draw_rho(rng);
    match aggregate.get() {
        None => (
            MixPlan {
                rho: 1.0, // (1 - rho) * 0 either way; rho = 1 makes the fallback exact
                z_add: prepared
                    .iter()
                    .map(|w| Array2::zeros((w.n_valid(), d_latent)))
                    .collect(),
            },
            false,
        ),
        Some((mu, sigma)) => (
            MixPlan {
                rho,
                z_add: prepared
                    .iter()
                    .map(|w| draw_from_aggregate(w.n_valid(), mu.view(), sigma.view(), rng))
                    .collect(),
            },
            true,
        ),
    }
}
