//! Latent Gaussians: reparameterized sampling and closed-form KL.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Diagonal Gaussian over the latent space, one row per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    pub mu: Array2<f64>,
    /// Strictly positive (softplus-parameterized upstream).
    pub sigma: Array2<f64>,
}

impl LatentDistribution {
    pub fn validate(&self) -> Result<()> {
        if self.mu.shape() != self.sigma.shape() {
            return Err(CoreError::Shape {
                name: "latent sigma".into(),
                expected: self.mu.shape().to_vec(),
                got: self.sigma.shape().to_vec(),
            });
        }
        if self.sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite())
            || self.mu.iter().any(|m| !m.is_finite())
        {
            return Err(CoreError::Numeric(
                "latent distribution requires finite mu and strictly positive sigma".into(),
            ));
        }
        Ok(())
    }
}

/// Where a latent sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Prior,
    Posterior,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Array2<f64>,
    pub provenance: Provenance,
}

/// Draw standard-normal noise with the given shape from a seeded stream.
pub fn standard_noise(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(rand_distr::StandardNormal))
}

/// Reparameterized draw `Z = mu + sigma ⊙ eps` with `eps` from the seed.
pub fn sample_latent(
    dist: &LatentDistribution,
    provenance: Provenance,
    seed: u64,
) -> Result<LatentSample> {
    use rand::SeedableRng;
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = standard_noise(dist.mu.nrows(), dist.mu.ncols(), &mut rng);
    Ok(LatentSample { z: &dist.mu + &(&dist.sigma * &eps), provenance })
}

/// `KL(q || p)` for diagonal Gaussians: summed over latent dimensions,
/// averaged over rows (agents).
pub fn kl_divergence(q: &LatentDistribution, p: &LatentDistribution) -> Result<f64> {
    q.validate()?;
    p.validate()?;
    if q.mu.shape() != p.mu.shape() {
        return Err(CoreError::Shape {
            name: "kl operands".into(),
            expected: q.mu.shape().to_vec(),
            got: p.mu.shape().to_vec(),
        });
    }
    let n = q.mu.nrows().max(1) as f64;
    let mut total = 0.0;
    for ((&mq, &sq), (&mp, &sp)) in q
        .mu
        .iter()
        .zip(q.sigma.iter())
        .zip(p.mu.iter().zip(p.sigma.iter()))
    {
        total += kl_element(mq, sq, mp, sp);
    }
    Ok(total / n)
}

#[inline]
pub(crate) fn kl_element(mu_q: f64, sig_q: f64, mu_p: f64, sig_p: f64) -> f64 {
    (sig_p / sig_q).ln() + (sig_q * sig_q + (mu_q - mu_p) * (mu_q - mu_p)) / (2.0 * sig_p * sig_p)
        - 0.5
}

/// Gradients of the averaged KL w.r.t. all four element arrays.
/// `scale` is 1/n_rows (the averaging factor) times any upstream weight.
pub(crate) fn kl_element_backward(
    mu_q: f64,
    sig_q: f64,
    mu_p: f64,
    sig_p: f64,
    scale: f64,
) -> (f64, f64, f64, f64) {
    let inv_sp2 = 1.0 / (sig_p * sig_p);
    let d_mu_q = scale * (mu_q - mu_p) * inv_sp2;
    let d_mu_p = -d_mu_q;
    let d_sig_q = scale * (-1.0 / sig_q + sig_q * inv_sp2);
    let d_sig_p = scale
        * (1.0 / sig_p - (sig_q * sig_q + (mu_q - mu_p) * (mu_q - mu_p)) / (sig_p * sig_p * sig_p));
    (d_mu_q, d_sig_q, d_mu_p, d_sig_p)
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse softplus; used to bias sigma heads toward a target initial value.
pub(crate) fn softplus_inv(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}
