//! The trajectory model as a [`MetaLoss`]: frozen-noise loss/gradient
//! evaluations over task batches, latent mixup on meta-test batches, and a
//! finite-difference Hessian-vector product for the second-order mode.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use crate::cvae_head::{
    backward_train, forward_train, LossWeights, ModelLayout, TrainNoise,
};
use crate::dual_tt::ModelConfig;
use crate::error::Result;
use crate::mgtp::aggregate::SourcePriorAggregate;
use crate::mgtp::inner::MetaLoss;
use crate::mgtp::metamix::draw_mix_plan;
use crate::mgtp::tasks::{TaskBatch, TaskRole};
use crate::params::ParameterSnapshot;

/// Relative perturbation used by the finite-difference Hessian-vector product.
const HVP_STEP: f64 = 1e-5;

pub struct TrajectoryLossModel<'a> {
    pub cfg: &'a ModelConfig,
    pub layout: &'a ModelLayout,
    pub weights: LossWeights,
    /// Latent mixup active on meta-test batches.
    pub mm: bool,
    pub aggregate: SourcePriorAggregate,
    pub rng: ChaCha8Rng,
    /// Batches that wanted mixup before any source statistics existed.
    pub mix_fallbacks: usize,
    last_posterior: Option<(Array1<f64>, Array1<f64>)>,
}

impl<'a> TrajectoryLossModel<'a> {
    pub fn new(
        cfg: &'a ModelConfig,
        layout: &'a ModelLayout,
        weights: LossWeights,
        mm: bool,
        aggregate: SourcePriorAggregate,
        rng: ChaCha8Rng,
    ) -> Self {
        TrajectoryLossModel {
            cfg,
            layout,
            weights,
            mm,
            aggregate,
            rng,
            mix_fallbacks: 0,
            last_posterior: None,
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn grad_at(
        &mut self,
        task: &TaskBatch,
        theta: &ParameterSnapshot,
        noise: &TrainNoise,
    ) -> Result<(f64, ParameterSnapshot)> {
        let (breakdown, cache) =
            forward_train(theta, self.layout, self.cfg, &self.weights, &task.windows, noise)?;
        self.last_posterior = Some(cache.posterior_mean.clone());
        let grads = backward_train(
            theta,
            self.layout,
            self.cfg,
            &self.weights,
            &task.windows,
            noise,
            &breakdown,
            &cache,
        )?;
        Ok((breakdown.total, grads))
    }
}

impl<'a> MetaLoss for TrajectoryLossModel<'a> {
    type Task = TaskBatch;
    type Ctx = TrainNoise;

    fn draw_ctx(&mut self, task: &TaskBatch, role: TaskRole) -> Result<TrainNoise> {
        let mut noise = TrainNoise::draw(&task.windows, self.cfg.d_latent, &mut self.rng);
        if role == TaskRole::MetaTest && self.mm {
            let (plan, mixed) =
                draw_mix_plan(&task.windows, self.cfg.d_latent, &self.aggregate, &mut self.rng);
            if !mixed {
                self.mix_fallbacks += 1;
            }
            noise.mix = Some(plan);
        }
        Ok(noise)
    }

    fn loss_grad(
        &mut self,
        task: &TaskBatch,
        theta: &ParameterSnapshot,
        ctx: &TrainNoise,
    ) -> Result<(f64, ParameterSnapshot)> {
        self.grad_at(task, theta, ctx)
    }

    /// Symmetric-difference Hessian-vector product at matching noise:
    /// `H v ≈ (∇L(θ + εv) − ∇L(θ − εv)) / 2ε` with `ε‖v‖ = HVP_STEP`.
    fn hvp(
        &mut self,
        task: &TaskBatch,
        theta: &ParameterSnapshot,
        v: &ParameterSnapshot,
        ctx: &TrainNoise,
    ) -> Result<ParameterSnapshot> {
        let norm = v.global_norm();
        if norm == 0.0 {
            return Ok(theta.zeros_like());
        }
        let eps = HVP_STEP / norm;
        let mut plus = theta.clone();
        plus.axpy(eps, v)?;
        let (_, g_plus) = self.grad_at(task, &plus, ctx)?;
        let mut minus = theta.clone();
        minus.axpy(-eps, v)?;
        let (_, g_minus) = self.grad_at(task, &minus, ctx)?;
        let mut h_v = g_plus;
        h_v.axpy(-1.0, &g_minus)?;
        h_v.scale(1.0 / (2.0 * eps));
        Ok(h_v)
    }

    fn after_meta_train(&mut self, _task: &TaskBatch, _ctx: &TrainNoise) {
        if let Some((mu, sigma)) = self.last_posterior.take() {
            self.aggregate.update(&mu, &sigma);
        }
    }
}
