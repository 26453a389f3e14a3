//! The bi-level parameter update and its serial iteration.
//!
//! One inner step computes the meta-train gradient at θ, forms the temporary
//! parameters `θ' = θ − λ_S g_S`, evaluates the meta-test gradient at θ',
//! and applies both: `θ ← θ − (λ_S g_S + λ_T g_T)`. In first-order mode g_T
//! is taken at θ' directly; in second-order mode it is corrected by the
//! meta-train Hessian: `(I − λ_S H_S) g_T`.

use crate::error::{CoreError, Result};
use crate::mgtp::config::MetaConfig;
use crate::mgtp::tasks::TaskRole;
use crate::params::ParameterSnapshot;

/// A differentiable training loss over tasks, with the stochastic context of
/// each evaluation made explicit so that gradients and Hessian-vector
/// products can be taken at matching noise.
pub trait MetaLoss {
    type Task;
    type Ctx;

    /// Freeze the stochasticity of one evaluation (latent noise, mixup draws).
    fn draw_ctx(&mut self, task: &Self::Task, role: TaskRole) -> Result<Self::Ctx>;

    /// Loss and gradient at θ under a frozen context.
    fn loss_grad(
        &mut self,
        task: &Self::Task,
        theta: &ParameterSnapshot,
        ctx: &Self::Ctx,
    ) -> Result<(f64, ParameterSnapshot)>;

    /// Hessian-vector product of the task loss at θ with `v`, same context.
    fn hvp(
        &mut self,
        task: &Self::Task,
        theta: &ParameterSnapshot,
        v: &ParameterSnapshot,
        ctx: &Self::Ctx,
    ) -> Result<ParameterSnapshot>;

    /// Hook invoked after a meta-train evaluation (running statistics).
    fn after_meta_train(&mut self, _task: &Self::Task, _ctx: &Self::Ctx) {}
}

/// Losses of one inner step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStepStats {
    pub meta_train_loss: f64,
    pub meta_test_loss: f64,
}

fn check_finite(loss: f64, grads: &ParameterSnapshot, what: &str) -> Result<()> {
    if !loss.is_finite() {
        return Err(CoreError::Numeric(format!("non-finite {what} loss: {loss}")));
    }
    if let Some((name, pos)) = grads.find_non_finite() {
        return Err(CoreError::Numeric(format!(
            "non-finite {what} gradient in `{name}` at flat index {pos}"
        )));
    }
    Ok(())
}

fn clip(grads: &mut ParameterSnapshot, clip_norm: Option<f64>) {
    if let Some(max_norm) = clip_norm {
        grads.clip_global_norm(max_norm);
    }
}

/// One bi-level update. Returns the next parameters and both losses.
pub fn inner_step<M: MetaLoss>(
    model: &mut M,
    theta: &ParameterSnapshot,
    task_s: &M::Task,
    task_t: &M::Task,
    cfg: &MetaConfig,
) -> Result<(ParameterSnapshot, InnerStepStats)> {
    let lambda_s = cfg.lambda_s();
    let lambda_t = cfg.lambda_t();

    let ctx_s = model.draw_ctx(task_s, TaskRole::MetaTrain)?;
    let (loss_s, mut g_s) = model.loss_grad(task_s, theta, &ctx_s)?;
    check_finite(loss_s, &g_s, "meta-train")?;
    clip(&mut g_s, cfg.clip_norm);
    model.after_meta_train(task_s, &ctx_s);

    let mut theta_prime = theta.clone();
    theta_prime.axpy(-lambda_s, &g_s)?;

    let ctx_t = model.draw_ctx(task_t, TaskRole::MetaTest)?;
    let (loss_t, mut g_t) = model.loss_grad(task_t, &theta_prime, &ctx_t)?;
    check_finite(loss_t, &g_t, "meta-test")?;

    if cfg.second_order {
        // d/dθ L_T(θ − λ_S ∇L_S(θ)) = (I − λ_S H_S(θ)) ∇L_T(θ')
        let h_v = model.hvp(task_s, theta, &g_t, &ctx_s)?;
        g_t.axpy(-lambda_s, &h_v)?;
    }
    clip(&mut g_t, cfg.clip_norm);

    let mut next = theta.clone();
    next.axpy(-lambda_s, &g_s)?;
    next.axpy(-lambda_t, &g_t)?;
    Ok((next, InnerStepStats { meta_train_loss: loss_s, meta_test_loss: loss_t }))
}

/// J successive inner steps with freshly sampled tasks.
pub fn serial_inner_loop<M: MetaLoss>(
    model: &mut M,
    theta_0: &ParameterSnapshot,
    j_steps: usize,
    cfg: &MetaConfig,
    mut sample: impl FnMut(&mut M) -> Result<(M::Task, M::Task)>,
) -> Result<(ParameterSnapshot, Vec<InnerStepStats>)> {
    if j_steps == 0 {
        return Err(CoreError::Config("serial loop needs J >= 1".into()));
    }
    let mut theta = theta_0.clone();
    let mut stats = Vec::with_capacity(j_steps);
    for _ in 0..j_steps {
        let (task_s, task_t) = sample(model)?;
        let (next, s) = inner_step(model, &theta, &task_s, &task_t, cfg)?;
        theta = next;
        stats.push(s);
    }
    Ok((theta, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    /// 1-D quadratic surrogate `L_c(θ) = ½ (θ − c)²`; the task is the center.
    pub(crate) struct Quadratic;

    fn theta_value(s: &ParameterSnapshot) -> f64 {
        s.array(0).as_slice().unwrap()[0]
    }

    pub(crate) fn scalar_snapshot(v: f64) -> ParameterSnapshot {
        let mut s = ParameterSnapshot::new();
        s.register("theta", ArrayD::from_shape_vec(vec![1], vec![v]).unwrap());
        s
    }

    impl MetaLoss for Quadratic {
        type Task = f64;
        type Ctx = ();

        fn draw_ctx(&mut self, _task: &f64, _role: TaskRole) -> Result<()> {
            Ok(())
        }

        fn loss_grad(
            &mut self,
            task: &f64,
            theta: &ParameterSnapshot,
            _ctx: &(),
        ) -> Result<(f64, ParameterSnapshot)> {
            let t = theta_value(theta);
            let mut g = theta.zeros_like();
            g.array_mut(0).as_slice_mut().unwrap()[0] = t - task;
            Ok((0.5 * (t - task) * (t - task), g))
        }

        fn hvp(
            &mut self,
            _task: &f64,
            _theta: &ParameterSnapshot,
            v: &ParameterSnapshot,
            _ctx: &(),
        ) -> Result<ParameterSnapshot> {
            Ok(v.clone()) // Hessian of a unit quadratic is 1
        }
    }

    fn cfg(lambda: f64, second_order: bool) -> MetaConfig {
        MetaConfig {
            lambda,
            second_order,
            clip_norm: None,
            ..Default::default()
        }
    }

    #[test]
    fn first_order_step_matches_hand_arithmetic() {
        // L_S = ½θ², L_T = ½(θ−1)², θ=1, λ=0.1:
        // θ' = 0.9, g_T = −0.1, θ_next = 1 − 0.1(1 + (−0.1)) = 0.91
        let theta = scalar_snapshot(1.0);
        let (next, stats) = inner_step(&mut Quadratic, &theta, &0.0, &1.0, &cfg(0.1, false)).unwrap();
        assert!((theta_value(&next) - 0.91).abs() < 1e-12);
        assert!((stats.meta_train_loss - 0.5).abs() < 1e-12);
        assert!((stats.meta_test_loss - 0.5 * 0.01).abs() < 1e-12);
    }

    #[test]
    fn second_order_step_adds_the_hessian_term() {
        // g_T_corrected = (1 − λH) g_T = 0.9·(−0.1) = −0.09
        // θ_next = 1 − 0.1(1 − 0.09) = 0.909
        let theta = scalar_snapshot(1.0);
        let (next, _) = inner_step(&mut Quadratic, &theta, &0.0, &1.0, &cfg(0.1, true)).unwrap();
        assert!((theta_value(&next) - 0.909).abs() < 1e-12);
    }

    #[test]
    fn serial_loop_iterates_the_update() {
        // two iterations of the same (τ_S, τ_T) pair, first-order:
        // θ1 = 0.91·θ0 + 0.01 ... derived by substituting into the update:
        // θ_next = θ − 0.1(θ + (0.9θ − 1)·1) ... with L_T center 1:
        // g_S = θ; θ' = 0.9θ; g_T = 0.9θ − 1; θ_next = θ − 0.1(θ + 0.9θ − 1)
        //        = 0.81θ + 0.1
        let theta = scalar_snapshot(1.0);
        let (next, stats) = serial_inner_loop(&mut Quadratic, &theta, 2, &cfg(0.1, false), |_| {
            Ok((0.0, 1.0))
        })
        .unwrap();
        let step = |t: f64| 0.81 * t + 0.1;
        assert!((theta_value(&next) - step(step(1.0))).abs() < 1e-12);
        assert_eq!(stats.len(), 2);
    }

    #[test]
    fn detached_meta_test_reduces_to_plain_descent() {
        // λ_T = 0 zeroes the meta-test contribution: θ_next = θ − λ g_S
        let theta = scalar_snapshot(1.0);
        let mut c = cfg(0.1, false);
        c.lambda_t = Some(0.0);
        let (next, _) = inner_step(&mut Quadratic, &theta, &0.0, &1.0, &c).unwrap();
        assert!((theta_value(&next) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_with_array_name() {
        struct Bad;
        impl MetaLoss for Bad {
            type Task = ();
            type Ctx = ();
            fn draw_ctx(&mut self, _: &(), _: TaskRole) -> Result<()> {
                Ok(())
            }
            fn loss_grad(
                &mut self,
                _: &(),
                theta: &ParameterSnapshot,
                _: &(),
            ) -> Result<(f64, ParameterSnapshot)> {
                let mut g = theta.zeros_like();
                g.array_mut(0).as_slice_mut().unwrap()[0] = f64::NAN;
                Ok((0.0, g))
            }
            fn hvp(
                &mut self,
                _: &(),
                _: &ParameterSnapshot,
                v: &ParameterSnapshot,
                _: &(),
            ) -> Result<ParameterSnapshot> {
                Ok(v.clone())
            }
        }
        let theta = scalar_snapshot(1.0);
        let err = inner_step(&mut Bad, &theta, &(), &(), &cfg(0.1, false)).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("theta"), "{msg}");
    }
}
