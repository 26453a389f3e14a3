//! Finite-difference gradient checking over parameter snapshots.
//!
//! Used by the test suites to validate the hand-written backward passes:
//! perturb every scalar of every named array by ±step, re-evaluate the loss,
//! and compare the central difference against the analytic gradient.

use crate::params::ParameterSnapshot;

/// Comparison floor for [`max_relative_error`] at the standard 1e-5 step.
pub const DEFAULT_FLOOR: f64 = 1e-5;

/// Central finite differences of `f` w.r.t. every scalar in `snap`.
pub fn finite_difference_grads(
    snap: &ParameterSnapshot,
    step: f64,
    mut f: impl FnMut(&ParameterSnapshot) -> f64,
) -> ParameterSnapshot {
    let mut probe = snap.clone();
    let mut grads = snap.zeros_like();
    for idx in 0..snap.len() {
        for flat in 0..snap.array(idx).len() {
            let orig = probe.array(idx).as_slice().unwrap()[flat];
            probe.array_mut(idx).as_slice_mut().unwrap()[flat] = orig + step;
            let up = f(&probe);
            probe.array_mut(idx).as_slice_mut().unwrap()[flat] = orig - step;
            let down = f(&probe);
            probe.array_mut(idx).as_slice_mut().unwrap()[flat] = orig;
            grads.array_mut(idx).as_slice_mut().unwrap()[flat] = (up - down) / (2.0 * step);
        }
    }
    grads
}

/// Worst relative error between two gradient snapshots.
///
/// Per scalar: `|a - b| / max(|a|, |b|, floor)`. The floor keeps genuinely
/// tiny gradients from dominating the comparison: a central difference at
/// step h carries cancellation noise of roughly `|loss| * eps_f64 / h`
/// (~1e-10 at h = 1e-5), so entries whose true gradient sits below the floor
/// are compared absolutely against it. `DEFAULT_FLOOR` covers losses up to
/// O(10) at the standard step.
pub fn max_relative_error(
    analytic: &ParameterSnapshot,
    numeric: &ParameterSnapshot,
    floor: f64,
) -> (f64, String) {
    let mut worst = 0.0;
    let mut worst_name = String::new();
    for ((name, a), (_, b)) in analytic.iter().zip(numeric.iter()) {
        for (x, y) in a.iter().zip(b.iter()) {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(floor);
            if rel > worst {
                worst = rel;
                worst_name = name.to_string();
            }
        }
    }
    (worst, worst_name)
}
