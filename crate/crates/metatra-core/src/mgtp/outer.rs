//! The parallel outer merge: `θ ← θ + κ (mean_c θ̃_J^c − θ)`.

use crate::error::{CoreError, Result};
use crate::params::ParameterSnapshot;

/// Reptile-style averaging merge of the C serial results into θ, in place.
/// Order-invariant by commutativity of the mean.
pub fn parallel_outer_update(
    theta: &mut ParameterSnapshot,
    snapshots: &[ParameterSnapshot],
    kappa: f64,
) -> Result<()> {
    if snapshots.is_empty() {
        return Err(CoreError::Usage("outer update needs >= 1 snapshot".into()));
    }
    let mean = ParameterSnapshot::mean_of(snapshots)?;
    // θ + κ(mean − θ) = (1 − κ) θ + κ mean
    theta.scale(1.0 - kappa);
    theta.axpy(kappa, &mean)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    fn snap(v: &[f64]) -> ParameterSnapshot {
        let mut s = ParameterSnapshot::new();
        s.register("w", ArrayD::from_shape_vec(vec![v.len()], v.to_vec()).unwrap());
        s
    }

    #[test]
    fn identical_snapshots_are_a_fixed_point() {
        let mut theta = snap(&[1.0, -2.0, 3.0]);
        let orig = theta.clone();
        parallel_outer_update(&mut theta, &[orig.clone(), orig.clone(), orig.clone()], 0.7)
            .unwrap();
        for (a, b) in theta.array(0).iter().zip(orig.array(0).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_path_full_rate_substitutes() {
        let mut theta = snap(&[0.0]);
        parallel_outer_update(&mut theta, &[snap(&[2.5])], 1.0).unwrap();
        assert!((theta.array(0).as_slice().unwrap()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_example_from_the_update_rule() {
        // θ=0, snapshots {2, 4}, κ=0.5 → θ = 0 + 0.5(3 − 0) = 1.5
        let mut theta = snap(&[0.0]);
        parallel_outer_update(&mut theta, &[snap(&[2.0]), snap(&[4.0])], 0.5).unwrap();
        assert!((theta.array(0).as_slice().unwrap()[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_names_the_array() {
        let mut theta = snap(&[0.0]);
        let err = parallel_outer_update(&mut theta, &[snap(&[1.0, 2.0])], 0.5).unwrap_err();
        assert!(format!("{err}").contains('w'));
    }
}
