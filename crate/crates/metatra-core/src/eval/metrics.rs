//! Best-of-K displacement metrics and their brute-force oracle.

use ndarray::Array2;

use crate::error::{CoreError, Result};

fn check_inputs(preds: &[Array2<f64>], gt: &Array2<f64>) -> Result<()> {
    if preds.is_empty() {
        return Err(CoreError::Usage("need at least one candidate trajectory".into()));
    }
    if gt.nrows() == 0 {
        return Err(CoreError::Usage("zero-length future horizon".into()));
    }
    for (k, p) in preds.iter().enumerate() {
        if p.shape() != gt.shape() {
            return Err(CoreError::Usage(format!(
                "candidate {k} has shape {:?}, ground truth {:?}",
                p.shape(),
                gt.shape()
            )));
        }
    }
    Ok(())
}

/// Minimum over candidates of the mean per-step Euclidean distance.
pub fn min_ade_k(preds: &[Array2<f64>], gt: &Array2<f64>) -> Result<f64> {
    check_inputs(preds, gt)?;
    let t_len = gt.nrows() as f64;
    Ok(preds
        .iter()
        .map(|p| {
            let sum: f64 = p
                .rows()
                .into_iter()
                .zip(gt.rows())
                .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
                .sum();
            sum / t_len
        })
        .fold(f64::INFINITY, f64::min))
}

/// Minimum over candidates of the final-step Euclidean distance.
pub fn min_fde_k(preds: &[Array2<f64>], gt: &Array2<f64>) -> Result<f64> {
    check_inputs(preds, gt)?;
    let last = gt.nrows() - 1;
    Ok(preds
        .iter()
        .map(|p| {
            ((p[[last, 0]] - gt[[last, 0]]).powi(2) + (p[[last, 1]] - gt[[last, 1]]).powi(2))
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min))
}

/// Independent oracle: explicit index loops, no iterator shortcuts. Test-only
/// validation of [`min_ade_k`] / [`min_fde_k`].
pub fn brute_force_metric_oracle(preds: &[Array2<f64>], gt: &Array2<f64>) -> Result<(f64, f64)> {
    check_inputs(preds, gt)?;
    let mut best_ade = f64::INFINITY;
    let mut best_fde = f64::INFINITY;
    for k in 0..preds.len() {
        let mut dist_sum = 0.0;
        for t in 0..gt.nrows() {
            let dx = preds[k][[t, 0]] - gt[[t, 0]];
            let dy = preds[k][[t, 1]] - gt[[t, 1]];
            dist_sum += (dx * dx + dy * dy).sqrt();
        }
        let ade = dist_sum / gt.nrows() as f64;
        if ade < best_ade {
            best_ade = ade;
        }
        let t = gt.nrows() - 1;
        let dx = preds[k][[t, 0]] - gt[[t, 0]];
        let dy = preds[k][[t, 1]] - gt[[t, 1]];
        let fde = (dx * dx + dy * dy).sqrt();
        if fde < best_fde {
            best_fde = fde;
        }
    }
    Ok((best_ade, best_fde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_candidate_scores_zero() {
        let gt = array![[1.0, 1.0], [2.0, 2.0]];
        let off = array![[5.0, 5.0], [6.0, 6.0]];
        assert_eq!(min_ade_k(&[gt.clone(), off.clone()], &gt).unwrap(), 0.0);
        assert_eq!(min_fde_k(&[off, gt.clone()], &gt).unwrap(), 0.0);
    }

    #[test]
    fn uniform_offsets_select_the_closer_candidate() {
        let gt = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let c1 = &gt + &array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let c3 = &gt + &array![[3.0, 0.0], [3.0, 0.0], [3.0, 0.0]];
        assert!((min_ade_k(&[c1.clone(), c3.clone()], &gt).unwrap() - 1.0).abs() < 1e-12);
        assert!((min_fde_k(&[c1, c3], &gt).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_fde_is_plain_final_distance() {
        let gt = array![[0.0, 0.0], [0.0, 0.0]];
        let c = array![[9.0, 9.0], [3.0, 4.0]];
        assert!((min_fde_k(&[c], &gt).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn final_distances_two_and_five_give_two() {
        let gt = array![[0.0, 0.0]];
        let c2 = array![[2.0, 0.0]];
        let c5 = array![[0.0, 5.0]];
        assert!((min_fde_k(&[c2, c5], &gt).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn joint_translation_leaves_metrics_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = Array2::from_shape_fn((12, 2), |_| rng.gen_range(-5.0..5.0));
        let preds: Vec<Array2<f64>> = (0..6)
            .map(|_| Array2::from_shape_fn((12, 2), |_| rng.gen_range(-5.0..5.0)))
            .collect();
        let ade = min_ade_k(&preds, &gt).unwrap();
        let fde = min_fde_k(&preds, &gt).unwrap();
        let shift = array![[13.7, -4.2]];
        let gt2 = &gt + &shift;
        let preds2: Vec<Array2<f64>> = preds.iter().map(|p| p + &shift).collect();
        assert!((min_ade_k(&preds2, &gt2).unwrap() - ade).abs() < 1e-12);
        assert!((min_fde_k(&preds2, &gt2).unwrap() - fde).abs() < 1e-12);
    }

    #[test]
    fn oracle_matches_fast_path_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.gen_range(1..8);
            let t = rng.gen_range(1..15);
            let gt = Array2::from_shape_fn((t, 2), |_| rng.gen_range(-10.0..10.0));
            let preds: Vec<Array2<f64>> = (0..k)
                .map(|_| Array2::from_shape_fn((t, 2), |_| rng.gen_range(-10.0..10.0)))
                .collect();
            let (o_ade, o_fde) = brute_force_metric_oracle(&preds, &gt).unwrap();
            assert!((min_ade_k(&preds, &gt).unwrap() - o_ade).abs() < 1e-12);
            assert!((min_fde_k(&preds, &gt).unwrap() - o_fde).abs() < 1e-12);
        }
    }

    #[test]
    fn adding_a_candidate_never_increases_the_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let gt = Array2::from_shape_fn((10, 2), |_| rng.gen_range(-3.0..3.0));
        let mut preds: Vec<Array2<f64>> = Vec::new();
        let mut prev_ade = f64::INFINITY;
        let mut prev_fde = f64::INFINITY;
        for _ in 0..10 {
            preds.push(Array2::from_shape_fn((10, 2), |_| rng.gen_range(-3.0..3.0)));
            let ade = min_ade_k(&preds, &gt).unwrap();
            let fde = min_fde_k(&preds, &gt).unwrap();
            assert!(ade <= prev_ade + 1e-15);
            assert!(fde <= prev_fde + 1e-15);
            prev_ade = ade;
            prev_fde = fde;
        }
    }

    #[test]
    fn mismatched_horizons_and_empty_inputs_error() {
        let gt = array![[0.0, 0.0], [1.0, 1.0]];
        let short = array![[0.0, 0.0]];
        assert!(min_ade_k(&[short.clone()], &gt).is_err());
        assert!(min_fde_k(&[short], &gt).is_err());
        assert!(min_ade_k(&[], &gt).is_err());
        let empty = Array2::zeros((0, 2));
        assert!(min_ade_k(&[empty.clone()], &empty).is_err());
        assert!(brute_force_metric_oracle(&[empty.clone()], &empty).is_err());
    }
}
