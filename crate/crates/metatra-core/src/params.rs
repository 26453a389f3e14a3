//! Named parameter storage.
//!
//! All trainable arrays live in a [`ParameterSnapshot`]: a flat, ordered list
//! of `(name, f64 array)` pairs. The snapshot is the unit the trainer moves
//! around (value-copy semantics), the unit the checkpoint serializes, and the
//! unit finite-difference checks enumerate. Elementwise arithmetic is closed
//! over snapshots with identical layouts.

use ndarray::{Array1, Array2, ArrayD, ArrayView1, ArrayView2, ArrayViewD};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSnapshot {
    names: Vec<String>,
    arrays: Vec<ArrayD<f64>>,
}

impl ParameterSnapshot {
    pub fn new() -> Self {
        ParameterSnapshot { names: Vec::new(), arrays: Vec::new() }
    }

    /// Register a new array. Names must be unique; returns the slot index.
    pub fn register(&mut self, name: impl Into<String>, array: ArrayD<f64>) -> usize {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.arrays.push(array);
        self.arrays.len() - 1
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn array(&self, idx: usize) -> &ArrayD<f64> {
        &self.arrays[idx]
    }

    pub fn array_mut(&mut self, idx: usize) -> &mut ArrayD<f64> {
        &mut self.arrays[idx]
    }

    pub fn view(&self, idx: usize) -> ArrayViewD<'_, f64> {
        self.arrays[idx].view()
    }

    /// 2-D view of slot `idx`. Panics when the array is not 2-D.
    pub fn m2(&self, idx: usize) -> ArrayView2<'_, f64> {
        self.arrays[idx]
            .view()
            .into_dimensionality()
            .expect("parameter is not 2-D")
    }

    /// 1-D view of slot `idx`. Panics when the array is not 1-D.
    pub fn v1(&self, idx: usize) -> ArrayView1<'_, f64> {
        self.arrays[idx]
            .view()
            .into_dimensionality()
            .expect("parameter is not 1-D")
    }

    /// Accumulate a 2-D gradient into slot `idx`.
    pub fn add2(&mut self, idx: usize, m: &Array2<f64>) {
        let mut view: ndarray::ArrayViewMut2<'_, f64> = self.arrays[idx]
            .view_mut()
            .into_dimensionality()
            .expect("parameter is not 2-D");
        view += m;
    }

    /// Accumulate a 1-D gradient into slot `idx`.
    pub fn add1(&mut self, idx: usize, v: &Array1<f64>) {
        let mut view: ndarray::ArrayViewMut1<'_, f64> = self.arrays[idx]
            .view_mut()
            .into_dimensionality()
            .expect("parameter is not 1-D");
        view += v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.names.iter().map(|s| s.as_str()).zip(self.arrays.iter())
    }

    /// A snapshot with the same layout, all values zero. Gradient buffers.
    pub fn zeros_like(&self) -> Self {
        ParameterSnapshot {
            names: self.names.clone(),
            arrays: self.arrays.iter().map(|a| ArrayD::zeros(a.raw_dim())).collect(),
        }
    }

    pub fn total_scalars(&self) -> usize {
        self.arrays.iter().map(|a| a.len()).sum()
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.names != other.names {
            return Err(CoreError::Usage(
                "parameter snapshots have different layouts".into(),
            ));
        }
        for (i, (a, b)) in self.arrays.iter().zip(&other.arrays).enumerate() {
            if a.shape() != b.shape() {
                return Err(CoreError::Shape {
                    name: self.names[i].clone(),
                    expected: a.shape().to_vec(),
                    got: b.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// `self += alpha * other`, elementwise per named array.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            a.zip_mut_with(b, |x, &y| *x += alpha * y);
        }
        Ok(())
    }

    /// `self *= alpha` elementwise.
    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.arrays {
            a.mapv_inplace(|x| x * alpha);
        }
    }

    pub fn fill(&mut self, value: f64) {
        for a in &mut self.arrays {
            a.fill(value);
        }
    }

    /// Mean of snapshots with identical layout.
    pub fn mean_of(snapshots: &[Self]) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| CoreError::Usage("mean_of needs >= 1 snapshot".into()))?;
        let mut out = first.clone();
        for s in &snapshots[1..] {
            out.axpy(1.0, s)?;
        }
        out.scale(1.0 / snapshots.len() as f64);
        Ok(out)
    }

    /// Euclidean norm over all scalars.
    pub fn global_norm(&self) -> f64 {
        self.arrays
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Scale down so the global norm is at most `max_norm`. Returns the
    /// factor applied (1.0 when already within bounds).
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let factor = max_norm / norm;
            self.scale(factor);
            factor
        } else {
            1.0
        }
    }

    /// Dot product over all scalars (layouts must match).
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        let mut acc = 0.0;
        for (a, b) in self.arrays.iter().zip(&other.arrays) {
            for (x, y) in a.iter().zip(b.iter()) {
                acc += x * y;
            }
        }
        Ok(acc)
    }

    /// First non-finite entry, as `(name, flat_index)`.
    pub fn find_non_finite(&self) -> Option<(&str, usize)> {
        for (name, array) in self.iter() {
            if let Some(pos) = array.iter().position(|v| !v.is_finite()) {
                return Some((name, pos));
            }
        }
        None
    }
}

impl Default for ParameterSnapshot {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    fn snap(values: &[f64]) -> ParameterSnapshot {
        let mut s = ParameterSnapshot::new();
        s.register("a", ArrayD::from_shape_vec(vec![values.len()], values.to_vec()).unwrap());
        s
    }

    #[test]
    fn axpy_and_scale() {
        let mut a = snap(&[1.0, 2.0]);
        let b = snap(&[10.0, 20.0]);
        a.axpy(0.5, &b).unwrap();
        assert_eq!(a.array(0).as_slice().unwrap(), &[6.0, 12.0]);
        a.scale(2.0);
        assert_eq!(a.array(0).as_slice().unwrap(), &[12.0, 24.0]);
    }

    #[test]
    fn mean_of_identical_is_identity() {
        let a = snap(&[3.0, -1.0]);
        let mean = ParameterSnapshot::mean_of(&[a.clone(), a.clone(), a.clone()]).unwrap();
        for (x, y) in mean.array(0).iter().zip(a.array(0).iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn clip_reduces_norm() {
        let mut a = snap(&[3.0, 4.0]);
        let factor = a.clip_global_norm(1.0);
        assert!((factor - 0.2).abs() < 1e-15);
        assert!((a.global_norm() - 1.0).abs() < 1e-12);
        let mut b = snap(&[0.1, 0.1]);
        assert_eq!(b.clip_global_norm(1.0), 1.0);
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let mut a = snap(&[1.0]);
        let mut b = ParameterSnapshot::new();
        b.register("b", ArrayD::zeros(vec![1]));
        assert!(a.axpy(1.0, &b).is_err());
    }

    #[test]
    fn finds_non_finite_by_name() {
        let mut a = snap(&[1.0, f64::NAN]);
        assert_eq!(a.find_non_finite(), Some(("a", 1)));
        a.array_mut(0)[[1]] = 0.0;
        assert_eq!(a.find_non_finite(), None);
    }
}
