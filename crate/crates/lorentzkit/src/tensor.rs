//! Pointwise tensor component arrays with index variance tags.

use nalgebra::DMatrix;

/// Index variance of one tensor slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variance {
    Upper,
    Lower,
}

/// Numeric tensor components at a single point.
///
/// Components are stored row-major over the index tuple, `dim^rank` entries
/// in total.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorValue {
    dim: usize,
    variance: Vec<Variance>,
    data: Vec<f64>,
}

impl TensorValue {
    pub fn zeros(dim: usize, variance: &[Variance]) -> Self {
        let len = dim.pow(variance.len() as u32);
        TensorValue {
            dim,
            variance: variance.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>, variance: [Variance; 2]) -> Self {
        let dim = m.nrows();
        assert_eq!(dim, m.ncols(), "tensor matrix must be square");
        let mut t = TensorValue::zeros(dim, &variance);
        for i in 0..dim {
            for j in 0..dim {
                *t.get_mut(&[i, j]) = m[(i, j)];
            }
        }
        t
    }

    pub fn from_vector(v: &[f64], variance: Variance) -> Self {
        TensorValue {
            dim: v.len(),
            variance: vec![variance],
            data: v.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Variance] {
        &self.variance
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.variance.len());
        let mut off = 0;
        for &i in idx {
            debug_assert!(i < self.dim);
            off = off * self.dim + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn get_mut(&mut self, idx: &[usize]) -> &mut f64 {
        let off = self.offset(idx);
        &mut self.data[off]
    }

    /// Largest absolute component.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rank-2 view as a nalgebra matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank(), 2, "to_matrix requires a rank-2 tensor");
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(&[i, j]))
    }

    /// Largest |t_ij - t_ji| over a rank-2 tensor.
    pub fn symmetry_defect(&self) -> f64 {
        assert_eq!(self.rank(), 2);
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.get(&[i, j]) - self.get(&[j, i])).abs());
            }
        }
        worst
    }

    /// Componentwise difference; shapes must match.
    pub fn sub(&self, other: &TensorValue) -> TensorValue {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.variance, other.variance);
        TensorValue {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> TensorValue {
        TensorValue {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let mut t = TensorValue::zeros(3, &[Variance::Upper, Variance::Lower]);
        *t.get_mut(&[1, 2]) = 7.0;
        assert_eq!(t.data()[1 * 3 + 2], 7.0);
        assert_eq!(t.get(&[1, 2]), 7.0);
    }

    #[test]
    fn sup_norm_and_symmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-3, -5.0]);
        let t = TensorValue::from_matrix(&m, [Variance::Lower, Variance::Lower]);
        assert_eq!(t.sup_norm(), 5.0);
        assert!((t.symmetry_defect() - 1e-3).abs() < 1e-15);
    }
}
