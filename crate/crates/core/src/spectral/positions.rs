use ndarray::Array2;

use crate::error::{Error, Result};

/// Token positions `r_1..r_L` in `R^ell`, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionSet {
    points: Array2<f64>,
}

impl PositionSet {
    /// Token indices `0, 1, ..., L-1` on the real line.
    pub fn sequential(len: usize) -> Self {
        Self {
            points: Array2::from_shape_fn((len, 1), |(i, _)| i as f64),
        }
    }

    /// Arbitrary points, one per row.
    pub fn from_points(points: Array2<f64>) -> Result<Self> {
        if points.ncols() == 0 {
            return Err(Error::invalid("positions need at least one coordinate"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("positions must be finite"));
        }
        Ok(Self { points })
    }

    /// Positions for a shift-invariant kernel evaluated on inputs `s_j`:
    /// `r_j = s_j / (2π)`, which turns the `exp(2πi z·ξ)` convention into
    /// the `exp(i s·ξ)` convention of Bochner's theorem.
    pub fn kernel_inputs(inputs: &Array2<f64>) -> Result<Self> {
        Self::from_points(inputs / (2.0 * std::f64::consts::PI))
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// `r_i - r_j`.
    pub fn displacement(&self, i: usize, j: usize) -> Vec<f64> {
        self.points
            .row(i)
            .iter()
            .zip(self.points.row(j))
            .map(|(a, b)| a - b)
            .collect()
    }

    /// True for 1-D positions with unit spacing, where RPE masks are Toeplitz.
    pub fn is_sequential(&self) -> bool {
        if self.dim() != 1 {
            return false;
        }
        let col = self.points.column(0);
        col.iter().zip(col.iter().skip(1)).all(|(a, b)| b - a == 1.0)
    }

    /// Reorders positions by `perm` (new row `k` is old row `perm[k]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let ell = self.dim();
        Self {
            points: Array2::from_shape_fn((perm.len(), ell), |(k, a)| self.points[[perm[k], a]]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_is_toeplitz() {
        let p = PositionSet::sequential(5);
        assert!(p.is_sequential());
        assert_eq!(p.displacement(4, 1), vec![3.0]);
        let q = PositionSet::from_points(Array2::from_shape_vec((3, 1), vec![0.0, 2.0, 3.0]).unwrap()).unwrap();
        assert!(!q.is_sequential());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(PositionSet::from_points(Array2::from_elem((2, 3), f64::NAN)).is_err());
    }
}
