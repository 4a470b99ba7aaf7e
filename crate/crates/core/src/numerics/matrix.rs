//! Dense row-major matrices backed by `ndarray`.
//!
//! Complex products never conjugate: `transpose` is the plain (bilinear)
//! transpose for both real and complex matrices.

use ndarray::{Array2, LinalgScalar};

use super::complex::Complex;
use crate::error::{Error, Result};

pub type RealMatrix = Array2<f64>;
pub type ComplexMatrix = Array2<Complex>;

/// `a * b`, or a shape error naming both operands.
pub fn matmul<T: LinalgScalar>(a: &Array2<T>, b: &Array2<T>) -> Result<Array2<T>> {
    if a.ncols() != b.nrows() {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    Ok(a.dot(b))
}

/// Bilinear transpose (no conjugation).
pub fn transpose<T: Clone>(a: &Array2<T>) -> Array2<T> {
    a.t().to_owned()
}

/// Concatenates along the feature (column) axis.
pub fn hconcat<T: Clone>(parts: &[&Array2<T>]) -> Result<Array2<T>> {
    let rows = parts.first().map(|p| p.nrows()).unwrap_or(0);
    for p in parts {
        if p.nrows() != rows {
            return Err(Error::shape("hconcat", &[rows], p.shape()));
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(ndarray::Axis(1), &views).map_err(|_| Error::shape("hconcat", &[rows], &[]))
}

pub fn max_abs_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn frobenius(a: &RealMatrix) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b||_F / ||b||_F`.
pub fn relative_frobenius_error(approx: &RealMatrix, exact: &RealMatrix) -> f64 {
    assert_eq!(approx.shape(), exact.shape());
    let num = approx
        .iter()
        .zip(exact.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    num / frobenius(exact)
}

/// Matrix of iid standard normals.
pub fn gaussian_matrix(rng: &mut super::Rng, rows: usize, cols: usize) -> RealMatrix {
    Array2::from_shape_simple_fn((rows, cols), || rng.normal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn shape_error_names_op() {
        let a = RealMatrix::zeros((2, 3));
        let b = RealMatrix::zeros((2, 3));
        let err = matmul(&a, &b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn associativity() {
        let mut rng = Rng::seeded(5);
        for n in [3usize, 17, 64, 128] {
            let a = gaussian_matrix(&mut rng, n, n);
            let b = gaussian_matrix(&mut rng, n, n);
            let c = gaussian_matrix(&mut rng, n, n);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            assert!(max_abs_diff(&left, &right) <= 1e-10 * scale);
        }
    }

    #[test]
    fn complex_transpose_is_bilinear() {
        let a = ComplexMatrix::from_shape_vec((1, 2), vec![Complex::new(0.0, 1.0), Complex::new(1.0, 1.0)]).unwrap();
        let g = matmul(&a, &transpose(&a)).unwrap();
        // i*i + (1+i)^2 = -1 + 2i
        assert_eq!(g[[0, 0]], Complex::new(-1.0, 2.0));
    }
}
