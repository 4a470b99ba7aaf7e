//! Fixed-grid trapezoidal quadrature of inverse Fourier integrals,
//! `f(z) = ∫ exp(2πi z·ξ) g(ξ) dξ`, over a truncated box. Test oracle only.

use serde::{Deserialize, Serialize};

use super::complex::Complex;
use crate::error::{Error, Result};

/// Per-axis truncation radius and node count of a trapezoidal product grid.
///
/// Nodes sit at `-R + k h` with `h = 2R / (n - 1)`, so an odd `n` places a
/// node exactly at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub radius: f64,
    pub nodes: usize,
}

impl QuadratureSpec {
    pub fn new(radius: f64, nodes: usize) -> Self {
        Self { radius, nodes }
    }

    pub fn step(&self) -> f64 {
        2.0 * self.radius / (self.nodes - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) || self.nodes < 2 {
            return Err(Error::invalid(format!("bad quadrature spec {self:?}")));
        }
        Ok(())
    }
}

/// Evaluates the inverse FT of `g` at `z` (dimension 1..=3).
pub fn quadrature_inverse_ft<G>(g: G, z: &[f64], spec: QuadratureSpec) -> Result<Complex>
where
    G: Fn(&[f64]) -> f64,
{
    spec.validate()?;
    let dim = z.len();
    if dim == 0 || dim > 3 {
        return Err(Error::OracleScope(format!("quadrature dimension {dim} (supported: 1..=3)")));
    }
    let n = spec.nodes;
    let h = spec.step();
    let nodes: Vec<f64> = (0..n).map(|k| -spec.radius + k as f64 * h).collect();
    let weight = |k: usize| if k == 0 || k == n - 1 { 0.5 * h } else { h };

    let mut idx = vec![0usize; dim];
    let mut xi = vec![0.0; dim];
    let (mut re, mut im) = (0.0, 0.0);
    loop {
        let mut w = 1.0;
        let mut phase = 0.0;
        for a in 0..dim {
            xi[a] = nodes[idx[a]];
            w *= weight(idx[a]);
            phase += z[a] * xi[a];
        }
        let gv = g(&xi);
        if gv != 0.0 {
            let (s, c) = (2.0 * std::f64::consts::PI * phase).sin_cos();
            re += w * gv * c;
            im += w * gv * s;
        }
        // odometer
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == dim {
                return Ok(Complex::new(re, im));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_at_origin() {
        let g = |x: &[f64]| (-2.0 * PI * PI * x[0] * x[0]).exp();
        let v = quadrature_inverse_ft(g, &[0.0], QuadratureSpec::new(4.0, 2048)).unwrap();
        assert!((v.re - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-6);
        assert!(v.im.abs() < 1e-12);
    }

    #[test]
    fn sinc_recovers_indicator() {
        // g(ξ) = sin(2π·0.5·ξ)/(πξ) is the FT of 1[|z| <= 0.5].
        let g = |x: &[f64]| {
            let t = x[0];
            if t == 0.0 {
                1.0
            } else {
                (PI * t).sin() / (PI * t)
            }
        };
        let spec = QuadratureSpec::new(200.0, 8001);
        let inside = quadrature_inverse_ft(g, &[0.3], spec).unwrap();
        assert!((inside.re - 1.0).abs() < 2e-2, "{}", inside.re);
        let outside = quadrature_inverse_ft(g, &[0.8], spec).unwrap();
        assert!(outside.re.abs() < 2e-2);
    }

    #[test]
    fn zero_integrand() {
        let v = quadrature_inverse_ft(|_| 0.0, &[0.1, 0.2], QuadratureSpec::new(1.0, 11)).unwrap();
        assert_eq!(v, Complex::new(0.0, 0.0));
    }

    #[test]
    fn rejects_high_dimension() {
        let err = quadrature_inverse_ft(|_| 1.0, &[0.0; 4], QuadratureSpec::new(1.0, 3));
        assert!(matches!(err, Err(Error::OracleScope(_))));
    }

    #[test]
    fn three_dimensional_gaussian() {
        let g = |x: &[f64]| (-2.0 * PI * PI * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp();
        let v = quadrature_inverse_ft(g, &[0.0; 3], QuadratureSpec::new(3.0, 61)).unwrap();
        assert!((v.re - (2.0 * PI).powf(-1.5)).abs() < 1e-9);
    }
}
