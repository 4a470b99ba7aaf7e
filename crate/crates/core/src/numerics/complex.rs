//! Complex scalars. Arithmetic comes from `num-complex`; the principal
//! square root is implemented here with overflow-safe scaling.

pub use num_complex::Complex64 as Complex;

/// Principal square root: the result has a non-negative real part, and
/// `principal_sqrt(z)^2 == z` to a few ulp for every finite `z`.
pub fn principal_sqrt(z: Complex) -> Complex {
    let (re, im) = (z.re, z.im);
    if re == 0.0 && im == 0.0 {
        return Complex::new(0.0, im);
    }
    // Rescale by even powers of two so hypot and the sums below neither
    // overflow nor lose precision in the subnormal range.
    let big = 2f64.powi(500);
    let small = 2f64.powi(-500);
    let m = re.abs().max(im.abs());
    let (scale_in, scale_out) = if m > 2f64.powi(1000) {
        (small * small, big)
    } else if m < 2f64.powi(-1000) {
        (big * big, small)
    } else {
        (1.0, 1.0)
    };
    let (a, b) = (re * scale_in, im * scale_in);
    let r = a.hypot(b);
    let (out_re, out_im) = if a >= 0.0 {
        let t = ((r + a) * 0.5).sqrt();
        (t, b / (2.0 * t))
    } else {
        let t = ((r - a) * 0.5).sqrt();
        (b.abs() / (2.0 * t), t.copysign(b))
    };
    Complex::new(out_re * scale_out, out_im * scale_out)
}

/// Unit phasor `exp(i * theta)`.
#[inline]
pub fn cis(theta: f64) -> Complex {
    let (s, c) = theta.sin_cos();
    Complex::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(w: Complex, z: Complex) -> bool {
        let sq = w * w;
        let scale = z.norm();
        (sq - z).norm() <= 4.0 * f64::EPSILON * scale
    }

    #[test]
    fn negative_real_axis() {
        let w = principal_sqrt(Complex::new(-4.0, 0.0));
        assert_eq!(w, Complex::new(0.0, 2.0));
        let w = principal_sqrt(Complex::new(-4.0, -0.0));
        assert_eq!(w, Complex::new(0.0, -2.0));
    }

    #[test]
    fn positive_real_axis() {
        assert_eq!(principal_sqrt(Complex::new(9.0, 0.0)), Complex::new(3.0, 0.0));
        assert_eq!(principal_sqrt(Complex::new(0.0, 0.0)), Complex::new(0.0, 0.0));
    }

    #[test]
    fn extreme_magnitudes() {
        for z in [
            Complex::new(f64::MAX, f64::MAX),
            Complex::new(-f64::MAX, 1.0),
            Complex::new(5e-324, 0.0),
            Complex::new(-1e-310, 3e-310),
        ] {
            let w = principal_sqrt(z);
            assert!(w.re >= 0.0);
            assert!(w.re.is_finite() && w.im.is_finite());
        }
        let z = Complex::new(-f64::MAX / 4.0, f64::MAX / 4.0);
        assert!(close(principal_sqrt(z), z));
    }

    proptest! {
        #[test]
        fn squares_back(re in -1e12f64..1e12, im in -1e12f64..1e12) {
            let z = Complex::new(re, im);
            let w = principal_sqrt(z);
            prop_assert!(w.re >= 0.0);
            prop_assert!(close(w, z), "z={z} w={w} w^2={}", w * w);
        }

        #[test]
        fn squares_back_tiny(re in -1e-200f64..1e-200, im in -1e-200f64..1e-200) {
            let z = Complex::new(re, im);
            let w = principal_sqrt(z);
            prop_assert!(close(w, z));
        }
    }
}
