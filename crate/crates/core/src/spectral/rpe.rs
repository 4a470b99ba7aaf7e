//! Parameterized Fourier transforms `g` of implicit RPE functions `f`, with
//! `f(z) = ∫ exp(2πi z·ξ) g(ξ) dξ`.
//!
//! Positive parameters (widths, radii, kernel scales) are stored as logs so
//! that any real-valued optimizer update keeps them positive.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;

use crate::autograd::{SumAxis, Tape, Var};
use crate::error::{Error, Result};

/// `sin(2π v x) / (π x)`, with its limit `2v` at `x = 0`.
#[inline]
pub fn sinc_term(radius: f64, x: f64) -> f64 {
    let y = 2.0 * PI * radius * x;
    if y.abs() < 1e-3 {
        let y2 = y * y;
        2.0 * radius * (1.0 - y2 / 6.0 + y2 * y2 / 120.0)
    } else {
        y.sin() / (PI * x)
    }
}

/// Irwin–Hall density, evaluated on the left half `x <= k/2` where the
/// alternating sum has the fewest terms.
fn irwin_hall(k: u32, x: f64) -> f64 {
    let k_f = f64::from(k);
    if x < 0.0 || x > k_f {
        return 0.0;
    }
    let x = if x > k_f / 2.0 { k_f - x } else { x };
    let mut fact = 1.0;
    for i in 1..k {
        fact *= f64::from(i);
    }
    let mut sum = 0.0;
    let mut binom = 1.0;
    let top = x.floor() as u32;
    for j in 0..=top.min(k) {
        let term = binom * (x - f64::from(j)).powi(k as i32 - 1);
        sum += if j % 2 == 0 { term } else { -term };
        binom = binom * f64::from(k - j) / f64::from(j + 1);
    }
    sum / fact
}

/// `(k-1)`-fold self-convolution of the box `1[|s| <= v]`.
pub fn box_convolution_power(k: u32, radius: f64, s: f64) -> f64 {
    let two_v = 2.0 * radius;
    let x = (f64::from(k) * radius - s.abs()) / two_v;
    two_v.powi(k as i32 - 1) * irwin_hall(k, x)
}

/// Spectral densities of shift-invariant kernels, under the `exp(i δ·ξ)`
/// convention of Bochner's theorem.
#[derive(Clone)]
pub enum SpectralDensity {
    /// RBF kernel `exp(-|δ|² / (2λ²))`; density `N(0, λ⁻² I)`.
    Gaussian { log_lengthscale: f64 },
    /// Product Laplace kernel `Π exp(-|δ_a| / λ)`; product Cauchy density.
    Cauchy { log_lengthscale: f64 },
    /// Arbitrary density without a closed-form kernel.
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { log_lengthscale } => f
                .debug_struct("Gaussian")
                .field("lengthscale", &log_lengthscale.exp())
                .finish(),
            Self::Cauchy { log_lengthscale } => f
                .debug_struct("Cauchy")
                .field("lengthscale", &log_lengthscale.exp())
                .finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl SpectralDensity {
    fn eval(&self, xi: &[f64]) -> f64 {
        match self {
            Self::Gaussian { log_lengthscale } => {
                let l = log_lengthscale.exp();
                let ell = xi.len() as f64;
                let r2: f64 = xi.iter().map(|x| x * x).sum();
                (l * l / (2.0 * PI)).powf(ell / 2.0) * (-0.5 * l * l * r2).exp()
            }
            Self::Cauchy { log_lengthscale } => {
                let l = log_lengthscale.exp();
                xi.iter().map(|x| l / (PI * (1.0 + l * l * x * x))).product()
            }
            Self::Custom(p) => p(xi),
        }
    }

    /// Kernel value `K(δ)` without the outer constant.
    fn kernel(&self, delta: &[f64]) -> Result<f64> {
        match self {
            Self::Gaussian { log_lengthscale } => {
                let l = log_lengthscale.exp();
                let r2: f64 = delta.iter().map(|x| x * x).sum();
                Ok((-r2 / (2.0 * l * l)).exp())
            }
            Self::Cauchy { log_lengthscale } => {
                let l = log_lengthscale.exp();
                Ok((-delta.iter().map(|x| x.abs()).sum::<f64>() / l).exp())
            }
            Self::Custom(_) => Err(Error::NoClosedForm("a custom spectral density")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    pub(crate) ell: usize,
    pub(crate) weights: Vec<f64>,
    /// `T x ell`, row-major.
    pub(crate) centers: Vec<f64>,
    pub(crate) log_sigmas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSincSum {
    pub(crate) weights: Vec<f64>,
    pub(crate) log_radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSincProduct {
    pub(crate) amplitude: f64,
    pub(crate) log_radii: Vec<f64>,
    pub(crate) orders: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBasis3D {
    pub(crate) weights: Vec<f64>,
    pub(crate) log_sigmas: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ShiftInvariantKernel {
    pub(crate) ell: usize,
    pub(crate) log_scale: f64,
    pub(crate) density: SpectralDensity,
}

/// A learnable spectral representation `g` of an RPE function `f`.
#[derive(Clone, Debug)]
pub enum SpectralRpe {
    /// `g(ξ) = Σ_t w_t exp(-|ξ - μ_t|² / (2σ_t²))`.
    GaussianMixture(GaussianMixture),
    /// `g(ξ) = Σ_t w_t sin(2π v_t ξ) / (πξ)`; `f(Δ) = Σ_t w_t 1[|Δ| <= v_t]`.
    LocalSincSum(LocalSincSum),
    /// `g(ξ) = C Π_j (sin(2π v_j ξ_j) / (π ξ_j))^{k_j}`; `f` is a product of
    /// compactly supported piecewise polynomials of order `k_j - 1`.
    LocalSincProduct(LocalSincProduct),
    /// `g(ξ) = Σ_t w_t exp(-2π² σ_t² |ξ|²)` on `R^3`;
    /// `f(r) = Σ_t w_t (√(2π) σ_t)^{-3} exp(-|r|² / (2σ_t²))`.
    GaussianBasis3D(GaussianBasis3D),
    /// `g = C p_K` for a shift-invariant kernel `K` with spectral density `p_K`.
    ShiftInvariantKernel(ShiftInvariantKernel),
}

fn check_positive(name: &str, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            if x > 0.0 && x.is_finite() {
                Ok(x.ln())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {x}")))
            }
        })
        .collect()
}

fn check_finite(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite")))
    }
}

fn row(xs: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, xs.len()), xs.to_vec()).expect("row shape")
}

fn col(xs: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).expect("column shape")
}

impl SpectralRpe {
    /// Gaussian mixture in `R^ell`; `centers` has one `ell`-vector per component.
    pub fn gaussian_mixture(weights: &[f64], centers: &[Vec<f64>], sigmas: &[f64]) -> Result<Self> {
        let t = weights.len();
        if t == 0 || centers.len() != t || sigmas.len() != t {
            return Err(Error::invalid("gaussian mixture needs T >= 1 matching weights, centers, sigmas"));
        }
        let ell = centers[0].len();
        if ell == 0 || centers.iter().any(|c| c.len() != ell) {
            return Err(Error::invalid("all centers must share one dimension >= 1"));
        }
        check_finite("weights", weights)?;
        let flat: Vec<f64> = centers.iter().flatten().copied().collect();
        check_finite("centers", &flat)?;
        Ok(Self::GaussianMixture(GaussianMixture {
            ell,
            weights: weights.to_vec(),
            centers: flat,
            log_sigmas: check_positive("sigma", sigmas)?,
        }))
    }

    pub fn local_sinc_sum(weights: &[f64], radii: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.len() != radii.len() {
            return Err(Error::invalid("local sinc sum needs T >= 1 matching weights and radii"));
        }
        check_finite("weights", weights)?;
        Ok(Self::LocalSincSum(LocalSincSum {
            weights: weights.to_vec(),
            log_radii: check_positive("radius", radii)?,
        }))
    }

    /// Indicator RPE `f(Δ) = C 1[|Δ| <= v]`.
    pub fn indicator(amplitude: f64, radius: f64) -> Result<Self> {
        Self::local_sinc_sum(&[amplitude], &[radius])
    }

    pub fn local_sinc_product(amplitude: f64, radii: &[f64], orders: &[u32]) -> Result<Self> {
        if radii.is_empty() || radii.len() != orders.len() {
            return Err(Error::invalid("local sinc product needs one radius and order per axis"));
        }
        if let Some(k) = orders.iter().find(|&&k| !(1..=16).contains(&k)) {
            return Err(Error::invalid(format!("orders must lie in 1..=16, got {k}")));
        }
        check_finite("amplitude", &[amplitude])?;
        Ok(Self::LocalSincProduct(LocalSincProduct {
            amplitude,
            log_radii: check_positive("radius", radii)?,
            orders: orders.to_vec(),
        }))
    }

    pub fn gaussian_basis_3d(weights: &[f64], sigmas: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.len() != sigmas.len() {
            return Err(Error::invalid("gaussian basis needs T >= 1 matching weights and sigmas"));
        }
        check_finite("weights", weights)?;
        Ok(Self::GaussianBasis3D(GaussianBasis3D {
            weights: weights.to_vec(),
            log_sigmas: check_positive("sigma", sigmas)?,
        }))
    }

    pub fn shift_invariant(ell: usize, scale: f64, density: SpectralDensity) -> Result<Self> {
        if ell == 0 {
            return Err(Error::invalid("kernel dimension must be >= 1"));
        }
        let log_scale = check_positive("kernel constant", &[scale])?[0];
        if let SpectralDensity::Gaussian { log_lengthscale } | SpectralDensity::Cauchy { log_lengthscale } = &density {
            check_finite("lengthscale", &[*log_lengthscale])?;
        }
        Ok(Self::ShiftInvariantKernel(ShiftInvariantKernel {
            ell,
            log_scale,
            density,
        }))
    }

    /// The zero RPE (`g ≡ 0`, hence `f ≡ 0`).
    pub fn zero(ell: usize) -> Result<Self> {
        Self::gaussian_mixture(&[0.0], &[vec![0.0; ell]], &[1.0])
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GaussianMixture(_) => "gaussian_mixture",
            Self::LocalSincSum(_) => "local_sinc_sum",
            Self::LocalSincProduct(_) => "local_sinc_product",
            Self::GaussianBasis3D(_) => "gaussian_basis_3d",
            Self::ShiftInvariantKernel(_) => "shift_invariant_kernel",
        }
    }

    /// Dimension `ell` of the position space.
    pub fn dim(&self) -> usize {
        match self {
            Self::GaussianMixture(g) => g.ell,
            Self::LocalSincSum(_) => 1,
            Self::LocalSincProduct(p) => p.log_radii.len(),
            Self::GaussianBasis3D(_) => 3,
            Self::ShiftInvariantKernel(k) => k.ell,
        }
    }

    /// True when `g` is real and even, so `f` is real and even.
    pub fn is_even(&self) -> bool {
        match self {
            Self::GaussianMixture(g) => g.centers.iter().all(|&c| c == 0.0),
            Self::ShiftInvariantKernel(k) => !matches!(k.density, SpectralDensity::Custom(_)),
            _ => true,
        }
    }

    /// `g(ξ)`. Removable singularities at `ξ_axis = 0` use the analytic limit.
    pub fn eval_ft(&self, xi: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.dim());
        match self {
            Self::GaussianMixture(g) => {
                let ell = g.ell;
                g.weights
                    .iter()
                    .zip(&g.log_sigmas)
                    .enumerate()
                    .map(|(t, (w, ls))| {
                        let mu = &g.centers[t * ell..(t + 1) * ell];
                        let d2: f64 = xi.iter().zip(mu).map(|(x, m)| (x - m) * (x - m)).sum();
                        w * (-d2 * 0.5 * (-2.0 * ls).exp()).exp()
                    })
                    .sum()
            }
            Self::LocalSincSum(s) => s
                .weights
                .iter()
                .zip(&s.log_radii)
                .map(|(w, lv)| w * sinc_term(lv.exp(), xi[0]))
                .sum(),
            Self::LocalSincProduct(p) => {
                p.amplitude
                    * p.log_radii
                        .iter()
                        .zip(&p.orders)
                        .zip(xi)
                        .map(|((lv, &k), &x)| sinc_term(lv.exp(), x).powi(k as i32))
                        .product::<f64>()
            }
            Self::GaussianBasis3D(b) => {
                let r2: f64 = xi.iter().map(|x| x * x).sum();
                b.weights
                    .iter()
                    .zip(&b.log_sigmas)
                    .map(|(w, ls)| w * (-2.0 * PI * PI * (2.0 * ls).exp() * r2).exp())
                    .sum()
            }
            Self::ShiftInvariantKernel(k) => k.log_scale.exp() * k.density.eval(xi),
        }
    }

    /// The implicit `f(Δr)` whose FT is `g`. For a Gaussian mixture with
    /// non-zero centers this is the real part of the complex-valued `f`.
    pub fn eval_rpe_closed_form(&self, delta: &[f64]) -> Result<f64> {
        if delta.len() != self.dim() {
            return Err(Error::shape("eval_rpe_closed_form", &[delta.len()], &[self.dim()]));
        }
        Ok(match self {
            Self::GaussianMixture(g) => {
                let ell = g.ell;
                let r2: f64 = delta.iter().map(|x| x * x).sum();
                g.weights
                    .iter()
                    .zip(&g.log_sigmas)
                    .enumerate()
                    .map(|(t, (w, ls))| {
                        let s2 = (2.0 * ls).exp();
                        let mu = &g.centers[t * ell..(t + 1) * ell];
                        let phase: f64 = delta.iter().zip(mu).map(|(d, m)| d * m).sum();
                        w * (2.0 * PI * s2).powf(ell as f64 / 2.0)
                            * (-2.0 * PI * PI * s2 * r2).exp()
                            * (2.0 * PI * phase).cos()
                    })
                    .sum()
            }
            Self::LocalSincSum(s) => s
                .weights
                .iter()
                .zip(&s.log_radii)
                .filter(|(_, lv)| delta[0].abs() <= lv.exp())
                .map(|(w, _)| w)
                .sum(),
            Self::LocalSincProduct(p) => {
                p.amplitude
                    * p.log_radii
                        .iter()
                        .zip(&p.orders)
                        .zip(delta)
                        .map(|((lv, &k), &d)| box_convolution_power(k, lv.exp(), d))
                        .product::<f64>()
            }
            Self::GaussianBasis3D(b) => {
                let r2: f64 = delta.iter().map(|x| x * x).sum();
                b.weights
                    .iter()
                    .zip(&b.log_sigmas)
                    .map(|(w, ls)| {
                        let s = ls.exp();
                        w / ((2.0 * PI).sqrt() * s).powi(3) * (-r2 / (2.0 * s * s)).exp()
                    })
                    .sum()
            }
            Self::ShiftInvariantKernel(k) => {
                let scaled: Vec<f64> = delta.iter().map(|d| 2.0 * PI * d).collect();
                k.log_scale.exp() * k.density.kernel(&scaled)?
            }
        })
    }

    /// Learnable parameters as matrices, in the order used by
    /// [`SpectralRpe::eval_ft_tape`] and [`SpectralRpe::set_parameters`].
    pub fn parameters(&self) -> Vec<Array2<f64>> {
        match self {
            Self::GaussianMixture(g) => vec![
                row(&g.weights),
                Array2::from_shape_vec((g.weights.len(), g.ell), g.centers.clone()).expect("centers shape"),
                col(&g.log_sigmas),
            ],
            Self::LocalSincSum(s) => vec![row(&s.weights), col(&s.log_radii)],
            Self::LocalSincProduct(p) => vec![row(&[p.amplitude]), row(&p.log_radii)],
            Self::GaussianBasis3D(b) => vec![row(&b.weights), col(&b.log_sigmas)],
            Self::ShiftInvariantKernel(k) => match k.density {
                SpectralDensity::Gaussian { log_lengthscale } | SpectralDensity::Cauchy { log_lengthscale } => {
                    vec![row(&[k.log_scale]), row(&[log_lengthscale])]
                }
                SpectralDensity::Custom(_) => vec![row(&[k.log_scale])],
            },
        }
    }

    pub fn parameter_names(&self) -> Vec<&'static str> {
        match self {
            Self::GaussianMixture(_) => vec!["weights", "centers", "log_sigmas"],
            Self::LocalSincSum(_) => vec!["weights", "log_radii"],
            Self::LocalSincProduct(_) => vec!["amplitude", "log_radii"],
            Self::GaussianBasis3D(_) => vec!["weights", "log_sigmas"],
            Self::ShiftInvariantKernel(k) => match k.density {
                SpectralDensity::Custom(_) => vec!["log_scale"],
                _ => vec!["log_scale", "log_lengthscale"],
            },
        }
    }

    pub fn set_parameters(&mut self, params: &[Array2<f64>]) -> Result<()> {
        let expected = self.parameters();
        if params.len() != expected.len() {
            return Err(Error::shape("set_parameters", &[params.len()], &[expected.len()]));
        }
        for (p, e) in params.iter().zip(&expected) {
            if p.shape() != e.shape() {
                return Err(Error::shape("set_parameters", p.shape(), e.shape()));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("non-finite spectral parameter"));
            }
        }
        let flat = |a: &Array2<f64>| a.iter().copied().collect::<Vec<f64>>();
        match self {
            Self::GaussianMixture(g) => {
                g.weights = flat(&params[0]);
                g.centers = flat(&params[1]);
                g.log_sigmas = flat(&params[2]);
            }
            Self::LocalSincSum(s) => {
                s.weights = flat(&params[0]);
                s.log_radii = flat(&params[1]);
            }
            Self::LocalSincProduct(p) => {
                p.amplitude = params[0][[0, 0]];
                p.log_radii = flat(&params[1]);
            }
            Self::GaussianBasis3D(b) => {
                b.weights = flat(&params[0]);
                b.log_sigmas = flat(&params[1]);
            }
            Self::ShiftInvariantKernel(k) => {
                k.log_scale = params[0][[0, 0]];
                if let SpectralDensity::Gaussian { log_lengthscale } | SpectralDensity::Cauchy { log_lengthscale } =
                    &mut k.density
                {
                    *log_lengthscale = params[1][[0, 0]];
                }
            }
        }
        Ok(())
    }

    /// `g` at every row of `freqs` (`r x ell`), as a `1 x r` tape value
    /// differentiable in `params` (as returned by [`SpectralRpe::parameters`]).
    pub fn eval_ft_tape(&self, tape: &mut Tape, params: &[Var], freqs: &Array2<f64>) -> Result<Var> {
        let r = freqs.nrows();
        let ell = self.dim();
        if freqs.ncols() != ell {
            return Err(Error::shape("eval_ft_tape", freqs.shape(), &[r, ell]));
        }
        let sq_norms: Vec<f64> = freqs.rows().into_iter().map(|x| x.dot(&x)).collect();
        match self {
            Self::GaussianMixture(g) => {
                let t = g.weights.len();
                let (w, mu, log_sigma) = (params[0], params[1], params[2]);
                let xi_t = tape.constant(freqs.t().to_owned());
                let cross = tape.matmul(mu, xi_t)?;
                let cross2 = tape.scale(cross, -2.0)?;
                let mu_sq = tape.square(mu)?;
                let mu_norm = tape.sum_axis(mu_sq, SumAxis::Cols)?;
                let mu_norm = tape.broadcast_col(mu_norm, r)?;
                let xi_norm = tape.constant(Array2::from_shape_fn((t, r), |(_, j)| sq_norms[j]));
                let d2 = tape.add(cross2, mu_norm)?;
                let d2 = tape.add(d2, xi_norm)?;
                // 1 / (2σ²) = exp(-2 log σ) / 2
                let inv = tape.scale(log_sigma, -2.0)?;
                let inv = tape.exp(inv)?;
                let inv = tape.scale(inv, -0.5)?;
                let inv = tape.broadcast_col(inv, r)?;
                let expo = tape.mul(d2, inv)?;
                let e = tape.exp(expo)?;
                tape.matmul(w, e)
            }
            Self::LocalSincSum(s) => {
                let t = s.weights.len();
                let (w, log_v) = (params[0], params[1]);
                let v = tape.exp(log_v)?;
                let terms = sinc_terms_tape(tape, v, t, freqs.column(0).iter().copied())?;
                tape.matmul(w, terms)
            }
            Self::LocalSincProduct(p) => {
                let (amp, log_v) = (params[0], params[1]);
                let v_all = tape.exp(log_v)?;
                let mut prod: Option<Var> = None;
                for (axis, &k) in p.orders.iter().enumerate() {
                    let v = tape.slice_cols(v_all, axis, axis + 1)?;
                    let term = sinc_terms_tape(tape, v, 1, freqs.column(axis).iter().copied())?;
                    let mut pow = term;
                    for _ in 1..k {
                        pow = tape.mul(pow, term)?;
                    }
                    prod = Some(match prod {
                        Some(acc) => tape.mul(acc, pow)?,
                        None => pow,
                    });
                }
                let prod = prod.expect("at least one axis");
                tape.matmul(amp, prod)
            }
            Self::GaussianBasis3D(_) => {
                let (w, log_sigma) = (params[0], params[1]);
                let s2 = tape.scale(log_sigma, 2.0)?;
                let s2 = tape.exp(s2)?;
                let norms = tape.constant(row(&sq_norms));
                let arg = tape.matmul(s2, norms)?;
                let arg = tape.scale(arg, -2.0 * PI * PI)?;
                let e = tape.exp(arg)?;
                tape.matmul(w, e)
            }
            Self::ShiftInvariantKernel(k) => {
                let log_c = params[0];
                let c = tape.exp(log_c)?;
                match &k.density {
                    SpectralDensity::Gaussian { .. } => {
                        // C (λ²/2π)^{ell/2} exp(-λ² |ξ|² / 2)
                        let log_l = params[1];
                        let l2 = tape.scale(log_l, 2.0)?;
                        let l2 = tape.exp(l2)?;
                        let norms = tape.constant(row(&sq_norms));
                        let quad = tape.matmul(l2, norms)?;
                        let quad = tape.scale(quad, -0.5)?;
                        let lead = tape.scale(log_l, ell as f64)?;
                        let lead = tape.add(lead, log_c)?;
                        let lead = tape.add_scalar(lead, -(ell as f64) / 2.0 * (2.0 * PI).ln())?;
                        let lead = tape.broadcast_col(lead, r)?;
                        let expo = tape.add(quad, lead)?;
                        tape.exp(expo)
                    }
                    SpectralDensity::Cauchy { .. } => {
                        let log_l = params[1];
                        let l = tape.exp(log_l)?;
                        let l2 = tape.square(l)?;
                        let num = tape.broadcast_col(l, r)?;
                        let num = tape.scale(num, 1.0 / PI)?;
                        let mut prod = tape.broadcast_col(c, r)?;
                        for axis in 0..ell {
                            let xi2 = tape.constant(Array2::from_shape_fn((1, r), |(_, j)| freqs[[j, axis]].powi(2)));
                            let den = tape.matmul(l2, xi2)?;
                            let den = tape.add_scalar(den, 1.0)?;
                            let factor = tape.div(num, den)?;
                            prod = tape.mul(prod, factor)?;
                        }
                        Ok(prod)
                    }
                    SpectralDensity::Custom(p) => {
                        let vals: Vec<f64> = freqs.rows().into_iter().map(|x| p(x.as_slice().unwrap_or(&x.to_vec()))).collect();
                        let dens = tape.constant(row(&vals));
                        tape.matmul(c, dens)
                    }
                }
            }
        }
    }
}

/// `T x r` matrix of `sin(2π v_t ξ_j) / (π ξ_j)` from a `T x 1` (or `1 x 1`)
/// radius variable; columns with `ξ_j = 0` take the limit `2 v_t`.
fn sinc_terms_tape(tape: &mut Tape, radii: Var, t: usize, xs: impl Iterator<Item = f64>) -> Result<Var> {
    let xs: Vec<f64> = xs.collect();
    let r = xs.len();
    let xi_row = tape.constant(row(&xs));
    let arg = tape.matmul(radii, xi_row)?;
    let arg = tape.scale(arg, 2.0 * PI)?;
    let s = tape.sin(arg)?;
    let inv = tape.constant(Array2::from_shape_fn((t, r), |(_, j)| {
        if xs[j] == 0.0 {
            0.0
        } else {
            1.0 / (PI * xs[j])
        }
    }));
    let main = tape.mul(s, inv)?;
    if xs.iter().all(|&x| x != 0.0) {
        return Ok(main);
    }
    let mask = tape.constant(Array2::from_shape_fn((t, r), |(_, j)| if xs[j] == 0.0 { 2.0 } else { 0.0 }));
    let limit = tape.broadcast_col(radii, r)?;
    let limit = tape.mul(limit, mask)?;
    tape.add(main, limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck;
    use crate::numerics::{quadrature_inverse_ft, QuadratureSpec};

    #[test]
    fn eval_ft_examples() {
        let gm = SpectralRpe::gaussian_mixture(&[1.0], &[vec![0.0]], &[1.0]).unwrap();
        assert_eq!(gm.eval_ft(&[0.0]), 1.0);
        let ind = SpectralRpe::indicator(1.0, 0.5).unwrap();
        assert_eq!(ind.eval_ft(&[0.0]), 1.0);
        assert!((ind.eval_ft(&[0.5]) - 2.0 / PI).abs() < 1e-15);
        let basis = SpectralRpe::gaussian_basis_3d(&[1.0], &[1.0]).unwrap();
        assert!((basis.eval_ft(&[0.2, 0.0, 0.0]) - 0.454_040_738_727_245).abs() < 1e-12);
    }

    #[test]
    fn sinc_limit_is_continuous() {
        for v in [0.1, 0.5, 3.0, 40.0] {
            let at0 = sinc_term(v, 0.0);
            assert_eq!(at0, 2.0 * v);
            for x in [1e-9, 1e-6, 3e-5] {
                let direct = (2.0 * PI * v * x).sin() / (PI * x);
                assert!((sinc_term(v, x) - direct).abs() <= 1e-12 * at0);
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let ind = SpectralRpe::indicator(2.0, 0.5).unwrap();
        assert_eq!(ind.eval_rpe_closed_form(&[0.3]).unwrap(), 2.0);
        assert_eq!(ind.eval_rpe_closed_form(&[0.6]).unwrap(), 0.0);
        let tri = SpectralRpe::local_sinc_product(1.0, &[0.5], &[2]).unwrap();
        assert!((tri.eval_rpe_closed_form(&[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(tri.eval_rpe_closed_form(&[1.2]).unwrap(), 0.0);
        assert!((tri.eval_rpe_closed_form(&[0.25]).unwrap() - 0.75).abs() < 1e-15);
        let basis = SpectralRpe::gaussian_basis_3d(&[1.0], &[1.0]).unwrap();
        assert!((basis.eval_rpe_closed_form(&[0.0; 3]).unwrap() - 0.063_493_635_934_240_97).abs() < 1e-15);
    }

    #[test]
    fn box_powers_are_piecewise_polynomials() {
        // k = 3: quadratic B-spline scaled by (2v)^2, peak 3/4 * (2v)^2 at 0.
        let v = 0.5;
        assert!((box_convolution_power(3, v, 0.0) - 0.75).abs() < 1e-15);
        assert!((box_convolution_power(3, v, 1.0) - 0.125).abs() < 1e-15);
        assert_eq!(box_convolution_power(3, v, 1.5), 0.0);
        for s in [-1.3, -0.2, 0.7] {
            assert_eq!(box_convolution_power(4, 0.8, s), box_convolution_power(4, 0.8, -s));
        }
        // indicator includes its boundary
        assert_eq!(box_convolution_power(1, 0.5, 0.5), 1.0);
    }

    #[test]
    fn sinc_power_pair_matches_quadrature() {
        for k in [2u32, 3] {
            let rpe = SpectralRpe::local_sinc_product(1.3, &[0.5], &[k]).unwrap();
            for z in [0.0, 0.3, 0.8, 1.2] {
                let q = quadrature_inverse_ft(|x| rpe.eval_ft(x), &[z], QuadratureSpec::new(200.0, 8001)).unwrap();
                let exact = rpe.eval_rpe_closed_form(&[z]).unwrap();
                assert!((q.re - exact).abs() < 2e-2, "k={k} z={z}: {} vs {exact}", q.re);
            }
        }
    }

    #[test]
    fn mixture_with_center_has_cosine_real_part() {
        let rpe = SpectralRpe::gaussian_mixture(&[0.7], &[vec![0.4]], &[0.8]).unwrap();
        assert!(!rpe.is_even());
        for z in [0.0, 0.35, 1.1] {
            let q = quadrature_inverse_ft(|x| rpe.eval_ft(x), &[z], QuadratureSpec::new(8.0, 801)).unwrap();
            assert!((q.re - rpe.eval_rpe_closed_form(&[z]).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn kernels_closed_form() {
        let rbf = SpectralRpe::shift_invariant(2, 1.5, SpectralDensity::Gaussian { log_lengthscale: 0.3f64.ln() }).unwrap();
        let s = [0.2, -0.1];
        let delta: Vec<f64> = s.iter().map(|x| x / (2.0 * PI)).collect();
        let expected = 1.5 * (-(0.04 + 0.01) / (2.0 * 0.09f64)).exp();
        assert!((rbf.eval_rpe_closed_form(&delta).unwrap() - expected).abs() < 1e-14);
        let custom = SpectralRpe::shift_invariant(1, 1.0, SpectralDensity::Custom(Arc::new(|_| 1.0))).unwrap();
        assert!(matches!(custom.eval_rpe_closed_form(&[0.0]), Err(Error::NoClosedForm(_))));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SpectralRpe::indicator(1.0, 0.0).is_err());
        assert!(SpectralRpe::gaussian_basis_3d(&[1.0], &[-1.0]).is_err());
        assert!(SpectralRpe::local_sinc_product(1.0, &[1.0], &[0]).is_err());
        assert!(SpectralRpe::gaussian_mixture(&[1.0, 2.0], &[vec![0.0]], &[1.0]).is_err());
    }

    fn all_variants() -> Vec<SpectralRpe> {
        vec![
            SpectralRpe::gaussian_mixture(&[0.8, -0.3], &[vec![0.1, -0.2], vec![0.3, 0.0]], &[0.7, 1.3]).unwrap(),
            SpectralRpe::local_sinc_sum(&[0.5, -0.2, 0.9], &[1.5, 3.0, 0.7]).unwrap(),
            SpectralRpe::local_sinc_product(0.9, &[0.6, 1.1], &[2, 3]).unwrap(),
            SpectralRpe::gaussian_basis_3d(&[0.4, 1.2], &[0.5, 0.9]).unwrap(),
            SpectralRpe::shift_invariant(2, 0.7, SpectralDensity::Gaussian { log_lengthscale: 0.2 }).unwrap(),
            SpectralRpe::shift_invariant(1, 1.4, SpectralDensity::Cauchy { log_lengthscale: -0.3 }).unwrap(),
        ]
    }

    fn freqs_for(ell: usize) -> Array2<f64> {
        let mut rng = crate::numerics::Rng::seeded(77);
        let mut f = crate::numerics::gaussian_matrix(&mut rng, 6, ell);
        f[[0, 0]] = 0.0;
        f
    }

    #[test]
    fn tape_matches_direct_evaluation() {
        for rpe in all_variants() {
            let freqs = freqs_for(rpe.dim());
            let mut tape = Tape::new();
            let params: Vec<Var> = rpe.parameters().into_iter().map(|p| tape.param(p)).collect();
            let g = rpe.eval_ft_tape(&mut tape, &params, &freqs).unwrap();
            for (j, xi) in freqs.rows().into_iter().enumerate() {
                let direct = rpe.eval_ft(&xi.to_vec());
                let taped = tape.value(g)[[0, j]];
                assert!((direct - taped).abs() <= 1e-12 * (1.0 + direct.abs()), "{}: {direct} vs {taped}", rpe.name());
            }
        }
    }

    #[test]
    fn gradcheck_eval_ft_all_parameters() {
        for rpe in all_variants() {
            let freqs = freqs_for(rpe.dim());
            let base = rpe.parameters();
            for which in 0..base.len() {
                let f = |tape: &mut Tape, x: Var| -> Result<Var> {
                    let params: Vec<Var> = base
                        .iter()
                        .enumerate()
                        .map(|(i, p)| if i == which { x } else { tape.constant(p.clone()) })
                        .collect();
                    let g = rpe.eval_ft_tape(tape, &params, &freqs)?;
                    let w = tape.constant(Array2::from_shape_fn((1, freqs.nrows()), |(_, j)| 0.3 + j as f64));
                    let p = tape.mul(g, w)?;
                    tape.sum(p)
                };
                let err = gradcheck(f, &base[which], 1e-5).unwrap();
                assert!(err < 1e-4, "{} param {which}: {err}", rpe.name());
            }
        }
    }

    #[test]
    fn parameters_round_trip() {
        for mut rpe in all_variants() {
            let p = rpe.parameters();
            rpe.set_parameters(&p).unwrap();
            assert_eq!(rpe.parameters(), p);
            assert_eq!(rpe.parameter_names().len(), p.len());
        }
    }
}
