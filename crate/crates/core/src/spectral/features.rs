use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{PositionSet, SpectralRpe};
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::{cis, principal_sqrt, Complex, ComplexMatrix, Rng};

/// How the per-frequency weight `c_j = g(ξ_j)/p(ξ_j)` is split between the
/// two feature matrices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPlacement {
    /// A square root of `c_j` on both sides. In the real representation
    /// `N1` gets `sign(c_j)·√|c_j|` and `N2` gets `√|c_j|`.
    Split,
    /// The full signed `c_j` on `N1`, 1 on `N2`.
    #[default]
    PhiSide,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// `exp(±2πi z·ξ_j)` features, width `r`.
    Complex,
    /// `(cos, sin)` pairs, width `2r`, laid out as `[cos block | sin block]`.
    #[default]
    TrigReal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FourierFeatureConfig {
    pub num_features: usize,
    /// Standard deviation of the Gaussian frequency sampler.
    pub tau: f64,
    pub antithetic: bool,
    pub placement: WeightPlacement,
    pub representation: Representation,
}

impl Default for FourierFeatureConfig {
    fn default() -> Self {
        Self {
            num_features: 64,
            tau: 1.0,
            antithetic: false,
            placement: WeightPlacement::PhiSide,
            representation: Representation::TrigReal,
        }
    }
}

impl FourierFeatureConfig {
    pub fn new(num_features: usize) -> Self {
        Self {
            num_features,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 {
            return Err(Error::invalid("need at least one frequency"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.antithetic && self.num_features % 2 == 1 {
            return Err(Error::invalid(format!(
                "antithetic sampling needs an even frequency count, got {}",
                self.num_features
            )));
        }
        Ok(())
    }

    /// Width of `N1`/`N2` under this representation.
    pub fn width(&self) -> usize {
        match self.representation {
            Representation::Complex => self.num_features,
            Representation::TrigReal => 2 * self.num_features,
        }
    }

    /// Density of `N(0, τ² I_ell)` at `xi`.
    pub fn density(&self, xi: &[f64]) -> f64 {
        let t2 = self.tau * self.tau;
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        (2.0 * PI * t2).powf(-(xi.len() as f64) / 2.0) * (-r2 / (2.0 * t2)).exp()
    }
}

/// Draws `r x ell` frequencies from `N(0, τ² I)`; antithetic draws fill
/// consecutive rows with `ξ, -ξ`.
pub fn sample_frequencies(cfg: &FourierFeatureConfig, ell: usize, rng: &mut Rng) -> Result<Array2<f64>> {
    cfg.validate()?;
    let r = cfg.num_features;
    let mut out = Array2::zeros((r, ell));
    if cfg.antithetic {
        for pair in 0..r / 2 {
            for a in 0..ell {
                let x = cfg.tau * rng.normal();
                out[[2 * pair, a]] = x;
                out[[2 * pair + 1, a]] = -x;
            }
        }
    } else {
        out.iter_mut().for_each(|x| *x = cfg.tau * rng.normal());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMatrices {
    Real { n1: Array2<f64>, n2: Array2<f64> },
    Complex { n1: ComplexMatrix, n2: ComplexMatrix },
}

/// Low-rank factors `N1`, `N2` with `N1 N2ᵀ ≈ N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RpeFeaturePair {
    pub features: FeatureMatrices,
    pub frequencies: Array2<f64>,
    /// Importance weights `c_j = g(ξ_j)/p(ξ_j)`.
    pub weights: Vec<f64>,
    pub config: FourierFeatureConfig,
}

/// Samples frequencies from `rng` and builds the feature pair.
pub fn build_feature_pair(
    g: &SpectralRpe,
    cfg: &FourierFeatureConfig,
    pos: &PositionSet,
    rng: &mut Rng,
) -> Result<RpeFeaturePair> {
    let freqs = sample_frequencies(cfg, pos.dim(), rng)?;
    build_feature_pair_with(g, cfg, pos, freqs)
}

/// Builds the feature pair on given frequencies.
pub fn build_feature_pair_with(
    g: &SpectralRpe,
    cfg: &FourierFeatureConfig,
    pos: &PositionSet,
    freqs: Array2<f64>,
) -> Result<RpeFeaturePair> {
    cfg.validate()?;
    if pos.dim() != g.dim() || freqs.ncols() != g.dim() {
        return Err(Error::shape("build_feature_pair", &[pos.dim(), freqs.ncols()], &[g.dim(), g.dim()]));
    }
    if freqs.nrows() != cfg.num_features {
        return Err(Error::shape("build_feature_pair", &[freqs.nrows()], &[cfg.num_features]));
    }
    let r = cfg.num_features;
    let weights: Vec<f64> = freqs
        .rows()
        .into_iter()
        .map(|xi| {
            let xi = xi.to_vec();
            g.eval_ft(&xi) / cfg.density(&xi)
        })
        .collect();
    let phase = phases(pos, &freqs);
    let norm = 1.0 / (r as f64).sqrt();
    let l = pos.len();
    let features = match cfg.representation {
        Representation::TrigReal => {
            let (a, b): (Vec<f64>, Vec<f64>) = match cfg.placement {
                WeightPlacement::PhiSide => (weights.clone(), vec![1.0; r]),
                WeightPlacement::Split => weights.iter().map(|&c| (c.signum() * c.abs().sqrt(), c.abs().sqrt())).unzip(),
            };
            let trig = |coef: &[f64]| {
                Array2::from_shape_fn((l, 2 * r), |(i, k)| {
                    let j = k % r;
                    let t = if k < r { phase[[i, j]].cos() } else { phase[[i, j]].sin() };
                    norm * coef[j] * t
                })
            };
            FeatureMatrices::Real { n1: trig(&a), n2: trig(&b) }
        }
        Representation::Complex => {
            let (a, b): (Vec<Complex>, Vec<Complex>) = match cfg.placement {
                WeightPlacement::PhiSide => weights.iter().map(|&c| (Complex::new(c, 0.0), Complex::new(1.0, 0.0))).unzip(),
                WeightPlacement::Split => weights
                    .iter()
                    .map(|&c| {
                        let s = principal_sqrt(Complex::new(c, 0.0));
                        (s, s)
                    })
                    .unzip(),
            };
            FeatureMatrices::Complex {
                n1: Array2::from_shape_fn((l, r), |(i, j)| cis(phase[[i, j]]) * a[j] * norm),
                n2: Array2::from_shape_fn((l, r), |(i, j)| cis(-phase[[i, j]]) * b[j] * norm),
            }
        }
    };
    Ok(RpeFeaturePair {
        features,
        frequencies: freqs,
        weights,
        config: *cfg,
    })
}

/// `2π r_i·ξ_j` as an `L x r` matrix.
fn phases(pos: &PositionSet, freqs: &Array2<f64>) -> Array2<f64> {
    pos.points().dot(&freqs.t()) * (2.0 * PI)
}

impl RpeFeaturePair {
    pub fn len(&self) -> usize {
        match &self.features {
            FeatureMatrices::Real { n1, .. } => n1.nrows(),
            FeatureMatrices::Complex { n1, .. } => n1.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.config.width()
    }

    /// Bilinear `row_i(N1)·row_j(N2)`.
    pub fn estimate_f_complex(&self, i: usize, j: usize) -> Complex {
        match &self.features {
            FeatureMatrices::Real { n1, n2 } => Complex::new(n1.row(i).dot(&n2.row(j)), 0.0),
            FeatureMatrices::Complex { n1, n2 } => n1.row(i).iter().zip(n2.row(j)).map(|(a, b)| a * b).sum(),
        }
    }

    /// Real part of the estimate of `f(r_i - r_j)`.
    pub fn estimate_f(&self, i: usize, j: usize) -> f64 {
        self.estimate_f_complex(i, j).re
    }

    /// Real feature matrices, or an error for the complex representation.
    pub fn real_features(&self) -> Result<(&Array2<f64>, &Array2<f64>)> {
        match &self.features {
            FeatureMatrices::Real { n1, n2 } => Ok((n1, n2)),
            FeatureMatrices::Complex { .. } => Err(Error::Unsupported(
                "this path needs the real (trig) feature representation".into(),
            )),
        }
    }

    /// Dense estimate `N̂ = Re(N1 N2ᵀ)`.
    pub fn estimated_mask(&self) -> Array2<f64> {
        match &self.features {
            FeatureMatrices::Real { n1, n2 } => n1.dot(&n2.t()),
            FeatureMatrices::Complex { n1, n2 } => n1.dot(&n2.t()).mapv(|z| z.re),
        }
    }
}

/// Real feature matrices on the tape, differentiable in the RPE parameters
/// with the frequencies held fixed. Only the trig representation is supported.
pub fn feature_pair_tape(
    g: &SpectralRpe,
    tape: &mut Tape,
    params: &[Var],
    cfg: &FourierFeatureConfig,
    pos: &PositionSet,
    freqs: &Array2<f64>,
) -> Result<(Var, Var)> {
    if cfg.representation != Representation::TrigReal {
        return Err(Error::Unsupported("tape features need the trig representation".into()));
    }
    let r = freqs.nrows();
    let l = pos.len();
    let inv_p: Vec<f64> = freqs.rows().into_iter().map(|xi| 1.0 / cfg.density(&xi.to_vec())).collect();
    let g_row = g.eval_ft_tape(tape, params, freqs)?;
    let inv_p = tape.constant(Array2::from_shape_vec((1, r), inv_p).expect("row"));
    let c = tape.mul(g_row, inv_p)?;
    let phase = phases(pos, freqs);
    let norm = 1.0 / (r as f64).sqrt();
    let cos = phase.mapv(|x| norm * x.cos());
    let sin = phase.mapv(|x| norm * x.sin());
    let (a, b) = match cfg.placement {
        WeightPlacement::PhiSide => (c, None),
        WeightPlacement::Split => {
            let signs = tape.value(c).mapv(f64::signum);
            let abs = tape.square(c)?;
            let abs = tape.sqrt(abs)?;
            let root = tape.sqrt(abs)?;
            let signs = tape.constant(signs);
            (tape.mul(root, signs)?, Some(root))
        }
    };
    let weighted = |tape: &mut Tape, coef: Var| -> Result<Var> {
        let coef = tape.broadcast_row(coef, l)?;
        let cv = tape.constant(cos.clone());
        let sv = tape.constant(sin.clone());
        let cc = tape.mul(cv, coef)?;
        let ss = tape.mul(sv, coef)?;
        tape.concat(&[cc, ss])
    };
    let n1 = weighted(tape, a)?;
    let n2 = match b {
        Some(b) => weighted(tape, b)?,
        None => {
            let mut both = Array2::zeros((l, 2 * r));
            both.slice_mut(ndarray::s![.., ..r]).assign(&cos);
            both.slice_mut(ndarray::s![.., r..]).assign(&sin);
            tape.constant(both)
        }
    };
    Ok((n1, n2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck;
    use approx::assert_abs_diff_eq;

    fn cfg(r: usize, rep: Representation, placement: WeightPlacement) -> FourierFeatureConfig {
        FourierFeatureConfig {
            num_features: r,
            tau: 1.0,
            antithetic: false,
            placement,
            representation: rep,
        }
    }

    #[test]
    fn antithetic_pairs_are_exact_negatives() {
        let c = FourierFeatureConfig {
            antithetic: true,
            ..FourierFeatureConfig::new(4)
        };
        let f = sample_frequencies(&c, 2, &mut Rng::seeded(5)).unwrap();
        for a in 0..2 {
            assert_eq!(f[[1, a]], -f[[0, a]]);
            assert_eq!(f[[3, a]], -f[[2, a]]);
        }
        let odd = FourierFeatureConfig { num_features: 3, ..c };
        assert!(sample_frequencies(&odd, 1, &mut Rng::seeded(5)).is_err());
    }

    #[test]
    fn frequency_variance_and_determinism() {
        let c = FourierFeatureConfig::new(100_000);
        let f = sample_frequencies(&c, 1, &mut Rng::new(3, 9)).unwrap();
        let mean = f.mean().unwrap();
        let var = f.mapv(|x| (x - mean).powi(2)).sum() / (f.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
        let again = sample_frequencies(&c, 1, &mut Rng::new(3, 9)).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn trig_identity_when_g_equals_p() {
        // Gaussian mixture with w = (2π)^{-1/2}, σ = 1 is exactly the N(0,1) density.
        let g = SpectralRpe::gaussian_mixture(&[(2.0 * PI).powf(-0.5)], &[vec![0.0]], &[1.0]).unwrap();
        let pos = PositionSet::sequential(5);
        let pair = build_feature_pair(&g, &cfg(16, Representation::TrigReal, WeightPlacement::PhiSide), &pos, &mut Rng::seeded(1)).unwrap();
        for &c in &pair.weights {
            assert_abs_diff_eq!(c, 1.0, epsilon = 1e-14);
        }
        for (i, j) in [(0, 0), (1, 4), (3, 2)] {
            let expected: f64 = pair
                .frequencies
                .column(0)
                .iter()
                .map(|x| (2.0 * PI * (i as f64 - j as f64) * x).cos())
                .sum::<f64>()
                / 16.0;
            assert_abs_diff_eq!(pair.estimate_f(i, j), expected, epsilon = 1e-13);
        }
    }

    #[test]
    fn single_token_split_rows_coincide() {
        let g = SpectralRpe::gaussian_basis_3d(&[1.0], &[1.0]).unwrap();
        let pos = PositionSet::from_points(Array2::zeros((1, 3))).unwrap();
        for rep in [Representation::TrigReal, Representation::Complex] {
            let pair = build_feature_pair(&g, &cfg(8, rep, WeightPlacement::Split), &pos, &mut Rng::seeded(2)).unwrap();
            match &pair.features {
                FeatureMatrices::Real { n1, n2 } => assert_eq!(n1, n2),
                FeatureMatrices::Complex { n1, n2 } => assert_eq!(n1, n2),
            }
        }
    }

    #[test]
    fn diagonal_estimate_is_mean_weight() {
        let g = SpectralRpe::gaussian_basis_3d(&[0.5], &[0.7]).unwrap();
        let pos = PositionSet::from_points(Array2::from_shape_fn((3, 3), |(i, a)| (i * 3 + a) as f64 * 0.1)).unwrap();
        let pair = build_feature_pair(&g, &cfg(32, Representation::TrigReal, WeightPlacement::PhiSide), &pos, &mut Rng::seeded(3)).unwrap();
        let mean_c = pair.weights.iter().sum::<f64>() / 32.0;
        for i in 0..3 {
            assert_abs_diff_eq!(pair.estimate_f(i, i), mean_c, epsilon = 1e-13);
        }
    }

    #[test]
    fn antithetic_even_g_has_real_complex_estimate() {
        let g = SpectralRpe::indicator(1.0, 2.0).unwrap();
        let c = FourierFeatureConfig {
            antithetic: true,
            ..cfg(32, Representation::Complex, WeightPlacement::Split)
        };
        let pair = build_feature_pair(&g, &c, &PositionSet::sequential(6), &mut Rng::seeded(4)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!(pair.estimate_f_complex(i, j).im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn representations_agree_for_nonnegative_g() {
        let g = SpectralRpe::gaussian_basis_3d(&[1.0, 0.3], &[0.6, 1.4]).unwrap();
        let pos = PositionSet::from_points(Array2::from_shape_fn((4, 3), |(i, a)| ((i + 2 * a) as f64).sin())).unwrap();
        let freqs = sample_frequencies(&FourierFeatureConfig::new(24), 3, &mut Rng::seeded(6)).unwrap();
        let pairs: Vec<RpeFeaturePair> = [
            (Representation::Complex, WeightPlacement::Split),
            (Representation::TrigReal, WeightPlacement::PhiSide),
            (Representation::TrigReal, WeightPlacement::Split),
        ]
        .iter()
        .map(|&(rep, pl)| build_feature_pair_with(&g, &cfg(24, rep, pl), &pos, freqs.clone()).unwrap())
        .collect();
        for i in 0..4 {
            for j in 0..4 {
                let base = pairs[0].estimate_f(i, j);
                for p in &pairs[1..] {
                    assert!((p.estimate_f(i, j) - base).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tape_features_match_direct_build() {
        let g = SpectralRpe::local_sinc_sum(&[0.4, -0.7], &[1.5, 3.5]).unwrap();
        let pos = PositionSet::sequential(7);
        for placement in [WeightPlacement::PhiSide, WeightPlacement::Split] {
            let c = cfg(10, Representation::TrigReal, placement);
            let freqs = sample_frequencies(&c, 1, &mut Rng::seeded(8)).unwrap();
            let pair = build_feature_pair_with(&g, &c, &pos, freqs.clone()).unwrap();
            let (n1, n2) = pair.real_features().unwrap();
            let mut tape = Tape::new();
            let params: Vec<Var> = g.parameters().into_iter().map(|p| tape.param(p)).collect();
            let (t1, t2) = feature_pair_tape(&g, &mut tape, &params, &c, &pos, &freqs).unwrap();
            assert!((tape.value(t1) - n1).iter().all(|d| d.abs() < 1e-12));
            assert!((tape.value(t2) - n2).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn gradcheck_features_wrt_rpe_parameters() {
        let variants = [
            SpectralRpe::local_sinc_sum(&[0.4, -0.7], &[1.5, 3.5]).unwrap(),
            SpectralRpe::gaussian_basis_3d(&[0.8, 0.2], &[0.5, 1.1]).unwrap(),
            SpectralRpe::gaussian_mixture(&[0.6], &[vec![0.2]], &[0.9]).unwrap(),
        ];
        for g in variants {
            let ell = g.dim();
            let pos = PositionSet::from_points(Array2::from_shape_fn((4, ell), |(i, a)| (i as f64) * 0.7 - a as f64 * 0.3)).unwrap();
            for placement in [WeightPlacement::PhiSide, WeightPlacement::Split] {
                let c = cfg(6, Representation::TrigReal, placement);
                let freqs = sample_frequencies(&c, ell, &mut Rng::seeded(11)).unwrap();
                let base = g.parameters();
                for which in 0..base.len() {
                    let f = |tape: &mut Tape, x: Var| -> Result<Var> {
                        let params: Vec<Var> = base
                            .iter()
                            .enumerate()
                            .map(|(k, p)| if k == which { x } else { tape.constant(p.clone()) })
                            .collect();
                        let (n1, n2) = feature_pair_tape(&g, tape, &params, &c, &pos, &freqs)?;
                        let n2t = tape.transpose(n2)?;
                        let m = tape.matmul(n1, n2t)?;
                        let w = tape.constant(Array2::from_shape_fn((4, 4), |(i, j)| 1.0 + (i * 4 + j) as f64 * 0.1));
                        let m = tape.mul(m, w)?;
                        tape.sum(m)
                    };
                    let err = gradcheck(f, &base[which], 1e-6).unwrap();
                    assert!(err < 1e-4, "{} {placement:?} param {which}: {err}", g.name());
                }
            }
        }
    }
}
