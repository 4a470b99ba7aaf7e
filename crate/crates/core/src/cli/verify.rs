//! `verify`: the invariant suite. Each property reports a measured value
//! against a threshold and passes iff `measured <= threshold`.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::approx::{Instance, Scenario};
use super::stats::{mean, std_error};
use crate::attention::alloc::measure;
use crate::attention::{
    causal_performer_attention, exact_rpe_attention, exact_rpe_mask, favor_features, flt_attention,
    loglinear_toeplitz_attention, performer_attention, performer_on_inputs, AttentionInputs, FavorMap, Stabilizer,
};
use crate::error::Result;
use crate::model::{generate_task, loss_gradcheck, train, ModelConfig, RpeInit, TaskKind, TaskSpec, TinyModel, TrainConfig};
use crate::numerics::{
    fft, gaussian_matrix, principal_sqrt, quadrature_inverse_ft, Complex, QuadratureSpec, Rng,
};
use crate::spectral::{
    build_feature_pair, build_feature_pair_with, sample_frequencies, FourierFeatureConfig, PositionSet,
    Representation, SpectralDensity, SpectralRpe, WeightPlacement,
};

/// Deliberate defects for checking that the suite catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Negates the `ξ = 0` limit of every sinc factor.
    SincLimitSignFlip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Only properties whose name contains this substring run.
    pub filter: Option<String>,
    pub inject_fault: Option<Fault>,
    /// Frequency redraws for the RPE unbiasedness check.
    pub redraws: usize,
    /// Projection redraws and feature count for the FAVOR check.
    pub favor_redraws: usize,
    pub favor_features: usize,
    /// Trials for the antithetic variance comparison.
    pub variance_trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            filter: None,
            inject_fault: None,
            redraws: 500,
            favor_redraws: 100,
            favor_features: 4096,
            variance_trials: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.threshold
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

type Property = fn(&VerifyConfig) -> Result<Vec<Check>>;

/// Every property, in run order.
pub fn properties() -> Vec<(&'static str, Property)> {
    vec![
        ("ft_pair_consistency", ft_pair_consistency),
        ("rpe_unbiasedness", rpe_unbiasedness),
        ("favor_unbiasedness", favor_unbiasedness),
        ("antithetic_variance", antithetic_variance),
        ("representation_equivalence", representation_equivalence),
        ("oracle_row_stochasticity", oracle_row_stochasticity),
        ("oracle_shift_invariance", oracle_shift_invariance),
        ("causality", causality),
        ("prefix_sum_exactness", prefix_sum_exactness),
        ("toeplitz_exactness", toeplitz_exactness),
        ("exact_factorization", exact_factorization),
        ("zero_rpe_reduction", zero_rpe_reduction),
        ("linear_memory", linear_memory),
        ("gradcheck", gradcheck_model),
        ("json_round_trip", json_round_trip),
        ("training_determinism", training_determinism),
        ("fft_parseval", fft_parseval),
        ("principal_sqrt", principal_sqrt_check),
    ]
}

pub fn verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    for (name, prop) in properties() {
        if cfg.filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        report.checks.extend(prop(cfg)?);
    }
    Ok(report)
}

pub fn run(cfg: &VerifyConfig, out: &mut dyn Write) -> Result<VerifyReport> {
    let report = verify(cfg)?;
    if let Some(f) = cfg.inject_fault {
        writeln!(out, "# fault injected: {f:?}")?;
    }
    for c in &report.checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{status} {:<44} measured {:.3e} <= {:.1e}", c.name, c.measured, c.threshold)?;
    }
    let failed = report.failures().count();
    writeln!(out, "{} checks, {} failed", report.checks.len(), failed)?;
    for c in report.failures() {
        writeln!(out, "failed: {}", c.name)?;
    }
    Ok(report)
}

fn has_sinc(g: &SpectralRpe) -> bool {
    matches!(g, SpectralRpe::LocalSincSum(_) | SpectralRpe::LocalSincProduct(_))
}

/// `g(ξ)` with the configured fault applied.
fn eval_ft_with(g: &SpectralRpe, xi: &[f64], fault: Option<Fault>) -> f64 {
    let v = g.eval_ft(xi);
    match fault {
        Some(Fault::SincLimitSignFlip) if has_sinc(g) => {
            let zeros = xi.iter().filter(|&&x| x == 0.0).count();
            if zeros % 2 == 1 {
                -v
            } else {
                v
            }
        }
        _ => v,
    }
}

fn ft_pair_consistency(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut compare = |name: String, g: SpectralRpe, spec: QuadratureSpec, zs: Vec<Vec<f64>>, tol: f64| -> Result<()> {
        let mut worst = 0.0f64;
        for z in &zs {
            let q = quadrature_inverse_ft(|xi| eval_ft_with(&g, xi, cfg.inject_fault), z, spec)?;
            worst = worst.max((q.re - g.eval_rpe_closed_form(z)?).abs());
        }
        checks.push(Check::new(format!("ft_pair_consistency/{name}"), worst, tol));
        Ok(())
    };
    for sigma in [0.5, 1.0, 2.0] {
        let radius = 8.0 / (2.0 * PI * sigma);
        let zs = (0..20)
            .map(|k| {
                let t = 0.15 * k as f64 * sigma;
                vec![t, 0.5 * t, -0.3 * t]
            })
            .collect();
        compare(
            format!("gaussian_basis_3d(sigma={sigma})"),
            SpectralRpe::gaussian_basis_3d(&[1.0], &[sigma])?,
            QuadratureSpec::new(radius, 65),
            zs,
            1e-6,
        )?;
    }
    for sigma in [0.5, 1.0] {
        let zs = (0..20).map(|k| vec![0.05 * k as f64 / sigma]).collect();
        compare(
            format!("gaussian_mixture(sigma={sigma})"),
            SpectralRpe::gaussian_mixture(&[1.0], &[vec![0.0]], &[sigma])?,
            QuadratureSpec::new(10.0 * sigma, 801),
            zs,
            1e-6,
        )?;
    }
    let sinc_grid = || (0..20).map(|k| vec![-3.9 + 0.4 * k as f64]).collect::<Vec<_>>();
    let slow = QuadratureSpec::new(200.0, 8001);
    compare("indicator".into(), SpectralRpe::indicator(1.0, 2.0)?, slow, sinc_grid(), 2e-2)?;
    compare("local_sinc_sum".into(), SpectralRpe::local_sinc_sum(&[0.5, 1.0], &[1.2, 2.6])?, slow, sinc_grid(), 2e-2)?;
    compare(
        "local_sinc_product".into(),
        SpectralRpe::local_sinc_product(1.0, &[0.5], &[2])?,
        slow,
        sinc_grid(),
        2e-2,
    )?;
    Ok(checks)
}

/// Closed-form variants with sampler scales and 20 displacements each.
/// Label, RPE, sampler width and displacements to test.
type UnbiasednessCase = (&'static str, SpectralRpe, f64, Vec<Vec<f64>>);

fn unbiasedness_cases() -> Result<Vec<UnbiasednessCase>> {
    let line = |step: f64| (0..20).map(|k| vec![step * k as f64]).collect::<Vec<_>>();
    Ok(vec![
        ("indicator", SpectralRpe::indicator(1.0, 2.0)?, 4.0, line(0.37)),
        ("local_sinc_sum", SpectralRpe::local_sinc_sum(&[0.5, 1.0], &[1.2, 2.6])?, 4.0, line(0.37)),
        ("local_sinc_product", SpectralRpe::local_sinc_product(1.0, &[0.5], &[2])?, 8.0, line(0.06)),
        ("gaussian_mixture", SpectralRpe::gaussian_mixture(&[1.0, -0.4], &[vec![0.0], vec![0.3]], &[1.0, 0.5])?, 1.0, line(0.05)),
        (
            "gaussian_basis_3d",
            SpectralRpe::gaussian_basis_3d(&[1.0, 0.5], &[1.0, 0.6])?,
            1.0 / (1.2 * PI),
            (0..20).map(|k| {
                let t = 0.15 * k as f64;
                vec![t, 0.5 * t, -0.3 * t]
            }).collect(),
        ),
        (
            "shift_invariant_kernel",
            SpectralRpe::shift_invariant(2, 1.0, SpectralDensity::Gaussian { log_lengthscale: 0.0 })?,
            1.0,
            (0..20).map(|k| vec![0.02 * k as f64, -0.01 * k as f64]).collect(),
        ),
    ])
}

fn rpe_unbiasedness(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let root = Rng::new(cfg.seed, 0x0b1a5);
    let mut checks = Vec::new();
    for (label, g, tau, deltas) in unbiasedness_cases()? {
        let ell = g.dim();
        let mut pts = Array2::zeros((deltas.len() + 1, ell));
        for (i, d) in deltas.iter().enumerate() {
            for a in 0..ell {
                pts[[i + 1, a]] = d[a];
            }
        }
        let pos = PositionSet::from_points(pts)?;
        let fc = FourierFeatureConfig {
            tau,
            ..FourierFeatureConfig::new(16)
        };
        let stream = root.split_named(g.name());
        let mut samples = (0..deltas.len()).map(|_| Vec::with_capacity(cfg.redraws)).collect::<Vec<_>>();
        for draw in 0..cfg.redraws {
            let pair = build_feature_pair(&g, &fc, &pos, &mut stream.split(draw as u64))?;
            for (k, s) in samples.iter_mut().enumerate() {
                s.push(pair.estimate_f(k + 1, 0));
            }
        }
        let mut misses = 0;
        for (d, s) in deltas.iter().zip(&samples) {
            let exact = g.eval_rpe_closed_form(d)?;
            if (mean(s) - exact).abs() > 3.0 * std_error(s) {
                misses += 1;
            }
        }
        checks.push(Check::new(
            format!("rpe_unbiasedness/{label}"),
            misses as f64 / deltas.len() as f64,
            0.05,
        ));
    }
    Ok(checks)
}

fn favor_unbiasedness(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let d = 8;
    let mut rng = Rng::new(cfg.seed, 0xfa40);
    let on_ball = |rng: &mut Rng| {
        let x = gaussian_matrix(rng, 1, d);
        let r = rng.uniform() / x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x * r
    };
    let pairs: Vec<(Array2<f64>, Array2<f64>)> = (0..20).map(|_| (on_ball(&mut rng), on_ball(&mut rng))).collect();
    let mut xs = Array2::zeros((20, d));
    let mut ys = Array2::zeros((20, d));
    for (i, (x, y)) in pairs.iter().enumerate() {
        xs.row_mut(i).assign(&x.row(0));
        ys.row_mut(i).assign(&y.row(0));
    }
    let mut samples = (0..20).map(|_| Vec::with_capacity(cfg.favor_redraws)).collect::<Vec<_>>();
    let maps = rng.split_named("maps");
    for draw in 0..cfg.favor_redraws {
        let map = FavorMap::sample(cfg.favor_features, d, false, &mut maps.split(draw as u64))?;
        let px = favor_features(&xs, &map, Stabilizer::None)?.values;
        let py = favor_features(&ys, &map, Stabilizer::None)?.values;
        for (i, s) in samples.iter_mut().enumerate() {
            s.push(px.row(i).dot(&py.row(i)));
        }
    }
    let misses = (0..20)
        .filter(|&i| {
            let exact = xs.row(i).dot(&ys.row(i)).exp();
            (mean(&samples[i]) - exact).abs() > 3.0 * std_error(&samples[i])
        })
        .count();
    Ok(vec![Check::new("favor_unbiasedness", misses as f64 / 20.0, 0.0)])
}

/// Antithetic `r` against iid `r/2`: both use `r/2` independent Gaussian
/// draws. Compares mean squared error of the complex estimator.
fn antithetic_variance(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let root = Rng::new(cfg.seed, 0xa471);
    let mut checks = Vec::new();
    let cases = [
        (SpectralRpe::indicator(1.0, 2.0)?, 1.0 / (4.0 * PI)),
        (SpectralRpe::gaussian_basis_3d(&[1.0], &[1.0])?, 1.0 / (2.0 * PI)),
    ];
    for (g, tau) in cases {
        let ell = g.dim();
        let pts = Array2::from_shape_fn((12, ell), |(i, a)| 0.3 * i as f64 * (1.0 - 0.4 * a as f64));
        let pos = PositionSet::from_points(pts)?;
        let exact = exact_rpe_mask(&g, &pos)?.n;
        let base = FourierFeatureConfig {
            tau,
            representation: Representation::Complex,
            ..FourierFeatureConfig::new(8)
        };
        let anti = FourierFeatureConfig {
            num_features: 16,
            antithetic: true,
            ..base
        };
        let stream = root.split_named(g.name());
        let mut err = [0.0, 0.0];
        for t in 0..cfg.variance_trials {
            for (slot, fc) in [(0, anti), (1, base)] {
                let pair = build_feature_pair(&g, &fc, &pos, &mut stream.split(t as u64))?;
                for i in 0..pos.len() {
                    for j in 0..pos.len() {
                        err[slot] += (pair.estimate_f_complex(i, j) - exact[[i, j]]).norm_sqr();
                    }
                }
            }
        }
        checks.push(Check::new(format!("antithetic_variance/{}", g.name()), err[0] / err[1], 1.0));
    }
    Ok(checks)
}

fn representation_equivalence(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let g = SpectralRpe::gaussian_basis_3d(&[0.7, 0.4], &[0.8, 1.5])?;
    let mut rng = Rng::new(cfg.seed, 0x4e9);
    let pos = PositionSet::from_points(Array2::from_shape_fn((10, 3), |_| rng.uniform_range(-1.0, 1.0)))?;
    let trig = FourierFeatureConfig {
        tau: 0.2,
        ..FourierFeatureConfig::new(24)
    };
    let freqs = sample_frequencies(&trig, 3, &mut rng)?;
    let complex = FourierFeatureConfig {
        representation: Representation::Complex,
        placement: WeightPlacement::Split,
        ..trig
    };
    let a = build_feature_pair_with(&g, &trig, &pos, freqs.clone())?.estimated_mask();
    let b = build_feature_pair_with(&g, &complex, &pos, freqs)?.estimated_mask();
    let diff = (&a - &b).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(vec![Check::new("representation_equivalence", diff, 1e-12)])
}

fn gb_inputs(len: usize, d: usize, dv: usize, seed: u64) -> Result<(AttentionInputs, SpectralRpe)> {
    let inst = Instance::new(
        &Scenario::GaussianBasis3d {
            weights: vec![1.0],
            sigmas: vec![1.0],
            extent: 4.0,
        },
        len,
        d,
        dv,
        seed,
    )?;
    Ok((inst.inputs, inst.rpe))
}

fn oracle_row_stochasticity(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let (mut inp, g) = gb_inputs(40, 4, 1, cfg.seed)?;
    inp.v = Array2::eye(40);
    let mask = exact_rpe_mask(&g, &inp.positions)?;
    let mut worst = 0.0f64;
    for causal in [false, true] {
        let w = exact_rpe_attention(&inp, &mask, causal)?;
        for row in w.rows() {
            worst = worst.max((row.sum() - 1.0).abs());
            if row.iter().any(|&x| x < 0.0) {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(vec![Check::new("oracle_row_stochasticity", worst, 1e-12)])
}

fn oracle_shift_invariance(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let (inp, g) = gb_inputs(48, 4, 3, cfg.seed)?;
    let mut mask = exact_rpe_mask(&g, &inp.positions)?;
    let before = exact_rpe_attention(&inp, &mask, false)?;
    mask.n += 3.7;
    let after = exact_rpe_attention(&inp, &mask, false)?;
    let diff = (&before - &after).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(vec![Check::new("oracle_shift_invariance", diff, 1e-10)])
}

fn perturb_future(inp: &AttentionInputs, from: usize, rng: &mut Rng) -> AttentionInputs {
    let mut out = inp.clone();
    let l = inp.len();
    for i in from..l {
        for m in [&mut out.q, &mut out.k, &mut out.v] {
            m.row_mut(i).mapv_inplace(|x| x + 5.0 * rng.normal());
        }
    }
    out
}

fn causality(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut rng = Rng::new(cfg.seed, 0xca5a);
    let l = 32;
    let cut = 17;
    let inst = Instance::new(&Scenario::Indicator { amplitude: 1.0, radius: 3.0 }, l, 4, 3, cfg.seed)?;
    let changed = perturb_future(&inst.inputs, cut, &mut rng);
    let mask = exact_rpe_mask(&inst.rpe, &inst.inputs.positions)?;
    let prefix_diff = |a: &Array2<f64>, b: &Array2<f64>| {
        (0..cut).flat_map(|i| (0..a.ncols()).map(move |c| (i, c))).fold(0.0f64, |m, (i, c)| m.max((a[[i, c]] - b[[i, c]]).abs()))
    };
    let dense = prefix_diff(
        &exact_rpe_attention(&inst.inputs, &mask, true)?,
        &exact_rpe_attention(&changed, &mask, true)?,
    );
    let fc = FourierFeatureConfig {
        tau: 1.0 / (6.0 * PI),
        placement: WeightPlacement::Split,
        ..FourierFeatureConfig::new(16)
    };
    let pair = build_feature_pair(&inst.rpe, &fc, &inst.inputs.positions, &mut rng)?;
    let map = FavorMap::sample(32, pair.width() + 4, false, &mut rng)?;
    let linear = prefix_diff(
        &flt_attention(&inst.inputs, &pair, &map, true)?.values,
        &flt_attention(&changed, &pair, &map, true)?.values,
    );
    Ok(vec![
        Check::new("causality/dense", dense, 0.0),
        Check::new("causality/prefix_sum", linear, 1e-12),
    ])
}

/// Dense `D⁻¹ tril(Q' K'ᵀ) V`.
fn dense_causal_linear(qp: &Array2<f64>, kp: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let mut a = qp.dot(&kp.t());
    for i in 0..a.nrows() {
        for j in i + 1..a.ncols() {
            a[[i, j]] = 0.0;
        }
    }
    let d = a.sum_axis(ndarray::Axis(1));
    let mut out = a.dot(v);
    for (mut row, s) in out.rows_mut().into_iter().zip(d) {
        row /= s;
    }
    out
}

fn prefix_sum_exactness(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut rng = Rng::new(cfg.seed, 0x9f1);
    let mut worst = 0.0f64;
    for l in [1, 7, 64] {
        let qp = gaussian_matrix(&mut rng, l, 12).mapv(|x| (0.5 * x).exp());
        let kp = gaussian_matrix(&mut rng, l, 12).mapv(|x| (0.5 * x).exp());
        let v = gaussian_matrix(&mut rng, l, 5);
        let fast = causal_performer_attention(qp.view(), kp.view(), v.view())?.values;
        let slow = dense_causal_linear(&qp, &kp, &v);
        worst = worst.max((&fast - &slow).iter().fold(0.0f64, |m, x| m.max(x.abs())));
    }
    Ok(vec![Check::new("prefix_sum_exactness", worst, 1e-12)])
}

fn toeplitz_exactness(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut rng = Rng::new(cfg.seed, 0x7e0);
    let l = 128;
    let qp = gaussian_matrix(&mut rng, l, 6).mapv(|x| (0.5 * x).exp());
    let kp = gaussian_matrix(&mut rng, l, 6).mapv(|x| (0.5 * x).exp());
    let v = gaussian_matrix(&mut rng, l, 4);
    let row: Vec<f64> = (0..2 * l - 1).map(|_| rng.normal().exp()).collect();
    let fast = loglinear_toeplitz_attention(qp.view(), kp.view(), v.view(), &row)?.values;
    let mut a = qp.dot(&kp.t());
    for ((i, j), x) in a.indexed_iter_mut() {
        *x *= row[i + l - 1 - j];
    }
    let d = a.sum_axis(ndarray::Axis(1));
    let mut slow = a.dot(&v);
    for (mut r, s) in slow.rows_mut().into_iter().zip(d) {
        r /= s;
    }
    let hadamard = (&fast - &slow).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let flat = loglinear_toeplitz_attention(qp.view(), kp.view(), v.view(), &vec![1.0; 2 * l - 1])?.values;
    let plain = performer_attention(qp.view(), kp.view(), v.view())?.values;
    let ones = (&flat - &plain).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(vec![
        Check::new("toeplitz_exactness/dense_hadamard", hadamard, 1e-8),
        Check::new("toeplitz_exactness/flat_row", ones, 1e-10),
    ])
}

fn exact_factorization(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for scenario in super::approx::ApproxConfig::default().scenarios {
        let inst = Instance::new(&scenario, 64, 8, 4, cfg.seed)?;
        let err = crate::numerics::relative_frobenius_error(&inst.surrogate()?, &inst.exact);
        checks.push(Check::new(format!("exact_factorization/{}", scenario.name()), err, 1e-10));
    }
    Ok(checks)
}

fn zero_rpe_reduction(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let inst = Instance::new(&Scenario::Zero, 40, 4, 3, cfg.seed)?;
    let fc = FourierFeatureConfig {
        placement: WeightPlacement::Split,
        ..FourierFeatureConfig::new(8)
    };
    let (flt, map) = inst.flt(&fc, 64, false)?;
    let w = fc.width();
    let perf = performer_on_inputs(&inst.inputs, &map.columns(w, w + 4), false)?.values;
    let diff = (&flt - &perf).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(vec![Check::new("zero_rpe_reduction", diff, 1e-12)])
}

/// Peak heap of `flt_attention` relative to `L (m + width + d_QK + d_V)`
/// words; NaN when the counting allocator is not installed.
fn linear_memory(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let (l, d, dv, m, r) = (2048, 8, 8, 64, 16);
    let inst = Instance::new(&Scenario::Indicator { amplitude: 1.0, radius: 8.0 }, 8, d, dv, cfg.seed)?;
    let mut rng = Rng::new(cfg.seed, 0x3e3);
    let pos = PositionSet::sequential(l);
    let inp = AttentionInputs::new(
        gaussian_matrix(&mut rng, l, d),
        gaussian_matrix(&mut rng, l, d),
        gaussian_matrix(&mut rng, l, dv),
        pos,
    )?;
    let fc = FourierFeatureConfig {
        tau: 1.0 / (16.0 * PI),
        ..FourierFeatureConfig::new(r)
    };
    let pair = build_feature_pair(&inst.rpe, &fc, &inp.positions, &mut rng)?;
    let map = FavorMap::sample(m, pair.width() + d, false, &mut rng)?;
    let (out, stats) = measure(|| flt_attention(&inp, &pair, &map, false));
    out?;
    let budget = (l * (m + pair.width() + d + dv)) as f64;
    let ratio = if stats.peak_bytes == 0 { f64::NAN } else { stats.peak_words() as f64 / budget };
    let square = if stats.peak_bytes == 0 {
        f64::NAN
    } else {
        stats.largest_words() as f64 / (l * l) as f64
    };
    Ok(vec![
        Check::new("linear_memory/peak_over_linear_budget", ratio, 8.0),
        Check::new("linear_memory/largest_over_l_squared", square, 0.5),
    ])
}

fn gradcheck_model(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let cases = [
        ("offset_kernel_1d", TaskKind::OffsetKernel1d, RpeInit::LocalSincSum { terms: 2 }),
        ("causal_copy", TaskKind::CausalCopy, RpeInit::GaussianMixture { terms: 2 }),
        ("neighborhood_3d", TaskKind::Neighborhood3d, RpeInit::GaussianBasis3d { terms: 2 }),
    ];
    for (name, kind, rpe) in cases {
        let task = TaskSpec {
            kind,
            len: 10,
            d_in: 2,
            window: 2,
            train_size: 2,
            val_size: 1,
            seed: cfg.seed,
            ..TaskSpec::default()
        };
        let data = generate_task(&task)?;
        let model = TinyModel::new(
            ModelConfig {
                layers: 2,
                heads: 2,
                d_model: 4,
                d_qk: 2,
                d_v: 2,
                favor_features: 8,
                rpe,
                features: FourierFeatureConfig {
                    tau: 0.3,
                    ..FourierFeatureConfig::new(4)
                },
                rpe_init_scale: 0.3,
                causal: task.is_causal(),
                seed: cfg.seed,
                ..ModelConfig::default()
            },
            2,
            2,
            10,
        )?;
        let worst = loss_gradcheck(&model, &data.train, 1e-5)?.into_iter().fold(0.0f64, |m, (_, e)| m.max(e));
        checks.push(Check::new(format!("gradcheck/{name}"), worst, 1e-4));
    }
    Ok(checks)
}

fn json_round_trip(_cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let variants = [
        SpectralRpe::gaussian_mixture(&[0.8, -0.3], &[vec![0.1], vec![-0.7]], &[0.7, 1.3])?,
        SpectralRpe::local_sinc_sum(&[0.5, -0.2], &[1.5, 0.1])?,
        SpectralRpe::local_sinc_product(0.9, &[0.6, 1.1], &[2, 3])?,
        SpectralRpe::gaussian_basis_3d(&[0.4, 1.2], &[0.5, 0.9])?,
        SpectralRpe::shift_invariant(2, 0.7, SpectralDensity::Cauchy { log_lengthscale: 0.2 })?,
    ];
    let mut mismatches = 0;
    for g in variants {
        let back = SpectralRpe::from_json(&g.to_json()?)?;
        let same = back.name() == g.name()
            && back.parameters().iter().zip(g.parameters()).all(|(a, b)| {
                a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            });
        if !same {
            mismatches += 1;
        }
    }
    Ok(vec![Check::new("json_round_trip", f64::from(mismatches), 0.0)])
}

fn training_determinism(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let task = TaskSpec {
        len: 12,
        d_in: 2,
        window: 2,
        train_size: 4,
        val_size: 2,
        seed: cfg.seed,
        ..TaskSpec::default()
    };
    let data = generate_task(&task)?;
    let model_cfg = ModelConfig {
        heads: 1,
        d_model: 4,
        d_qk: 2,
        d_v: 2,
        favor_features: 8,
        features: FourierFeatureConfig::new(4),
        seed: cfg.seed,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        steps: 3,
        eval_every: 1,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let mut bits = Vec::new();
    for _ in 0..2 {
        let mut m = TinyModel::new(model_cfg, 2, 2, 12)?;
        let rep = train(&mut m, &data, &tc)?;
        bits.push(rep.records.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>());
    }
    let differing = bits[0].iter().zip(&bits[1]).filter(|(a, b)| a != b).count() + bits[0].len().abs_diff(bits[1].len());
    Ok(vec![Check::new("training_determinism", differing as f64, 0.0)])
}

fn fft_parseval(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut rng = Rng::new(cfg.seed, 0xff7);
    let mut worst = 0.0f64;
    for n in [1usize, 8, 256, 4096] {
        let x: Vec<Complex> = (0..n).map(|_| Complex::new(rng.normal(), rng.normal())).collect();
        let y = fft(&x, false)?;
        let ex: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let ey: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        worst = worst.max((ex - ey).abs() / ex);
    }
    Ok(vec![Check::new("fft_parseval", worst, 1e-10)])
}

fn principal_sqrt_check(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut rng = Rng::new(cfg.seed, 0x5a7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let z = Complex::new(rng.normal() * 10.0, rng.normal() * 10.0);
        let s = principal_sqrt(z);
        let err = (s * s - z).norm() / z.norm().max(1e-300);
        worst = worst.max(if s.re < 0.0 { f64::INFINITY } else { err });
    }
    let neg = principal_sqrt(Complex::new(-4.0, 0.0));
    worst = worst.max((neg - Complex::new(0.0, 2.0)).norm());
    Ok(vec![Check::new("principal_sqrt", worst, 1e-12)])
}
