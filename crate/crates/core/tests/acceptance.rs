//! Exit criteria. Each test prints one `A<n> PASS|FAIL` line straight to
//! stdout (bypassing capture) and then asserts. Tests share one lock since
//! several of them time code or count allocations.

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use ndarray::{Array1, Array2};

use flt::attention::alloc::CountingAllocator;
use flt::attention::{
    causal_performer_attention, favor_features, flt_attention, flt_features, loglinear_toeplitz_attention,
    AttentionInputs, FavorMap, Stabilizer,
};
use flt::autograd::Tape;
use flt::cli::approx::{self, ApproxConfig};
use flt::cli::bench::{self, BenchConfig, Method};
use flt::cli::stats::{mean, median, std_error};
use flt::cli::train::{self, TrainCommandConfig};
use flt::cli::{parse_config, read_config_value};
use flt::model::{generate_task, AttentionKind, Example, ModelConfig, RpeInit, TaskKind, TaskSpec, TinyModel};
use flt::numerics::{gaussian_matrix, quadrature_inverse_ft, QuadratureSpec, Rng};
use flt::spectral::{build_feature_pair, FourierFeatureConfig, PositionSet, SpectralDensity, SpectralRpe, WeightPlacement};

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
}

fn config<T: serde::de::DeserializeOwned>(name: &str) -> T {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    parse_config(read_config_value(Some(&path)).unwrap()).unwrap()
}

fn indicator(v: f64, d: f64) -> f64 {
    if d.abs() <= v {
        1.0
    } else {
        0.0
    }
}

fn gaussian_basis_oracle(sigma: f64, d: &[f64]) -> f64 {
    let r2: f64 = d.iter().map(|x| x * x).sum();
    (2.0 * PI * sigma * sigma).powf(-1.5) * (-r2 / (2.0 * sigma * sigma)).exp()
}

/// Centered 1-D Gaussian `g(ξ) = exp(-ξ²/(2σ²))` transformed by hand.
fn gaussian_mixture_oracle(terms: &[(f64, f64, f64)], d: f64) -> f64 {
    terms
        .iter()
        .map(|&(w, mu, s)| w * (2.0 * PI).sqrt() * s * (-2.0 * PI * PI * s * s * d * d).exp() * (2.0 * PI * mu * d).cos())
        .sum()
}

#[test]
fn a1_ft_pairs_match_quadrature() {
    let _g = serial();
    let mut worst = Vec::new();
    let mut pass = true;

    for sigma in [0.5, 1.0, 2.0] {
        let g = SpectralRpe::gaussian_basis_3d(&[1.0], &[sigma]).unwrap();
        let spec = QuadratureSpec::new(8.0 / (2.0 * PI * sigma), 65);
        let mut err = 0.0f64;
        for k in 0..20 {
            let t = 0.15 * k as f64 * sigma;
            let z = [t, 0.5 * t, -0.3 * t];
            let q = quadrature_inverse_ft(|xi| g.eval_ft(xi), &z, spec).unwrap();
            let closed = g.eval_rpe_closed_form(&z).unwrap();
            assert!((closed - gaussian_basis_oracle(sigma, &z)).abs() < 1e-12 * closed.abs().max(1.0));
            err = err.max((q.re - closed).abs()).max(q.im.abs());
        }
        pass &= err < 1e-6;
        worst.push(format!("gb3d(σ={sigma}) {err:.1e}"));
    }

    for sigma in [0.5, 1.0] {
        let g = SpectralRpe::gaussian_mixture(&[1.0], &[vec![0.0]], &[sigma]).unwrap();
        let spec = QuadratureSpec::new(10.0 * sigma, 801);
        let mut err = 0.0f64;
        for k in 0..20 {
            let z = 0.05 * k as f64 / sigma;
            let q = quadrature_inverse_ft(|xi| g.eval_ft(xi), &[z], spec).unwrap();
            let closed = g.eval_rpe_closed_form(&[z]).unwrap();
            assert!((closed - gaussian_mixture_oracle(&[(1.0, 0.0, sigma)], z)).abs() < 1e-12);
            err = err.max((q.re - closed).abs()).max(q.im.abs());
        }
        pass &= err < 1e-6;
        worst.push(format!("gm(σ={sigma}) {err:.1e}"));
    }

    let sinc: Vec<(&str, SpectralRpe, Box<dyn Fn(f64) -> f64>)> = vec![
        ("indicator", SpectralRpe::indicator(1.0, 2.0).unwrap(), Box::new(|d| indicator(2.0, d))),
        (
            "sinc_sum",
            SpectralRpe::local_sinc_sum(&[0.5, 1.0], &[1.2, 2.6]).unwrap(),
            Box::new(|d| 0.5 * indicator(1.2, d) + indicator(2.6, d)),
        ),
        (
            "sinc_product",
            SpectralRpe::local_sinc_product(1.0, &[0.5], &[2]).unwrap(),
            Box::new(|d: f64| (1.0 - d.abs()).max(0.0)),
        ),
    ];
    let spec = QuadratureSpec::new(200.0, 8001);
    for (name, g, oracle) in sinc {
        let mut err = 0.0f64;
        for k in 0..20 {
            let z = -3.9 + 0.4 * k as f64;
            let q = quadrature_inverse_ft(|xi| g.eval_ft(xi), &[z], spec).unwrap();
            let closed = g.eval_rpe_closed_form(&[z]).unwrap();
            assert!((closed - oracle(z)).abs() < 1e-12, "{name} closed form at {z}");
            err = err.max((q.re - closed).abs()).max(q.im.abs());
        }
        pass &= err < 2e-2;
        worst.push(format!("{name} {err:.1e}"));
    }

    report("A1", pass, &format!("ft pairs, max |quadrature - closed form|: {}", worst.join(", ")));
    assert!(pass);
}

#[test]
fn a2_rpe_estimator_is_unbiased() {
    let _g = serial();
    let line = |step: f64| (0..20).map(|k| vec![step * k as f64]).collect::<Vec<_>>();
    type Oracle = Box<dyn Fn(&[f64]) -> f64>;
    let cases: Vec<(SpectralRpe, f64, Vec<Vec<f64>>, Oracle)> = vec![
        (SpectralRpe::indicator(1.0, 2.0).unwrap(), 4.0, line(0.37), Box::new(|d| indicator(2.0, d[0]))),
        (
            SpectralRpe::local_sinc_sum(&[0.5, 1.0], &[1.2, 2.6]).unwrap(),
            4.0,
            line(0.37),
            Box::new(|d| 0.5 * indicator(1.2, d[0]) + indicator(2.6, d[0])),
        ),
        (
            SpectralRpe::local_sinc_product(1.0, &[0.5], &[2]).unwrap(),
            8.0,
            line(0.06),
            Box::new(|d| (1.0 - d[0].abs()).max(0.0)),
        ),
        (
            SpectralRpe::gaussian_mixture(&[1.0, -0.4], &[vec![0.0], vec![0.3]], &[1.0, 0.5]).unwrap(),
            1.0,
            line(0.05),
            Box::new(|d| gaussian_mixture_oracle(&[(1.0, 0.0, 1.0), (-0.4, 0.3, 0.5)], d[0])),
        ),
        (
            SpectralRpe::gaussian_basis_3d(&[1.0, 0.5], &[1.0, 0.6]).unwrap(),
            1.0 / (1.2 * PI),
            (0..20).map(|k| {
                let t = 0.15 * k as f64;
                vec![t, 0.5 * t, -0.3 * t]
            }).collect(),
            Box::new(|d| gaussian_basis_oracle(1.0, d) + 0.5 * gaussian_basis_oracle(0.6, d)),
        ),
        (
            SpectralRpe::shift_invariant(2, 1.0, SpectralDensity::Gaussian { log_lengthscale: 0.0 }).unwrap(),
            1.0,
            (0..20).map(|k| vec![0.02 * k as f64, -0.01 * k as f64]).collect(),
            Box::new(|d| (-2.0 * PI * PI * (d[0] * d[0] + d[1] * d[1])).exp()),
        ),
    ];

    let root = Rng::new(0, 0xacc2);
    let mut pass = true;
    let mut detail = Vec::new();
    let labels = ["indicator", "local_sinc_sum", "local_sinc_product", "gaussian_mixture", "gaussian_basis_3d", "shift_invariant"];
    for ((g, tau, deltas, oracle), label) in cases.into_iter().zip(labels) {
        let ell = g.dim();
        let pts = Array2::from_shape_fn((deltas.len() + 1, ell), |(i, a)| if i == 0 { 0.0 } else { deltas[i - 1][a] });
        let pos = PositionSet::from_points(pts).unwrap();
        let fc = FourierFeatureConfig {
            tau,
            ..FourierFeatureConfig::new(16)
        };
        let stream = root.split_named(g.name());
        let mut samples = (0..deltas.len()).map(|_| Vec::with_capacity(500)).collect::<Vec<_>>();
        for draw in 0..500u64 {
            let pair = build_feature_pair(&g, &fc, &pos, &mut stream.split(draw)).unwrap();
            for (k, s) in samples.iter_mut().enumerate() {
                s.push(pair.estimate_f(k + 1, 0));
            }
        }
        let within = deltas
            .iter()
            .zip(&samples)
            .filter(|(d, s)| (mean(s) - oracle(d)).abs() <= 3.0 * std_error(s))
            .count();
        pass &= within * 100 >= 95 * deltas.len();
        detail.push(format!("{label} {within}/20"));
    }
    report("A2", pass, &format!("rpe estimator within 3 SE: {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn a3_favor_is_unbiased() {
    let _g = serial();
    let d = 8;
    let mut rng = Rng::new(11, 0xacc3);
    let ball = |rng: &mut Rng| {
        let x = gaussian_matrix(rng, 1, d);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x * (rng.uniform() / norm)
    };
    let mut xs = Array2::zeros((20, d));
    let mut ys = Array2::zeros((20, d));
    for i in 0..20 {
        xs.row_mut(i).assign(&ball(&mut rng).row(0));
        ys.row_mut(i).assign(&ball(&mut rng).row(0));
    }
    let mut samples = (0..20).map(|_| Vec::with_capacity(100)).collect::<Vec<_>>();
    for draw in 0..100u64 {
        let map = FavorMap::sample(4096, d, false, &mut rng.split(draw)).unwrap();
        let px = favor_features(&xs, &map, Stabilizer::None).unwrap().values;
        let py = favor_features(&ys, &map, Stabilizer::None).unwrap().values;
        for (i, s) in samples.iter_mut().enumerate() {
            s.push(px.row(i).dot(&py.row(i)));
        }
    }
    let within = (0..20)
        .filter(|&i| {
            let exact: f64 = xs.row(i).iter().zip(ys.row(i)).map(|(a, b)| a * b).sum::<f64>().exp();
            (mean(&samples[i]) - exact).abs() <= 3.0 * std_error(&samples[i])
        })
        .count();
    let pass = within == 20;
    report("A3", pass, &format!("favor kernel within 3 SE on {within}/20 pairs (m=4096, 100 redraws)"));
    assert!(pass);
}

#[test]
fn a4_flt_converges_to_exact_attention() {
    let _g = serial();
    let cfg: ApproxConfig = config("approx_error.json");
    assert_eq!((cfg.lens.clone(), cfg.d_qk, cfg.d_v, cfg.num_seeds), (vec![128], 16, 16, 10));
    let rows = approx::measure(&cfg).unwrap();
    let budgets = [(32, 64), (64, 128), (128, 256), (256, 512)];
    let mut pass = true;
    let mut detail = Vec::new();
    for scenario in &cfg.scenarios {
        let medians: Vec<f64> = budgets
            .iter()
            .map(|(r, m)| {
                let errs: Vec<f64> = rows
                    .iter()
                    .filter(|x| x.variant == scenario.name() && x.r == r.to_string() && x.m == m.to_string())
                    .map(|x| x.frob_rel_err)
                    .collect();
                assert_eq!(errs.len(), 10);
                median(&errs)
            })
            .collect();
        let monotone = medians.windows(2).all(|w| w[1] < w[0]);
        let ok = monotone && medians[3] < 0.10;
        pass &= ok;
        let shown: Vec<String> = medians.iter().map(|m| format!("{m:.3}")).collect();
        detail.push(format!(
            "{} {} [{}]",
            scenario.name(),
            if ok { "ok" } else { "over" },
            shown.join(" -> ")
        ));
    }
    report("A4", pass, &format!("median rel frob error over (r,m)=(32,64)..(256,512): {}", detail.join("; ")));
    assert!(pass, "{}", detail.join("; "));
}

#[test]
fn a5_scaling_slopes_and_no_quadratic_buffer() {
    let _g = serial();
    let cfg: BenchConfig = config("bench.json");
    let report_data = bench::measure_all(&cfg, &mut std::io::sink()).unwrap();
    let slope = |m: Method| {
        report_data
            .slopes
            .iter()
            .find(|s| s.method == m)
            .and_then(|s| s.slope)
            .unwrap_or(f64::NAN)
    };
    let exact = slope(Method::Exact);
    let flt = slope(Method::Flt);
    let loglinear = slope(Method::Loglinear);
    let quadratic: Vec<usize> = report_data
        .largest_alloc_words
        .iter()
        .filter(|(m, l, words)| *m == Method::Flt && *words >= l * l)
        .map(|(_, l, _)| *l)
        .collect();
    let counted = report_data.largest_alloc_words.iter().any(|(m, _, w)| *m == Method::Flt && *w > 0);
    let pass = (1.7..=2.3).contains(&exact)
        && (0.8..=1.3).contains(&flt)
        && (0.9..=1.5).contains(&loglinear)
        && counted
        && quadratic.is_empty();
    report(
        "A5",
        pass,
        &format!("slopes exact {exact:.3}, flt {flt:.3}, loglinear {loglinear:.3}; flt L×L allocations at {quadratic:?}"),
    );
    assert!(pass);
}

#[test]
fn a6_flt_learns_the_offset_kernel() {
    let _g = serial();
    let cfg: TrainCommandConfig = config("learnability.json");
    assert_eq!((cfg.task.kind, cfg.task.len, cfg.task.window, cfg.num_seeds), (TaskKind::OffsetKernel1d, 256, 8, 5));
    assert!(matches!(cfg.model.rpe, RpeInit::LocalSincSum { .. }));
    let summary = train::run(&cfg, &mut std::io::sink()).unwrap();
    let pairs = summary.pairs();
    assert_eq!(pairs.len(), 5);
    let mut good = 0;
    let mut rows = Vec::new();
    for (seed, f, p) in &pairs {
        let corr = summary.get(AttentionKind::Flt, *seed).and_then(|r| r.kernel_corr).unwrap_or(f64::NAN);
        if f / p <= 0.8 && corr > 0.8 {
            good += 1;
        }
        rows.push(format!("seed {seed}: ratio {:.3} corr {corr:.3}", f / p));
    }
    let mean_ratio = mean(&pairs.iter().map(|(_, f, p)| f / p).collect::<Vec<_>>());
    let pass = good >= 3 && mean_ratio <= 0.8;
    report("A6", pass, &format!("{good}/5 seeds with ratio <= 0.8 and corr > 0.8, mean ratio {mean_ratio:.3} ({})", rows.join(", ")));
    assert!(pass);
}

/// Reverse-mode gradient of the full loss against central differences of
/// the plain forward pass, entry by entry.
fn worst_gradient_error(model: &TinyModel, examples: &[Example], h: f64) -> (String, f64) {
    let params = model.parameters();
    let names = model.parameter_names();
    let mut tape = Tape::new();
    let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = model.loss_tape(&mut tape, &vars, examples).unwrap();
    let grads = tape.backward(loss).unwrap();
    let mut probe = model.clone();
    let mut worst = (String::new(), 0.0f64);
    for (i, p) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], p);
        for (idx, &a) in analytic.indexed_iter() {
            let mut shifted = params.clone();
            shifted[i][idx] = p[idx] + h;
            probe.set_parameters(&shifted).unwrap();
            let up = probe.loss(examples).unwrap();
            shifted[i][idx] = p[idx] - h;
            probe.set_parameters(&shifted).unwrap();
            let down = probe.loss(examples).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if err > worst.1 {
                worst = (format!("{}{idx:?}", names[i]), err);
            }
        }
    }
    worst
}

#[test]
fn a7_loss_gradients_match_finite_differences() {
    let _g = serial();
    let cases = [
        (TaskKind::OffsetKernel1d, RpeInit::LocalSincSum { terms: 3 }),
        (TaskKind::CausalCopy, RpeInit::GaussianMixture { terms: 2 }),
        (TaskKind::Neighborhood3d, RpeInit::GaussianBasis3d { terms: 2 }),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (kind, rpe) in cases {
        for placement in [WeightPlacement::PhiSide, WeightPlacement::Split] {
            let task = TaskSpec {
                kind,
                len: 12,
                d_in: 2,
                window: 2,
                train_size: 2,
                val_size: 1,
                seed: 5,
                ..TaskSpec::default()
            };
            let data = generate_task(&task).unwrap();
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
                        placement,
                        ..FourierFeatureConfig::new(4)
                    },
                    rpe_init_scale: 0.3,
                    causal: task.is_causal(),
                    seed: 5,
                    ..ModelConfig::default()
                },
                2,
                2,
                12,
            )
            .unwrap();
            assert_eq!(model.config().attention, AttentionKind::Flt);
            let (at, err) = worst_gradient_error(&model, &data.train, 1e-5);
            pass &= err < 1e-4;
            detail.push(format!("{}/{placement:?} {err:.1e} at {at}", kind.name()));
        }
    }
    report("A7", pass, &format!("worst relative gradient error: {}", detail.join(", ")));
    assert!(pass);
}

fn dense_causal(qp: &Array2<f64>, kp: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let l = qp.nrows();
    let mut out = Array2::zeros((l, v.ncols()));
    for i in 0..l {
        let mut den = 0.0;
        let mut num = Array1::<f64>::zeros(v.ncols());
        for j in 0..=i {
            let a = qp.row(i).dot(&kp.row(j));
            den += a;
            num.scaled_add(a, &v.row(j));
        }
        out.row_mut(i).assign(&(num / den));
    }
    out
}

fn dense_toeplitz(qp: &Array2<f64>, kp: &Array2<f64>, v: &Array2<f64>, exp_row: &[f64]) -> Array2<f64> {
    let l = qp.nrows();
    let mut out = Array2::zeros((l, v.ncols()));
    for i in 0..l {
        let mut den = 0.0;
        let mut num = Array1::<f64>::zeros(v.ncols());
        for j in 0..l {
            let a = exp_row[i + l - 1 - j] * qp.row(i).dot(&kp.row(j));
            den += a;
            num.scaled_add(a, &v.row(j));
        }
        out.row_mut(i).assign(&(num / den));
    }
    out
}

fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn a8_baselines_are_exact() {
    let _g = serial();
    let mut rng = Rng::new(3, 0xacc8);
    let mut causal_err = 0.0f64;
    let mut flt_causal_err = 0.0f64;
    for l in [1, 2, 7, 33, 64] {
        let qp = gaussian_matrix(&mut rng, l, 6).mapv(f64::exp);
        let kp = gaussian_matrix(&mut rng, l, 6).mapv(f64::exp);
        let v = gaussian_matrix(&mut rng, l, 3);
        let fast = causal_performer_attention(qp.view(), kp.view(), v.view()).unwrap().values;
        causal_err = causal_err.max(max_diff(&fast, &dense_causal(&qp, &kp, &v)));

        let q = gaussian_matrix(&mut rng, l, 4) * 0.5;
        let k = gaussian_matrix(&mut rng, l, 4) * 0.5;
        let inp = AttentionInputs::new(q, k, v.clone(), PositionSet::sequential(l)).unwrap();
        let g = SpectralRpe::local_sinc_sum(&[0.3], &[3.0]).unwrap();
        let pair = build_feature_pair(&g, &FourierFeatureConfig { tau: 0.1, ..FourierFeatureConfig::new(8) }, &inp.positions, &mut rng).unwrap();
        let map = FavorMap::sample(16, pair.width() + 4, false, &mut rng).unwrap();
        let fast = flt_attention(&inp, &pair, &map, true).unwrap().values;
        let (fq, fk) = flt_features(&inp, &pair, &map).unwrap();
        flt_causal_err = flt_causal_err.max(max_diff(&fast, &dense_causal(&fq, &fk, &v)));
    }

    let mut toeplitz_err = 0.0f64;
    for l in [1, 5, 100, 255, 256] {
        let qp = gaussian_matrix(&mut rng, l, 8).mapv(|x| (0.5 * x).exp());
        let kp = gaussian_matrix(&mut rng, l, 8).mapv(|x| (0.5 * x).exp());
        let v = gaussian_matrix(&mut rng, l, 4);
        let exp_row: Vec<f64> = (0..2 * l - 1).map(|_| (0.5 * rng.normal()).exp()).collect();
        let fast = loglinear_toeplitz_attention(qp.view(), kp.view(), v.view(), &exp_row).unwrap().values;
        toeplitz_err = toeplitz_err.max(max_diff(&fast, &dense_toeplitz(&qp, &kp, &v, &exp_row)));
    }

    let pass = causal_err <= 1e-12 && flt_causal_err <= 1e-12 && toeplitz_err <= 1e-8;
    report(
        "A8",
        pass,
        &format!("causal prefix sums {causal_err:.1e} (flt {flt_causal_err:.1e}) <= 1e-12, toeplitz {toeplitz_err:.1e} <= 1e-8"),
    );
    assert!(pass);
}
