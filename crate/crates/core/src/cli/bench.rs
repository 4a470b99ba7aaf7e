//! `bench`: wall time and peak heap of each attention method over an `L`
//! grid, with per-method log-log slopes.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::stats::{loglog_slope, median};
use super::write_csv;
use crate::attention::alloc::{measure, AllocStats};
use crate::attention::{
    concat_scaled, exact_attention, favor_features, flt_attention, loglinear_toeplitz_attention, performer_on_inputs,
    toeplitz_rpe_row, AttentionInputs, Bias, FavorMap, Stabilizer,
};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Rng};
use crate::spectral::{build_feature_pair, FourierFeatureConfig, PositionSet, RpeFeaturePair, SpectralRpe, WeightPlacement};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Performer,
    Flt,
    Loglinear,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Performer => "performer",
            Self::Flt => "flt",
            Self::Loglinear => "loglinear",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub exact: Vec<usize>,
    pub performer: Vec<usize>,
    pub flt: Vec<usize>,
    pub loglinear: Vec<usize>,
}

impl Default for Grids {
    fn default() -> Self {
        let linear: Vec<usize> = (10..=15).map(|k| 1 << k).collect();
        Self {
            exact: (9..=13).map(|k| 1 << k).collect(),
            performer: linear.clone(),
            flt: linear.clone(),
            loglinear: linear,
        }
    }
}

impl Grids {
    pub fn get(&self, m: Method) -> &[usize] {
        match m {
            Method::Exact => &self.exact,
            Method::Performer => &self.performer,
            Method::Flt => &self.flt,
            Method::Loglinear => &self.loglinear,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub grids: Grids,
    pub d_qk: usize,
    pub d_v: usize,
    /// FAVOR feature count.
    pub m: usize,
    /// Fourier frequency count.
    pub r: usize,
    /// Indicator RPE radius on token indices.
    pub radius: f64,
    pub reps: usize,
    pub warmup: usize,
    /// Points whose median is below this are left out of the slope fit.
    pub min_median_ns: u64,
    pub output: Option<std::path::PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            methods: vec![Method::Exact, Method::Performer, Method::Flt, Method::Loglinear],
            grids: Grids::default(),
            d_qk: 16,
            d_v: 16,
            m: 64,
            r: 16,
            radius: 8.0,
            reps: 5,
            warmup: 1,
            min_median_ns: 10_000,
            output: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 5 {
            return Err(Error::Config(format!("bench needs at least 5 repetitions, got {}", self.reps)));
        }
        if self.d_qk == 0 || self.d_v == 0 || self.m == 0 || self.r == 0 {
            return Err(Error::Config("d_qk, d_v, m and r must be positive".into()));
        }
        if self.methods.iter().any(|&m| self.grids.get(m).contains(&0)) {
            return Err(Error::Config("L must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchRecord {
    pub method: String,
    #[serde(rename = "L")]
    pub len: usize,
    pub d_qk: usize,
    pub d_v: usize,
    pub m: usize,
    pub r: usize,
    pub seed: u64,
    pub rep: usize,
    pub wall_ns: u64,
    pub alloc_peak_words: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub method: Method,
    pub used: Vec<usize>,
    pub dropped: Vec<usize>,
    pub slope: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub slopes: Vec<SlopeFit>,
    /// Largest single allocation per `(method, L)`, in words.
    pub largest_alloc_words: Vec<(Method, usize, usize)>,
}

/// Inputs and everything that can be built ahead of the timed call.
struct Prepared {
    inputs: AttentionInputs,
    toeplitz_row: Vec<f64>,
    exp_row: Vec<f64>,
    pair: RpeFeaturePair,
    flt_map: FavorMap,
    qk_map: FavorMap,
}

fn prepare(cfg: &BenchConfig, len: usize) -> Result<Prepared> {
    let root = Rng::new(cfg.seed, 0xbe7c).split(len as u64);
    let mut data = root.split_named("inputs");
    let s = 1.0 / (cfg.d_qk as f64).sqrt();
    let q = gaussian_matrix(&mut data, len, cfg.d_qk) * s;
    let k = gaussian_matrix(&mut data, len, cfg.d_qk) * s;
    let v = gaussian_matrix(&mut data, len, cfg.d_v);
    let inputs = AttentionInputs::new(q, k, v, PositionSet::sequential(len))?;
    let rpe = SpectralRpe::indicator(1.0, cfg.radius)?;
    let toeplitz_row = toeplitz_rpe_row(&rpe, &inputs.positions)?;
    let exp_row = toeplitz_row.iter().map(|x| x.exp()).collect();
    let fc = FourierFeatureConfig {
        num_features: cfg.r,
        tau: 1.0 / (2.0 * PI * cfg.radius),
        placement: WeightPlacement::Split,
        ..FourierFeatureConfig::default()
    };
    let pair = build_feature_pair(&rpe, &fc, &inputs.positions, &mut root.split_named("frequencies"))?;
    let flt_map = FavorMap::sample(cfg.m, pair.width() + cfg.d_qk, false, &mut root.split_named("favor"))?;
    let qk_map = FavorMap::sample(cfg.m, cfg.d_qk, false, &mut root.split_named("favor_qk"))?;
    Ok(Prepared {
        inputs,
        toeplitz_row,
        exp_row,
        pair,
        flt_map,
        qk_map,
    })
}

fn call(method: Method, p: &Prepared) -> Result<Array2<f64>> {
    let inp = &p.inputs;
    match method {
        Method::Exact => exact_attention(
            inp.q.view(),
            inp.k.view(),
            inp.v.view(),
            Bias::Toeplitz(&p.toeplitz_row),
            false,
        ),
        Method::Performer => Ok(performer_on_inputs(inp, &p.qk_map, false)?.values),
        Method::Flt => Ok(flt_attention(inp, &p.pair, &p.flt_map, false)?.values),
        Method::Loglinear => {
            let empty = Array2::zeros((inp.len(), 0));
            let q = concat_scaled(&empty, &inp.q, inp.d_qk())?;
            let k = concat_scaled(&empty, &inp.k, inp.d_qk())?;
            let qp = favor_features(&q, &p.qk_map, Stabilizer::PerRow)?.values;
            let kp = favor_features(&k, &p.qk_map, Stabilizer::Global)?.values;
            Ok(loglinear_toeplitz_attention(qp.view(), kp.view(), inp.v.view(), &p.exp_row)?.values)
        }
    }
}

fn timed(method: Method, p: &Prepared) -> Result<(u64, AllocStats)> {
    let start = Instant::now();
    let (out, stats) = measure(|| call(method, p));
    let ns = start.elapsed().as_nanos() as u64;
    std::hint::black_box(out?);
    Ok((ns, stats))
}

pub fn measure_all(cfg: &BenchConfig, log: &mut dyn Write) -> Result<BenchReport> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut slopes = Vec::new();
    let mut largest = Vec::new();
    for &method in &cfg.methods {
        let mut points = Vec::new();
        let mut dropped = Vec::new();
        for &len in cfg.grids.get(method) {
            let prepared = prepare(cfg, len)?;
            for _ in 0..cfg.warmup {
                timed(method, &prepared)?;
            }
            let mut times = Vec::with_capacity(cfg.reps);
            let mut biggest = 0;
            for rep in 0..cfg.reps {
                let (ns, stats) = timed(method, &prepared)?;
                times.push(ns as f64);
                biggest = biggest.max(stats.largest_words());
                let (m, r) = match method {
                    Method::Exact => (0, 0),
                    Method::Flt => (cfg.m, cfg.r),
                    Method::Performer | Method::Loglinear => (cfg.m, 0),
                };
                records.push(BenchRecord {
                    method: method.name().to_string(),
                    len,
                    d_qk: cfg.d_qk,
                    d_v: cfg.d_v,
                    m,
                    r,
                    seed: cfg.seed,
                    rep,
                    wall_ns: ns,
                    alloc_peak_words: stats.peak_words(),
                });
            }
            largest.push((method, len, biggest));
            let med = median(&times);
            if med < cfg.min_median_ns as f64 {
                writeln!(
                    log,
                    "warning: {} at L={len} has median {med:.0} ns, below the {} ns timer floor; left out of the fit",
                    method.name(),
                    cfg.min_median_ns
                )?;
                dropped.push(len);
            } else {
                points.push((len as f64, med));
            }
        }
        slopes.push(SlopeFit {
            method,
            used: points.iter().map(|p| p.0 as usize).collect(),
            dropped,
            slope: loglog_slope(&points),
        });
    }
    Ok(BenchReport {
        records,
        slopes,
        largest_alloc_words: largest,
    })
}

pub fn run(cfg: &BenchConfig, summary: &mut dyn Write) -> Result<BenchReport> {
    let report = measure_all(cfg, summary)?;
    super::with_output(cfg.output.as_deref(), |out| {
        write_csv(out, "bench", cfg, &[cfg.seed], &report.records)
    })?;
    writeln!(summary, "method      slope   L used")?;
    for fit in &report.slopes {
        let slope = fit.slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
        writeln!(summary, "{:<10} {slope:>6}   {:?}", fit.method.name(), fit.used)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::relative_frobenius_error;

    fn tiny() -> BenchConfig {
        BenchConfig {
            grids: Grids {
                exact: vec![16, 32],
                performer: vec![16, 32],
                flt: vec![16, 32],
                loglinear: vec![16, 32],
            },
            d_qk: 4,
            d_v: 2,
            m: 8,
            r: 4,
            radius: 2.0,
            min_median_ns: 0,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn records_cover_grid() {
        let r = measure_all(&tiny(), &mut std::io::sink()).unwrap();
        assert_eq!(r.records.len(), 4 * 2 * 5);
        assert!(r.slopes.iter().all(|s| s.slope.is_some() && s.used.len() == 2));
        assert!(r.records.iter().filter(|x| x.method == "exact").all(|x| x.m == 0 && x.r == 0));
    }

    #[test]
    fn timer_floor_drops_points() {
        let cfg = BenchConfig {
            min_median_ns: u64::MAX,
            methods: vec![Method::Performer],
            ..tiny()
        };
        let mut log = Vec::new();
        let r = measure_all(&cfg, &mut log).unwrap();
        assert_eq!(r.slopes[0].dropped, vec![16, 32]);
        assert_eq!(r.slopes[0].slope, None);
        assert!(String::from_utf8(log).unwrap().contains("warning"));
    }

    #[test]
    fn too_few_reps_rejected() {
        assert!(measure_all(&BenchConfig { reps: 4, ..tiny() }, &mut std::io::sink()).is_err());
    }

    #[test]
    fn loglinear_with_flat_row_matches_performer() {
        let cfg = tiny();
        let mut p = prepare(&cfg, 32).unwrap();
        p.exp_row.iter_mut().for_each(|x| *x = 1.0);
        let a = call(Method::Loglinear, &p).unwrap();
        let b = call(Method::Performer, &p).unwrap();
        assert!(relative_frobenius_error(&a, &b) < 1e-10);
    }
}
