use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::task::{Dataset, Example};
use super::tiny::{ModelConfig, TinyModel};
use crate::autograd::{gradcheck, Adam, AdamConfig, Tape, Var};
use crate::error::{Error, Result};
use crate::hexfloat;
use crate::numerics::Rng;
use crate::spectral::SpectralRpe;

/// Loss above which training is treated as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Validation loss is recorded every this many steps and after the last.
    pub eval_every: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 4,
            eval_every: 50,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub split: Split,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub records: Vec<LossRecord>,
    pub initial_val: f64,
    pub final_val: f64,
}

fn snapshot(model: &TinyModel) -> String {
    model
        .rpes()
        .iter()
        .map(|r| r.to_json_value().map(|v| v.to_string()).unwrap_or_else(|e| e.to_string()))
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_loss(model: &TinyModel, step: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
        return Err(Error::Diverged {
            step,
            loss,
            snapshot: snapshot(model),
        });
    }
    Ok(())
}

/// Adam on the mean squared error. Minibatches are drawn deterministically
/// from `cfg.seed`; validation runs at step 0, every `eval_every` steps and
/// at the end.
pub fn train(model: &mut TinyModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::invalid("training needs non-empty train and validation splits"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut params = model.parameters();
    let mut adam = Adam::new(cfg.adam, &params);
    let mut rng = Rng::new(cfg.seed, 0xba7c4);
    let mut records = Vec::new();
    let initial_val = model.loss(&data.val)?;
    check_loss(model, 0, initial_val)?;
    records.push(LossRecord {
        step: 0,
        split: Split::Val,
        loss: initial_val,
    });
    let mut last_val = initial_val;
    for step in 1..=cfg.steps {
        let batch: Vec<_> = (0..cfg.batch_size)
            .map(|_| data.train[(rng.next_word() % data.train.len() as u64) as usize].clone())
            .collect();
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = model.loss_tape(&mut tape, &vars, &batch)?;
        let value = tape.scalar_value(loss);
        check_loss(model, step, value)?;
        records.push(LossRecord {
            step,
            split: Split::Train,
            loss: value,
        });
        let grads = tape.backward(loss)?;
        let g: Vec<Array2<f64>> = vars.iter().zip(&params).map(|(v, p)| grads.get_or_zeros(*v, p)).collect();
        adam.update(&mut params, &g);
        model.set_parameters(&params)?;
        if step % cfg.eval_every.max(1) == 0 || step == cfg.steps {
            last_val = model.loss(&data.val)?;
            check_loss(model, step, last_val)?;
            records.push(LossRecord {
                step,
                split: Split::Val,
                loss: last_val,
            });
        }
    }
    Ok(TrainReport {
        records,
        initial_val,
        final_val: last_val,
    })
}

/// Pearson correlation coefficient; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Central-difference check of the training loss against reverse mode, one
/// entry per parameter matrix: `(name, worst relative error)`.
pub fn loss_gradcheck(model: &TinyModel, examples: &[Example], h: f64) -> Result<Vec<(String, f64)>> {
    let base = model.parameters();
    let names = model.parameter_names();
    let mut out = Vec::with_capacity(base.len());
    for (which, name) in names.into_iter().enumerate() {
        let f = |tape: &mut Tape, x: Var| -> Result<Var> {
            let vars: Vec<Var> = base
                .iter()
                .enumerate()
                .map(|(i, p)| if i == which { x } else { tape.constant(p.clone()) })
                .collect();
            model.loss_tape(tape, &vars, examples)
        };
        out.push((name, gradcheck(f, &base[which], h)?));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct NamedMatrix {
    name: String,
    shape: [usize; 2],
    #[serde(with = "hexfloat::serde_vec")]
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    config: ModelConfig,
    d_in: usize,
    d_out: usize,
    len_hint: usize,
    params: Vec<NamedMatrix>,
    rpes: Vec<serde_json::Value>,
}

impl TinyModel {
    /// JSON checkpoint with hex-float parameters. Frequencies and FAVOR
    /// projections are regenerated from the config seed on load.
    pub fn to_checkpoint(&self, len_hint: usize) -> Result<String> {
        let params = self
            .parameter_names()
            .into_iter()
            .zip(self.parameters())
            .map(|(name, p)| NamedMatrix {
                name,
                shape: [p.nrows(), p.ncols()],
                data: p.iter().copied().collect(),
            })
            .collect();
        let ck = Checkpoint {
            version: crate::VERSION.to_string(),
            config: *self.config(),
            d_in: self.d_in(),
            d_out: self.d_out(),
            len_hint,
            params,
            rpes: self.rpes().iter().map(SpectralRpe::to_json_value).collect::<Result<_>>()?,
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        let mut model = TinyModel::new(ck.config, ck.d_in, ck.d_out, ck.len_hint)?;
        let rpes = ck.rpes.into_iter().map(SpectralRpe::from_json_value).collect::<Result<Vec<_>>>()?;
        model.replace_rpes(rpes)?;
        let names = model.parameter_names();
        if names.len() != ck.params.len() {
            return Err(Error::shape("from_checkpoint", &[ck.params.len()], &[names.len()]));
        }
        let mut params = Vec::with_capacity(names.len());
        for (expected, m) in names.iter().zip(ck.params) {
            if *expected != m.name {
                return Err(Error::Config(format!("checkpoint parameter {} where {expected} was expected", m.name)));
            }
            params.push(
                Array2::from_shape_vec((m.shape[0], m.shape[1]), m.data)
                    .map_err(|e| Error::Config(format!("parameter {}: {e}", m.name)))?,
            );
        }
        model.set_parameters(&params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_task, AttentionKind, TaskKind, TaskSpec};
    use crate::spectral::FourierFeatureConfig;

    fn setup() -> (TinyModel, Dataset) {
        let data = generate_task(&TaskSpec {
            kind: TaskKind::OffsetKernel1d,
            len: 16,
            d_in: 2,
            window: 3,
            train_size: 8,
            val_size: 4,
            seed: 1,
            ..TaskSpec::default()
        })
        .unwrap();
        let cfg = ModelConfig {
            attention: AttentionKind::Flt,
            heads: 1,
            d_model: 4,
            d_qk: 2,
            d_v: 2,
            favor_features: 16,
            features: FourierFeatureConfig {
                tau: 0.2,
                ..FourierFeatureConfig::new(8)
            },
            ..ModelConfig::default()
        };
        (TinyModel::new(cfg, 2, 2, 16).unwrap(), data)
    }

    #[test]
    fn zero_steps_report_initial_loss() {
        let (mut m, d) = setup();
        let before = m.parameters();
        let r = train(&mut m, &d, &TrainConfig { steps: 0, ..TrainConfig::default() }).unwrap();
        assert_eq!(r.initial_val, r.final_val);
        assert_eq!(r.records.len(), 1);
        assert_eq!(m.parameters(), before);
    }

    #[test]
    fn trajectories_are_bit_identical() {
        let cfg = TrainConfig {
            steps: 5,
            eval_every: 2,
            ..TrainConfig::default()
        };
        let (mut a, d) = setup();
        let (mut b, _) = setup();
        let ra = train(&mut a, &d, &cfg).unwrap();
        let rb = train(&mut b, &d, &cfg).unwrap();
        let bits = |r: &TrainReport| r.records.iter().map(|x| x.loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ra), bits(&rb));
        assert_eq!(ra.records.iter().filter(|r| r.split == Split::Val).count(), 4);
    }

    #[test]
    fn rpe_receives_gradient_and_stays_valid() {
        let (mut m, d) = setup();
        let off = m.rpe_offset();
        let before = m.parameters();
        train(&mut m, &d, &TrainConfig { steps: 1, ..TrainConfig::default() }).unwrap();
        let after = m.parameters();
        let moved = before[off..]
            .iter()
            .zip(&after[off..])
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0f64, f64::max);
        assert!(moved > 1e-8, "{moved}");
        let grid: Vec<f64> = (0..8).map(f64::from).collect();
        assert!(m.inspect_learned_rpe(&grid).is_ok());
    }

    #[test]
    fn divergence_is_reported_with_snapshot() {
        let (mut m, d) = setup();
        let mut p = m.parameters();
        p[0].fill(1e5);
        m.set_parameters(&p).unwrap();
        match train(&mut m, &d, &TrainConfig { steps: 1, ..TrainConfig::default() }) {
            Err(Error::Diverged { snapshot, .. }) => assert!(snapshot.contains("local_sinc_sum")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (mut m, d) = setup();
        train(&mut m, &d, &TrainConfig { steps: 2, ..TrainConfig::default() }).unwrap();
        let text = m.to_checkpoint(16).unwrap();
        let back = TinyModel::from_checkpoint(&text).unwrap();
        assert_eq!(back.parameters(), m.parameters());
        assert_eq!(back.loss(&d.val).unwrap().to_bits(), m.loss(&d.val).unwrap().to_bits());
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]) - 0.9985).abs() < 1e-3);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), 0.0);
    }
}
