//! `train`: toy training runs, optionally paired FLT vs RPE-free Performer
//! on the same data, with loss curves, checkpoints and a comparison table.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{par_map, seed_list, write_csv};
use crate::error::{Error, Result};
use crate::model::{generate_task, pearson, train, AttentionKind, ModelConfig, TaskKind, TaskSpec, TinyModel, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommandConfig {
    /// Run `i` uses seed `seed + i` for data, model and minibatches.
    pub seed: u64,
    pub num_seeds: usize,
    pub task: TaskSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// FLT and Performer on the same data instead of `model.attention` alone.
    pub paired: bool,
    /// Seeds run concurrently on this many threads.
    pub threads: usize,
    /// Loss curves and checkpoints go here when set.
    pub output_dir: Option<PathBuf>,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_seeds: 1,
            task: TaskSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            paired: false,
            threads: 1,
            output_dir: None,
        }
    }
}

impl TrainCommandConfig {
    pub fn seeds(&self) -> Vec<u64> {
        seed_list(self.seed, self.num_seeds)
    }

    pub fn kinds(&self) -> Vec<AttentionKind> {
        if self.paired {
            vec![AttentionKind::Flt, AttentionKind::Performer]
        } else {
            vec![self.model.attention]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_seeds == 0 {
            return Err(Error::Config("num_seeds must be positive".into()));
        }
        self.task.validate()?;
        self.model.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRecord {
    pub task: String,
    pub step: usize,
    pub split: String,
    pub loss: f64,
    pub seed: u64,
}

/// One trained model.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub kind: AttentionKind,
    pub seed: u64,
    pub initial_val: f64,
    pub final_val: f64,
    /// Pearson correlation of the learned `f` (head 0) with the generator
    /// kernel over `|Δ| <= 2w`; offset_kernel_1d with RPE only.
    pub kernel_corr: Option<f64>,
    pub curve: Vec<CurveRecord>,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub runs: Vec<RunOutcome>,
    pub steps: usize,
}

impl TrainSummary {
    pub fn get(&self, kind: AttentionKind, seed: u64) -> Option<&RunOutcome> {
        self.runs.iter().find(|r| r.kind == kind && r.seed == seed)
    }

    /// `(seed, flt final, performer final)` for paired runs.
    pub fn pairs(&self) -> Vec<(u64, f64, f64)> {
        let mut seeds: Vec<u64> = self.runs.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        seeds
            .into_iter()
            .filter_map(|s| {
                let f = self.get(AttentionKind::Flt, s)?;
                let p = self.get(AttentionKind::Performer, s)?;
                Some((s, f.final_val, p.final_val))
            })
            .collect()
    }
}

pub fn kind_name(kind: AttentionKind) -> &'static str {
    match kind {
        AttentionKind::Flt => "flt",
        AttentionKind::Performer => "performer",
        AttentionKind::Exact => "exact",
    }
}

fn kernel_corr(model: &TinyModel, task: &TaskSpec) -> Result<Option<f64>> {
    if task.kind != TaskKind::OffsetKernel1d || model.config().attention == AttentionKind::Performer {
        return Ok(None);
    }
    let w = 2 * task.window as i64;
    let grid: Vec<f64> = (-w..=w).map(|d| d as f64).collect();
    let table = model.inspect_learned_rpe(&grid)?;
    let learned: Vec<f64> = table.iter().map(|(_, f)| f[0]).collect();
    let target: Vec<f64> = (-w..=w).map(|d| task.offset_kernel(d)).collect();
    Ok(Some(pearson(&learned, &target)))
}

/// Trains one model for `seed`.
pub fn train_one(cfg: &TrainCommandConfig, kind: AttentionKind, seed: u64) -> Result<(TinyModel, RunOutcome)> {
    let task = TaskSpec { seed, ..cfg.task };
    let data = generate_task(&task)?;
    let model_cfg = ModelConfig {
        attention: kind,
        seed,
        causal: cfg.model.causal || task.is_causal(),
        ..cfg.model
    };
    let mut model = TinyModel::new(model_cfg, task.d_in, task.d_in, task.len)?;
    let report = train(&mut model, &data, &TrainConfig { seed, ..cfg.train })?;
    let curve = report
        .records
        .iter()
        .map(|r| CurveRecord {
            task: task.kind.name().to_string(),
            step: r.step,
            split: r.split.name().to_string(),
            loss: r.loss,
            seed,
        })
        .collect();
    let outcome = RunOutcome {
        kind,
        seed,
        initial_val: report.initial_val,
        final_val: report.final_val,
        kernel_corr: kernel_corr(&model, &task)?,
        curve,
    };
    Ok((model, outcome))
}

pub fn run(cfg: &TrainCommandConfig, summary: &mut dyn Write) -> Result<TrainSummary> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for kind in cfg.kinds() {
        let mut curve = Vec::new();
        for result in par_map(&cfg.seeds(), cfg.threads, |&seed| train_one(cfg, kind, seed)) {
            let (model, outcome) = result?;
            if let Some(dir) = &cfg.output_dir {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{}_{}_seed{}.json", cfg.task.kind.name(), kind_name(kind), outcome.seed));
                std::fs::write(path, model.to_checkpoint(cfg.task.len)?)?;
            }
            curve.extend(outcome.curve.iter().cloned());
            runs.push(outcome);
        }
        if let Some(dir) = &cfg.output_dir {
            let path = dir.join(format!("{}_{}.csv", cfg.task.kind.name(), kind_name(kind)));
            super::with_output(Some(&path), |out| write_csv(out, "train", cfg, &cfg.seeds(), &curve))?;
        }
    }
    let summary_data = TrainSummary {
        runs,
        steps: cfg.train.steps,
    };
    write_table(&summary_data, summary)?;
    Ok(summary_data)
}

/// Initial and final validation losses per run; with paired runs also the
/// FLT/Performer ratio. Zero-step runs list initial losses only.
pub fn write_table(s: &TrainSummary, out: &mut dyn Write) -> Result<()> {
    if s.steps == 0 {
        writeln!(out, "model       seed   initial_val")?;
        for r in &s.runs {
            writeln!(out, "{:<10} {:>5}   {:.6e}", kind_name(r.kind), r.seed, r.initial_val)?;
        }
        return Ok(());
    }
    writeln!(out, "model       seed   initial_val    final_val      kernel_corr")?;
    for r in &s.runs {
        let corr = r.kernel_corr.map_or("-".to_string(), |c| format!("{c:.3}"));
        writeln!(
            out,
            "{:<10} {:>5}   {:.6e}   {:.6e}   {corr}",
            kind_name(r.kind),
            r.seed,
            r.initial_val,
            r.final_val
        )?;
    }
    let pairs = s.pairs();
    if !pairs.is_empty() {
        writeln!(out, "seed   flt/performer   improvement")?;
        for (seed, f, p) in pairs {
            writeln!(out, "{seed:>5}   {:>13.3}   {:>10.1}%", f / p, 100.0 * (1.0 - f / p))?;
        }
    }
    Ok(())
}
