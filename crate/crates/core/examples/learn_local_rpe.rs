//! Trains a one-layer FLT model on the offset-kernel task and prints the
//! learned RPE next to the target kernel.

use flt::autograd::LrSchedule;
use flt::model::{generate_task, train, ModelConfig, RpeInit, TaskSpec, TinyModel, TrainConfig};
use flt::spectral::{FourierFeatureConfig, WeightPlacement};

fn main() -> flt::Result<()> {
    let spec = TaskSpec {
        len: 64,
        window: 4,
        train_size: 16,
        val_size: 4,
        ..TaskSpec::default()
    };
    let data = generate_task(&spec)?;
    let cfg = ModelConfig {
        heads: 1,
        favor_features: 128,
        rpe: RpeInit::LocalSincSum { terms: 4 },
        features: FourierFeatureConfig {
            tau: 0.1,
            placement: WeightPlacement::Split,
            ..FourierFeatureConfig::new(32)
        },
        ..ModelConfig::default()
    };
    let mut model = TinyModel::new(cfg, spec.d_in, spec.d_in, spec.len)?;
    let mut tc = TrainConfig {
        steps: 300,
        eval_every: 50,
        ..TrainConfig::default()
    };
    tc.adam.schedule = LrSchedule { peak_lr: 0.03, warmup_steps: 20 };
    let report = train(&mut model, &data, &tc)?;
    println!("val loss {:.4} -> {:.4}", report.initial_val, report.final_val);

    let grid: Vec<f64> = (-8..=8).map(f64::from).collect();
    for (delta, f) in model.inspect_learned_rpe(&grid)? {
        println!("{delta:>4}  target {:>6.3}  learned bias {:>8.4}", spec.offset_kernel(delta as i64), f[0]);
    }
    Ok(())
}
