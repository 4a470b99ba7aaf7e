//! Reverse-mode gradients of the model loss against central differences,
//! per parameter block, for both weight placements.

use flt::model::{generate_task, loss_gradcheck, ModelConfig, TaskSpec, TinyModel};
use flt::spectral::{FourierFeatureConfig, WeightPlacement};

fn main() -> flt::Result<()> {
    let spec = TaskSpec {
        len: 12,
        train_size: 2,
        val_size: 1,
        ..TaskSpec::default()
    };
    let data = generate_task(&spec)?;
    for placement in [WeightPlacement::PhiSide, WeightPlacement::Split] {
        let cfg = ModelConfig {
            favor_features: 16,
            // split uses sqrt|c|, which has a kink at zero
            rpe_init_scale: 0.3,
            features: FourierFeatureConfig {
                placement,
                ..FourierFeatureConfig::new(8)
            },
            ..ModelConfig::default()
        };
        let model = TinyModel::new(cfg, spec.d_in, spec.d_in, spec.len)?;
        println!("{placement:?}");
        for (name, err) in loss_gradcheck(&model, &data.train, 1e-5)? {
            println!("  {name:<24} {err:.2e}");
        }
    }
    Ok(())
}
