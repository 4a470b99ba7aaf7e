use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Linear warm-up to `peak_lr`, then inverse square-root decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup_steps: usize,
}

impl LrSchedule {
    /// Learning rate for 1-based step `t`.
    pub fn at(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        let w = self.warmup_steps.max(1) as f64;
        self.peak_lr * (t / w).min((w / t).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            schedule: LrSchedule {
                peak_lr: 2e-3,
                warmup_steps: 100,
            },
        }
    }
}

pub struct Adam {
    config: AdamConfig,
    step: usize,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[Array2<f64>]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
            second: shapes.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One update of every parameter in place.
    pub fn update(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, schedule } = self.config;
        let lr = schedule.at(self.step);
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn schedule_shape() {
        let s = LrSchedule {
            peak_lr: 1.0,
            warmup_steps: 4,
        };
        assert_eq!(s.at(1), 0.25);
        assert_eq!(s.at(4), 1.0);
        assert_eq!(s.at(16), 0.5);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut cfg = AdamConfig::default();
        cfg.schedule = LrSchedule {
            peak_lr: 0.1,
            warmup_steps: 1,
        };
        let mut params = vec![array![[3.0, -2.0]]];
        let mut adam = Adam::new(cfg, &params);
        for _ in 0..2000 {
            let g = vec![params[0].mapv(|x| 2.0 * x)];
            adam.update(&mut params, &g);
        }
        assert!(params[0].iter().all(|x| x.abs() < 1e-2), "{:?}", params[0]);
    }
}
