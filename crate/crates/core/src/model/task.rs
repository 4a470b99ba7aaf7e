use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Rng};
use crate::spectral::PositionSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// `y_i = Σ_j a(i-j) x_j` with a normalized triangle `a`.
    #[serde(rename = "offset_kernel_1d")]
    OffsetKernel1d,
    /// Random points in the unit cube, `y_i = Σ_j exp(-|r_i-r_j|²/(2σ*²)) s_j`.
    #[serde(rename = "neighborhood_3d")]
    Neighborhood3d,
    /// `y_i = x_{i-k}`, zero for `i < k`.
    CausalCopy,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OffsetKernel1d => "offset_kernel_1d",
            Self::Neighborhood3d => "neighborhood_3d",
            Self::CausalCopy => "causal_copy",
        }
    }

    pub fn position_dim(&self) -> usize {
        match self {
            Self::Neighborhood3d => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub len: usize,
    pub d_in: usize,
    /// Triangle half-width `w` of the offset kernel.
    pub window: usize,
    /// Neighborhood width `σ*`.
    pub sigma_star: f64,
    pub lag: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            kind: TaskKind::OffsetKernel1d,
            len: 64,
            d_in: 4,
            window: 4,
            sigma_star: 0.1,
            lag: 1,
            train_size: 64,
            val_size: 16,
            seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.len == 0 || self.d_in == 0 {
            return Err(Error::invalid("task needs L >= 1 and d_in >= 1"));
        }
        match self.kind {
            TaskKind::OffsetKernel1d if self.window == 0 || self.window >= self.len => Err(Error::invalid(format!(
                "window must satisfy 1 <= w < L, got w={} L={}",
                self.window, self.len
            ))),
            TaskKind::CausalCopy if self.lag >= self.len => Err(Error::invalid(format!(
                "lag must satisfy k < L, got k={} L={}",
                self.lag, self.len
            ))),
            TaskKind::Neighborhood3d if !(self.sigma_star > 0.0) => {
                Err(Error::invalid("sigma_star must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Unnormalized triangle `max(0, w - |δ|)` divided by its sum.
    pub fn offset_kernel(&self, delta: i64) -> f64 {
        let w = self.window as f64;
        (w - delta.abs() as f64).max(0.0) / (w * w)
    }

    pub fn is_causal(&self) -> bool {
        self.kind == TaskKind::CausalCopy
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Array2<f64>,
    pub target: Array2<f64>,
    pub positions: PositionSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
}

/// Pure function of `spec` (including its seed).
pub fn generate_task(spec: &TaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let root = Rng::new(spec.seed, 0x7a5c);
    let make = |split: &str, count: usize| -> Vec<Example> {
        let stream = root.split_named(split);
        (0..count).map(|i| example(spec, &mut stream.split(i as u64))).collect()
    };
    Ok(Dataset {
        spec: *spec,
        train: make("train", spec.train_size),
        val: make("val", spec.val_size),
    })
}

fn example(spec: &TaskSpec, rng: &mut Rng) -> Example {
    let l = spec.len;
    let x = gaussian_matrix(rng, l, spec.d_in);
    match spec.kind {
        TaskKind::OffsetKernel1d => {
            let w = spec.window as i64;
            let mut y = Array2::zeros(x.raw_dim());
            for i in 0..l as i64 {
                for j in (i - w + 1).max(0)..(i + w).min(l as i64) {
                    let a = spec.offset_kernel(i - j);
                    y.row_mut(i as usize).scaled_add(a, &x.row(j as usize));
                }
            }
            Example {
                input: x,
                target: y,
                positions: PositionSet::sequential(l),
            }
        }
        TaskKind::Neighborhood3d => {
            let pts = Array2::from_shape_fn((l, 3), |_| rng.uniform());
            let positions = PositionSet::from_points(pts).expect("finite points");
            let inv = 1.0 / (2.0 * spec.sigma_star * spec.sigma_star);
            let mut y = Array2::zeros(x.raw_dim());
            for i in 0..l {
                for j in 0..l {
                    let d2: f64 = positions.displacement(i, j).iter().map(|d| d * d).sum();
                    y.row_mut(i).scaled_add((-d2 * inv).exp(), &x.row(j));
                }
            }
            Example {
                input: x,
                target: y,
                positions,
            }
        }
        TaskKind::CausalCopy => {
            let mut y = Array2::zeros(x.raw_dim());
            for i in spec.lag..l {
                y.row_mut(i).assign(&x.row(i - spec.lag));
            }
            Example {
                input: x,
                target: y,
                positions: PositionSet::sequential(l),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            kind,
            len: 12,
            d_in: 3,
            train_size: 3,
            val_size: 2,
            ..TaskSpec::default()
        }
    }

    #[test]
    fn unit_window_is_identity() {
        let d = generate_task(&TaskSpec { window: 1, ..spec(TaskKind::OffsetKernel1d) }).unwrap();
        for ex in d.train.iter().chain(&d.val) {
            assert_eq!(ex.input, ex.target);
        }
    }

    #[test]
    fn kernel_sums_to_one() {
        let s = TaskSpec { window: 5, ..spec(TaskKind::OffsetKernel1d) };
        let total: f64 = (-10..=10).map(|d| s.offset_kernel(d)).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tiny_neighborhood_is_self_term() {
        let d = generate_task(&TaskSpec { sigma_star: 1e-3, ..spec(TaskKind::Neighborhood3d) }).unwrap();
        for ex in &d.train {
            assert!((&ex.input - &ex.target).iter().all(|e| e.abs() < 1e-9));
        }
    }

    #[test]
    fn copy_is_lagged() {
        let d = generate_task(&TaskSpec { lag: 2, ..spec(TaskKind::CausalCopy) }).unwrap();
        let ex = &d.train[0];
        assert!(ex.target.row(0).iter().all(|&x| x == 0.0));
        assert_eq!(ex.target.row(5), ex.input.row(3));
    }

    #[test]
    fn deterministic_and_validated() {
        let s = spec(TaskKind::Neighborhood3d);
        assert_eq!(generate_task(&s).unwrap(), generate_task(&s).unwrap());
        assert!(generate_task(&TaskSpec { window: 12, ..spec(TaskKind::OffsetKernel1d) }).is_err());
        assert!(generate_task(&TaskSpec { lag: 12, ..spec(TaskKind::CausalCopy) }).is_err());
    }
}
