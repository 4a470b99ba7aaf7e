use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Complex, ComplexMatrix, Rng};

/// Random projection `W` (`m x D`) behind positive random features
/// `φ(u) = exp(Wu - |u|²/2) / √m`, with `E[φ(x)ᵀφ(y)] = exp(xᵀy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FavorMap {
    w: Array2<f64>,
    orthogonal: bool,
}

impl FavorMap {
    /// Gaussian projection; with `orthogonal` the rows are orthogonalized and
    /// rescaled to independent chi-distributed norms, which requires `m <= D`.
    pub fn sample(m: usize, dim: usize, orthogonal: bool, rng: &mut Rng) -> Result<Self> {
        if m == 0 || dim == 0 {
            return Err(Error::invalid("FAVOR map needs m >= 1 and D >= 1"));
        }
        if !orthogonal {
            return Ok(Self {
                w: gaussian_matrix(rng, m, dim),
                orthogonal,
            });
        }
        if m > dim {
            return Err(Error::invalid(format!("orthogonal features need m <= D, got m={m}, D={dim}")));
        }
        let mut w = gaussian_matrix(rng, m, dim);
        for i in 0..m {
            for j in 0..i {
                let proj = w.row(i).dot(&w.row(j));
                let rj = w.row(j).to_owned();
                w.row_mut(i).scaled_add(-proj, &rj);
            }
            let norm = w.row(i).dot(&w.row(i)).sqrt();
            w.row_mut(i).mapv_inplace(|x| x / norm);
        }
        for mut row in w.rows_mut() {
            let chi = (0..dim).map(|_| rng.normal().powi(2)).sum::<f64>().sqrt();
            row *= chi;
        }
        Ok(Self { w, orthogonal })
    }

    pub fn from_matrix(w: Array2<f64>) -> Self {
        Self { w, orthogonal: false }
    }

    pub fn num_features(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.w
    }

    /// The map restricted to input columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Self {
        Self {
            w: self.w.slice(s![.., start..end]).to_owned(),
            orthogonal: false,
        }
    }
}

/// Max-shift applied inside the exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stabilizer {
    /// Subtract each row's own maximum (queries: cancels row-wise).
    PerRow,
    /// Subtract one maximum over all rows (keys: cancels globally).
    Global,
    None,
}

/// Feature matrix `Φ` with `true features = Φ · exp(log_shift[i])` row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct FavorFeatures {
    pub values: Array2<f64>,
    pub log_shift: Array1<f64>,
}

impl FavorFeatures {
    /// Undoes the stabilizing shift; may overflow for large inputs.
    pub fn unshifted(&self) -> Array2<f64> {
        let scale = self.log_shift.mapv(f64::exp).insert_axis(Axis(1));
        &self.values * &scale
    }
}

pub fn favor_features(x: &Array2<f64>, map: &FavorMap, stabilizer: Stabilizer) -> Result<FavorFeatures> {
    if x.ncols() != map.dim() {
        return Err(Error::shape("favor_features", x.shape(), &[x.nrows(), map.dim()]));
    }
    let m = map.num_features();
    let mut logits = x.dot(&map.w.t());
    for (mut row, u) in logits.rows_mut().into_iter().zip(x.rows()) {
        let half_norm = 0.5 * u.dot(&u);
        row.mapv_inplace(|z| z - half_norm);
    }
    let row_max = |row: ndarray::ArrayView1<f64>| row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let shifts: Array1<f64> = match stabilizer {
        Stabilizer::None => Array1::zeros(x.nrows()),
        Stabilizer::PerRow => logits.rows().into_iter().map(row_max).collect(),
        Stabilizer::Global => {
            let g = logits.rows().into_iter().map(row_max).fold(f64::NEG_INFINITY, f64::max);
            Array1::from_elem(x.nrows(), if x.nrows() == 0 { 0.0 } else { g })
        }
    };
    let norm = 1.0 / (m as f64).sqrt();
    for (mut row, &shift) in logits.rows_mut().into_iter().zip(shifts.iter()) {
        row.mapv_inplace(|z| (z - shift).exp() * norm);
    }
    let log_shift = shifts;
    Ok(FavorFeatures { values: logits, log_shift })
}

/// Positive features of complex inputs under the bilinear `uᵀu`.
pub fn favor_features_complex(x: &ComplexMatrix, map: &FavorMap) -> Result<ComplexMatrix> {
    if x.ncols() != map.dim() {
        return Err(Error::shape("favor_features_complex", x.shape(), &[x.nrows(), map.dim()]));
    }
    let w = map.w.mapv(|a| Complex::new(a, 0.0));
    let mut logits = x.dot(&w.t());
    let norm = 1.0 / (map.num_features() as f64).sqrt();
    for (mut row, u) in logits.rows_mut().into_iter().zip(x.rows()) {
        let half: Complex = u.iter().map(|z| z * z).sum::<Complex>() * 0.5;
        row.mapv_inplace(|z| (z - half).exp() * norm);
    }
    Ok(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_inputs_give_unit_kernel() {
        let map = FavorMap::sample(7, 3, false, &mut Rng::seeded(1)).unwrap();
        let f = favor_features(&Array2::zeros((1, 3)), &map, Stabilizer::None).unwrap();
        assert!((f.values.row(0).dot(&f.values.row(0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_rows_are_orthogonal() {
        let map = FavorMap::sample(5, 5, true, &mut Rng::seeded(2)).unwrap();
        let w = map.projection();
        for i in 0..5 {
            for j in 0..i {
                let c = w.row(i).dot(&w.row(j)) / (w.row(i).dot(&w.row(i)) * w.row(j).dot(&w.row(j))).sqrt();
                assert!(c.abs() < 1e-12);
            }
        }
        assert!(FavorMap::sample(6, 5, true, &mut Rng::seeded(2)).is_err());
    }

    #[test]
    fn shifts_are_recoverable() {
        let map = FavorMap::sample(16, 2, false, &mut Rng::seeded(3)).unwrap();
        let x = array![[0.3, -1.0], [2.0, 0.5], [0.0, 0.0]];
        let plain = favor_features(&x, &map, Stabilizer::None).unwrap().values;
        for st in [Stabilizer::PerRow, Stabilizer::Global] {
            let f = favor_features(&x, &map, st).unwrap();
            assert!((&f.unshifted() - &plain).iter().all(|d| d.abs() < 1e-13));
            assert!(f.values.iter().all(|&v| v >= 0.0 && v <= 1.0 / 4.0 + 1e-15));
        }
    }

    #[test]
    fn complex_features_reduce_to_real() {
        let map = FavorMap::sample(8, 2, false, &mut Rng::seeded(4)).unwrap();
        let x = array![[0.3, -0.4]];
        let real = favor_features(&x, &map, Stabilizer::None).unwrap().values;
        let cx = favor_features_complex(&x.mapv(|a| Complex::new(a, 0.0)), &map).unwrap();
        for (a, b) in real.iter().zip(cx.iter()) {
            assert!((a - b.re).abs() < 1e-15 && b.im == 0.0);
        }
    }
}
