use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::task::Example;
use crate::attention::{exact_rpe_mask, FavorMap, Stabilizer, DENOMINATOR_FLOOR};
use crate::autograd::{SumAxis, Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Rng};
use crate::spectral::{feature_pair_tape, sample_frequencies, FourierFeatureConfig, PositionSet, SpectralRpe};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// Positive random features without RPE.
    Performer,
    /// Random features over the concatenated RPE and query/key features.
    Flt,
    /// Dense softmax with the closed-form mask (the mask is a constant).
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum RpeInit {
    LocalSincSum { terms: usize },
    GaussianMixture { terms: usize },
    #[serde(rename = "gaussian_basis_3d")]
    GaussianBasis3d { terms: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_qk: usize,
    pub d_v: usize,
    pub attention: AttentionKind,
    /// FAVOR feature count `m`.
    pub favor_features: usize,
    pub orthogonal: bool,
    pub rpe: RpeInit,
    pub features: FourierFeatureConfig,
    /// Standard deviation of the initial spectral weights.
    pub rpe_init_scale: f64,
    /// Standard deviation multiplier for the initial query/key projections.
    pub qk_init_gain: f64,
    pub causal: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            heads: 2,
            d_model: 16,
            d_qk: 8,
            d_v: 8,
            attention: AttentionKind::Flt,
            favor_features: 64,
            orthogonal: false,
            rpe: RpeInit::LocalSincSum { terms: 4 },
            features: FourierFeatureConfig::new(16),
            rpe_init_scale: 1e-2,
            qk_init_gain: 0.5,
            causal: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.layers) {
            return Err(Error::invalid(format!("layers must be 1 or 2, got {}", self.layers)));
        }
        if self.heads == 0 || self.d_model == 0 || self.d_qk == 0 || self.d_v == 0 || self.favor_features == 0 {
            return Err(Error::invalid("model widths must be positive"));
        }
        self.features.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct HeadWeights {
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct LayerWeights {
    heads: Vec<HeadWeights>,
    wo: Array2<f64>,
}

/// Small residual attention stack with per-head spectral RPEs shared
/// across layers.
#[derive(Clone, Debug)]
pub struct TinyModel {
    config: ModelConfig,
    d_in: usize,
    d_out: usize,
    w_in: Array2<f64>,
    layers: Vec<LayerWeights>,
    w_out: Array2<f64>,
    rpes: Vec<SpectralRpe>,
    frequencies: Vec<Array2<f64>>,
    maps: Vec<Vec<FavorMap>>,
}

fn init_rpe(init: RpeInit, scale: f64, len_hint: usize, tau: f64, rng: &mut Rng) -> Result<SpectralRpe> {
    let weights = |t: usize, rng: &mut Rng| (0..t).map(|_| scale * rng.normal()).collect::<Vec<f64>>();
    match init {
        RpeInit::LocalSincSum { terms } => {
            let top = (len_hint as f64 / 8.0).max(1.0);
            let radii: Vec<f64> = (0..terms)
                .map(|t| if terms == 1 { 1.0 } else { top.powf(t as f64 / (terms - 1) as f64) })
                .collect();
            SpectralRpe::local_sinc_sum(&weights(terms, rng), &radii)
        }
        RpeInit::GaussianMixture { terms } => {
            let centers: Vec<Vec<f64>> = (0..terms)
                .map(|t| {
                    let u = if terms == 1 { 0.5 } else { t as f64 / (terms - 1) as f64 };
                    vec![(4.0 * u - 2.0) * tau]
                })
                .collect();
            SpectralRpe::gaussian_mixture(&weights(terms, rng), &centers, &vec![tau; terms])
        }
        RpeInit::GaussianBasis3d { terms } => {
            let sigmas: Vec<f64> = (0..terms).map(|t| 0.05 * 2f64.powi(t as i32)).collect();
            SpectralRpe::gaussian_basis_3d(&weights(terms, rng), &sigmas)
        }
    }
}

fn scaled_gaussian(rng: &mut Rng, rows: usize, cols: usize, gain: f64) -> Array2<f64> {
    gaussian_matrix(rng, rows, cols) * (gain / (rows as f64).sqrt())
}

impl TinyModel {
    /// Builds a model for `d_in`-dimensional inputs and `d_out` outputs;
    /// `len_hint` sets the spread of initial RPE radii.
    pub fn new(config: ModelConfig, d_in: usize, d_out: usize, len_hint: usize) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(config.seed, 0x30de1);
        let mut wr = root.split_named("weights");
        let c = &config;
        let w_in = scaled_gaussian(&mut wr, d_in, c.d_model, 1.0);
        let layers = (0..c.layers)
            .map(|_| LayerWeights {
                heads: (0..c.heads)
                    .map(|_| HeadWeights {
                        wq: scaled_gaussian(&mut wr, c.d_model, c.d_qk, c.qk_init_gain),
                        wk: scaled_gaussian(&mut wr, c.d_model, c.d_qk, c.qk_init_gain),
                        wv: scaled_gaussian(&mut wr, c.d_model, c.d_v, 1.0),
                    })
                    .collect(),
                wo: scaled_gaussian(&mut wr, c.heads * c.d_v, c.d_model, 1.0),
            })
            .collect();
        let w_out = scaled_gaussian(&mut wr, c.d_model, d_out, 1.0);
        let ell = match c.rpe {
            RpeInit::GaussianBasis3d { .. } => 3,
            _ => 1,
        };
        let mut rpes = Vec::new();
        let mut frequencies = Vec::new();
        for h in 0..c.heads {
            let head = root.split_named("head").split(h as u64);
            rpes.push(init_rpe(c.rpe, c.rpe_init_scale, len_hint, c.features.tau, &mut head.split_named("rpe"))?);
            frequencies.push(sample_frequencies(&c.features, ell, &mut head.split_named("frequencies"))?);
        }
        let rpe_width = match c.attention {
            AttentionKind::Flt => c.features.width(),
            _ => 0,
        };
        let maps = (0..c.layers)
            .map(|l| {
                (0..c.heads)
                    .map(|h| {
                        let mut r = root.split_named("favor").split((l * c.heads + h) as u64);
                        FavorMap::sample(c.favor_features, rpe_width + c.d_qk, c.orthogonal, &mut r)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            d_in,
            d_out,
            w_in,
            layers,
            w_out,
            rpes,
            frequencies,
            maps,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn rpes(&self) -> &[SpectralRpe] {
        &self.rpes
    }

    pub fn frequencies(&self) -> &[Array2<f64>] {
        &self.frequencies
    }

    /// Every trainable matrix, dense weights first, then RPE parameters
    /// head by head.
    pub fn parameters(&self) -> Vec<Array2<f64>> {
        let mut out = vec![self.w_in.clone()];
        for layer in &self.layers {
            for h in &layer.heads {
                out.extend([h.wq.clone(), h.wk.clone(), h.wv.clone()]);
            }
            out.push(layer.wo.clone());
        }
        out.push(self.w_out.clone());
        for rpe in &self.rpes {
            out.extend(rpe.parameters());
        }
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = vec!["w_in".to_string()];
        for (l, layer) in self.layers.iter().enumerate() {
            for h in 0..layer.heads.len() {
                for n in ["wq", "wk", "wv"] {
                    out.push(format!("layer{l}.head{h}.{n}"));
                }
            }
            out.push(format!("layer{l}.wo"));
        }
        out.push("w_out".into());
        for (h, rpe) in self.rpes.iter().enumerate() {
            for n in rpe.parameter_names() {
                out.push(format!("rpe{h}.{n}"));
            }
        }
        out
    }

    /// Index of the first RPE parameter in [`TinyModel::parameters`].
    pub fn rpe_offset(&self) -> usize {
        2 + self.layers.len() * (1 + 3 * self.config.heads)
    }

    pub fn set_parameters(&mut self, params: &[Array2<f64>]) -> Result<()> {
        let current = self.parameters();
        if params.len() != current.len() {
            return Err(Error::shape("set_parameters", &[params.len()], &[current.len()]));
        }
        for (p, c) in params.iter().zip(&current) {
            if p.shape() != c.shape() {
                return Err(Error::shape("set_parameters", p.shape(), c.shape()));
            }
        }
        let mut it = params.iter().cloned();
        self.w_in = it.next().expect("w_in");
        for layer in &mut self.layers {
            for h in &mut layer.heads {
                h.wq = it.next().expect("wq");
                h.wk = it.next().expect("wk");
                h.wv = it.next().expect("wv");
            }
            layer.wo = it.next().expect("wo");
        }
        self.w_out = it.next().expect("w_out");
        for rpe in &mut self.rpes {
            let n = rpe.parameters().len();
            let chunk: Vec<Array2<f64>> = it.by_ref().take(n).collect();
            rpe.set_parameters(&chunk)?;
        }
        Ok(())
    }

    /// Mean squared error over `examples`, on the tape, given one variable
    /// per entry of [`TinyModel::parameters`].
    pub fn loss_tape(&self, tape: &mut Tape, params: &[Var], examples: &[Example]) -> Result<Var> {
        if examples.is_empty() {
            return Err(Error::invalid("loss over an empty batch"));
        }
        let mut total: Option<Var> = None;
        for ex in examples {
            let out = self.forward_tape(tape, params, &ex.input, &ex.positions)?;
            let target = tape.constant(ex.target.clone());
            let diff = tape.sub(out, target)?;
            let sq = tape.square(diff)?;
            let mse = tape.mean(sq)?;
            total = Some(match total {
                Some(t) => tape.add(t, mse)?,
                None => mse,
            });
        }
        tape.scale(total.expect("non-empty"), 1.0 / examples.len() as f64)
    }

    pub fn loss(&self, examples: &[Example]) -> Result<f64> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.parameters().into_iter().map(|p| tape.constant(p)).collect();
        let l = self.loss_tape(&mut tape, &params, examples)?;
        Ok(tape.scalar_value(l))
    }

    pub fn predict(&self, input: &Array2<f64>, positions: &PositionSet) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.parameters().into_iter().map(|p| tape.constant(p)).collect();
        let out = self.forward_tape(&mut tape, &params, input, positions)?;
        Ok(tape.value(out).clone())
    }

    pub fn forward_tape(&self, tape: &mut Tape, params: &[Var], input: &Array2<f64>, pos: &PositionSet) -> Result<Var> {
        let c = &self.config;
        if params.len() != self.parameters().len() {
            return Err(Error::shape("forward_tape", &[params.len()], &[self.parameters().len()]));
        }
        if input.ncols() != self.d_in || input.nrows() != pos.len() {
            return Err(Error::shape("forward_tape", input.shape(), &[pos.len(), self.d_in]));
        }
        let mut rpe_params = Vec::new();
        let mut offset = self.rpe_offset();
        for rpe in &self.rpes {
            let n = rpe.parameters().len();
            rpe_params.push(&params[offset..offset + n]);
            offset += n;
        }
        let mut rpe_feats = Vec::new();
        let mut masks = Vec::new();
        for (h, rpe) in self.rpes.iter().enumerate() {
            match c.attention {
                AttentionKind::Flt => {
                    rpe_feats.push(Some(feature_pair_tape(
                        rpe,
                        tape,
                        rpe_params[h],
                        &c.features,
                        pos,
                        &self.frequencies[h],
                    )?));
                    masks.push(None);
                }
                AttentionKind::Exact => {
                    rpe_feats.push(None);
                    masks.push(Some(exact_rpe_mask(rpe, pos)?.n));
                }
                AttentionKind::Performer => {
                    rpe_feats.push(None);
                    masks.push(None);
                }
            }
        }
        let x = tape.constant(input.clone());
        let mut hidden = tape.matmul(x, params[0])?;
        let mut idx = 1;
        for (li, _) in self.layers.iter().enumerate() {
            let mut heads = Vec::with_capacity(c.heads);
            for h in 0..c.heads {
                let (wq, wk, wv) = (params[idx], params[idx + 1], params[idx + 2]);
                idx += 3;
                let q = tape.matmul(hidden, wq)?;
                let k = tape.matmul(hidden, wk)?;
                let v = tape.matmul(hidden, wv)?;
                let out = match c.attention {
                    AttentionKind::Exact => exact_head(tape, q, k, v, masks[h].as_ref(), c.causal)?,
                    _ => {
                        let scale = (c.d_qk as f64).powf(-0.25);
                        let qs = tape.scale(q, scale)?;
                        let ks = tape.scale(k, scale)?;
                        let (qh, kh) = match rpe_feats[h] {
                            Some((n1, n2)) => (tape.concat(&[n1, qs])?, tape.concat(&[n2, ks])?),
                            None => (qs, ks),
                        };
                        let map = &self.maps[li][h];
                        let qp = favor_tape(tape, qh, map, Stabilizer::PerRow)?;
                        let kp = favor_tape(tape, kh, map, Stabilizer::Global)?;
                        if c.causal {
                            causal_linear_head(tape, qp, kp, v)?
                        } else {
                            linear_head(tape, qp, kp, v)?
                        }
                    }
                };
                heads.push(out);
            }
            let cat = tape.concat(&heads)?;
            let proj = tape.matmul(cat, params[idx])?;
            idx += 1;
            hidden = tape.add(hidden, proj)?;
        }
        tape.matmul(hidden, params[idx])
    }

    /// Learned `f` of every head at each 1-D displacement in `grid`.
    pub fn inspect_learned_rpe(&self, grid: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        grid.iter()
            .map(|&d| {
                let vals = self
                    .rpes
                    .iter()
                    .map(|r| {
                        let mut delta = vec![0.0; r.dim()];
                        delta[0] = d;
                        r.eval_rpe_closed_form(&delta)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok((d, vals))
            })
            .collect()
    }

    pub(crate) fn replace_rpes(&mut self, rpes: Vec<SpectralRpe>) -> Result<()> {
        if rpes.len() != self.rpes.len() || rpes.iter().zip(&self.rpes).any(|(a, b)| a.name() != b.name() || a.dim() != b.dim()) {
            return Err(Error::invalid("checkpoint RPEs do not match the model configuration"));
        }
        self.rpes = rpes;
        Ok(())
    }
}

/// `exp(x Wᵀ - |x|²/2 - shift) / √m` with the shift held constant.
fn favor_tape(tape: &mut Tape, x: Var, map: &FavorMap, stabilizer: Stabilizer) -> Result<Var> {
    let m = map.num_features();
    let wt = tape.constant(map.projection().t().to_owned());
    let logits = tape.matmul(x, wt)?;
    let sq = tape.square(x)?;
    let half = tape.sum_axis(sq, SumAxis::Cols)?;
    let half = tape.scale(half, -0.5)?;
    let half = tape.broadcast_col(half, m)?;
    let z = tape.add(logits, half)?;
    let zv = tape.value(z);
    let row_max: Vec<f64> = zv.rows().into_iter().map(|r| r.fold(f64::NEG_INFINITY, |a, &b| a.max(b))).collect();
    let shift = match stabilizer {
        Stabilizer::None => Array2::zeros(zv.raw_dim()),
        Stabilizer::PerRow => Array2::from_shape_fn(zv.raw_dim(), |(i, _)| -row_max[i]),
        Stabilizer::Global => {
            let g = row_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Array2::from_elem(zv.raw_dim(), -g)
        }
    };
    let shift = tape.constant(shift);
    let z = tape.add(z, shift)?;
    let e = tape.exp(z)?;
    tape.scale(e, 1.0 / (m as f64).sqrt())
}

fn normalize(tape: &mut Tape, num: Var, den: Var) -> Result<Var> {
    let den = tape.clamp_min(den, DENOMINATOR_FLOOR)?;
    let cols = tape.shape(num)[1];
    let den = tape.broadcast_col(den, cols)?;
    tape.div(num, den)
}

fn linear_head(tape: &mut Tape, qp: Var, kp: Var, v: Var) -> Result<Var> {
    let kt = tape.transpose(kp)?;
    let kv = tape.matmul(kt, v)?;
    let num = tape.matmul(qp, kv)?;
    let ksum = tape.sum_axis(kp, SumAxis::Rows)?;
    let ksum = tape.transpose(ksum)?;
    let den = tape.matmul(qp, ksum)?;
    normalize(tape, num, den)
}

/// Prefix sums over flattened outer products `k_j ⊗ v_j`.
fn causal_linear_head(tape: &mut Tape, qp: Var, kp: Var, v: Var) -> Result<Var> {
    let m = tape.shape(qp)[1];
    let dv = tape.shape(v)[1];
    // repeat: m -> m*dv (each feature dv times); tile: dv -> m*dv.
    let repeat = tape.constant(Array2::from_shape_fn((m, m * dv), |(f, c)| if c / dv == f { 1.0 } else { 0.0 }));
    let tile = tape.constant(Array2::from_shape_fn((dv, m * dv), |(a, c)| if c % dv == a { 1.0 } else { 0.0 }));
    let k_rep = tape.matmul(kp, repeat)?;
    let v_tile = tape.matmul(v, tile)?;
    let outer = tape.mul(k_rep, v_tile)?;
    let state = tape.cumulative_sum(outer)?;
    let q_rep = tape.matmul(qp, repeat)?;
    let weighted = tape.mul(q_rep, state)?;
    let tile_t = tape.transpose(tile)?;
    let num = tape.matmul(weighted, tile_t)?;
    let ksum = tape.cumulative_sum(kp)?;
    let den = tape.mul(qp, ksum)?;
    let den = tape.sum_axis(den, SumAxis::Cols)?;
    normalize(tape, num, den)
}

fn exact_head(tape: &mut Tape, q: Var, k: Var, v: Var, mask: Option<&Array2<f64>>, causal: bool) -> Result<Var> {
    let d = tape.shape(q)[1] as f64;
    let l = tape.shape(q)[0];
    let kt = tape.transpose(k)?;
    let logits = tape.matmul(q, kt)?;
    let mut logits = tape.scale(logits, 1.0 / d.sqrt())?;
    let mut bias = mask.cloned().unwrap_or_else(|| Array2::zeros((l, l)));
    if causal {
        for i in 0..l {
            for j in i + 1..l {
                bias[[i, j]] = f64::NEG_INFINITY;
            }
        }
    }
    if mask.is_some() || causal {
        let b = tape.constant(bias);
        logits = tape.add(logits, b)?;
    }
    let a = tape.softmax_rows(logits)?;
    tape.matmul(a, v)
}
