//! Append-only tape over dense 2-D tensors.
//!
//! Every value is an `rows x cols` matrix (scalars are `1 x 1`). Nodes are
//! appended in evaluation order, so reverse append order is a valid
//! topological order for `backward`.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumAxis {
    /// Collapse rows: `r x c -> 1 x c`.
    Rows,
    /// Collapse columns: `r x c -> r x 1`.
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Exp(Var),
    Sin(Var),
    Cos(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    SumAxis(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize, end: usize },
    Transpose(Var),
    BroadcastRow(Var),
    BroadcastCol(Var),
    CumSum(Var),
    ClampMin(Var, f64),
    SoftmaxRows(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Adjoint of `v`; `None` if `v` does not influence the seeded outputs
    /// through differentiable leaves.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    /// Adjoint of `v`, or zeros shaped like `like` when absent.
    pub fn get_or_zeros(&self, v: Var, like: &Array2<f64>) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(like.raw_dim()))
    }
}

fn dims(a: &Array2<f64>) -> [usize; 2] {
    [a.nrows(), a.ncols()]
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(Error::ForeignVar);
        }
        self.nodes.get(v.index).ok_or(Error::ForeignVar)
    }

    fn needs(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.index].needs_grad)
    }

    /// Differentiable input.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input treated as a constant during `backward`.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), x))
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.node(v).expect("variable from another tape").value
    }

    pub fn try_value(&self, v: Var) -> Result<&Array2<f64>> {
        Ok(&self.node(v)?.value)
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        dims(self.value(v))
    }

    fn binary_same_shape(&mut self, op_name: &'static str, a: Var, b: Var) -> Result<(&Array2<f64>, &Array2<f64>)> {
        let (x, y) = (&self.node(a)?.value, &self.node(b)?.value);
        if x.shape() != y.shape() {
            return Err(Error::shape(op_name, x.shape(), y.shape()));
        }
        Ok((x, y))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = self.binary_same_shape("add", a, b)?;
        let out = x + y;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = self.binary_same_shape("sub", a, b)?;
        let out = x - y;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = self.binary_same_shape("mul", a, b)?;
        let out = x * y;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = self.binary_same_shape("div", a, b)?;
        let out = x / y;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Div(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = &self.node(a)?.value * k;
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::Scale(a, k), ng))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// `a + c` for a constant `c`.
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = &self.node(a)?.value + c;
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::Shift(a), ng))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.node(a)?.value, &self.node(b)?.value);
        if x.ncols() != y.nrows() {
            return Err(Error::shape("matmul", x.shape(), y.shape()));
        }
        let out = x.dot(y);
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.node(a)?.value.mapv(f);
        let ng = self.needs(&[a]);
        Ok(self.push(out, op, ng))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// `max(a, floor)`; the subgradient is 0 wherever `a <= floor`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        self.unary(a, move |x| x.max(floor), Op::ClampMin(a, floor))
    }

    /// Sum of all entries, as a `1 x 1` value.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.value.sum();
        let ng = self.needs(&[a]);
        Ok(self.push(Array2::from_elem((1, 1), s), Op::Sum(a), ng))
    }

    pub fn sum_axis(&mut self, a: Var, axis: SumAxis) -> Result<Var> {
        let x = &self.node(a)?.value;
        let out = match axis {
            SumAxis::Rows => x.sum_axis(Axis(0)).insert_axis(Axis(0)),
            SumAxis::Cols => x.sum_axis(Axis(1)).insert_axis(Axis(1)),
        };
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::SumAxis(a), ng))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = &self.node(a)?.value;
        if x.is_empty() {
            return Err(Error::shape("mean", x.shape(), &[]));
        }
        let m = x.sum() / x.len() as f64;
        let ng = self.needs(&[a]);
        Ok(self.push(Array2::from_elem((1, 1), m), Op::Mean(a), ng))
    }

    /// Concatenation along the feature (column) axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", &[], &[]))?;
        let rows = self.node(*first)?.value.nrows();
        let mut views = Vec::with_capacity(parts.len());
        for p in parts {
            let v = &self.node(*p)?.value;
            if v.nrows() != rows {
                return Err(Error::shape("concat", &[rows], v.shape()));
            }
            views.push(v.view());
        }
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        let ng = self.needs(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), ng))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = &self.node(a)?.value;
        if start > end || end > x.ncols() {
            return Err(Error::shape("slice", x.shape(), &[start, end]));
        }
        let out = x.slice(s![.., start..end]).to_owned();
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::Slice { src: a, start, end }, ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.node(a)?.value.t().to_owned();
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::Transpose(a), ng))
    }

    /// Repeats a `1 x c` row `rows` times.
    pub fn broadcast_row(&mut self, a: Var, rows: usize) -> Result<Var> {
        let x = &self.node(a)?.value;
        if x.nrows() != 1 {
            return Err(Error::shape("broadcast_row", x.shape(), &[1, x.ncols()]));
        }
        let out = x.broadcast((rows, x.ncols())).expect("1 x c broadcasts").to_owned();
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::BroadcastRow(a), ng))
    }

    /// Repeats an `r x 1` column `cols` times.
    pub fn broadcast_col(&mut self, a: Var, cols: usize) -> Result<Var> {
        let x = &self.node(a)?.value;
        if x.ncols() != 1 {
            return Err(Error::shape("broadcast_col", x.shape(), &[x.nrows(), 1]));
        }
        let out = x.broadcast((x.nrows(), cols)).expect("r x 1 broadcasts").to_owned();
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::BroadcastCol(a), ng))
    }

    /// Inclusive prefix sum down the rows.
    pub fn cumulative_sum(&mut self, a: Var) -> Result<Var> {
        let mut out = self.node(a)?.value.clone();
        out.accumulate_axis_inplace(Axis(0), |&prev, cur| *cur += prev);
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::CumSum(a), ng))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut out = self.node(a)?.value.clone();
        for mut row in out.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::SoftmaxRows(a), ng))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let v = &self.node(output)?.value;
        if v.shape() != [1, 1] {
            return Err(Error::shape("backward", v.shape(), &[1, 1]));
        }
        self.backward_with(&[(output, Array2::from_elem((1, 1), 1.0))])
    }

    /// Reverse sweep from several outputs with explicit seed adjoints.
    /// Adjoints from different seeds accumulate additively.
    pub fn backward_with(&self, seeds: &[(Var, Array2<f64>)]) -> Result<Gradients> {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        let mut last = 0;
        for (v, seed) in seeds {
            let node = self.node(*v)?;
            if node.value.shape() != seed.shape() {
                return Err(Error::shape("backward seed", node.value.shape(), seed.shape()));
            }
            accumulate(&mut grads[v.index], seed.clone());
            last = last.max(v.index);
        }
        for idx in (0..=last).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.index].value;
        let wants = |v: Var| self.nodes[v.index].needs_grad;
        let mut send = |v: Var, d: Array2<f64>| {
            if self.nodes[v.index].needs_grad {
                accumulate(&mut grads[v.index], d);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, -g);
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    send(*a, g * val(*b));
                }
                if wants(*b) {
                    send(*b, g * val(*a));
                }
            }
            Op::Div(a, b) => {
                let y = val(*b);
                if wants(*a) {
                    send(*a, g / y);
                }
                if wants(*b) {
                    send(*b, -(g * &node.value) / y);
                }
            }
            Op::Scale(a, k) => send(*a, g * *k),
            Op::Shift(a) => send(*a, g.clone()),
            Op::MatMul(a, b) => {
                if wants(*a) {
                    send(*a, g.dot(&val(*b).t()));
                }
                if wants(*b) {
                    send(*b, val(*a).t().dot(g));
                }
            }
            Op::Exp(a) => send(*a, g * &node.value),
            Op::Sin(a) => send(*a, g * &val(*a).mapv(f64::cos)),
            Op::Cos(a) => send(*a, -(g * &val(*a).mapv(f64::sin))),
            Op::Sqrt(a) => send(*a, g / &(&node.value * 2.0)),
            Op::Square(a) => send(*a, g * &(val(*a) * 2.0)),
            Op::Sum(a) => {
                let x = val(*a);
                send(*a, Array2::from_elem(x.raw_dim(), g[[0, 0]]));
            }
            Op::SumAxis(a) => {
                let x = val(*a);
                send(*a, g.broadcast(x.raw_dim()).expect("reduced axis broadcasts").to_owned());
            }
            Op::Mean(a) => {
                let x = val(*a);
                send(*a, Array2::from_elem(x.raw_dim(), g[[0, 0]] / x.len() as f64));
            }
            Op::Concat(parts) => {
                let mut col = 0;
                for p in parts {
                    let w = val(*p).ncols();
                    if wants(*p) {
                        send(*p, g.slice(s![.., col..col + w]).to_owned());
                    }
                    col += w;
                }
            }
            Op::Slice { src, start, end } => {
                let mut d = Array2::zeros(val(*src).raw_dim());
                d.slice_mut(s![.., *start..*end]).assign(g);
                send(*src, d);
            }
            Op::Transpose(a) => send(*a, g.t().to_owned()),
            Op::BroadcastRow(a) => send(*a, g.sum_axis(Axis(0)).insert_axis(Axis(0))),
            Op::BroadcastCol(a) => send(*a, g.sum_axis(Axis(1)).insert_axis(Axis(1))),
            Op::CumSum(a) => {
                // Adjoint of an inclusive prefix sum is the reverse (suffix) sum.
                let mut d = g.clone();
                let rows = d.nrows();
                for i in (0..rows.saturating_sub(1)).rev() {
                    let next = d.row(i + 1).to_owned();
                    let mut row = d.row_mut(i);
                    row += &next;
                }
                send(*a, d);
            }
            Op::ClampMin(a, floor) => {
                let x = val(*a);
                let mut d = g.clone();
                d.zip_mut_with(x, |dg, &xv| {
                    if xv <= *floor {
                        *dg = 0.0;
                    }
                });
                send(*a, d);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let gy = g * y;
                let dot = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                send(*a, &gy - &(y * &dot));
            }
        }
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, d: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &d,
        None => *slot = Some(d),
    }
}
