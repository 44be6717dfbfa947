//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a [`Node`] appended to a linear
//! tape, so node order is already a topological order. [`Graph::backward`]
//! walks the tape once in reverse, summing gradient contributions into each
//! parent. Graphs are cheap and meant to be rebuilt for every forward pass.

use std::collections::HashMap;
use std::sync::Arc;

use super::tensor::{gemm, log_softmax_in_place, Layout, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Sparse row-mixing weights: output row `i` is `Σ w · input[j]` over
/// `rows[i] = [(j, w), ...]`.
pub type MixRows = Vec<Vec<(usize, f64)>>;

/// Marker for "no source" entries in a gather map.
pub const ZERO_FILL: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    LogSoftmaxRows(Var),
    Sum(Var),
    Gather(Var, Arc<Vec<usize>>),
    Mix(Var, Arc<MixRows>),
    EmbeddingBag(Var, Arc<Vec<Vec<usize>>>),
}

/// A recorded value, its accumulated gradient and the rule that produced it.
#[derive(Debug)]
pub struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    // Whether any parameter lies upstream; constant subtrees skip backward.
    needs_grad: bool,
}

impl Node {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    /// Gradient after [`Graph::backward`]; `None` means zero.
    pub fn grad(&self) -> Option<&Tensor> {
        self.grad.as_ref()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("result of {:?}", op_name(&op))));
        }
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            op => parents(op)
                .into_iter()
                .flatten()
                .any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    /// Binds parameter `id` once per graph; later calls return the same node.
    pub fn param(&mut self, id: usize, value: &Tensor) -> Result<Var> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let v = self.push(value.clone(), Op::Param(id))?;
        self.params.insert(id, v);
        Ok(v)
    }

    /// Gradient of the parameter bound under `id`, if it received any.
    pub fn param_grad(&self, id: usize) -> Option<&Tensor> {
        self.params.get(&id).and_then(|&v| self.grad(v))
    }

    /// `(parameter id, gradient)` for every bound parameter that received
    /// a gradient, in binding order.
    pub fn param_gradients(&self) -> impl Iterator<Item = (usize, &Tensor)> + '_ {
        self.nodes.iter().filter_map(|n| match (&n.op, &n.grad) {
            (Op::Param(id), Some(g)) => Some((*id, g)),
            _ => None,
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        if xv.rank() != 2 || bv.len() != xv.cols() {
            return Err(shape_err!(
                "add_row of {:?} and {:?}",
                xv.shape(),
                bv.shape()
            ));
        }
        let mut out = xv.clone();
        let cols = xv.cols();
        if cols > 0 {
            for row in out.data_mut().chunks_mut(cols) {
                for (o, b) in row.iter_mut().zip(bv.data()) {
                    *o += b;
                }
            }
        }
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var> {
        let v = self.value(a);
        let out = match act {
            Activation::Relu => v.relu(),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => v.sigmoid(),
            Activation::Identity => return Ok(a),
        };
        self.push(out, Op::Act(a, act))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Sigmoid)
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.rank() != 2 || v.cols() == 0 {
            return Err(shape_err!("log_softmax_rows of {:?}", v.shape()));
        }
        let mut out = v.clone();
        let cols = v.cols();
        for row in out.data_mut().chunks_mut(cols) {
            log_softmax_in_place(row);
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    /// Scalar sum of all elements.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Output element `i` is input flat element `map[i]`, or zero for
    /// [`ZERO_FILL`]. Covers slicing, row gathers, and re-layouts.
    pub fn gather(&mut self, a: Var, map: Arc<Vec<usize>>, shape: Vec<usize>) -> Result<Var> {
        let src = self.value(a).data();
        if shape.iter().product::<usize>() != map.len() {
            return Err(shape_err!("gather map of {} into {:?}", map.len(), shape));
        }
        let mut data = Vec::with_capacity(map.len());
        for &i in map.iter() {
            if i == ZERO_FILL {
                data.push(0.0);
            } else if i < src.len() {
                data.push(src[i]);
            } else {
                return Err(shape_err!("gather index {} out of {}", i, src.len()));
            }
        }
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::Gather(a, map))
    }

    /// Picks flat elements into a vector.
    pub fn pick(&mut self, a: Var, flat: Vec<usize>) -> Result<Var> {
        let n = flat.len();
        self.gather(a, Arc::new(flat), vec![n])
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a);
        let (rows, cols) = (v.rows(), v.cols());
        if v.rank() != 2 || end > cols || start > end {
            return Err(shape_err!("slice {}..{} of {:?}", start, end, v.shape()));
        }
        let map: Vec<usize> = (0..rows)
            .flat_map(|r| (start..end).map(move |c| r * cols + c))
            .collect();
        self.gather(a, Arc::new(map), vec![rows, end - start])
    }

    /// Sparse row mixing (`out[i] = Σ w · a[j]`); see [`MixRows`].
    pub fn mix(&mut self, a: Var, rows: Arc<MixRows>) -> Result<Var> {
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(shape_err!("mix expects a matrix, got {:?}", v.shape()));
        }
        let (n, d) = (v.rows(), v.cols());
        let mut out = Tensor::zeros(&[rows.len(), d]);
        for (i, row) in rows.iter().enumerate() {
            let dst = out.row_mut(i);
            for &(j, w) in row {
                if j >= n {
                    return Err(shape_err!("mix source row {} out of {}", j, n));
                }
                for (o, x) in dst.iter_mut().zip(&v.data()[j * d..(j + 1) * d]) {
                    *o += w * x;
                }
            }
        }
        self.push(out, Op::Mix(a, rows))
    }

    /// Row `i` of the output is the sum of `table` rows listed in `bags[i]`.
    pub fn embedding_bag(&mut self, table: Var, bags: Arc<Vec<Vec<usize>>>) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(shape_err!("embedding table must be a matrix"));
        }
        let (n, d) = (t.rows(), t.cols());
        let mut out = Tensor::zeros(&[bags.len(), d]);
        for (i, bag) in bags.iter().enumerate() {
            let dst = out.row_mut(i);
            for &idx in bag {
                if idx >= n {
                    return Err(Error::InvalidArgument(format!(
                        "embedding index {} outside table of {} rows",
                        idx, n
                    )));
                }
                for (o, x) in dst.iter_mut().zip(&t.data()[idx * d..(idx + 1) * d]) {
                    *o += x;
                }
            }
        }
        self.push(out, Op::EmbeddingBag(table, bags))
    }

    fn accumulate(&mut self, v: Var, contribution: Tensor) {
        let node = &mut self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(contribution.data()) {
                    *a += b;
                }
            }
            None => node.grad = Some(contribution),
        }
    }

    fn take_grad(&mut self, v: Var) -> Tensor {
        let node = &mut self.nodes[v.0];
        node.grad
            .take()
            .unwrap_or_else(|| Tensor::zeros(node.value.shape()))
    }

    fn grad_buffer(&mut self, v: Var) -> &mut Tensor {
        let node = &mut self.nodes[v.0];
        node.grad
            .get_or_insert_with(|| Tensor::zeros(node.value.shape()))
    }

    /// Propagates `d root / d node` into every node reachable from `root`.
    /// Gradients accumulate, so call this once per graph.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(shape_err!(
                "backward from non-scalar of shape {:?}",
                self.value(root).shape()
            ));
        }
        self.nodes[root.0].grad = Some(Tensor::filled(self.value(root).shape(), 1.0));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &g);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &Tensor) {
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.value(a).rows(), self.value(a).cols());
                let n = self.value(b).cols();
                // dA = g · Bᵀ
                if self.nodes[a.0].needs_grad {
                    let mut ga = self.take_grad(a);
                    gemm(
                        Layout::normal(m, n),
                        g.data(),
                        Layout::transposed(n, k),
                        self.nodes[b.0].value.data(),
                        ga.data_mut(),
                        m,
                        n,
                        k,
                        true,
                    );
                    self.nodes[a.0].grad = Some(ga);
                }
                // dB = Aᵀ · g
                if self.nodes[b.0].needs_grad {
                    let mut gb = self.take_grad(b);
                    gemm(
                        Layout::transposed(k, m),
                        self.nodes[a.0].value.data(),
                        Layout::normal(m, n),
                        g.data(),
                        gb.data_mut(),
                        k,
                        m,
                        n,
                        true,
                    );
                    self.nodes[b.0].grad = Some(gb);
                }
            }
            &Op::AddRow(x, bias) => {
                let cols = g.cols();
                let mut gb = Tensor::zeros(self.value(bias).shape());
                if cols > 0 {
                    for row in g.data().chunks(cols) {
                        for (o, v) in gb.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
                self.accumulate(x, g.clone());
                self.accumulate(bias, gb);
            }
            &Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.scale(-1.0));
            }
            &Op::Mul(a, b) => {
                let ga = g.mul(self.value(b)).expect("shapes checked in forward");
                let gb = g.mul(self.value(a)).expect("shapes checked in forward");
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            &Op::Scale(a, s) => self.accumulate(a, g.scale(s)),
            &Op::Act(a, act) => {
                let y = &self.nodes[i].value;
                let x = self.value(a);
                let local = match act {
                    Activation::Relu => x.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                    Activation::Tanh => y.map(|v| 1.0 - v * v),
                    Activation::Sigmoid => y.map(|v| v * (1.0 - v)),
                    Activation::Identity => y.map(|_| 1.0),
                };
                let ga = g.mul(&local).expect("same shape");
                self.accumulate(a, ga);
            }
            &Op::LogSoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let cols = y.cols();
                let mut ga = g.clone();
                for (grow, yrow) in ga.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
                    let total: f64 = grow.iter().sum();
                    for (gv, yv) in grow.iter_mut().zip(yrow) {
                        *gv -= yv.exp() * total;
                    }
                }
                self.accumulate(a, ga);
            }
            &Op::Sum(a) => {
                let s = g.data()[0];
                let ga = Tensor::filled(self.value(a).shape(), s);
                self.accumulate(a, ga);
            }
            Op::Gather(a, map) => {
                let (a, map) = (*a, Arc::clone(map));
                if !self.nodes[a.0].needs_grad {
                    return;
                }
                let buf = self.grad_buffer(a).data_mut();
                for (gi, &src) in g.data().iter().zip(map.iter()) {
                    if src != ZERO_FILL {
                        buf[src] += gi;
                    }
                }
            }
            Op::Mix(a, rows) => {
                let (a, rows) = (*a, Arc::clone(rows));
                if !self.nodes[a.0].needs_grad {
                    return;
                }
                let d = g.cols();
                let buf = self.grad_buffer(a).data_mut();
                for (i_out, row) in rows.iter().enumerate() {
                    let grow = &g.data()[i_out * d..(i_out + 1) * d];
                    for &(j, w) in row {
                        for (o, gv) in buf[j * d..(j + 1) * d].iter_mut().zip(grow) {
                            *o += w * gv;
                        }
                    }
                }
            }
            Op::EmbeddingBag(table, bags) => {
                let (table, bags) = (*table, Arc::clone(bags));
                if !self.nodes[table.0].needs_grad {
                    return;
                }
                let d = g.cols();
                let buf = self.grad_buffer(table).data_mut();
                for (i_out, bag) in bags.iter().enumerate() {
                    let grow = &g.data()[i_out * d..(i_out + 1) * d];
                    for &idx in bag {
                        for (o, gv) in buf[idx * d..(idx + 1) * d].iter_mut().zip(grow) {
                            *o += gv;
                        }
                    }
                }
            }
        }
    }
}

fn parents(op: &Op) -> [Option<Var>; 2] {
    match op {
        Op::Leaf | Op::Param(_) => [None, None],
        &Op::MatMul(a, b)
        | &Op::AddRow(a, b)
        | &Op::Add(a, b)
        | &Op::Sub(a, b)
        | &Op::Mul(a, b) => [Some(a), Some(b)],
        &Op::Scale(a, _) | &Op::Act(a, _) | &Op::LogSoftmaxRows(a) | &Op::Sum(a) => [Some(a), None],
        Op::Gather(a, _) | Op::Mix(a, _) | Op::EmbeddingBag(a, _) => [Some(*a), None],
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "constant",
        Op::Param(_) => "parameter",
        Op::MatMul(..) => "matmul",
        Op::AddRow(..) => "add_row",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Act(..) => "activation",
        Op::LogSoftmaxRows(_) => "log_softmax",
        Op::Sum(_) => "sum",
        Op::Gather(..) => "gather",
        Op::Mix(..) => "mix",
        Op::EmbeddingBag(..) => "embedding_bag",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check_graph, Rng};

    #[test]
    fn sum_of_vector_has_unit_gradient() {
        let mut g = Graph::new();
        let x = g.param(0, &Tensor::vector(vec![1.0, -2.0, 5.0])).unwrap();
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_at_three() {
        let mut g = Graph::new();
        let x = g.param(0, &Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2])).unwrap();
        assert!(matches!(g.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn reused_node_accumulates() {
        // f = sum(W x) + sum(W x) = 2 sum(W x)
        let mut g = Graph::new();
        let w = g
            .param(0, &Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap())
            .unwrap();
        let x = g
            .constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap())
            .unwrap();
        let y = g.matmul(w, x).unwrap();
        let z = g.add(y, y).unwrap();
        let s = g.sum(z).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[6.0, 8.0]);
    }

    #[test]
    fn non_finite_results_are_errors() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1e308])).unwrap();
        assert!(matches!(g.scale(x, 10.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let mut rng = Rng::new(17);
        let theta = Tensor::new(vec![3, 4], (0..12).map(|_| rng.gaussian()).collect()).unwrap();
        let x = Tensor::new(vec![2, 3], (0..6).map(|_| rng.gaussian()).collect()).unwrap();
        let err = grad_check_graph(&theta, 1e-5, |g, w| {
            let xv = g.constant(x.clone())?;
            let h = g.matmul(xv, w)?;
            let h = g.tanh(h)?;
            let h2 = g.mul(h, h)?;
            let lp = g.log_softmax_rows(h2)?;
            let picked = g.pick(lp, vec![1, 6])?;
            g.sum(picked)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    fn random_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gaussian()).collect()).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn every_op_matches_finite_differences(
            m in 1usize..=8,
            n in 1usize..=8,
            op in 0usize..12,
            seed in proptest::prelude::any::<u64>(),
        ) {
            let mut rng = Rng::new(seed);
            // Keep relu inputs away from the kink so central differences are valid.
            let theta = random_tensor(&mut rng, &[m, n]).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
            let other = random_tensor(&mut rng, &[m, n]);
            let right = random_tensor(&mut rng, &[n, 3]);
            let bias = random_tensor(&mut rng, &[n]);
            let weights = random_tensor(&mut rng, &[m, n]);
            let err = grad_check_graph(&theta, 1e-5, |g, x| {
                let y = match op {
                    0 => { let r = g.constant(right.clone())?; g.matmul(x, r)? }
                    1 => { let b = g.constant(bias.clone())?; g.add_row(x, b)? }
                    2 => { let o = g.constant(other.clone())?; g.add(x, o)? }
                    3 => { let o = g.constant(other.clone())?; g.sub(o, x)? }
                    4 => { let o = g.constant(other.clone())?; g.mul(x, o)? }
                    5 => g.scale(x, -2.5)?,
                    6 => g.relu(x)?,
                    7 => g.tanh(x)?,
                    8 => g.sigmoid(x)?,
                    9 => g.log_softmax_rows(x)?,
                    10 => {
                        let rows: MixRows = (0..m).map(|i| vec![(i, 0.5), ((i + 1) % m, 0.25)]).collect();
                        g.mix(x, Arc::new(rows))?
                    }
                    _ => {
                        let map: Vec<usize> = (0..m * n).rev().map(|i| if i % 3 == 0 { ZERO_FILL } else { i }).collect();
                        g.gather(x, Arc::new(map), vec![n, m])?
                    }
                };
                let shape = g.value(y).shape().to_vec();
                let w: Vec<f64> = weights.data().iter().cycle().take(shape.iter().product()).cloned().collect();
                let wv = g.constant(Tensor::new(shape, w)?)?;
                let z = g.mul(y, wv)?;
                g.sum(z)
            }).unwrap();
            proptest::prop_assert!(err < 1e-4, "op {} err {}", op, err);
        }
    }

    #[test]
    fn gather_mix_and_embedding_gradients() {
        let mut rng = Rng::new(23);
        let theta = Tensor::new(vec![4, 3], (0..12).map(|_| rng.gaussian()).collect()).unwrap();
        let err = grad_check_graph(&theta, 1e-5, |g, t| {
            let bags = Arc::new(vec![vec![0, 2], vec![1], vec![3, 3, 0]]);
            let e = g.embedding_bag(t, bags)?;
            let rows: MixRows = vec![vec![(1, 0.5), (2, 0.5)], vec![(0, 1.0)], vec![]];
            let m = g.mix(e, Arc::new(rows))?;
            let sl = g.slice_cols(m, 1, 3)?;
            let s = g.sigmoid(sl)?;
            let sq = g.mul(s, s)?;
            g.sum(sq)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
