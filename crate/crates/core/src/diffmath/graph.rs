use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, sqrt, tanh};

use super::params::{ParamId, ParamStore};
use crate::linalg::Cholesky;
use crate::{Error, Result, Tensor};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    Constant,
    Param {
        store: u64,
        id: ParamId,
    },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    Square(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    PairSqDist(Var),
    PairDist(Var),
    AddDiag(Var, Var),
    GaussianNll {
        cov: Var,
        targets: Var,
        jitter_scale: f64,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Constant => "constant",
            Op::Param { .. } => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MulScalar(..) => "mul_scalar",
            Op::Square(..) => "square",
            Op::Tanh(..) => "tanh",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::PairSqDist(..) => "pair_sq_dist",
            Op::PairDist(..) => "pair_dist",
            Op::AddDiag(..) => "add_diag",
            Op::GaussianNll { .. } => "gaussian_nll",
        }
    }
}

#[derive(Debug, Clone)]
struct NllCache {
    factor: Cholesky,
    alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
    cache: Option<NllCache>,
}

/// Append-only computation graph. Values are computed eagerly as nodes are
/// added; [`Graph::forward`] replays the whole graph with rebound inputs and
/// fresh parameter values.
///
/// Parents always precede children, so append order is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints of every node with respect to a scalar root.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    params: Vec<(u64, ParamId, usize)>,
}

impl Gradients {
    /// Adjoint of `var`, or `None` when the root does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.adjoints.get(var.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of every parameter of `store` used in the graph to
    /// the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(tag, id, node) in &self.params {
            if tag != store.tag() {
                continue;
            }
            if let Some(g) = &self.adjoints[node] {
                store.grad_mut(id).add_assign(g);
            }
        }
    }
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn leaf(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
            cache: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Named input that [`Graph::forward`] can rebind. Not differentiated.
    pub fn input(&mut self, name: &str, value: Tensor) -> Var {
        self.leaf(Op::Input(name.into()), value, false)
    }

    /// Named input whose adjoint is tracked by [`Graph::backward`].
    pub fn input_with_grad(&mut self, name: &str, value: Tensor) -> Var {
        self.leaf(Op::Input(name.into()), value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(Op::Constant, value, false)
    }

    /// Leaf holding the current value of parameter `id` of `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.leaf(
            Op::Param {
                store: store.tag(),
                id,
            },
            store.value(id).clone(),
            true,
        )
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let index = self.nodes.len();
        let (value, cache) = self.eval(index, &op)?;
        let needs_grad = self.parents(&op).iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
            cache,
        });
        Ok(Var(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    /// `a + 1·bias` with `bias` a `1 x m` row broadcast over the rows of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.push(Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.push(Op::Scale(a, factor)).expect("unary op")
    }

    /// `a` times the single value held by the `1 x 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        self.push(Op::MulScalar(a, s))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.push(Op::Square(a)).expect("unary op")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.push(Op::Tanh(a)).expect("unary op")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.push(Op::LeakyRelu(a, slope)).expect("unary op")
    }

    /// `max(a, 0)`; the subgradient at exactly zero is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.push(Op::Relu(a)).expect("unary op")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.push(Op::Exp(a)).expect("unary op")
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::Sum(a)).expect("unary op")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.push(Op::Mean(a)).expect("unary op")
    }

    /// `n x n` matrix of squared Euclidean distances between the rows of an
    /// `n x d` input.
    pub fn pair_sq_dist(&mut self, z: Var) -> Var {
        self.push(Op::PairSqDist(z)).expect("unary op")
    }

    /// `n x n` matrix of Euclidean distances between rows. The gradient of a
    /// zero distance is taken to be 0.
    pub fn pair_dist(&mut self, z: Var) -> Var {
        self.push(Op::PairDist(z)).expect("unary op")
    }

    /// `a + s·I` for square `a` and `1 x 1` node `s`.
    pub fn add_diag(&mut self, a: Var, s: Var) -> Result<Var> {
        self.push(Op::AddDiag(a, s))
    }

    /// Gaussian negative log marginal likelihood
    /// `½ yᵀA⁻¹y + ½ log det A + (n/2) log 2π` of targets `y` (`n x 1`) under
    /// covariance `A` (`n x n`). Cholesky jitter escalates relative to
    /// `jitter_scale`.
    pub fn gaussian_nll(&mut self, cov: Var, targets: Var, jitter_scale: f64) -> Result<Var> {
        self.push(Op::GaussianNll {
            cov,
            targets,
            jitter_scale,
        })
    }

    fn parents(&self, op: &Op) -> Vec<Var> {
        match *op {
            Op::Input(_) | Op::Constant | Op::Param { .. } => Vec::new(),
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulScalar(a, b)
            | Op::AddDiag(a, b) => vec![a, b],
            Op::GaussianNll { cov, targets, .. } => vec![cov, targets],
            Op::Scale(a, _)
            | Op::Square(a)
            | Op::Tanh(a)
            | Op::LeakyRelu(a, _)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::PairSqDist(a)
            | Op::PairDist(a) => vec![a],
        }
    }

    fn eval(&self, node: usize, op: &Op) -> Result<(Tensor, Option<NllCache>)> {
        let val = |v: Var| -> Result<&Tensor> {
            if v.0 >= node {
                return Err(Error::Shape {
                    node,
                    op: op.name(),
                    detail: format!("parent {} does not precede the node", v.0),
                });
            }
            Ok(&self.nodes[v.0].value)
        };
        let mismatch = |detail: String| Error::Shape {
            node,
            op: op.name(),
            detail,
        };
        let out = match *op {
            Op::Input(_) | Op::Constant | Op::Param { .. } => {
                return Ok((self.nodes[node].value.clone(), None))
            }
            Op::MatMul(a, b) => {
                let (a, b) = (val(a)?, val(b)?);
                if a.cols() != b.rows() {
                    return Err(mismatch(format!("{:?} x {:?}", a.shape(), b.shape())));
                }
                a.matmul(b)
            }
            Op::AddBias(a, b) => {
                let (a, b) = (val(a)?, val(b)?);
                if b.rows() != 1 || b.cols() != a.cols() {
                    return Err(mismatch(format!(
                        "bias {:?} for input {:?}",
                        b.shape(),
                        a.shape()
                    )));
                }
                let mut out = a.clone();
                for r in 0..out.rows() {
                    for (o, &bv) in out.row_mut(r).iter_mut().zip(b.as_slice()) {
                        *o += bv;
                    }
                }
                out
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (val(a)?, val(b)?);
                if x.shape() != y.shape() {
                    return Err(mismatch(format!("{:?} vs {:?}", x.shape(), y.shape())));
                }
                match op {
                    Op::Add(..) => x.zip_map(y, |p, q| p + q),
                    Op::Sub(..) => x.zip_map(y, |p, q| p - q),
                    _ => x.zip_map(y, |p, q| p * q),
                }
            }
            Op::Scale(a, c) => val(a)?.map(|v| v * c),
            Op::MulScalar(a, s) => {
                let (a, s) = (val(a)?, val(s)?);
                if !s.is_scalar() {
                    return Err(mismatch(format!(
                        "scalar operand has shape {:?}",
                        s.shape()
                    )));
                }
                let s = s.item();
                a.map(|v| v * s)
            }
            Op::Square(a) => val(a)?.map(|v| v * v),
            Op::Tanh(a) => val(a)?.map(tanh),
            Op::LeakyRelu(a, slope) => val(a)?.map(|v| if v > 0.0 { v } else { slope * v }),
            Op::Relu(a) => val(a)?.map(|v| if v > 0.0 { v } else { 0.0 }),
            Op::Exp(a) => val(a)?.map(exp),
            Op::Sum(a) => Tensor::scalar(val(a)?.sum()),
            Op::Mean(a) => {
                let a = val(a)?;
                if a.is_empty() {
                    return Err(mismatch("mean of an empty tensor".into()));
                }
                Tensor::scalar(a.sum() / a.len() as f64)
            }
            Op::PairSqDist(z) => pairwise(val(z)?, |d2| d2),
            Op::PairDist(z) => pairwise(val(z)?, sqrt),
            Op::AddDiag(a, s) => {
                let (a, s) = (val(a)?, val(s)?);
                if a.rows() != a.cols() || !s.is_scalar() {
                    return Err(mismatch(format!(
                        "matrix {:?}, shift {:?}",
                        a.shape(),
                        s.shape()
                    )));
                }
                let mut out = a.clone();
                for i in 0..out.rows() {
                    out.set(i, i, a.get(i, i) + s.item());
                }
                out
            }
            Op::GaussianNll {
                cov,
                targets,
                jitter_scale,
            } => {
                let (k, y) = (val(cov)?, val(targets)?);
                if k.rows() != k.cols() || y.cols() != 1 || y.rows() != k.rows() {
                    return Err(mismatch(format!(
                        "covariance {:?}, targets {:?}",
                        k.shape(),
                        y.shape()
                    )));
                }
                let factor = Cholesky::new(k, jitter_scale)?;
                let alpha = factor.solve(y.as_slice());
                let fit: f64 = y.as_slice().iter().zip(&alpha).map(|(a, b)| a * b).sum();
                let n = y.rows() as f64;
                let value = 0.5 * fit + 0.5 * factor.log_det() + 0.5 * n * LN_2PI;
                return Ok((Tensor::scalar(value), Some(NllCache { factor, alpha })));
            }
        };
        Ok((out, None))
    }

    /// Re-evaluates every node in order with `inputs` rebound by name and
    /// parameters re-read from `stores`, returning the last node's value.
    pub fn forward(
        &mut self,
        stores: &[&ParamStore],
        inputs: &BTreeMap<String, Tensor>,
    ) -> Result<&Tensor> {
        for i in 0..self.nodes.len() {
            let op = self.nodes[i].op.clone();
            match &op {
                Op::Input(name) => {
                    let v = inputs
                        .get(name)
                        .ok_or_else(|| Error::UnboundInput(name.clone()))?;
                    self.nodes[i].value = v.clone();
                }
                Op::Param { store, id } => {
                    if let Some(s) = stores.iter().find(|s| s.tag() == *store) {
                        self.nodes[i].value = s.value(*id).clone();
                    }
                }
                Op::Constant => {}
                _ => {
                    let (value, cache) = self.eval(i, &op)?;
                    self.nodes[i].value = value;
                    self.nodes[i].cache = cache;
                }
            }
        }
        self.nodes.last().map(|n| &n.value).ok_or(Error::Empty)
    }

    /// Reverse sweep from `root`, which must be `1 x 1`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if !rv.is_scalar() {
            return Err(Error::NonScalarRoot {
                rows: rv.rows(),
                cols: rv.cols(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .take(root.0 + 1)
            .filter_map(|(i, n)| match n.op {
                Op::Param { store, id } => Some((store, id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            adjoints: adj,
            params,
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let value = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut give = |v: Var, t: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        match node.op {
            Op::Input(_) | Op::Constant | Op::Param { .. } => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    give(a, g.matmul_nt(value(b)));
                }
                if wants(b) {
                    give(b, value(a).matmul_tn(g));
                }
            }
            Op::AddBias(a, b) => {
                give(a, g.clone());
                if wants(b) {
                    let mut col = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (c, &v) in col.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *c += v;
                        }
                    }
                    give(b, col);
                }
            }
            Op::Add(a, b) => {
                give(a, g.clone());
                give(b, g.clone());
            }
            Op::Sub(a, b) => {
                give(a, g.clone());
                give(b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    give(a, g.zip_map(value(b), |p, q| p * q));
                }
                if wants(b) {
                    give(b, g.zip_map(value(a), |p, q| p * q));
                }
            }
            Op::Scale(a, c) => give(a, g.map(|v| v * c)),
            Op::MulScalar(a, s) => {
                let sv = value(s).item();
                if wants(s) {
                    let ds: f64 = g
                        .as_slice()
                        .iter()
                        .zip(value(a).as_slice())
                        .map(|(p, q)| p * q)
                        .sum();
                    give(s, Tensor::scalar(ds));
                }
                give(a, g.map(|v| v * sv));
            }
            Op::Square(a) => give(a, g.zip_map(value(a), |p, x| 2.0 * x * p)),
            Op::Tanh(a) => give(a, g.zip_map(&node.value, |p, t| p * (1.0 - t * t))),
            Op::LeakyRelu(a, slope) => give(
                a,
                g.zip_map(value(a), |p, x| if x > 0.0 { p } else { slope * p }),
            ),
            Op::Relu(a) => give(a, g.zip_map(value(a), |p, x| if x > 0.0 { p } else { 0.0 })),
            Op::Exp(a) => give(a, g.zip_map(&node.value, |p, e| p * e)),
            Op::Sum(a) => {
                let (r, c) = value(a).shape();
                give(a, Tensor::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = value(a).shape();
                give(a, Tensor::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::PairSqDist(z) => {
                let zv = value(z);
                give(z, pair_grad(zv, g, |_| 2.0, &node.value));
            }
            Op::PairDist(z) => {
                let zv = value(z);
                give(
                    z,
                    pair_grad(zv, g, |d| if d > 0.0 { 1.0 / d } else { 0.0 }, &node.value),
                );
            }
            Op::AddDiag(a, s) => {
                give(a, g.clone());
                if wants(s) {
                    let trace: f64 = (0..g.rows()).map(|i| g.get(i, i)).sum();
                    give(s, Tensor::scalar(trace));
                }
            }
            Op::GaussianNll { cov, targets, .. } => {
                let cache = node.cache.as_ref().expect("nll cache populated by forward");
                let gv = g.item();
                if wants(cov) {
                    let n = cache.alpha.len();
                    let mut d = cache.factor.inverse();
                    for i in 0..n {
                        for j in 0..n {
                            let v = 0.5 * gv * (d.get(i, j) - cache.alpha[i] * cache.alpha[j]);
                            d.set(i, j, v);
                        }
                    }
                    give(cov, d);
                }
                if wants(targets) {
                    give(
                        targets,
                        Tensor::column(cache.alpha.iter().map(|a| a * gv).collect()),
                    );
                }
            }
        }
    }
}

/// `out_ij = f(‖z_i − z_j‖²)` for all row pairs.
fn pairwise(z: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let n = z.rows();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = z
                .row(i)
                .iter()
                .zip(z.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = f(d2);
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// Gradient of `Σ_ij G_ij h(z_i, z_j)` where `∂h/∂z_i = c(D_ij)(z_i − z_j)`.
fn pair_grad(z: &Tensor, g: &Tensor, coef: impl Fn(f64) -> f64, dist: &Tensor) -> Tensor {
    let (n, d) = z.shape();
    let mut out = Tensor::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = (g.get(i, j) + g.get(j, i)) * coef(dist.get(i, j));
            if w == 0.0 {
                continue;
            }
            let (zi, zj) = (z.row(i), z.row(j));
            for k in 0..d {
                let v = out.get(i, k) + w * (zi[k] - zj[k]);
                out.set(i, k, v);
            }
        }
    }
    out
}
