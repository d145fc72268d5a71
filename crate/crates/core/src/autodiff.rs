//! Reverse-mode scalar automatic differentiation on an append-only tape.
//!
//! Nodes are created eagerly with cached values; `backward` runs a single
//! reverse sweep in tape order, so gradient accumulation is deterministic.

use crate::error::{Error, Result};

/// Index of a node on its tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Exp(NodeId),
    Log(NodeId),
    /// 1 / (1 + exp(-(a-b)/t)), fused for stability and the exact
    /// complement identity.
    SigmoidT { a: NodeId, b: NodeId, t: f64 },
    /// t * log(1 + exp(a/t)), fused stable form.
    SoftplusT { a: NodeId, t: f64 },
    /// Hard max; the full adjoint is routed to `argmax` (lowest index on ties).
    Max { args: Vec<NodeId>, argmax: usize },
    Sum(Vec<NodeId>),
    Dot(Vec<NodeId>, Vec<NodeId>),
    /// Dot product of tape nodes with a constant vector (one matvec row).
    DotConst { ids: Vec<NodeId>, consts: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: f64,
}

/// Named trainable parameter array registered on a tape.
#[derive(Debug, Clone)]
pub struct ParamArray {
    pub name: String,
    pub ids: Vec<NodeId>,
    /// (rows, cols); vectors are (len, 1).
    pub shape: (usize, usize),
}

/// Registry of parameter arrays on one tape.
#[derive(Debug, Default)]
pub struct ParamStore {
    arrays: Vec<ParamArray>,
}

impl ParamStore {
    pub fn arrays(&self) -> &[ParamArray] {
        &self.arrays
    }

    pub fn total_len(&self) -> usize {
        self.arrays.iter().map(|a| a.ids.len()).sum()
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.iter().find(|a| a.name == name)
    }
}

/// Append-only computation graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: ParamStore,
}

// Stable scalar kernels, shared by tape ops and value-only code paths.

/// Logistic function, branch on sign to avoid overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(x)) without overflow; never rounds to a non-positive value.
pub fn log1p_exp(x: f64) -> f64 {
    let v = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    v.max(f64::MIN_POSITIVE)
}

/// t * log(1 + exp(a/t)); strictly positive for all finite a.
pub fn softplus_t(a: f64, t: f64) -> f64 {
    (t * log1p_exp(a / t)).max(f64::MIN_POSITIVE)
}

/// 1 / (1 + exp(-(a-b)/t)).
pub fn sigmoid_t(a: f64, b: f64, t: f64) -> f64 {
    sigmoid((a - b) / t)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn push(&mut self, op: Op, value: f64) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.push(Op::Const, v)
    }

    /// Register a named parameter array; returns contiguous parameter nodes.
    pub fn register_params(
        &mut self,
        name: &str,
        values: &[f64],
        shape: (usize, usize),
    ) -> Result<ParamArray> {
        if shape.0 * shape.1 != values.len() {
            return Err(Error::Shape(format!(
                "array {name}: shape {shape:?} does not match {} values",
                values.len()
            )));
        }
        if self.params.by_name(name).is_some() {
            return Err(Error::Config(format!("duplicate parameter array name {name}")));
        }
        let ids: Vec<NodeId> = values.iter().map(|&v| self.push(Op::Param, v)).collect();
        let arr = ParamArray { name: name.to_string(), ids, shape };
        self.params.arrays.push(arr.clone());
        Ok(arr)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(b) == 0.0 {
            return Err(Error::Domain("division by zero".into()));
        }
        let v = self.value(a) / self.value(b);
        Ok(self.push(Op::Div(a, b), v))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = -self.value(a);
        self.push(Op::Neg(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).exp();
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let x = self.value(a);
        if x <= 0.0 {
            return Err(Error::Domain(format!("log of non-positive value {x}")));
        }
        Ok(self.push(Op::Log(a), x.ln()))
    }

    /// Multiply by a compile-time constant (constant gets its own node).
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let cn = self.constant(c);
        self.mul(a, cn)
    }

    pub fn sigmoid_t(&mut self, a: NodeId, b: NodeId, t: f64) -> Result<NodeId> {
        if t <= 0.0 {
            return Err(Error::Config(format!("temperature must be positive, got {t}")));
        }
        let v = sigmoid_t(self.value(a), self.value(b), t);
        Ok(self.push(Op::SigmoidT { a, b, t }, v))
    }

    pub fn softplus_t(&mut self, a: NodeId, t: f64) -> Result<NodeId> {
        if t <= 0.0 {
            return Err(Error::Config(format!("temperature must be positive, got {t}")));
        }
        let v = softplus_t(self.value(a), t);
        Ok(self.push(Op::SoftplusT { a, t }, v))
    }

    /// Hard maximum of a non-empty list; ties break to the lowest index.
    pub fn max(&mut self, args: &[NodeId]) -> Result<NodeId> {
        if args.is_empty() {
            return Err(Error::Domain("max of empty list".into()));
        }
        let mut argmax = 0;
        let mut best = self.value(args[0]);
        for (i, &id) in args.iter().enumerate().skip(1) {
            let v = self.value(id);
            if v > best {
                best = v;
                argmax = i;
            }
        }
        Ok(self.push(Op::Max { args: args.to_vec(), argmax }, best))
    }

    pub fn sum(&mut self, args: &[NodeId]) -> NodeId {
        let v = args.iter().map(|&id| self.value(id)).sum();
        self.push(Op::Sum(args.to_vec()), v)
    }

    pub fn dot(&mut self, a: &[NodeId], b: &[NodeId]) -> Result<NodeId> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!("dot: {} vs {}", a.len(), b.len())));
        }
        let v = a.iter().zip(b).map(|(&x, &y)| self.value(x) * self.value(y)).sum();
        Ok(self.push(Op::Dot(a.to_vec(), b.to_vec()), v))
    }

    pub fn dot_const(&mut self, ids: &[NodeId], consts: &[f64]) -> Result<NodeId> {
        if ids.len() != consts.len() {
            return Err(Error::Shape(format!("dot_const: {} vs {}", ids.len(), consts.len())));
        }
        let v = ids.iter().zip(consts).map(|(&x, &c)| self.value(x) * c).sum();
        Ok(self.push(Op::DotConst { ids: ids.to_vec(), consts: consts.to_vec() }, v))
    }

    /// Fused matrix-vector product: `mat` is row-major (rows x cols) of tape
    /// nodes, `x` a constant vector. Returns one node per output row.
    pub fn matvec(
        &mut self,
        mat: &[NodeId],
        rows: usize,
        cols: usize,
        x: &[f64],
    ) -> Result<Vec<NodeId>> {
        if mat.len() != rows * cols || x.len() != cols {
            return Err(Error::Shape(format!(
                "matvec: mat len {} vs {rows}x{cols}, x len {}",
                mat.len(),
                x.len()
            )));
        }
        (0..rows).map(|r| self.dot_const(&mat[r * cols..(r + 1) * cols], x)).collect()
    }

    /// Reverse sweep from `root`; returns the adjoint of every node.
    pub fn backward(&self, root: NodeId) -> Vec<f64> {
        let mut adj = vec![0.0; self.nodes.len()];
        adj[root.0] = 1.0;
        for i in (0..=root.0).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match &self.nodes[i].op {
                Op::Const | Op::Param => {}
                Op::Add(a, b) => {
                    adj[a.0] += g;
                    adj[b.0] += g;
                }
                Op::Sub(a, b) => {
                    adj[a.0] += g;
                    adj[b.0] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a.0] += g * self.value(*b);
                    adj[b.0] += g * self.value(*a);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    adj[a.0] += g / bv;
                    adj[b.0] -= g * self.value(*a) / (bv * bv);
                }
                Op::Neg(a) => adj[a.0] -= g,
                Op::Exp(a) => adj[a.0] += g * self.nodes[i].value,
                Op::Log(a) => adj[a.0] += g / self.value(*a),
                Op::SigmoidT { a, b, t } => {
                    let s = self.nodes[i].value;
                    let d = g * s * (1.0 - s) / t;
                    adj[a.0] += d;
                    adj[b.0] -= d;
                }
                Op::SoftplusT { a, t } => {
                    adj[a.0] += g * sigmoid(self.value(*a) / t);
                }
                Op::Max { args, argmax } => {
                    adj[args[*argmax].0] += g;
                }
                Op::Sum(args) => {
                    for a in args {
                        adj[a.0] += g;
                    }
                }
                Op::Dot(a, b) => {
                    for (x, y) in a.iter().zip(b) {
                        adj[x.0] += g * self.value(*y);
                        adj[y.0] += g * self.value(*x);
                    }
                }
                Op::DotConst { ids, consts } => {
                    for (x, c) in ids.iter().zip(consts) {
                        adj[x.0] += g * c;
                    }
                }
            }
        }
        adj
    }

    /// Gradients of `root` gathered per registered parameter array,
    /// in registration order.
    pub fn gradients(&self, root: NodeId) -> Vec<(String, Vec<f64>)> {
        let adj = self.backward(root);
        self.params
            .arrays
            .iter()
            .map(|arr| (arr.name.clone(), arr.ids.iter().map(|id| adj[id.0]).collect()))
            .collect()
    }

    /// Recompute all forward values from the recorded ops; leaves keep their
    /// stored values. Returns true iff every value is reproduced bit-exactly.
    pub fn replay_matches(&self) -> bool {
        let mut vals = vec![0.0f64; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match &node.op {
                Op::Const | Op::Param => node.value,
                Op::Add(a, b) => vals[a.0] + vals[b.0],
                Op::Sub(a, b) => vals[a.0] - vals[b.0],
                Op::Mul(a, b) => vals[a.0] * vals[b.0],
                Op::Div(a, b) => vals[a.0] / vals[b.0],
                Op::Neg(a) => -vals[a.0],
                Op::Exp(a) => vals[a.0].exp(),
                Op::Log(a) => vals[a.0].ln(),
                Op::SigmoidT { a, b, t } => sigmoid_t(vals[a.0], vals[b.0], *t),
                Op::SoftplusT { a, t } => softplus_t(vals[a.0], *t),
                Op::Max { args, argmax } => {
                    let _ = args;
                    let mut best = vals[args[0].0];
                    for id in &args[1..] {
                        best = best.max(vals[id.0]);
                    }
                    debug_assert_eq!(best, vals[args[*argmax].0]);
                    best
                }
                Op::Sum(args) => args.iter().map(|id| vals[id.0]).sum(),
                Op::Dot(a, b) => a.iter().zip(b).map(|(x, y)| vals[x.0] * vals[y.0]).sum(),
                Op::DotConst { ids, consts } => {
                    ids.iter().zip(consts).map(|(x, c)| vals[x.0] * c).sum()
                }
            };
            vals[i] = v;
            if v.to_bits() != node.value.to_bits() {
                return false;
            }
        }
        true
    }
}
