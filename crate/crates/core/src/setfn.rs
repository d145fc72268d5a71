//! Submodular set functions with naive and incremental gain oracles.
//!
//! Every function evaluates both as a plain `f64` (sampling, brute force)
//! and as a tape node (likelihood training). Parameters are `Coeff`s:
//! either constants or nodes living on a tape.

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::set::{ItemOrder, ItemSet};

/// A scalar coefficient: a plain constant or a differentiable tape node.
#[derive(Debug, Clone, Copy)]
pub enum Coeff {
    Const(f64),
    Node(NodeId),
}

impl Coeff {
    pub fn value(&self, tape: &Tape) -> f64 {
        match self {
            Coeff::Const(v) => *v,
            Coeff::Node(id) => tape.value(*id),
        }
    }

    pub fn node(&self, tape: &mut Tape) -> NodeId {
        match self {
            Coeff::Const(v) => tape.constant(*v),
            Coeff::Node(id) => *id,
        }
    }
}

/// Incremental double-greedy gain stream over plain values.
///
/// Gains are emitted against the running inner set X (growing from the empty
/// set) and outer set Y (shrinking from the full set) of the double-greedy
/// prefix; `decide` commits the decision for the current item.
pub trait DgValueStream {
    /// (a_i, b_i) for the item at the current step.
    fn gains(&mut self) -> Result<(f64, f64)>;
    fn decide(&mut self, include: bool) -> Result<()>;
}

/// Incremental double-greedy gain stream over tape nodes.
pub trait DgNodeStream {
    fn gains(&mut self, tape: &mut Tape) -> Result<(NodeId, NodeId)>;
    fn decide(&mut self, tape: &mut Tape, include: bool) -> Result<()>;
}

/// An evaluatable, differentiable set function on `{0, .., n-1}`.
pub trait SetFunction {
    fn n(&self) -> usize;

    fn value(&self, tape: &Tape, s: &ItemSet) -> Result<f64>;

    fn node(&self, tape: &mut Tape, s: &ItemSet) -> Result<NodeId>;

    /// Gain of adding: f(S+e) - f(S). Requires e not in S.
    fn gain_add_value(&self, tape: &Tape, e: usize, s: &ItemSet) -> Result<f64> {
        if s.contains(e) {
            return Err(Error::ItemInSet(e));
        }
        Ok(self.value(tape, &s.with(e)?)? - self.value(tape, s)?)
    }

    /// Gain of removing: f(S-e) - f(S). Requires e in S.
    fn gain_remove_value(&self, tape: &Tape, e: usize, s: &ItemSet) -> Result<f64> {
        if !s.contains(e) {
            return Err(Error::ItemNotInSet(e));
        }
        Ok(self.value(tape, &s.without(e)?)? - self.value(tape, s)?)
    }

    fn gain_add_node(&self, tape: &mut Tape, e: usize, s: &ItemSet) -> Result<NodeId> {
        if s.contains(e) {
            return Err(Error::ItemInSet(e));
        }
        let fe = self.node(tape, &s.with(e)?)?;
        let f0 = self.node(tape, s)?;
        Ok(tape.sub(fe, f0))
    }

    fn gain_remove_node(&self, tape: &mut Tape, e: usize, s: &ItemSet) -> Result<NodeId> {
        if !s.contains(e) {
            return Err(Error::ItemNotInSet(e));
        }
        let fe = self.node(tape, &s.without(e)?)?;
        let f0 = self.node(tape, s)?;
        Ok(tape.sub(fe, f0))
    }

    /// Incremental gain stream; falls back to cached naive evaluation
    /// (two function evaluations per step).
    fn dg_value_stream<'a>(
        &'a self,
        tape: &'a Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgValueStream + 'a>> {
        check_order(self.n(), order)?;
        Ok(Box::new(FallbackValueStream::new(self, tape, order)?))
    }

    fn dg_node_stream<'a>(
        &'a self,
        tape: &mut Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgNodeStream + 'a>> {
        check_order(self.n(), order)?;
        Ok(Box::new(FallbackNodeStream::new(self, tape, order)?))
    }
}

fn check_order(n: usize, order: &ItemOrder) -> Result<()> {
    if order.n() != n {
        return Err(Error::Shape(format!("order over {} items, function over {n}", order.n())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fallback streams: cache f(X) and f(Y), two evaluations per step.

struct FallbackValueStream<'a, F: SetFunction + ?Sized> {
    f: &'a F,
    tape: &'a Tape,
    order: Vec<usize>,
    step: usize,
    x: ItemSet,
    y: ItemSet,
    fx: f64,
    fy: f64,
    pending: Option<(f64, f64)>,
}

impl<'a, F: SetFunction + ?Sized> FallbackValueStream<'a, F> {
    fn new(f: &'a F, tape: &'a Tape, order: &ItemOrder) -> Result<Self> {
        let n = f.n();
        let x = ItemSet::empty(n);
        let y = ItemSet::full(n);
        let fx = f.value(tape, &x)?;
        let fy = f.value(tape, &y)?;
        Ok(FallbackValueStream {
            f,
            tape,
            order: order.perm().to_vec(),
            step: 0,
            x,
            y,
            fx,
            fy,
            pending: None,
        })
    }
}

impl<F: SetFunction + ?Sized> DgValueStream for FallbackValueStream<'_, F> {
    fn gains(&mut self) -> Result<(f64, f64)> {
        if self.step >= self.order.len() {
            return Err(Error::Domain("gain stream exhausted".into()));
        }
        let e = self.order[self.step];
        let fxe = self.f.value(self.tape, &self.x.with(e)?)?;
        let fye = self.f.value(self.tape, &self.y.without(e)?)?;
        let a = fxe - self.fx;
        let b = fye - self.fy;
        self.pending = Some((fxe, fye));
        Ok((a, b))
    }

    fn decide(&mut self, include: bool) -> Result<()> {
        let (fxe, fye) = self
            .pending
            .take()
            .ok_or_else(|| Error::Domain("decide before gains".into()))?;
        let e = self.order[self.step];
        if include {
            self.x.insert(e)?;
            self.fx = fxe;
        } else {
            self.y.remove(e)?;
            self.fy = fye;
        }
        self.step += 1;
        Ok(())
    }
}

struct FallbackNodeStream<'a, F: SetFunction + ?Sized> {
    f: &'a F,
    order: Vec<usize>,
    step: usize,
    x: ItemSet,
    y: ItemSet,
    fx: NodeId,
    fy: NodeId,
    pending: Option<(NodeId, NodeId)>,
}

impl<'a, F: SetFunction + ?Sized> FallbackNodeStream<'a, F> {
    fn new(f: &'a F, tape: &mut Tape, order: &ItemOrder) -> Result<Self> {
        let n = f.n();
        let x = ItemSet::empty(n);
        let y = ItemSet::full(n);
        let fx = f.node(tape, &x)?;
        let fy = f.node(tape, &y)?;
        Ok(FallbackNodeStream { f, order: order.perm().to_vec(), step: 0, x, y, fx, fy, pending: None })
    }
}

impl<F: SetFunction + ?Sized> DgNodeStream for FallbackNodeStream<'_, F> {
    fn gains(&mut self, tape: &mut Tape) -> Result<(NodeId, NodeId)> {
        if self.step >= self.order.len() {
            return Err(Error::Domain("gain stream exhausted".into()));
        }
        let e = self.order[self.step];
        let fxe = self.f.node(tape, &self.x.with(e)?)?;
        let fye = self.f.node(tape, &self.y.without(e)?)?;
        let a = tape.sub(fxe, self.fx);
        let b = tape.sub(fye, self.fy);
        self.pending = Some((fxe, fye));
        Ok((a, b))
    }

    fn decide(&mut self, _tape: &mut Tape, include: bool) -> Result<()> {
        let (fxe, fye) = self
            .pending
            .take()
            .ok_or_else(|| Error::Domain("decide before gains".into()))?;
        let e = self.order[self.step];
        if include {
            self.x.insert(e)?;
            self.fx = fxe;
        } else {
            self.y.remove(e)?;
            self.fy = fye;
        }
        self.step += 1;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Modular function: f(S) = sum_{e in S} s_e.

#[derive(Debug, Clone)]
pub struct ModularFn {
    s: Vec<Coeff>,
}

impl ModularFn {
    pub fn from_consts(s: &[f64]) -> Self {
        ModularFn { s: s.iter().map(|&v| Coeff::Const(v)).collect() }
    }

    pub fn from_nodes(s: Vec<NodeId>) -> Self {
        ModularFn { s: s.into_iter().map(Coeff::Node).collect() }
    }

    pub fn weight(&self, tape: &Tape, e: usize) -> f64 {
        self.s[e].value(tape)
    }
}

impl SetFunction for ModularFn {
    fn n(&self) -> usize {
        self.s.len()
    }

    fn value(&self, tape: &Tape, s: &ItemSet) -> Result<f64> {
        check_subset(self.n(), s)?;
        Ok(s.iter().map(|e| self.s[e].value(tape)).sum())
    }

    fn node(&self, tape: &mut Tape, s: &ItemSet) -> Result<NodeId> {
        check_subset(self.n(), s)?;
        let ids: Vec<NodeId> = s.iter().map(|e| self.s[e].node(tape)).collect();
        Ok(tape.sum(&ids))
    }

    fn dg_value_stream<'a>(
        &'a self,
        tape: &'a Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgValueStream + 'a>> {
        check_order(self.n(), order)?;
        let s: Vec<f64> = order.perm().iter().map(|&e| self.s[e].value(tape)).collect();
        Ok(Box::new(ModularValueStream { s, step: 0, ready: false }))
    }

    fn dg_node_stream<'a>(
        &'a self,
        tape: &mut Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgNodeStream + 'a>> {
        check_order(self.n(), order)?;
        let nodes: Vec<(NodeId, NodeId)> = order
            .perm()
            .iter()
            .map(|&e| {
                let a = self.s[e].node(tape);
                let b = tape.neg(a);
                (a, b)
            })
            .collect();
        Ok(Box::new(ModularNodeStream { nodes, step: 0, ready: false }))
    }
}

struct ModularValueStream {
    s: Vec<f64>,
    step: usize,
    ready: bool,
}

impl DgValueStream for ModularValueStream {
    fn gains(&mut self) -> Result<(f64, f64)> {
        if self.step >= self.s.len() {
            return Err(Error::Domain("gain stream exhausted".into()));
        }
        self.ready = true;
        Ok((self.s[self.step], -self.s[self.step]))
    }

    fn decide(&mut self, _include: bool) -> Result<()> {
        if !self.ready {
            return Err(Error::Domain("decide before gains".into()));
        }
        self.ready = false;
        self.step += 1;
        Ok(())
    }
}

struct ModularNodeStream {
    nodes: Vec<(NodeId, NodeId)>,
    step: usize,
    ready: bool,
}

impl DgNodeStream for ModularNodeStream {
    fn gains(&mut self, _tape: &mut Tape) -> Result<(NodeId, NodeId)> {
        if self.step >= self.nodes.len() {
            return Err(Error::Domain("gain stream exhausted".into()));
        }
        self.ready = true;
        Ok(self.nodes[self.step])
    }

    fn decide(&mut self, _tape: &mut Tape, _include: bool) -> Result<()> {
        if !self.ready {
            return Err(Error::Domain("decide before gains".into()));
        }
        self.ready = false;
        self.step += 1;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Cut function: f(S) = sum_{i in S} sum_{j not in S} w_ij on the full vertex
// set, W symmetric, non-negative, zero diagonal.

#[derive(Debug, Clone)]
pub struct CutFn {
    n: usize,
    w: Vec<Coeff>, // n x n, row-major, symmetric by construction
}

impl CutFn {
    /// Build from a full constant matrix; validates symmetry, zero diagonal
    /// and non-negativity.
    pub fn from_matrix(n: usize, w: &[f64]) -> Result<Self> {
        if w.len() != n * n {
            return Err(Error::Shape(format!("weight matrix len {} != {n}x{n}", w.len())));
        }
        for i in 0..n {
            if w[i * n + i] != 0.0 {
                return Err(Error::Config(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                if w[i * n + j] < 0.0 {
                    return Err(Error::Config(format!("negative weight at ({i},{j})")));
                }
                if w[i * n + j] != w[j * n + i] {
                    return Err(Error::Config(format!("asymmetric weights at ({i},{j})")));
                }
            }
        }
        Ok(CutFn { n, w: w.iter().map(|&v| Coeff::Const(v)).collect() })
    }

    /// Build from the strict upper triangle (i < j, row-major order);
    /// symmetry and zero diagonal hold by construction.
    pub fn from_upper_coeffs(n: usize, upper: &[Coeff]) -> Result<Self> {
        if upper.len() != n * (n - 1) / 2 {
            return Err(Error::Shape(format!(
                "expected {} upper-triangle entries, got {}",
                n * (n - 1) / 2,
                upper.len()
            )));
        }
        let mut w = vec![Coeff::Const(0.0); n * n];
        let mut idx = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                w[i * n + j] = upper[idx];
                w[j * n + i] = upper[idx];
                idx += 1;
            }
        }
        Ok(CutFn { n, w })
    }

    pub fn weight_value(&self, tape: &Tape, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j].value(tape)
    }
}

impl SetFunction for CutFn {
    fn n(&self) -> usize {
        self.n
    }

    fn value(&self, tape: &Tape, s: &ItemSet) -> Result<f64> {
        check_subset(self.n, s)?;
        let mut total = 0.0;
        for i in s.iter() {
            for j in 0..self.n {
                if !s.contains(j) {
                    total += self.w[i * self.n + j].value(tape);
                }
            }
        }
        Ok(total)
    }

    fn node(&self, tape: &mut Tape, s: &ItemSet) -> Result<NodeId> {
        check_subset(self.n, s)?;
        let mut ids = Vec::new();
        for i in s.iter() {
            for j in 0..self.n {
                if !s.contains(j) {
                    ids.push(self.w[i * self.n + j].node(tape));
                }
            }
        }
        Ok(tape.sum(&ids))
    }

    fn dg_value_stream<'a>(
        &'a self,
        tape: &'a Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgValueStream + 'a>> {
        check_order(self.n, order)?;
        let w: Vec<f64> = self.w.iter().map(|c| c.value(tape)).collect();
        let deg: Vec<f64> = (0..self.n).map(|i| w[i * self.n..(i + 1) * self.n].iter().sum()).collect();
        Ok(Box::new(CutValueStream {
            n: self.n,
            w,
            deg: deg.clone(),
            dx: vec![0.0; self.n],
            dy: deg,
            order: order.perm().to_vec(),
            step: 0,
            ready: false,
        }))
    }

    fn dg_node_stream<'a>(
        &'a self,
        tape: &mut Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgNodeStream + 'a>> {
        check_order(self.n, order)?;
        let wn: Vec<NodeId> = self.w.iter().map(|c| c.node(tape)).collect();
        let deg: Vec<NodeId> = (0..self.n)
            .map(|i| tape.sum(&wn[i * self.n..(i + 1) * self.n]))
            .collect();
        let zero = tape.constant(0.0);
        Ok(Box::new(CutNodeStream {
            n: self.n,
            w: wn,
            deg: deg.clone(),
            dx: vec![zero; self.n],
            dy: deg,
            order: order.perm().to_vec(),
            step: 0,
            ready: false,
        }))
    }
}

/// Tracks each item's weighted degree into X and into Y.
struct CutValueStream {
    n: usize,
    w: Vec<f64>,
    deg: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
    order: Vec<usize>,
    step: usize,
    ready: bool,
}

impl DgValueStream for CutValueStream {
    fn gains(&mut self) -> Result<(f64, f64)> {
        if self.step >= self.order.len() {
            return Err(Error::Domain("gain stream exhausted".into()));
        }
        let e = self.order[self.step];
        let a = self.deg[e] - 2.0 * self.dx[e];
        let b = 2.0 * self.dy[e] - self.deg[e];
        self.ready = true;
        Ok((a, b))
    }

    fn decide(&mut self, include: bool) -> Result<()> {
        if !self.ready {
            return Err(Error::Domain("decide before gains".into()));
        }
        self.ready = false;
        let e = self.order[self.step];
        for j in 0..self.n {
            let wej = self.w[e * self.n + j];
            if include {
                self.dx[j] += wej;
            } else {
                self.dy[j] -= wej;
            }
        }
        self.step += 1;
        Ok(())
    }
}

struct CutNodeStream {
    n: usize,
    w: Vec<NodeId>,
    deg: Vec<NodeId>,
    dx: Vec<NodeId>,
    dy: Vec<NodeId>,
    order: Vec<usize>,
    step: usize,
    ready: bool,
}

impl DgNodeStream for CutNodeStream {
    fn gains(&mut self, tape: &mut Tape) -> Result<(NodeId, NodeId)> {
        if self.step >= self.order.len() {
            return Err(Error::Domain("gain stream exhausted".into()));
        }
        let e = self.order[self.step];
        let dx2 = tape.scale(self.dx[e], 2.0);
        let a = tape.sub(self.deg[e], dx2);
        let dy2 = tape.scale(self.dy[e], 2.0);
        let b = tape.sub(dy2, self.deg[e]);
        self.ready = true;
        Ok((a, b))
    }

    fn decide(&mut self, tape: &mut Tape, include: bool) -> Result<()> {
        if !self.ready {
            return Err(Error::Domain("decide before gains".into()));
        }
        self.ready = false;
        let e = self.order[self.step];
        for j in 0..self.n {
            let wej = self.w[e * self.n + j];
            if include {
                self.dx[j] = tape.add(self.dx[j], wej);
            } else {
                self.dy[j] = tape.sub(self.dy[j], wej);
            }
        }
        self.step += 1;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Facility location: f(S) = max_{e in S} w_e, f(empty) = 0, w >= 0.

#[derive(Debug, Clone)]
pub struct FacilityLocationFn {
    w: Vec<Coeff>,
}

impl FacilityLocationFn {
    pub fn from_consts(w: &[f64]) -> Result<Self> {
        if let Some(&v) = w.iter().find(|&&v| v < 0.0) {
            return Err(Error::Config(format!("negative facility weight {v}")));
        }
        Ok(FacilityLocationFn { w: w.iter().map(|&v| Coeff::Const(v)).collect() })
    }

    pub fn from_nodes(w: Vec<NodeId>) -> Self {
        FacilityLocationFn { w: w.into_iter().map(Coeff::Node).collect() }
    }
}

impl SetFunction for FacilityLocationFn {
    fn n(&self) -> usize {
        self.w.len()
    }

    fn value(&self, tape: &Tape, s: &ItemSet) -> Result<f64> {
        check_subset(self.n(), s)?;
        Ok(s.iter().map(|e| self.w[e].value(tape)).fold(0.0, f64::max))
    }

    fn node(&self, tape: &mut Tape, s: &ItemSet) -> Result<NodeId> {
        check_subset(self.n(), s)?;
        if s.is_empty() {
            return Ok(tape.constant(0.0));
        }
        let mut ids = vec![tape.constant(0.0)];
        ids.extend(s.iter().map(|e| self.w[e].node(tape)));
        tape.max(&ids)
    }

    fn dg_value_stream<'a>(
        &'a self,
        tape: &'a Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgValueStream + 'a>> {
        check_order(self.n(), order)?;
        let w: Vec<f64> = order.perm().iter().map(|&e| self.w[e].value(tape)).collect();
        // suffix[i] = max weight among items at steps >= i (0 past the end)
        let n = w.len();
        let mut suffix = vec![0.0f64; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1].max(w[i]);
        }
        Ok(Box::new(FacLocValueStream { w, suffix, cx: 0.0, step: 0, ready: false }))
    }

    fn dg_node_stream<'a>(
        &'a self,
        tape: &mut Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgNodeStream + 'a>> {
        check_order(self.n(), order)?;
        let w: Vec<NodeId> = order.perm().iter().map(|&e| self.w[e].node(tape)).collect();
        let n = w.len();
        let mut suffix = vec![tape.constant(0.0); n + 1];
        for i in (0..n).rev() {
            suffix[i] = tape.max(&[w[i], suffix[i + 1]])?;
        }
        let cx = tape.constant(0.0);
        Ok(Box::new(FacLocNodeStream { w, suffix, cx, step: 0, ready: false }))
    }
}

/// Running max c_i over the kept items plus a precomputed suffix max over
/// the not-yet-visited items.
struct FacLocValueStream {
    w: Vec<f64>,
    suffix: Vec<f64>,
    cx: f64,
    step: usize,
    ready: bool,
}

impl DgValueStream for FacLocValueStream {
    fn gains(&mut self) -> Result<(f64, f64)> {
        if self.step >= self.w.len() {
            return Err(Error::Domain("gain stream exhausted".into()));
        }
        let i = self.step;
        let a = self.cx.max(self.w[i]) - self.cx;
        let fy = self.cx.max(self.suffix[i]);
        let fy_minus = self.cx.max(self.suffix[i + 1]);
        self.ready = true;
        Ok((a, fy_minus - fy))
    }

    fn decide(&mut self, include: bool) -> Result<()> {
        if !self.ready {
            return Err(Error::Domain("decide before gains".into()));
        }
        self.ready = false;
        if include {
            self.cx = self.cx.max(self.w[self.step]);
        }
        self.step += 1;
        Ok(())
    }
}

struct FacLocNodeStream {
    w: Vec<NodeId>,
    suffix: Vec<NodeId>,
    cx: NodeId,
    step: usize,
    ready: bool,
}

impl DgNodeStream for FacLocNodeStream {
    fn gains(&mut self, tape: &mut Tape) -> Result<(NodeId, NodeId)> {
        if self.step >= self.w.len() {
            return Err(Error::Domain("gain stream exhausted".into()));
        }
        let i = self.step;
        let cxe = tape.max(&[self.cx, self.w[i]])?;
        let a = tape.sub(cxe, self.cx);
        let fy = tape.max(&[self.cx, self.suffix[i]])?;
        let fy_minus = tape.max(&[self.cx, self.suffix[i + 1]])?;
        let b = tape.sub(fy_minus, fy);
        self.ready = true;
        Ok((a, b))
    }

    fn decide(&mut self, tape: &mut Tape, include: bool) -> Result<()> {
        if !self.ready {
            return Err(Error::Domain("decide before gains".into()));
        }
        self.ready = false;
        if include {
            self.cx = tape.max(&[self.cx, self.w[self.step]])?;
        }
        self.step += 1;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// FLID: f(S) = sum_{i in S} u_i + sum_d (max_{i in S} w_{i,d} - sum_{i in S} w_{i,d}).

#[derive(Debug, Clone)]
pub struct FlidFn {
    u: Vec<Coeff>,
    w_lat: Vec<Coeff>, // n x d_latent, row-major
    d_latent: usize,
}

impl FlidFn {
    pub fn new(u: Vec<Coeff>, w_lat: Vec<Coeff>, d_latent: usize) -> Result<Self> {
        if d_latent == 0 || w_lat.len() != u.len() * d_latent {
            return Err(Error::Shape(format!(
                "latent matrix len {} != {} x {d_latent}",
                w_lat.len(),
                u.len()
            )));
        }
        Ok(FlidFn { u, w_lat, d_latent })
    }

    pub fn from_consts(u: &[f64], w_lat: &[f64], d_latent: usize) -> Result<Self> {
        if let Some(&v) = w_lat.iter().find(|&&v| v < 0.0) {
            return Err(Error::Config(format!("negative latent weight {v}")));
        }
        FlidFn::new(
            u.iter().map(|&v| Coeff::Const(v)).collect(),
            w_lat.iter().map(|&v| Coeff::Const(v)).collect(),
            d_latent,
        )
    }

    pub fn d_latent(&self) -> usize {
        self.d_latent
    }

    /// Diversity term div(S) <= 0.
    pub fn diversity_value(&self, tape: &Tape, s: &ItemSet) -> Result<f64> {
        check_subset(self.n(), s)?;
        let mut div = 0.0;
        for d in 0..self.d_latent {
            let mut mx = f64::NEG_INFINITY;
            let mut sum = 0.0;
            for i in s.iter() {
                let w = self.w_lat[i * self.d_latent + d].value(tape);
                mx = mx.max(w);
                sum += w;
            }
            if !s.is_empty() {
                div += mx - sum;
            }
        }
        Ok(div)
    }
}

impl SetFunction for FlidFn {
    fn n(&self) -> usize {
        self.u.len()
    }

    fn value(&self, tape: &Tape, s: &ItemSet) -> Result<f64> {
        check_subset(self.n(), s)?;
        let util: f64 = s.iter().map(|e| self.u[e].value(tape)).sum();
        Ok(util + self.diversity_value(tape, s)?)
    }

    fn node(&self, tape: &mut Tape, s: &ItemSet) -> Result<NodeId> {
        check_subset(self.n(), s)?;
        if s.is_empty() {
            return Ok(tape.constant(0.0));
        }
        let mut parts: Vec<NodeId> = s.iter().map(|e| self.u[e].node(tape)).collect();
        for d in 0..self.d_latent {
            let ws: Vec<NodeId> =
                s.iter().map(|i| self.w_lat[i * self.d_latent + d].node(tape)).collect();
            let mx = tape.max(&ws)?;
            let sum = tape.sum(&ws);
            parts.push(tape.sub(mx, sum));
        }
        Ok(tape.sum(&parts))
    }
}

// ---------------------------------------------------------------------------
// Shift to a non-negative function: f(S) = inner(S) - shift.

#[derive(Debug, Clone)]
pub struct ShiftedFn<F> {
    pub inner: F,
    pub shift: f64,
}

impl<F: SetFunction> SetFunction for ShiftedFn<F> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn value(&self, tape: &Tape, s: &ItemSet) -> Result<f64> {
        Ok(self.inner.value(tape, s)? - self.shift)
    }

    fn node(&self, tape: &mut Tape, s: &ItemSet) -> Result<NodeId> {
        let v = self.inner.node(tape, s)?;
        let c = tape.constant(self.shift);
        Ok(tape.sub(v, c))
    }

    // Gains of the shifted function equal the inner gains, so the inner
    // incremental machinery is reused directly.
    fn dg_value_stream<'a>(
        &'a self,
        tape: &'a Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgValueStream + 'a>> {
        self.inner.dg_value_stream(tape, order)
    }

    fn dg_node_stream<'a>(
        &'a self,
        tape: &mut Tape,
        order: &ItemOrder,
    ) -> Result<Box<dyn DgNodeStream + 'a>> {
        self.inner.dg_node_stream(tape, order)
    }
}

/// Shift a function by its exhaustive minimum (2^n evaluations, n <= 20)
/// or by a caller-supplied shift.
pub fn shift_to_nonnegative<F: SetFunction>(
    f: F,
    tape: &Tape,
    supplied: Option<f64>,
) -> Result<ShiftedFn<F>> {
    let shift = match supplied {
        Some(v) => v,
        None => {
            let n = f.n();
            if n > 20 {
                return Err(Error::TooLarge(format!(
                    "n={n} too large to enumerate a minimum; supply a shift"
                )));
            }
            let mut min = f64::INFINITY;
            for mask in 0..(1u64 << n) {
                min = min.min(f.value(tape, &ItemSet::from_mask(n, mask))?);
            }
            min
        }
    };
    Ok(ShiftedFn { inner: f, shift })
}

// ---------------------------------------------------------------------------
// Two-item toy fixture: f(S) = 2 + max_{i in S} w_i - |S|^2 with w = (2, 1).
// Non-negative submodular; its output depends on the item order, and the
// second step of the (e1, e2) order ties with a = b = 0.

#[derive(Debug, Clone)]
pub struct ToyOrderFn {
    w: Vec<f64>,
}

impl ToyOrderFn {
    pub fn standard() -> Self {
        ToyOrderFn { w: vec![2.0, 1.0] }
    }
}

impl SetFunction for ToyOrderFn {
    fn n(&self) -> usize {
        self.w.len()
    }

    fn value(&self, _tape: &Tape, s: &ItemSet) -> Result<f64> {
        check_subset(self.n(), s)?;
        let mx = s.iter().map(|e| self.w[e]).fold(0.0, f64::max);
        let k = s.len() as f64;
        Ok(2.0 + mx - k * k)
    }

    fn node(&self, tape: &mut Tape, s: &ItemSet) -> Result<NodeId> {
        let v = self.value(tape, s)?;
        Ok(tape.constant(v))
    }
}

fn check_subset(n: usize, s: &ItemSet) -> Result<()> {
    if s.n() != n {
        return Err(Error::Shape(format!("subset over {} items, function over {n}", s.n())));
    }
    Ok(())
}
