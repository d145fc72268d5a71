//! Probabilistic differentiable double greedy for unconstrained maximization.
//!
//! Items are visited in a fixed order; each step compares the gain of adding
//! the item to the growing inner set against the gain of removing it from the
//! shrinking outer set, and includes it with probability g(a, b). The induced
//! distribution over subsets is differentiable for the smooth link functions.

use rand::Rng;

use crate::autodiff::{log1p_exp, sigmoid_t, softplus_t, NodeId, Tape};
use crate::error::{Error, Result};
use crate::set::{ItemOrder, ItemSet};
use crate::setfn::SetFunction;
use serde::{Deserialize, Serialize};

/// Per-item inclusion probability rule g(a, b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkFunction {
    /// Indicator a >= b (inclusion on ties). Deterministic double greedy.
    Hard,
    /// [a]+ / ([a]+ + [b]+), with 0/0 -> 1/2. Randomized double greedy.
    Ratio,
    /// 1 / (1 + exp(-(a-b)/t)): smooth approximation of the hard rule.
    Sigmoid { t: f64 },
    /// a'/(a'+b') with a' = softplus_t(a), b' = softplus_t(b): smooth
    /// approximation of the ratio rule.
    SoftplusRatio { t: f64 },
}

impl LinkFunction {
    pub fn sigmoid(t: f64) -> Result<Self> {
        if t <= 0.0 {
            return Err(Error::Config(format!("temperature must be positive, got {t}")));
        }
        Ok(LinkFunction::Sigmoid { t })
    }

    pub fn softplus_ratio(t: f64) -> Result<Self> {
        if t <= 0.0 {
            return Err(Error::Config(format!("temperature must be positive, got {t}")));
        }
        Ok(LinkFunction::SoftplusRatio { t })
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self, LinkFunction::Sigmoid { .. } | LinkFunction::SoftplusRatio { .. })
    }

    /// Inclusion probability, always in [0, 1].
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match *self {
            LinkFunction::Hard => {
                if a >= b {
                    1.0
                } else {
                    0.0
                }
            }
            LinkFunction::Ratio => {
                let ap = a.max(0.0);
                let bp = b.max(0.0);
                if ap + bp == 0.0 {
                    0.5
                } else {
                    ap / (ap + bp)
                }
            }
            LinkFunction::Sigmoid { t } => sigmoid_t(a, b, t),
            LinkFunction::SoftplusRatio { t } => {
                let ap = softplus_t(a, t);
                let bp = softplus_t(b, t);
                ap / (ap + bp)
            }
        }
    }

    /// (log g, log(1 - g)) as plain values; either side may be -inf for the
    /// hard and ratio rules.
    pub fn log_pair(&self, a: f64, b: f64) -> (f64, f64) {
        match *self {
            LinkFunction::Hard | LinkFunction::Ratio => {
                let p = self.eval(a, b);
                (p.ln(), (1.0 - p).ln())
            }
            LinkFunction::Sigmoid { t } => {
                (-log1p_exp((b - a) / t), -log1p_exp((a - b) / t))
            }
            LinkFunction::SoftplusRatio { t } => {
                let ap = softplus_t(a, t);
                let bp = softplus_t(b, t);
                let ls = (ap + bp).ln();
                (ap.ln() - ls, bp.ln() - ls)
            }
        }
    }

    /// (log g, log(1 - g)) as tape nodes; only the smooth rules are
    /// differentiable.
    pub fn log_pair_node(
        &self,
        tape: &mut Tape,
        a: NodeId,
        b: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        match *self {
            LinkFunction::Hard | LinkFunction::Ratio => Err(Error::Config(
                "hard and ratio link functions are not differentiable; use sigmoid or softplus-ratio".into(),
            )),
            LinkFunction::Sigmoid { t } => {
                // log sigma((a-b)/t) = -log(1 + exp((b-a)/t))
                let d = tape.sub(b, a);
                let ds = tape.scale(d, 1.0 / t);
                let sp = tape.softplus_t(ds, 1.0)?;
                let lp = tape.neg(sp);
                let dn = tape.sub(a, b);
                let dns = tape.scale(dn, 1.0 / t);
                let spn = tape.softplus_t(dns, 1.0)?;
                let lq = tape.neg(spn);
                Ok((lp, lq))
            }
            LinkFunction::SoftplusRatio { t } => {
                let ap = tape.softplus_t(a, t)?;
                let bp = tape.softplus_t(b, t)?;
                let s = tape.add(ap, bp);
                let la = tape.log(ap)?;
                let lb = tape.log(bp)?;
                let ls = tape.log(s)?;
                Ok((tape.sub(la, ls), tape.sub(lb, ls)))
            }
        }
    }

    /// Inclusion probability as a tape node (smooth rules only).
    pub fn prob_node(&self, tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
        match *self {
            LinkFunction::Hard | LinkFunction::Ratio => Err(Error::Config(
                "hard and ratio link functions are not differentiable".into(),
            )),
            LinkFunction::Sigmoid { t } => tape.sigmoid_t(a, b, t),
            LinkFunction::SoftplusRatio { t } => {
                let ap = tape.softplus_t(a, t)?;
                let bp = tape.softplus_t(b, t)?;
                let s = tape.add(ap, bp);
                tape.div(ap, s)
            }
        }
    }
}

/// One decision of a double-greedy run.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub item: usize,
    pub a: f64,
    pub b: f64,
    pub prob: f64,
    pub included: bool,
}

/// Full record of a run: one step per item, in visit order.
#[derive(Debug, Clone, Default)]
pub struct StepTrace {
    pub steps: Vec<Step>,
}

impl StepTrace {
    pub fn final_set(&self, n: usize) -> ItemSet {
        let mut s = ItemSet::empty(n);
        for st in &self.steps {
            if st.included {
                s.insert(st.item).expect("trace items are distinct");
            }
        }
        s
    }
}

/// Run the algorithm with random decisions; returns the final set and trace.
pub fn sample<R: Rng>(
    f: &dyn SetFunction,
    g: &LinkFunction,
    order: &ItemOrder,
    tape: &Tape,
    rng: &mut R,
) -> Result<(ItemSet, StepTrace)> {
    let n = f.n();
    let mut stream = f.dg_value_stream(tape, order)?;
    let mut trace = StepTrace::default();
    for i in 0..n {
        let (a, b) = stream.gains()?;
        let p = g.eval(a, b);
        let include = rng.gen::<f64>() < p;
        stream.decide(include)?;
        trace.steps.push(Step { item: order.item_at(i), a, b, prob: p, included: include });
    }
    Ok((trace.final_set(n), trace))
}

/// Deterministic execution: include iff g(a, b) >= 1/2.
pub fn map_execute(
    f: &dyn SetFunction,
    g: &LinkFunction,
    order: &ItemOrder,
    tape: &Tape,
) -> Result<ItemSet> {
    let n = f.n();
    let mut stream = f.dg_value_stream(tape, order)?;
    let mut x = ItemSet::empty(n);
    for i in 0..n {
        let (a, b) = stream.gains()?;
        let include = g.eval(a, b) >= 0.5;
        stream.decide(include)?;
        if include {
            x.insert(order.item_at(i))?;
        }
    }
    Ok(x)
}

/// log P(X) as a plain value; may be -inf under the hard or ratio rules.
pub fn log_likelihood_value(
    f: &dyn SetFunction,
    g: &LinkFunction,
    order: &ItemOrder,
    x: &ItemSet,
    tape: &Tape,
) -> Result<f64> {
    if x.n() != f.n() {
        return Err(Error::Shape(format!("target over {} items, function over {}", x.n(), f.n())));
    }
    let mut stream = f.dg_value_stream(tape, order)?;
    let mut ll = 0.0;
    for i in 0..f.n() {
        let e = order.item_at(i);
        let (a, b) = stream.gains()?;
        let (lp, lq) = g.log_pair(a, b);
        ll += if x.contains(e) { lp } else { lq };
        stream.decide(x.contains(e))?;
    }
    Ok(ll)
}

/// log P(X) as a tape node, differentiable in the function's parameters.
/// Only the smooth link functions are accepted.
pub fn log_likelihood_node(
    f: &dyn SetFunction,
    g: &LinkFunction,
    order: &ItemOrder,
    x: &ItemSet,
    tape: &mut Tape,
) -> Result<NodeId> {
    if !g.is_smooth() {
        return Err(Error::Config(
            "log-likelihood gradient requires a smooth link function".into(),
        ));
    }
    if x.n() != f.n() {
        return Err(Error::Shape(format!("target over {} items, function over {}", x.n(), f.n())));
    }
    let mut stream = f.dg_node_stream(tape, order)?;
    let mut terms = Vec::with_capacity(f.n());
    for i in 0..f.n() {
        let e = order.item_at(i);
        let (a, b) = stream.gains(tape)?;
        let (lp, lq) = g.log_pair_node(tape, a, b)?;
        terms.push(if x.contains(e) { lp } else { lq });
        stream.decide(tape, x.contains(e))?;
    }
    Ok(tape.sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setfn::{CutFn, ModularFn, ToyOrderFn};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn link_values() {
        let g2 = LinkFunction::Ratio;
        assert_eq!(g2.eval(3.0, 1.0), 0.75);
        assert_eq!(g2.eval(-1.0, 2.0), 0.0);
        assert_eq!(g2.eval(2.0, -1.0), 1.0);
        assert_eq!(g2.eval(-1.0, -2.0), 0.5); // degenerate 0/0

        let g3 = LinkFunction::sigmoid(1.0).unwrap();
        assert!((g3.eval(1.0, 0.0) - 0.7310585786).abs() < 1e-9);

        let g4 = LinkFunction::softplus_ratio(0.5).unwrap();
        // a' = 1.0634640, b' = 0.3465736 at (a, b) = (1, 0)
        assert!((g4.eval(1.0, 0.0) - 0.7542097).abs() < 1e-6);
        for a in [-3.0, 0.0, 2.7] {
            assert_eq!(g4.eval(a, a), 0.5);
        }
        assert!(LinkFunction::sigmoid(0.0).is_err());
        assert!(LinkFunction::softplus_ratio(-1.0).is_err());
    }

    #[test]
    fn link_outputs_in_unit_interval() {
        let links = [
            LinkFunction::Hard,
            LinkFunction::Ratio,
            LinkFunction::sigmoid(0.3).unwrap(),
            LinkFunction::softplus_ratio(0.3).unwrap(),
        ];
        for g in links {
            for a in [-100.0, -1.0, 0.0, 0.5, 40.0] {
                for b in [-40.0, 0.0, 2.0, 100.0] {
                    let p = g.eval(a, b);
                    assert!((0.0..=1.0).contains(&p));
                }
            }
        }
    }

    #[test]
    fn smooth_links_converge_to_hard_counterparts() {
        // a + b >= 0 on every point: submodularity guarantees this for the
        // gains the algorithm ever feeds to a link function
        let grid = [(-2.0, 3.0), (0.5, -0.25), (1.5, 0.75), (0.9, -0.3)];
        for (a, b) in grid {
            let g1 = LinkFunction::Hard.eval(a, b);
            let g2 = LinkFunction::Ratio.eval(a, b);
            let mut prev3 = f64::INFINITY;
            let mut prev4 = f64::INFINITY;
            for t in [1.0, 0.1, 0.01, 0.001] {
                let d3 = (LinkFunction::sigmoid(t).unwrap().eval(a, b) - g1).abs();
                let d4 = (LinkFunction::softplus_ratio(t).unwrap().eval(a, b) - g2).abs();
                assert!(d3 <= prev3 + 1e-15);
                assert!(d4 <= prev4 + 1e-15);
                prev3 = d3;
                prev4 = d4;
            }
            assert!(prev3 < 1e-6);
            assert!(prev4 < 1e-3);
        }
    }

    #[test]
    fn toy_example_order_sensitivity() {
        let tape = Tape::new();
        let f = ToyOrderFn::standard();
        let g = LinkFunction::Hard;
        let fwd = ItemOrder::explicit(vec![0, 1]).unwrap();
        let rev = ItemOrder::explicit(vec![1, 0]).unwrap();
        let x_fwd = map_execute(&f, &g, &fwd, &tape).unwrap();
        assert_eq!(x_fwd.to_sorted_vec(), vec![1]);
        assert_eq!(f.value(&tape, &x_fwd).unwrap(), 2.0);
        let x_rev = map_execute(&f, &g, &rev, &tape).unwrap();
        assert_eq!(x_rev.to_sorted_vec(), vec![0]);
        assert_eq!(f.value(&tape, &x_rev).unwrap(), 3.0);
    }

    #[test]
    fn hard_link_keeps_positive_modular_items() {
        let tape = Tape::new();
        let f = ModularFn::from_consts(&[1.0, -2.0]);
        let order = ItemOrder::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (x, trace) = sample(&f, &LinkFunction::Hard, &order, &tape, &mut rng).unwrap();
        assert_eq!(x.to_sorted_vec(), vec![0]);
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.steps[0].prob, 1.0);
        assert_eq!(trace.steps[1].prob, 0.0);
    }

    #[test]
    fn single_symmetric_step_has_half_likelihood() {
        let tape = Tape::new();
        let f = ModularFn::from_consts(&[0.0]);
        let order = ItemOrder::identity(1);
        for t in [0.5, 1.0, 3.0] {
            let g = LinkFunction::sigmoid(t).unwrap();
            let x = ItemSet::full(1);
            let ll = log_likelihood_value(&f, &g, &order, &x, &tape).unwrap();
            assert!((ll - 0.5f64.ln()).abs() < 1e-12);
        }
    }

    fn random_cut(rng: &mut ChaCha8Rng, n: usize) -> CutFn {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.gen_range(0.0..1.0);
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
        CutFn::from_matrix(n, &w).unwrap()
    }

    #[test]
    fn likelihood_normalizes_over_all_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let tape = Tape::new();
        let n = 8;
        let f = random_cut(&mut rng, n);
        let order = ItemOrder::identity(n);
        for g in [
            LinkFunction::Hard,
            LinkFunction::Ratio,
            LinkFunction::sigmoid(0.5).unwrap(),
            LinkFunction::softplus_ratio(1.0).unwrap(),
        ] {
            let mut total = 0.0;
            for mask in 0..(1u64 << n) {
                let x = ItemSet::from_mask(n, mask);
                total += log_likelihood_value(&f, &g, &order, &x, &tape).unwrap().exp();
            }
            assert!((total - 1.0).abs() < 1e-9, "sum {total} for {g:?}");
        }
    }

    #[test]
    fn log_modular_marginals_are_sigmoids() {
        // modular f, sigmoid link, t = 2: item marginals equal sigma(s_i)
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 7;
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f = ModularFn::from_consts(&s);
        let g = LinkFunction::sigmoid(2.0).unwrap();
        let order = ItemOrder::identity(n);
        let tape = Tape::new();
        let mut marginals = vec![0.0; n];
        for mask in 0..(1u64 << n) {
            let x = ItemSet::from_mask(n, mask);
            let p = log_likelihood_value(&f, &g, &order, &x, &tape).unwrap().exp();
            for e in x.iter() {
                marginals[e] += p;
            }
        }
        for (e, &m) in marginals.iter().enumerate() {
            assert!((m - crate::autodiff::sigmoid(s[e])).abs() < 1e-9);
        }
    }

    #[test]
    fn sampler_matches_exact_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 5;
        let f = random_cut(&mut rng, n);
        let g = LinkFunction::Ratio;
        let order = ItemOrder::identity(n);
        let tape = Tape::new();
        let runs = 100_000usize;
        let mut counts = vec![0usize; 1 << n];
        for _ in 0..runs {
            let (x, _) = sample(&f, &g, &order, &tape, &mut rng).unwrap();
            counts[x.to_mask() as usize] += 1;
        }
        for mask in 0..(1u64 << n) {
            let x = ItemSet::from_mask(n, mask);
            let p = log_likelihood_value(&f, &g, &order, &x, &tape).unwrap().exp();
            let freq = counts[mask as usize] as f64 / runs as f64;
            let se = (p * (1.0 - p) / runs as f64).sqrt();
            assert!(
                (freq - p).abs() <= 4.0 * se + 1e-9,
                "mask {mask}: freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn map_equals_hard_rule_without_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let n = 9;
            let f = random_cut(&mut rng, n);
            let order = ItemOrder::identity(n);
            let tape = Tape::new();
            let hard = map_execute(&f, &LinkFunction::Hard, &order, &tape).unwrap();
            for t in [0.01, 0.5, 2.0] {
                let soft =
                    map_execute(&f, &LinkFunction::sigmoid(t).unwrap(), &order, &tape).unwrap();
                assert_eq!(hard, soft);
            }
        }
    }

    #[test]
    fn likelihood_node_matches_value_and_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 5;
        let s0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let order = ItemOrder::identity(n);
        let x = ItemSet::from_items(n, &[0, 2, 4]).unwrap();
        for g in [LinkFunction::sigmoid(0.7).unwrap(), LinkFunction::softplus_ratio(0.7).unwrap()]
        {
            let eval = |sv: &[f64]| -> f64 {
                let tape = Tape::new();
                let f = ModularFn::from_consts(sv);
                log_likelihood_value(&f, &g, &order, &x, &tape).unwrap()
            };
            let mut tape = Tape::new();
            let arr = tape.register_params("s", &s0, (n, 1)).unwrap();
            let f = ModularFn::from_nodes(arr.ids.clone());
            let ll = log_likelihood_node(&f, &g, &order, &x, &mut tape).unwrap();
            assert!((tape.value(ll) - eval(&s0)).abs() < 1e-10);
            let grads = tape.gradients(ll);
            let h = 1e-5;
            for i in 0..n {
                let mut sp = s0.clone();
                sp[i] += h;
                let mut sm = s0.clone();
                sm[i] -= h;
                let fd = (eval(&sp) - eval(&sm)) / (2.0 * h);
                let gi = grads[0].1[i];
                let rel = (gi - fd).abs() / gi.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-5, "grad {gi} vs fd {fd}");
            }
        }
    }

    #[test]
    fn hard_link_rejected_for_gradients() {
        let mut tape = Tape::new();
        let f = ModularFn::from_consts(&[1.0]);
        let order = ItemOrder::identity(1);
        let x = ItemSet::full(1);
        assert!(log_likelihood_node(&f, &LinkFunction::Hard, &order, &x, &mut tape).is_err());
        assert!(log_likelihood_node(&f, &LinkFunction::Ratio, &order, &x, &mut tape).is_err());
    }
}
