//! Probabilistic differentiable greedy for cardinality-constrained
//! maximization: soft-greedy draws without replacement, sequence and set
//! likelihoods, and the deterministic greedy MAP.

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::set::ItemSet;
use crate::setfn::SetFunction;

/// Ordered distinct items drawn by the algorithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    items: Vec<usize>,
}

impl Sequence {
    pub fn new(n: usize, items: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n];
        for &e in &items {
            if e >= n {
                return Err(Error::ItemOutOfRange { item: e, n });
            }
            if seen[e] {
                return Err(Error::Config(format!("repeated item {e} in sequence")));
            }
            seen[e] = true;
        }
        Ok(Sequence { items })
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn to_set(&self, n: usize) -> ItemSet {
        let mut s = ItemSet::empty(n);
        for &e in &self.items {
            s.insert(e).expect("sequence items are distinct");
        }
        s
    }
}

/// How the set likelihood P(S) is computed from the sequence distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetLikelihoodMode {
    /// Sum over all |S|! consistent permutations. Only for small sets.
    Exact,
    /// P(sigma_G) for the greedy-order permutation of S.
    GreedyPerm,
    /// log k! plus an average over randomly sampled permutations of S.
    /// `log_space` averages log-probabilities; otherwise probabilities
    /// are averaged before taking the log.
    RandomPerm { num_samples: usize, log_space: bool },
}

/// Largest cardinality for which exact permutation sums are attempted (7! = 5040).
pub const EXACT_PERM_THRESHOLD: usize = 7;

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("cardinality k={k} out of range 1..={n}")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if t <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

/// Per-step softmax over the add-gains of the remaining candidates
/// (max-subtracted for stability). Returns (candidates, probabilities).
fn step_probs(
    f: &dyn SetFunction,
    tape: &Tape,
    x: &ItemSet,
    t: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let fx = f.value(tape, x)?;
    let cands: Vec<usize> = (0..f.n()).filter(|&e| !x.contains(e)).collect();
    let logits: Vec<f64> = cands
        .iter()
        .map(|&e| Ok((f.value(tape, &x.with(e)?)? - fx) / t))
        .collect::<Result<_>>()?;
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok((cands, exps.iter().map(|&e| e / z).collect()))
}

/// Draw a sequence of k soft-greedy selections without replacement.
pub fn sample<R: Rng>(
    f: &dyn SetFunction,
    k: usize,
    t: f64,
    tape: &Tape,
    rng: &mut R,
) -> Result<Sequence> {
    check_k(f.n(), k)?;
    check_t(t)?;
    let mut x = ItemSet::empty(f.n());
    let mut items = Vec::with_capacity(k);
    for _ in 0..k {
        let (cands, probs) = step_probs(f, tape, &x, t)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = *cands.last().expect("candidates nonempty");
        for (&e, &p) in cands.iter().zip(&probs) {
            acc += p;
            if u < acc {
                chosen = e;
                break;
            }
        }
        x.insert(chosen)?;
        items.push(chosen);
    }
    Ok(Sequence { items })
}

/// log P(sigma) as a plain value.
pub fn log_prob_sequence_value(
    f: &dyn SetFunction,
    sigma: &Sequence,
    t: f64,
    tape: &Tape,
) -> Result<f64> {
    check_t(t)?;
    check_k(f.n(), sigma.len())?;
    let mut x = ItemSet::empty(f.n());
    let mut ll = 0.0;
    for &e in sigma.items() {
        let fx = f.value(tape, &x)?;
        let logits: Vec<(usize, f64)> = (0..f.n())
            .filter(|&c| !x.contains(c))
            .map(|c| Ok((c, (f.value(tape, &x.with(c)?)? - fx) / t)))
            .collect::<Result<_>>()?;
        let m = logits.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|&(_, l)| (l - m).exp()).sum();
        let le = logits
            .iter()
            .find(|&&(c, _)| c == e)
            .expect("sequence item is a candidate")
            .1;
        ll += le - m - z.ln();
        x.insert(e)?;
    }
    Ok(ll)
}

/// log P(sigma) as a tape node, differentiable in the function parameters.
pub fn log_prob_sequence_node(
    f: &dyn SetFunction,
    sigma: &Sequence,
    t: f64,
    tape: &mut Tape,
) -> Result<NodeId> {
    check_t(t)?;
    check_k(f.n(), sigma.len())?;
    let mut x = ItemSet::empty(f.n());
    let mut terms = Vec::with_capacity(sigma.len());
    for &e in sigma.items() {
        let fx = f.node(tape, &x)?;
        let mut logits = Vec::new();
        let mut chosen = None;
        for c in 0..f.n() {
            if x.contains(c) {
                continue;
            }
            let fxc = f.node(tape, &x.with(c)?)?;
            let gain = tape.sub(fxc, fx);
            let logit = tape.scale(gain, 1.0 / t);
            if c == e {
                chosen = Some(logit);
            }
            logits.push(logit);
        }
        let log_z = log_sum_exp_node(tape, &logits)?;
        let le = chosen.expect("sequence item is a candidate");
        terms.push(tape.sub(le, log_z));
        x.insert(e)?;
    }
    Ok(tape.sum(&terms))
}

/// Numerically stable log-sum-exp of tape nodes (max-subtracted).
pub fn log_sum_exp_node(tape: &mut Tape, logits: &[NodeId]) -> Result<NodeId> {
    let m = tape.max(logits)?;
    let shifted: Vec<NodeId> = logits
        .iter()
        .map(|&l| {
            let d = tape.sub(l, m);
            tape.exp(d)
        })
        .collect();
    let z = tape.sum(&shifted);
    let lz = tape.log(z)?;
    Ok(tape.add(m, lz))
}

fn log_sum_exp_value(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + vals.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

fn log_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn check_exact(k: usize) -> Result<()> {
    if k > EXACT_PERM_THRESHOLD {
        return Err(Error::TooLarge(format!(
            "exact set likelihood enumerates k! permutations; k={k} > {EXACT_PERM_THRESHOLD}. \
             Use the greedy-permutation or random-permutation approximation"
        )));
    }
    Ok(())
}

/// The permutation of S induced by greedy gains restricted to S
/// (ties to the lowest index).
pub fn greedy_permutation(f: &dyn SetFunction, s: &ItemSet, tape: &Tape) -> Result<Sequence> {
    let mut x = ItemSet::empty(f.n());
    let mut items = Vec::with_capacity(s.len());
    for _ in 0..s.len() {
        let fx = f.value(tape, &x)?;
        let mut best: Option<(usize, f64)> = None;
        for e in s.iter() {
            if x.contains(e) {
                continue;
            }
            let g = f.value(tape, &x.with(e)?)? - fx;
            if best.map_or(true, |(_, bg)| g > bg) {
                best = Some((e, g));
            }
        }
        let (e, _) = best.expect("candidates remain");
        x.insert(e)?;
        items.push(e);
    }
    Ok(Sequence { items })
}

/// log P(S) as a plain value under the chosen approximation mode.
pub fn log_prob_set_value(
    f: &dyn SetFunction,
    s: &ItemSet,
    t: f64,
    mode: SetLikelihoodMode,
    tape: &Tape,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<f64> {
    check_t(t)?;
    check_k(f.n(), s.len())?;
    let items = s.to_sorted_vec();
    match mode {
        SetLikelihoodMode::Exact => {
            check_exact(items.len())?;
            let lps: Vec<f64> = items
                .iter()
                .cloned()
                .permutations(items.len())
                .map(|perm| log_prob_sequence_value(f, &Sequence { items: perm }, t, tape))
                .collect::<Result<_>>()?;
            Ok(log_sum_exp_value(&lps))
        }
        SetLikelihoodMode::GreedyPerm => {
            let sigma = greedy_permutation(f, s, tape)?;
            log_prob_sequence_value(f, &sigma, t, tape)
        }
        SetLikelihoodMode::RandomPerm { num_samples, log_space } => {
            let rng = rng.ok_or_else(|| {
                Error::Config("random-permutation mode requires an RNG".into())
            })?;
            let lps: Vec<f64> = (0..num_samples)
                .map(|_| {
                    let perm = random_perm(&items, rng);
                    log_prob_sequence_value(f, &Sequence { items: perm }, t, tape)
                })
                .collect::<Result<_>>()?;
            let lf = log_factorial(items.len());
            if log_space {
                Ok(lf + lps.iter().sum::<f64>() / num_samples as f64)
            } else {
                Ok(lf + log_sum_exp_value(&lps) - (num_samples as f64).ln())
            }
        }
    }
}

/// log P(S) as a tape node under the chosen approximation mode.
pub fn log_prob_set_node(
    f: &dyn SetFunction,
    s: &ItemSet,
    t: f64,
    mode: SetLikelihoodMode,
    tape: &mut Tape,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<NodeId> {
    check_t(t)?;
    check_k(f.n(), s.len())?;
    let items = s.to_sorted_vec();
    match mode {
        SetLikelihoodMode::Exact => {
            check_exact(items.len())?;
            let mut lps = Vec::new();
            for perm in items.iter().cloned().permutations(items.len()) {
                lps.push(log_prob_sequence_node(f, &Sequence { items: perm }, t, tape)?);
            }
            log_sum_exp_node(tape, &lps)
        }
        SetLikelihoodMode::GreedyPerm => {
            let sigma = greedy_permutation(f, s, tape)?;
            log_prob_sequence_node(f, &sigma, t, tape)
        }
        SetLikelihoodMode::RandomPerm { num_samples, log_space } => {
            let rng = rng.ok_or_else(|| {
                Error::Config("random-permutation mode requires an RNG".into())
            })?;
            let mut lps = Vec::new();
            for _ in 0..num_samples {
                let perm = random_perm(&items, rng);
                lps.push(log_prob_sequence_node(f, &Sequence { items: perm }, t, tape)?);
            }
            let lf = tape.constant(log_factorial(items.len()));
            if log_space {
                let sum = tape.sum(&lps);
                let mean = tape.scale(sum, 1.0 / num_samples as f64);
                Ok(tape.add(lf, mean))
            } else {
                let lse = log_sum_exp_node(tape, &lps)?;
                let ln_n = tape.constant((num_samples as f64).ln());
                let centered = tape.sub(lse, ln_n);
                Ok(tape.add(lf, centered))
            }
        }
    }
}

fn random_perm(items: &[usize], rng: &mut dyn rand::RngCore) -> Vec<usize> {
    let mut p = items.to_vec();
    for i in (1..p.len()).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Standard greedy: deterministic argmax-gain selection, ties to the lowest
/// index. Equals the t -> 0 limit of sampling.
pub fn greedy_map(f: &dyn SetFunction, k: usize, tape: &Tape) -> Result<ItemSet> {
    check_k(f.n(), k)?;
    let mut x = ItemSet::empty(f.n());
    for _ in 0..k {
        let fx = f.value(tape, &x)?;
        let mut best: Option<(usize, f64)> = None;
        for e in 0..f.n() {
            if x.contains(e) {
                continue;
            }
            let g = f.value(tape, &x.with(e)?)? - fx;
            if best.map_or(true, |(_, bg)| g > bg) {
                best = Some((e, g));
            }
        }
        x.insert(best.expect("candidates remain").0)?;
    }
    Ok(x)
}
