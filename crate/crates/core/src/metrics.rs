//! Evaluation metrics. All pure and deterministic.

use rand::RngCore;

use crate::autodiff::Tape;
use crate::data::RegistryDataset;
use crate::error::{Error, Result};
use crate::models::{ModelKind, ParamValues, TrainingExample};
use crate::set::ItemSet;
use crate::setfn::SetFunction;
use crate::train::AlgorithmSpec;

/// f(S) / opt_value. In [0, 1] whenever `opt_value` is the true optimum of a
/// non-negative function.
pub fn cut_ratio(f: &dyn SetFunction, s: &ItemSet, opt_value: f64, tape: &Tape) -> Result<f64> {
    if opt_value <= 0.0 {
        return Err(Error::Config(format!("optimal value must be positive, got {opt_value}")));
    }
    Ok(f.value(tape, s)? / opt_value)
}

/// Relative improvement in likelihood over a modular baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rll {
    /// |model_ll - modular_ll| / |modular_ll|.
    pub magnitude: f64,
    /// Same magnitude with the sign of the improvement: positive iff the
    /// model beats the baseline.
    pub signed: f64,
}

pub fn rll(model_ll: f64, modular_ll: f64) -> Result<Rll> {
    if modular_ll >= 0.0 {
        return Err(Error::Config(format!(
            "baseline log-likelihood must be negative, got {modular_ll}"
        )));
    }
    let magnitude = (model_ll - modular_ll).abs() / modular_ll.abs();
    let signed = if model_ll >= modular_ll { magnitude } else { -magnitude };
    Ok(Rll { magnitude, signed })
}

/// Log-probability of one subset under a trained model. Builds a fresh tape
/// per call; for FLID and modular models no features are needed.
pub fn model_log_prob(
    model: &ModelKind,
    params: &[ParamValues],
    algorithm: &AlgorithmSpec,
    s: &ItemSet,
    rng: Option<&mut dyn RngCore>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let ex = TrainingExample::from_target(s.clone());
    let f = model.build_with_values(&mut tape, params, &ex)?;
    algorithm.log_likelihood_value(f.as_ref(), s, &tape, rng)
}

/// All candidates e not in S, sorted by descending log P(S + e), ties by
/// ascending id.
pub fn rank_candidates<F>(n: usize, s: &ItemSet, mut log_prob: F) -> Result<Vec<usize>>
where
    F: FnMut(&ItemSet) -> Result<f64>,
{
    if s.len() >= n {
        return Err(Error::Config("no candidates: set already covers the ground set".into()));
    }
    let mut scored = Vec::with_capacity(n - s.len());
    for e in 0..n {
        if !s.contains(e) {
            scored.push((log_prob(&s.with(e)?)?, e));
        }
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, e)| e).collect())
}

/// argmax_{e not in S} P(S + e); ties to lowest id.
pub fn next_item<F>(n: usize, s: &ItemSet, log_prob: F) -> Result<usize>
where
    F: FnMut(&ItemSet) -> Result<f64>,
{
    Ok(rank_candidates(n, s, log_prob)?[0])
}

/// 1-based position of `target` in the candidate ranking for S.
pub fn rank_of<F>(n: usize, s: &ItemSet, target: usize, log_prob: F) -> Result<usize>
where
    F: FnMut(&ItemSet) -> Result<f64>,
{
    let ranked = rank_candidates(n, s, log_prob)?;
    ranked
        .iter()
        .position(|&e| e == target)
        .map(|p| p + 1)
        .ok_or_else(|| Error::Config(format!("item {target} is not a candidate")))
}

fn held_out_registries(ds: &RegistryDataset) -> Result<Vec<&Vec<usize>>> {
    let kept: Vec<&Vec<usize>> = ds.registries.iter().filter(|r| r.len() > 1).collect();
    if kept.is_empty() {
        return Err(Error::Config("no registries with at least 2 items".into()));
    }
    Ok(kept)
}

/// Fill-in accuracy: per registry with |R| > 1, each item is held out in
/// turn and the predictor's guess on the remainder is scored. The literal
/// per-registry score is a sum of indicators (so it can exceed 1);
/// `normalized` divides it by the registry size instead.
pub fn fill_in_accuracy<F>(
    ds: &RegistryDataset,
    mut predict: F,
    normalized: bool,
) -> Result<f64>
where
    F: FnMut(&ItemSet) -> Result<usize>,
{
    let kept = held_out_registries(ds)?;
    let mut total = 0.0;
    for reg in &kept {
        let full = ItemSet::from_items(ds.n, reg)?;
        let mut hits = 0usize;
        for &held in *reg {
            if predict(&full.without(held)?)? == held {
                hits += 1;
            }
        }
        total += if normalized { hits as f64 / reg.len() as f64 } else { hits as f64 };
    }
    Ok(total / kept.len() as f64)
}

/// Mean reciprocal rank under the same hold-out scheme; the ranker returns
/// the 1-based rank of the held-out item given the remainder.
pub fn mrr<F>(ds: &RegistryDataset, mut rank: F, normalized: bool) -> Result<f64>
where
    F: FnMut(&ItemSet, usize) -> Result<usize>,
{
    let kept = held_out_registries(ds)?;
    let mut total = 0.0;
    for reg in &kept {
        let full = ItemSet::from_items(ds.n, reg)?;
        let mut sum = 0.0;
        for &held in *reg {
            let r = rank(&full.without(held)?, held)?;
            if r == 0 {
                return Err(Error::Config("ranks are 1-based".into()));
            }
            sum += 1.0 / r as f64;
        }
        total += if normalized { sum / reg.len() as f64 } else { sum };
    }
    Ok(total / kept.len() as f64)
}
