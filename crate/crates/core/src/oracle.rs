//! Exhaustive ground-truth engines: exact maximizers, exact distributions,
//! submodularity checks, Lambert-W temperature bounds, and Monte-Carlo
//! verification of the smoothed double-greedy guarantees.

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::dgreedy::{self, LinkFunction};
use crate::error::{Error, Result};
use crate::pgreedy::{self, SetLikelihoodMode};
use crate::set::{ItemOrder, ItemSet};
use crate::setfn::SetFunction;

pub const MAX_UNCONSTRAINED_N: usize = 22;
pub const MAX_CONSTRAINED_COMBINATIONS: u64 = 1_000_000;
pub const MAX_ENUM_N: usize = 12;

/// Optional constraint for brute-force maximization.
#[derive(Debug, Clone, Copy)]
pub enum Constraint {
    None,
    Cardinality(usize),
}

fn binomial(n: usize, k: usize) -> u64 {
    let mut r = 1u64;
    for i in 0..k.min(n - k) {
        r = r.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    r
}

/// Lexicographic comparison of subsets by their sorted item lists.
fn lex_less(a: &ItemSet, b: &ItemSet) -> bool {
    a.to_sorted_vec() < b.to_sorted_vec()
}

/// Exact maximizer by exhaustive enumeration; ties go to the
/// lexicographically smallest set.
pub fn brute_force_max(
    f: &dyn SetFunction,
    constraint: Constraint,
    tape: &Tape,
) -> Result<(ItemSet, f64)> {
    let n = f.n();
    let mut best: Option<(ItemSet, f64)> = None;
    let mut consider = |s: ItemSet, v: f64| {
        let replace = match &best {
            None => true,
            Some((bs, bv)) => v > *bv || (v == *bv && lex_less(&s, bs)),
        };
        if replace {
            best = Some((s, v));
        }
    };
    match constraint {
        Constraint::None => {
            if n > MAX_UNCONSTRAINED_N {
                return Err(Error::TooLarge(format!(
                    "unconstrained brute force limited to n <= {MAX_UNCONSTRAINED_N}, got {n}"
                )));
            }
            for mask in 0..(1u64 << n) {
                let s = ItemSet::from_mask(n, mask);
                let v = f.value(tape, &s)?;
                consider(s, v);
            }
        }
        Constraint::Cardinality(k) => {
            if k == 0 || k > n {
                return Err(Error::Config(format!("cardinality k={k} out of range 1..={n}")));
            }
            if binomial(n, k) > MAX_CONSTRAINED_COMBINATIONS {
                return Err(Error::TooLarge(format!(
                    "C({n},{k}) exceeds the {MAX_CONSTRAINED_COMBINATIONS} combination limit"
                )));
            }
            for items in (0..n).combinations(k) {
                let s = ItemSet::from_items(n, &items)?;
                let v = f.value(tape, &s)?;
                consider(s, v);
            }
        }
    }
    Ok(best.expect("at least the empty set was considered"))
}

/// Full support of the double-greedy set distribution with exact
/// probabilities, in mask order.
pub fn enumerate_dgreedy(
    f: &dyn SetFunction,
    g: &LinkFunction,
    order: &ItemOrder,
    tape: &Tape,
) -> Result<Vec<(ItemSet, f64)>> {
    let n = f.n();
    if n > MAX_ENUM_N {
        return Err(Error::TooLarge(format!("enumeration limited to n <= {MAX_ENUM_N}, got {n}")));
    }
    (0..(1u64 << n))
        .map(|mask| {
            let s = ItemSet::from_mask(n, mask);
            let p = dgreedy::log_likelihood_value(f, g, order, &s, tape)?.exp();
            Ok((s, p))
        })
        .collect()
}

/// Full support of the soft-greedy set distribution with exact probabilities.
pub fn enumerate_pgreedy(
    f: &dyn SetFunction,
    k: usize,
    t: f64,
    tape: &Tape,
) -> Result<Vec<(ItemSet, f64)>> {
    let n = f.n();
    if k == 0 || k > n {
        return Err(Error::Config(format!("cardinality k={k} out of range 1..={n}")));
    }
    let work = binomial(n, k).saturating_mul((1..=k as u64).product());
    if work > MAX_CONSTRAINED_COMBINATIONS {
        return Err(Error::TooLarge(format!(
            "C({n},{k}) * {k}! exceeds the enumeration limit"
        )));
    }
    (0..n)
        .combinations(k)
        .map(|items| {
            let s = ItemSet::from_items(n, &items)?;
            let p = pgreedy::log_prob_set_value(f, &s, t, SetLikelihoodMode::Exact, tape, None)?
                .exp();
            Ok((s, p))
        })
        .collect()
}

/// Exhaustive diminishing-returns check. Returns the first violating
/// witness (A, B, e) if any.
pub fn check_submodular(
    f: &dyn SetFunction,
    tape: &Tape,
) -> Result<Option<(ItemSet, ItemSet, usize)>> {
    let n = f.n();
    if n > 8 {
        return Err(Error::TooLarge(format!("submodularity check limited to n <= 8, got {n}")));
    }
    let full = (1u64 << n) - 1;
    let mut values = vec![0.0; 1 << n];
    for mask in 0..=full {
        values[mask as usize] = f.value(tape, &ItemSet::from_mask(n, mask))?;
    }
    for e in 0..n {
        let bit = 1u64 << e;
        let universe = full & !bit;
        // iterate B over subsets of V - e, A over subsets of B
        let mut b = universe;
        loop {
            let gain_b = values[(b | bit) as usize] - values[b as usize];
            let mut a = b;
            loop {
                let gain_a = values[(a | bit) as usize] - values[a as usize];
                if gain_a < gain_b - 1e-9 {
                    return Ok(Some((
                        ItemSet::from_mask(n, a),
                        ItemSet::from_mask(n, b),
                        e,
                    )));
                }
                if a == 0 {
                    break;
                }
                a = (a - 1) & b;
            }
            if b == 0 {
                break;
            }
            b = (b - 1) & universe;
        }
    }
    Ok(None)
}

/// Lambert W on the principal branch: solves w * e^w = x by Newton
/// iteration to 1e-14 residual.
pub fn lambert_w(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut w = if x < std::f64::consts::E { x / std::f64::consts::E } else { x.ln() };
    for _ in 0..100 {
        let ew = w.exp();
        let fw = w * ew - x;
        if fw.abs() < 1e-15 {
            break;
        }
        w -= fw / (ew * (w + 1.0));
    }
    w
}

/// W(1/e), the constant in the sigmoid-link temperature bound.
pub fn lambert_w_inv_e() -> f64 {
    lambert_w((-1.0f64).exp())
}

/// Which guarantee is being verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Softplus-ratio link, 1/2 approximation.
    Half,
    /// Sigmoid link, 1/3 approximation.
    Third,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuaranteeConfig {
    pub epsilon: f64,
    pub theorem: Theorem,
    pub num_runs: usize,
    pub seed: u64,
}

impl GuaranteeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.num_runs < 10_000 {
            return Err(Error::Config(format!(
                "at least 10000 Monte-Carlo runs required, got {}",
                self.num_runs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub theorem: Theorem,
    pub n: usize,
    pub opt_value: f64,
    pub epsilon: f64,
    /// Temperature actually used: 90% of the theorem bound.
    pub temperature: f64,
    pub num_runs: usize,
    pub mean: f64,
    pub std_error: f64,
    /// The guaranteed value: factor * OPT - epsilon.
    pub bound: f64,
    pub pass: bool,
}

/// Temperature strictly below the theorem bound (90% of it).
pub fn guarantee_temperature(theorem: Theorem, n: usize, epsilon: f64) -> f64 {
    match theorem {
        Theorem::Half => 0.9 * 2.0 * epsilon / (n as f64 * std::f64::consts::LN_2),
        Theorem::Third => 0.9 * 3.0 * epsilon / (n as f64 * lambert_w_inv_e()),
    }
}

/// Monte-Carlo verification of the smoothed double-greedy approximation
/// guarantee on a non-negative submodular function.
pub fn verify_guarantee(
    f: &(dyn SetFunction + Sync),
    cfg: &GuaranteeConfig,
    tape: &Tape,
) -> Result<GuaranteeReport> {
    cfg.validate()?;
    let n = f.n();
    // preconditions are reported as their own diagnostics
    if n <= 8 {
        if let Some((a, b, e)) = check_submodular(f, tape)? {
            return Err(Error::Config(format!(
                "function is not submodular: witness A={:?}, B={:?}, e={e}",
                a.to_sorted_vec(),
                b.to_sorted_vec()
            )));
        }
    }
    for mask in 0..(1u64 << n.min(20)) {
        if f.value(tape, &ItemSet::from_mask(n, mask))? < 0.0 {
            return Err(Error::Config(format!(
                "function is negative on {:?}; shift it first",
                ItemSet::from_mask(n, mask).to_sorted_vec()
            )));
        }
    }
    let (_, opt_value) = brute_force_max(f, Constraint::None, tape)?;
    let t = guarantee_temperature(cfg.theorem, n, cfg.epsilon);
    let (link, factor) = match cfg.theorem {
        Theorem::Half => (LinkFunction::softplus_ratio(t)?, 0.5),
        Theorem::Third => (LinkFunction::sigmoid(t)?, 1.0 / 3.0),
    };
    let order = ItemOrder::identity(n);

    // independent per-run RNG streams; reduction in run-index order
    let values: Vec<f64> = (0..cfg.num_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(run as u64);
            let (x, _) = dgreedy::sample(f, &link, &order, tape, &mut rng)?;
            f.value(tape, &x)
        })
        .collect::<Result<_>>()?;
    let m = cfg.num_runs as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    let std_error = (var / m).sqrt();
    let bound = factor * opt_value - cfg.epsilon;
    Ok(GuaranteeReport {
        theorem: cfg.theorem,
        n,
        opt_value,
        epsilon: cfg.epsilon,
        temperature: t,
        num_runs: cfg.num_runs,
        mean,
        std_error,
        bound,
        pass: mean + 3.0 * std_error >= bound,
    })
}
