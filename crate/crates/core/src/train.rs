//! Maximum-likelihood training with Adam.
//!
//! A batch is evaluated on a fresh tape: parameters are registered once,
//! each example contributes one log-likelihood node, and a single reverse
//! sweep over the mean negative log-likelihood yields the batch gradient.
//! The whole run is a pure function of (config, data).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::autodiff::{NodeId, Tape};
use crate::data;
use crate::dgreedy::{self, LinkFunction};
use crate::error::{Error, Result};
use crate::models::{register_all, ModelKind, ParamValues, TrainingExample};
use crate::pgreedy::{self, SetLikelihoodMode};
use crate::set::{ItemOrder, ItemSet};
use crate::setfn::SetFunction;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Which probabilistic algorithm induces the likelihood being maximized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    DGreedy { link: LinkFunction, order: ItemOrder },
    PGreedy { t: f64, mode: SetLikelihoodMode },
}

impl AlgorithmSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            AlgorithmSpec::DGreedy { link, order } => {
                if !link.is_smooth() {
                    return Err(Error::Config("training requires a smooth link function".into()));
                }
                if order.n() != n {
                    return Err(Error::Shape(format!(
                        "order over {} items, model over {n}",
                        order.n()
                    )));
                }
                Ok(())
            }
            AlgorithmSpec::PGreedy { t, .. } => {
                if *t <= 0.0 {
                    return Err(Error::Config(format!("temperature must be positive, got {t}")));
                }
                Ok(())
            }
        }
    }

    pub fn log_likelihood_node(
        &self,
        f: &dyn SetFunction,
        target: &ItemSet,
        tape: &mut Tape,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<NodeId> {
        match self {
            AlgorithmSpec::DGreedy { link, order } => {
                dgreedy::log_likelihood_node(f, link, order, target, tape)
            }
            AlgorithmSpec::PGreedy { t, mode } => {
                pgreedy::log_prob_set_node(f, target, *t, *mode, tape, rng)
            }
        }
    }

    pub fn log_likelihood_value(
        &self,
        f: &dyn SetFunction,
        target: &ItemSet,
        tape: &Tape,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<f64> {
        match self {
            AlgorithmSpec::DGreedy { link, order } => {
                dgreedy::log_likelihood_value(f, link, order, target, tape)
            }
            AlgorithmSpec::PGreedy { t, mode } => {
                pgreedy::log_prob_set_value(f, target, *t, *mode, tape, rng)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiplicative learning-rate decay per epoch.
    pub lr_decay: f64,
    /// Decoupled weight decay; 0 disables it.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            epochs: 10,
            lr_decay: 1.0,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        // epochs = 0 is allowed: training degenerates to the seeded init
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.lr_decay <= 0.0 || self.lr_decay > 1.0 {
            return Err(Error::Config(format!("lr decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be >= 0".into()));
        }
        Ok(())
    }
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    fn new(params: &[ParamValues]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            step: 0,
        }
    }

    /// One bias-corrected update on the loss gradient, with decoupled
    /// weight decay applied first.
    fn update(
        &mut self,
        params: &mut [ParamValues],
        grads: &[Vec<f64>],
        lr: f64,
        cfg: &TrainConfig,
    ) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (k, p) in params.iter_mut().enumerate() {
            for (i, w) in p.data.iter_mut().enumerate() {
                let g = grads[k][i];
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *w *= 1.0 - lr * cfg.weight_decay;
                *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: Vec<ParamValues>,
    /// (epoch, mean train log-likelihood) from the forward passes of that
    /// epoch, i.e. under the parameters in use when each batch was visited.
    pub history: Vec<(usize, f64)>,
}

fn reborrow_rng<'a>(rng: &'a mut Option<&mut dyn RngCore>) -> Option<&'a mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

/// Mean negative log-likelihood of one batch as a tape node, plus its value
/// with the sign flipped back (the batch mean log-likelihood).
fn batch_loss(
    model: &ModelKind,
    algorithm: &AlgorithmSpec,
    examples: &[TrainingExample],
    params: &[ParamValues],
    tape: &mut Tape,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<(NodeId, f64)> {
    let arrays = register_all(tape, params)?;
    let mut lls = Vec::with_capacity(examples.len());
    for ex in examples {
        let f = model.build(tape, &arrays, ex)?;
        lls.push(algorithm.log_likelihood_node(f.as_ref(), &ex.target, tape, reborrow_rng(&mut rng))?);
    }
    let total = tape.sum(&lls);
    let loss = tape.scale(total, -1.0 / examples.len() as f64);
    let mean_ll = -tape.value(loss);
    Ok((loss, mean_ll))
}

/// Run MLE training from a seeded initialization. Deterministic: two calls
/// with the same arguments produce bit-identical parameters.
pub fn train(
    model: &ModelKind,
    algorithm: &AlgorithmSpec,
    examples: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("no training examples".into()));
    }
    algorithm.validate(examples[0].n)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = model.init_params(&mut init_rng);
    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut epoch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        epoch_rng.set_stream(epoch as u64 + 1);
        let mut idx: Vec<usize> = (0..examples.len()).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, epoch_rng.gen_range(0..=i));
        }
        let lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        let mut ll_sum = 0.0;
        for batch in idx.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let batch_examples: Vec<TrainingExample> =
                batch.iter().map(|&i| examples[i].clone()).collect();
            let (loss, mean_ll) = batch_loss(
                model,
                algorithm,
                &batch_examples,
                &params,
                &mut tape,
                Some(&mut epoch_rng),
            )?;
            ll_sum += mean_ll * batch.len() as f64;
            let grads: Vec<Vec<f64>> =
                tape.gradients(loss).into_iter().map(|(_, g)| g).collect();
            adam.update(&mut params, &grads, lr, cfg);
        }
        history.push((epoch, ll_sum / examples.len() as f64));
    }
    Ok(TrainResult { params, history })
}

/// Mean log-likelihood of `examples` under fixed parameters.
pub fn mean_log_likelihood(
    model: &ModelKind,
    params: &[ParamValues],
    algorithm: &AlgorithmSpec,
    examples: &[TrainingExample],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Config("no examples".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        let mut tape = Tape::new();
        let f = model.build_with_values(&mut tape, params, ex)?;
        total += algorithm.log_likelihood_value(f.as_ref(), &ex.target, &tape, reborrow_rng(&mut rng))?;
    }
    Ok(total / examples.len() as f64)
}

// ---------------------------------------------------------------------------
// Checkpoints.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngSpec {
    pub algorithm: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub model: ModelKind,
    pub params: Vec<ParamValues>,
    pub algorithm: AlgorithmSpec,
    pub rng: RngSpec,
}

impl ModelCheckpoint {
    pub fn new(
        model: ModelKind,
        params: Vec<ParamValues>,
        algorithm: AlgorithmSpec,
        seed: u64,
    ) -> Self {
        ModelCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model,
            params,
            algorithm,
            rng: RngSpec { algorithm: "chacha8".into(), seed },
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        data::save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: ModelCheckpoint = data::load_json(path)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Version {
                found: ckpt.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        Ok(ckpt)
    }
}
