//! Trainable models: named parameter arrays plus a recipe for building a
//! differentiable set function per training example.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamArray, Tape};
use crate::data;
use crate::error::{Error, Result};
use crate::set::ItemSet;
use crate::setfn::{Coeff, CutFn, FlidFn, ModularFn, SetFunction};

/// A ground set paired with a target (approximately optimal) subset.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub n: usize,
    /// Optional per-item features, n x d row-major.
    pub features: Option<(usize, Vec<f64>)>,
    pub target: ItemSet,
}

impl TrainingExample {
    pub fn from_target(target: ItemSet) -> Self {
        TrainingExample { n: target.n(), features: None, target }
    }

    pub fn with_features(target: ItemSet, d: usize, features: Vec<f64>) -> Result<Self> {
        if features.len() != target.n() * d {
            return Err(Error::Shape(format!(
                "features len {} != {} x {d}",
                features.len(),
                target.n()
            )));
        }
        Ok(TrainingExample { n: target.n(), features: Some((d, features)), target })
    }
}

/// Values of one named parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamValues {
    pub name: String,
    pub shape: (usize, usize),
    pub data: Vec<f64>,
}

/// Model family and its fixed structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Fully factorized model with one weight per item.
    Modular { n: usize },
    /// Facility-location-diversity model; latent weights are kept
    /// non-negative by a softplus reparameterization of the raw array.
    Flid { n: usize, d_latent: usize },
    /// Learnable k x d projection; the per-example graph comes from an RBF
    /// kernel on the projected feature rows.
    MaxCutProjection { k: usize, d: usize, gamma: f64 },
}

impl ModelKind {
    /// Seeded initial parameters, uniform in [-0.1, 0.1].
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<ParamValues> {
        let mut uniform = |name: &str, shape: (usize, usize)| ParamValues {
            name: name.to_string(),
            shape,
            data: (0..shape.0 * shape.1).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        };
        match *self {
            ModelKind::Modular { n } => vec![uniform("s", (n, 1))],
            ModelKind::Flid { n, d_latent } => {
                vec![uniform("u", (n, 1)), uniform("w_raw", (n, d_latent))]
            }
            ModelKind::MaxCutProjection { k, d, .. } => vec![uniform("proj", (k, d))],
        }
    }

    /// Build the differentiable set function for one example from parameter
    /// arrays registered on `tape` (in `init_params` order).
    pub fn build(
        &self,
        tape: &mut Tape,
        arrays: &[ParamArray],
        example: &TrainingExample,
    ) -> Result<Box<dyn SetFunction + Sync>> {
        match *self {
            ModelKind::Modular { n } => {
                if example.n != n {
                    return Err(Error::Shape(format!("example n {} != model n {n}", example.n)));
                }
                Ok(Box::new(ModularFn::from_nodes(arrays[0].ids.clone())))
            }
            ModelKind::Flid { n, d_latent } => {
                if example.n != n {
                    return Err(Error::Shape(format!("example n {} != model n {n}", example.n)));
                }
                let u = arrays[0].ids.iter().map(|&id| Coeff::Node(id)).collect();
                let w = arrays[1]
                    .ids
                    .iter()
                    .map(|&id| Ok(Coeff::Node(tape.softplus_t(id, 1.0)?)))
                    .collect::<Result<_>>()?;
                Ok(Box::new(FlidFn::new(u, w, d_latent)?))
            }
            ModelKind::MaxCutProjection { k, d, gamma } => {
                let (fd, feats) = example
                    .features
                    .as_ref()
                    .ok_or_else(|| Error::Config("projection model requires features".into()))?;
                if *fd != d {
                    return Err(Error::Shape(format!("feature dim {fd} != model d {d}")));
                }
                let points: Vec<Vec<crate::autodiff::NodeId>> = (0..example.n)
                    .map(|i| tape.matvec(&arrays[0].ids, k, d, &feats[i * d..(i + 1) * d]))
                    .collect::<Result<_>>()?;
                let cut = data::rbf_cut_nodes(tape, &points, gamma)?;
                Ok(Box::new(cut))
            }
        }
    }

    /// Build from plain parameter values (fresh tape registration).
    pub fn build_with_values(
        &self,
        tape: &mut Tape,
        params: &[ParamValues],
        example: &TrainingExample,
    ) -> Result<Box<dyn SetFunction + Sync>> {
        let arrays = register_all(tape, params)?;
        self.build(tape, &arrays, example)
    }
}

pub fn register_all(tape: &mut Tape, params: &[ParamValues]) -> Result<Vec<ParamArray>> {
    params
        .iter()
        .map(|p| tape.register_params(&p.name, &p.data, p.shape))
        .collect()
}

/// Constant cut function from projected features and a true projection
/// matrix (row-major k x d); the non-differentiable twin of the model path.
pub fn cut_from_projection(
    features: &[f64],
    n: usize,
    d: usize,
    proj: &[f64],
    k: usize,
    gamma: f64,
) -> Result<CutFn> {
    if features.len() != n * d || proj.len() != k * d {
        return Err(Error::Shape("projection/feature shape mismatch".into()));
    }
    let mut points = vec![0.0; n * k];
    for i in 0..n {
        for r in 0..k {
            points[i * k + r] = (0..d).map(|c| proj[r * d + c] * features[i * d + c]).sum();
        }
    }
    data::rbf_cut_values(&points, n, k, gamma)
}
