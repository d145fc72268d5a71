//! Dataset generation, ingestion, and persistence.
//!
//! All generation is a pure function of (config, seed). JSON files are
//! written with every float at 17 significant digits so save/load/save is
//! byte-identical and lossless.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::dgreedy::{self, LinkFunction};
use crate::error::{Error, Result};
use crate::models::TrainingExample;
use crate::oracle::{self, Constraint};
use crate::set::{ItemOrder, ItemSet, OrderProvenance};
use crate::setfn::{Coeff, CutFn, FlidFn};

pub const DATASET_FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// JSON with fixed-width floats.

struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize with all floats at 17 significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits utf-8"))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(to_json_string(value)?.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------------------
// RBF kernel graphs.

/// Cut function with constant weights w_ij = exp(-|p_i - p_j|^2 / (2 gamma^2))
/// from points given as an n x k row-major array.
pub fn rbf_cut_values(points: &[f64], n: usize, k: usize, gamma: f64) -> Result<CutFn> {
    if gamma <= 0.0 {
        return Err(Error::Config(format!("bandwidth must be positive, got {gamma}")));
    }
    if points.len() != n * k {
        return Err(Error::Shape(format!("points len {} != {n}x{k}", points.len())));
    }
    let inv = 1.0 / (2.0 * gamma * gamma);
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = (0..k)
                .map(|c| {
                    let d = points[i * k + c] - points[j * k + c];
                    d * d
                })
                .sum();
            let v = (-d2 * inv).exp();
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    CutFn::from_matrix(n, &w)
}

/// Differentiable RBF cut graph over point nodes (one coordinate vector per
/// item).
pub fn rbf_cut_nodes(tape: &mut Tape, points: &[Vec<NodeId>], gamma: f64) -> Result<CutFn> {
    if gamma <= 0.0 {
        return Err(Error::Config(format!("bandwidth must be positive, got {gamma}")));
    }
    let n = points.len();
    let inv = -1.0 / (2.0 * gamma * gamma);
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: Vec<NodeId> = points[i]
                .iter()
                .zip(&points[j])
                .map(|(&a, &b)| {
                    let d = tape.sub(a, b);
                    tape.mul(d, d)
                })
                .collect();
            let d2 = tape.sum(&sq);
            let scaled = tape.scale(d2, inv);
            upper.push(Coeff::Node(tape.exp(scaled)));
        }
    }
    CutFn::from_upper_coeffs(n, &upper)
}

// ---------------------------------------------------------------------------
// Synthetic max-cut corpus.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxCutExample {
    /// n x d feature matrix, row-major, entries uniform on [0, 1).
    #[serde(rename = "X")]
    pub features: Vec<f64>,
    /// Optimal cut under the generator's own kernel graph, sorted ids.
    pub opt: Vec<usize>,
    pub opt_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxCutDataset {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub gamma: f64,
    pub seed: u64,
    pub examples: Vec<MaxCutExample>,
}

/// The generator's ground-truth projection: selection of the first k
/// coordinates, [I_k | 0] as a row-major k x d matrix.
pub fn coordinate_projection(k: usize, d: usize) -> Vec<f64> {
    let mut p = vec![0.0; k * d];
    for r in 0..k {
        p[r * d + r] = 1.0;
    }
    p
}

/// Generate `m` feature matrices with exact optimal cuts of the induced
/// kernel graphs.
pub fn gen_maxcut_dataset(
    m: usize,
    n: usize,
    d: usize,
    k: usize,
    gamma: f64,
    seed: u64,
) -> Result<MaxCutDataset> {
    if k > d {
        return Err(Error::Config(format!("projection dim k={k} exceeds feature dim d={d}")));
    }
    if n > oracle::MAX_UNCONSTRAINED_N {
        return Err(Error::TooLarge(format!(
            "n={n} exceeds the brute-force limit {}",
            oracle::MAX_UNCONSTRAINED_N
        )));
    }
    let tape = Tape::new();
    let mut examples = Vec::with_capacity(m);
    for idx in 0..m {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let features: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect();
        // project onto the first k coordinates
        let mut points = vec![0.0; n * k];
        for i in 0..n {
            points[i * k..(i + 1) * k].copy_from_slice(&features[i * d..i * d + k]);
        }
        let cut = rbf_cut_values(&points, n, k, gamma)?;
        let (opt, opt_value) = oracle::brute_force_max(&cut, Constraint::None, &tape)?;
        examples.push(MaxCutExample { features, opt: opt.to_sorted_vec(), opt_value });
    }
    Ok(MaxCutDataset { format_version: DATASET_FORMAT_VERSION, n, d, k, gamma, seed, examples })
}

impl MaxCutDataset {
    pub fn training_examples(&self) -> Result<Vec<TrainingExample>> {
        self.examples
            .iter()
            .map(|ex| {
                TrainingExample::with_features(
                    ItemSet::from_items(self.n, &ex.opt)?,
                    self.d,
                    ex.features.clone(),
                )
            })
            .collect()
    }

    /// Constant cut function of one example under an arbitrary projection.
    pub fn cut_for(&self, idx: usize, proj: &[f64]) -> Result<CutFn> {
        let ex = &self.examples[idx];
        crate::models::cut_from_projection(&ex.features, self.n, self.d, proj, self.k, self.gamma)
    }
}

// ---------------------------------------------------------------------------
// Registry datasets (one subset of the ground set per line).

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryDataset {
    pub n: usize,
    pub registries: Vec<Vec<usize>>,
}

impl RegistryDataset {
    pub fn new(n: usize, registries: Vec<Vec<usize>>) -> Result<Self> {
        for (i, reg) in registries.iter().enumerate() {
            for &e in reg {
                if e >= n {
                    return Err(Error::Parse(format!("registry {i}: item {e} out of range")));
                }
            }
        }
        Ok(RegistryDataset { n, registries })
    }

    /// Per-item empirical frequencies.
    pub fn frequencies(&self) -> Vec<usize> {
        let mut freq = vec![0usize; self.n];
        for reg in &self.registries {
            for &e in reg {
                freq[e] += 1;
            }
        }
        freq
    }

    /// Seeded shuffle split into `folds` nearly equal parts; returns a fold
    /// index per registry.
    pub fn fold_assignments(&self, folds: usize, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.registries.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let mut fold = vec![0usize; self.registries.len()];
        for (pos, &reg) in idx.iter().enumerate() {
            fold[reg] = pos % folds;
        }
        fold
    }

    pub fn target_sets(&self) -> Result<Vec<ItemSet>> {
        self.registries.iter().map(|r| ItemSet::from_items(self.n, r)).collect()
    }
}

/// Items ordered by descending empirical frequency, ties by ascending id.
pub fn order_by_frequency(ds: &RegistryDataset) -> ItemOrder {
    let freq = ds.frequencies();
    let mut items: Vec<usize> = (0..ds.n).collect();
    items.sort_by_key(|&e| (std::cmp::Reverse(freq[e]), e));
    ItemOrder::from_perm(items, OrderProvenance::ByEmpiricalFrequency)
}

/// File format: header line `n=<int>`, then one registry per line as
/// space-separated zero-based item ids.
pub fn save_registries(ds: &RegistryDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("n={}\n", ds.n));
    for reg in &ds.registries {
        let line: Vec<String> = reg.iter().map(|e| e.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_registries(path: &Path) -> Result<RegistryDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty registry file".into()))?;
    let n: usize = header
        .strip_prefix("n=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse(format!("line 1: expected header n=<int>, got {header:?}")))?;
    let mut registries = Vec::new();
    for (lineno, line) in lines {
        // a blank line is a valid empty registry
        let mut reg = Vec::new();
        for tok in line.split_whitespace() {
            let e: usize = tok.parse().map_err(|_| {
                Error::Parse(format!("line {}: invalid item id {tok:?}", lineno + 1))
            })?;
            if e >= n {
                return Err(Error::Parse(format!(
                    "line {}: item {e} out of range for n={n}",
                    lineno + 1
                )));
            }
            reg.push(e);
        }
        registries.push(reg);
    }
    Ok(RegistryDataset { n, registries })
}

// ---------------------------------------------------------------------------
// Planted-FLID registry corpus: registries sampled from a ground-truth
// model through the double-greedy distribution.

pub struct PlantedFlid {
    pub dataset: RegistryDataset,
    pub truth: FlidFn,
}

pub fn gen_planted_flid_registries(
    m: usize,
    n: usize,
    d_latent: usize,
    link: &LinkFunction,
    seed: u64,
) -> Result<PlantedFlid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..2.0)).collect();
    let w: Vec<f64> = (0..n * d_latent).map(|_| rng.gen_range(0.0..0.7)).collect();
    let truth = FlidFn::from_consts(&u, &w, d_latent)?;
    let tape = Tape::new();
    let order = ItemOrder::identity(n);
    let mut registries = Vec::with_capacity(m);
    let mut sampler = ChaCha8Rng::seed_from_u64(seed);
    sampler.set_stream(1);
    while registries.len() < m {
        let (x, _) = dgreedy::sample(&truth, link, &order, &tape, &mut sampler)?;
        if !x.is_empty() {
            registries.push(x.to_sorted_vec());
        }
    }
    Ok(PlantedFlid { dataset: RegistryDataset { n, registries }, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setfn::SetFunction;

    #[test]
    fn rbf_closed_forms() {
        let gamma = 0.3f64;
        // identical points -> weight 1
        let f = rbf_cut_values(&[0.2, 0.7, 0.2, 0.7], 2, 2, gamma).unwrap();
        assert!((f.weight_value(&Tape::new(), 0, 1) - 1.0).abs() < 1e-12);
        // distance gamma * sqrt(2) -> weight exp(-1)
        let p = [0.0, 0.0, gamma * 2f64.sqrt(), 0.0];
        let f = rbf_cut_values(&p, 2, 2, gamma).unwrap();
        assert!((f.weight_value(&Tape::new(), 0, 1) - (-1.0f64).exp()).abs() < 1e-12);
        assert!(rbf_cut_values(&p, 2, 2, 0.0).is_err());
    }

    #[test]
    fn rbf_nodes_match_values() {
        let mut tape = Tape::new();
        let pts = [0.1, 0.9, 0.4, 0.3, 0.8, 0.2];
        let nodes: Vec<Vec<NodeId>> = (0..3)
            .map(|i| (0..2).map(|c| tape.constant(pts[i * 2 + c])).collect())
            .collect();
        let fc = rbf_cut_values(&pts, 3, 2, 0.3).unwrap();
        let fnodes = rbf_cut_nodes(&mut tape, &nodes, 0.3).unwrap();
        for mask in 0..8u64 {
            let s = ItemSet::from_mask(3, mask);
            let a = fc.value(&tape, &s).unwrap();
            let b = fnodes.value(&tape, &s).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn maxcut_generation_deterministic_and_verified() {
        let ds1 = gen_maxcut_dataset(4, 8, 10, 5, 0.3, 11).unwrap();
        let ds2 = gen_maxcut_dataset(4, 8, 10, 5, 0.3, 11).unwrap();
        assert_eq!(to_json_string(&ds1).unwrap(), to_json_string(&ds2).unwrap());
        let tape = Tape::new();
        let proj = coordinate_projection(5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (i, ex) in ds1.examples.iter().enumerate() {
            assert!(ex.features.iter().all(|&v| (0.0..1.0).contains(&v)));
            let cut = ds1.cut_for(i, &proj).unwrap();
            let opt_set = ItemSet::from_items(8, &ex.opt).unwrap();
            assert!((cut.value(&tape, &opt_set).unwrap() - ex.opt_value).abs() < 1e-9);
            // any random cut is no better than the recorded optimum
            for _ in 0..20 {
                let s = ItemSet::from_mask(8, rng.gen_range(0..256));
                assert!(cut.value(&tape, &s).unwrap() <= ex.opt_value + 1e-9);
            }
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let ds = gen_maxcut_dataset(2, 6, 8, 4, 0.3, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        save_json(&ds, &p1).unwrap();
        let loaded: MaxCutDataset = load_json(&p1).unwrap();
        save_json(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn registry_frequency_order() {
        let ds = RegistryDataset::new(3, vec![vec![0, 2], vec![2], vec![2, 1]]).unwrap();
        assert_eq!(ds.frequencies(), vec![1, 1, 3]);
        let order = order_by_frequency(&ds);
        assert_eq!(order.perm(), &[2, 0, 1]);
        assert_eq!(order.provenance, OrderProvenance::ByEmpiricalFrequency);
    }

    #[test]
    fn registry_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("regs.txt");
        let ds = RegistryDataset::new(4, vec![vec![0, 2], vec![3], vec![]]).unwrap();
        save_registries(&ds, &path).unwrap();
        assert_eq!(load_registries(&path).unwrap(), ds);

        std::fs::write(&path, "").unwrap();
        assert!(load_registries(&path).is_err());
        std::fs::write(&path, "n=2\n0 5\n").unwrap();
        let err = load_registries(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"));
        std::fs::write(&path, "n=2\n0 x\n").unwrap();
        assert!(load_registries(&path).is_err());
    }

    #[test]
    fn fold_assignments_cover_all_folds() {
        let ds = RegistryDataset::new(2, vec![vec![0]; 25]).unwrap();
        let folds = ds.fold_assignments(10, 3);
        assert_eq!(folds.len(), 25);
        assert!(folds.iter().all(|&f| f < 10));
        assert_eq!(folds, ds.fold_assignments(10, 3));
    }

    #[test]
    fn planted_flid_is_deterministic() {
        let link = LinkFunction::softplus_ratio(1.0).unwrap();
        let a = gen_planted_flid_registries(50, 8, 3, &link, 21).unwrap();
        let b = gen_planted_flid_registries(50, 8, 3, &link, 21).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert!(a.dataset.registries.iter().all(|r| !r.is_empty()));
    }
}
