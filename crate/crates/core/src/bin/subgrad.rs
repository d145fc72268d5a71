//! Command-line harness: dataset generation, training, evaluation,
//! guarantee verification, temperature sweeps, and debug enumeration.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
//! failure. Every run is reproducible from its flags and seed; outputs
//! embed both.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subgrad::autodiff::Tape;
use subgrad::data::{self, MaxCutDataset, RegistryDataset};
use subgrad::dgreedy::{self, LinkFunction};
use subgrad::error::{Error, Result};
use subgrad::metrics;
use subgrad::models::{ModelKind, TrainingExample};
use subgrad::oracle::{self, Constraint, GuaranteeConfig, Theorem};
use subgrad::pgreedy::SetLikelihoodMode;
use subgrad::set::{ItemOrder, ItemSet};
use subgrad::setfn::CutFn;
use subgrad::train::{self, AlgorithmSpec, ModelCheckpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "subgrad", version, about = "Differentiable greedy submodular maximization")]
struct Cli {
    /// Worker threads for parallel sections (default: available cores).
    /// Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic max-cut dataset with exact optima.
    GenMaxcut {
        /// Number of graphs.
        #[arg(long)]
        m: usize,
        /// Ground-set size per graph.
        #[arg(long)]
        n: usize,
        /// Feature dimension.
        #[arg(long, default_value_t = 10)]
        d: usize,
        /// Ground-truth projection dimension.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// RBF kernel bandwidth.
        #[arg(long, default_value_t = 0.3)]
        gamma: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a projection matrix by MLE on optimal cuts.
    TrainMaxcut {
        #[arg(long)]
        train: PathBuf,
        /// Optional held-out split; final mean test LL goes to stdout.
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long, default_value_t = 0.02)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path; the history CSV lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean cut ratios of learned vs baseline projections on a test split.
    EvalMaxcut {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated subset of: original,random.
        #[arg(long, default_value = "original,random")]
        baselines: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated FLID (and modular baseline) training on registries.
    TrainFlid {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = ["dgreedy", "pgreedy"])]
        algo: String,
        /// Latent dimension; defaults to 10 for n <= 40, else 20.
        #[arg(long = "D")]
        d_latent: Option<usize>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// rLL, Acc, and MRR versus the modular baseline per fold.
    EvalFlid {
        /// Directory holding fold_<i>.json / fold_<i>_modular.json.
        #[arg(long)]
        ckpts: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Must match the seed used for training (fold assignment).
        #[arg(long)]
        seed: Option<u64>,
        /// Report per-registry-normalized Acc and MRR instead of the
        /// literal sums.
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo check of an approximation guarantee on a random cut.
    VerifyGuarantees {
        #[arg(long, value_parser = ["1", "2"])]
        theorem: String,
        #[arg(long)]
        n: usize,
        /// Epsilon as a fraction of OPT.
        #[arg(long, default_value_t = 0.05)]
        eps_frac: f64,
        #[arg(long, default_value_t = 20000)]
        runs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Optional JSON report path (also printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train at several temperatures and record per-epoch likelihoods.
    SweepTemperature {
        #[arg(long)]
        train: PathBuf,
        /// Comma-separated temperatures; `2^a` and ranges `2^a..2^b`
        /// (inclusive, integer exponents) are accepted.
        #[arg(long)]
        t_list: String,
        #[arg(long, value_parser = ["g3", "g4"], default_value = "g4")]
        link: String,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full distribution table for a seeded random instance (debug).
    Enumerate {
        #[arg(long, value_parser = ["dgreedy", "pgreedy"])]
        algo: String,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        link: LinkArgs,
        /// Cardinality for pgreedy.
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct LinkArgs {
    /// Smooth link function for double greedy.
    #[arg(long, value_parser = ["g3", "g4"], default_value = "g4")]
    link: String,
    /// Temperature.
    #[arg(long, default_value_t = 0.125)]
    t: f64,
}

impl LinkArgs {
    fn build(&self) -> Result<LinkFunction> {
        match self.link.as_str() {
            "g3" => LinkFunction::sigmoid(self.t),
            _ => LinkFunction::softplus_ratio(self.t),
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> std::result::Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("SUBGRAD_SEED") {
        Ok(v) => v.parse().map_err(|_| format!("SUBGRAD_SEED is not a valid seed: {v:?}")),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap already formats --help/--version as non-errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::GenMaxcut { m, n, d, k, gamma, seed, out } => {
            let seed = resolve_seed(seed).map_err(Error::Config)?;
            let ds = data::gen_maxcut_dataset(m, n, d, k, gamma, seed)?;
            data::save_json(&ds, &out)?;
            println!("wrote {} graphs to {}", m, out.display());
            Ok(0)
        }
        Command::TrainMaxcut { train, test, link, lr, batch, epochs, seed, out } => {
            let seed = resolve_seed(seed).map_err(Error::Config)?;
            let ds: MaxCutDataset = data::load_json(&train)?;
            let examples = ds.training_examples()?;
            let model = ModelKind::MaxCutProjection { k: ds.k, d: ds.d, gamma: ds.gamma };
            let algo = AlgorithmSpec::DGreedy {
                link: link.build()?,
                order: ItemOrder::identity(ds.n),
            };
            let cfg = TrainConfig { lr, batch_size: batch, epochs, seed, ..Default::default() };
            let result = train::train(&model, &algo, &examples, &cfg)?;
            ModelCheckpoint::new(model.clone(), result.params.clone(), algo.clone(), seed)
                .save(&out)?;
            let hist_path = history_path(&out);
            let mut csv = format!(
                "# subgrad train-maxcut link={} t={} lr={lr} batch={batch} epochs={epochs} seed={seed}\nepoch,train_ll\n",
                link.link, link.t
            );
            for (epoch, ll) in &result.history {
                csv.push_str(&format!("{epoch},{ll}\n"));
            }
            std::fs::write(&hist_path, csv)?;
            if let Some(test) = test {
                let test_ds: MaxCutDataset = data::load_json(&test)?;
                let test_ll = train::mean_log_likelihood(
                    &model,
                    &result.params,
                    &algo,
                    &test_ds.training_examples()?,
                    None,
                )?;
                println!("test_ll={test_ll}");
            }
            println!("checkpoint {} history {}", out.display(), hist_path.display());
            Ok(0)
        }
        Command::EvalMaxcut { ckpt, test, baselines, seed, out } => {
            let seed = resolve_seed(seed).map_err(Error::Config)?;
            let ckpt = ModelCheckpoint::load(&ckpt)?;
            let ds: MaxCutDataset = data::load_json(&test)?;
            let mut csv = format!(
                "# subgrad eval-maxcut baselines={baselines} seed={seed}\nmethod,example,cut_ratio\n"
            );
            let mut methods: Vec<(String, Vec<f64>, usize)> = Vec::new();
            let learned = match &ckpt.model {
                ModelKind::MaxCutProjection { k, .. } => {
                    let proj = ckpt
                        .params
                        .iter()
                        .find(|p| p.name == "proj")
                        .ok_or_else(|| Error::Config("checkpoint has no projection".into()))?;
                    (proj.data.clone(), *k)
                }
                _ => return Err(Error::Config("checkpoint is not a max-cut model".into())),
            };
            methods.push(("learned".into(), learned.0, learned.1));
            for b in baselines.split(',').filter(|b| !b.is_empty()) {
                match b {
                    "original" => {
                        // the generator's own projection matrix
                        methods.push((
                            "original".into(),
                            data::coordinate_projection(ds.k, ds.d),
                            ds.k,
                        ));
                    }
                    "random" => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(u64::MAX);
                        let proj: Vec<f64> =
                            (0..ds.k * ds.d).map(|_| rng.gen_range(-0.1..0.1)).collect();
                        methods.push(("random".into(), proj, ds.k));
                    }
                    other => {
                        return Err(Error::Config(format!("unknown baseline {other:?}")));
                    }
                }
            }
            for (name, proj, k) in &methods {
                let ratios = cut_ratios(&ds, proj, *k)?;
                for (i, r) in ratios.iter().enumerate() {
                    csv.push_str(&format!("{name},{i},{r}\n"));
                }
                let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
                println!("mean_cut_ratio {name}={mean}");
            }
            std::fs::write(&out, csv)?;
            Ok(0)
        }
        Command::TrainFlid {
            data: data_path,
            algo,
            d_latent,
            folds,
            link,
            lr,
            batch,
            epochs,
            seed,
            out_dir,
        } => {
            let seed = resolve_seed(seed).map_err(Error::Config)?;
            let ds = data::load_registries(&data_path)?;
            let d_latent = d_latent.unwrap_or(if ds.n <= 40 { 10 } else { 20 });
            std::fs::create_dir_all(&out_dir)?;
            let assign = ds.fold_assignments(folds, seed);
            for fold in 0..folds {
                let train_regs: Vec<Vec<usize>> = ds
                    .registries
                    .iter()
                    .zip(&assign)
                    .filter(|(_, &a)| a != fold)
                    .map(|(r, _)| r.clone())
                    .collect();
                let train_ds = RegistryDataset::new(ds.n, train_regs)?;
                let spec = flid_algorithm(&algo, &link, &train_ds)?;
                let examples = registry_examples(&train_ds, &spec)?;
                let cfg =
                    TrainConfig { lr, batch_size: batch, epochs, seed, ..Default::default() };
                for (model, suffix) in [
                    (ModelKind::Flid { n: ds.n, d_latent }, ""),
                    (ModelKind::Modular { n: ds.n }, "_modular"),
                ] {
                    let result = train::train(&model, &spec, &examples, &cfg)?;
                    let path = out_dir.join(format!("fold_{fold}{suffix}.json"));
                    ModelCheckpoint::new(model, result.params, spec.clone(), seed).save(&path)?;
                }
                println!("fold {fold}: trained on {} registries", examples.len());
            }
            Ok(0)
        }
        Command::EvalFlid { ckpts, data: data_path, folds, seed, normalized, out } => {
            let seed = resolve_seed(seed).map_err(Error::Config)?;
            let ds = data::load_registries(&data_path)?;
            let assign = ds.fold_assignments(folds, seed);
            let mut csv = format!(
                "# subgrad eval-flid folds={folds} seed={seed} normalized={normalized}\nfold,model,metric,value\n"
            );
            for fold in 0..folds {
                let test_regs: Vec<Vec<usize>> = ds
                    .registries
                    .iter()
                    .zip(&assign)
                    .filter(|(_, &a)| a == fold)
                    .map(|(r, _)| r.clone())
                    .collect();
                if test_regs.is_empty() {
                    continue;
                }
                let test_ds = RegistryDataset::new(ds.n, test_regs)?;
                let flid = ModelCheckpoint::load(&ckpts.join(format!("fold_{fold}.json")))?;
                let modular =
                    ModelCheckpoint::load(&ckpts.join(format!("fold_{fold}_modular.json")))?;
                let flid_ll = registry_ll_sum(&flid, &test_ds)?;
                let mod_ll = registry_ll_sum(&modular, &test_ds)?;
                let rll = metrics::rll(flid_ll, mod_ll)?;
                for (ckpt, name) in [(&flid, "flid"), (&modular, "modular")] {
                    let lp = |s: &ItemSet| {
                        metrics::model_log_prob(&ckpt.model, &ckpt.params, &ckpt.algorithm, s, None)
                    };
                    let acc = metrics::fill_in_accuracy(
                        &test_ds,
                        |rest| metrics::next_item(ds.n, rest, lp),
                        normalized,
                    )?;
                    let mrr = metrics::mrr(
                        &test_ds,
                        |rest, held| metrics::rank_of(ds.n, rest, held, lp),
                        normalized,
                    )?;
                    let ll = if name == "flid" { flid_ll } else { mod_ll };
                    csv.push_str(&format!("{fold},{name},ll,{ll}\n"));
                    csv.push_str(&format!("{fold},{name},acc,{acc}\n"));
                    csv.push_str(&format!("{fold},{name},mrr,{mrr}\n"));
                    println!("fold {fold} {name}: ll={ll} acc={acc} mrr={mrr}");
                }
                csv.push_str(&format!("{fold},flid,rll,{}\n", rll.signed));
            }
            std::fs::write(&out, csv)?;
            Ok(0)
        }
        Command::VerifyGuarantees { theorem, n, eps_frac, runs, seed, out } => {
            let seed = resolve_seed(seed).map_err(Error::Config)?;
            if eps_frac <= 0.0 {
                return Err(Error::Config("eps-frac must be positive".into()));
            }
            let theorem = if theorem == "1" { Theorem::Half } else { Theorem::Third };
            let tape = Tape::new();
            let f = random_cut(n, seed)?;
            let (_, opt) = oracle::brute_force_max(&f, Constraint::None, &tape)?;
            let cfg = GuaranteeConfig {
                epsilon: eps_frac * opt,
                theorem,
                num_runs: runs,
                seed,
            };
            let report = oracle::verify_guarantee(&f, &cfg, &tape)?;
            let json = data::to_json_string(&report)?;
            println!("{json}");
            if let Some(out) = out {
                std::fs::write(&out, format!("{json}\n"))?;
            }
            Ok(if report.pass { 0 } else { 3 })
        }
        Command::SweepTemperature { train, t_list, link, lr, batch, epochs, seed, out } => {
            let seed = resolve_seed(seed).map_err(Error::Config)?;
            let temperatures = parse_t_list(&t_list)?;
            let ds: MaxCutDataset = data::load_json(&train)?;
            let examples = ds.training_examples()?;
            let model = ModelKind::MaxCutProjection { k: ds.k, d: ds.d, gamma: ds.gamma };
            let mut csv = format!(
                "# subgrad sweep-temperature link={link} t_list={t_list} lr={lr} batch={batch} epochs={epochs} seed={seed}\nt,epoch,train_ll\n"
            );
            for &t in &temperatures {
                let lf = if link == "g3" {
                    LinkFunction::sigmoid(t)?
                } else {
                    LinkFunction::softplus_ratio(t)?
                };
                let algo =
                    AlgorithmSpec::DGreedy { link: lf, order: ItemOrder::identity(ds.n) };
                let cfg =
                    TrainConfig { lr, batch_size: batch, epochs, seed, ..Default::default() };
                let result = train::train(&model, &algo, &examples, &cfg)?;
                for (epoch, ll) in &result.history {
                    csv.push_str(&format!("{t},{epoch},{ll}\n"));
                }
                let last = result.history.last().map(|&(_, ll)| ll).unwrap_or(f64::NAN);
                println!("t={t} final_train_ll={last}");
            }
            std::fs::write(&out, csv)?;
            Ok(0)
        }
        Command::Enumerate { algo, n, link, k, seed } => {
            let seed = resolve_seed(seed).map_err(Error::Config)?;
            if n > 10 {
                return Err(Error::TooLarge(format!("enumerate is limited to n <= 10, got {n}")));
            }
            let tape = Tape::new();
            let f = random_cut(n, seed)?;
            let table = match algo.as_str() {
                "dgreedy" => {
                    oracle::enumerate_dgreedy(&f, &link.build()?, &ItemOrder::identity(n), &tape)?
                }
                _ => oracle::enumerate_pgreedy(&f, k, link.t, &tape)?,
            };
            let mut total = 0.0;
            for (s, p) in &table {
                total += p;
                println!("{:?} {p}", s.to_sorted_vec());
            }
            println!("total {total}");
            Ok(0)
        }
    }
}

fn history_path(ckpt: &Path) -> PathBuf {
    let mut os = ckpt.as_os_str().to_os_string();
    os.push(".history.csv");
    PathBuf::from(os)
}

/// Deterministic double greedy on the projection-induced graph, scored on
/// the generator's true graph relative to the exact optimum.
fn cut_ratios(ds: &MaxCutDataset, proj: &[f64], k: usize) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let order = ItemOrder::identity(ds.n);
    let true_proj = data::coordinate_projection(ds.k, ds.d);
    let mut ratios = Vec::with_capacity(ds.examples.len());
    for ex in &ds.examples {
        let graph = subgrad::models::cut_from_projection(
            &ex.features,
            ds.n,
            ds.d,
            proj,
            k,
            ds.gamma,
        )?;
        let s = dgreedy::map_execute(&graph, &LinkFunction::Hard, &order, &tape)?;
        let true_graph = subgrad::models::cut_from_projection(
            &ex.features,
            ds.n,
            ds.d,
            &true_proj,
            ds.k,
            ds.gamma,
        )?;
        ratios.push(metrics::cut_ratio(&true_graph, &s, ex.opt_value, &tape)?);
    }
    Ok(ratios)
}

fn flid_algorithm(
    algo: &str,
    link: &LinkArgs,
    train_ds: &RegistryDataset,
) -> Result<AlgorithmSpec> {
    match algo {
        "dgreedy" => Ok(AlgorithmSpec::DGreedy {
            link: link.build()?,
            order: data::order_by_frequency(train_ds),
        }),
        _ => Ok(AlgorithmSpec::PGreedy { t: link.t, mode: SetLikelihoodMode::GreedyPerm }),
    }
}

fn registry_examples(
    ds: &RegistryDataset,
    spec: &AlgorithmSpec,
) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for set in ds.target_sets()? {
        // the sequential greedy likelihood is undefined for the empty set
        if set.is_empty() && matches!(spec, AlgorithmSpec::PGreedy { .. }) {
            continue;
        }
        out.push(TrainingExample::from_target(set));
    }
    Ok(out)
}

fn registry_ll_sum(ckpt: &ModelCheckpoint, ds: &RegistryDataset) -> Result<f64> {
    let mut total = 0.0;
    for set in ds.target_sets()? {
        if set.is_empty() && matches!(ckpt.algorithm, AlgorithmSpec::PGreedy { .. }) {
            continue;
        }
        total += metrics::model_log_prob(&ckpt.model, &ckpt.params, &ckpt.algorithm, &set, None)?;
    }
    Ok(total)
}

fn random_cut(n: usize, seed: u64) -> Result<CutFn> {
    if n == 0 || n > oracle::MAX_UNCONSTRAINED_N {
        return Err(Error::Config(format!(
            "n must lie in 1..={}, got {n}",
            oracle::MAX_UNCONSTRAINED_N
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.gen_range(0.0..1.0);
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    CutFn::from_matrix(n, &w)
}

/// Comma-separated floats; `2^a` and inclusive integer ranges `2^a..2^b`.
fn parse_t_list(spec: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if let Some((lo, hi)) = tok.split_once("..") {
            let (lo, hi) = (parse_pow2_exp(lo)?, parse_pow2_exp(hi)?);
            if lo > hi {
                return Err(Error::Parse(format!("empty range {tok:?}")));
            }
            for e in lo..=hi {
                out.push((e as f64).exp2());
            }
        } else if let Some(e) = tok.strip_prefix("2^") {
            let e: i32 = e
                .parse()
                .map_err(|_| Error::Parse(format!("invalid exponent in {tok:?}")))?;
            out.push((e as f64).exp2());
        } else {
            let t: f64 =
                tok.parse().map_err(|_| Error::Parse(format!("invalid temperature {tok:?}")))?;
            out.push(t);
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("empty temperature list".into()));
    }
    Ok(out)
}

fn parse_pow2_exp(tok: &str) -> Result<i32> {
    tok.strip_prefix("2^")
        .ok_or_else(|| Error::Parse(format!("range endpoints must be powers of two: {tok:?}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("invalid exponent in {tok:?}")))
}
