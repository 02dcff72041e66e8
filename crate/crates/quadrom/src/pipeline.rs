//! End-to-end comparison runs and the partial-data / scarce-data sweeps.
//!
//! Every run splits the dataset once (by `split_seed`) and keeps that test
//! set fixed for all models and sweep cells. Reports are CSV with a header
//! row; `run_info.txt` records the protocol and per-attempt training
//! outcomes. Output is deterministic for a fixed configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quadrom_core::interp::ModeInterp;
use quadrom_core::metrics::{error_stats, improvement_ratio, ErrorReport};
use quadrom_core::neural::{encode_checkpoint, QuadNetConfig, TrainConfig};
use quadrom_core::pod::KernelKind;
use quadrom_core::sampler::{default_epsilon, node_probabilities, sample_nodes, NodeDistribution};
use quadrom_core::{DenseMatrix, SnapshotSet};

use crate::dataset::{load_dataset, save_dataset, save_matrix, split_indices, write_indices, Provenance};
use crate::error::{io_err, Error, Result};
use crate::rom::{test_errors, train_network, Attempt, Corrector, ModelKind, RomBase, Status};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub r: usize,
    pub kernel: KernelKind,
    pub models: Vec<ModelKind>,
    pub train: TrainConfig,
    pub net: QuadNetConfig,
    /// Train the networks on this fraction of Boltzmann-sampled nodes.
    pub fraction: Option<f64>,
    pub mode_interp: ModeInterp,
    pub out_dir: PathBuf,
    /// Seed for node sampling; network seeds come from `train.seed`.
    pub seed: u64,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Number of test snapshots whose fields are dumped.
    pub dump: usize,
    /// Extra training seeds tried when a network misses `min_loss`.
    pub retries: usize,
    /// Worker threads for sweep cells. Results do not depend on it.
    pub threads: usize,
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            r: 3,
            kernel: KernelKind::Linear,
            models: ModelKind::ALL.to_vec(),
            train: TrainConfig::default(),
            net: QuadNetConfig::default(),
            fraction: None,
            mode_interp: ModeInterp::Idw,
            out_dir: out_dir.into(),
            seed: 0,
            train_fraction: 0.8,
            split_seed: 0,
            dump: 1,
            retries: 2,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if let Some(f) = self.fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("fraction must lie in (0, 1], got {}", f)));
            }
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// A dataset with its fixed train/test partition.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub full: SnapshotSet,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub train: SnapshotSet,
    pub test: SnapshotSet,
}

impl Experiment {
    pub fn new(full: SnapshotSet, train_fraction: f64, split_seed: u64) -> Result<Self> {
        let (train_idx, test_idx) = split_indices(full.len(), train_fraction, split_seed)?;
        Ok(Self {
            train: full.subset(&train_idx),
            test: full.subset(&test_idx),
            full,
            train_idx,
            test_idx,
        })
    }

    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        Self::new(load_dataset(&cfg.manifest)?, cfg.train_fraction, cfg.split_seed)
    }
}

/// Per-model result of a pipeline run.
#[derive(Debug, Clone)]
pub struct ModelResult {
    pub kind: ModelKind,
    pub status: Status,
    /// `None` when the model could not be trained.
    pub report: Option<ErrorReport>,
    pub attempts: Vec<Attempt>,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub models: Vec<ModelResult>,
    pub nodes: Option<Vec<usize>>,
}

impl PipelineReport {
    pub fn get(&self, kind: ModelKind) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.kind == kind)
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{}", v)
    }
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    fs::write(path, s).map_err(io_err(path))
}

fn mu_header(d_mu: usize) -> String {
    (0..d_mu).map(|k| format!("mu_{}", k)).collect::<Vec<_>>().join(",")
}

fn mu_cells(mu: &[f64]) -> String {
    mu.iter().map(|&v| fmt(v)).collect::<Vec<_>>().join(",")
}

/// Node distribution from the training corrections on the full mesh.
pub fn training_node_distribution(base: &RomBase) -> Result<NodeDistribution> {
    let data = base.training_data(None)?;
    let d_field = base.train.d_field();
    let means = quadrom_core::sampler::mean_correction_magnitudes(&data.corrections, d_field)?;
    Ok(node_probabilities(&data.corrections, d_field, default_epsilon(&means).max(f64::MIN_POSITIVE))?)
}

pub fn sample_training_nodes(base: &RomBase, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    Ok(sample_nodes(&training_node_distribution(base)?, fraction, seed)?)
}

/// Trains (if needed) and evaluates one model on the experiment's test set.
pub fn evaluate_model(
    kind: ModelKind,
    base: &RomBase,
    test: &SnapshotSet,
    nodes: Option<&[usize]>,
    cfg: &PipelineConfig,
) -> Result<(ModelResult, Option<Corrector>)> {
    let (corrector, status, attempts, history) = match kind {
        ModelKind::PodRbf => (Some(Corrector::None), Status::Ok, Vec::new(), Vec::new()),
        ModelKind::QuadLs => (Some(Corrector::Ls(base.fit_quad_ls()?)), Status::Ok, Vec::new(), Vec::new()),
        ModelKind::QuadNet | ModelKind::QuadNetMu => {
            let data = base.training_data(nodes)?;
            match train_network(kind, base, &data, &cfg.net, &cfg.train, cfg.retries) {
                Ok(t) => {
                    let history = t.report.map(|r| r.history).unwrap_or_default();
                    (t.model.map(Corrector::Net), t.status, t.attempts, history)
                }
                Err(Error::Core(quadrom_core::Error::DegenerateTarget { .. })) => {
                    log::warn!("{}: all training corrections vanish, nothing to train", kind.name());
                    (None, Status::Degenerate, Vec::new(), Vec::new())
                }
                Err(e) => return Err(e),
            }
        }
    };
    let report = match &corrector {
        Some(c) => Some(error_stats(&test_errors(base, c, test)?)?),
        None => None,
    };
    Ok((
        ModelResult {
            kind,
            status,
            report,
            attempts,
            loss_history: history,
        },
        corrector,
    ))
}

/// Trains the selected models on the train split and evaluates them on the
/// test split. Writes `summary.csv`, `errors_<model>.csv`,
/// `loss_<model>.csv`, trained operators, field dumps and `run_info.txt`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let exp = Experiment::load(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let base = RomBase::fit(&exp.train, cfg.r, cfg.kernel)?;
    let nodes = match cfg.fraction {
        Some(f) => {
            let n = sample_training_nodes(&base, f, cfg.seed)?;
            write_indices(&cfg.out_dir.join("nodes.txt"), &n)?;
            Some(n)
        }
        None => None,
    };
    let d_mu = exp.full.d_mu();
    let mut results = Vec::new();
    let mut summary = String::from("model,mean,std,median,status\n");
    let dump: Vec<usize> = (0..exp.test.len().min(cfg.dump)).collect();
    let fields_dir = cfg.out_dir.join("fields");
    if !dump.is_empty() {
        fs::create_dir_all(&fields_dir).map_err(io_err(&fields_dir))?;
        let exact = exp.test.subset(&dump);
        save_dataset(&exact, &fields_dir.join("exact.manifest"), &Provenance::External)?;
    }

    for &kind in &cfg.models {
        let (res, corrector) = evaluate_model(kind, &base, &exp.test, nodes.as_deref(), cfg)?;
        let name = kind.name();
        match &res.report {
            Some(rep) => {
                let _ = writeln!(summary, "{},{},{},{},{}", name, fmt(rep.mean), fmt(rep.std), fmt(rep.median), res.status.name());
                let mut csv = format!("test_index,{},error\n", mu_header(d_mu));
                for (j, e) in rep.errors.iter().enumerate() {
                    let _ = writeln!(csv, "{},{},{}", exp.test_idx[j], mu_cells(exp.test.param(j)), fmt(*e));
                }
                write_text(&cfg.out_dir.join(format!("errors_{}.csv", name)), &csv)?;
            }
            None => {
                let _ = writeln!(summary, "{},NA,NA,NA,{}", name, res.status.name());
            }
        }
        if kind.is_neural() {
            let mut csv = String::from("epoch,loss\n");
            for (e, l) in res.loss_history.iter().enumerate() {
                let _ = writeln!(csv, "{},{}", e, fmt(*l));
            }
            write_text(&cfg.out_dir.join(format!("loss_{}.csv", name)), &csv)?;
        }
        if let Some(c) = &corrector {
            match c {
                Corrector::Ls(op) => save_matrix(&cfg.out_dir.join("quad_ls.qmat"), op.matrix())?,
                Corrector::Net(m) => {
                    let path = cfg.out_dir.join(format!("{}.ckpt", name));
                    fs::write(&path, encode_checkpoint(m)).map_err(io_err(&path))?;
                }
                Corrector::None => {}
            }
            dump_fields(&fields_dir, name, &base, c, &exp.test, &dump)?;
        }
        results.push(res);
    }
    write_text(&cfg.out_dir.join("summary.csv"), &summary)?;
    write_run_info(cfg, &exp, &base, &results, nodes.as_deref())?;
    Ok(PipelineReport { models: results, nodes })
}

/// Reduced, correction and corrected fields for the dumped test snapshots,
/// each saved as a dataset. `corrected = reduced + correction` entrywise.
fn dump_fields(dir: &Path, name: &str, base: &RomBase, c: &Corrector, test: &SnapshotSet, dump: &[usize]) -> Result<()> {
    if dump.is_empty() {
        return Ok(());
    }
    let mut reduced = Vec::new();
    let mut correction = Vec::new();
    let mut corrected = Vec::new();
    for &j in dump {
        let p = c.predict(base, test.param(j))?;
        reduced.push(p.reduced);
        correction.push(p.correction);
        corrected.push(p.corrected);
    }
    let params = test.params().select_rows(dump);
    for (part, rows) in [("reduced", reduced), ("correction", correction), ("corrected", corrected)] {
        let set = SnapshotSet::new(test.points().clone(), params.clone(), DenseMatrix::from_rows(&rows)?, test.d_field())?;
        save_dataset(&set, &dir.join(format!("{}_{}.manifest", name, part)), &Provenance::External)?;
    }
    Ok(())
}

fn write_run_info(cfg: &PipelineConfig, exp: &Experiment, base: &RomBase, results: &[ModelResult], nodes: Option<&[usize]>) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "dataset = {}", cfg.manifest.display());
    let _ = writeln!(s, "r = {}", cfg.r);
    let _ = writeln!(s, "kernel = {}", cfg.kernel.name());
    let _ = writeln!(s, "retained_energy = {}", base.basis.retained_energy());
    let _ = writeln!(s, "split_seed = {}", cfg.split_seed);
    let _ = writeln!(s, "train_fraction = {}", cfg.train_fraction);
    let _ = writeln!(s, "n_train = {}", exp.train_idx.len());
    let _ = writeln!(s, "n_test = {}", exp.test_idx.len());
    let _ = writeln!(s, "test_set = fixed for every model and sweep cell");
    let _ = writeln!(
        s,
        "test_indices = {}",
        exp.test_idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
    );
    if let Some(n) = nodes {
        let _ = writeln!(s, "training_nodes = {} of {}", n.len(), exp.full.n_dof());
    }
    let _ = writeln!(
        s,
        "lr = {}\nmin_loss = {}\nmax_epochs = {}\nseed = {}",
        cfg.train.learning_rate, cfg.train.min_loss, cfg.train.max_epochs, cfg.train.seed
    );
    for res in results {
        for a in &res.attempts {
            let _ = writeln!(
                s,
                "attempt {} seed {}: {} after {} epochs, best loss {}",
                res.kind.name(),
                a.seed,
                a.status.name(),
                a.epochs,
                fmt(a.best_loss)
            );
        }
    }
    write_text(&cfg.out_dir.join("run_info.txt"), &s)
}

/// One row of the partial-data sweep.
#[derive(Debug, Clone)]
pub struct PartialRow {
    pub fraction: f64,
    pub n_nodes: usize,
    pub status: Status,
    pub report: Option<ErrorReport>,
}

/// Runs `f` over `items` on up to `threads` workers; results keep input order.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(t)
                        .step_by(threads)
                        .map(|(i, x)| (i, f(x)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.unwrap()).collect()
}

/// QuadNet-μ trained on Boltzmann-sampled fractions of the nodes, evaluated
/// on the full mesh. Writes `partial.csv`, `partial_errors.csv` and the
/// node index files `nodes_<fraction>.txt`.
pub fn sweep_partial(cfg: &PipelineConfig, fractions: &[f64]) -> Result<Vec<PartialRow>> {
    cfg.validate()?;
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {}", f)));
    }
    let exp = Experiment::load(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let base = RomBase::fit(&exp.train, cfg.r, cfg.kernel)?;
    let dist = training_node_distribution(&base)?;
    let node_sets = fractions
        .iter()
        .map(|&f| Ok(sample_nodes(&dist, f, cfg.seed)?))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(f64, &Vec<usize>)> = fractions.iter().copied().zip(&node_sets).collect();
    let results = par_map(&cells, cfg.threads, |(_, nodes)| {
        evaluate_model(ModelKind::QuadNetMu, &base, &exp.test, Some(nodes), cfg).map(|r| r.0)
    });

    let d_mu = exp.full.d_mu();
    let mut summary = String::from("fraction,n_nodes,mean,std,median,status\n");
    let mut errors = format!("fraction,test_index,{},error\n", mu_header(d_mu));
    let mut rows = Vec::new();
    for ((f, nodes), res) in cells.iter().zip(results) {
        let res = res?;
        write_indices(&cfg.out_dir.join(format!("nodes_{}.txt", f)), nodes)?;
        match &res.report {
            Some(rep) => {
                let _ = writeln!(
                    summary,
                    "{},{},{},{},{},{}",
                    f,
                    nodes.len(),
                    fmt(rep.mean),
                    fmt(rep.std),
                    fmt(rep.median),
                    res.status.name()
                );
                for (j, e) in rep.errors.iter().enumerate() {
                    let _ = writeln!(errors, "{},{},{},{}", f, exp.test_idx[j], mu_cells(exp.test.param(j)), fmt(*e));
                }
            }
            None => {
                let _ = writeln!(summary, "{},{},NA,NA,NA,{}", f, nodes.len(), res.status.name());
            }
        }
        rows.push(PartialRow {
            fraction: *f,
            n_nodes: nodes.len(),
            status: res.status,
            report: res.report,
        });
    }
    write_text(&cfg.out_dir.join("partial.csv"), &summary)?;
    write_text(&cfg.out_dir.join("partial_errors.csv"), &errors)?;
    Ok(rows)
}

/// One cell of the scarce-data sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScarceCell {
    pub r: usize,
    pub n_mu: usize,
    pub status: Status,
    pub e_pod_rbf: f64,
    pub e_quadnet_mu: f64,
    /// Improvement ratio of QuadNet-μ over POD-RBF; NaN when not available.
    pub e_r: f64,
    pub note: &'static str,
}

/// `n` indices spread evenly over `0..len` (both ends included).
pub fn evenly_spaced(len: usize, n: usize) -> Vec<usize> {
    if n == 0 || len == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0];
    }
    (0..n)
        .map(|k| ((k * (len - 1)) as f64 / (n - 1) as f64).round() as usize)
        .collect()
}

/// Grid of improvement ratios over `r_list × n_mu_list`. Each `N_μ`
/// takes evenly spaced snapshots (in parameter order) from the training
/// split; the test split is shared by all cells. Writes `scarce.csv`
/// (rows `r`, columns `N_μ`, `NA` for flagged cells) and
/// `scarce_cells.csv`.
pub fn sweep_scarce(cfg: &PipelineConfig, r_list: &[usize], n_mu_list: &[usize]) -> Result<Vec<ScarceCell>> {
    cfg.validate()?;
    let exp = Experiment::load(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    // Training pool ordered by parameter so subsets cover the range.
    let mut pool: Vec<usize> = (0..exp.train.len()).collect();
    pool.sort_by(|&a, &b| {
        exp.train
            .param(a)
            .partial_cmp(exp.train.param(b))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let cells: Vec<(usize, usize)> = r_list
        .iter()
        .flat_map(|&r| n_mu_list.iter().map(move |&n| (r, n)))
        .collect();
    let results = par_map(&cells, cfg.threads, |&(r, n_mu)| -> Result<ScarceCell> {
        let skipped = |note| ScarceCell {
            r,
            n_mu,
            status: Status::Skipped,
            e_pod_rbf: f64::NAN,
            e_quadnet_mu: f64::NAN,
            e_r: f64::NAN,
            note,
        };
        if n_mu > pool.len() {
            return Ok(skipped("not_enough_snapshots"));
        }
        if r == 0 || r >= n_mu {
            return Ok(skipped("r_not_below_n_mu"));
        }
        let picks: Vec<usize> = evenly_spaced(pool.len(), n_mu).into_iter().map(|k| pool[k]).collect();
        let mut picks_sorted = picks.clone();
        picks_sorted.sort_unstable();
        let train = exp.train.subset(&picks_sorted);
        let base = RomBase::fit(&train, r, cfg.kernel)?;
        let (rbf, _) = evaluate_model(ModelKind::PodRbf, &base, &exp.test, None, cfg)?;
        let (qn, _) = evaluate_model(ModelKind::QuadNetMu, &base, &exp.test, None, cfg)?;
        let e_base = rbf.report.as_ref().map_or(f64::NAN, |r| r.mean);
        let e_model = qn.report.as_ref().map_or(f64::NAN, |r| r.mean);
        let e_r = if e_model.is_nan() {
            f64::NAN
        } else {
            improvement_ratio(e_base, e_model).unwrap_or(f64::NAN)
        };
        Ok(ScarceCell {
            r,
            n_mu,
            status: qn.status,
            e_pod_rbf: e_base,
            e_quadnet_mu: e_model,
            e_r,
            note: "",
        })
    });
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut grid = String::from("r");
    for n in n_mu_list {
        let _ = write!(grid, ",n_mu_{}", n);
    }
    grid.push('\n');
    for (i, r) in r_list.iter().enumerate() {
        let _ = write!(grid, "{}", r);
        for c in &cells[i * n_mu_list.len()..(i + 1) * n_mu_list.len()] {
            let _ = write!(grid, ",{}", fmt(c.e_r));
        }
        grid.push('\n');
    }
    let mut long = String::from("r,n_mu,e_pod_rbf,e_quadnet_mu,e_r,status,note\n");
    for c in &cells {
        let _ = writeln!(
            long,
            "{},{},{},{},{},{},{}",
            c.r,
            c.n_mu,
            fmt(c.e_pod_rbf),
            fmt(c.e_quadnet_mu),
            fmt(c.e_r),
            c.status.name(),
            c.note
        );
    }
    write_text(&cfg.out_dir.join("scarce.csv"), &grid)?;
    write_text(&cfg.out_dir.join("scarce_cells.csv"), &long)?;
    Ok(cells)
}
