//! Command line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use quadrom_core::interp::ModeInterp;
use quadrom_core::neural::{decode_checkpoint, encode_checkpoint, ModeInput, QuadNetConfig, TrainConfig};
use quadrom_core::pod::KernelKind;
use quadrom_core::quadls::QuadOperatorLs;
use quadrom_core::sampler::sample_nodes;
use quadrom_core::synthetic::{SyntheticKind, SyntheticSpec};
use quadrom_core::DenseMatrix;

use crate::dataset::{generate_and_save, read_csv_matrix, save_matrix, write_indices, load_matrix};
use crate::pipeline::{run_pipeline, sweep_partial, sweep_scarce, training_node_distribution, Experiment, PipelineConfig};
use crate::rom::{train_network, Corrector, ModelKind, RomBase};

#[derive(Debug, Parser)]
#[command(name = "quadrom", version, about = "POD reduced-order models with quadratic corrections")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// POD of the training split: modes and spectrum.
    Pod(Common),
    /// Fit the least-squares quadratic closure.
    FitLs(Common),
    /// Train a QuadNet correction model.
    TrainQuadnet(Common),
    /// Train a QuadNet-μ correction model.
    TrainQuadnetMu(Common),
    /// Predict fields at given parameters, on the mesh or at query points.
    Predict(PredictArgs),
    /// Train and compare the selected models.
    Pipeline(PipelineArgs),
    /// QuadNet-μ on Boltzmann-sampled node fractions.
    SweepPartial(SweepPartialArgs),
    /// Improvement ratio over a grid of r and N_μ.
    SweepScarce(SweepScarceArgs),
    /// Boltzmann-sample training nodes and write them as an index file.
    SamplePoints(Common),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Linear,
    Tps,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Linear => KernelKind::Linear,
            KernelArg::Tps => KernelKind::ThinPlateSpline,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InterpArg {
    Nearest,
    Idw,
}

impl From<InterpArg> for ModeInterp {
    fn from(k: InterpArg) -> Self {
        match k {
            InterpArg::Nearest => ModeInterp::Nearest,
            InterpArg::Idw => ModeInterp::Idw,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    ExactQuadratic,
    GenericNonlinear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeInputArg {
    Components,
    Magnitude,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "generic-nonlinear")]
    pub kind: KindArg,
    #[arg(long, default_value_t = 32)]
    pub nx: usize,
    #[arg(long, default_value_t = 32)]
    pub ny: usize,
    /// Number of latent spatial fields K.
    #[arg(long, default_value_t = 6)]
    pub modes: usize,
    /// Dimension of the linear part (exact-quadratic only).
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    #[arg(long, default_value_t = 100)]
    pub n_mu: usize,
    #[arg(long, default_value_t = 0.0)]
    pub mu_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu_hi: f64,
    #[arg(long, default_value_t = 2)]
    pub d_field: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "dataset")]
    pub name: String,
}

/// Flags shared by the data and training commands.
#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    #[arg(long, value_enum, default_value = "linear")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub min_loss: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_epochs: usize,
    /// Seed for network initialization and node sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Train on this fraction of Boltzmann-sampled mesh nodes.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long, value_enum, default_value = "idw")]
    pub mode_interp: InterpArg,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 7)]
    pub hidden_layers: usize,
    #[arg(long, default_value_t = 20)]
    pub hidden_width: usize,
    /// Latent width p (defaults to r(r+1)/2).
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long, value_enum, default_value = "components")]
    pub mode_input: ModeInputArg,
    /// Apply tanh to the combiner output.
    #[arg(long)]
    pub output_tanh: bool,
    /// Extra seeds tried when training misses --min-loss.
    #[arg(long, default_value_t = 2)]
    pub retries: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

impl Common {
    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(&self.manifest, &self.out_dir);
        cfg.r = self.r;
        cfg.kernel = self.kernel.into();
        cfg.train = TrainConfig {
            learning_rate: self.lr,
            min_loss: self.min_loss,
            max_epochs: self.max_epochs,
            seed: self.seed,
            ..TrainConfig::default()
        };
        cfg.net = QuadNetConfig {
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
            latent_dim: self.latent,
            mode_input: match self.mode_input {
                ModeInputArg::Components => ModeInput::Components,
                ModeInputArg::Magnitude => ModeInput::Magnitude,
            },
            output_tanh: self.output_tanh,
        };
        cfg.fraction = self.fraction;
        cfg.mode_interp = self.mode_interp.into();
        cfg.seed = self.seed;
        cfg.train_fraction = self.train_fraction;
        cfg.split_seed = self.split_seed;
        cfg.retries = self.retries;
        cfg.threads = self.threads;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated subset of pod_rbf, quad_ls, quadnet, quadnet_mu.
    #[arg(long, value_delimiter = ',', default_value = "pod_rbf,quad_ls,quadnet,quadnet_mu")]
    pub models: Vec<String>,
    /// Number of test snapshots whose fields are dumped.
    #[arg(long, default_value_t = 1)]
    pub dump: usize,
}

#[derive(Debug, Args)]
pub struct SweepPartialArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5")]
    pub fractions: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SweepScarceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7,9")]
    pub r_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,80")]
    pub n_mu_list: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trained network checkpoint; omit for the plain POD-RBF prediction.
    #[arg(long, conflicts_with = "ls_operator")]
    pub checkpoint: Option<PathBuf>,
    /// Least-squares operator matrix written by `fit-ls`.
    #[arg(long)]
    pub ls_operator: Option<PathBuf>,
    /// Parameter value(s), comma-separated components. Repeatable.
    #[arg(long, required = true)]
    pub mu: Vec<String>,
    /// CSV of query points; defaults to the mesh nodes.
    #[arg(long)]
    pub points: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let _ = env_logger::Builder::new().parse_filters(&cli.log).try_init();
    execute(cli.command)
}

fn mkdir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, s: &str) -> anyhow::Result<()> {
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn execute(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Generate(a) => {
            let mut spec = SyntheticSpec::new(
                match a.kind {
                    KindArg::ExactQuadratic => SyntheticKind::ExactQuadratic,
                    KindArg::GenericNonlinear => SyntheticKind::GenericNonlinear,
                },
                a.nx,
                a.ny,
                a.modes,
                a.r,
                a.n_mu,
            );
            spec.mu_lo = a.mu_lo;
            spec.mu_hi = a.mu_hi;
            spec.d_field = a.d_field;
            spec.seed = a.seed;
            mkdir(&a.out_dir)?;
            let path = a.out_dir.join(format!("{}.manifest", a.name));
            let set = generate_and_save(&spec, &path)?;
            println!("wrote {} ({} snapshots, {} nodes)", path.display(), set.len(), set.n_dof());
        }
        Command::Pod(c) => {
            let cfg = c.pipeline_config();
            let exp = Experiment::load(&cfg)?;
            let base = RomBase::fit(&exp.train, c.r, cfg.kernel)?;
            mkdir(&c.out_dir)?;
            save_matrix(&c.out_dir.join("pod_modes.qmat"), base.basis.modes())?;
            let spec = base.basis.spectrum();
            let total: f64 = spec.iter().map(|s| s * s).sum();
            let mut csv = String::from("index,singular_value,cumulative_energy\n");
            let mut acc = 0.0;
            for (i, s) in spec.iter().enumerate() {
                acc += s * s;
                let _ = writeln!(csv, "{},{},{}", i + 1, s, if total > 0.0 { acc / total } else { 1.0 });
            }
            write(&c.out_dir.join("spectrum.csv"), &csv)?;
            println!("retained energy with r = {}: {}", c.r, base.basis.retained_energy());
        }
        Command::FitLs(c) => {
            let cfg = c.pipeline_config();
            let exp = Experiment::load(&cfg)?;
            let base = RomBase::fit(&exp.train, c.r, cfg.kernel)?;
            let op = base.fit_quad_ls()?;
            mkdir(&c.out_dir)?;
            save_matrix(&c.out_dir.join("quad_ls.qmat"), op.matrix())?;
            println!("wrote {}", c.out_dir.join("quad_ls.qmat").display());
        }
        Command::TrainQuadnet(c) => train_cmd(&c, ModelKind::QuadNet)?,
        Command::TrainQuadnetMu(c) => train_cmd(&c, ModelKind::QuadNetMu)?,
        Command::Predict(a) => predict_cmd(&a)?,
        Command::Pipeline(a) => {
            let mut cfg = a.common.pipeline_config();
            cfg.models = a
                .models
                .iter()
                .map(|m| ModelKind::parse(m.trim()).with_context(|| format!("unknown model `{}`", m)))
                .collect::<anyhow::Result<_>>()?;
            cfg.dump = a.dump;
            let rep = run_pipeline(&cfg)?;
            for m in &rep.models {
                match &m.report {
                    Some(r) => println!("{:<12} mean {:.4e}  std {:.4e}  median {:.4e}  {}", m.kind.name(), r.mean, r.std, r.median, m.status.name()),
                    None => println!("{:<12} {}", m.kind.name(), m.status.name()),
                }
            }
        }
        Command::SweepPartial(a) => {
            let rows = sweep_partial(&a.common.pipeline_config(), &a.fractions)?;
            for r in rows {
                let mean = r.report.map_or(f64::NAN, |x| x.mean);
                println!("fraction {:<5} nodes {:<6} mean {:.4e}  {}", r.fraction, r.n_nodes, mean, r.status.name());
            }
        }
        Command::SweepScarce(a) => {
            let cells = sweep_scarce(&a.common.pipeline_config(), &a.r_list, &a.n_mu_list)?;
            for c in cells {
                println!("r {:<3} n_mu {:<5} e_r {:>10.4}  {}", c.r, c.n_mu, c.e_r, c.status.name());
            }
        }
        Command::SamplePoints(c) => {
            let cfg = c.pipeline_config();
            let exp = Experiment::load(&cfg)?;
            let base = RomBase::fit(&exp.train, c.r, cfg.kernel)?;
            let dist = training_node_distribution(&base)?;
            let nodes = sample_nodes(&dist, c.fraction.unwrap_or(0.5), c.seed)?;
            mkdir(&c.out_dir)?;
            write_indices(&c.out_dir.join("nodes.txt"), &nodes)?;
            let mut csv = String::from("node,mean_correction,probability\n");
            for (i, (m, p)) in dist.mean_corrections.iter().zip(&dist.probabilities).enumerate() {
                let _ = writeln!(csv, "{},{},{}", i, m, p);
            }
            write(&c.out_dir.join("node_probabilities.csv"), &csv)?;
            println!("sampled {} of {} nodes", nodes.len(), dist.probabilities.len());
        }
    }
    Ok(())
}

fn train_cmd(c: &Common, kind: ModelKind) -> anyhow::Result<()> {
    let cfg = c.pipeline_config();
    let exp = Experiment::load(&cfg)?;
    let base = RomBase::fit(&exp.train, c.r, cfg.kernel)?;
    mkdir(&c.out_dir)?;
    let nodes = match c.fraction {
        Some(f) => {
            let n = sample_nodes(&training_node_distribution(&base)?, f, c.seed)?;
            write_indices(&c.out_dir.join("nodes.txt"), &n)?;
            Some(n)
        }
        None => None,
    };
    let data = base.training_data(nodes.as_deref())?;
    let t = train_network(kind, &base, &data, &cfg.net, &cfg.train, cfg.retries)?;
    let Some(model) = t.model else {
        bail!("{} diverged on every attempt", kind.name());
    };
    let path = c.out_dir.join(format!("{}.ckpt", kind.name()));
    fs::write(&path, encode_checkpoint(&model)).with_context(|| format!("writing {}", path.display()))?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in t.report.iter().flat_map(|r| r.history.iter()).enumerate() {
        let _ = writeln!(csv, "{},{}", e, l);
    }
    write(&c.out_dir.join(format!("loss_{}.csv", kind.name())), &csv)?;
    let best = t.report.map_or(f64::NAN, |r| r.best_loss);
    println!("{}: {} best loss {:.4e}, wrote {}", kind.name(), t.status.name(), best, path.display());
    Ok(())
}

fn parse_mu(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad parameter value `{}`", v)))
        .collect()
}

fn predict_cmd(a: &PredictArgs) -> anyhow::Result<()> {
    let c = &a.common;
    let cfg = c.pipeline_config();
    let exp = Experiment::load(&cfg)?;
    let base = RomBase::fit(&exp.train, c.r, cfg.kernel)?;
    let corrector = if let Some(p) = &a.checkpoint {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        let m = decode_checkpoint(&bytes)?;
        if m.net().r() != c.r {
            bail!("checkpoint has r = {}, --r is {}", m.net().r(), c.r);
        }
        Corrector::Net(m)
    } else if let Some(p) = &a.ls_operator {
        Corrector::Ls(QuadOperatorLs::from_matrix(load_matrix(p)?, c.r)?)
    } else {
        Corrector::None
    };
    let points: Option<DenseMatrix> = a.points.as_deref().map(read_csv_matrix).transpose()?;
    let d_field = exp.full.d_field();
    let mesh = exp.full.points().clone();
    let pts = points.as_ref().unwrap_or(&mesh);
    let d = pts.cols();
    mkdir(&c.out_dir)?;
    let mut csv = String::from("mu_index");
    for k in 0..d {
        let _ = write!(csv, ",x_{}", k);
    }
    for part in ["reduced", "correction", "corrected"] {
        for k in 0..d_field {
            let _ = write!(csv, ",{}_{}", part, k);
        }
    }
    csv.push('\n');
    for (m, s) in a.mu.iter().enumerate() {
        let mu = parse_mu(s)?;
        let p = match &points {
            Some(q) => corrector.predict_at(&base, &mu, q, cfg.mode_interp)?,
            None => corrector.predict(&base, &mu)?,
        };
        for i in 0..pts.rows() {
            let _ = write!(csv, "{}", m);
            for v in pts.row(i) {
                let _ = write!(csv, ",{}", v);
            }
            for f in [&p.reduced, &p.correction, &p.corrected] {
                for v in &f[i * d_field..(i + 1) * d_field] {
                    let _ = write!(csv, ",{}", v);
                }
            }
            csv.push('\n');
        }
    }
    let path = c.out_dir.join("prediction.csv");
    write(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}
