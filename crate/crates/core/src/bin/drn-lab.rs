use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use drn_core::compile::{self, CompileConfig};
use drn_core::ep;
use drn_core::experiment::{self, Arch, DatasetId, ExperimentConfig, DATA_ROOT_ENV};
use drn_core::model::DrnParams;
use drn_core::netlist;
use drn_core::relu::{self, ReluNet};
use drn_core::solver::{self, SolverConfig, UpdateMode};
use drn_core::{DrnError, Result};

#[derive(Parser)]
#[command(name = "drn-lab", version, about = "Deep resistive network simulator, compiler and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network with equilibrium propagation.
    Train(TrainArgs),
    /// Compute steady states of a netlist for a batch of inputs.
    Solve(SolveArgs),
    /// Compile a ReLU weight file into a netlist.
    Compile(CompileArgs),
    /// Measure how closely compiled circuits track their ReLU network.
    Verify(VerifyArgs),
    /// Run the |x| approximation demo.
    DemoUniversal {
        #[arg(long, default_value = "runs/universal")]
        out: PathBuf,
    },
    /// Print per-layer conductance statistics of a checkpoint or netlist.
    Stats {
        #[arg(long)]
        params: PathBuf,
    },
    /// Write a randomly initialized ReLU weight file.
    InitNn {
        /// Layer sizes, e.g. 3,4,2.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    #[value(name = "drn-1h")]
    Drn1h,
    #[value(name = "drn-2h")]
    Drn2h,
    #[value(name = "drn-3h")]
    Drn3h,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Mnist,
    Kmnist,
    FashionMnist,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory with the IDX files (defaults to $DRN_DATA_ROOT/<dataset-id>).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mnist")]
    dataset_id: DatasetArg,
    #[arg(long, env = DATA_ROOT_ENV, default_value = "data")]
    data_root: PathBuf,
    #[arg(long, value_enum, default_value = "drn-1h")]
    arch: ArchArg,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    beta: Option<f64>,
    /// Per-layer learning rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    lr: Option<Vec<f64>>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Free- and nudge-phase iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Input amplification A^(0).
    #[arg(long)]
    input_gain: Option<f64>,
    #[arg(long)]
    hidden_bias: Option<f64>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
    /// Rerun the experiment recorded in this manifest (other options ignored).
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    netlist: PathBuf,
    /// CSV without header, one input vector per row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Stop early once a sweep moves no potential by this much; failing to
    /// get there within --iters is an error.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    bidirectional: bool,
    /// Also write the steady-state certificate (to FILE, or stderr).
    #[arg(long, num_args = 0..=1, default_missing_value = "-")]
    cert: Option<String>,
    /// Potentials CSV destination (stdout by default).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    nn: PathBuf,
    #[arg(long, default_value_t = 1e-2)]
    gamma: f64,
    #[arg(long)]
    no_output_leaks: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    nn: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-1, 1e-2, 1e-3])]
    gamma: Vec<f64>,
    /// CSV without header, one input vector per row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_inputs(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| DrnError::InvalidParameter(format!("bad number {f:?} in {}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(DrnError::Dimension(format!("ragged rows in {}", path.display())));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| DrnError::Dimension(e.to_string()))
}

fn load_params(path: &Path) -> Result<DrnParams> {
    let head = std::fs::read(path)?;
    if head.starts_with(b"DRN1") {
        DrnParams::load(path)
    } else {
        netlist::load_netlist(path)
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let metrics = match args.replay {
        Some(manifest) => experiment::replay_manifest(&manifest, args.out.clone())?,
        None => {
            let arch = match args.arch {
                ArchArg::Drn1h => Arch::Drn1h,
                ArchArg::Drn2h => Arch::Drn2h,
                ArchArg::Drn3h => Arch::Drn3h,
            };
            let dataset = match args.dataset_id {
                DatasetArg::Mnist => DatasetId::Mnist,
                DatasetArg::Kmnist => DatasetId::Kmnist,
                DatasetArg::FashionMnist => DatasetId::FashionMnist,
            };
            let data_dir = args.dataset.unwrap_or_else(|| args.data_root.join(dataset.dir_name()));
            let mut cfg = ExperimentConfig::new(dataset, data_dir, arch, args.epochs, args.seed, args.out.clone());
            if let Some(b) = args.beta {
                cfg.ep.beta = b;
            }
            if let Some(lr) = args.lr {
                cfg.ep.lr = lr;
            }
            if let Some(m) = args.momentum {
                cfg.ep.momentum = m;
            }
            if let Some(d) = args.lr_decay {
                cfg.ep.lr_decay = d;
            }
            if let Some(b) = args.batch_size {
                cfg.ep.batch_size = b;
            }
            if let Some(t) = args.iters {
                cfg.ep.t_inference = t;
                cfg.ep.t_nudge = t;
            }
            if let Some(a) = args.input_gain {
                cfg.input_gain = a;
            }
            if let Some(h) = args.hidden_bias {
                cfg.hidden_bias = h;
            }
            cfg.train_limit = args.train_limit;
            cfg.test_limit = args.test_limit;
            experiment::run_experiment(&cfg)?
        }
    };
    for r in &metrics.epochs {
        let train = r.train_err.map_or("-".to_string(), |e| format!("{:.4}", e));
        eprintln!("epoch {:>3}  train_err {train}  test_err {:.4}", r.epoch, r.test_err);
    }
    eprintln!("artifacts in {}", args.out.display());
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let params = load_params(&args.netlist)?;
    let xs = read_inputs(&args.input)?;
    let mut cfg = match args.tol {
        Some(tol) => SolverConfig::converged(tol, args.iters),
        None => SolverConfig::fixed(args.iters),
    };
    if args.bidirectional {
        cfg = cfg.with_mode(UpdateMode::BidirectionalAmplifier);
    }
    let (state, cert) = solver::solve_steady_state(&params, xs.view(), &cfg)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["sample", "layer", "node", "potential"])?;
    for (l, layer) in state.layers().iter().enumerate() {
        for ((b, k), v) in layer.indexed_iter() {
            w.write_record([b.to_string(), l.to_string(), k.to_string(), format!("{v:?}")])?;
        }
    }
    w.flush()?;
    if let Some(dest) = args.cert {
        let sink: Box<dyn Write> = if dest == "-" { Box::new(io::stderr()) } else { Box::new(File::create(dest)?) };
        let mut w = csv::Writer::from_writer(sink);
        w.serialize(cert)?;
        w.flush()?;
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let net = ReluNet::load(&args.nn)?;
    let xs = read_inputs(&args.input)?;
    let solver_cfg = SolverConfig::converged(args.tol, args.max_iters);
    let reports = args
        .gamma
        .iter()
        .map(|&g| compile::compile_and_verify(&net, &CompileConfig::new(g), &solver_cfg, xs.view()))
        .collect::<Result<Vec<_>>>()?;
    compile::write_deviation_csv(&reports, output(args.out.as_deref())?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Solve(args) => solve(args),
        Command::Compile(args) => {
            let net = ReluNet::load(&args.nn)?;
            let cfg = CompileConfig { gamma: args.gamma, include_output_leaks: !args.no_output_leaks };
            netlist::save_netlist(&compile::compile(&net, &cfg)?, &args.out)
        }
        Command::Verify(args) => verify(args),
        Command::DemoUniversal { out } => {
            let report = experiment::demo_universal(&out)?;
            for s in &report.summaries {
                eprintln!(
                    "gamma {:e}  max output deviation {:.3e}  antisymmetry defect {:.3e}",
                    s.gamma.unwrap_or(f64::NAN),
                    s.output_dev(),
                    s.antisym_defect()
                );
            }
            eprintln!("tables in {}", out.display());
            Ok(())
        }
        Command::Stats { params } => {
            let params = load_params(&params)?;
            experiment::write_stats_csv(&ep::conductance_stats(&params), io::stdout().lock())
        }
        Command::InitNn { dims, seed, out } => relu::init_relu_net(&dims, seed)?.save(out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
