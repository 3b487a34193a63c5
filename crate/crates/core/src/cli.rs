//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 on runtime failure,
//! 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::affemonet::{save_checkpoint, Init, MetricRecord, Model, NetConfig, NetObjective};
use crate::evalharness::{evaluate_descriptor, evaluate_net, train_model, Dataset, NetEvalConfig, SyntheticSpec};
use crate::imagio::{read_pgm_file, write_pgm_file, GrayImage};
use crate::rarity::{encode_rarity, featurize, l1_distance, FeatureVector, RingParams, ETA_COUNT};
use crate::tensor::{grad_check, GradCheckConfig};

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Largest end-to-end relative gradient error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "rarity", version, about = "Ring-topology descriptor and three-stream expression network")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the four code maps of an image as <prefix>_eta{1..4}.pgm.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_prefix: String,
        #[command(flatten)]
        ring: RingArgs,
    },
    /// Block-histogram feature vector of an image, as JSON.
    Featurize {
        #[arg(long)]
        input: PathBuf,
        /// Output file (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        grid: usize,
        #[command(flatten)]
        ring: RingArgs,
    },
    /// Manhattan distance between two feature JSON files.
    Distance { a: PathBuf, b: PathBuf },
    /// Leave-one-subject-out evaluation of descriptor + 1-NN.
    EvalDescriptor {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        grid: usize,
        /// Augment training images (5 rotations x 2 flips).
        #[arg(long)]
        augment: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        ring: RingArgs,
    },
    /// Train the network on every image of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Where to write the trained checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON-lines metrics file (stdout when omitted).
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Leave-one-subject-out evaluation of the network.
    EvalNet {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Finite-difference check of the full network's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        /// Coordinates sampled per parameter tensor.
        #[arg(long, default_value_t = 32)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Write a generated texture dataset as <output>/<subject>/<class>/*.pgm.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 6)]
        subjects: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 2)]
        per_cell: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RingArgs {
    #[arg(long, default_value_t = 1.0)]
    r1: f64,
    #[arg(long, default_value_t = 2.0)]
    r2: f64,
    #[arg(long, default_value_t = 8)]
    p: usize,
}

impl RingArgs {
    fn params(&self) -> Result<RingParams, String> {
        RingParams::new(self.r1, self.r2, self.p).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Args)]
struct NetArgs {
    /// Input side M (images must be M x M).
    #[arg(long, default_value_t = 120)]
    size: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.8)]
    momentum: f64,
    #[arg(long, default_value_t = 2e-6)]
    weight_decay: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the rotation/flip augmentation.
    #[arg(long)]
    no_augment: bool,
    #[command(flatten)]
    ring: RingArgs,
}

impl NetArgs {
    /// Evaluation config; the class count is filled in from the dataset.
    fn config(&self) -> Result<NetEvalConfig, String> {
        let net = NetConfig {
            input_size: self.size,
            num_classes: 2,
            seed: self.seed,
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            ring: self.ring.params()?,
        };
        net.validate().map_err(|e| e.to_string())?;
        if self.batch_size == 0 {
            return Err("--batch-size must be positive".into());
        }
        Ok(NetEvalConfig {
            net,
            epochs: self.epochs,
            batch_size: self.batch_size,
            augment: !self.no_augment,
        })
    }
}

/// Flag validation that clap cannot express; failures are usage errors.
fn validate(cmd: &Command) -> Result<(), String> {
    match cmd {
        Command::Encode { ring, .. } => ring.params().map(drop),
        Command::Featurize { ring, grid, .. } | Command::EvalDescriptor { ring, grid, .. } => {
            if *grid == 0 {
                return Err("--grid must be positive".into());
            }
            ring.params().map(drop)
        }
        Command::Train { net, .. } | Command::EvalNet { net, .. } => net.config().map(drop),
        Command::Gradcheck {
            size, classes, eps, ..
        } => {
            NetConfig::with_size(*size, *classes).validate().map_err(|e| e.to_string())?;
            if eps.is_nan() || *eps <= 0.0 {
                return Err("--eps must be positive".into());
            }
            Ok(())
        }
        Command::Synth {
            subjects,
            classes,
            per_cell,
            size,
            ..
        } => {
            if *subjects == 0 || *classes == 0 || *per_cell == 0 || *size < 5 {
                return Err("synth needs positive counts and --size >= 5".into());
            }
            Ok(())
        }
        Command::Distance { .. } => Ok(()),
    }
}

/// Entry point shared by the binary and the tests.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(msg) = validate(&cli.command) {
        eprintln!("error: {msg}");
        return 2;
    }
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be positive");
        return 2;
    }
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(e.into()),
        },
        None => execute(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn write_or_print(output: Option<&Path>, text: &str) -> CliResult {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn read_feature(path: &Path) -> CliResult<FeatureVector> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    Ok(FeatureVector::from_json(&text).map_err(|e| format!("parsing {}: {e}", path.display()))?)
}

#[derive(Serialize)]
struct GradcheckOutput<'a> {
    max_rel_error: f64,
    tolerance: f64,
    passed: bool,
    checked: usize,
    skipped: usize,
    size: usize,
    seed: u64,
    groups: &'a [crate::tensor::GroupError],
}

fn execute(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Encode { input, out_prefix, ring } => {
            let img = read_pgm_file(&input)?;
            let resp = encode_rarity(&img, &ring.params()?)?;
            for eta in 0..ETA_COUNT {
                write_pgm_file(format!("{out_prefix}_eta{}.pgm", eta + 1), &resp.to_image(eta))?;
            }
        }
        Command::Featurize {
            input,
            output,
            grid,
            ring,
        } => {
            let fv = featurize(&read_pgm_file(&input)?, &ring.params()?, grid)?;
            write_or_print(output.as_deref(), &fv.to_json())?;
        }
        Command::Distance { a, b } => {
            println!("{}", l1_distance(&read_feature(&a)?, &read_feature(&b)?)?);
        }
        Command::EvalDescriptor {
            data,
            grid,
            augment,
            output,
            ring,
        } => {
            let dataset = Dataset::open(&data)?;
            let report = evaluate_descriptor(&dataset, &ring.params()?, grid, augment)?;
            write_or_print(output.as_deref(), &report.to_json())?;
        }
        Command::Train {
            data,
            checkpoint,
            metrics,
            net,
        } => {
            let cfg = net.config()?;
            let dataset = Dataset::open(&data)?;
            let mut sink: Box<dyn Write> = match &metrics {
                Some(p) => Box::new(std::io::BufWriter::new(
                    std::fs::File::create(p).map_err(|e| format!("creating {}: {e}", p.display()))?,
                )),
                None => Box::new(std::io::stdout().lock()),
            };
            let all: Vec<usize> = (0..dataset.len()).collect();
            let mut io_error = None;
            let model = train_model(&dataset, &all, &cfg, |step, loss| {
                let line = serde_json::to_string(&MetricRecord {
                    step,
                    loss,
                    lr: cfg.net.lr,
                })
                .expect("metrics serialize");
                if let Err(e) = writeln!(sink, "{line}") {
                    io_error.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_error {
                return Err(e.into());
            }
            sink.flush()?;
            std::fs::write(&checkpoint, save_checkpoint(&model))
                .map_err(|e| format!("writing {}: {e}", checkpoint.display()))?;
        }
        Command::EvalNet { data, output, net } => {
            let cfg = net.config()?;
            let dataset = Dataset::open(&data)?;
            let report = evaluate_net(&dataset, &cfg)?;
            write_or_print(output.as_deref(), &report.to_json())?;
        }
        Command::Gradcheck {
            seed,
            size,
            classes,
            samples,
            eps,
        } => {
            let report = network_gradcheck(seed, size, classes, samples, eps)?;
            let passed = report.max_rel_error <= GRADCHECK_TOLERANCE;
            let out = GradcheckOutput {
                max_rel_error: report.max_rel_error,
                tolerance: GRADCHECK_TOLERANCE,
                passed,
                checked: report.checked,
                skipped: report.skipped,
                size,
                seed,
                groups: &report.groups,
            };
            println!("{}", serde_json::to_string(&out)?);
            return Ok(if passed { 0 } else { 1 });
        }
        Command::Synth {
            output,
            subjects,
            classes,
            per_cell,
            size,
            seed,
        } => {
            let data = SyntheticSpec {
                subjects,
                classes,
                per_cell,
                size,
                seed,
                ..Default::default()
            }
            .generate();
            data.write_tree(&output)?;
        }
    }
    Ok(0)
}

/// Gradient check of a freshly built network on a random image.
pub fn network_gradcheck(
    seed: u64,
    size: usize,
    classes: usize,
    samples: usize,
    eps: f64,
) -> CliResult<crate::tensor::GradCheckReport> {
    use rand::{Rng, SeedableRng};
    let config = NetConfig {
        seed,
        ..NetConfig::with_size(size, classes)
    };
    let mut model = Model::build(config)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    // Zero-initialized tensors would hide every upstream gradient and put
    // pre-activations exactly on ReLU kinks, so give them random values.
    for spec in model.topology().ledger() {
        if spec.init != Init::Zero {
            continue;
        }
        let bound = if spec.fan_in > 0 { (6.0 / spec.fan_in as f64).sqrt() } else { 0.1 };
        let n: usize = spec.shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        model.set_param(&spec.name, &values)?;
    }
    let image = GrayImage::from_fn(size, size, |_, _| rng.gen_range(0.0..255.0));
    let label = rng.gen_range(0..classes);
    let input = model.prepare(&image)?;
    let objective = NetObjective {
        model: &model,
        input,
        label,
    };
    let cfg = GradCheckConfig {
        eps,
        max_per_group: Some(samples),
        seed,
        ..GradCheckConfig::default()
    };
    Ok(grad_check(&objective, model.params(), model.names(), &cfg))
}
