//! Commands behind the `csaim` binary.

pub mod oracle;
pub mod pgm;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use csaim_core::classifier::{
    evaluate, read_bundle, train_baseline, train_pipeline, write_bundle, Bundle, Classifier, Mode, Model,
    RbmConfig, CSV_HEADER,
};
use csaim_core::dataset::{load_manifest, split, synth_dataset, LabeledDataset};
use csaim_core::immune::CsaimConfig;
use csaim_core::rbm::VisibleKind;

#[derive(Debug, Parser)]
#[command(name = "csaim", version, about = "Clonal selection with RBM-generated memory cells")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic block-pattern dataset.
    Synth(SynthArgs),
    /// Train a model bundle.
    Train(TrainArgs),
    /// Print per-class accuracy reports.
    Eval(EvalArgs),
    /// Export RBM weight filters as PGM images.
    Weights(WeightsArgs),
    /// Run the tiny-model learning-rule checks.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..))]
    pub classes: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub per_class: u64,
    /// Features per sample; PNG images are written when this is a perfect square.
    #[arg(long, default_value_t = 2304, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset cache file, or a `path,label` manifest ending in `.csv`.
    #[arg(long)]
    pub data: PathBuf,
    /// Clonal selection config (`key=value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: u64,
    #[arg(long, default_value_t = 80, value_parser = clap::value_parser!(u64).range(1..))]
    pub hidden: u64,
    /// CD-1 learning rate.
    #[arg(long, default_value_t = 0.01)]
    pub rbm_eta: f64,
    #[arg(long, default_value = "gaussian")]
    pub visible: VisibleKind,
    #[arg(long, default_value = "hybrid")]
    pub mode: Mode,
    /// Image side used when loading a manifest.
    #[arg(long, default_value_t = 48)]
    pub side: usize,
    /// Split the data per class before training (requires --test-per-class).
    #[arg(long, requires = "test_per_class")]
    pub train_per_class: Option<usize>,
    #[arg(long, requires = "train_per_class")]
    pub test_per_class: Option<usize>,
    /// Record real epoch timings in the trace instead of zeros.
    #[arg(long)]
    pub wall_clock: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model bundle directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Datasets to evaluate; each report is titled by the file stem.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = 48)]
    pub side: usize,
    /// Also write the reports as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Filter width for non-square visible layers.
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Parameter draws for the CD-1 direction statistic.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a).map(|_| true),
        Command::Train(a) => cmd_train(&a).map(|_| true),
        Command::Eval(a) => cmd_eval(&a).map(|_| true),
        Command::Weights(a) => cmd_weights(&a).map(|_| true),
        Command::Oracle(a) => cmd_oracle(&a),
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Sidecar describing one command invocation. Timestamps live here so the
/// primary outputs stay reproducible.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub started: u64,
    pub finished: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunRecord {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "command={}\nconfig_hash={}\nseed={}\nstarted={}\nfinished={}\n",
            self.command, self.config_hash, self.seed, self.started, self.finished
        );
        for p in &self.outputs {
            out.push_str(&format!("output={}\n", p.display()));
        }
        out
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(path: &Path, side: usize) -> Result<LabeledDataset> {
    let ds = if path.extension().is_some_and(|e| e == "csv") {
        load_manifest(path, side)?
    } else {
        LabeledDataset::read_cache(path)?
    };
    Ok(ds)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let (classes, per_class, k) = (args.classes as usize, args.per_class as usize, args.k as usize);
    let ds = synth_dataset(classes, per_class, k, args.noise, args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    ds.write_cache(&args.out.join("dataset.txt"))?;
    let side = (k as f64).sqrt().round() as usize;
    if side * side == k {
        let images = args.out.join("images");
        fs::create_dir_all(&images)?;
        let mut manifest = String::from("path,label\n");
        for (i, (sample, label)) in ds.iter().enumerate() {
            let name = format!("images/{i:04}_c{label}.png");
            let pixels: Vec<u8> = sample.iter().map(|v| (v * 255.0).round() as u8).collect();
            image::GrayImage::from_raw(side as u32, side as u32, pixels)
                .expect("pixel count matches")
                .save(args.out.join(&name))
                .with_context(|| format!("writing {name}"))?;
            manifest.push_str(&format!("{name},{label}\n"));
        }
        write(&args.out.join("manifest.csv"), &manifest)?;
    } else {
        log::info!("k = {k} is not a perfect square; skipping images");
    }
    println!("wrote {} samples ({classes} classes) to {}", ds.len(), args.out.display());
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let started = unix_now();
    let mut csaim = match &args.config {
        Some(p) => CsaimConfig::read(p)?,
        None => CsaimConfig::default(),
    };
    if let Some(seed) = args.seed {
        csaim.seed = seed;
    }
    let rbm_cfg = RbmConfig {
        kind: args.visible,
        hidden: args.hidden as usize,
        epochs: args.epochs as usize,
        batch_size: args.batch_size as usize,
        eta: args.rbm_eta,
    };
    rbm_cfg.validate()?;
    let data = load_data(&args.data, args.side)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut outputs = Vec::new();
    let train = match (args.train_per_class, args.test_per_class) {
        (Some(tr), Some(te)) => {
            let (train, test) = split(&data, tr, te, csaim.seed)?;
            for (name, ds) in [("train.dataset", &train), ("test.dataset", &test)] {
                ds.write_cache(&args.out.join(name))?;
                outputs.push(args.out.join(name));
            }
            train
        }
        _ => data,
    };

    let model = match args.mode {
        Mode::Hybrid => {
            let out = train_pipeline(&train, &csaim, &rbm_cfg, false)?;
            let trace = args.out.join("trace.csv");
            write(&trace, &out.trace.to_csv(args.wall_clock))?;
            outputs.push(trace);
            log::info!("{} memory cells", out.model.memory.len());
            Model::Hybrid(out.model)
        }
        Mode::Baseline => Model::Baseline(train_baseline(&train, &csaim)?),
    };
    let bundle = Bundle {
        model,
        csaim,
        rbm: rbm_cfg,
    };
    let model_dir = args.out.join("model");
    write_bundle(&model_dir, &bundle)?;
    outputs.push(model_dir.clone());
    let record = RunRecord {
        command: format!("train --mode {}", args.mode),
        config_hash: bundle.config_hash(),
        seed: bundle.csaim.seed,
        started,
        finished: unix_now(),
        outputs,
    };
    write(&args.out.join("run.txt"), &record.to_text())?;
    println!("model written to {}", model_dir.display());
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let bundle = read_bundle(&args.model)
        .with_context(|| format!("loading model bundle {}", args.model.display()))?;
    let model: &dyn Classifier = match &bundle.model {
        Model::Hybrid(m) => m,
        Model::Baseline(m) => m,
    };
    let mut csv = format!("{CSV_HEADER}\n");
    for path in &args.data {
        let ds = load_data(path, args.side)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into());
        let report = evaluate(model, &ds)?;
        print!("{}", report.to_text(&format!("{name} ({})", bundle.model.mode())));
        csv.push_str(&report.csv_rows(&name));
    }
    if let Some(p) = &args.csv {
        write(p, &csv)?;
    }
    Ok(())
}

pub fn cmd_weights(args: &WeightsArgs) -> Result<()> {
    let bundle = read_bundle(&args.model)
        .with_context(|| format!("loading model bundle {}", args.model.display()))?;
    let Model::Hybrid(model) = &bundle.model else {
        bail!("baseline bundles have no RBM weights");
    };
    let w = model.rbm.weights();
    let (m, j) = w.dim();
    let (width, height) = match args.side {
        Some(s) if s > 0 && m % s == 0 => (s, m / s),
        Some(s) => bail!("--side {s} does not divide the {m} visible units"),
        None => {
            let s = (m as f64).sqrt().round() as usize;
            if s * s != m {
                bail!("{m} visible units do not form a square; pass --side <width>");
            }
            (s, s)
        }
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut tiles = Vec::with_capacity(j);
    for unit in 0..j {
        let column: Vec<f64> = w.column(unit).to_vec();
        let pixels = pgm::normalize(&column);
        write(&args.out.join(format!("unit_{unit:03}.pgm")), &pgm::encode(width, height, &pixels))?;
        tiles.push(pixels);
    }
    let (mw, mh, pixels) = pgm::montage(&tiles, width, height);
    write(&args.out.join("montage.pgm"), &pgm::encode(mw, mh, &pixels))?;
    println!("wrote {j} filters ({width}x{height}) and montage.pgm to {}", args.out.display());
    Ok(())
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<bool> {
    let checks = oracle::run_oracles(oracle::OracleOptions {
        seed: args.seed,
        draws: args.seeds as usize,
        ..Default::default()
    })?;
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}
