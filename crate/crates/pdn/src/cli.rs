//! Command-line front end: dataset generation, training, inverse
//! design, verification, and side-by-side comparison.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::baselines::{emit_report, run_comparison, AnnModel, CompareConfig, TnnModel};
use crate::config::RunConfig;
use crate::dataset::{generate_grid, generate_random, Dataset};
use crate::duct::{spectrum_error, transmission, Structure};
use crate::error::{Error, Result};
use crate::mdn;
use crate::models::{emit_loss_log, peek_kind, weights_context, EpochLoss, ModelKind, PdnModel};
use crate::modes::emit_designs;
use crate::modes::read_designs;
use crate::net::Matrix;
use crate::pca::{density_grid, emit_grid, emit_svg, fit_projection, project};
use crate::target::TargetSpec;

#[derive(Parser, Debug)]
#[command(
    name = "pdn",
    version,
    about = "Inverse design of layered acoustic structures with probability density networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labeled structure/spectrum dataset (.pdnd).
    GenData(GenDataArgs),
    /// Train a model on a dataset and write its weights (.pdnw).
    Train(TrainArgs),
    /// Propose ranked structures whose spectra match a target.
    Design(DesignArgs),
    /// Recompute design spectra with the analytic solver.
    Verify(VerifyArgs),
    /// Train and evaluate several model kinds on one dataset.
    Compare(CompareArgs),
}

/// Shared configuration flags. Precedence: --set > --config > defaults.
#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Configuration file of key = value lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. --set train.seed=7.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        config.apply_overrides(&self.sets)?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["values", "random"])))]
pub struct GenDataArgs {
    /// Values per layer for an exhaustive grid (values^layers pairs).
    #[arg(long)]
    pub values: Option<usize>,
    /// Number of uniformly random structures instead of a grid.
    #[arg(long)]
    pub random: Option<usize>,
    /// Seed for --random sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of layers (overrides geometry.layer_count).
    #[arg(long)]
    pub layers: Option<usize>,
    /// Lift the built-in guard on very large grids.
    #[arg(long)]
    pub allow_large: bool,
    /// Output dataset path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also export the pairs as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset (.pdnd).
    #[arg(long)]
    pub data: PathBuf,
    /// Output weights path.
    #[arg(long)]
    pub out: PathBuf,
    /// Model kind: pdn, ann, or tnn.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden widths, x-separated (e.g. 128x256).
    #[arg(long)]
    pub widths: Option<String>,
    /// Per-epoch loss CSV (default: weights path with a .loss.csv name).
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    /// Trained density-model weights.
    #[arg(long)]
    pub weights: PathBuf,
    /// Target: a CSV path, bandgap:LO-HI, or peak:FREQ.
    #[arg(long)]
    pub target: String,
    /// Ranked designs CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a density-map CSV here, plus an .svg sibling.
    #[arg(long)]
    pub pca_grid: Option<PathBuf>,
    /// Fit the map plane on mixture samples or training labels.
    #[arg(long, default_value = "samples")]
    pub pca_source: String,
    /// Dataset for --pca-source labels.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Designs CSV from the design command.
    #[arg(long)]
    pub designs: PathBuf,
    /// Target the designs were produced for (CSV or template).
    #[arg(long)]
    pub target: String,
    /// Weights file supplying geometry and grid (default: configuration).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Verification CSV with per-design error and predicted spectrum.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Dataset shared by every contender.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated model kinds.
    #[arg(long, default_value = "pdn,ann,tnn")]
    pub models: String,
    /// Report CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Run one parsed command to completion.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => run_gen_data(args),
        Command::Train(args) => run_train(args),
        Command::Design(args) => run_design(args),
        Command::Verify(args) => run_verify(args),
        Command::Compare(args) => run_compare(args),
    }
}

/// The effective configuration is written next to each primary
/// artifact so a run can be reproduced from its outputs alone.
fn write_config_sidecar(artifact: &Path, config: &RunConfig) -> Result<()> {
    let path = artifact.with_extension("config");
    fs::write(&path, config.to_text()).map_err(|e| Error::io(path, e))
}

fn run_gen_data(args: GenDataArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(layers) = args.layers {
        config.geometry.layer_count = layers;
    }
    let grid = config.freq_grid()?;
    let dataset = match (args.values, args.random) {
        (Some(v), None) => generate_grid(v, &config.geometry, &config.medium, &grid, args.allow_large)?,
        (None, Some(n)) => generate_random(n, args.seed, &config.geometry, &config.medium, &grid)?,
        _ => return Err(Error::Usage("pass exactly one of --values or --random".into())),
    };
    dataset.save(&args.out)?;
    write_config_sidecar(&args.out, &config)?;
    if let Some(csv) = &args.csv {
        dataset.export_csv(csv)?;
    }
    let f = grid.frequencies();
    println!("pairs: {}", dataset.len());
    println!("grid: {}..{} Hz, {} points", f[0], f[f.len() - 1], f.len());
    println!("fingerprint: {:016x}", dataset.fingerprint());
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(model) = &args.model {
        config.set("train.model", model)?;
    }
    if let Some(widths) = &args.widths {
        config.set("train.hidden_widths", widths)?;
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(lr) = args.learning_rate {
        config.train.learning_rate = lr;
    }
    if let Some(batch) = args.batch_size {
        config.train.batch_size = batch;
    }
    let dataset = Dataset::load(&args.data)?;
    let mut log: Vec<EpochLoss> = Vec::new();
    // On divergence the models roll back to the last completed epoch;
    // those weights are still written before the error is reported.
    let outcome = match config.model {
        ModelKind::Pdn => {
            let mut model = PdnModel::new(&dataset, &config.train)?;
            let r = model.train(&dataset, &config.train, &mut log);
            model.save(&args.out)?;
            r
        }
        ModelKind::Ann => {
            let mut model = AnnModel::new(&dataset, &config.train)?;
            let r = model.train(&dataset, &config.train, &mut log);
            model.save(&args.out)?;
            r
        }
        ModelKind::Tnn => {
            let mut model = TnnModel::new(&dataset, &config.train)?;
            let r = model.train(&dataset, &config.train, config.forward_gate, &mut log);
            model.save(&args.out)?;
            r
        }
    };
    let loss_path = args
        .loss_log
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    emit_loss_log(&log, &loss_path)?;
    write_config_sidecar(&args.out, &config)?;
    match outcome {
        Ok(()) => {
            match log.last() {
                Some(last) => println!("final loss: {:.6e}", last.loss),
                None => println!("wrote initial weights (0 epochs)"),
            }
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Err(e) => {
            eprintln!(
                "training stopped; checkpoint of the last completed epoch written to {}",
                args.out.display()
            );
            Err(e)
        }
    }
}

fn run_design(args: DesignArgs) -> Result<()> {
    let config = args.config.load()?;
    let kind = peek_kind(&args.weights)?;
    if kind != ModelKind::Pdn {
        return Err(Error::Incompatible(format!(
            "{} holds {} weights; design needs a pdn model (use compare for baselines)",
            args.weights.display(),
            kind.name()
        )));
    }
    let model = PdnModel::load(&args.weights)?;
    let target = TargetSpec::parse(&args.target, config.peak_width)?.resolve(&model.grid)?;
    let params = model.mixture_for(&target)?;
    let modes = model.design(&target, &config.seeker)?;

    let mut uv: Option<Vec<(f64, f64)>> = None;
    if let Some(grid_path) = &args.pca_grid {
        let points = match args.pca_source.as_str() {
            "samples" => {
                let samples = mdn::sample(&params, config.pca_samples, config.pca_seed, &model.scaler);
                design_rows(samples.iter().map(|s| model.scaler.to_design(s)), model.scaler.dims())
            }
            "labels" => {
                let data = args.data.as_ref().ok_or_else(|| {
                    Error::Usage("--pca-source labels needs --data DATASET".into())
                })?;
                let dataset = Dataset::load(data)?;
                if dataset.geometry != model.geometry {
                    return Err(Error::Incompatible(format!(
                        "{} was generated for a different geometry than the model",
                        data.display()
                    )));
                }
                let radii = dataset.radii_matrix();
                design_rows(
                    (0..radii.rows()).map(|i| model.scaler.to_design(radii.row(i))),
                    model.scaler.dims(),
                )
            }
            other => {
                return Err(Error::Usage(format!(
                    "--pca-source wants samples or labels, got {other:?}"
                )))
            }
        };
        let projection = fit_projection(&points)?;
        let markers: Vec<(f64, f64)> = modes
            .iter()
            .map(|m| project(&projection, &m.location))
            .collect();
        let map = density_grid(&params, &projection, config.pca_resolution, &markers, &[])?;
        emit_grid(&map, grid_path)?;
        emit_svg(&map, &grid_path.with_extension("svg"))?;
        uv = Some(markers);
    }

    emit_designs(&modes, uv.as_deref(), &args.out)?;
    write_config_sidecar(&args.out, &config)?;
    println!("{} candidate designs", modes.len());
    for mode in &modes {
        let radii: Vec<String> = mode.radii.iter().map(|r| format!("{:.2}", r * 1000.0)).collect();
        println!(
            "  A{}: [{}] mm, density {:.4e}{}",
            mode.rank,
            radii.join(", "),
            mode.density,
            if mode.boundary { " (boundary)" } else { "" }
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Collect design-unit rows into a matrix for the plane fit.
fn design_rows(rows: impl Iterator<Item = Vec<f64>>, dims: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = rows.collect();
    let mut m = Matrix::zeros(rows.len(), dims);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(r);
    }
    m
}

fn run_verify(args: VerifyArgs) -> Result<()> {
    let config = args.config.load()?;
    let (geometry, medium, grid) = match &args.weights {
        Some(path) => {
            let (_, g, m, fg) = weights_context(path)?;
            (g, m, fg)
        }
        None => (config.geometry, config.medium, config.freq_grid()?),
    };
    let target = TargetSpec::parse(&args.target, config.peak_width)?.resolve(&grid)?;
    let rows = read_designs(&args.designs)?;
    if rows.is_empty() {
        return Err(Error::Usage(format!(
            "{}: no designs to verify",
            args.designs.display()
        )));
    }

    let mut out = String::from("rank,error");
    for &f in grid.frequencies() {
        out.push_str(&format!(",t{f}"));
    }
    out.push('\n');
    for row in &rows {
        if row.radii.len() != geometry.layer_count {
            return Err(Error::Incompatible(format!(
                "design A{} has {} layers but the geometry expects {}",
                row.rank,
                row.radii.len(),
                geometry.layer_count
            )));
        }
        // Designs CSVs carry 0.01 mm precision, so a radius printed at a
        // bound can land just outside it; snap those back.
        let radii: Vec<f64> = row
            .radii
            .iter()
            .map(|&r| {
                if (r - geometry.radius_min).abs() <= 1e-5 {
                    geometry.radius_min.max(r.min(geometry.radius_max))
                } else if (r - geometry.radius_max).abs() <= 1e-5 {
                    geometry.radius_max.min(r.max(geometry.radius_min))
                } else {
                    r
                }
            })
            .collect();
        let structure = Structure::new(radii, &geometry)?;
        let predicted = transmission(&structure, &grid, &geometry, &medium)?;
        let err = spectrum_error(&predicted, &target)?;
        out.push_str(&format!("{},{:.12e}", row.rank, err));
        for &t in predicted.values() {
            out.push_str(&format!(",{t:.17e}"));
        }
        out.push('\n');
        println!("A{}: mean abs error {:.6e}", row.rank, err);
    }
    fs::write(&args.out, &out).map_err(|e| Error::io(&args.out, e))?;
    write_config_sidecar(&args.out, &config)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Parse a comma-separated model list, rejecting unknown names.
fn parse_kinds(models: &str) -> Result<Vec<ModelKind>> {
    let kinds: Vec<ModelKind> = models
        .split(',')
        .filter(|k| !k.trim().is_empty())
        .map(|k| {
            ModelKind::from_name(k.trim()).ok_or_else(|| {
                Error::Usage(format!("unknown model {:?}: expected pdn, ann, or tnn", k.trim()))
            })
        })
        .collect::<Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::Usage("--models lists no model kinds".into()));
    }
    Ok(kinds)
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    let kinds = parse_kinds(&args.models)?;
    let dataset = Dataset::load(&args.data)?;
    let cfg = CompareConfig {
        kinds,
        train: config.train.clone(),
        seeker: config.seeker,
        holdout_fraction: config.holdout_fraction,
        variety_threshold_mm: config.variety_threshold_mm,
        forward_gate: config.forward_gate,
    };
    let report = run_comparison(&dataset, &cfg)?;
    emit_report(&report, &args.out)?;
    write_config_sidecar(&args.out, &config)?;
    for row in &report.rows {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4e}"));
        println!(
            "{}: train {}, test {}, variety mean {} max {}, {}",
            row.kind.name(),
            fmt(row.train_error),
            fmt(row.test_error),
            fmt(row.variety_mean),
            row.variety_max.map_or("-".to_string(), |v| v.to_string()),
            row.status
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
