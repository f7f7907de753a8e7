//! Baseline inverse models and the comparison harness: a direct
//! regression network, a tandem network, and spectrum-space scoring of
//! all model kinds through the physics oracle.
//!
//! The reported error of a multi-design model is its best design's
//! oracle error (best-of-modes), so it is never worse than the rank-1
//! design alone.

use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::bytes::Reader;
use crate::dataset::Dataset;
use crate::duct::{self, FreqGrid, Geometry, Medium, Spectrum, Structure};
use crate::error::{Error, Result};
use crate::mdn::DesignScaler;
use crate::models::{
    epoch_batches, read_dense, read_envelope, read_scaler, read_trunk, write_dense,
    write_envelope, write_scaler, write_trunk, EpochLoss, ModelKind, PdnModel, TrainConfig,
};
use crate::modes::SeekerConfig;
use crate::net::{mse, mse_grad, Adam, DenseGrads, DenseLayer, Matrix, RunMode, Trunk, TrunkGrads};
use crate::rng::Rng;

/// Default acceptance gate on the tandem's stage-1 holdout error
/// (mean absolute transmittance).
pub const FORWARD_GATE_DEFAULT: f64 = 0.05;

/// Trunk plus one linear output layer: the shape of the direct inverse
/// model and of both tandem stages.
#[derive(Debug, Clone)]
pub struct Regressor {
    pub trunk: Trunk,
    pub head: DenseLayer,
}

impl Regressor {
    pub fn init(input_dim: usize, output_dim: usize, widths: &[usize], act: crate::net::Activation, rng: &mut Rng) -> Self {
        let trunk = Trunk::new(input_dim, widths, act, rng);
        let head = DenseLayer::he_uniform(trunk.output_dim(), output_dim, rng);
        Self { trunk, head }
    }

    pub fn infer(&self, x: &Matrix) -> Matrix {
        self.head.forward(&self.trunk.infer(x))
    }

    pub fn trainable(&self) -> Vec<f64> {
        let mut out = self.trunk.trainable();
        out.extend(self.head.trainable());
        out
    }

    pub fn set_trainable(&mut self, flat: &[f64]) {
        let nt = self.trunk.trainable().len();
        self.trunk.set_trainable(&flat[..nt]);
        self.head.set_trainable(&flat[nt..]);
    }

    /// Trainable parameters plus batch-norm running statistics.
    pub fn state(&self) -> Vec<f64> {
        let mut out = self.trunk.state();
        out.extend(self.head.trainable());
        out
    }

    pub fn set_state(&mut self, flat: &[f64]) {
        let ns = self.trunk.state().len();
        self.trunk.set_state(&flat[..ns]);
        self.head.set_trainable(&flat[ns..]);
    }

    /// Minimize mean squared error of `targets` given `inputs`. Same
    /// epoch/batch/rollback contract as the density model's trainer.
    pub fn train(
        &mut self,
        inputs: &Matrix,
        targets: &Matrix,
        config: &TrainConfig,
        log: &mut Vec<EpochLoss>,
    ) -> Result<()> {
        config.validate()?;
        let mut adam = Adam::new(config.learning_rate, config.weight_decay);
        let mut checkpoint = self.state();
        for epoch in 0..config.epochs {
            match self.train_epoch(inputs, targets, config, epoch, &mut adam) {
                Ok(loss) => {
                    log.push(EpochLoss { epoch, loss });
                    checkpoint = self.state();
                }
                Err(e) => {
                    self.set_state(&checkpoint);
                    return Err(Error::Training {
                        context: format!("epoch {epoch} (weights rolled back to last completed epoch)"),
                        message: e.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    fn train_epoch(
        &mut self,
        inputs: &Matrix,
        targets: &Matrix,
        config: &TrainConfig,
        epoch: usize,
        adam: &mut Adam,
    ) -> Result<f64> {
        let n = inputs.rows();
        let mut weighted = 0.0;
        for batch in epoch_batches(n, config.batch_size, config.seed, epoch)? {
            let x = inputs.select_rows(&batch);
            let y = targets.select_rows(&batch);
            let trace = self.trunk.forward(&x, RunMode::Train);
            self.trunk.commit_running_stats(&trace);
            let pred = self.head.forward(trace.output());
            weighted += mse(&pred, &y) * batch.len() as f64;
            let (head_grads, d_out) = self.head.backward(trace.output(), &mse_grad(&pred, &y));
            let (trunk_grads, _) = self.trunk.backward(&trace, &d_out);
            self.apply_step(adam, &trunk_grads, &head_grads)?;
        }
        Ok(weighted / n as f64)
    }

    fn apply_step(&mut self, adam: &mut Adam, trunk_grads: &TrunkGrads, head_grads: &DenseGrads) -> Result<()> {
        let mut trunk_params = self.trunk.trainable();
        let mut head_params = self.head.trainable();
        adam.step(&mut [
            (&mut trunk_params, &trunk_grads.flatten()),
            (&mut head_params, &head_grads.flatten()),
        ])?;
        self.trunk.set_trainable(&trunk_params);
        self.head.set_trainable(&head_params);
        Ok(())
    }
}

/// Direct inverse model: spectrum to normalized structure by plain
/// regression.
#[derive(Debug, Clone)]
pub struct AnnModel {
    pub reg: Regressor,
    pub scaler: DesignScaler,
    pub geometry: Geometry,
    pub medium: Medium,
    pub grid: FreqGrid,
}

impl AnnModel {
    pub fn new(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::substream(config.seed, 0);
        let reg = Regressor::init(
            dataset.grid.len(),
            dataset.geometry.layer_count,
            &config.hidden_widths,
            config.activation,
            &mut rng,
        );
        Ok(Self {
            reg,
            scaler: DesignScaler::from_geometry(&dataset.geometry),
            geometry: dataset.geometry,
            medium: dataset.medium,
            grid: dataset.grid.clone(),
        })
    }

    pub fn train(&mut self, dataset: &Dataset, config: &TrainConfig, log: &mut Vec<EpochLoss>) -> Result<()> {
        let inputs = dataset.spectra_matrix();
        let radii = dataset.radii_matrix();
        let mut targets = Matrix::zeros(radii.rows(), radii.cols());
        for i in 0..radii.rows() {
            targets.row_mut(i).copy_from_slice(&self.scaler.to_design(radii.row(i)));
        }
        self.reg.train(&inputs, &targets, config, log)
    }

    /// The single predicted structure, in metres, clamped to range.
    pub fn predict(&self, target: &Spectrum) -> Result<Vec<f64>> {
        if target.len() != self.grid.len() {
            return Err(Error::Incompatible(format!(
                "target has {} points but the model was trained on a {}-point grid",
                target.len(),
                self.grid.len()
            )));
        }
        let x = Matrix::from_vec(1, self.grid.len(), target.values().to_vec());
        let design = self.reg.infer(&x);
        Ok(self.scaler.to_physical_clamped(design.row(0)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        write_envelope(&mut out, ModelKind::Ann, &self.geometry, &self.medium, &self.grid);
        write_trunk(&mut out, &self.reg.trunk);
        write_dense(&mut out, &self.reg.head);
        write_scaler(&mut out, &self.scaler);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader::new(&bytes, path);
        let (kind, geometry, medium, grid) = read_envelope(&mut r)?;
        if kind != ModelKind::Ann {
            return Err(Error::Incompatible(format!(
                "{} holds a {} model, expected an ann model",
                path.display(),
                kind.name()
            )));
        }
        let trunk = read_trunk(&mut r)?;
        let head = read_dense(&mut r)?;
        let scaler = read_scaler(&mut r, path)?;
        r.expect_end()?;
        Ok(Self {
            reg: Regressor { trunk, head },
            scaler,
            geometry,
            medium,
            grid,
        })
    }
}

/// Stage-2 composite pass: spectra through the inverse net (train mode)
/// and the frozen forward net (inference mode), with the squared
/// spectrum reconstruction error and its gradients for the inverse net
/// only. Pure; running statistics are untouched.
pub fn tandem_batch(
    inverse: &Regressor,
    forward_net: &Regressor,
    spectra: &Matrix,
) -> (f64, TrunkGrads, DenseGrads, crate::net::TrunkTrace) {
    let g_trace = inverse.trunk.forward(spectra, RunMode::Train);
    let s_pred = inverse.head.forward(g_trace.output());
    let f_trace = forward_net.trunk.forward(&s_pred, RunMode::Infer);
    let spec_pred = forward_net.head.forward(f_trace.output());
    let loss = mse(&spec_pred, spectra);

    let d_spec = mse_grad(&spec_pred, spectra);
    let (_, d_fout) = forward_net.head.backward(f_trace.output(), &d_spec);
    let (_, d_spred) = forward_net.trunk.backward(&f_trace, &d_fout);
    let (gh_grads, d_gout) = inverse.head.backward(g_trace.output(), &d_spred);
    let (gt_grads, _) = inverse.trunk.backward(&g_trace, &d_gout);
    (loss, gt_grads, gh_grads, g_trace)
}

/// Tandem model: a pretrained forward net (structure to spectrum) and an
/// inverse net trained through it.
#[derive(Debug, Clone)]
pub struct TnnModel {
    /// Stage-1 net, normalized structure to spectrum; frozen in stage 2.
    pub forward_net: Regressor,
    /// Stage-2 net, spectrum to normalized structure.
    pub inverse: Regressor,
    /// Stage-1 mean absolute error on the seeded holdout.
    pub forward_holdout_error: f64,
    pub scaler: DesignScaler,
    pub geometry: Geometry,
    pub medium: Medium,
    pub grid: FreqGrid,
}

impl TnnModel {
    pub fn new(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::substream(config.seed, 0);
        let d = dataset.geometry.layer_count;
        let glen = dataset.grid.len();
        let forward_net = Regressor::init(d, glen, &config.hidden_widths, config.activation, &mut rng);
        let inverse = Regressor::init(glen, d, &config.hidden_widths, config.activation, &mut rng);
        Ok(Self {
            forward_net,
            inverse,
            forward_holdout_error: f64::INFINITY,
            scaler: DesignScaler::from_geometry(&dataset.geometry),
            geometry: dataset.geometry,
            medium: dataset.medium,
            grid: dataset.grid.clone(),
        })
    }

    /// Two-stage training. Stage 1 fits the forward net on all pairs
    /// except a seeded ~10% holdout and must reach `gate` mean absolute
    /// holdout error, or stage 2 is refused (a bad forward model poisons
    /// the tandem). Stage 2 trains the inverse net through the frozen
    /// forward net on all pairs.
    ///
    /// The log holds stage-1 epochs first, then stage-2 epochs numbered
    /// from `config.epochs` on.
    pub fn train(&mut self, dataset: &Dataset, config: &TrainConfig, gate: f64, log: &mut Vec<EpochLoss>) -> Result<()> {
        config.validate()?;
        let n = dataset.len();
        let holdout_count = (n / 10).max(1);
        if n < holdout_count + 2 {
            return Err(Error::Training {
                context: "tandem stage 1".into(),
                message: format!("{n} pairs are too few to split off a holdout and train"),
            });
        }
        let mut holdout = Rng::substream(config.seed, HOLDOUT_STREAM).sample_indices(n, holdout_count);
        holdout.sort_unstable();
        let train_idx: Vec<usize> = (0..n).filter(|i| holdout.binary_search(i).is_err()).collect();

        let radii = dataset.radii_matrix();
        let mut designs = Matrix::zeros(n, radii.cols());
        for i in 0..n {
            designs.row_mut(i).copy_from_slice(&self.scaler.to_design(radii.row(i)));
        }
        let spectra = dataset.spectra_matrix();

        self.forward_net
            .train(&designs.select_rows(&train_idx), &spectra.select_rows(&train_idx), config, log)
            .map_err(|e| Error::Training {
                context: "tandem stage 1".into(),
                message: e.to_string(),
            })?;

        let hold_pred = self.forward_net.infer(&designs.select_rows(&holdout));
        let hold_true = spectra.select_rows(&holdout);
        self.forward_holdout_error = hold_pred
            .data()
            .iter()
            .zip(hold_true.data())
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>()
            / hold_pred.data().len() as f64;
        if config.epochs > 0 && self.forward_holdout_error > gate {
            return Err(Error::Training {
                context: "tandem stage 1".into(),
                message: format!(
                    "forward net holdout error {:.4} exceeds the {gate} gate; refusing stage 2",
                    self.forward_holdout_error
                ),
            });
        }

        let frozen = self.forward_net.state();
        let mut adam = Adam::new(config.learning_rate, config.weight_decay);
        let mut checkpoint = self.inverse.state();
        for epoch in 0..config.epochs {
            let mut outcome = Ok(0.0);
            let mut weighted = 0.0;
            for batch in epoch_batches(n, config.batch_size, config.seed, epoch)? {
                let x = spectra.select_rows(&batch);
                let (loss, gt, gh, trace) = tandem_batch(&self.inverse, &self.forward_net, &x);
                self.inverse.trunk.commit_running_stats(&trace);
                weighted += loss * batch.len() as f64;
                if let Err(e) = self.inverse.apply_step(&mut adam, &gt, &gh) {
                    outcome = Err(e);
                    break;
                }
            }
            match outcome {
                Ok(_) => {
                    log.push(EpochLoss { epoch: config.epochs + epoch, loss: weighted / n as f64 });
                    checkpoint = self.inverse.state();
                }
                Err(e) => {
                    self.inverse.set_state(&checkpoint);
                    return Err(Error::Training {
                        context: format!("tandem stage 2, epoch {epoch} (inverse net rolled back)"),
                        message: e.to_string(),
                    });
                }
            }
        }
        debug_assert_eq!(self.forward_net.state(), frozen, "stage 2 must not touch the forward net");
        Ok(())
    }

    /// The single predicted structure, in metres, clamped to range.
    pub fn predict(&self, target: &Spectrum) -> Result<Vec<f64>> {
        if target.len() != self.grid.len() {
            return Err(Error::Incompatible(format!(
                "target has {} points but the model was trained on a {}-point grid",
                target.len(),
                self.grid.len()
            )));
        }
        let x = Matrix::from_vec(1, self.grid.len(), target.values().to_vec());
        let design = self.inverse.infer(&x);
        Ok(self.scaler.to_physical_clamped(design.row(0)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        write_envelope(&mut out, ModelKind::Tnn, &self.geometry, &self.medium, &self.grid);
        write_trunk(&mut out, &self.forward_net.trunk);
        write_dense(&mut out, &self.forward_net.head);
        write_trunk(&mut out, &self.inverse.trunk);
        write_dense(&mut out, &self.inverse.head);
        out.extend_from_slice(&self.forward_holdout_error.to_le_bytes());
        write_scaler(&mut out, &self.scaler);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader::new(&bytes, path);
        let (kind, geometry, medium, grid) = read_envelope(&mut r)?;
        if kind != ModelKind::Tnn {
            return Err(Error::Incompatible(format!(
                "{} holds a {} model, expected a tnn model",
                path.display(),
                kind.name()
            )));
        }
        let f_trunk = read_trunk(&mut r)?;
        let f_head = read_dense(&mut r)?;
        let g_trunk = read_trunk(&mut r)?;
        let g_head = read_dense(&mut r)?;
        let forward_holdout_error = r.f64()?;
        let scaler = read_scaler(&mut r, path)?;
        r.expect_end()?;
        Ok(Self {
            forward_net: Regressor { trunk: f_trunk, head: f_head },
            inverse: Regressor { trunk: g_trunk, head: g_head },
            forward_holdout_error,
            scaler,
            geometry,
            medium,
            grid,
        })
    }
}

const HOLDOUT_STREAM: u64 = 1 << 32;
const SPLIT_STREAM: u64 = (1 << 32) + 1;

/// Spectrum-space scores of one model over a target set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    /// Mean over targets of the best design's oracle error.
    pub mean_error: f64,
    /// Mean over targets of the design variety count.
    pub variety_mean: f64,
    pub variety_max: usize,
}

/// Count of designs that are pairwise at least `threshold` apart in
/// max-norm, kept greedily in the given (rank) order.
fn variety_count(designs: &[Vec<f64>], threshold: f64) -> usize {
    let mut kept: Vec<&Vec<f64>> = Vec::new();
    for d in designs {
        let distinct = kept.iter().all(|k| {
            k.iter()
                .zip(d.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                >= threshold
        });
        if distinct {
            kept.push(d);
        }
    }
    kept.len()
}

/// Score a model over targets: `designs_for` yields its design(s) per
/// target in rank order, `oracle` recomputes a design's spectrum, the
/// per-target error is the best design's mean absolute deviation from
/// the target, and variety counts designs pairwise `variety_threshold`
/// apart (same units as the designs).
pub fn evaluate<D, O>(
    designs_for: D,
    targets: &[Spectrum],
    oracle: O,
    variety_threshold: f64,
) -> Result<EvalSummary>
where
    D: Fn(&Spectrum) -> Result<Vec<Vec<f64>>>,
    O: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if targets.is_empty() {
        return Err(Error::Domain("evaluation needs at least one target".into()));
    }
    let mut err_sum = 0.0;
    let mut variety_sum = 0.0;
    let mut variety_max = 0usize;
    for target in targets {
        let designs = designs_for(target)?;
        if designs.is_empty() {
            return Err(Error::Training {
                context: "evaluation".into(),
                message: "model produced no designs for a target".into(),
            });
        }
        let mut best = f64::INFINITY;
        for design in &designs {
            let spec = oracle(design)?;
            if spec.len() != target.len() {
                return Err(Error::Domain(format!(
                    "oracle returned {} points for a {}-point target",
                    spec.len(),
                    target.len()
                )));
            }
            let err = spec
                .iter()
                .zip(target.values())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / spec.len() as f64;
            best = best.min(err);
        }
        let variety = variety_count(&designs, variety_threshold);
        err_sum += best;
        variety_sum += variety as f64;
        variety_max = variety_max.max(variety);
    }
    let n = targets.len() as f64;
    Ok(EvalSummary {
        mean_error: err_sum / n,
        variety_mean: variety_sum / n,
        variety_max,
    })
}

/// One comparison table line. Metric fields are absent when the model
/// failed; `status` is "ok" or the failure note.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub kind: ModelKind,
    pub train_error: Option<f64>,
    pub test_error: Option<f64>,
    pub time_s: Option<f64>,
    pub variety_mean: Option<f64>,
    pub variety_max: Option<usize>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Run metadata, emitted as leading `# key = value` comment lines.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

const REPORT_HEADER: &str = "kind,train_error,test_error,time_s,variety_mean,variety_max,status";

pub fn emit_report(report: &Report, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (k, v) in &report.metadata {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str(REPORT_HEADER);
    out.push('\n');
    let num = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6e}"));
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.kind.name(),
            num(row.train_error),
            num(row.test_error),
            num(row.time_s),
            num(row.variety_mean),
            row.variety_max.map_or(String::new(), |v| v.to_string()),
            row.status.replace(',', ";").replace('\n', " "),
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut metadata = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let n = lineno + 1;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                metadata.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if line == REPORT_HEADER || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(path, 0, format!("line {n}: expected 7 fields, got {}", fields.len())));
        }
        let kind = ModelKind::from_name(fields[0])
            .ok_or_else(|| Error::format(path, 0, format!("line {n}: unknown model kind {:?}", fields[0])))?;
        let opt_f64 = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::format(path, 0, format!("line {n}: bad {what}: {e}")))
        };
        rows.push(ReportRow {
            kind,
            train_error: opt_f64(fields[1], "train_error")?,
            test_error: opt_f64(fields[2], "test_error")?,
            time_s: opt_f64(fields[3], "time_s")?,
            variety_mean: opt_f64(fields[4], "variety_mean")?,
            variety_max: if fields[5].is_empty() {
                None
            } else {
                Some(fields[5].parse::<usize>().map_err(|e| {
                    Error::format(path, 0, format!("line {n}: bad variety_max: {e}"))
                })?)
            },
            status: fields[6].to_string(),
        });
    }
    Ok(Report { metadata, rows })
}

/// Knobs of a full model comparison run.
#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub kinds: Vec<ModelKind>,
    pub train: TrainConfig,
    pub seeker: SeekerConfig,
    /// Fraction of pairs held out as the test set.
    pub holdout_fraction: f64,
    /// Design distinctness threshold in millimetres (max-norm).
    pub variety_threshold_mm: f64,
    /// Stage-1 gate for the tandem model.
    pub forward_gate: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            kinds: vec![ModelKind::Pdn, ModelKind::Ann, ModelKind::Tnn],
            train: TrainConfig::default(),
            seeker: SeekerConfig::default(),
            holdout_fraction: 0.1,
            variety_threshold_mm: 2.0,
            forward_gate: FORWARD_GATE_DEFAULT,
        }
    }
}

/// Train every requested model kind on a shared train split and score
/// all of them on the same held-out targets through the physics oracle.
/// A failing model is reported in its row and does not abort the rest.
pub fn run_comparison(dataset: &Dataset, cfg: &CompareConfig) -> Result<Report> {
    cfg.train.validate()?;
    let n = dataset.len();
    if !(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0) {
        return Err(Error::Domain(format!("holdout fraction must be in (0, 1), got {}", cfg.holdout_fraction)));
    }
    let test_count = ((n as f64 * cfg.holdout_fraction).round() as usize).max(1);
    if n < test_count + 2 {
        return Err(Error::Domain(format!("{n} pairs are too few to split {test_count} off for testing")));
    }
    let mut test_idx = Rng::substream(cfg.train.seed, SPLIT_STREAM).sample_indices(n, test_count);
    test_idx.sort_unstable();
    let train_idx: Vec<usize> = (0..n).filter(|i| test_idx.binary_search(i).is_err()).collect();
    let train_ds = dataset.subset(&train_idx);
    let train_targets: Vec<Spectrum> = train_idx.iter().map(|&i| dataset.pairs()[i].spectrum.clone()).collect();
    let test_targets: Vec<Spectrum> = test_idx.iter().map(|&i| dataset.pairs()[i].spectrum.clone()).collect();

    let geometry = dataset.geometry;
    let medium = dataset.medium;
    let grid = dataset.grid.clone();
    let oracle = |radii: &[f64]| -> Result<Vec<f64>> {
        let s = Structure::new(radii.to_vec(), &geometry)?;
        Ok(duct::transmission(&s, &grid, &geometry, &medium)?.values().to_vec())
    };
    let threshold_m = cfg.variety_threshold_mm * 1e-3;

    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let started = Instant::now();
        let scored: Result<(EvalSummary, EvalSummary)> = (|| {
            let designs_for: Box<dyn Fn(&Spectrum) -> Result<Vec<Vec<f64>>>> = match kind {
                ModelKind::Pdn => {
                    let mut model = PdnModel::new(&train_ds, &cfg.train)?;
                    model.train(&train_ds, &cfg.train, &mut Vec::new())?;
                    Box::new(move |t| {
                        Ok(model.design(t, &cfg.seeker)?.into_iter().map(|m| m.radii).collect())
                    })
                }
                ModelKind::Ann => {
                    let mut model = AnnModel::new(&train_ds, &cfg.train)?;
                    model.train(&train_ds, &cfg.train, &mut Vec::new())?;
                    Box::new(move |t| Ok(vec![model.predict(t)?]))
                }
                ModelKind::Tnn => {
                    let mut model = TnnModel::new(&train_ds, &cfg.train)?;
                    model.train(&train_ds, &cfg.train, cfg.forward_gate, &mut Vec::new())?;
                    Box::new(move |t| Ok(vec![model.predict(t)?]))
                }
            };
            let train_sum = evaluate(&designs_for, &train_targets, &oracle, threshold_m)?;
            let test_sum = evaluate(&designs_for, &test_targets, &oracle, threshold_m)?;
            Ok((train_sum, test_sum))
        })();
        let time_s = started.elapsed().as_secs_f64();
        rows.push(match scored {
            Ok((train_sum, test_sum)) => ReportRow {
                kind,
                train_error: Some(train_sum.mean_error),
                test_error: Some(test_sum.mean_error),
                time_s: Some(time_s),
                variety_mean: Some(test_sum.variety_mean),
                variety_max: Some(test_sum.variety_max),
                status: "ok".into(),
            },
            Err(e) => ReportRow {
                kind,
                train_error: None,
                test_error: None,
                time_s: Some(time_s),
                variety_mean: None,
                variety_max: None,
                status: format!("failed: {e}"),
            },
        });
    }

    let t = &cfg.train;
    let metadata = vec![
        ("seed".into(), t.seed.to_string()),
        ("dataset_fingerprint".into(), format!("{:016x}", dataset.fingerprint())),
        ("pairs_train".into(), train_idx.len().to_string()),
        ("pairs_test".into(), test_idx.len().to_string()),
        ("epochs".into(), t.epochs.to_string()),
        ("learning_rate".into(), format!("{:e}", t.learning_rate)),
        ("batch_size".into(), t.batch_size.to_string()),
        ("hidden_widths".into(), t.hidden_widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("x")),
        ("mixture_count".into(), t.mixture_count.to_string()),
        ("activation".into(), t.activation.name().into()),
        ("sigma_mode".into(), t.sigma_mode.name().into()),
        ("variety_threshold_mm".into(), cfg.variety_threshold_mm.to_string()),
        ("forward_gate".into(), cfg.forward_gate.to_string()),
        ("hardware".into(), format!("{}-{} {} threads", std::env::consts::OS, std::env::consts::ARCH, rayon::current_num_threads())),
    ];
    Ok(Report { metadata, rows })
}
