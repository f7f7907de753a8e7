//! Run configuration: flat `key = value` text with dotted sections,
//! every key carrying a documented default.

use std::fs;
use std::path::Path;

use crate::duct::{FreqGrid, Geometry, Medium};
use crate::error::{Error, Result};
use crate::mdn::SigmaMode;
use crate::models::{ModelKind, TrainConfig};
use crate::modes::SeekerConfig;
use crate::net::Activation;
use crate::target::PEAK_WIDTH_DEFAULT;

/// Every tunable of the pipeline with its default. Files and `--set`
/// flags override individual keys; `to_text` materializes them all.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub medium: Medium,
    pub grid_start: f64,
    pub grid_step: f64,
    pub grid_count: usize,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub seeker: SeekerConfig,
    /// Full width of the `peak:` target template, in Hz.
    pub peak_width: f64,
    /// Mixture samples drawn when fitting the density-map plane.
    pub pca_samples: usize,
    pub pca_resolution: usize,
    pub pca_seed: u64,
    /// Fraction of pairs held out as the comparison test set.
    pub holdout_fraction: f64,
    /// Design distinctness threshold in millimetres (max-norm).
    pub variety_threshold_mm: f64,
    /// Stage-1 accuracy gate for the tandem model.
    pub forward_gate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: Geometry::default(),
            medium: Medium::default(),
            grid_start: 20.0,
            grid_step: 20.0,
            grid_count: 250,
            model: ModelKind::Pdn,
            train: TrainConfig::default(),
            seeker: SeekerConfig::default(),
            peak_width: PEAK_WIDTH_DEFAULT,
            pca_samples: 10_000,
            pca_resolution: 64,
            pca_seed: 0,
            holdout_fraction: 0.1,
            variety_threshold_mm: 2.0,
            forward_gate: crate::baselines::FORWARD_GATE_DEFAULT,
        }
    }
}

impl RunConfig {
    /// Defaults overridden by the keys in `path`.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::default();
        config.merge_text(&text, &path.display().to_string())?;
        Ok(config)
    }

    /// Apply `key = value` lines on top of the current values.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Usage(format!("{origin}, line {}: expected key = value", idx + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Usage(format!("{origin}, line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    /// Apply repeated `--set key=value` flags.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        for s in sets {
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set wants key=value, got {s:?}")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one dotted key. Unknown keys and unparsable values are
    /// usage errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "geometry.tube_radius" => self.geometry.tube_radius = num(key, value)?,
            "geometry.layer_length" => self.geometry.layer_length = num(key, value)?,
            "geometry.layer_count" => self.geometry.layer_count = num(key, value)?,
            "geometry.radius_min" => self.geometry.radius_min = num(key, value)?,
            "geometry.radius_max" => self.geometry.radius_max = num(key, value)?,
            "medium.sound_speed" => self.medium.sound_speed = num(key, value)?,
            "medium.density" => self.medium.density = num(key, value)?,
            "grid.start" => self.grid_start = num(key, value)?,
            "grid.step" => self.grid_step = num(key, value)?,
            "grid.count" => self.grid_count = num(key, value)?,
            "train.model" => {
                self.model = ModelKind::from_name(value)
                    .ok_or_else(|| bad(key, value, "expected pdn, ann, or tnn"))?
            }
            "train.learning_rate" => self.train.learning_rate = num(key, value)?,
            "train.batch_size" => self.train.batch_size = num(key, value)?,
            "train.epochs" => self.train.epochs = num(key, value)?,
            "train.weight_decay" => self.train.weight_decay = num(key, value)?,
            "train.seed" => self.train.seed = num(key, value)?,
            "train.hidden_widths" => {
                self.train.hidden_widths = value
                    .split('x')
                    .map(|w| num(key, w.trim()))
                    .collect::<Result<Vec<usize>>>()?;
                if self.train.hidden_widths.is_empty() {
                    return Err(bad(key, value, "expected widths like 400x800"));
                }
            }
            "train.mixture_count" => self.train.mixture_count = num(key, value)?,
            "train.activation" => {
                self.train.activation = Activation::from_name(value)
                    .ok_or_else(|| bad(key, value, "expected relu or relu6"))?
            }
            "train.sigma_mode" => {
                self.train.sigma_mode = SigmaMode::from_name(value)
                    .ok_or_else(|| bad(key, value, "expected diagonal or isotropic"))?
            }
            "seeker.max_iterations" => self.seeker.max_iterations = num(key, value)?,
            "seeker.tolerance" => self.seeker.tolerance = num(key, value)?,
            "seeker.merge_radius" => self.seeker.merge_radius = num(key, value)?,
            "seeker.density_floor" => self.seeker.density_floor = num(key, value)?,
            "seeker.max_modes" => self.seeker.max_modes = num(key, value)?,
            "target.peak_width" => self.peak_width = num(key, value)?,
            "design.pca_samples" => self.pca_samples = num(key, value)?,
            "design.pca_resolution" => self.pca_resolution = num(key, value)?,
            "design.pca_seed" => self.pca_seed = num(key, value)?,
            "compare.holdout_fraction" => self.holdout_fraction = num(key, value)?,
            "compare.variety_threshold_mm" => self.variety_threshold_mm = num(key, value)?,
            "compare.forward_gate" => self.forward_gate = num(key, value)?,
            _ => return Err(Error::Usage(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// The frequency grid described by the `grid.*` keys.
    pub fn freq_grid(&self) -> Result<FreqGrid> {
        FreqGrid::uniform(self.grid_start, self.grid_step, self.grid_count)
    }

    /// All keys materialized with their current values, each preceded
    /// by a one-line description. Parses back to an equal config.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let t = &self.train;
        let s = &self.seeker;
        let widths: Vec<String> = t.hidden_widths.iter().map(|w| w.to_string()).collect();
        let lines: Vec<(&str, &str, String)> = vec![
            ("geometry.tube_radius", "Duct bore radius in metres.", g.tube_radius.to_string()),
            ("geometry.layer_length", "Axial length of each layer in metres.", g.layer_length.to_string()),
            ("geometry.layer_count", "Number of stacked layers.", g.layer_count.to_string()),
            ("geometry.radius_min", "Smallest admissible layer radius in metres.", g.radius_min.to_string()),
            ("geometry.radius_max", "Largest admissible layer radius in metres.", g.radius_max.to_string()),
            ("medium.sound_speed", "Speed of sound in m/s.", self.medium.sound_speed.to_string()),
            ("medium.density", "Fluid density in kg/m3.", self.medium.density.to_string()),
            ("grid.start", "First frequency sample in Hz.", self.grid_start.to_string()),
            ("grid.step", "Frequency spacing in Hz.", self.grid_step.to_string()),
            ("grid.count", "Number of frequency samples.", self.grid_count.to_string()),
            ("train.model", "Model kind: pdn, ann, or tnn.", self.model.name().to_string()),
            ("train.learning_rate", "Adam learning rate.", t.learning_rate.to_string()),
            ("train.batch_size", "Mini-batch size (at least 2).", t.batch_size.to_string()),
            ("train.epochs", "Training epochs; 0 writes initial weights.", t.epochs.to_string()),
            ("train.weight_decay", "L2 penalty folded into the gradients.", t.weight_decay.to_string()),
            ("train.seed", "Seed for weight init and batch shuffling.", t.seed.to_string()),
            ("train.hidden_widths", "Hidden layer widths, x-separated.", widths.join("x")),
            ("train.mixture_count", "Gaussian components of the density head.", t.mixture_count.to_string()),
            ("train.activation", "Hidden activation: relu or relu6.", t.activation.name().to_string()),
            ("train.sigma_mode", "Component spread: diagonal or isotropic.", t.sigma_mode.name().to_string()),
            ("seeker.max_iterations", "Mean-shift iteration cap per start point.", s.max_iterations.to_string()),
            ("seeker.tolerance", "Mean-shift stop threshold in design units.", s.tolerance.to_string()),
            ("seeker.merge_radius", "Distance under which converged points merge.", s.merge_radius.to_string()),
            ("seeker.density_floor", "Drop modes below this fraction of the top density.", s.density_floor.to_string()),
            ("seeker.max_modes", "Most modes reported per target.", s.max_modes.to_string()),
            ("target.peak_width", "Full width of the peak target template in Hz.", self.peak_width.to_string()),
            ("design.pca_samples", "Mixture samples used to fit the density-map plane.", self.pca_samples.to_string()),
            ("design.pca_resolution", "Density-map grid resolution per axis.", self.pca_resolution.to_string()),
            ("design.pca_seed", "Seed for density-map sampling.", self.pca_seed.to_string()),
            ("compare.holdout_fraction", "Fraction of pairs held out for testing.", self.holdout_fraction.to_string()),
            ("compare.variety_threshold_mm", "Design distinctness threshold in millimetres.", self.variety_threshold_mm.to_string()),
            ("compare.forward_gate", "Tandem stage-1 holdout error gate.", self.forward_gate.to_string()),
        ];
        let mut out = String::from("# Effective configuration, all keys materialized.\n");
        for (key, doc, value) in lines {
            out.push_str(&format!("\n# {doc}\n{key} = {value}\n"));
        }
        out
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Usage(format!("config key {key}: bad value {value:?}: {e}")))
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Usage(format!("config key {key}: bad value {value:?}: {want}"))
}
