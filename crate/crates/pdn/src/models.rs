//! The density network model: spectrum-conditioned mixture over layer
//! radii, its training loop, and the versioned weights file.
//!
//! Training is deterministic for a fixed seed: weights come from stream
//! 0 of the seeded generator and the shuffle of epoch `e` from stream
//! `e + 1`, so reruns reproduce the trajectory bit for bit.

use std::fs;
use std::path::Path;

use crate::bytes::Reader;
use crate::dataset::Dataset;
use crate::duct::{FreqGrid, Geometry, Medium, Spectrum};
use crate::error::{Error, Result};
use crate::mdn::{nll_batch, DesignScaler, MdnHead, MixtureParams, SigmaMode};
use crate::modes::{find_modes, Mode, SeekerConfig};
use crate::net::{Activation, Adam, DenseLayer, Matrix, RunMode, Trunk};
use crate::rng::Rng;

pub(crate) const WEIGHTS_MAGIC: &[u8; 4] = b"PDNW";
pub(crate) const WEIGHTS_VERSION: u32 = 1;

/// Weights-file model tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Pdn,
    Ann,
    Tnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pdn => "pdn",
            ModelKind::Ann => "ann",
            ModelKind::Tnn => "tnn",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "pdn" => Some(ModelKind::Pdn),
            "ann" => Some(ModelKind::Ann),
            "tnn" => Some(ModelKind::Tnn),
            _ => None,
        }
    }

    fn tag(self) -> u8 {
        match self {
            ModelKind::Pdn => 0,
            ModelKind::Ann => 1,
            ModelKind::Tnn => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::Pdn),
            1 => Some(ModelKind::Ann),
            2 => Some(ModelKind::Tnn),
            _ => None,
        }
    }
}

/// Hyperparameters shared by every model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub hidden_widths: Vec<usize>,
    /// Mixture components of the density head (density model only).
    pub mixture_count: usize,
    pub activation: Activation,
    pub sigma_mode: SigmaMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 256,
            epochs: 1000,
            weight_decay: 0.0,
            seed: 0,
            hidden_widths: vec![400, 800, 1600, 3200],
            mixture_count: 50,
            activation: Activation::Relu,
            sigma_mode: SigmaMode::Diagonal,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size < 2 {
            return Err(Error::Domain(format!(
                "batch size must be at least 2 (batch statistics need 2 rows), got {}",
                self.batch_size
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Domain(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Domain("hidden widths must be a non-empty list of positive integers".into()));
        }
        if self.mixture_count == 0 {
            return Err(Error::Domain("mixture count must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// Write a training log as `epoch,loss` CSV.
pub fn emit_loss_log(log: &[EpochLoss], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for rec in log {
        out.push_str(&format!("{},{:.12e}\n", rec.epoch, rec.loss));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Shuffled batch index lists for one epoch. Trailing batches smaller
/// than `batch_size` are kept, except a trailing singleton, which is
/// folded into the previous batch because batch statistics need at
/// least 2 rows.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if n < 2 {
        return Err(Error::Training {
            context: "batching".into(),
            message: format!("training needs at least 2 samples, got {n}"),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::substream(seed, epoch as u64 + 1).shuffle(&mut order);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if batches.len() > 1 && batches.last().map(Vec::len) == Some(1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    Ok(batches)
}

/// Spectrum-to-structure density model: shared trunk plus the mixture
/// head, with the scaler and physics context it was trained under.
#[derive(Debug, Clone)]
pub struct PdnModel {
    pub trunk: Trunk,
    pub head: MdnHead,
    pub scaler: DesignScaler,
    pub geometry: Geometry,
    pub medium: Medium,
    pub grid: FreqGrid,
}

impl PdnModel {
    /// Fresh model with seeded initialization, shaped for `dataset`.
    pub fn new(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::substream(config.seed, 0);
        let d = dataset.geometry.layer_count;
        let trunk = Trunk::new(dataset.grid.len(), &config.hidden_widths, config.activation, &mut rng);
        let head = MdnHead::new(trunk.output_dim(), config.mixture_count, d, config.sigma_mode, &mut rng);
        Ok(Self {
            trunk,
            head,
            scaler: DesignScaler::from_geometry(&dataset.geometry),
            geometry: dataset.geometry,
            medium: dataset.medium,
            grid: dataset.grid.clone(),
        })
    }

    /// Minimize the mean negative log-likelihood of the dataset's
    /// structures given their spectra. Appends one record per completed
    /// epoch to `log` (epoch loss = sample-weighted mean over batches).
    ///
    /// On a training failure (non-finite likelihood or gradient) the
    /// model is rolled back to the end of the last completed epoch and
    /// the error is returned, so the caller can checkpoint the last
    /// good weights.
    pub fn train(&mut self, dataset: &Dataset, config: &TrainConfig, log: &mut Vec<EpochLoss>) -> Result<()> {
        config.validate()?;
        let n = dataset.len();
        let inputs = dataset.spectra_matrix();
        let radii = dataset.radii_matrix();
        let mut labels = Matrix::zeros(n, radii.cols());
        for i in 0..n {
            labels.row_mut(i).copy_from_slice(&self.scaler.to_design(radii.row(i)));
        }
        let mut adam = Adam::new(config.learning_rate, config.weight_decay);
        let mut checkpoint = (self.trunk.state(), self.head_state());

        for epoch in 0..config.epochs {
            let result = self.train_epoch(&inputs, &labels, config, epoch, &mut adam);
            match result {
                Ok(loss) => {
                    log.push(EpochLoss { epoch, loss });
                    checkpoint = (self.trunk.state(), self.head_state());
                }
                Err(e) => {
                    self.trunk.set_state(&checkpoint.0);
                    self.set_head_state(&checkpoint.1);
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
        labels: &Matrix,
        config: &TrainConfig,
        epoch: usize,
        adam: &mut Adam,
    ) -> Result<f64> {
        let n = inputs.rows();
        let mut weighted = 0.0;
        for batch in epoch_batches(n, config.batch_size, config.seed, epoch)? {
            let x = inputs.select_rows(&batch);
            let y = labels.select_rows(&batch);
            let trace = self.trunk.forward(&x, RunMode::Train);
            self.trunk.commit_running_stats(&trace);
            let z = trace.output();

            let pi_logits = self.head.pi.forward(z);
            let mu = self.head.mu.forward(z);
            let sigma_logits = self.head.sigma.forward(z);
            let (loss, grads) = nll_batch(
                &pi_logits,
                &mu,
                &sigma_logits,
                &y,
                self.head.m,
                self.head.d,
                self.head.sigma_mode,
            )?;
            weighted += loss * batch.len() as f64;

            let (pi_grads, dz_pi) = self.head.pi.backward(z, &grads.pi_logits);
            let (mu_grads, dz_mu) = self.head.mu.backward(z, &grads.mu);
            let (sigma_grads, dz_sigma) = self.head.sigma.backward(z, &grads.sigma_logits);
            let mut dz = dz_pi;
            dz.add_assign(&dz_mu);
            dz.add_assign(&dz_sigma);
            let (trunk_grads, _) = self.trunk.backward(&trace, &dz);

            let mut trunk_params = self.trunk.trainable();
            let trunk_flat = trunk_grads.flatten();
            let mut pi_params = self.head.pi.trainable();
            let mut mu_params = self.head.mu.trainable();
            let mut sigma_params = self.head.sigma.trainable();
            adam.step(&mut [
                (&mut trunk_params, &trunk_flat),
                (&mut pi_params, &pi_grads.flatten()),
                (&mut mu_params, &mu_grads.flatten()),
                (&mut sigma_params, &sigma_grads.flatten()),
            ])?;
            self.trunk.set_trainable(&trunk_params);
            self.head.pi.set_trainable(&pi_params);
            self.head.mu.set_trainable(&mu_params);
            self.head.sigma.set_trainable(&sigma_params);
        }
        Ok(weighted / n as f64)
    }

    /// Conditional mixture for one target spectrum (inference mode).
    pub fn mixture_for(&self, target: &Spectrum) -> Result<MixtureParams> {
        if target.len() != self.grid.len() {
            return Err(Error::Incompatible(format!(
                "target has {} points but the model was trained on a {}-point grid",
                target.len(),
                self.grid.len()
            )));
        }
        let x = Matrix::from_vec(1, self.grid.len(), target.values().to_vec());
        let z = self.trunk.infer(&x);
        self.head.parameterize(z.row(0))
    }

    /// Ranked design modes for a target spectrum: conditional mixture,
    /// then mode seeking over its density.
    pub fn design(&self, target: &Spectrum, seeker: &SeekerConfig) -> Result<Vec<Mode>> {
        let params = self.mixture_for(target)?;
        find_modes(&params, &self.scaler, seeker)
    }

    fn head_state(&self) -> Vec<f64> {
        let mut out = self.head.pi.trainable();
        out.extend(self.head.mu.trainable());
        out.extend(self.head.sigma.trainable());
        out
    }

    fn set_head_state(&mut self, flat: &[f64]) {
        let np = self.head.pi.trainable().len();
        let nm = self.head.mu.trainable().len();
        self.head.pi.set_trainable(&flat[..np]);
        self.head.mu.set_trainable(&flat[np..np + nm]);
        self.head.sigma.set_trainable(&flat[np + nm..]);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        write_envelope(&mut out, ModelKind::Pdn, &self.geometry, &self.medium, &self.grid);
        write_trunk(&mut out, &self.trunk);
        out.extend_from_slice(&(self.head.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.head.d as u32).to_le_bytes());
        out.push(match self.head.sigma_mode {
            SigmaMode::Diagonal => 0,
            SigmaMode::Isotropic => 1,
        });
        write_dense(&mut out, &self.head.pi);
        write_dense(&mut out, &self.head.mu);
        write_dense(&mut out, &self.head.sigma);
        write_scaler(&mut out, &self.scaler);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader::new(&bytes, path);
        let (kind, geometry, medium, grid) = read_envelope(&mut r)?;
        if kind != ModelKind::Pdn {
            return Err(Error::Incompatible(format!(
                "{} holds a {} model, expected a pdn model",
                path.display(),
                kind.name()
            )));
        }
        let trunk = read_trunk(&mut r)?;
        let m = r.u32()? as usize;
        let d = r.u32()? as usize;
        let mode_offset = r.pos;
        let sigma_mode = match r.u8()? {
            0 => SigmaMode::Diagonal,
            1 => SigmaMode::Isotropic,
            other => return Err(r.bad(mode_offset, format!("unknown sigma mode tag {other}"))),
        };
        let pi = read_dense(&mut r)?;
        let mu = read_dense(&mut r)?;
        let sigma = read_dense(&mut r)?;
        let head = MdnHead { pi, mu, sigma, m, d, sigma_mode };
        let scaler = read_scaler(&mut r, path)?;
        r.expect_end()?;
        check_head_shapes(&trunk, &head, path)?;
        if scaler.dims() != d || geometry.layer_count != d {
            return Err(Error::format(
                path,
                0,
                format!("head dimension {d} disagrees with scaler/geometry"),
            ));
        }
        Ok(Self { trunk, head, scaler, geometry, medium, grid })
    }
}

fn check_head_shapes(trunk: &Trunk, head: &MdnHead, path: &Path) -> Result<()> {
    let w = trunk.output_dim();
    let sig_cols = head.sigma_mode.cols_per_component(head.d);
    let ok = head.pi.input_dim() == w
        && head.pi.output_dim() == head.m
        && head.mu.input_dim() == w
        && head.mu.output_dim() == head.m * head.d
        && head.sigma.input_dim() == w
        && head.sigma.output_dim() == head.m * sig_cols;
    if !ok {
        return Err(Error::format(path, 0, "head shapes do not chain with the trunk"));
    }
    Ok(())
}

pub(crate) fn write_envelope(out: &mut Vec<u8>, kind: ModelKind, geometry: &Geometry, medium: &Medium, grid: &FreqGrid) {
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.push(kind.tag());
    out.extend_from_slice(&geometry.tube_radius.to_le_bytes());
    out.extend_from_slice(&geometry.layer_length.to_le_bytes());
    out.extend_from_slice(&(geometry.layer_count as u32).to_le_bytes());
    out.extend_from_slice(&geometry.radius_min.to_le_bytes());
    out.extend_from_slice(&geometry.radius_max.to_le_bytes());
    out.extend_from_slice(&medium.sound_speed.to_le_bytes());
    out.extend_from_slice(&medium.density.to_le_bytes());
    out.extend_from_slice(&(grid.len() as u32).to_le_bytes());
    for &f in grid.frequencies() {
        out.extend_from_slice(&f.to_le_bytes());
    }
}

pub(crate) fn read_envelope(r: &mut Reader) -> Result<(ModelKind, Geometry, Medium, FreqGrid)> {
    let magic = r.take(4)?;
    if magic != WEIGHTS_MAGIC {
        return Err(r.bad(0, format!("bad magic {magic:?}, expected \"PDNW\"")));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(r.bad(
            4,
            format!("unsupported weights format version {version}; this build reads version {WEIGHTS_VERSION}"),
        ));
    }
    let kind_offset = r.pos;
    let kind = ModelKind::from_tag(r.u8()?)
        .ok_or_else(|| r.bad(kind_offset, "unknown model kind tag".into()))?;
    let tube_radius = r.f64()?;
    let layer_length = r.f64()?;
    let layer_count = r.u32()? as usize;
    let geometry = Geometry {
        tube_radius,
        layer_length,
        layer_count,
        radius_min: r.f64()?,
        radius_max: r.f64()?,
    };
    let medium = Medium {
        sound_speed: r.f64()?,
        density: r.f64()?,
    };
    let grid_len = r.u32()? as usize;
    let grid_offset = r.pos;
    let freqs = r.f64_vec(grid_len)?;
    geometry.validate().map_err(|e| r.bad(9, format!("invalid geometry: {e}")))?;
    medium.validate().map_err(|e| r.bad(41, format!("invalid medium: {e}")))?;
    let grid = FreqGrid::new(freqs).map_err(|e| r.bad(grid_offset, format!("invalid grid: {e}")))?;
    Ok((kind, geometry, medium, grid))
}

pub(crate) fn write_trunk(out: &mut Vec<u8>, trunk: &Trunk) {
    out.extend_from_slice(&(trunk.input_dim() as u32).to_le_bytes());
    let widths = trunk.widths();
    out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
    for w in &widths {
        out.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    out.push(match trunk.activation() {
        Activation::Relu => 0,
        Activation::Relu6 => 1,
    });
    let state = trunk.state();
    out.extend_from_slice(&(state.len() as u64).to_le_bytes());
    for v in state {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_trunk(r: &mut Reader) -> Result<Trunk> {
    let input_dim = r.u32()? as usize;
    let layer_count = r.u32()? as usize;
    if input_dim == 0 || layer_count == 0 || layer_count > 64 {
        return Err(r.bad(r.pos, format!("implausible trunk shape {input_dim} x {layer_count} layers")));
    }
    let mut widths = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let w = r.u32()? as usize;
        if w == 0 {
            return Err(r.bad(r.pos, "zero trunk width".into()));
        }
        widths.push(w);
    }
    let act_offset = r.pos;
    let act = match r.u8()? {
        0 => Activation::Relu,
        1 => Activation::Relu6,
        other => return Err(r.bad(act_offset, format!("unknown activation tag {other}"))),
    };
    let len_offset = r.pos;
    let state_len = r.u64()? as usize;
    let mut trunk = Trunk::new(input_dim, &widths, act, &mut Rng::seeded(0));
    if state_len != trunk.state_len() {
        return Err(r.bad(
            len_offset,
            format!("trunk state holds {state_len} values, shape needs {}", trunk.state_len()),
        ));
    }
    let state = r.f64_vec(state_len)?;
    trunk.set_state(&state);
    Ok(trunk)
}

pub(crate) fn write_dense(out: &mut Vec<u8>, layer: &DenseLayer) {
    out.extend_from_slice(&(layer.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(layer.output_dim() as u32).to_le_bytes());
    for v in layer.trainable() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_dense(r: &mut Reader) -> Result<DenseLayer> {
    let input_dim = r.u32()? as usize;
    let output_dim = r.u32()? as usize;
    if input_dim == 0 || output_dim == 0 {
        return Err(r.bad(r.pos, "zero dense layer dimension".into()));
    }
    let flat = r.f64_vec(input_dim * output_dim + output_dim)?;
    let mut layer = DenseLayer::he_uniform(input_dim, output_dim, &mut Rng::seeded(0));
    layer.set_trainable(&flat);
    Ok(layer)
}

pub(crate) fn write_scaler(out: &mut Vec<u8>, scaler: &DesignScaler) {
    let (lo, hi) = scaler.bounds();
    out.extend_from_slice(&(lo.len() as u32).to_le_bytes());
    for v in lo.iter().chain(hi) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_scaler(r: &mut Reader, path: &Path) -> Result<DesignScaler> {
    let d = r.u32()? as usize;
    let lo = r.f64_vec(d)?;
    let hi = r.f64_vec(d)?;
    DesignScaler::new(lo, hi).map_err(|e| Error::format(path, 0, format!("invalid scaler: {e}")))
}

/// Model kind recorded in a weights file, without loading the weights.
pub fn peek_kind(path: &Path) -> Result<ModelKind> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes, path);
    let (kind, ..) = read_envelope(&mut r)?;
    Ok(kind)
}

/// The kind, geometry, medium, and grid a weights file was built for,
/// without loading the parameters.
pub fn weights_context(path: &Path) -> Result<(ModelKind, Geometry, Medium, FreqGrid)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes, path);
    read_envelope(&mut r)
}
