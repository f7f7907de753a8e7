//! Mixture-density output head: maps the trunk's last activation to the
//! parameters of a Gaussian mixture over designs, evaluates the
//! conditional density, computes the negative-log-likelihood loss with
//! analytic gradients, and samples candidate structures.
//!
//! All density math runs in log space with log-sum-exp; gradients flow
//! through per-sample responsibilities (the posterior component
//! probabilities), the standard closed form for mixture likelihoods.

use crate::duct::Geometry;
use crate::error::{Error, Result};
use crate::net::{DenseLayer, Matrix};
use crate::rng::Rng;

pub const LN_SQRT_2PI: f64 = 0.9189385332046727;
/// σ pre-activations are clamped to this range before `exp`, bounding
/// σ to [e⁻¹⁰, e¹⁰] so no finite input can produce NaN or Inf.
pub const SIGMA_LOGIT_MIN: f64 = -10.0;
pub const SIGMA_LOGIT_MAX: f64 = 10.0;

/// Component spread parameterization: one σ per dimension (default) or
/// a single shared σ per component (ablation option).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    Diagonal,
    Isotropic,
}

impl SigmaMode {
    /// Number of σ pre-activations per component.
    pub fn cols_per_component(self, d: usize) -> usize {
        match self {
            SigmaMode::Diagonal => d,
            SigmaMode::Isotropic => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaMode::Diagonal => "diagonal",
            SigmaMode::Isotropic => "isotropic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "diagonal" => Some(SigmaMode::Diagonal),
            "isotropic" => Some(SigmaMode::Isotropic),
            _ => None,
        }
    }
}

/// Per-dimension affine map between physical radii (metres) and the
/// normalized design units the networks train in ([−1, 1] across the
/// allowed radius range).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignScaler {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DesignScaler {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Domain("scaler bounds must be non-empty and equal-length".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(h > l) || !l.is_finite() || !h.is_finite() {
                return Err(Error::Domain(format!("scaler needs lo < hi, got [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn from_geometry(geometry: &Geometry) -> Self {
        Self {
            lo: vec![geometry.radius_min; geometry.layer_count],
            hi: vec![geometry.radius_max; geometry.layer_count],
        }
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    pub fn to_design(&self, physical: &[f64]) -> Vec<f64> {
        assert_eq!(physical.len(), self.dims());
        physical
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&l, &h))| 2.0 * (x - l) / (h - l) - 1.0)
            .collect()
    }

    pub fn to_physical(&self, design: &[f64]) -> Vec<f64> {
        assert_eq!(design.len(), self.dims());
        design
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&u, (&l, &h))| l + (u + 1.0) * (h - l) / 2.0)
            .collect()
    }

    /// Inverse map with the result clamped to the physical bounds.
    pub fn to_physical_clamped(&self, design: &[f64]) -> Vec<f64> {
        self.to_physical(design)
            .into_iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (&l, &h))| x.clamp(l, h))
            .collect()
    }

    /// Design-unit point clamped to the image of the physical range.
    pub fn clamp_design(&self, design: &[f64]) -> Vec<f64> {
        design.iter().map(|&u| u.clamp(-1.0, 1.0)).collect()
    }
}

/// One conditional mixture: weights on the simplex, component means and
/// strictly positive spreads in design units (m × d each).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub mixing: Vec<f64>,
    pub means: Matrix,
    pub devs: Matrix,
}

impl MixtureParams {
    pub fn m(&self) -> usize {
        self.mixing.len()
    }

    pub fn d(&self) -> usize {
        self.means.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.means.rows() != m || self.devs.rows() != m || self.devs.cols() != self.means.cols()
        {
            return Err(Error::Domain(format!(
                "mixture shapes disagree: {} weights, means {}x{}, devs {}x{}",
                m,
                self.means.rows(),
                self.means.cols(),
                self.devs.rows(),
                self.devs.cols()
            )));
        }
        let sum: f64 = self.mixing.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || self.mixing.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
        {
            return Err(Error::Domain(format!("mixing weights sum to {sum}, not a simplex")));
        }
        if self.devs.data().iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain("component deviations must be positive and finite".into()));
        }
        if self.means.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("component means must be finite".into()));
        }
        Ok(())
    }

    /// Reorder components; the represented density is unchanged.
    pub fn permuted(&self, order: &[usize]) -> MixtureParams {
        assert_eq!(order.len(), self.m());
        let d = self.d();
        let mut mixing = Vec::with_capacity(self.m());
        let mut means = Matrix::zeros(self.m(), d);
        let mut devs = Matrix::zeros(self.m(), d);
        for (dst, &src) in order.iter().enumerate() {
            mixing.push(self.mixing[src]);
            means.row_mut(dst).copy_from_slice(self.means.row(src));
            devs.row_mut(dst).copy_from_slice(self.devs.row(src));
        }
        MixtureParams { mixing, means, devs }
    }
}

/// The three affine heads on top of the trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct MdnHead {
    pub pi: DenseLayer,
    pub mu: DenseLayer,
    pub sigma: DenseLayer,
    pub m: usize,
    pub d: usize,
    pub sigma_mode: SigmaMode,
}

impl MdnHead {
    /// He-uniform weights; μ biases drawn uniformly in (−0.9, 0.9) so
    /// the initial component means spread across the design range
    /// instead of stacking at the origin.
    pub fn new(trunk_width: usize, m: usize, d: usize, sigma_mode: SigmaMode, rng: &mut Rng) -> Self {
        assert!(m >= 1 && d >= 1);
        let pi = DenseLayer::he_uniform(trunk_width, m, rng);
        let mut mu = DenseLayer::he_uniform(trunk_width, m * d, rng);
        for b in &mut mu.b {
            *b = rng.range(-0.9, 0.9);
        }
        let sigma = DenseLayer::he_uniform(trunk_width, m * sigma_mode.cols_per_component(d), rng);
        Self {
            pi,
            mu,
            sigma,
            m,
            d,
            sigma_mode,
        }
    }

    /// Mixture parameters for one trunk output row: softmax weights
    /// (max-subtracted), affine means, `exp`-of-clamped-affine spreads.
    pub fn parameterize(&self, trunk_row: &[f64]) -> Result<MixtureParams> {
        if trunk_row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite trunk output".into()));
        }
        let x = Matrix::from_vec(1, trunk_row.len(), trunk_row.to_vec());
        let pi_logits = self.pi.forward(&x);
        let mu = self.mu.forward(&x);
        let sig_logits = self.sigma.forward(&x);
        let (m, d) = (self.m, self.d);

        let mixing = softmax(pi_logits.row(0));
        let means = Matrix::from_vec(m, d, mu.row(0).to_vec());
        let mut devs = Matrix::zeros(m, d);
        for j in 0..m {
            for k in 0..d {
                let logit = match self.sigma_mode {
                    SigmaMode::Diagonal => sig_logits.get(0, j * d + k),
                    SigmaMode::Isotropic => sig_logits.get(0, j),
                };
                devs.set(j, k, logit.clamp(SIGMA_LOGIT_MIN, SIGMA_LOGIT_MAX).exp());
            }
        }
        let params = MixtureParams { mixing, means, devs };
        params.validate()?;
        Ok(params)
    }
}

/// Numerically stable softmax (max subtraction); exactly invariant to
/// shifts that keep the subtraction representable.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Numerically stable log softmax (max subtraction).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + logits
            .iter()
            .map(|&l| (l - max).exp())
            .sum::<f64>()
            .ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Log of a diagonal Gaussian at `z`:
/// `Σ_d [−ln σ_d − ½ln 2π − (z_d−μ_d)²/(2σ_d²)]`.
pub fn component_log_density(z: &[f64], mean: &[f64], dev: &[f64]) -> Result<f64> {
    if z.len() != mean.len() || z.len() != dev.len() {
        return Err(Error::Domain(format!(
            "dimension mismatch: z {}, mean {}, dev {}",
            z.len(),
            mean.len(),
            dev.len()
        )));
    }
    let mut total = 0.0;
    for ((&zd, &md), &sd) in z.iter().zip(mean).zip(dev) {
        if !(sd > 0.0) {
            return Err(Error::Domain(format!("deviation must be positive, got {sd}")));
        }
        let delta = (zd - md) / sd;
        total += -sd.ln() - LN_SQRT_2PI - 0.5 * delta * delta;
    }
    Ok(total)
}

/// Log mixture density at `z`: log-sum-exp over components of
/// `ln πᵢ + component_log_density`.
pub fn log_density(params: &MixtureParams, z: &[f64]) -> Result<f64> {
    let mut joint = Vec::with_capacity(params.m());
    for i in 0..params.m() {
        let cld = component_log_density(z, params.means.row(i), params.devs.row(i))?;
        joint.push(params.mixing[i].ln() + cld);
    }
    Ok(log_sum_exp(&joint))
}

/// Posterior component probabilities at `z` (softmax of the joint log
/// terms); sum to 1.
pub fn responsibilities(params: &MixtureParams, z: &[f64]) -> Result<Vec<f64>> {
    let mut joint = Vec::with_capacity(params.m());
    for i in 0..params.m() {
        let cld = component_log_density(z, params.means.row(i), params.devs.row(i))?;
        joint.push(params.mixing[i].ln() + cld);
    }
    Ok(log_softmax(&joint).iter().map(|&l| l.exp()).collect())
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<f64>().ln()
}

/// Gradients of the mean negative log-likelihood for a batch, with
/// respect to the raw head outputs.
#[derive(Debug, Clone)]
pub struct NllGrads {
    /// n × m, w.r.t. the softmax pre-activations.
    pub pi_logits: Matrix,
    /// n × m·d, w.r.t. the means.
    pub mu: Matrix,
    /// n × (m·cols_per_component), w.r.t. the σ pre-activations; zero
    /// where the clamp saturated.
    pub sigma_logits: Matrix,
}

/// Mean negative log-likelihood of `labels` under the mixtures encoded
/// by the raw head outputs, plus its analytic gradients.
///
/// `mu` rows are component-major: `[μ₁₁…μ₁d, μ₂₁…μ₂d, …]`; σ columns
/// follow [`SigmaMode::cols_per_component`]. Labels are in design units.
pub fn nll_batch(
    pi_logits: &Matrix,
    mu: &Matrix,
    sigma_logits: &Matrix,
    labels: &Matrix,
    m: usize,
    d: usize,
    sigma_mode: SigmaMode,
) -> Result<(f64, NllGrads)> {
    let n = labels.rows();
    let sig_cols = sigma_mode.cols_per_component(d);
    assert_eq!(labels.cols(), d);
    assert_eq!(pi_logits.rows(), n);
    assert_eq!(pi_logits.cols(), m);
    assert_eq!(mu.rows(), n);
    assert_eq!(mu.cols(), m * d);
    assert_eq!(sigma_logits.rows(), n);
    assert_eq!(sigma_logits.cols(), m * sig_cols);

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut g_pi = Matrix::zeros(n, m);
    let mut g_mu = Matrix::zeros(n, m * d);
    let mut g_sig = Matrix::zeros(n, m * sig_cols);

    let mut joint = vec![0.0; m];
    for i in 0..n {
        let lp = log_softmax(pi_logits.row(i));
        let y = labels.row(i);
        for j in 0..m {
            let mut cld = 0.0;
            for k in 0..d {
                let s_logit = match sigma_mode {
                    SigmaMode::Diagonal => sigma_logits.get(i, j * d + k),
                    SigmaMode::Isotropic => sigma_logits.get(i, j),
                };
                let s_clamped = s_logit.clamp(SIGMA_LOGIT_MIN, SIGMA_LOGIT_MAX);
                let sigma = s_clamped.exp();
                let delta = (y[k] - mu.get(i, j * d + k)) / sigma;
                cld += -s_clamped - LN_SQRT_2PI - 0.5 * delta * delta;
            }
            joint[j] = lp[j] + cld;
        }
        let ll = log_sum_exp(&joint);
        if !ll.is_finite() {
            return Err(Error::Training {
                context: "mixture likelihood".into(),
                message: format!("non-finite log-likelihood at batch sample {i}"),
            });
        }
        loss -= ll * inv_n;

        for j in 0..m {
            let gamma = (joint[j] - ll).exp();
            g_pi.set(i, j, (lp[j].exp() - gamma) * inv_n);
            let mut iso_term = 0.0;
            for k in 0..d {
                let s_logit = match sigma_mode {
                    SigmaMode::Diagonal => sigma_logits.get(i, j * d + k),
                    SigmaMode::Isotropic => sigma_logits.get(i, j),
                };
                let s_clamped = s_logit.clamp(SIGMA_LOGIT_MIN, SIGMA_LOGIT_MAX);
                let sigma = s_clamped.exp();
                let delta = (y[k] - mu.get(i, j * d + k)) / sigma;
                g_mu.set(i, j * d + k, -gamma * delta / sigma * inv_n);
                let d_logit = delta * delta - 1.0;
                match sigma_mode {
                    SigmaMode::Diagonal => {
                        // Clamped logits get zero gradient.
                        let g = if s_logit == s_clamped { -gamma * d_logit * inv_n } else { 0.0 };
                        g_sig.set(i, j * d + k, g);
                    }
                    SigmaMode::Isotropic => iso_term += d_logit,
                }
            }
            if sigma_mode == SigmaMode::Isotropic {
                let s_logit = sigma_logits.get(i, j);
                let saturated = s_logit != s_logit.clamp(SIGMA_LOGIT_MIN, SIGMA_LOGIT_MAX);
                let g = if saturated { 0.0 } else { -gamma * iso_term * inv_n };
                g_sig.set(i, j, g);
            }
        }
    }
    Ok((
        loss,
        NllGrads {
            pi_logits: g_pi,
            mu: g_mu,
            sigma_logits: g_sig,
        },
    ))
}

/// Draw `count` designs: component index from the mixing weights, then
/// per-dimension Gaussian draws, mapped to physical radii and clamped
/// to the allowed range. Deterministic given the seed.
pub fn sample(
    params: &MixtureParams,
    count: usize,
    seed: u64,
    scaler: &DesignScaler,
) -> Vec<Vec<f64>> {
    assert!(count >= 1);
    assert_eq!(params.d(), scaler.dims());
    let mut rng = Rng::seeded(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut comp = params.m() - 1;
        for (j, &p) in params.mixing.iter().enumerate() {
            acc += p;
            if u < acc {
                comp = j;
                break;
            }
        }
        let design: Vec<f64> = (0..params.d())
            .map(|k| params.means.get(comp, k) + params.devs.get(comp, k) * rng.normal())
            .collect();
        out.push(scaler.to_physical_clamped(&design));
    }
    out
}

/// Mixture density at a physical structure; higher means the model is
/// more confident the structure solves the target.
pub fn design_confidence(
    params: &MixtureParams,
    physical_radii: &[f64],
    scaler: &DesignScaler,
) -> Result<f64> {
    let z = scaler.to_design(physical_radii);
    Ok(log_density(params, &z)?.exp())
}
