//! Plane-wave transfer-matrix model of a layered duct metastructure.
//!
//! The structure is a stack of coaxial cylindrical air channels inside a
//! rigid reference tube. Each layer of radius `r` and length `L` maps to
//! the lossless two-port
//!
//! ```text
//! [ cos kL        i Zc sin kL ]        k  = 2πf/c
//! [ i sin kL / Zc  cos kL     ]        Zc = ρc / (π r²)
//! ```
//!
//! relating (pressure, volume velocity) at the input to the output.
//! Layer matrices cascade by multiplication, and with anechoic
//! (characteristic-impedance) terminations on both sides the power
//! transmission is `τ = |2 / (a + b/Z₀ + c·Z₀ + d)|²` with `Z₀` the
//! reference-tube impedance. The model is lossless, so `|t|² + |r|² = 1`
//! holds exactly and doubles as a test oracle.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Acoustic medium, default air at 20 °C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    /// Speed of sound in m/s.
    pub sound_speed: f64,
    /// Density in kg/m³.
    pub density: f64,
}

impl Default for Medium {
    fn default() -> Self {
        Self {
            sound_speed: 343.0,
            density: 1.21,
        }
    }
}

impl Medium {
    pub fn validate(&self) -> Result<()> {
        if !(self.sound_speed > 0.0 && self.sound_speed.is_finite()) {
            return Err(Error::Domain(format!(
                "sound speed must be positive, got {}",
                self.sound_speed
            )));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::Domain(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        Ok(())
    }
}

/// Reference-tube and layer geometry. Lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub tube_radius: f64,
    /// Axial length of each cylindrical layer.
    pub layer_length: f64,
    pub layer_count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            tube_radius: 0.0145,
            layer_length: 0.020,
            layer_count: 5,
            radius_min: 0.0018125,
            radius_max: 0.0145,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_min > 0.0
            && self.radius_min <= self.radius_max
            && self.radius_max <= self.tube_radius)
        {
            return Err(Error::Domain(format!(
                "need 0 < radius_min <= radius_max <= tube_radius, got {} / {} / {}",
                self.radius_min, self.radius_max, self.tube_radius
            )));
        }
        if !(self.layer_length > 0.0 && self.layer_length.is_finite()) {
            return Err(Error::Domain(format!(
                "layer_length must be positive, got {}",
                self.layer_length
            )));
        }
        if self.layer_count == 0 {
            return Err(Error::Domain("layer_count must be >= 1".into()));
        }
        Ok(())
    }

    /// First higher-order mode cutoff of the reference tube,
    /// `1.8412·c / (2π·tube_radius)`. The plane-wave model is only valid
    /// below this frequency.
    pub fn cutoff_hz(&self, medium: &Medium) -> f64 {
        1.8412 * medium.sound_speed / (2.0 * PI * self.tube_radius)
    }
}

/// Layer radii of one metastructure, in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    radii: Vec<f64>,
}

impl Structure {
    pub fn new(radii: Vec<f64>, geometry: &Geometry) -> Result<Self> {
        if radii.len() != geometry.layer_count {
            return Err(Error::Domain(format!(
                "structure has {} layers, geometry expects {}",
                radii.len(),
                geometry.layer_count
            )));
        }
        for (i, &r) in radii.iter().enumerate() {
            if !(r >= geometry.radius_min && r <= geometry.radius_max) {
                return Err(Error::Domain(format!(
                    "layer {} radius {} m outside [{}, {}]",
                    i + 1,
                    r,
                    geometry.radius_min,
                    geometry.radius_max
                )));
            }
        }
        Ok(Self { radii })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Layer order flipped; shares the transmission spectrum of the
    /// original by reciprocity.
    pub fn reversed(&self) -> Structure {
        let mut radii = self.radii.clone();
        radii.reverse();
        Structure { radii }
    }
}

/// Ascending frequency samples in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid {
    frequencies: Vec<f64>,
}

impl FreqGrid {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Domain("frequency grid is empty".into()));
        }
        for pair in frequencies.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::Domain(format!(
                    "frequencies must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if !(frequencies[0] > 0.0) {
            return Err(Error::Domain(format!(
                "frequencies must be positive, got {}",
                frequencies[0]
            )));
        }
        Ok(Self { frequencies })
    }

    /// `start, start+step, …` with `count` points.
    pub fn uniform(start: f64, step: f64, count: usize) -> Result<Self> {
        if step <= 0.0 {
            return Err(Error::Domain(format!("grid step must be positive, got {step}")));
        }
        Self::new((0..count).map(|i| start + step * i as f64).collect())
    }

    /// The 20 Hz .. 5 kHz grid with 20 Hz spacing (250 points).
    pub fn standard() -> Self {
        Self::uniform(20.0, 20.0, 250).expect("valid constants")
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// First grid frequency above the plane-wave cutoff, if any. Callers
    /// warn on `Some`; the transfer-matrix math itself stays defined.
    pub fn above_cutoff(&self, geometry: &Geometry, medium: &Medium) -> Option<f64> {
        let cutoff = geometry.cutoff_hz(medium);
        self.frequencies.iter().copied().find(|&f| f > cutoff)
    }
}

/// Power-transmission values on a [`FreqGrid`], unitless in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    // Numerical slack for round-off above exact unity.
    const UPPER: f64 = 1.0 + 1e-9;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0 && v <= Self::UPPER) {
                return Err(Error::Domain(format!(
                    "transmittance[{i}] = {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// 2×2 complex acoustic transfer matrix.
#[derive(Debug, Clone, Copy)]
pub struct TwoPort {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl TwoPort {
    pub fn identity() -> Self {
        Self {
            a: Complex64::new(1.0, 0.0),
            b: Complex64::new(0.0, 0.0),
            c: Complex64::new(0.0, 0.0),
            d: Complex64::new(1.0, 0.0),
        }
    }

    /// Matrix product `self · other`: `self` is the upstream segment.
    pub fn cascade(&self, other: &TwoPort) -> TwoPort {
        TwoPort {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    /// `a·d − b·c`; equals 1 for every lossless reciprocal segment and for
    /// products of such segments.
    pub fn determinant(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }
}

/// Characteristic impedance of a duct with circular cross-section.
fn char_impedance(radius: f64, medium: &Medium) -> f64 {
    medium.density * medium.sound_speed / (PI * radius * radius)
}

/// Transfer matrix of one uniform cylindrical segment.
pub fn segment_matrix(radius: f64, length: f64, frequency: f64, medium: &Medium) -> Result<TwoPort> {
    medium.validate()?;
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("segment radius must be positive, got {radius}")));
    }
    if !(length > 0.0) {
        return Err(Error::Domain(format!("segment length must be positive, got {length}")));
    }
    if !(frequency > 0.0) {
        return Err(Error::Domain(format!("frequency must be positive, got {frequency}")));
    }
    let k = 2.0 * PI * frequency / medium.sound_speed;
    let zc = char_impedance(radius, medium);
    let (sin_kl, cos_kl) = (k * length).sin_cos();
    Ok(TwoPort {
        a: Complex64::new(cos_kl, 0.0),
        b: Complex64::new(0.0, zc * sin_kl),
        c: Complex64::new(0.0, sin_kl / zc),
        d: Complex64::new(cos_kl, 0.0),
    })
}

/// Complex transmission and reflection coefficients of a structure at one
/// frequency, with matched `Z₀` terminations on both sides.
pub fn scattering(
    structure: &Structure,
    frequency: f64,
    geometry: &Geometry,
    medium: &Medium,
) -> Result<(Complex64, Complex64)> {
    let mut t = TwoPort::identity();
    for &r in structure.radii() {
        t = t.cascade(&segment_matrix(r, geometry.layer_length, frequency, medium)?);
    }
    let z0 = char_impedance(geometry.tube_radius, medium);
    let b_over = t.b / z0;
    let c_times = t.c * z0;
    let denom = t.a + b_over + c_times + t.d;
    let transmission = Complex64::new(2.0, 0.0) / denom;
    let reflection = (t.a + b_over - c_times - t.d) / denom;
    Ok((transmission, reflection))
}

/// Power transmission spectrum of `structure` over `grid`.
///
/// Deterministic: identical inputs give a bit-identical spectrum.
pub fn transmission(
    structure: &Structure,
    grid: &FreqGrid,
    geometry: &Geometry,
    medium: &Medium,
) -> Result<Spectrum> {
    geometry.validate()?;
    medium.validate()?;
    if structure.radii().len() != geometry.layer_count {
        return Err(Error::Domain(format!(
            "structure has {} layers, geometry expects {}",
            structure.radii().len(),
            geometry.layer_count
        )));
    }
    let mut values = Vec::with_capacity(grid.len());
    for &f in grid.frequencies() {
        let (t, _) = scattering(structure, f, geometry, medium)?;
        // Round-off can push |t|² a hair above 1; clip to the exact range.
        values.push(t.norm_sqr().min(1.0));
    }
    Spectrum::new(values)
}

/// Mean absolute transmittance difference over the grid.
pub fn spectrum_error(predicted: &Spectrum, target: &Spectrum) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::Domain(format!(
            "spectrum lengths differ: {} vs {}",
            predicted.len(),
            target.len()
        )));
    }
    let n = predicted.len() as f64;
    Ok(predicted
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_structure(rng: &mut Rng, geometry: &Geometry) -> Structure {
        let radii = (0..geometry.layer_count)
            .map(|_| rng.range(geometry.radius_min, geometry.radius_max))
            .collect();
        Structure::new(radii, geometry).unwrap()
    }

    #[test]
    fn segment_determinant_is_one() {
        let medium = Medium::default();
        for (r, l, f) in [(0.007, 0.02, 440.0), (0.0145, 0.1, 4999.0), (0.002, 0.003, 20.0)] {
            let m = segment_matrix(r, l, f, &medium).unwrap();
            let det = m.determinant();
            assert!((det - Complex64::new(1.0, 0.0)).norm() < 1e-9, "det = {det}");
        }
    }

    #[test]
    fn short_segment_approaches_identity() {
        let medium = Medium::default();
        let m = segment_matrix(0.01, 1e-12, 1000.0, &medium).unwrap();
        let zc = medium.density * medium.sound_speed / (PI * 0.01 * 0.01);
        assert!((m.a - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        assert!(m.b.norm() / zc < 1e-9); // b carries a factor of Zc
        assert!(m.c.norm() * zc < 1e-9); // c carries a factor of 1/Zc
        assert!((m.d - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn quarter_wave_segment_entries() {
        let medium = Medium::default();
        let length = 0.020;
        let f = medium.sound_speed / (4.0 * length);
        let radius = 0.00725;
        let zc = medium.density * medium.sound_speed / (PI * radius * radius);
        let m = segment_matrix(radius, length, f, &medium).unwrap();
        assert!(m.a.norm() < 1e-9, "a = {}", m.a);
        assert!(m.d.norm() < 1e-9, "d = {}", m.d);
        assert!((m.b - Complex64::new(0.0, zc)).norm() / zc < 1e-9);
        assert!((m.c - Complex64::new(0.0, 1.0 / zc)).norm() * zc < 1e-9);
    }

    #[test]
    fn segment_rejects_nonpositive_inputs() {
        let medium = Medium::default();
        assert!(segment_matrix(0.0, 0.02, 100.0, &medium).is_err());
        assert!(segment_matrix(0.01, -1.0, 100.0, &medium).is_err());
        assert!(segment_matrix(0.01, 0.02, 0.0, &medium).is_err());
    }

    #[test]
    fn uniform_structure_transmits_everything() {
        let geometry = Geometry::default();
        let medium = Medium::default();
        let grid = FreqGrid::standard();
        let s = Structure::new(vec![geometry.tube_radius; 5], &geometry).unwrap();
        let spectrum = transmission(&s, &grid, &geometry, &medium).unwrap();
        for &v in spectrum.values() {
            assert!((v - 1.0).abs() < 1e-12, "tau = {v}");
        }
    }

    #[test]
    fn single_constriction_quarter_wave_closed_form() {
        let geometry = Geometry::default();
        let medium = Medium::default();
        let f = medium.sound_speed / (4.0 * geometry.layer_length); // 4287.5 Hz
        let grid = FreqGrid::new(vec![f]).unwrap();
        let a = geometry.tube_radius;
        let s = Structure::new(vec![a, a, 0.00725, a, a], &geometry).unwrap();
        let spectrum = transmission(&s, &grid, &geometry, &medium).unwrap();
        // tau = 4/(m + 1/m)² with m = (tube_radius/r)² = 4.
        let m = (a / 0.00725).powi(2);
        let expected = 4.0 / (m + 1.0 / m).powi(2);
        assert!((expected - 0.221453287197).abs() < 1e-9);
        assert!((spectrum.values()[0] - expected).abs() < 1e-6);
    }

    #[test]
    fn reversal_gives_identical_spectrum() {
        let geometry = Geometry::default();
        let medium = Medium::default();
        let grid = FreqGrid::standard();
        let mut rng = Rng::seeded(2024);
        for _ in 0..100 {
            let s = random_structure(&mut rng, &geometry);
            let fwd = transmission(&s, &grid, &geometry, &medium).unwrap();
            let rev = transmission(&s.reversed(), &grid, &geometry, &medium).unwrap();
            for (x, y) in fwd.values().iter().zip(rev.values()) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn energy_is_conserved() {
        let geometry = Geometry::default();
        let medium = Medium::default();
        let grid = FreqGrid::standard();
        let mut rng = Rng::seeded(77);
        for _ in 0..20 {
            let s = random_structure(&mut rng, &geometry);
            for &f in grid.frequencies() {
                let (t, r) = scattering(&s, f, &geometry, &medium).unwrap();
                let total = t.norm_sqr() + r.norm_sqr();
                assert!((total - 1.0).abs() < 1e-9, "|t|²+|r|² = {total} at {f} Hz");
            }
        }
    }

    #[test]
    fn cascade_determinant_stays_one() {
        let geometry = Geometry::default();
        let medium = Medium::default();
        let mut rng = Rng::seeded(5);
        for _ in 0..50 {
            let s = random_structure(&mut rng, &geometry);
            let f = rng.range(20.0, 5000.0);
            let mut t = TwoPort::identity();
            for &r in s.radii() {
                t = t.cascade(&segment_matrix(r, geometry.layer_length, f, &medium).unwrap());
            }
            assert!((t.determinant() - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn transmission_is_deterministic() {
        let geometry = Geometry::default();
        let medium = Medium::default();
        let grid = FreqGrid::standard();
        let mut rng = Rng::seeded(8);
        let s = random_structure(&mut rng, &geometry);
        let a = transmission(&s, &grid, &geometry, &medium).unwrap();
        let b = transmission(&s, &grid, &geometry, &medium).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn spectrum_error_examples() {
        let a = Spectrum::new(vec![0.0; 250]).unwrap();
        let b = Spectrum::new(vec![1.0; 250]).unwrap();
        assert_eq!(spectrum_error(&a, &a).unwrap(), 0.0);
        assert_eq!(spectrum_error(&a, &b).unwrap(), 1.0);

        let target = Spectrum::new(vec![0.5; 250]).unwrap();
        let mut shifted = vec![0.5; 250];
        for v in shifted.iter_mut().take(125) {
            *v += 0.1;
        }
        let shifted = Spectrum::new(shifted).unwrap();
        let err = spectrum_error(&shifted, &target).unwrap();
        assert!((err - 0.05).abs() < 1e-12, "err = {err}");

        let short = Spectrum::new(vec![0.2; 10]).unwrap();
        assert!(spectrum_error(&short, &target).is_err());
    }

    #[test]
    fn structure_validation() {
        let geometry = Geometry::default();
        assert!(Structure::new(vec![0.01; 4], &geometry).is_err());
        assert!(Structure::new(vec![0.5; 5], &geometry).is_err());
        assert!(Structure::new(vec![0.001; 5], &geometry).is_err());
    }

    #[test]
    fn default_grid_is_below_cutoff() {
        let geometry = Geometry::default();
        let medium = Medium::default();
        let cutoff = geometry.cutoff_hz(&medium);
        assert!((cutoff - 6931.0).abs() < 5.0, "cutoff = {cutoff}");
        assert!(FreqGrid::standard().above_cutoff(&geometry, &medium).is_none());
        let high = FreqGrid::uniform(1000.0, 1000.0, 8).unwrap();
        assert_eq!(high.above_cutoff(&geometry, &medium), Some(7000.0));
    }

    #[test]
    fn grid_validation() {
        assert!(FreqGrid::new(vec![]).is_err());
        assert!(FreqGrid::new(vec![0.0, 10.0]).is_err());
        assert!(FreqGrid::new(vec![10.0, 10.0]).is_err());
        assert!(FreqGrid::new(vec![20.0, 10.0]).is_err());
        assert_eq!(FreqGrid::standard().len(), 250);
        assert_eq!(FreqGrid::standard().frequencies()[249], 5000.0);
    }
}
