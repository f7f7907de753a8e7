//! Mode seeking in mixture densities: every local maximum is a
//! candidate design. Uses the mean-shift fixed-point iteration for
//! diagonal Gaussian mixtures, which needs no step size and ascends the
//! density monotonically, started from every component mean.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdn::{log_density, responsibilities, DesignScaler, MixtureParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeekerConfig {
    pub max_iterations: usize,
    /// Stop when the step's Euclidean norm falls below this, in design
    /// units.
    pub tolerance: f64,
    /// Converged points closer than this (Euclidean, design units) are
    /// the same mode.
    pub merge_radius: f64,
    /// Drop modes whose density is below this fraction of the top mode.
    pub density_floor: f64,
    pub max_modes: usize,
}

impl Default for SeekerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-8,
            merge_radius: 0.02,
            density_floor: 1e-3,
            max_modes: 16,
        }
    }
}

impl SeekerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.max_modes == 0 {
            return Err(Error::Domain("seeker iteration and mode caps must be positive".into()));
        }
        if !(self.tolerance > 0.0) || !(self.density_floor > 0.0) {
            return Err(Error::Domain("seeker tolerances must be positive".into()));
        }
        if !(self.merge_radius > self.tolerance) {
            return Err(Error::Domain(format!(
                "merge radius {} must exceed convergence tolerance {}",
                self.merge_radius, self.tolerance
            )));
        }
        Ok(())
    }
}

/// Result of one mean-shift ascent.
#[derive(Debug, Clone)]
pub struct Ascent {
    pub location: Vec<f64>,
    pub log_density: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One local maximum of the mixture density.
#[derive(Debug, Clone)]
pub struct Mode {
    /// Position in design units (may sit slightly outside the physical
    /// image when the density peaks past a bound).
    pub location: Vec<f64>,
    /// Physical radii in metres, clamped to the allowed range.
    pub radii: Vec<f64>,
    pub density: f64,
    pub log_density: f64,
    /// Components whose ascent converged to this mode.
    pub basin_components: Vec<usize>,
    /// 1-based, by descending density.
    pub rank: usize,
    pub converged: bool,
    /// True when clamping to the physical range changed the density by
    /// more than 1%: the peak effectively sits on or past a boundary.
    pub boundary: bool,
}

/// One mean-shift update: the responsibility-weighted precision mean,
/// `x_d ← (Σᵢ γᵢ μᵢd/σᵢd²)/(Σᵢ γᵢ/σᵢd²)`.
pub fn mean_shift_step(params: &MixtureParams, x: &[f64]) -> Result<Vec<f64>> {
    let gamma = responsibilities(params, x)?;
    let d = params.d();
    let mut next = vec![0.0; d];
    for k in 0..d {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..params.m() {
            let s = params.devs.get(i, k);
            let w = gamma[i] / (s * s);
            num += w * params.means.get(i, k);
            den += w;
        }
        next[k] = num / den;
    }
    Ok(next)
}

/// Ascend the mixture density from `start` until the step norm drops
/// below the tolerance. Never fails to return: running out of
/// iterations yields a result marked unconverged.
pub fn ascend(params: &MixtureParams, start: &[f64], config: &SeekerConfig) -> Result<Ascent> {
    params.validate()?;
    config.validate()?;
    let mut x = start.to_vec();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        let next = mean_shift_step(params, &x)?;
        iterations += 1;
        let step: f64 = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x = next;
        if step < config.tolerance {
            converged = true;
            break;
        }
    }
    let log_density = log_density(params, &x)?;
    Ok(Ascent {
        location: x,
        log_density,
        iterations,
        converged,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// All modes of the mixture: ascends from every component mean, merges
/// converged points within the merge radius (higher density wins, ties
/// to the lower component index), drops modes below the density floor,
/// ranks the rest by descending density, and maps them to physical
/// radii.
pub fn find_modes(
    params: &MixtureParams,
    scaler: &DesignScaler,
    config: &SeekerConfig,
) -> Result<Vec<Mode>> {
    params.validate()?;
    config.validate()?;
    assert_eq!(params.d(), scaler.dims());

    struct Group {
        location: Vec<f64>,
        log_density: f64,
        basin: Vec<usize>,
        converged: bool,
    }

    let mut groups: Vec<Group> = Vec::new();
    for i in 0..params.m() {
        let ascent = ascend(params, params.means.row(i), config)?;
        match groups
            .iter_mut()
            .find(|g| distance(&g.location, &ascent.location) < config.merge_radius)
        {
            Some(g) => {
                g.basin.push(i);
                // Strictly higher density replaces the representative;
                // equal density keeps the earlier (lower-index) one.
                if ascent.log_density > g.log_density {
                    g.location = ascent.location;
                    g.log_density = ascent.log_density;
                    g.converged = ascent.converged;
                }
            }
            None => groups.push(Group {
                location: ascent.location,
                log_density: ascent.log_density,
                basin: vec![i],
                converged: ascent.converged,
            }),
        }
    }
    assert!(!groups.is_empty(), "ascents from component means cannot all vanish");

    let top = groups
        .iter()
        .map(|g| g.log_density)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = top + config.density_floor.ln();
    groups.retain(|g| g.log_density >= floor);

    groups.sort_by(|a, b| {
        b.log_density
            .partial_cmp(&a.log_density)
            .expect("finite densities")
            .then(a.basin[0].cmp(&b.basin[0]))
    });
    groups.truncate(config.max_modes);

    let modes = groups
        .into_iter()
        .enumerate()
        .map(|(idx, g)| {
            let clamped = scaler.clamp_design(&g.location);
            let ld_clamped = log_density(params, &clamped)?;
            // A log-density shift of 0.01 is a ~1% density change.
            let boundary = (g.log_density - ld_clamped).abs() > 0.01;
            Ok(Mode {
                radii: scaler.to_physical_clamped(&g.location),
                location: g.location,
                density: g.log_density.exp(),
                log_density: g.log_density,
                basin_components: g.basin,
                rank: idx + 1,
                converged: g.converged,
                boundary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(modes)
}

/// Ranked designs as CSV: rank, density, flags, radii in mm at the
/// 2-decimal precision used for reporting; `uv` adds reduced 2D
/// coordinates per mode when a plane projection is in play.
pub fn emit_designs(modes: &[Mode], uv: Option<&[(f64, f64)]>, path: &Path) -> Result<()> {
    if let Some(uv) = uv {
        assert_eq!(uv.len(), modes.len());
    }
    let layer_count = modes.first().map_or(0, |m| m.radii.len());
    let mut out = String::from("rank,density,converged,boundary");
    for i in 1..=layer_count {
        out.push_str(&format!(",r{i}_mm"));
    }
    if uv.is_some() {
        out.push_str(",u,v");
    }
    out.push('\n');
    for (idx, mode) in modes.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.6e},{},{}",
            mode.rank,
            mode.density,
            if mode.converged { "yes" } else { "no" },
            if mode.boundary { "yes" } else { "no" },
        ));
        for &r in &mode.radii {
            out.push_str(&format!(",{:.2}", r * 1000.0));
        }
        if let Some(uv) = uv {
            let (u, v) = uv[idx];
            out.push_str(&format!(",{u:.6},{v:.6}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One parsed row of a designs CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub rank: usize,
    /// Radii in metres, at whatever precision the file carries.
    pub radii: Vec<f64>,
}

/// Read the radii columns (`r1_mm, r2_mm, …`) back from a designs CSV.
pub fn read_designs(path: &Path) -> Result<Vec<DesignRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, 0, "empty designs file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let rank_idx = cols
        .iter()
        .position(|&c| c == "rank")
        .ok_or_else(|| Error::format(path, 0, "header missing 'rank' column"))?;
    let mut radius_idx = Vec::new();
    for i in 1.. {
        match cols.iter().position(|c| *c == format!("r{i}_mm")) {
            Some(p) => radius_idx.push(p),
            None => break,
        }
    }
    if radius_idx.is_empty() {
        return Err(Error::format(path, 0, "header has no r1_mm… radius columns"));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |idx: usize| -> Result<f64> {
            fields
                .get(idx)
                .ok_or_else(|| {
                    Error::format(path, 0, format!("line {}: missing column {idx}", lineno + 1))
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| {
                    Error::format(path, 0, format!("line {}: {e}", lineno + 1))
                })
        };
        let rank = parse(rank_idx)? as usize;
        let radii = radius_idx
            .iter()
            .map(|&idx| parse(idx).map(|mm| mm / 1000.0))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(DesignRow { rank, radii });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Matrix;
    use crate::rng::Rng;

    fn scaler_2d() -> DesignScaler {
        DesignScaler::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    fn mixture_1d(mixing: Vec<f64>, means: Vec<f64>, devs: Vec<f64>) -> MixtureParams {
        let m = mixing.len();
        MixtureParams {
            mixing,
            means: Matrix::from_vec(m, 1, means),
            devs: Matrix::from_vec(m, 1, devs),
        }
    }

    #[test]
    fn single_gaussian_converges_to_its_mean() {
        let params = mixture_1d(vec![1.0], vec![0.3], vec![0.4]);
        let config = SeekerConfig::default();
        for start in [-3.0, 0.0, 5.0] {
            let a = ascend(&params, &[start], &config).unwrap();
            assert!(a.converged);
            assert!(a.iterations <= 50, "{} iterations", a.iterations);
            assert!((a.location[0] - 0.3).abs() < config.tolerance * 10.0);
        }
    }

    #[test]
    fn separated_pair_ascends_to_nearest_peak() {
        let params = mixture_1d(vec![0.5, 0.5], vec![2.5, -2.5], vec![0.1, 0.1]);
        let a = ascend(&params, &[2.0], &SeekerConfig::default()).unwrap();
        assert!(a.converged);
        assert!((a.location[0] - 2.5).abs() < 1e-3, "got {}", a.location[0]);
    }

    #[test]
    fn overlapping_pair_is_unimodal_at_midpoint() {
        // An equal 1D pair is unimodal whenever the mean gap is at most
        // twice the shared deviation; here the midpoint is the peak.
        let params = mixture_1d(vec![0.5, 0.5], vec![0.5, -0.5], vec![1.0, 1.0]);
        for start in [0.5, -0.5, 0.9] {
            let a = ascend(&params, &[start], &SeekerConfig::default()).unwrap();
            assert!(a.location[0].abs() < 1e-6, "start {start} ended at {}", a.location[0]);
        }
    }

    #[test]
    fn ascent_is_monotone_in_log_density() {
        let mut rng = Rng::seeded(500);
        for _ in 0..20 {
            let m = 4;
            let logits: Vec<f64> = (0..m).map(|_| rng.range(-1.0, 1.0)).collect();
            let params = MixtureParams {
                mixing: crate::mdn::softmax(&logits),
                means: Matrix::from_fn(m, 2, |_, _| rng.range(-1.0, 1.0)),
                devs: Matrix::from_fn(m, 2, |_, _| rng.range(0.05, 0.6)),
            };
            let mut x = vec![rng.range(-1.5, 1.5), rng.range(-1.5, 1.5)];
            let mut prev = log_density(&params, &x).unwrap();
            for _ in 0..100 {
                x = mean_shift_step(&params, &x).unwrap();
                let cur = log_density(&params, &x).unwrap();
                assert!(cur >= prev - 1e-12, "density dropped {prev} -> {cur}");
                prev = cur;
            }
        }
    }

    #[test]
    fn two_well_separated_modes_are_both_found() {
        let params = MixtureParams {
            mixing: vec![0.5, 0.5],
            means: Matrix::from_vec(2, 2, vec![-0.5, -0.5, 0.5, 0.5]),
            devs: Matrix::from_vec(2, 2, vec![0.05; 4]),
        };
        let scaler = DesignScaler::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let modes = find_modes(&params, &scaler, &SeekerConfig::default()).unwrap();
        assert_eq!(modes.len(), 2);
        for mode in &modes {
            let target = if mode.location[0] < 0.0 { -0.5 } else { 0.5 };
            assert!((mode.location[0] - target).abs() < 1e-3);
            assert!((mode.location[1] - target).abs() < 1e-3);
        }
        let rel = (modes[0].density - modes[1].density).abs() / modes[0].density;
        assert!(rel < 1e-6, "densities differ by {rel}");
        assert_eq!(modes[0].rank, 1);
        assert_eq!(modes[1].rank, 2);
        let basins: Vec<usize> = modes
            .iter()
            .flat_map(|m| m.basin_components.clone())
            .collect();
        assert_eq!(basins.len(), 2);
    }

    #[test]
    fn coincident_components_merge_to_one_mode() {
        let m = 50;
        let params = MixtureParams {
            mixing: vec![1.0 / m as f64; m],
            means: Matrix::from_fn(m, 2, |_, _| 0.25),
            devs: Matrix::from_fn(m, 2, |_, _| 0.2),
        };
        let modes = find_modes(&params, &scaler_2d(), &SeekerConfig::default()).unwrap();
        assert_eq!(modes.len(), 1);
        assert_eq!(modes[0].basin_components.len(), m);
    }

    #[test]
    fn modes_are_local_maxima_under_axis_probes() {
        let mut rng = Rng::seeded(321);
        for _ in 0..10 {
            let m = 5;
            let logits: Vec<f64> = (0..m).map(|_| rng.range(-1.0, 1.0)).collect();
            let params = MixtureParams {
                mixing: crate::mdn::softmax(&logits),
                means: Matrix::from_fn(m, 2, |_, _| rng.range(-0.8, 0.8)),
                devs: Matrix::from_fn(m, 2, |_, _| rng.range(0.08, 0.5)),
            };
            let config = SeekerConfig::default();
            let scaler = DesignScaler::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
            let modes = find_modes(&params, &scaler, &config).unwrap();
            assert!(!modes.is_empty() && modes.len() <= m);
            for mode in &modes {
                for k in 0..2 {
                    for sign in [-1.0, 1.0] {
                        let mut probe = mode.location.clone();
                        probe[k] += sign * config.merge_radius / 2.0;
                        let ld = log_density(&params, &probe).unwrap();
                        assert!(
                            mode.log_density >= ld - 1e-9,
                            "probe beats mode: {} vs {}",
                            ld,
                            mode.log_density
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn mode_set_is_permutation_invariant() {
        let params = MixtureParams {
            mixing: vec![0.2, 0.3, 0.5],
            means: Matrix::from_vec(3, 2, vec![-0.6, 0.0, 0.6, 0.1, 0.0, -0.7]),
            devs: Matrix::from_vec(3, 2, vec![0.07; 6]),
        };
        let scaler = DesignScaler::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let config = SeekerConfig::default();
        let a = find_modes(&params, &scaler, &config).unwrap();
        let b = find_modes(&params.permuted(&[2, 0, 1]), &scaler, &config).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!(distance(&x.location, &y.location) < 1e-6);
        }
    }

    #[test]
    fn faint_modes_fall_below_the_density_floor() {
        let params = mixture_1d(vec![0.9995, 0.0005], vec![0.0, 0.8], vec![0.05, 0.05]);
        let scaler = DesignScaler::new(vec![-2.0], vec![2.0]).unwrap();
        let modes = find_modes(&params, &scaler, &SeekerConfig::default()).unwrap();
        assert_eq!(modes.len(), 1, "faint far mode should be dropped");
        assert!((modes[0].location[0]).abs() < 1e-6);
    }

    #[test]
    fn mode_cap_truncates_ranked_list() {
        let params = MixtureParams {
            mixing: vec![0.2; 5],
            means: Matrix::from_vec(5, 1, vec![-0.8, -0.4, 0.0, 0.4, 0.8]),
            devs: Matrix::from_vec(5, 1, vec![0.03; 5]),
        };
        let scaler = DesignScaler::new(vec![-2.0], vec![2.0]).unwrap();
        let config = SeekerConfig {
            max_modes: 3,
            ..SeekerConfig::default()
        };
        let modes = find_modes(&params, &scaler, &config).unwrap();
        assert_eq!(modes.len(), 3);
    }

    #[test]
    fn iteration_cap_flags_unconverged() {
        let params = mixture_1d(vec![0.5, 0.5], vec![-0.4, 0.4], vec![0.5, 0.5]);
        let config = SeekerConfig {
            max_iterations: 1,
            tolerance: 1e-12,
            ..SeekerConfig::default()
        };
        let a = ascend(&params, &[1.5], &config).unwrap();
        assert!(!a.converged);
        assert_eq!(a.iterations, 1);
    }

    #[test]
    fn boundary_modes_are_flagged() {
        // Peak at 1.4 design units: past the physical bound at 1.
        let params = mixture_1d(vec![1.0], vec![1.4], vec![0.1]);
        let scaler = DesignScaler::new(vec![0.0], vec![1.0]).unwrap();
        let modes = find_modes(&params, &scaler, &SeekerConfig::default()).unwrap();
        assert_eq!(modes.len(), 1);
        assert!(modes[0].boundary);
        assert_eq!(modes[0].radii[0], 1.0, "clamped to the physical bound");
        // An interior peak is not flagged.
        let inside = mixture_1d(vec![1.0], vec![0.2], vec![0.1]);
        let modes = find_modes(&inside, &scaler, &SeekerConfig::default()).unwrap();
        assert!(!modes[0].boundary);
    }

    #[test]
    fn designs_csv_round_trip() {
        let params = MixtureParams {
            mixing: vec![0.7, 0.3],
            means: Matrix::from_vec(2, 2, vec![-0.5, -0.5, 0.5, 0.5]),
            devs: Matrix::from_vec(2, 2, vec![0.05; 4]),
        };
        let geometry = crate::duct::Geometry {
            layer_count: 2,
            ..crate::duct::Geometry::default()
        };
        let scaler = DesignScaler::from_geometry(&geometry);
        let modes = find_modes(&params, &scaler, &SeekerConfig::default()).unwrap();
        assert_eq!(modes.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("designs.csv");
        emit_designs(&modes, Some(&[(0.1, -0.2), (0.3, 0.4)]), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "rank,density,converged,boundary,r1_mm,r2_mm,u,v");
        // Radii carry exactly 2 decimals.
        let first_radius = lines[1].split(',').nth(4).unwrap();
        assert_eq!(first_radius.split('.').nth(1).unwrap().len(), 2);
        // Densities non-increasing down the file.
        let d1: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        let d2: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert!(d1 >= d2);

        let rows = read_designs(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].rank, 1);
        for (row, mode) in rows.iter().zip(&modes) {
            for (a, b) in row.radii.iter().zip(&mode.radii) {
                assert!((a - b).abs() < 5e-6, "parsed {a} vs emitted {b}");
            }
        }
    }

    #[test]
    fn read_designs_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "rank,density\n1,0.5\n").unwrap();
        assert!(read_designs(&path).unwrap_err().to_string().contains("radius"));
        fs::write(&path, "rank,r1_mm\n1,abc\n").unwrap();
        let err = read_designs(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn seeker_config_validation() {
        assert!(SeekerConfig::default().validate().is_ok());
        let bad = SeekerConfig {
            merge_radius: 1e-9,
            ..SeekerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SeekerConfig {
            max_iterations: 0,
            ..SeekerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
