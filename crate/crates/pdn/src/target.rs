//! Target spectra for inverse design: `frequency,transmittance` CSV
//! files or the two named templates, resampled onto a model's grid.

use std::fs;
use std::path::{Path, PathBuf};

use crate::duct::{FreqGrid, Spectrum};
use crate::error::{Error, Result};

/// Default full width of the `peak:` template, in Hz.
pub const PEAK_WIDTH_DEFAULT: f64 = 100.0;

/// A requested target spectrum, before resampling onto a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// CSV file of `frequency_hz, transmittance` rows.
    Csv(PathBuf),
    /// Transmittance 0 inside `[lo, hi]`, 1 outside.
    Bandgap { lo: f64, hi: f64 },
    /// Unity transmittance within `width/2` of `center`, 0 elsewhere.
    Peak { center: f64, width: f64 },
}

impl TargetSpec {
    /// Parse a command-line target argument: `bandgap:LO-HI`,
    /// `peak:CENTER`, or anything else as a CSV path.
    pub fn parse(arg: &str, peak_width: f64) -> Result<TargetSpec> {
        if let Some(range) = arg.strip_prefix("bandgap:") {
            let (lo, hi) = range
                .split_once('-')
                .ok_or_else(|| Error::Usage(format!("bandgap template wants LO-HI, got {range:?}")))?;
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|e| Error::Usage(format!("bad bandgap start {lo:?}: {e}")))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|e| Error::Usage(format!("bad bandgap end {hi:?}: {e}")))?;
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::Usage(format!("bandgap wants 0 < LO < HI, got {lo}-{hi}")));
            }
            return Ok(TargetSpec::Bandgap { lo, hi });
        }
        if let Some(center) = arg.strip_prefix("peak:") {
            let center: f64 = center
                .trim()
                .parse()
                .map_err(|e| Error::Usage(format!("bad peak frequency {center:?}: {e}")))?;
            if !(center > 0.0 && peak_width > 0.0) {
                return Err(Error::Usage(format!(
                    "peak wants a positive frequency and width, got {center} Hz, width {peak_width}"
                )));
            }
            return Ok(TargetSpec::Peak { center, width: peak_width });
        }
        Ok(TargetSpec::Csv(PathBuf::from(arg)))
    }

    /// The target as a spectrum on `grid`, values clipped to [0, 1].
    pub fn resolve(&self, grid: &FreqGrid) -> Result<Spectrum> {
        let values = match self {
            TargetSpec::Bandgap { lo, hi } => grid
                .frequencies()
                .iter()
                .map(|&f| if f >= *lo && f <= *hi { 0.0 } else { 1.0 })
                .collect(),
            TargetSpec::Peak { center, width } => grid
                .frequencies()
                .iter()
                .map(|&f| if (f - center).abs() <= width / 2.0 { 1.0 } else { 0.0 })
                .collect(),
            TargetSpec::Csv(path) => resample(&read_target_csv(path)?, grid, path)?,
        };
        Spectrum::new(values)
    }
}

/// Target CSV rows as (frequency, transmittance), ascending in
/// frequency. Malformed content is a usage error naming the line.
fn read_target_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut saw_data = false;
    for (idx, line) in text.lines().enumerate() {
        let n = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let f_field = fields.next().unwrap_or("").trim();
        let t_field = fields.next().unwrap_or("").trim();
        if fields.next().is_some() {
            return Err(Error::Usage(format!(
                "{}, line {n}: expected 2 fields (frequency_hz, transmittance)",
                path.display()
            )));
        }
        if !saw_data && f_field.parse::<f64>().is_err() {
            // Header line, e.g. "frequency_hz,transmittance".
            saw_data = true;
            continue;
        }
        saw_data = true;
        let f: f64 = f_field.parse().map_err(|e| {
            Error::Usage(format!("{}, line {n}: bad frequency {f_field:?}: {e}", path.display()))
        })?;
        let t: f64 = t_field.parse().map_err(|e| {
            Error::Usage(format!("{}, line {n}: bad transmittance {t_field:?}: {e}", path.display()))
        })?;
        if !(f > 0.0 && f.is_finite() && t.is_finite()) {
            return Err(Error::Usage(format!(
                "{}, line {n}: frequency must be positive and values finite",
                path.display()
            )));
        }
        if let Some(&(prev, _)) = points.last() {
            if f <= prev {
                return Err(Error::Usage(format!(
                    "{}, line {n}: frequencies must be strictly ascending ({f} after {prev})",
                    path.display()
                )));
            }
        }
        points.push((f, t));
    }
    if points.is_empty() {
        return Err(Error::Usage(format!("{}: no target data rows", path.display())));
    }
    Ok(points)
}

/// Linear interpolation of the target points onto the grid, constant
/// beyond the covered range, clipped to [0, 1].
fn resample(points: &[(f64, f64)], grid: &FreqGrid, path: &Path) -> Result<Vec<f64>> {
    let (t_lo, t_hi) = (points[0].0, points[points.len() - 1].0);
    let g = grid.frequencies();
    let (g_lo, g_hi) = (g[0], g[g.len() - 1]);
    if points.len() > 1 && (t_hi < g_lo || t_lo > g_hi) {
        return Err(Error::Incompatible(format!(
            "target {} covers {t_lo}-{t_hi} Hz but the model grid spans {g_lo}-{g_hi} Hz",
            path.display()
        )));
    }
    Ok(g
        .iter()
        .map(|&f| {
            let raw = if f <= t_lo {
                points[0].1
            } else if f >= t_hi {
                points[points.len() - 1].1
            } else {
                let k = points.partition_point(|&(pf, _)| pf < f);
                let (f0, v0) = points[k - 1];
                let (f1, v1) = points[k];
                v0 + (v1 - v0) * (f - f0) / (f1 - f0)
            };
            raw.clamp(0.0, 1.0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FreqGrid {
        FreqGrid::uniform(500.0, 500.0, 10).unwrap()
    }

    #[test]
    fn bandgap_template_is_zero_in_band() {
        let spec = TargetSpec::parse("bandgap:1000-3000", PEAK_WIDTH_DEFAULT).unwrap();
        assert_eq!(spec, TargetSpec::Bandgap { lo: 1000.0, hi: 3000.0 });
        let s = spec.resolve(&grid()).unwrap();
        let expect = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(s.values(), expect);
    }

    #[test]
    fn peak_template_is_unity_near_center() {
        let spec = TargetSpec::parse("peak:2000", 1000.0).unwrap();
        let s = spec.resolve(&grid()).unwrap();
        let expect = [0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(s.values(), expect);
    }

    #[test]
    fn malformed_template_arguments_are_usage_errors() {
        for bad in ["bandgap:5000", "bandgap:x-y", "bandgap:3000-1000", "peak:abc", "peak:-5"] {
            let err = TargetSpec::parse(bad, PEAK_WIDTH_DEFAULT)
                .and_then(|s| s.resolve(&grid()))
                .unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad} should be a usage error, got {err}");
        }
    }

    #[test]
    fn csv_target_resamples_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("target.csv");
        fs::write(
            &path,
            "frequency_hz,transmittance\n1000,0.0\n3000,1.0\n5000,0.5\n",
        )
        .unwrap();
        let spec = TargetSpec::parse(path.to_str().unwrap(), PEAK_WIDTH_DEFAULT).unwrap();
        let s = spec.resolve(&grid()).unwrap();
        let v = s.values();
        assert_eq!(v[0], 0.0, "below range holds the first value");
        assert_eq!(v[1], 0.0);
        assert!((v[2] - 0.25).abs() < 1e-12);
        assert!((v[3] - 0.5).abs() < 1e-12);
        assert!((v[5] - 1.0).abs() < 1e-12);
        assert!((v[6] - 0.875).abs() < 1e-12);
        assert_eq!(v[9], 0.5, "above range holds the last value");
    }

    #[test]
    fn csv_values_are_clipped_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("target.csv");
        fs::write(&path, "500,1.4\n5000,-0.2\n").unwrap();
        let s = TargetSpec::Csv(path).resolve(&grid()).unwrap();
        assert_eq!(s.values()[0], 1.0);
        assert_eq!(*s.values().last().unwrap(), 0.0);
    }

    #[test]
    fn malformed_csv_reports_the_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("target.csv");
        fs::write(&path, "frequency_hz,transmittance\n1000,0.5\noops,0.4\n").unwrap();
        let err = TargetSpec::Csv(path.clone()).resolve(&grid()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 3"), "{err}");

        fs::write(&path, "1000,0.5\n900,0.4\n").unwrap();
        let err = TargetSpec::Csv(path.clone()).resolve(&grid()).unwrap_err();
        assert!(err.to_string().contains("ascending"), "{err}");

        fs::write(&path, "1000,0.5,9\n").unwrap();
        let err = TargetSpec::Csv(path.clone()).resolve(&grid()).unwrap_err();
        assert!(err.to_string().contains("2 fields"), "{err}");

        fs::write(&path, "# only comments\n").unwrap();
        let err = TargetSpec::Csv(path.clone()).resolve(&grid()).unwrap_err();
        assert!(err.to_string().contains("no target data rows"), "{err}");
    }

    #[test]
    fn disjoint_csv_range_is_a_grid_incompatibility() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("target.csv");
        fs::write(&path, "20000,1.0\n30000,0.0\n").unwrap();
        let err = TargetSpec::Csv(path).resolve(&grid()).unwrap_err();
        assert_eq!(err.exit_code(), 6, "{err}");
    }

    #[test]
    fn single_point_csv_is_constant() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("target.csv");
        fs::write(&path, "2500,0.75\n").unwrap();
        let s = TargetSpec::Csv(path).resolve(&grid()).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.75));
    }
}
