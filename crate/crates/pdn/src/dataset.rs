//! Paired structure/spectrum datasets: factorial and random generation
//! against the transfer-matrix oracle, a little-endian binary format,
//! and CSV export.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::duct::{self, FreqGrid, Geometry, Medium, Spectrum, Structure};
use crate::bytes::Reader;
use crate::error::{Error, Result};
use crate::net::Matrix;
use crate::rng::Rng;

/// Refuse factorial generation beyond this many pairs unless overridden.
pub const MAX_GRID_PAIRS: u128 = 10_000_000;

const MAGIC: &[u8; 4] = b"PDND";
const FORMAT_VERSION: u32 = 1;

/// How a dataset was produced; random datasets record their seed so a
/// rerun reproduces them bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    GridUniform { values_per_layer: u32 },
    RandomContinuous { seed: u64 },
}

/// One structure with its oracle transmission spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPair {
    pub structure: Structure,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub geometry: Geometry,
    pub medium: Medium,
    pub grid: FreqGrid,
    pub provenance: Provenance,
    pairs: Vec<LabelledPair>,
}

/// The `count` sample radii per layer: the top-anchored arithmetic
/// sequence `k·radius_max/count` for `k = 1…count`, in metres.
pub fn grid_values(count: usize, geometry: &Geometry) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Domain("values per layer must be >= 1".into()));
    }
    // The top sample is radius_max by construction; computing it as
    // max·count/count can round one ulp above the allowed range.
    Ok((1..=count)
        .map(|k| {
            if k == count {
                geometry.radius_max
            } else {
                geometry.radius_max * k as f64 / count as f64
            }
        })
        .collect())
}

fn pair_spectra(
    structures: Vec<Structure>,
    geometry: &Geometry,
    medium: &Medium,
    grid: &FreqGrid,
) -> Result<Vec<LabelledPair>> {
    // Parallel over structures; collect keeps index order, so the
    // resulting dataset is identical no matter the thread count.
    structures
        .into_par_iter()
        .map(|structure| {
            let spectrum = duct::transmission(&structure, grid, geometry, medium)?;
            Ok(LabelledPair { structure, spectrum })
        })
        .collect()
}

fn checked_pair_count(values_per_layer: usize, layers: usize, limit: u128) -> Result<u64> {
    let mut total: u128 = 1;
    for _ in 0..layers {
        total = total.saturating_mul(values_per_layer as u128);
        if total > limit {
            return Err(Error::Capacity(format!(
                "{values_per_layer}^{layers} pairs exceeds the {limit}-pair guard; \
                 pass the large-dataset override to proceed"
            )));
        }
    }
    Ok(total as u64)
}

/// Full factorial dataset: the Cartesian product of [`grid_values`]
/// over all layers, in lexicographic order (first layer slowest), each
/// paired with its oracle spectrum.
pub fn generate_grid(
    values_per_layer: usize,
    geometry: &Geometry,
    medium: &Medium,
    grid: &FreqGrid,
    allow_large: bool,
) -> Result<Dataset> {
    geometry.validate()?;
    medium.validate()?;
    let limit = if allow_large { u64::MAX as u128 } else { MAX_GRID_PAIRS };
    let total = checked_pair_count(values_per_layer, geometry.layer_count, limit)?;
    let values = grid_values(values_per_layer, geometry)?;
    let layers = geometry.layer_count;

    let mut structures = Vec::with_capacity(total as usize);
    let mut indices = vec![0usize; layers];
    loop {
        let radii: Vec<f64> = indices.iter().map(|&i| values[i]).collect();
        structures.push(Structure::new(radii, geometry)?);
        // Odometer increment, last layer fastest.
        let mut pos = layers;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < values_per_layer {
                break;
            }
            indices[pos] = 0;
        }
        if indices.iter().all(|&i| i == 0) {
            break;
        }
    }
    debug_assert_eq!(structures.len() as u64, total);

    Ok(Dataset {
        geometry: *geometry,
        medium: *medium,
        grid: grid.clone(),
        provenance: Provenance::GridUniform {
            values_per_layer: values_per_layer as u32,
        },
        pairs: pair_spectra(structures, geometry, medium, grid)?,
    })
}

/// Random dataset: each radius drawn independently and uniformly from
/// `[radius_min, radius_max]` with a seeded generator.
pub fn generate_random(
    n: usize,
    seed: u64,
    geometry: &Geometry,
    medium: &Medium,
    grid: &FreqGrid,
) -> Result<Dataset> {
    geometry.validate()?;
    medium.validate()?;
    if n == 0 {
        return Err(Error::Domain("random dataset needs at least 1 pair".into()));
    }
    let mut rng = Rng::seeded(seed);
    let mut structures = Vec::with_capacity(n);
    for _ in 0..n {
        let radii: Vec<f64> = (0..geometry.layer_count)
            .map(|_| rng.range(geometry.radius_min, geometry.radius_max))
            .collect();
        structures.push(Structure::new(radii, geometry)?);
    }
    Ok(Dataset {
        geometry: *geometry,
        medium: *medium,
        grid: grid.clone(),
        provenance: Provenance::RandomContinuous { seed },
        pairs: pair_spectra(structures, geometry, medium, grid)?,
    })
}

impl Dataset {
    /// Dataset from already-labelled pairs; shapes are validated against
    /// the geometry and grid.
    pub fn from_pairs(
        geometry: Geometry,
        medium: Medium,
        grid: FreqGrid,
        provenance: Provenance,
        pairs: Vec<LabelledPair>,
    ) -> Result<Dataset> {
        geometry.validate()?;
        medium.validate()?;
        for (i, p) in pairs.iter().enumerate() {
            if p.structure.radii().len() != geometry.layer_count {
                return Err(Error::Domain(format!(
                    "pair {i} has {} layers, geometry declares {}",
                    p.structure.radii().len(),
                    geometry.layer_count
                )));
            }
            if p.spectrum.len() != grid.len() {
                return Err(Error::Domain(format!(
                    "pair {i} has a {}-point spectrum, grid has {} points",
                    p.spectrum.len(),
                    grid.len()
                )));
            }
        }
        Ok(Dataset { geometry, medium, grid, provenance, pairs })
    }

    /// Pairs at the given indices, as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            geometry: self.geometry,
            medium: self.medium,
            grid: self.grid.clone(),
            provenance: self.provenance,
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
        }
    }

    pub fn pairs(&self) -> &[LabelledPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pair spectra as an n × grid_len matrix (network inputs).
    pub fn spectra_matrix(&self) -> Matrix {
        let cols = self.grid.len();
        let mut data = Vec::with_capacity(self.len() * cols);
        for p in &self.pairs {
            data.extend_from_slice(p.spectrum.values());
        }
        Matrix::from_vec(self.len(), cols, data)
    }

    /// Pair radii as an n × layer_count matrix in metres (labels).
    pub fn radii_matrix(&self) -> Matrix {
        let cols = self.geometry.layer_count;
        let mut data = Vec::with_capacity(self.len() * cols);
        for p in &self.pairs {
            data.extend_from_slice(p.structure.radii());
        }
        Matrix::from_vec(self.len(), cols, data)
    }

    /// Serialized byte image, the exact content [`Dataset::save`] writes.
    ///
    /// Layout (little-endian): magic `PDND`, format version u32,
    /// layer_count u32, grid length u32, pair count u64; then f64s
    /// tube_radius, layer_length, radius_min, radius_max, sound_speed,
    /// density; provenance tag u8 (0 grid, 1 random) and its u64 value
    /// (values per layer, or the seed); the grid frequencies as f64s;
    /// then per pair the radii followed by the transmittances.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            64 + 8 * (self.grid.len() + self.len() * (self.geometry.layer_count + self.grid.len())),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.geometry.layer_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in [
            self.geometry.tube_radius,
            self.geometry.layer_length,
            self.geometry.radius_min,
            self.geometry.radius_max,
            self.medium.sound_speed,
            self.medium.density,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let (tag, value) = match self.provenance {
            Provenance::GridUniform { values_per_layer } => (0u8, values_per_layer as u64),
            Provenance::RandomContinuous { seed } => (1u8, seed),
        };
        out.push(tag);
        out.extend_from_slice(&value.to_le_bytes());
        for &f in self.grid.frequencies() {
            out.extend_from_slice(&f.to_le_bytes());
        }
        for pair in &self.pairs {
            for &r in pair.structure.radii() {
                out.extend_from_slice(&r.to_le_bytes());
            }
            for &t in pair.spectrum.values() {
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Dataset> {
        let mut r = Reader::new(bytes, path);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(r.bad(0, format!("bad magic {magic:?}, expected \"PDND\"")));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.bad(
                4,
                format!("unsupported dataset format version {version}; this build reads version {FORMAT_VERSION}"),
            ));
        }
        let layer_count = r.u32()? as usize;
        let grid_len = r.u32()? as usize;
        let pair_count = r.u64()? as usize;
        let geometry = Geometry {
            tube_radius: r.f64()?,
            layer_length: r.f64()?,
            layer_count,
            radius_min: r.f64()?,
            radius_max: r.f64()?,
        };
        let medium = Medium {
            sound_speed: r.f64()?,
            density: r.f64()?,
        };
        let tag_offset = r.pos;
        let tag = r.u8()?;
        let value = r.u64()?;
        let provenance = match tag {
            0 => Provenance::GridUniform {
                values_per_layer: value as u32,
            },
            1 => Provenance::RandomContinuous { seed: value },
            other => return Err(r.bad(tag_offset, format!("unknown provenance tag {other}"))),
        };
        let grid_offset = r.pos;
        let mut freqs = Vec::with_capacity(grid_len);
        for _ in 0..grid_len {
            freqs.push(r.f64()?);
        }
        geometry
            .validate()
            .map_err(|e| r.bad(20, format!("invalid geometry: {e}")))?;
        medium
            .validate()
            .map_err(|e| r.bad(52, format!("invalid medium: {e}")))?;
        let grid =
            FreqGrid::new(freqs).map_err(|e| r.bad(grid_offset, format!("invalid grid: {e}")))?;

        let expected_body = pair_count * (layer_count + grid_len) * 8;
        if bytes.len() != r.pos + expected_body {
            return Err(r.bad(
                r.pos,
                format!(
                    "file is {} bytes, expected {} for {pair_count} pairs",
                    bytes.len(),
                    r.pos + expected_body
                ),
            ));
        }
        let mut pairs = Vec::with_capacity(pair_count);
        for i in 0..pair_count {
            let offset = r.pos;
            let mut radii = Vec::with_capacity(layer_count);
            for _ in 0..layer_count {
                radii.push(r.f64()?);
            }
            let structure = Structure::new(radii, &geometry)
                .map_err(|e| Error::format(path, offset as u64, format!("pair {i}: {e}")))?;
            let mut values = Vec::with_capacity(grid_len);
            for _ in 0..grid_len {
                values.push(r.f64()?);
            }
            let spectrum = Spectrum::new(values)
                .map_err(|e| Error::format(path, offset as u64, format!("pair {i}: {e}")))?;
            pairs.push(LabelledPair { structure, spectrum });
        }
        Ok(Dataset {
            geometry,
            medium,
            grid,
            provenance,
            pairs,
        })
    }

    /// FNV-1a 64 hash of the serialized bytes; the summary hash printed
    /// by the data-generation command.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(&self.to_bytes())
    }

    /// One row per pair: radii in mm (6 decimals) then transmittances
    /// (9 decimals); header `r1..rL, t20, t40, …` named by frequency.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 1..=self.geometry.layer_count {
            if i > 1 {
                out.push(',');
            }
            out.push_str(&format!("r{i}"));
        }
        for &f in self.grid.frequencies() {
            if f == f.trunc() {
                out.push_str(&format!(",t{}", f as i64));
            } else {
                out.push_str(&format!(",t{f}"));
            }
        }
        out.push('\n');
        for pair in &self.pairs {
            let mut first = true;
            for &r in pair.structure.radii() {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&format!("{:.6}", r * 1000.0));
            }
            for &t in pair.spectrum.values() {
                out.push_str(&format!(",{t:.9}"));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
