//! Principal-component plane view: reduces the d-dimensional design
//! space to the top-2 variance plane and evaluates the full mixture
//! density on a planar slice through it, producing the 2D contour data
//! behind the design-space plots.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdn::{log_density, MixtureParams};
use crate::net::Matrix;

/// Orthonormal 2D frame in design space.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Sample mean the plane passes through.
    pub center: Vec<f64>,
    /// Top two principal directions, orthonormal.
    pub axes: [Vec<f64>; 2],
    /// Eigenvalues along the axes, descending.
    pub explained_variance: [f64; 2],
}

/// Density samples over a (u, v) rectangle of the projection plane.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    pub resolution: usize,
    /// resolution × resolution; row = v index, column = u index.
    pub values: Matrix,
    /// Projected mode positions in rank order (A₁, A₂, …).
    pub markers: Vec<(f64, f64)>,
}

/// Sum with a fixed (sorted) accumulation order, so the result does not
/// depend on the order the terms were produced in.
fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.total_cmp(b));
    terms.iter().sum()
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations with a fixed sweep order. Returns (eigenvalues,
/// eigenvectors as columns), unsorted.
fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let d = a.rows();
    assert_eq!(d, a.cols());
    let mut m = a.clone();
    let mut v = Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 });
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..d {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let eigenvalues = (0..d).map(|i| m.get(i, i)).collect();
    (eigenvalues, v)
}

/// Fit the top-2 variance plane through a point cloud (n × d, n ≥ 3).
/// Covariance accumulation uses a sorted summation order, so the fit is
/// bit-identical under any permutation of the input points. Axis signs
/// follow the convention that each axis's largest-magnitude entry is
/// positive.
pub fn fit_projection(points: &Matrix) -> Result<Projection> {
    let (n, d) = (points.rows(), points.cols());
    if n < 3 {
        return Err(Error::Domain(format!("plane fit needs at least 3 points, got {n}")));
    }
    if d < 2 {
        return Err(Error::Domain(format!("plane fit needs at least 2 dimensions, got {d}")));
    }
    let center: Vec<f64> = (0..d)
        .map(|j| stable_sum((0..n).map(|i| points.get(i, j)).collect()) / n as f64)
        .collect();
    let mut cov = Matrix::zeros(d, d);
    for j in 0..d {
        for k in j..d {
            let terms: Vec<f64> = (0..n)
                .map(|i| (points.get(i, j) - center[j]) * (points.get(i, k) - center[k]))
                .collect();
            let c = stable_sum(terms) / (n as f64 - 1.0);
            cov.set(j, k, c);
            cov.set(k, j, c);
        }
    }
    let (eigenvalues, vectors) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    if !(eigenvalues[order[0]] > 1e-24) {
        return Err(Error::Domain("point cloud has no variance in any direction".into()));
    }
    let mut axes: Vec<Vec<f64>> = (0..2)
        .map(|r| (0..d).map(|k| vectors.get(k, order[r])).collect())
        .collect();
    for axis in &mut axes {
        let lead = axis
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("non-empty axis")
            .0;
        if axis[lead] < 0.0 {
            for x in axis.iter_mut() {
                *x = -*x;
            }
        }
    }
    Ok(Projection {
        center,
        explained_variance: [
            eigenvalues[order[0]].max(0.0),
            eigenvalues[order[1]].max(0.0),
        ],
        axes: [axes.remove(0), axes.remove(0)],
    })
}

/// Coordinates of `point` in the plane frame.
pub fn project(projection: &Projection, point: &[f64]) -> (f64, f64) {
    assert_eq!(point.len(), projection.center.len(), "dimension mismatch");
    let mut u = 0.0;
    let mut v = 0.0;
    for k in 0..point.len() {
        let c = point[k] - projection.center[k];
        u += c * projection.axes[0][k];
        v += c * projection.axes[1][k];
    }
    (u, v)
}

/// Lift plane coordinates back to design space.
pub fn lift(projection: &Projection, u: f64, v: f64) -> Vec<f64> {
    projection
        .center
        .iter()
        .zip(projection.axes[0].iter().zip(&projection.axes[1]))
        .map(|(&c, (&a1, &a2))| c + u * a1 + v * a2)
        .collect()
}

/// Evaluate the full mixture density on a planar slice: each grid point
/// (u, v) lifts to design space and scores the complete d-dimensional
/// density there. Bounds fit `markers` plus `extent` with a 15% margin
/// on each side.
pub fn density_grid(
    params: &MixtureParams,
    projection: &Projection,
    resolution: usize,
    markers: &[(f64, f64)],
    extent: &[(f64, f64)],
) -> Result<DensityGrid> {
    if resolution < 16 {
        return Err(Error::Domain(format!("grid resolution must be at least 16, got {resolution}")));
    }
    params.validate()?;
    let all: Vec<(f64, f64)> = markers.iter().chain(extent).copied().collect();
    if all.is_empty() {
        return Err(Error::Domain("density grid needs markers or extent points for bounds".into()));
    }
    let bound = |pick: fn(&(f64, f64)) -> f64| -> (f64, f64) {
        let lo = all.iter().map(pick).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(pick).fold(f64::NEG_INFINITY, f64::max);
        let span = if hi - lo > 1e-9 { hi - lo } else { 2.0 };
        (lo - 0.15 * span, hi + 0.15 * span)
    };
    let u_range = bound(|p| p.0);
    let v_range = bound(|p| p.1);

    let step = |range: (f64, f64), i: usize| {
        range.0 + (range.1 - range.0) * i as f64 / (resolution - 1) as f64
    };
    let mut values = Matrix::zeros(resolution, resolution);
    let rows: Vec<Result<Vec<f64>>> = (0..resolution)
        .into_par_iter()
        .map(|r| {
            let v = step(v_range, r);
            (0..resolution)
                .map(|c| {
                    let u = step(u_range, c);
                    let point = lift(projection, u, v);
                    Ok(log_density(params, &point)?.exp())
                })
                .collect()
        })
        .collect();
    for (r, row) in rows.into_iter().enumerate() {
        values.row_mut(r).copy_from_slice(&row?);
    }
    Ok(DensityGrid {
        u_range,
        v_range,
        resolution,
        values,
        markers: markers.to_vec(),
    })
}

impl DensityGrid {
    pub fn u_at(&self, col: usize) -> f64 {
        self.u_range.0 + (self.u_range.1 - self.u_range.0) * col as f64 / (self.resolution - 1) as f64
    }

    pub fn v_at(&self, row: usize) -> f64 {
        self.v_range.0 + (self.v_range.1 - self.v_range.0) * row as f64 / (self.resolution - 1) as f64
    }

    /// (row, col) of the largest density value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut top = f64::NEG_INFINITY;
        for r in 0..self.resolution {
            for c in 0..self.resolution {
                let v = self.values.get(r, c);
                if v > top {
                    top = v;
                    best = (r, c);
                }
            }
        }
        best
    }
}

/// Write the grid as CSV: a comment line with ranges/resolution, marker
/// comment lines in rank order, then `u,v,density` rows (u fastest).
pub fn emit_grid(grid: &DensityGrid, path: &Path) -> Result<()> {
    let mut out = format!(
        "# u:{:.9}:{:.9} v:{:.9}:{:.9} resolution:{}\n",
        grid.u_range.0, grid.u_range.1, grid.v_range.0, grid.v_range.1, grid.resolution
    );
    for (i, (u, v)) in grid.markers.iter().enumerate() {
        out.push_str(&format!("# mode A{} {u:.9} {v:.9}\n", i + 1));
    }
    out.push_str("u,v,density\n");
    for r in 0..grid.resolution {
        for c in 0..grid.resolution {
            out.push_str(&format!(
                "{:.9},{:.9},{:.9e}\n",
                grid.u_at(c),
                grid.v_at(r),
                grid.values.get(r, c)
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parse a grid CSV back; inverse of [`emit_grid`] up to the printed
/// precision.
pub fn read_grid(path: &Path) -> Result<DensityGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::format(path, 0, "empty grid file"))?;
    let parse_head = || -> Option<((f64, f64), (f64, f64), usize)> {
        let mut u = None;
        let mut v = None;
        let mut res = None;
        for tok in head.trim_start_matches('#').split_whitespace() {
            let mut it = tok.split(':');
            match it.next()? {
                "u" => u = Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?)),
                "v" => v = Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?)),
                "resolution" => res = Some(it.next()?.parse().ok()?),
                _ => return None,
            }
        }
        Some((u?, v?, res?))
    };
    let (u_range, v_range, resolution) = parse_head()
        .ok_or_else(|| Error::format(path, 0, "malformed grid header line"))?;
    let mut markers = Vec::new();
    let mut values = Matrix::zeros(resolution, resolution);
    let mut idx = 0usize;
    for line in lines {
        if let Some(rest) = line.strip_prefix("# mode ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() == 3 {
                let u: f64 = parts[1]
                    .parse()
                    .map_err(|e| Error::format(path, 0, format!("bad marker: {e}")))?;
                let v: f64 = parts[2]
                    .parse()
                    .map_err(|e| Error::format(path, 0, format!("bad marker: {e}")))?;
                markers.push((u, v));
            }
            continue;
        }
        if line.starts_with('#') || line == "u,v,density" || line.trim().is_empty() {
            continue;
        }
        let density = line
            .rsplit(',')
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::format(path, 0, format!("bad grid row: {line}")))?;
        if idx >= resolution * resolution {
            return Err(Error::format(path, 0, "more grid rows than resolution²"));
        }
        values.data_mut()[idx] = density;
        idx += 1;
    }
    if idx != resolution * resolution {
        return Err(Error::format(
            path,
            0,
            format!("{idx} grid rows, expected {}", resolution * resolution),
        ));
    }
    Ok(DensityGrid {
        u_range,
        v_range,
        resolution,
        values,
        markers,
    })
}

fn heat_color(t: f64) -> String {
    // Three-stop gradient: near-black blue, magenta, yellow.
    let stops = [(13, 8, 66), (183, 55, 121), (252, 255, 164)];
    let t = t.clamp(0.0, 1.0) * 2.0;
    let (a, b, frac) = if t <= 1.0 {
        (stops[0], stops[1], t)
    } else {
        (stops[1], stops[2], t - 1.0)
    };
    let mix = |x: i32, y: i32| (x as f64 + (y as f64 - x as f64) * frac).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Dependency-free SVG heat map of the grid with labelled mode markers.
pub fn emit_svg(grid: &DensityGrid, path: &Path) -> Result<()> {
    let size = 560.0;
    let pad = 40.0;
    let plot = size - 2.0 * pad;
    let res = grid.resolution;
    let cell = plot / res as f64;
    let top = grid
        .values
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1e-300);
    let to_x = |u: f64| pad + (u - grid.u_range.0) / (grid.u_range.1 - grid.u_range.0) * plot;
    let to_y = |v: f64| size - pad - (v - grid.v_range.0) / (grid.v_range.1 - grid.v_range.0) * plot;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\">\n<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>\n"
    );
    for r in 0..res {
        for c in 0..res {
            let color = heat_color(grid.values.get(r, c) / top);
            let x = to_x(grid.u_at(c)) - cell / 2.0;
            let y = to_y(grid.v_at(r)) - cell / 2.0;
            svg.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>\n",
                cell + 0.5,
                cell + 0.5
            ));
        }
    }
    for (i, &(u, v)) in grid.markers.iter().enumerate() {
        let (x, y) = (to_x(u), to_y(v));
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"none\" stroke=\"white\" stroke-width=\"2\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" fill=\"white\" font-family=\"sans-serif\" font-size=\"16\">A{}</text>\n",
            x + 8.0,
            y - 8.0,
            i + 1
        ));
    }
    svg.push_str(&format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{plot}\" height=\"{plot}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"14\">u</text>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"14\">v</text>\n</svg>\n",
        size / 2.0,
        size - 10.0,
        12.0,
        size / 2.0
    ));
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn jacobi_recovers_known_eigenpairs() {
        let a = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let (mut vals, _) = jacobi_eigen(&a);
        vals.sort_by(|x, y| x.total_cmp(y));
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);

        let mut rng = Rng::seeded(12);
        let raw = Matrix::from_fn(5, 5, |_, _| rng.range(-1.0, 1.0));
        let sym = Matrix::from_fn(5, 5, |i, j| (raw.get(i, j) + raw.get(j, i)) / 2.0);
        let (vals, vecs) = jacobi_eigen(&sym);
        for e in 0..5 {
            for r in 0..5 {
                let av: f64 = (0..5).map(|k| sym.get(r, k) * vecs.get(k, e)).sum();
                assert!((av - vals[e] * vecs.get(r, e)).abs() < 1e-10, "A·v ≠ λ·v");
            }
        }
        for i in 0..5 {
            for j in 0..5 {
                let col_i: Vec<f64> = (0..5).map(|k| vecs.get(k, i)).collect();
                let col_j: Vec<f64> = (0..5).map(|k| vecs.get(k, j)).collect();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&col_i, &col_j) - expect).abs() < 1e-10);
            }
        }
    }

    fn random_cloud(n: usize, seed: u64) -> Matrix {
        let mut rng = Rng::seeded(seed);
        // Anisotropic so the top-2 plane is well defined.
        let scales = [2.0, 1.3, 0.7, 0.4, 0.2];
        Matrix::from_fn(n, 5, |_, j| rng.normal() * scales[j] + j as f64)
    }

    #[test]
    fn axes_are_orthonormal_and_variance_descends() {
        let p = fit_projection(&random_cloud(500, 31)).unwrap();
        assert!((dot(&p.axes[0], &p.axes[0]) - 1.0).abs() < 1e-10);
        assert!((dot(&p.axes[1], &p.axes[1]) - 1.0).abs() < 1e-10);
        assert!(dot(&p.axes[0], &p.axes[1]).abs() < 1e-10);
        assert!(p.explained_variance[0] >= p.explained_variance[1]);
        assert!(p.explained_variance[1] >= 0.0);
        for axis in &p.axes {
            let lead = axis
                .iter()
                .cloned()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap();
            assert!(lead > 0.0, "sign convention violated");
        }
    }

    #[test]
    fn planar_data_reconstructs_exactly() {
        let mut rng = Rng::seeded(78);
        let e1 = [0.5, 0.5, 0.5, 0.5, 0.0];
        let e2 = [0.5, -0.5, 0.5, -0.5, 0.0];
        let base = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut data = Vec::new();
        for _ in 0..40 {
            let (u, v) = (rng.range(-2.0, 2.0), rng.range(-2.0, 2.0));
            for j in 0..5 {
                data.push(base[j] + u * e1[j] + v * e2[j]);
            }
        }
        let points = Matrix::from_vec(40, 5, data);
        let p = fit_projection(&points).unwrap();
        for i in 0..40 {
            let (u, v) = project(&p, points.row(i));
            let back = lift(&p, u, v);
            let err: f64 = back
                .iter()
                .zip(points.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-9, "reconstruction error {err}");
        }
    }

    #[test]
    fn center_projects_to_origin() {
        let points = random_cloud(100, 5);
        let p = fit_projection(&points).unwrap();
        let (u, v) = project(&p, &p.center);
        assert_eq!(u, 0.0);
        assert_eq!(v, 0.0);
        let mut shifted = p.center.clone();
        for (s, a) in shifted.iter_mut().zip(&p.axes[0]) {
            *s += a;
        }
        let (u, v) = project(&p, &shifted);
        assert!((u - 1.0).abs() < 1e-12 && v.abs() < 1e-12);
    }

    #[test]
    fn isotropic_cloud_has_balanced_variances() {
        let mut rng = Rng::seeded(93);
        let points = Matrix::from_fn(10_000, 5, |_, _| rng.normal());
        let p = fit_projection(&points).unwrap();
        let ratio = p.explained_variance[0] / p.explained_variance[1];
        assert!(ratio < 1.1, "variances differ by {ratio}");
    }

    #[test]
    fn projection_is_a_contraction() {
        let points = random_cloud(60, 15);
        let p = fit_projection(&points).unwrap();
        let mut rng = Rng::seeded(16);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.range(-5.0, 5.0)).collect();
            let (u, v) = project(&p, &x);
            let dist: f64 = x
                .iter()
                .zip(&p.center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!((u * u + v * v).sqrt() <= dist + 1e-12);
        }
    }

    #[test]
    fn fit_is_permutation_invariant() {
        let points = random_cloud(200, 44);
        let p1 = fit_projection(&points).unwrap();
        let mut order: Vec<usize> = (0..200).collect();
        Rng::seeded(1).shuffle(&mut order);
        let p2 = fit_projection(&points.select_rows(&order)).unwrap();
        assert_eq!(p1, p2, "permuting the cloud changed the fit");
    }

    #[test]
    fn fit_is_translation_invariant() {
        let points = random_cloud(150, 3);
        let p1 = fit_projection(&points).unwrap();
        let shifted = Matrix::from_fn(150, 5, |i, j| points.get(i, j) + 7.25);
        let p2 = fit_projection(&shifted).unwrap();
        let mut rng = Rng::seeded(4);
        for _ in 0..30 {
            let x: Vec<f64> = (0..5).map(|_| rng.range(-3.0, 3.0)).collect();
            let xs: Vec<f64> = x.iter().map(|v| v + 7.25).collect();
            let (u1, v1) = project(&p1, &x);
            let (u2, v2) = project(&p2, &xs);
            assert!((u1 - u2).abs() < 1e-10 && (v1 - v2).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(fit_projection(&Matrix::zeros(2, 5)).is_err());
        let constant = Matrix::from_fn(10, 5, |_, _| 3.0);
        assert!(fit_projection(&constant).is_err());
    }

    fn plane_through_origin() -> Projection {
        Projection {
            center: vec![0.0; 5],
            axes: [
                vec![1.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0, 0.0],
            ],
            explained_variance: [1.0, 1.0],
        }
    }

    #[test]
    fn grid_peaks_at_centered_gaussian() {
        let params = MixtureParams {
            mixing: vec![1.0],
            means: Matrix::zeros(1, 5),
            devs: Matrix::from_fn(1, 5, |_, _| 0.5),
        };
        let proj = plane_through_origin();
        let grid = density_grid(&params, &proj, 33, &[], &[(-1.0, -1.0), (1.0, 1.0)]).unwrap();
        let (r, c) = grid.argmax();
        assert!(grid.u_at(c).abs() <= (grid.u_range.1 - grid.u_range.0) / 32.0);
        assert!(grid.v_at(r).abs() <= (grid.v_range.1 - grid.v_range.0) / 32.0);
        assert!(grid.values.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn grid_max_lands_on_in_plane_mode() {
        // Highest mode placed exactly on the slice plane.
        let params = MixtureParams {
            mixing: vec![0.7, 0.3],
            means: Matrix::from_vec(
                2,
                5,
                vec![0.4, -0.3, 0.0, 0.0, 0.0, -0.5, 0.5, 0.9, 0.9, 0.9],
            ),
            devs: Matrix::from_fn(2, 5, |_, _| 0.1),
        };
        let proj = plane_through_origin();
        let markers = [(0.4, -0.3)];
        let grid = density_grid(&params, &proj, 65, &markers, &[(-1.0, -1.0), (1.0, 1.0)]).unwrap();
        let (r, c) = grid.argmax();
        let cell_u = (grid.u_range.1 - grid.u_range.0) / 64.0;
        let cell_v = (grid.v_range.1 - grid.v_range.0) / 64.0;
        assert!((grid.u_at(c) - 0.4).abs() <= cell_u, "u off by {}", grid.u_at(c) - 0.4);
        assert!((grid.v_at(r) + 0.3).abs() <= cell_v, "v off by {}", grid.v_at(r) + 0.3);
    }

    #[test]
    fn grid_bounds_cover_markers_with_margin() {
        let params = MixtureParams {
            mixing: vec![1.0],
            means: Matrix::zeros(1, 5),
            devs: Matrix::from_fn(1, 5, |_, _| 0.5),
        };
        let proj = plane_through_origin();
        let markers = [(-0.6, 0.2), (0.8, -0.5)];
        let grid = density_grid(&params, &proj, 16, &markers, &[]).unwrap();
        let u_span = 0.8 - -0.6;
        let v_span = 0.2 - -0.5;
        assert!(grid.u_range.0 <= -0.6 - 0.1 * u_span);
        assert!(grid.u_range.1 >= 0.8 + 0.1 * u_span);
        assert!(grid.v_range.0 <= -0.5 - 0.1 * v_span);
        assert!(grid.v_range.1 >= 0.2 + 0.1 * v_span);
        assert!(density_grid(&params, &proj, 8, &markers, &[]).is_err());
    }

    #[test]
    fn grid_csv_round_trip_and_svg() {
        let params = MixtureParams {
            mixing: vec![1.0],
            means: Matrix::zeros(1, 5),
            devs: Matrix::from_fn(1, 5, |_, _| 0.4),
        };
        let proj = plane_through_origin();
        let grid = density_grid(&params, &proj, 16, &[(0.0, 0.0)], &[(-1.0, -1.0), (1.0, 1.0)])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("grid.csv");
        emit_grid(&grid, &csv).unwrap();
        let text = fs::read_to_string(&csv).unwrap();
        let data_rows = text
            .lines()
            .filter(|l| !l.starts_with('#') && *l != "u,v,density" && !l.trim().is_empty())
            .count();
        assert_eq!(data_rows, 256);
        assert!(text.contains("# mode A1"));

        let back = read_grid(&csv).unwrap();
        assert_eq!(back.resolution, 16);
        assert_eq!(back.markers.len(), 1);
        for (a, b) in back.values.data().iter().zip(grid.values.data()) {
            let rel = (a - b).abs() / b.abs().max(1e-12);
            assert!(rel < 1e-8, "{a} vs {b}");
        }

        let svg = dir.path().join("grid.svg");
        emit_svg(&grid, &svg).unwrap();
        let s = fs::read_to_string(&svg).unwrap();
        assert!(s.starts_with("<svg"));
        assert!(s.contains(">A1<"), "marker label missing");
        assert_eq!(s.matches("<rect").count(), 256 + 2);
    }
}
