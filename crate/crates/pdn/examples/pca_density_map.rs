//! Flatten a 5-dimensional design density onto its two top-variance
//! axes and render the landscape as CSV plus an SVG heat map.
//!
//! Run with: cargo run --example pca_density_map

use pdn::mdn::{sample, DesignScaler, MixtureParams};
use pdn::modes::{find_modes, SeekerConfig};
use pdn::net::Matrix;
use pdn::pca::{density_grid, emit_grid, emit_svg, fit_projection, project};

fn main() -> pdn::Result<()> {
    // A mirrored pair of components, the shape reversal symmetry
    // produces in real design densities.
    let mu = [0.6, 0.2, -0.4, -0.7, 0.1];
    let rev: Vec<f64> = mu.iter().rev().copied().collect();
    let params = MixtureParams {
        mixing: vec![0.55, 0.45],
        means: Matrix::from_vec(2, 5, mu.iter().copied().chain(rev).collect()),
        devs: Matrix::from_vec(2, 5, vec![0.18; 10]),
    };

    let scaler = DesignScaler::new(vec![-1.0; 5], vec![1.0; 5])?;
    let draws = sample(&params, 4000, 1, &scaler);
    let mut points = Matrix::zeros(draws.len(), 5);
    for (i, s) in draws.iter().enumerate() {
        points.row_mut(i).copy_from_slice(&scaler.to_design(s));
    }
    let projection = fit_projection(&points)?;
    println!(
        "plane explains variances {:.3} and {:.3}",
        projection.explained_variance[0], projection.explained_variance[1]
    );

    let modes = find_modes(&params, &scaler, &SeekerConfig::default())?;
    let markers: Vec<(f64, f64)> = modes.iter().map(|m| project(&projection, &m.location)).collect();
    for (mode, (u, v)) in modes.iter().zip(&markers) {
        println!("  A{} at (u, v) = ({u:+.3}, {v:+.3}), density {:.3}", mode.rank, mode.density);
    }

    let map = density_grid(&params, &projection, 64, &markers, &[])?;
    let (row, col) = map.argmax();
    println!("grid peak at (u, v) = ({:+.3}, {:+.3})", map.u_at(col), map.v_at(row));

    let dir = std::env::temp_dir().join("pdn_example_pca");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let csv = dir.join("density.csv");
    emit_grid(&map, &csv)?;
    emit_svg(&map, &csv.with_extension("svg"))?;
    println!("wrote {} and the .svg next to it", csv.display());
    Ok(())
}
