//! Analytic transmission of a layered duct: a worked spectrum, the
//! plane-wave validity limit, and the closed-form quarter-wave check.
//!
//! Run with: cargo run --example forward_spectrum

use pdn::duct::{transmission, FreqGrid, Geometry, Medium, Structure};

fn main() -> pdn::Result<()> {
    let geometry = Geometry::default();
    let medium = Medium::default();
    println!(
        "tube radius {:.1} mm, {} layers of {:.0} mm",
        geometry.tube_radius * 1000.0,
        geometry.layer_count,
        geometry.layer_length * 1000.0
    );
    println!("plane-wave model valid below {:.0} Hz", geometry.cutoff_hz(&medium));

    let radii = vec![0.0145, 0.00725, 0.0109, 0.0036, 0.0145];
    let structure = Structure::new(radii.clone(), &geometry)?;
    let grid = FreqGrid::standard();
    let spectrum = transmission(&structure, &grid, &geometry, &medium)?;
    let f = grid.frequencies();
    let v = spectrum.values();
    println!("\nstructure {:?} mm", radii.iter().map(|r| r * 1000.0).collect::<Vec<_>>());
    for k in (0..f.len()).step_by(25) {
        let bar = "#".repeat((v[k] * 40.0).round() as usize);
        println!("  {:>5.0} Hz  tau = {:.3}  {bar}", f[k], v[k]);
    }
    let (k_min, _) = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    println!("deepest dip: tau = {:.4} at {:.0} Hz", v[k_min], f[k_min]);

    // One half-radius constriction at its quarter-wave frequency has
    // tau = 4 / (s + 1/s)^2 with s the area ratio, here 4/(4.25)^2.
    let single = Geometry { layer_count: 1, ..geometry };
    let constriction = Structure::new(vec![geometry.tube_radius / 2.0], &single)?;
    let quarter = medium.sound_speed / (4.0 * geometry.layer_length);
    let tau = transmission(&constriction, &FreqGrid::new(vec![quarter])?, &single, &medium)?;
    println!(
        "\nquarter-wave check at {quarter} Hz: tau = {:.12} (exact 4/4.25^2 = {:.12})",
        tau.values()[0],
        4.0 / (4.25f64 * 4.25)
    );
    Ok(())
}
