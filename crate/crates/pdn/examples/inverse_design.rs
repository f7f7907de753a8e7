//! End to end, library only: generate data, train a density model,
//! ask for structures matching a held-out spectrum, and check every
//! candidate against the analytic solver.
//!
//! Run with: cargo run --release --example inverse_design

use pdn::dataset::generate_grid;
use pdn::duct::{spectrum_error, transmission, FreqGrid, Geometry, Medium, Structure};
use pdn::models::{PdnModel, TrainConfig};
use pdn::modes::SeekerConfig;

fn main() -> pdn::Result<()> {
    let geometry = Geometry::default();
    let medium = Medium::default();
    let grid = FreqGrid::standard();
    let dataset = generate_grid(3, &geometry, &medium, &grid, false)?;
    println!("training on {} grid structures", dataset.len());

    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 64,
        epochs: 150,
        hidden_widths: vec![64, 128],
        mixture_count: 10,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut model = PdnModel::new(&dataset, &config)?;
    let mut log = Vec::new();
    model.train(&dataset, &config, &mut log)?;
    println!("final loss {:.3} after {} epochs", log.last().unwrap().loss, log.len());

    // The target comes from a structure the model never saw, and its
    // reversal is an equally valid answer by reciprocity.
    let truth = Structure::new(vec![0.0125, 0.004, 0.009, 0.0138, 0.006], &geometry)?;
    let target = transmission(&truth, &grid, &geometry, &medium)?;
    let modes = model.design(&target, &SeekerConfig::default())?;
    println!("\n{} candidates for the held-out target:", modes.len());
    let mm = |radii: &[f64]| {
        radii.iter().map(|r| format!("{:.2}", r * 1000.0)).collect::<Vec<_>>().join(", ")
    };
    println!("  truth    [{}] mm (or reversed)", mm(truth.radii()));
    for mode in &modes {
        let candidate = Structure::new(mode.radii.clone(), &geometry)?;
        let achieved = transmission(&candidate, &grid, &geometry, &medium)?;
        println!(
            "  A{}       [{}] mm, oracle mean abs error {:.4}",
            mode.rank,
            mm(&mode.radii),
            spectrum_error(&achieved, &target)?
        );
    }
    Ok(())
}
