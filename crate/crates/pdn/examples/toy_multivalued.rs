//! The minimal multivalued inverse problem: learn x from y = x²,
//! which has two answers (±√y), and recover both as density modes.
//!
//! Run with: cargo run --release --example toy_multivalued

use pdn::dataset::{Dataset, LabelledPair, Provenance};
use pdn::duct::{FreqGrid, Geometry, Medium, Spectrum, Structure};
use pdn::models::{PdnModel, TrainConfig};
use pdn::modes::SeekerConfig;
use pdn::rng::Rng;

fn main() -> pdn::Result<()> {
    // A one-layer geometry whose radius range maps to design units
    // [-1, 1], so the label IS the toy variable x.
    let geometry = Geometry {
        tube_radius: 3.0,
        layer_length: 0.02,
        layer_count: 1,
        radius_min: 1.0,
        radius_max: 3.0,
    };
    let grid = FreqGrid::new(vec![1000.0])?;

    let mut rng = Rng::seeded(42);
    let mut pairs = Vec::with_capacity(2000);
    for _ in 0..2000 {
        let x = rng.range(-1.0, 1.0);
        pairs.push(LabelledPair {
            structure: Structure::new(vec![x + 2.0], &geometry)?,
            spectrum: Spectrum::new(vec![x * x])?,
        });
    }
    let dataset = Dataset::from_pairs(
        geometry,
        Medium::default(),
        grid,
        Provenance::RandomContinuous { seed: 42 },
        pairs,
    )?;

    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 256,
        epochs: 400,
        hidden_widths: vec![64, 64],
        mixture_count: 5,
        seed: 7,
        ..TrainConfig::default()
    };
    let mut log = Vec::new();
    let mut model = PdnModel::new(&dataset, &config)?;
    model.train(&dataset, &config, &mut log)?;
    println!("trained {} epochs, final loss {:.4}", log.len(), log.last().unwrap().loss);

    let target = Spectrum::new(vec![0.25])?;
    let modes = model.design(&target, &SeekerConfig::default())?;
    println!("target y = 0.25, true answers x = +0.5 and -0.5");
    for mode in &modes {
        println!(
            "  mode A{}: x = {:+.4}, density {:.3}",
            mode.rank, mode.location[0], mode.density
        );
    }
    assert!(modes.len() >= 2, "expected both branches");
    Ok(())
}
