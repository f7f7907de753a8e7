//! Mean-shift ascent on Gaussian mixtures: convergence to the nearest
//! peak, merging of overlapping components, and ranked mode reports.
//!
//! Run with: cargo run --example mode_seeking

use pdn::mdn::{DesignScaler, MixtureParams};
use pdn::modes::{ascend, find_modes, SeekerConfig};
use pdn::net::Matrix;

fn mixture(means: &[[f64; 2]], devs: f64, mixing: &[f64]) -> MixtureParams {
    let m = means.len();
    MixtureParams {
        mixing: mixing.to_vec(),
        means: Matrix::from_vec(m, 2, means.iter().flatten().copied().collect()),
        devs: Matrix::from_vec(m, 2, vec![devs; m * 2]),
    }
}

fn main() -> pdn::Result<()> {
    let config = SeekerConfig::default();

    // Two well-separated peaks: ascent lands on whichever is nearest.
    let pair = mixture(&[[-0.5, -0.5], [0.5, 0.5]], 0.1, &[0.5, 0.5]);
    for start in [[-0.9, -0.1], [0.8, 0.2]] {
        let a = ascend(&pair, &start, &config)?;
        println!(
            "start {:?} -> mode ({:+.4}, {:+.4}) in {} iterations",
            start, a.location[0], a.location[1], a.iterations
        );
    }

    // Components closer than their spread form ONE peak between them;
    // the seeker reports the merged summit, not the component means.
    let overlapping = mixture(&[[-0.05, 0.0], [0.05, 0.0]], 0.2, &[0.5, 0.5]);
    let a = ascend(&overlapping, &[0.3, 0.0], &config)?;
    println!(
        "overlapping pair -> single summit at ({:+.4}, {:+.4})",
        a.location[0], a.location[1]
    );

    // find_modes starts one ascent per component, merges arrivals, and
    // ranks survivors by density.
    let scaler = DesignScaler::new(vec![-1.0, -1.0], vec![1.0, 1.0])?;
    let skewed = mixture(&[[-0.5, -0.5], [0.5, 0.5], [0.45, 0.45]], 0.1, &[0.2, 0.4, 0.4]);
    let modes = find_modes(&skewed, &scaler, &config)?;
    println!("\n3 components, {} modes (two overlap):", modes.len());
    for mode in &modes {
        println!(
            "  A{}: ({:+.3}, {:+.3}), density {:.3}, from components {:?}",
            mode.rank, mode.location[0], mode.location[1], mode.density, mode.basin_components
        );
    }
    Ok(())
}
