//! Probability-density networks for multivalued inverse design of
//! layered acoustic metastructures.
//!
//! A duct carrying a sequence of cylindrical constrictions filters
//! sound; its transmission spectrum follows analytically from a
//! transfer-matrix product ([`duct`]). The inverse problem, finding
//! layer radii that produce a requested spectrum, is multivalued:
//! reversing a structure (and often rearranging it more subtly) leaves
//! the spectrum unchanged, so a regressor trained to answer with one
//! structure averages the branches and answers with none of them.
//!
//! The crate's answer is a density model: a dense net ([`net`]) maps a
//! spectrum to a Gaussian mixture over normalized designs ([`mdn`]),
//! mean-shift ascent extracts every mode of that mixture ([`modes`]),
//! and each mode is a candidate structure that the forward solver can
//! verify independently. A plane projection of the design space
//! ([`pca`]) makes the multimodality visible, and two conventional
//! baselines ([`baselines`]) quantify what the density head buys.
//!
//! Datasets, trained weights, and every CSV the tools emit are
//! versioned, seeded, and byte-reproducible ([`dataset`], [`models`]).
//! The `pdn` binary ([`cli`], [`config`]) chains the pieces:
//! `gen-data`, `train`, `design`, `verify`, `compare`.
//!
//! Each major capability has a runnable demonstration under
//! `examples/`:
//!
//! - `forward_spectrum`: the analytic solver and its closed-form checks
//! - `generate_dataset`: seeded corpus generation and persistence
//! - `toy_multivalued`: both roots of y = x^2 recovered from data
//! - `mode_seeking`: mean-shift ascent on known mixtures
//! - `inverse_design`: train, design, verify on a small corpus
//! - `pca_density_map`: projecting a mixture onto its design plane
//! - `compare_models`: density model against direct and tandem nets
//!
//! ```
//! use pdn::duct::{transmission, FreqGrid, Geometry, Medium, Structure};
//!
//! let geometry = Geometry::default();
//! let open = Structure::new(vec![geometry.tube_radius; 5], &geometry)?;
//! let spectrum = transmission(&open, &FreqGrid::standard(), &geometry, &Medium::default())?;
//! assert!(spectrum.values().iter().all(|&t| (t - 1.0).abs() < 1e-12));
//! # Ok::<(), pdn::Error>(())
//! ```

pub mod baselines;
mod bytes;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod duct;
pub mod error;
pub mod mdn;
pub mod models;
pub mod modes;
pub mod net;
pub mod pca;
pub mod rng;
pub mod target;

pub use error::{Error, Result};
