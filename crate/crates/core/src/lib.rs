//! Two-layer conditional random field decision fusion.
//!
//! Pixel-level and region-level classifier posteriors are fused into one
//! labeling by minimizing a single energy over a graph holding every pixel
//! and every region as nodes. Pixel neighbours, adjacent regions, and each
//! pixel with its enclosing region are joined by Potts edges; the energy is
//! minimized with sequential tree-reweighted message passing (TRW-S).
//!
//! Typical flow: [`segmentation::segment`] the image, pool pixel posteriors
//! per region, build the [`graph::FusionGraph`], [`energy::assemble`] the
//! model, then [`solver::trws_solve`] and score with [`metrics`].

pub mod config;
pub mod energy;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod segmentation;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
