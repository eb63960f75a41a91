//! Texture forensics toolkit.
//!
//! * [`image`]: raster type and PNG/PGM/PPM I/O.
//! * [`texture`]: gray-level co-occurrence contrast and the edit-robustness correlation.
//! * [`edit`]: resize, JPEG simulation, blur, noise and L0 smoothing.
//! * [`nn`]: small CPU neural-network toolkit with hand-written backward passes.
//! * [`gram`]: Gram-matrix texture features and the Gram-Net classifier.
//! * [`synth`]: power-law texture datasets with a controlled contrast gap.
//! * [`dataset`]: labelled image manifests.
//! * [`probes`]: finite-difference gradient checks over every differentiable op.
//! * [`train`]: training loop, checkpoints and the robustness evaluation grid.

pub mod dataset;
pub mod edit;
mod fft;
pub mod gram;
pub mod image;
pub mod nn;
pub mod par;
pub mod probes;
pub mod synth;
pub mod texture;
pub mod train;
