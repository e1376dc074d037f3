//! Fluxonium readout modeling: spectra and dressed-state labeling, dispersive
//! shifts and TLS boundaries, MIST maps, resonator dynamics with synchronized
//! flux compensation, single-shot readout statistics and CMA-ES tuning.

pub mod cli;
pub mod dispersive;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod mist;
pub mod optimize;
pub mod readout;
pub mod spectrum;

pub use error::{FluxError, Result};
pub use num_complex::Complex64;
