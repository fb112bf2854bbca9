//! Hemispheroidal parameterization of simply connected open triangle meshes
//! and their expansion in an orthonormal harmonic basis on the hemispheroid.

pub mod area;
pub mod balanced;
pub mod cli;
pub mod conformal;
pub mod error;
pub mod fem;
pub mod harmonics;
pub mod mesh;
pub mod metrics;
pub mod optimize;
pub mod projection;
pub mod qc;
pub mod registration;
pub mod shapes;
pub mod sparse;
pub mod tutte;

pub use error::{Error, Result};
