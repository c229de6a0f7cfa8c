//! Snapshot compressive imaging toolkit.
//!
//! Simulates coded 2D snapshots of 3D data-cubes (CACTI video and CASSI
//! spectral forward models), reconstructs the cube with projection, ADMM and
//! patch-based solvers, and checks compression-based recovery bounds by
//! exhaustive search at small scale.

pub mod cli;
pub mod cube;
pub mod error;
pub mod eval;
pub mod io;
pub mod masks;
pub mod operator;
pub mod patch;
pub mod shear;
pub mod solvers;
pub mod theory;

pub use cube::DataCube;
pub use error::{Result, SciError};
pub use masks::{make_masks, MaskKind, MaskStack};
pub use operator::{build_dense_phi, Measurement, NoiseModel, SensingMode, SensingOperator};
pub use shear::{shear_cube, unshear_cube};
