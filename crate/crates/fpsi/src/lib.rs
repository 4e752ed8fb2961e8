//! Energy-auditing Lie splitting solver for a Navier-Stokes fluid coupled through a
//! reticular plate to a regularized Biot poro(visco)elastic layer, posed on fixed boxes.
//!
//! Geometric kernels (`mesh`, `kinematics`, `regularize`, `quadrature`, `basis`) are
//! generic over [`Real`]; assembly, solvers and energy audits run in `f64`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod config;
pub mod coupled;
pub mod driver;
pub mod energy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod io;
pub mod kinematics;
pub mod mesh;
pub mod plate;
pub mod quadrature;
pub mod regularize;
pub mod scalar;
pub mod sparse;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BoxGrid = mesh::BoxGrid<f64>;
pub type PlateGrid = mesh::PlateGrid<f64>;
pub type Grids = mesh::Grids<f64>;
pub type GridSpec = mesh::GridSpec<f64>;
pub type MollifierKernel = regularize::MollifierKernel<f64>;
pub type RegularizedGeometry = regularize::RegularizedGeometry<f64>;
pub type ExtendedField = regularize::ExtendedField<f64>;
pub type InterfaceFrame = kinematics::InterfaceFrame<f64>;
pub type BiotGeometryEval = kinematics::BiotGeometryEval<f64>;
pub type PlateGeometryEval = kinematics::PlateGeometryEval<f64>;

/// Size the global rayon pool (first call wins) and the sparse solver's parallelism.
/// One thread makes every run bitwise reproducible.
pub fn set_threads(threads: usize) {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    faer::set_global_parallelism(if threads <= 1 { faer::Par::Seq } else { faer::Par::rayon(threads) });
}
