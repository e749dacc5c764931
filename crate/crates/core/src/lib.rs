//! Discrete Euler-Poincare integrators on SO(3).
//!
//! The crate builds discrete Lagrangians on the rotation group, reduces them by
//! the isotropy subgroup of an anchor vector, and steps the resulting reduced
//! equations on `so(3)* x V`. The heavy top and the free rigid body ship as
//! concrete systems, together with Poisson-structure checks and a continuous-time
//! reference for convergence studies.

pub mod continuum;
pub mod error;
pub mod lagrangian;
pub mod lie;
pub mod poisson;
pub mod representation;
pub mod sample;
pub mod stepper;
pub mod systems;

pub use error::{Error, Result};
pub use lagrangian::Side;
pub use lie::So3;
pub use representation::{RepKind, Representation};
pub use stepper::{NewtonConfig, ReducedState, Trajectory};
