//! Synthesis and verification of quadratic Lyapunov functions that certify
//! linear convergence rates of fixed-step first-order methods on
//! `L`-smooth, `mu`-strongly convex functions.
//!
//! The pipeline is:
//!
//! 1. describe a method ([`MethodSpec`]) and a function class ([`FunctionClass`]),
//! 2. roll the method forward on symbolic row-vector bases ([`symbolic`]),
//! 3. combine the interpolation conditions of the class ([`interp`]) with a
//!    quadratic Lyapunov candidate into a small LMI feasibility problem
//!    ([`assembly`]),
//! 4. solve it with a conic backend and bisect over the rate ([`solver`]),
//! 5. check the resulting certificate algebraically and on simulated
//!    trajectories ([`verify`]).
//!
//! Variants for exact line searches and scheduled restarts live in
//! [`variants`].

pub mod assembly;
pub mod certificate;
mod error;
pub mod interp;
pub mod model;
pub mod solver;
pub mod symbolic;
pub mod trajectory;
pub mod variants;
pub mod verify;

// Links the system OpenBLAS used by the SDP backend.
extern crate openblas_src;

pub use error::{CoeffKind, Error, Result};
pub use model::{make_preset, FunctionClass, MethodSpec, Preset};
pub use trajectory::Trajectory;
