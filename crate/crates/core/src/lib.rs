//! flowharnack: a numerical laboratory for abstract geometric flows on the
//! conformal 2-torus.
//!
//! The crate evolves metrics by ∂g/∂t = -2α, solves the conjugate heat
//! equation backward along the resulting trajectory, and verifies the
//! differential Harnack inequality, entropy monotonicity, reduced-geometry
//! bounds and kernel estimates at desk scale.

pub mod alpha;
pub mod conjugate;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod harnack;

pub use error::{FlowError, Result};
