//! Cost-driven state representation learning for infinite-horizon
//! time-invariant LQG control.
//!
//! The crate simulates a partially observable linear system, learns a latent
//! representation and latent dynamics purely from scalar costs (explicitly by
//! least squares, or implicitly by future-cost prediction with coordinate
//! alignment), plans by certainty equivalence, and measures the suboptimality
//! gap against the analytically optimal controller.

pub mod control_eval;
pub mod diagnostics;
pub mod error;
pub mod latent_id;
pub mod lqg_model;
pub mod matstat;
pub mod model_io;
pub mod pipeline;
pub mod repr_learn;
pub mod serde_mat;
pub mod simulate;

pub use error::{Error, Result};
