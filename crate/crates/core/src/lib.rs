//! Planning engine for single-UAV item collection among box obstacles.
//!
//! A Lin-Kernighan tour fixes the visiting order, a DDPG-trained
//! goal-conditioned controller flies the legs, and a cross-entropy MPC
//! serves as the classical baseline. Every scheme runs on the same
//! discrete-time environment and is checked by the same verifier.

pub mod ddpg;
pub mod env;
pub mod error;
pub mod geometry;
pub mod mission;
pub mod mpc;
pub mod nn;
pub mod tsp;

pub use error::{Error, Result};
pub use geometry::{Aabb, Vec3};
