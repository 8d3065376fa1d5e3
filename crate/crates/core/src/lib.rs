//! Learnable continuous-time dynamics with a stable invariant set built in.
//!
//! A model `ẋ = f(x)` is assembled in five stages: an invertible feature
//! transform `z = φ(x)`, a free base field `h(z)`, a Lyapunov-based
//! correction that makes a primitive set `S̃` (circle, sphere, torus,
//! hyperplane, ball) attracting, a boundary correction that makes `S̃`
//! invariant, and the map back to `x`. Whatever the parameters, the latent
//! set is a stable invariant set of the latent field.
//!
//! See `examples/` for one runnable program per capability.

pub mod ad;
mod error;
pub mod experiment;
pub mod model;
pub mod nets;
pub mod ode;
pub mod sets;
pub mod stable;
pub mod systems;
pub mod train;
pub mod transform;
pub mod cli;

pub use error::{Error, Result};
pub(crate) use error::check_dim;

pub use ad::{Dual, Scalar, Tape, Var};
pub use model::{CompositionMode, ModelKind, StableModel};
pub use sets::{SetKind, SetSpec, Shape};
