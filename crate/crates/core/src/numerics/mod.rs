//! Dense matrices, RNG, primitive ops, the gradient tape and small decompositions.

pub mod gradcheck;
pub mod linalg;
pub mod matrix;
pub mod ops;
pub mod rng;
pub mod tape;

pub use matrix::Matrix;
pub use ops::{Backend, Eager};
pub use rng::{seeded_normal, Rng};
pub use tape::{ParamId, ParamSet, Tape, Var};
