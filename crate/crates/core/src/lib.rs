pub mod abelian;
pub mod convex;
pub mod dd;
pub mod error;
pub mod linalg;
pub mod monge_ampere;
pub mod mumford;
pub mod oracles;
pub mod polytope;
pub mod rational;
pub mod sbp;
pub mod toric;

pub use convex::{AffineMap, AffinePiece, ConvexOracle, MaxAffine};
pub use error::{Error, Result};
pub use polytope::{Halfspace, Polytope};
pub use rational::{QVec, Rational};
