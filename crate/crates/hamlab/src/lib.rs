//! Numerical laboratory for the action spectrum and loop monodromy of
//! Hamiltonian systems on model symplectic surfaces (plane, torus, sphere).

pub mod error;
pub mod flow;
pub mod geom;
pub mod hamalg;
pub mod hamdsl;
pub mod monodromy;
pub mod num;
pub mod orbits;
pub mod scenario;

pub use error::{Error, Result};
pub use num::Real;

/// Concrete aliases for the default double-precision scalar.
pub type R64 = f64;
pub type Manifold64 = geom::Manifold<f64>;
pub type Point64 = geom::Point<f64>;
pub type Hamiltonian64 = hamdsl::Hamiltonian<f64>;
