//! Torsion function of planar convex domains and the gradient-sup functionals
//! `J = ‖∇u‖∞ / |Ω|^½` and `J_P = ‖∇u‖∞ / P(Ω)`.

pub mod error;
pub mod geom;
pub mod mesh;
pub mod nelder_mead;
pub mod optimizer;
pub mod shape;
pub mod sparse;
pub mod fem;
pub mod functionals;
pub mod wos;
pub mod io;
pub mod render;
pub mod checks;

pub use error::{Error, Result};
pub use geom::Vec2;
