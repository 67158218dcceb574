//! Numerical Chern–Weil theory on chart grids: connections and curvature, invariant
//! polynomials and their polarizations, the pushforward connection of a bundle map,
//! transgression forms and the residues they leave at singular points.

pub mod bundle;
pub mod error;
pub mod geom;
pub mod invariant;
pub mod linalg;
pub mod pushforward;
pub mod quadrature;
pub mod residue;
pub mod scenarios;
pub mod transgression;

pub use error::{Error, Result};
