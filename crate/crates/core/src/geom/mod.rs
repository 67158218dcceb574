//! Discrete exterior calculus on tensor-product chart grids.

pub mod chart;
pub mod cover;
pub mod form;
pub mod interp;
pub mod matrix_form;
pub mod pullback;
pub mod sphere;

pub use chart::{Axis, Chart};
pub use cover::ManifoldCover;
pub use form::DifferentialForm;
pub use matrix_form::{CMat, MatrixForm};
pub use pullback::{pullback, pullback_matrix, FormSource, SampledMap};
pub use sphere::{sphere_integrate, sphere_integrate_with, SpherePatch};
