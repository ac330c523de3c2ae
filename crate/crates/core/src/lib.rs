//! Link budget and degrees of freedom of links between large and small
//! intelligent surfaces.

pub mod cli;
pub mod dof;
pub mod eigenmodes;
pub mod geometry;
pub mod green;
pub mod linkbudget;
pub mod quadrature;

pub use faer;
pub use num_complex::Complex64;
