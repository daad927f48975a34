//! Staggered-grid vector fields and the discrete forms built on them.

mod grid;
mod ops;
mod vector;

pub use grid::{Boundary, Grid, Lid};
pub use ops::{
    advect, divergence, gradient, h10_inner, l2_inner, laplacian, trilinear_b, trilinear_b_star,
    AdvectionData, Gradient, Weights,
};
pub(crate) use ops::{gradient_inner, l2_inner_weighted};
pub use vector::VectorField;
