//! Embedding-space transformations applied before initialization.

mod fusion;
mod linear;
mod normalize;
mod pca;

pub use fusion::fuse;
pub use linear::{linear_transform, LinearTransformSpec, ALPHA_GRID, EIGEN_FLOOR};
pub use normalize::normalize;
pub use pca::{pca_reduce, PcaModel};
