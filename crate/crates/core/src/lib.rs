//! Automatic marginalization of conjugate latent variables in directed
//! graphical models, with a NUTS sampler over the reduced model and exact
//! recovery of everything that was integrated out.
//!
//! The guide in `book/` walks through each module with runnable examples;
//! those examples are compiled and run as doctests of this crate.

pub mod analysis;
pub mod compgraph;
pub mod dataset;
pub mod diagnostics;
pub mod dists;
pub mod experiment;
pub mod grad;
pub mod model;
pub mod sampler;
pub mod transform;
pub mod zoo;

pub use model::{Assignment, GraphicalModel, NodeId};
pub use transform::{marginalize, Marginalized, RecoveryStack};

// One module per chapter so a failing doctest points at its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/computation-graphs.md")]
    mod computation_graphs {}
    #[doc = include_str!("../../../book/src/graphical-models.md")]
    mod graphical_models {}
    #[doc = include_str!("../../../book/src/conjugacy.md")]
    mod conjugacy {}
    #[doc = include_str!("../../../book/src/reversal.md")]
    mod reversal {}
    #[doc = include_str!("../../../book/src/marginalize.md")]
    mod marginalize {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
