//! Anisotropic Triebel-Lizorkin toolkit.

pub mod atoms;
pub mod config;
pub mod convolution;
pub mod covers;
pub mod cubes;
pub mod equivalence;
pub mod experiments;
pub mod error;
pub mod fft;
pub mod field;
pub mod linalg;
pub mod quasinorm;
pub mod report;
pub mod sampling;
pub mod suite;
pub mod tl_norm;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/matrices.md")]
    mod matrices {}
    #[doc = include_str!("../../../book/src/covers.md")]
    mod covers {}
    #[doc = include_str!("../../../book/src/equivalence.md")]
    mod equivalence {}
    #[doc = include_str!("../../../book/src/norms.md")]
    mod norms {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cubes.md")]
    mod cubes {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
