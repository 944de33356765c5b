//! Behavioral cloning of code-reading attention from eye-tracking data.

pub mod autodiff;
pub mod code_model;
pub mod error;
pub mod gaze;
pub mod policy;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

// Compiles and runs the examples in the book as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/tokens.md")]
    mod tokens {}
    #[doc = include_str!("../../../book/src/gaze.md")]
    mod gaze {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
}
