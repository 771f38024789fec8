//! Experiment harness for `gaussctl`: configuration, the optimize / replay /
//! scan / discretization-study / eigenstates drivers, and figure output.

pub mod config;
pub mod experiments;
pub mod figures;
pub mod output;
pub mod svg;

pub use config::{ExperimentConfig, Preset};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
