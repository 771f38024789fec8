//! Direct optimal control of laser-driven Gaussian wavepackets.
//!
//! The control problem for a single thawed Gaussian in a bistable potential is
//! transcribed into a sparse nonlinear program (trapezoidal or
//! Hermite-Simpson collocation) and solved with an augmented-Lagrangian
//! method. Optimised fields can then be replayed through an exact
//! split-operator grid propagator.
//!
//! | module | contents |
//! |---|---|
//! | [`potential`] | quartic well, Gaussian-sum fit, closed-form expectation values, overlaps |
//! | [`dynamics`] | Gaussian equations of motion, field signals, RK4 replay |
//! | [`transcription`] | control problem, collocation, the NLP, discretisation error |
//! | [`nlp`] | the NLP interface and the augmented-Lagrangian solver |
//! | [`qprop`] | grid wavefunctions, split-operator propagation, eigenstates |

pub mod dual;
pub mod dynamics;
mod error;
pub mod nlp;
pub mod potential;
pub mod qprop;
pub mod transcription;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/gaussian-dynamics.md")]
    mod gaussian_dynamics {}
    #[doc = include_str!("../../../book/src/collocation.md")]
    mod collocation {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/quantum-replay.md")]
    mod quantum_replay {}
}
