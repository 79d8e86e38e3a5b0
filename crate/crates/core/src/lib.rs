//! Physics-informed networks for coupled dynamic thermoelasticity in
//! functionally graded materials.
//!
//! Four fully-connected networks approximate the displacements `u1, u2, u3`
//! and the temperature `T`. Input derivatives up to second order are carried
//! through the networks as [`Jet4`]s; parameter gradients come from a batched
//! reverse pass (with a scalar [`Tape`] as an independent reference).
//!
//! All numerics are generic over [`Real`]; the aliases below fix `f64`,
//! which is what every shipped entry point uses.

pub mod autodiff;
pub mod balancing;
mod error;
pub mod experiment;
pub mod geometry;
pub mod materials;
pub mod mms;
pub mod network;
pub mod physics;
mod real;
pub mod training;

pub use error::{Error, Result};
pub use real::Real;

pub use autodiff::{Activation, Component, JetOrder, Var};

/// Value, input gradient and input Hessian of one output.
pub type Jet = autodiff::Jet4<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type ParamSet = network::ParamSet<f64>;
pub type Model = network::ModelState<f64>;
pub type PropertySpec = materials::PropertySpec<f64>;
pub type Material = materials::MaterialModel<f64>;
pub type MaterialPoint = materials::MaterialPoint<f64>;
pub type Constants = materials::PhysicalConstants<f64>;
