//! Verification toolchain for Hybrid Active Objects.

pub mod dl;
mod scalar;

pub use scalar::Scalar;
pub mod analysis;
pub mod concurrent;
pub mod habs;
pub mod ode;
pub mod sim;
pub mod vcg;

/// Double-precision instances of the generic numeric types.
pub type Dynamics64 = ode::Dynamics<f64>;
pub type Simulator64<'a> = sim::Simulator<'a, f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
pub type Run64 = sim::Run<f64>;
pub type Trace64 = sim::Trace<f64>;
pub type Value64 = sim::Value<f64>;
pub type ConcurrentState64 = concurrent::ConcurrentState<f64>;
