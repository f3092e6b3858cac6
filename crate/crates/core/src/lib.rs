//! Model predictive regulation for nonlinear discrete-time SISO plants
//! driven by exosystems.
//!
//! The pipeline: describe a plant `x+ = f(x,u,w)`, output `y = h(x,u,w)`
//! and exosystem `w+ = a(w)` in the [`dsl`]; check structure with
//! [`model`]; solve the tracking-manifold equations with [`regulation`];
//! build a power-series terminal cost and feedback with [`terminal`];
//! then regulate on line with the receding-horizon optimizer in [`mpr`]
//! or simulate the polynomial feedback directly with [`sim`].

pub mod cli;
pub mod dsl;
pub mod linalg;
pub mod model;
pub mod mpr;
pub mod par;
pub mod poly;
pub mod regulation;
pub mod sim;
pub mod terminal;
