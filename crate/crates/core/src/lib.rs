//! Planning toolkit for transmission and generation capacity expansion in a
//! multi-node electricity market under renewable-energy policies.
//!
//! The pipeline: describe an [`model::EnergySystem`] and a
//! [`model::PolicySet`], build the centralized welfare-maximization problem
//! or the fixed-plan market problem as a sparse concave QP
//! ([`builder`]), solve it with the embedded operator-splitting solver
//! ([`solver`]), extract market outcomes, nodal prices and output factors
//! ([`equilibrium`]), and search transmission expansion plans either exactly
//! or by grid enumeration ([`bilevel`]). Hourly series reduce to weighted
//! representative days in [`repdays`]; policy sensitivity experiments live
//! in [`sweep`]; file formats in [`io`].

pub mod bilevel;
pub mod builder;
pub mod equilibrium;
pub mod io;
pub mod model;
pub mod qp;
pub mod repdays;
pub mod solver;
pub mod sweep;
pub mod testing;
