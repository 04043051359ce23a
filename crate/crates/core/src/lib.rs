//! Equilibrium (subgame-perfect) investment and consumption for a CRRA
//! investor in a market whose coefficients and discount rate switch with a
//! continuous-time Markov chain.
//!
//! * [`model`]: market data, generator, utility primitives.
//! * [`ctmc`]: chain path sampling, stationary law, Dynkin check.
//! * [`ode`]: backward RK4 integrator with step-halving control.
//! * [`equilibrium`]: the `g` and `(h, l)` systems, policies, closed form,
//!   Picard oracle.
//! * [`simulate`]: wealth paths, Monte-Carlo utility estimates, Feynman-Kac
//!   values of proportional strategies, perturbation slopes.
//! * [`experiment`]: JSON-configured batch runs and CSV/JSON artifacts.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ctmc;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod ode;
pub mod report;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{MarketSpec, Preferences, RegimeGenerator};
