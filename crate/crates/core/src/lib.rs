//! Multi-state insurance models driven by cumulative transition rates.
//!
//! ```
//! use multistate::backward::{thiele_solve, SolveOptions};
//! use multistate::measure::{PiecewiseFn, RateCurve, StieltjesMeasure};
//! use multistate::model::{CumulativeRate, Model};
//!
//! let interest = StieltjesMeasure::from_density(PiecewiseFn::constant(0.05, 10.0));
//! let model = Model::new(vec![0, 1], 10.0)
//!     .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 10.0)))
//!     .with_interest_all(interest)
//!     .with_transition(0, 1, PiecewiseFn::constant(1.0, 10.0));
//! let reserves = thiele_solve(&model, &SolveOptions::new(0.01))?;
//! let v0 = reserves.value(0, 0.0)?;
//! assert!((v0 - 0.517913).abs() < 1e-6);
//! # Ok::<(), multistate::Error>(())
//! ```

pub mod backward;
pub mod compare;
pub mod error;
pub mod io;
pub mod measure;
pub mod model;
pub mod simulate;

pub use error::{Error, Result};
