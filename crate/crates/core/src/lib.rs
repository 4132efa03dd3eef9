//! Self-consistent temperature evolution for integro-PDE transport of the
//! Kompaneets family.
//!
//! The temperature θ(y) = I_α(y)/I_α(0) is determined *before* the transport
//! equation is solved: exact initial derivatives θ⁽ⁿ⁾(0) come from the moment
//! hierarchy ([`moments`]), are resummed as a continued fraction
//! ([`contfrac`]), and the remaining linear Fokker–Planck problem is integrated
//! by the method of lines ([`pde`]). [`verify`] re-integrates the solution to
//! check that the output temperature reproduces the input.

pub mod contfrac;
pub mod error;
pub mod expr;
pub mod io;
pub mod moments;
pub mod pde;
pub mod quad;
pub mod scalar;
pub mod spectra;
pub mod verify;


pub use error::{Error, Result};
pub use expr::{ThetaExpression, Var};
pub use moments::{DerivativeTable, Route};
pub use pde::{Grid, PdeSolution, TemperatureFn};
pub use verify::VerificationReport;
pub use spectra::{InitialSpectrum, TransportParams};

pub use contfrac::{ContinuedFraction, DefectReport, RationalForm, Selection};
