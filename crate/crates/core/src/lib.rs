//! Lorentzian-basis encodings of Gaussian molecular orbitals.
//!
//! A molecular orbital sampled on a `2^n`-point-per-axis grid is fitted by a
//! Tucker expansion in products of periodic discrete Lorentzians
//! ([`fitting`]), optionally compressed to a canonical (CP) form ([`cpd`]),
//! and costed as a state-preparation circuit ([`encoding`]).

pub mod basis;
pub mod cpd;
pub mod encoding;
mod error;
pub mod fitting;
pub mod lorentzian;
pub mod tensor;

pub use basis::{
    build_ideal_state, ContractedGaussianAO, GridState, MolecularOrbital, SimulationCell,
};
pub use error::{Error, Result};
pub use fitting::{FitProblem, OptimizeOptions, TuckerState};
pub use lorentzian::{AxisFunctions, Lorentzian1D, LorentzianBasisSpec};
pub use tensor::{Axis, Kron3, Tensor3};
