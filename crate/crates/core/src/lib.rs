//! Character decompositions of group-invariant Gaussian processes.
//!
//! The crate works on a finite discretization of the parameter space: a grid
//! with quadrature weights on which a finite group acts by exact point
//! permutations. On top of that it provides
//!
//! * finite groups, character tables and character projections ([`group`]),
//! * covariance kernels, their projections and contractions ([`kernels`]),
//! * cumulants of quadratic functionals and Watson-type relation checks
//!   ([`cumulants`]),
//! * seeded Gaussian sampling and Monte Carlo comparisons ([`sampler`],
//!   [`stats`]),
//! * weighted Karhunen-Loève spectra and canonical decompositions
//!   ([`spectral`]),
//! * lattices, dual lattices and parity decompositions on flat tori
//!   ([`torus`]).

pub mod cumulants;
pub mod error;
pub mod group;
pub mod io;
pub mod kernels;
pub mod sampler;
pub mod spectral;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};
pub use group::{CharacterTable, FiniteGroup, GroupAction, Irrep, SymmetryGroup};
pub use kernels::{BuiltinKernel, FeatureMap, IndexSpace, Kernel};
pub use sampler::{CorrelatedPair, GaussianSampler, PathEnsemble};
pub use spectral::Spectrum;



/// Default tolerance for exact algebraic identities.
pub const DEFAULT_TOL: f64 = 1e-10;
