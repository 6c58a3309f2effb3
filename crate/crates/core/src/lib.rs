//! Numerics for anharmonic oscillator chains: truncated bases, Gibbs states,
//! imaginary-time kernels, Heisenberg dynamics, resolvents, relative entropy
//! and KMS functions.

pub mod basis;
pub mod chain;
pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod gibbs;
pub mod kernel;
pub mod kms;
pub mod linalg;
pub mod resolvent;
mod syevd;

pub use basis::{Bump, GridSpec, HermiteBasis, PotentialSpec, SiteQuadrature};
pub use dynamics::EvolutionPlan;
pub use chain::{ChainSpec, LabeledOperator, LocalTerms, Site};
pub use gibbs::{GibbsState, SpectralDecomposition};
pub use kernel::{HeatKernel, KernelKind};
pub use error::{Error, Result};
pub use linalg::C64;
pub use resolvent::SymplecticVector;
