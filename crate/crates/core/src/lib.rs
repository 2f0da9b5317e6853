//! Random commuting matrix tuples: eigenvalue laws, samplers, equilibrium
//! measures and the Jacobians of the charts behind them.

pub mod chart;
pub mod density;
pub mod equilibrium;
pub mod error;
pub mod mcmc;
pub mod quadrature;
pub mod rng;
pub mod tuple;
pub mod verify;

pub use chart::{ChartMap, KappaCase, UnipotentParam};
pub use density::{DensityReport, ExternalField};
pub use equilibrium::{EnergyReport, EquilibriumLaw, LawKind};
pub use error::{Error, Result};
pub use mcmc::{ChainConfig, ChainResult, Joint2x2Chain, Joint2x2Sample};
pub use tuple::{Banner, CMatrix, EigenConfig, Irreducibility, MatrixTuple, VarietyDimension};
pub use verify::CheckResult;
