//! Numerical laboratory for shear flows of nematic liquid crystals in the parabolic
//! Ericksen–Leslie model.

pub mod bifurcation;
pub mod config;
pub mod error;
pub mod evolution;
pub mod io;
pub mod material;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod roots;
pub mod spectral;
pub mod stationary;
pub mod suite;
pub mod svg;

pub use error::{Error, Result};
pub use material::{EquilibriumSet, Material, MaterialParams, Pole, Regime, ValidationReport};
pub use config::{RunConfig, SolverOptions};
pub use model::ShearModel;
pub use stationary::{LevelIntegrals, StationaryProfile};
pub use bifurcation::{BifurcationDiagram, Minimum};
pub use spectral::{EvansEvaluation, LinearizedSystem, Monodromy};
pub use evolution::{DecayReport, EvolutionState, GradientWeight, LinearFlow, NonlinearFlow};
