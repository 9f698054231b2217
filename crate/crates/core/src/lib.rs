//! Simulation of discrete time crystals in the driven-dissipative Dicke model
//! and its atom-only limits.

pub mod analysis;
pub mod drive;
pub mod dtwa;
pub mod error;
pub mod integrate;
pub mod mean_field;
pub mod models;
pub mod quantum;
pub mod rng;
pub mod series;
pub mod sweep;

pub use drive::{DisorderRealization, Drive, DriveProtocol};
pub use dtwa::{evolve_dtwa, DtwaRun, InitialStateSpec};
pub use error::{Error, Result};
pub use mean_field::Numerics;
pub use models::{critical_coupling, dispatch_model, instability_duty, ModelKind, ModelParams};
pub use series::TrajectorySeries;
pub use analysis::{classify_phase, AnalysisConfig, Classification, PhaseLabel};
pub use quantum::{QuantumNumerics, QuantumState};
pub use sweep::{run_disorder_scan, run_kappa_scan, run_parameter_sweep, run_phase_diagram, CellLabel, Level, PhaseDiagram, SweepSpec};
