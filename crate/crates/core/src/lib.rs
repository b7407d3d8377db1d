//! Work statistics of a driven, damped harmonic oscillator under projective
//! and calorimetric measurement schemes.
//!
//! Units throughout: `hbar = 1`, `omega0 = 1`. Energies, heat and work are
//! counted in quanta of the level spacing.

pub mod analytics;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod lindblad;
pub mod model;
pub mod trajectory;
pub mod work;

pub use error::{Error, Result};
pub use fock::{OperatorMatrix, StateVector};
pub use model::{make_rates, PhysicalParams, Rates};
pub use trajectory::{EnsembleConfig, JumpEvent, JumpKind, TrajectoryEngine, TrajectoryRecord};
pub use work::{GuardianOutcome, MomentSummary, WorkHistogram, WorkKind, WorkSample};
