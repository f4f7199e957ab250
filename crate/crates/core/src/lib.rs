//! Permanence analysis for competitive Kolmogorov systems
//! `x_i' = x_i f(c_i, (Bx)_i)` with positive `B` and `c`.
//!
//! ```
//! use permanence::{analyze, fixtures::symmetric_half, GrowthFamily, Outcome};
//!
//! let spec = symmetric_half(GrowthFamily::LotkaVolterra);
//! assert_eq!(analyze(&spec).unwrap().outcome, Outcome::Permanent);
//! ```

pub mod certificates;
pub mod equilibria;
pub mod error;
pub mod fixtures;
pub mod lp;
pub mod model;
pub mod nullcline;
pub mod simulate;

pub use certificates::{analyze, analyze_with, AnalyzeOptions, Outcome, Verdict};
pub use equilibria::Equilibrium;
pub use error::{AnalysisError, ModelError, SimulationError};
pub use model::{GrowthFamily, SpecFile, SystemSpec};
pub use simulate::{integrate, IntegratorOptions, Trajectory};
