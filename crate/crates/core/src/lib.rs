//! Co-design toolkit for a periodic LQR control task that shares a
//! fixed-priority processor with hard real-time tasks and may miss deadlines.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`scheduler`] simulates the task set and extracts the controller's
//!   steady-state miss pattern and delay factors,
//! * [`control`] discretizes the plant at the sampling period and designs a
//!   norm-bounded LQR gain under the logical-execution-time model,
//! * [`stability`] checks the delayed closed loop over one hyper-period,
//! * [`perfsim`] estimates the control cost by simulation,
//! * [`sweep`] repeats all of it over a range of sampling periods.

pub mod config;
pub mod control;
pub mod numerics;
pub mod perfsim;
pub mod scheduler;
pub mod stability;
pub mod sweep;
pub mod taskmodel;

pub use control::{GainDesign, PlantCT, PlantDT, RatioRange};
pub use numerics::{Matrix, NumericError};
pub use scheduler::{DelaySequence, JobRecord, MissPattern, WeaklyHardConstraint};
pub use stability::StabilityVerdict;
pub use sweep::{SweepConfig, SweepRow};
pub use taskmodel::{Task, TaskKind, TaskSet, Time};
