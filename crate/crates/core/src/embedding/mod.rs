//! Quenches realised as energy-conserving unitaries on a system, an explicit battery
//! ladder and a control qubit.

pub mod battery;
pub mod coherence;
pub mod dephase;
pub mod physical;
pub mod quench;

pub use battery::{translation_by_levels, translation_operator, BatteryLadder, FlatBatteryState};
pub use coherence::{coherence_sweep, evolve_battery_and_diagnose, sample_times, CoherenceReport, KOverlap};
pub use dephase::dephase;
pub use physical::{physical_protocol_run, PhysicalRun, StepComparison};
pub use quench::{
    apply_quench, build_quench_unitary, classical_battery_quench, k_matrix, quench_joint, KMatrix,
    QuenchChecks, QuenchOutcome, QuenchUnitary,
};
