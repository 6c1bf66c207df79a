//! Time evolution of small registers under laser, RF and gradient schedules.

mod circuit;
mod engine;
mod protocols;
mod register;
mod schedule;

pub use engine::{blow_away, Engine, MIN_SHAPED_STEPS, UNITARITY_TOLERANCE};
pub use register::{Complex, Level, RegisterState, MAX_ATOMS, N_LEVELS};
pub use schedule::{
    Direction, Envelope, NoiseParams, Pulse, PulseSchedule, Segment, SegmentKind, Target, Tone, Transition,
};
pub use protocols::{
    ladder_drive, measure_qubit, measure_with_rng, qubit_state, qubit_transfer_pulse, CnotDesign, CnotOptions,
    CnotReport, GatePlan, GateReport, LadderDrive, LayerSelectReport, MeasurementReport, Rotation, TransferParams,
    TransferReport,
};
pub use circuit::{compile_circuit, execute_schedule, parse_circuit, CompileOptions, CompiledCircuit, Execution, Gate};
