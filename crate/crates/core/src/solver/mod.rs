//! Discretized heat flow on curves and its time-stepping.

mod blocktri;
mod energy;
mod flow;
mod grid;
mod scheme;

pub use blocktri::BlockTridiagonal;
pub use energy::{trapezoid_weight, Discretization};
pub use flow::{flow_step, solve, Checkpoint, SolveReport, SolverConfig, StepDiagnostics, Termination, TraceRow};
pub use grid::{initial_curve, BoundarySpec, BoundaryValue, CurveGrid, InitHint};
pub use scheme::{
    apply_boundary, scheme_registry, ExplicitEuler, FlowContext, FlowScheme, LinearlyImplicit, PointwiseEuler, Proposal,
};
