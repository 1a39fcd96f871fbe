//! Stochastic half-space projection methods for monotone inclusions.
//!
//! The [`engine`] module runs the generic relaxed projection template; the
//! [`ppa`], [`saddle`] and [`kt`] modules are concrete suppliers of graph
//! samples for it. [`sampling`] owns every random law used by a trajectory.

pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod instances;
pub mod kt;
pub mod operators;
pub mod ppa;
pub mod saddle;
pub mod sampling;
pub mod spaces;

pub use diagnostics::{fejer_check, summarize, EnsembleSummary, Stats, Trace, TraceRow};
pub use engine::{engine_step, run, run_traced, EngineConfig, GraphSample, RunOptions, StepRecord, Supplier};
pub use error::{Error, Result};
pub use kt::{kt_iterate, kt_residual, run_kt, KTProblem, KTState, KTStepSizes};
pub use operators::{CocoerciveOp, LinearMap, LipschitzMonotoneOp, MaxMonotoneOp, SingleValuedMap};
pub use ppa::{run_ppa, ErrorRule, GammaRule, PpaConfig, Regime};
pub use saddle::{
    build_min_problem, run_saddle, saddle_iterate, saddle_residual, BlockSamplers, Couplings, MinProblemSpec,
    SaddlePoint, SaddleProblem, SaddleState, StepRule, StepSizes,
};
pub use sampling::{BlockLaw, BlockSampler, RelaxationSampler, Stream};
pub use spaces::{BlockVector, SpaceLayout};
