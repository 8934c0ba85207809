//! Interference-aware GPU provisioning for co-located DNN inference.
//!
//! The crate predicts per-workload latency and throughput on a spatially
//! shared GPU, sizes batches and resource shares from closed-form bounds,
//! and places workloads greedily so that every SLO holds at minimum cost.
//! An exhaustive planner for tiny instances and a request-level simulator
//! are included for validation.

pub mod baselines;
pub mod calibration;
pub mod cli;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod problem;
pub mod sim;
pub mod synth;

pub use baselines::{bestfit_throughput, ffd_plus, BestFitConfig};
pub use model::{
    predict_gpu, slo_check, Allocation, HardwareProfile, LatencyBreakdown, ModelError, SloCheck,
    WorkloadCoefficients, WorkloadSpec,
};
pub use oracle::{exhaustive_plan, OracleBudget, OracleError};
pub use planner::{
    appropriate_batch, lower_bound_resources, plan, plan_with_stats, select_gpu_type, GpuPlan, Plan,
    PlanError, PlannerConfig, Strategy, Workload,
};
pub use problem::{Problem, ProblemError};
pub use sim::{simulate, SimConfig, SimError, SimReport};
