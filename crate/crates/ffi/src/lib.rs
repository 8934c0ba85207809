//! C ABI for the provisioning planner.
//!
//! Problems and plans are opaque handles owned by the caller and released
//! with the matching `_free` function. Every fallible call returns a
//! [`GpuplanStatus`]; on failure a description is available from
//! [`gpuplan_last_error_message`] on the same thread. Strings returned
//! through out-parameters must be released with [`gpuplan_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gpuplan::cli::plan_problem;
use gpuplan::model::WorkloadSpec;
use gpuplan::planner::{appropriate_batch, Plan, PlanError, Strategy};
use gpuplan::problem::Problem;
use gpuplan::sim::{simulate, Arrival, SimConfig, SimError};
use gpuplan::{HardwareProfile, OracleError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpuplanStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidInput = 4,
    Infeasible = 5,
    UnstableQueue = 6,
    Panic = 99,
}

/// A loaded problem.
pub struct GpuplanProblem(Problem);

/// A provisioning plan.
pub struct GpuplanPlan(Plan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(GpuplanStatus, String);

impl Failure {
    fn new(status: GpuplanStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GpuplanStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GpuplanStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GpuplanStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(GpuplanStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(GpuplanStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(GpuplanStatus::NullArgument, format!("{what} is null")))
}

fn check_out<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(GpuplanStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure::new(GpuplanStatus::InvalidInput, e))
}

fn plan_status(e: &anyhow::Error) -> GpuplanStatus {
    let infeasible = match e.downcast_ref::<PlanError>() {
        Some(PlanError::Model(_)) | Some(PlanError::DuplicateWorkload(_)) => false,
        Some(_) => true,
        None => matches!(e.downcast_ref::<OracleError>(), Some(OracleError::Infeasible { .. })),
    };
    if infeasible {
        GpuplanStatus::Infeasible
    } else {
        GpuplanStatus::InvalidInput
    }
}

/// Parses a problem document. Relative file references resolve against
/// `base_dir`, or the working directory when it is null.
#[no_mangle]
pub unsafe extern "C" fn gpuplan_problem_from_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut GpuplanProblem,
) -> GpuplanStatus {
    guard(|| {
        check_out(out, "out")?;
        let text = str_arg(json, "json")?;
        let base = if base_dir.is_null() { "." } else { str_arg(base_dir, "base_dir")? };
        let problem = Problem::from_json_str(text, Path::new(base)).map_err(|e| {
            let status = match e {
                gpuplan::ProblemError::Json { .. } => GpuplanStatus::ParseError,
                _ => GpuplanStatus::InvalidInput,
            };
            Failure::new(status, e)
        })?;
        *out = Box::into_raw(Box::new(GpuplanProblem(problem)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gpuplan_problem_free(problem: *mut GpuplanProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Plans with `strategy` (`igniter`, `ffd`, `bestfit` or `oracle`) on
/// `gpu_type`, or on the cheapest type when `gpu_type` is null or `auto`.
#[no_mangle]
pub unsafe extern "C" fn gpuplan_plan(
    problem: *const GpuplanProblem,
    strategy: *const c_char,
    gpu_type: *const c_char,
    out: *mut *mut GpuplanPlan,
) -> GpuplanStatus {
    guard(|| {
        check_out(out, "out")?;
        let problem = ref_arg(problem, "problem")?;
        let strategy: Strategy = str_arg(strategy, "strategy")?
            .parse()
            .map_err(|e| Failure::new(GpuplanStatus::InvalidInput, e))?;
        let gpu_type = if gpu_type.is_null() { "auto" } else { str_arg(gpu_type, "gpu_type")? };
        let plan = plan_problem(&problem.0, strategy, gpu_type)
            .map_err(|e| Failure::new(plan_status(&e), format!("{e:#}")))?;
        *out = Box::into_raw(Box::new(GpuplanPlan(plan)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gpuplan_plan_free(plan: *mut GpuplanPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gpuplan_plan_to_json(plan: *const GpuplanPlan, out: *mut *mut c_char) -> GpuplanStatus {
    guard(|| {
        check_out(out, "out")?;
        let plan = ref_arg(plan, "plan")?;
        let text = serde_json::to_string(&plan.0).map_err(|e| Failure::new(GpuplanStatus::InvalidInput, e))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gpuplan_plan_from_json(json: *const c_char, out: *mut *mut GpuplanPlan) -> GpuplanStatus {
    guard(|| {
        check_out(out, "out")?;
        let plan: Plan = serde_json::from_str(str_arg(json, "json")?)
            .map_err(|e| Failure::new(GpuplanStatus::ParseError, e))?;
        *out = Box::into_raw(Box::new(GpuplanPlan(plan)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gpuplan_plan_gpu_count(plan: *const GpuplanPlan, out: *mut usize) -> GpuplanStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = ref_arg(plan, "plan")?.0.gpu_count();
        Ok(())
    })
}

/// Hourly cost in dollars.
#[no_mangle]
pub unsafe extern "C" fn gpuplan_plan_cost(plan: *const GpuplanPlan, out: *mut f64) -> GpuplanStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = ref_arg(plan, "plan")?.0.cost_per_hour;
        Ok(())
    })
}

/// Number of workloads whose predicted latency or throughput misses its SLO.
#[no_mangle]
pub unsafe extern "C" fn gpuplan_plan_violation_count(plan: *const GpuplanPlan, out: *mut usize) -> GpuplanStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = ref_arg(plan, "plan")?.0.violations.len();
        Ok(())
    })
}

/// Replays `plan` with constant arrivals and writes the report as JSON.
#[no_mangle]
pub unsafe extern "C" fn gpuplan_simulate(
    problem: *const GpuplanProblem,
    plan: *const GpuplanPlan,
    duration_ms: f64,
    warmup_ms: f64,
    out_json: *mut *mut c_char,
) -> GpuplanStatus {
    guard(|| {
        check_out(out_json, "out_json")?;
        let problem = &ref_arg(problem, "problem")?.0;
        let plan = &ref_arg(plan, "plan")?.0;
        let hw = problem
            .hardware(&plan.gpu_type)
            .or_else(|e| problem.hardware.first().filter(|_| plan.gpus.is_empty()).ok_or(e))
            .map_err(|e| Failure::new(GpuplanStatus::InvalidInput, e))?;
        let cfg = SimConfig {
            duration_ms,
            warmup_ms,
            arrival: Arrival::Constant,
            trace: false,
        };
        let report = simulate(plan, &problem.spec_map(), &problem.coefficient_map(&hw.gpu_type), hw, &cfg)
            .map_err(|e| {
                let status = match e {
                    SimError::UnstableQueue { .. } => GpuplanStatus::UnstableQueue,
                    _ => GpuplanStatus::InvalidInput,
                };
                Failure::new(status, e)
            })?;
        let text = serde_json::to_string(&report).map_err(|e| Failure::new(GpuplanStatus::InvalidInput, e))?;
        *out_json = into_c_string(text)?;
        Ok(())
    })
}

/// Smallest batch that sustains `rate_rps` when execution takes half of
/// `slo_ms`.
#[no_mangle]
pub unsafe extern "C" fn gpuplan_appropriate_batch(
    slo_ms: f64,
    rate_rps: f64,
    d_load_mb: f64,
    pcie_bw_mb_per_ms: f64,
    b_max: u32,
    out: *mut u32,
) -> GpuplanStatus {
    guard(|| {
        check_out(out, "out")?;
        let spec = WorkloadSpec {
            name: "batch".into(),
            slo_ms,
            rate_rps,
            d_load_mb,
            d_feedback_mb: 0.0,
        };
        spec.validate().map_err(|e| Failure::new(GpuplanStatus::InvalidInput, e))?;
        if !(pcie_bw_mb_per_ms > 0.0) {
            return Err(Failure::new(GpuplanStatus::InvalidInput, "pcie bandwidth must be positive"));
        }
        let hw = HardwareProfile {
            pcie_bw_mb_per_ms,
            ..gpuplan::synth::v100_profile()
        };
        *out = appropriate_batch(&spec, &hw, b_max).map_err(|e| Failure::new(GpuplanStatus::Infeasible, e))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gpuplan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gpuplan_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
