//! Cost-minimal provisioning: closed-form batch and resource bounds, the
//! interference-aware reallocation loop, and greedy least-interference
//! placement.
//!
//! Resources are tracked internally as whole `r_unit` slices so that device
//! capacity checks are exact integer comparisons.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    predict_residents, slo_check, HardwareProfile, LatencyBreakdown, ModelError, Resident,
    WorkloadCoefficients, WorkloadSpec,
};

pub const DEFAULT_B_MAX: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("workload `{workload}`: batch {batch} exceeds cap {b_max}; one replica cannot meet the rate")]
    BatchCapExceeded {
        workload: String,
        batch: u32,
        b_max: u32,
    },
    #[error("workload `{workload}`: SLO too tight even with a whole device (latency budget {delta_ms:.6} ms)")]
    InfeasibleSlo { workload: String, delta_ms: f64 },
    #[error("workload `{workload}`: needs r = {r_needed:.4} which exceeds the device")]
    InfeasibleResource { workload: String, r_needed: f64 },
    #[error("duplicate workload name `{0}`")]
    DuplicateWorkload(String),
    #[error("no GPU type can host every workload: {}", .0.join("; "))]
    NoFeasibleGpuType(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A workload together with its coefficients on the GPU type being planned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub spec: WorkloadSpec,
    pub coef: WorkloadCoefficients,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Largest batch a single replica may use.
    pub b_max: u32,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { b_max: DEFAULT_B_MAX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Igniter,
    Ffd,
    Bestfit,
    Oracle,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Igniter => "igniter",
            Strategy::Ffd => "ffd",
            Strategy::Bestfit => "bestfit",
            Strategy::Oracle => "oracle",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "igniter" => Ok(Strategy::Igniter),
            "ffd" => Ok(Strategy::Ffd),
            "bestfit" => Ok(Strategy::Bestfit),
            "oracle" => Ok(Strategy::Oracle),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedAllocation {
    pub workload: String,
    pub r: f64,
    pub batch: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<LatencyBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuPlan {
    pub gpu_index: usize,
    /// Unallocated fraction of the device.
    pub fragment_r: f64,
    pub allocations: Vec<PlannedAllocation>,
}

impl GpuPlan {
    pub fn total_r(&self) -> f64 {
        self.allocations.iter().map(|a| a.r).sum()
    }

    pub fn predicted(&self, workload: &str) -> Option<&LatencyBreakdown> {
        self.allocations
            .iter()
            .find(|a| a.workload == workload)
            .and_then(|a| a.predicted.as_ref())
    }
}

/// A provisioning plan in its document form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub strategy: Strategy,
    pub gpu_type: String,
    pub cost_per_hour: f64,
    pub gpus: Vec<GpuPlan>,
    /// Resources granted beyond each workload's solo lower bound.
    #[serde(default)]
    pub per_workload_r_inter: BTreeMap<String, f64>,
    /// Workloads whose predicted performance misses their SLO.
    #[serde(default)]
    pub violations: Vec<String>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl Plan {
    pub fn gpu_count(&self) -> usize {
        self.gpus.len()
    }

    pub fn total_r(&self) -> f64 {
        self.gpus.iter().map(GpuPlan::total_r).sum()
    }

    pub fn allocation(&self, workload: &str) -> Option<(usize, &PlannedAllocation)> {
        self.gpus.iter().find_map(|g| {
            g.allocations
                .iter()
                .find(|a| a.workload == workload)
                .map(|a| (g.gpu_index, a))
        })
    }
}

/// Counters gathered while planning.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct PlanStats {
    /// Number of single-workload model evaluations.
    pub workload_evaluations: u64,
    pub alloc_calls: u64,
}

/// Smallest batch that meets the arrival rate when execution takes half the
/// SLO.
pub fn appropriate_batch(
    spec: &WorkloadSpec,
    hw: &HardwareProfile,
    b_max: u32,
) -> Result<u32, PlanError> {
    // T*R*B / (2*(B + R*d)) with R in req/ms, rewritten over req/s.
    let bw = hw.pcie_bw_mb_per_ms;
    let x = spec.slo_ms * spec.rate_rps * bw / (2.0 * (1000.0 * bw + spec.rate_rps * spec.d_load_mb));
    let batch = x.ceil().max(1.0);
    if batch > b_max as f64 {
        return Err(PlanError::BatchCapExceeded {
            workload: spec.name.clone(),
            batch: batch.min(u32::MAX as f64) as u32,
            b_max,
        });
    }
    Ok(batch as u32)
}

/// Execution budget left once transfers, the constant active-time term and
/// solo scheduling are paid for.
pub fn latency_budget(
    spec: &WorkloadSpec,
    coef: &WorkloadCoefficients,
    hw: &HardwareProfile,
    batch: u32,
) -> f64 {
    let b = batch as f64;
    spec.slo_ms / 2.0
        - (spec.d_load_mb + spec.d_feedback_mb) * b / hw.pcie_bw_mb_per_ms
        - coef.k5
        - coef.k_sch_ms * coef.n_kernels as f64
}

/// Solo resource lower bound in `r_unit` slices.
pub fn lower_bound_units(
    spec: &WorkloadSpec,
    coef: &WorkloadCoefficients,
    hw: &HardwareProfile,
    batch: u32,
) -> Result<u32, PlanError> {
    let delta = latency_budget(spec, coef, hw, batch);
    if !(delta > 0.0) {
        return Err(PlanError::InfeasibleSlo {
            workload: spec.name.clone(),
            delta_ms: delta,
        });
    }
    let b = batch as f64;
    let gamma = coef.k1 * b * b + coef.k2 * b + coef.k3;
    let x = gamma / (delta * hw.r_unit) - coef.k4 / hw.r_unit;
    let units = x.ceil().max(1.0);
    if units > hw.max_units() as f64 {
        return Err(PlanError::InfeasibleResource {
            workload: spec.name.clone(),
            r_needed: units * hw.r_unit,
        });
    }
    Ok(units as u32)
}

/// Solo resource lower bound as a fraction.
pub fn lower_bound_resources(
    spec: &WorkloadSpec,
    coef: &WorkloadCoefficients,
    hw: &HardwareProfile,
    batch: u32,
) -> Result<f64, PlanError> {
    lower_bound_units(spec, coef, hw, batch).map(|u| hw.units_to_r(u))
}

/// Batch and lower bound of one workload on one GPU type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requirement {
    pub batch: u32,
    pub lower_units: u32,
}

pub fn requirement(
    w: &Workload,
    hw: &HardwareProfile,
    cfg: &PlannerConfig,
) -> Result<Requirement, PlanError> {
    let batch = appropriate_batch(&w.spec, hw, cfg.b_max)?;
    let lower_units = lower_bound_units(&w.spec, &w.coef, hw, batch)?;
    Ok(Requirement { batch, lower_units })
}

pub(crate) fn validate_inputs(workloads: &[Workload], hw: &HardwareProfile) -> Result<(), PlanError> {
    hw.validate()?;
    let mut seen = BTreeSet::new();
    for w in workloads {
        w.spec.validate()?;
        w.coef.validate()?;
        if !seen.insert(w.spec.name.as_str()) {
            return Err(PlanError::DuplicateWorkload(w.spec.name.clone()));
        }
    }
    Ok(())
}

pub(crate) fn requirements(
    workloads: &[Workload],
    hw: &HardwareProfile,
    cfg: &PlannerConfig,
) -> Result<Vec<Requirement>, PlanError> {
    validate_inputs(workloads, hw)?;
    workloads.iter().map(|w| requirement(w, hw, cfg)).collect()
}

/// Indices ordered by lower bound, largest first; ties by name.
pub(crate) fn descending_order(workloads: &[Workload], reqs: &[Requirement]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..workloads.len()).collect();
    order.sort_by(|&a, &b| {
        reqs[b]
            .lower_units
            .cmp(&reqs[a].lower_units)
            .then_with(|| workloads[a].spec.name.cmp(&workloads[b].spec.name))
    });
    order
}

/// One device being filled: member workload indices with their unit counts,
/// in placement order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Device {
    pub members: Vec<usize>,
    pub units: Vec<u32>,
}

impl Device {
    pub fn used_units(&self) -> u32 {
        self.units.iter().sum()
    }
}

/// Predicts every member of a device at the given unit counts.
pub(crate) fn predict_members(
    workloads: &[Workload],
    reqs: &[Requirement],
    members: &[usize],
    units: &[u32],
    hw: &HardwareProfile,
) -> Result<Vec<LatencyBreakdown>, ModelError> {
    let residents: Vec<Resident<'_>> = members
        .iter()
        .zip(units)
        .map(|(&i, &u)| Resident {
            spec: &workloads[i].spec,
            coef: &workloads[i].coef,
            r: hw.units_to_r(u),
            batch: reqs[i].batch,
        })
        .collect();
    predict_residents(&residents, hw)
}

/// Result of trying to place a workload on a device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocOutcome {
    /// Unit counts for the existing members followed by the newcomer.
    pub units: Vec<u32>,
    /// False when the device ran out of capacity before every member met
    /// its SLO.
    pub feasible: bool,
}

/// Places `newcomer` at its lower bound, then repeatedly grants one more
/// `r_unit` to every member whose predicted performance misses its SLO,
/// re-predicting the whole device each pass, until nobody misses or the
/// device is over capacity.
pub(crate) fn alloc_on_device(
    workloads: &[Workload],
    reqs: &[Requirement],
    device: &Device,
    newcomer: usize,
    hw: &HardwareProfile,
    stats: &mut PlanStats,
) -> Result<AllocOutcome, ModelError> {
    stats.alloc_calls += 1;
    let max_units = hw.max_units();
    let mut members = device.members.clone();
    members.push(newcomer);
    let mut units = device.units.clone();
    units.push(reqs[newcomer].lower_units);

    loop {
        let used: u32 = units.iter().sum();
        if used > max_units {
            return Ok(AllocOutcome {
                units,
                feasible: false,
            });
        }
        let predicted = predict_members(workloads, reqs, &members, &units, hw)?;
        stats.workload_evaluations += members.len() as u64;
        let mut violated = false;
        for (k, p) in predicted.iter().enumerate() {
            if !slo_check(p, &workloads[members[k]].spec).ok() {
                units[k] += 1;
                violated = true;
            }
        }
        if !violated {
            return Ok(AllocOutcome {
                units,
                feasible: true,
            });
        }
    }
}

/// Public form of the reallocation loop: `current` holds the device's
/// existing `(workload, batch, r)` entries, and the newcomer starts at
/// `newcomer_r_lower`.
pub fn alloc_gpus(
    current: &[(&Workload, u32, f64)],
    newcomer: (&Workload, u32),
    newcomer_r_lower: f64,
    hw: &HardwareProfile,
) -> Result<AllocOutcome, ModelError> {
    let to_units = |r: f64| (r / hw.r_unit).round() as u32;
    let mut workloads: Vec<Workload> = current.iter().map(|(w, _, _)| (*w).clone()).collect();
    workloads.push(newcomer.0.clone());
    let mut reqs: Vec<Requirement> = current
        .iter()
        .map(|(_, b, r)| Requirement {
            batch: *b,
            lower_units: to_units(*r),
        })
        .collect();
    reqs.push(Requirement {
        batch: newcomer.1,
        lower_units: to_units(newcomer_r_lower),
    });
    let device = Device {
        members: (0..current.len()).collect(),
        units: reqs[..current.len()].iter().map(|r| r.lower_units).collect(),
    };
    alloc_on_device(
        &workloads,
        &reqs,
        &device,
        current.len(),
        hw,
        &mut PlanStats::default(),
    )
}

/// Builds the plan document for a finished set of devices, attaching
/// predictions and flagging SLO misses.
pub(crate) fn finalize(
    strategy: Strategy,
    workloads: &[Workload],
    reqs: &[Requirement],
    devices: &[Device],
    hw: &HardwareProfile,
) -> Result<Plan, PlanError> {
    let max_units = hw.max_units();
    let mut gpus = Vec::with_capacity(devices.len());
    let mut r_inter = BTreeMap::new();
    let mut violations = Vec::new();
    let mut diagnostics = Vec::new();
    for (gpu_index, dev) in devices.iter().enumerate() {
        let predicted = predict_members(workloads, reqs, &dev.members, &dev.units, hw)?;
        let mut allocations = Vec::with_capacity(dev.members.len());
        for ((&i, &u), p) in dev.members.iter().zip(&dev.units).zip(predicted) {
            let spec = &workloads[i].spec;
            let check = slo_check(&p, spec);
            if !check.latency_ok {
                diagnostics.push(format!(
                    "{}: predicted latency {:.3} ms exceeds half-SLO {:.3} ms",
                    spec.name,
                    p.t_inf_ms,
                    spec.slo_ms / 2.0
                ));
            }
            if !check.throughput_ok {
                diagnostics.push(format!(
                    "{}: predicted throughput {:.1} req/s below rate {:.1} req/s",
                    spec.name, p.throughput_rps, spec.rate_rps
                ));
            }
            if !check.ok() {
                violations.push(spec.name.clone());
            }
            r_inter.insert(
                spec.name.clone(),
                hw.units_to_r(u.saturating_sub(reqs[i].lower_units)),
            );
            allocations.push(PlannedAllocation {
                workload: spec.name.clone(),
                r: hw.units_to_r(u),
                batch: reqs[i].batch,
                predicted: Some(p),
            });
        }
        gpus.push(GpuPlan {
            gpu_index,
            fragment_r: hw.units_to_r(max_units.saturating_sub(dev.used_units())),
            allocations,
        });
    }
    violations.sort();
    Ok(Plan {
        strategy,
        gpu_type: hw.gpu_type.clone(),
        cost_per_hour: cost_of(gpus.len(), hw.price_per_hour),
        gpus,
        per_workload_r_inter: r_inter,
        violations,
        diagnostics,
    })
}

pub fn cost_of(gpu_count: usize, price_per_hour: f64) -> f64 {
    gpu_count as f64 * price_per_hour
}

/// Hourly cost of a plan on the given hardware.
pub fn plan_cost(plan: &Plan, hw: &HardwareProfile) -> f64 {
    cost_of(plan.gpus.len(), hw.price_per_hour)
}

/// Interference-aware provisioning.
pub fn plan(
    workloads: &[Workload],
    hw: &HardwareProfile,
    cfg: &PlannerConfig,
) -> Result<Plan, PlanError> {
    plan_with_stats(workloads, hw, cfg).map(|(p, _)| p)
}

pub fn plan_with_stats(
    workloads: &[Workload],
    hw: &HardwareProfile,
    cfg: &PlannerConfig,
) -> Result<(Plan, PlanStats), PlanError> {
    let reqs = requirements(workloads, hw, cfg)?;
    let mut stats = PlanStats::default();
    let max_units = hw.max_units();
    let mut devices: Vec<Device> = Vec::new();

    for w in descending_order(workloads, &reqs) {
        // Keyed on the summed allocation growth across the device, newcomer
        // included; starts at a whole device.
        let mut best: Option<(usize, Vec<u32>)> = None;
        let mut best_growth = max_units;
        for (j, dev) in devices.iter().enumerate() {
            let outcome = alloc_on_device(workloads, &reqs, dev, w, hw, &mut stats)?;
            if !outcome.feasible {
                continue;
            }
            let growth: u32 = outcome.units.iter().sum::<u32>() - dev.used_units();
            if growth < best_growth {
                best_growth = growth;
                best = Some((j, outcome.units));
            }
        }
        match best {
            Some((j, units)) => {
                devices[j].members.push(w);
                devices[j].units = units;
            }
            None => {
                let outcome = alloc_on_device(workloads, &reqs, &Device::default(), w, hw, &mut stats)?;
                if !outcome.feasible {
                    return Err(PlanError::InfeasibleResource {
                        workload: workloads[w].spec.name.clone(),
                        r_needed: hw.units_to_r(outcome.units[0]),
                    });
                }
                devices.push(Device {
                    members: vec![w],
                    units: outcome.units,
                });
            }
        }
    }

    let plan = finalize(Strategy::Igniter, workloads, &reqs, &devices, hw)?;
    Ok((plan, stats))
}

/// One GPU type with coefficients for every workload, in workload order.
#[derive(Debug, Clone, PartialEq)]
pub struct GpuTypeOption {
    pub hw: HardwareProfile,
    pub coefficients: Vec<WorkloadCoefficients>,
}

/// Plans on every GPU type and keeps the cheapest; ties go to the earliest
/// option. Types that cannot host every workload are skipped.
pub fn select_gpu_type(
    specs: &[WorkloadSpec],
    options: &[GpuTypeOption],
    cfg: &PlannerConfig,
) -> Result<Plan, PlanError> {
    let mut best: Option<Plan> = None;
    let mut failures = Vec::new();
    for opt in options {
        if opt.coefficients.len() != specs.len() {
            failures.push(format!(
                "{}: coefficients for {} of {} workloads",
                opt.hw.gpu_type,
                opt.coefficients.len(),
                specs.len()
            ));
            continue;
        }
        let workloads: Vec<Workload> = specs
            .iter()
            .zip(&opt.coefficients)
            .map(|(s, c)| Workload {
                spec: s.clone(),
                coef: c.clone(),
            })
            .collect();
        match plan(&workloads, &opt.hw, cfg) {
            Ok(p) => {
                if best.as_ref().is_none_or(|b| p.cost_per_hour < b.cost_per_hour) {
                    best = Some(p);
                }
            }
            Err(e) => failures.push(format!("{}: {e}", opt.hw.gpu_type)),
        }
    }
    best.ok_or(PlanError::NoFeasibleGpuType(failures))
}
