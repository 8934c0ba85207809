//! Interference-aware performance model for DNN inference workloads that
//! share a GPU spatially.
//!
//! Units are fixed throughout: latencies in milliseconds, data sizes in MB,
//! PCIe bandwidth in MB/ms (10 GB/s is 10), power in watts, frequency in MHz.
//! Request rates are requests/second at the API boundary and requests/ms
//! inside the formulas.
//!
//! Every function here is pure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when comparing summed resource fractions against `r_max`.
pub const RESOURCE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("active-time denominator r + k4 = {value} is not positive (r = {r}, k4 = {k4})")]
    NonPositiveDenominator { r: f64, k4: f64, value: f64 },
    #[error("device over-allocated: total r = {total} exceeds r_max = {max}")]
    OverAllocated { total: f64, max: f64 },
    #[error("no spec or coefficients for workload `{0}`")]
    UnknownWorkload(String),
    #[error("workload `{0}` is allocated more than once on the device")]
    DuplicateWorkload(String),
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },
}

fn invalid(what: impl Into<String>, reason: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        what: what.into(),
        reason: reason.into(),
    }
}

/// A workload's SLO contract and per-request transfer sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub name: String,
    /// Latency SLO in milliseconds.
    pub slo_ms: f64,
    /// Request arrival rate in requests/second.
    pub rate_rps: f64,
    /// Input size of one request, MB.
    pub d_load_mb: f64,
    /// Result size of one request, MB.
    pub d_feedback_mb: f64,
}

impl WorkloadSpec {
    /// Arrival rate in requests per millisecond.
    pub fn rate_per_ms(&self) -> f64 {
        self.rate_rps / 1000.0
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let what = || format!("workload spec `{}`", self.name);
        if self.name.is_empty() {
            return Err(invalid("workload spec", "empty name"));
        }
        if !(self.slo_ms > 0.0 && self.slo_ms.is_finite()) {
            return Err(invalid(what(), "slo_ms must be positive"));
        }
        if !(self.rate_rps > 0.0 && self.rate_rps.is_finite()) {
            return Err(invalid(what(), "rate_rps must be positive"));
        }
        if !(self.d_load_mb >= 0.0 && self.d_feedback_mb >= 0.0) {
            return Err(invalid(what(), "transfer sizes must be non-negative"));
        }
        Ok(())
    }
}

/// Workload-specific model coefficients for one GPU type.
///
/// `k1..k5` describe the solo active-time curve
/// `k_act = (k1*b^2 + k2*b + k3) / (r + k4) + k5`. Solo power and solo L2
/// cache utilization are linear in processing ability `b / k_act` (req/ms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadCoefficients {
    /// Kernels launched per inference.
    pub n_kernels: u32,
    /// Solo scheduling delay per kernel, ms.
    pub k_sch_ms: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub alpha_power_w: f64,
    pub beta_power_w: f64,
    pub alpha_cacheutil: f64,
    pub beta_cacheutil: f64,
    /// Active-time inflation per unit of co-runner cache utilization.
    pub alpha_cache: f64,
}

impl WorkloadCoefficients {
    pub fn validate(&self) -> Result<(), ModelError> {
        let what = "workload coefficients";
        if self.n_kernels == 0 {
            return Err(invalid(what, "n_kernels must be at least 1"));
        }
        if !(self.k_sch_ms >= 0.0) {
            return Err(invalid(what, "k_sch_ms must be non-negative"));
        }
        // r + k4 > 0 must hold on all of (0, 1].
        if !(self.k4 >= 0.0) {
            return Err(invalid(what, "k4 must be non-negative"));
        }
        if !(self.alpha_cache >= 0.0) {
            return Err(invalid(what, "alpha_cache must be non-negative"));
        }
        let all = [
            self.k1,
            self.k2,
            self.k3,
            self.k5,
            self.alpha_power_w,
            self.beta_power_w,
            self.alpha_cacheutil,
            self.beta_cacheutil,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid(what, "coefficients must be finite"));
        }
        Ok(())
    }
}

fn default_r_max() -> f64 {
    1.0
}

fn default_r_unit() -> f64 {
    0.025
}

fn default_freq_min_ratio() -> f64 {
    0.3
}

/// Hardware-specific coefficients of one GPU type, plus its allocation
/// granularity and hourly price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub gpu_type: String,
    /// Power cap P, watts.
    pub power_max_w: f64,
    /// Maximum frequency F, MHz.
    pub freq_max_mhz: f64,
    pub power_idle_w: f64,
    /// Available PCIe bandwidth, MB/ms.
    pub pcie_bw_mb_per_ms: f64,
    /// Frequency drop per watt above the cap (MHz/W, negative).
    pub alpha_f: f64,
    pub alpha_sch_ms: f64,
    pub beta_sch_ms: f64,
    /// Allocation granularity as a fraction of the device.
    #[serde(default = "default_r_unit")]
    pub r_unit: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    /// Dollars per hour for one device.
    pub price_per_hour: f64,
    /// Frequency floor as a fraction of `freq_max_mhz`.
    #[serde(default = "default_freq_min_ratio")]
    pub freq_min_ratio: f64,
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        let what = || format!("hardware profile `{}`", self.gpu_type);
        if !(self.power_idle_w >= 0.0 && self.power_max_w > self.power_idle_w) {
            return Err(invalid(what(), "need power_max_w > power_idle_w >= 0"));
        }
        if !(self.freq_max_mhz > 0.0) {
            return Err(invalid(what(), "freq_max_mhz must be positive"));
        }
        if !(self.pcie_bw_mb_per_ms > 0.0) {
            return Err(invalid(what(), "pcie_bw_mb_per_ms must be positive"));
        }
        if !(self.r_unit > 0.0 && self.r_unit <= self.r_max) {
            return Err(invalid(what(), "need 0 < r_unit <= r_max"));
        }
        if (self.r_max - 1.0).abs() > RESOURCE_EPSILON {
            return Err(invalid(what(), "r_max must be 1.0"));
        }
        let units = self.r_max / self.r_unit;
        if (units - units.round()).abs() > 1e-6 {
            return Err(invalid(what(), "r_max must be a whole number of r_unit"));
        }
        if !(self.price_per_hour > 0.0) {
            return Err(invalid(what(), "price_per_hour must be positive"));
        }
        if !(self.freq_min_ratio > 0.0 && self.freq_min_ratio <= 1.0) {
            return Err(invalid(what(), "freq_min_ratio must be in (0, 1]"));
        }
        if !(self.alpha_f.is_finite() && self.alpha_sch_ms.is_finite() && self.beta_sch_ms.is_finite())
        {
            return Err(invalid(what(), "interference coefficients must be finite"));
        }
        Ok(())
    }

    /// Number of `r_unit` slices on one device.
    pub fn max_units(&self) -> u32 {
        (self.r_max / self.r_unit).round() as u32
    }

    /// Resource fraction of `units` allocation slices.
    pub fn units_to_r(&self, units: u32) -> f64 {
        units as f64 * self.r_max / self.max_units() as f64
    }

    pub fn freq_min_mhz(&self) -> f64 {
        self.freq_min_ratio * self.freq_max_mhz
    }
}

/// One workload's share of a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub workload: String,
    pub r: f64,
    pub batch: u32,
}

/// Predicted performance of one workload in its current co-location state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub t_load_ms: f64,
    pub t_sch_ms: f64,
    pub t_act_ms: f64,
    pub freq_mhz: f64,
    pub t_gpu_ms: f64,
    pub t_feedback_ms: f64,
    pub t_inf_ms: f64,
    pub throughput_rps: f64,
    pub power_w: f64,
    pub cache_util: f64,
}

/// Data loading and result feedback latencies for a batch.
pub fn transfer_latencies(spec: &WorkloadSpec, batch: u32, hw: &HardwareProfile) -> (f64, f64) {
    let b = batch as f64;
    (
        spec.d_load_mb * b / hw.pcie_bw_mb_per_ms,
        spec.d_feedback_mb * b / hw.pcie_bw_mb_per_ms,
    )
}

/// GPU active time of the workload running alone with resource fraction `r`.
pub fn solo_active_time(
    coef: &WorkloadCoefficients,
    batch: u32,
    r: f64,
) -> Result<f64, ModelError> {
    let denom = r + coef.k4;
    if !(denom > 0.0) {
        return Err(ModelError::NonPositiveDenominator {
            r,
            k4: coef.k4,
            value: denom,
        });
    }
    let b = batch as f64;
    Ok((coef.k1 * b * b + coef.k2 * b + coef.k3) / denom + coef.k5)
}

fn processing_ability(coef: &WorkloadCoefficients, batch: u32, r: f64) -> Result<f64, ModelError> {
    Ok(batch as f64 / solo_active_time(coef, batch, r)?)
}

/// Solo power draw, watts. Never negative.
pub fn solo_power(coef: &WorkloadCoefficients, batch: u32, r: f64) -> Result<f64, ModelError> {
    let x = processing_ability(coef, batch, r)?;
    Ok((coef.alpha_power_w * x + coef.beta_power_w).max(0.0))
}

/// Solo L2 cache utilization as a fraction in `[0, 1]`.
pub fn solo_cache_util(coef: &WorkloadCoefficients, batch: u32, r: f64) -> Result<f64, ModelError> {
    let x = processing_ability(coef, batch, r)?;
    Ok((coef.alpha_cacheutil * x + coef.beta_cacheutil).clamp(0.0, 1.0))
}

/// Extra per-kernel scheduling delay on a device hosting `n_colocated`
/// workloads (the count includes the workload itself).
pub fn interference_sched_delay(hw: &HardwareProfile, n_colocated: usize) -> f64 {
    if n_colocated <= 1 {
        0.0
    } else {
        (hw.alpha_sch_ms * n_colocated as f64 + hw.beta_sch_ms).max(0.0)
    }
}

/// Total kernel scheduling delay of one inference.
pub fn sched_delay(coef: &WorkloadCoefficients, hw: &HardwareProfile, n_colocated: usize) -> f64 {
    (coef.k_sch_ms + interference_sched_delay(hw, n_colocated)) * coef.n_kernels as f64
}

/// Active time inflated by L2 contention. `co_cache_sum` excludes the
/// workload's own utilization.
pub fn active_time_with_interference(
    coef: &WorkloadCoefficients,
    batch: u32,
    r: f64,
    co_cache_sum: f64,
) -> Result<f64, ModelError> {
    Ok(solo_active_time(coef, batch, r)? * (1.0 + coef.alpha_cache * co_cache_sum))
}

pub fn power_demand(hw: &HardwareProfile, solo_powers: &[f64]) -> f64 {
    solo_powers.iter().fold(hw.power_idle_w, |acc, p| acc + p)
}

/// Device frequency under the power cap, floored at `freq_min_mhz`.
pub fn gpu_frequency(hw: &HardwareProfile, p_demand: f64) -> f64 {
    if p_demand <= hw.power_max_w {
        hw.freq_max_mhz
    } else {
        (hw.freq_max_mhz + hw.alpha_f * (p_demand - hw.power_max_w)).max(hw.freq_min_mhz())
    }
}

/// One resident of a device, borrowed from wherever the caller keeps it.
#[derive(Debug, Clone, Copy)]
pub struct Resident<'a> {
    pub spec: &'a WorkloadSpec,
    pub coef: &'a WorkloadCoefficients,
    pub r: f64,
    pub batch: u32,
}

/// Predicts every resident of one device. Output order matches input order.
///
/// Co-runner sums are accumulated in resident order, so appending a resident
/// can never shrink another resident's cache or power sums.
pub fn predict_residents(
    residents: &[Resident<'_>],
    hw: &HardwareProfile,
) -> Result<Vec<LatencyBreakdown>, ModelError> {
    let total_r: f64 = residents.iter().map(|w| w.r).sum();
    if total_r > hw.r_max + RESOURCE_EPSILON {
        return Err(ModelError::OverAllocated {
            total: total_r,
            max: hw.r_max,
        });
    }
    let n = residents.len();
    let mut solo = Vec::with_capacity(n);
    for w in residents {
        if !(w.r > 0.0) {
            return Err(invalid(
                format!("allocation of `{}`", w.spec.name),
                "r must be positive",
            ));
        }
        if w.batch == 0 {
            return Err(invalid(
                format!("allocation of `{}`", w.spec.name),
                "batch must be at least 1",
            ));
        }
        let k_act = solo_active_time(w.coef, w.batch, w.r)?;
        let x = w.batch as f64 / k_act;
        let power = (w.coef.alpha_power_w * x + w.coef.beta_power_w).max(0.0);
        let cache = (w.coef.alpha_cacheutil * x + w.coef.beta_cacheutil).clamp(0.0, 1.0);
        solo.push((k_act, power, cache));
    }

    let demand = solo.iter().fold(hw.power_idle_w, |acc, s| acc + s.1);
    let freq = gpu_frequency(hw, demand);
    let slowdown = hw.freq_max_mhz / freq;

    let mut out = Vec::with_capacity(n);
    for (i, w) in residents.iter().enumerate() {
        let (k_act, power, cache) = solo[i];
        let co_cache: f64 = solo
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .fold(0.0, |acc, (_, s)| acc + s.2);
        let t_act = k_act * (1.0 + w.coef.alpha_cache * co_cache);
        let t_sch = sched_delay(w.coef, hw, n);
        let t_gpu = if freq == hw.freq_max_mhz {
            t_sch + t_act
        } else {
            (t_sch + t_act) * slowdown
        };
        let (t_load, t_feedback) = transfer_latencies(w.spec, w.batch, hw);
        let t_inf = t_load + t_gpu + t_feedback;
        out.push(LatencyBreakdown {
            t_load_ms: t_load,
            t_sch_ms: t_sch,
            t_act_ms: t_act,
            freq_mhz: freq,
            t_gpu_ms: t_gpu,
            t_feedback_ms: t_feedback,
            t_inf_ms: t_inf,
            throughput_rps: w.batch as f64 / (t_gpu + t_feedback) * 1000.0,
            power_w: power,
            cache_util: cache,
        });
    }
    Ok(out)
}

/// Predicts every workload on one device, keyed by workload name.
pub fn predict_gpu(
    allocations: &[Allocation],
    specs: &BTreeMap<String, WorkloadSpec>,
    coefs: &BTreeMap<String, WorkloadCoefficients>,
    hw: &HardwareProfile,
) -> Result<BTreeMap<String, LatencyBreakdown>, ModelError> {
    let mut residents = Vec::with_capacity(allocations.len());
    for (i, a) in allocations.iter().enumerate() {
        if allocations[..i].iter().any(|o| o.workload == a.workload) {
            return Err(ModelError::DuplicateWorkload(a.workload.clone()));
        }
        let spec = specs
            .get(&a.workload)
            .ok_or_else(|| ModelError::UnknownWorkload(a.workload.clone()))?;
        let coef = coefs
            .get(&a.workload)
            .ok_or_else(|| ModelError::UnknownWorkload(a.workload.clone()))?;
        residents.push(Resident {
            spec,
            coef,
            r: a.r,
            batch: a.batch,
        });
    }
    let predicted = predict_residents(&residents, hw)?;
    Ok(allocations
        .iter()
        .map(|a| a.workload.clone())
        .zip(predicted)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SloCheck {
    pub latency_ok: bool,
    pub throughput_ok: bool,
}

impl SloCheck {
    pub fn ok(&self) -> bool {
        self.latency_ok && self.throughput_ok
    }
}

/// Batch latency must fit half the SLO; the other half is left for batching
/// and queueing.
pub fn slo_check(breakdown: &LatencyBreakdown, spec: &WorkloadSpec) -> SloCheck {
    SloCheck {
        latency_ok: breakdown.t_inf_ms <= spec.slo_ms / 2.0,
        throughput_ok: breakdown.throughput_rps >= spec.rate_rps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn v100() -> HardwareProfile {
        HardwareProfile {
            gpu_type: "V100".into(),
            power_max_w: 300.0,
            freq_max_mhz: 1530.0,
            power_idle_w: 53.5,
            pcie_bw_mb_per_ms: 10.0,
            alpha_f: -1.025,
            alpha_sch_ms: 0.00475,
            beta_sch_ms: -0.00902,
            r_unit: 0.025,
            r_max: 1.0,
            price_per_hour: 3.06,
            freq_min_ratio: 0.3,
        }
    }

    fn coef() -> WorkloadCoefficients {
        WorkloadCoefficients {
            n_kernels: 100,
            k_sch_ms: 0.002,
            k1: 0.001,
            k2: 0.05,
            k3: 0.5,
            k4: 0.05,
            k5: 0.2,
            alpha_power_w: 0.0,
            beta_power_w: 60.0,
            alpha_cacheutil: 0.0,
            beta_cacheutil: 0.2,
            alpha_cache: 0.0,
        }
    }

    fn spec() -> WorkloadSpec {
        WorkloadSpec {
            name: "resnet".into(),
            slo_ms: 40.0,
            rate_rps: 400.0,
            d_load_mb: 0.574,
            d_feedback_mb: 0.004,
        }
    }

    #[test]
    fn transfer_latency_examples() {
        let hw = v100();
        let (load, fb) = transfer_latencies(&spec(), 8, &hw);
        assert_relative_eq!(load, 0.4592, max_relative = 1e-12);
        assert_relative_eq!(fb, 0.0032, max_relative = 1e-12);
        let mut s = spec();
        s.d_load_mb = 0.0;
        assert_eq!(transfer_latencies(&s, 17, &hw).0, 0.0);
    }

    #[test]
    fn active_time_examples() {
        let c = coef();
        assert_relative_eq!(solo_active_time(&c, 8, 0.30).unwrap(), 0.964 / 0.35 + 0.2, max_relative = 1e-12);
        assert_relative_eq!(solo_active_time(&c, 8, 0.30).unwrap(), 2.9543, epsilon = 1e-4);
        assert_relative_eq!(solo_active_time(&c, 8, 0.025).unwrap(), 13.0533, epsilon = 1e-4);
        let unit = WorkloadCoefficients { k1: 0.0, k2: 0.0, k3: 1.0, k4: 0.0, k5: 0.0, ..c.clone() };
        assert_eq!(solo_active_time(&unit, 1, 1.0).unwrap(), 1.0);
        let bad = WorkloadCoefficients { k4: -1.5, ..c };
        assert!(matches!(
            solo_active_time(&bad, 1, 0.5),
            Err(ModelError::NonPositiveDenominator { .. })
        ));
    }

    #[test]
    fn power_and_cache_examples() {
        let c = WorkloadCoefficients {
            alpha_power_w: 50.0,
            beta_power_w: 60.0,
            alpha_cacheutil: 0.05,
            beta_cacheutil: 0.10,
            ..coef()
        };
        let k_act = solo_active_time(&c, 8, 0.3).unwrap();
        let p = solo_power(&c, 8, 0.3).unwrap();
        assert_relative_eq!(p, 50.0 * 8.0 / k_act + 60.0, max_relative = 1e-12);
        assert_relative_eq!(p, 195.39, epsilon = 0.01);
        assert_relative_eq!(solo_cache_util(&c, 8, 0.3).unwrap(), 0.2354, epsilon = 1e-4);

        let flat = WorkloadCoefficients { alpha_power_w: 0.0, ..c.clone() };
        assert_eq!(solo_power(&flat, 3, 0.7).unwrap(), 60.0);

        let hot = WorkloadCoefficients { alpha_cacheutil: 10.0, ..c };
        assert_eq!(solo_cache_util(&hot, 32, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn sched_delay_examples() {
        let hw = v100();
        assert_eq!(interference_sched_delay(&hw, 1), 0.0);
        // 5 * 0.00475 - 0.00902
        assert_relative_eq!(interference_sched_delay(&hw, 5), 0.01473, max_relative = 1e-12);
        assert_relative_eq!(interference_sched_delay(&hw, 2), 0.00048, max_relative = 1e-9);
        assert_relative_eq!(sched_delay(&coef(), &hw, 1), 0.2, max_relative = 1e-12);
        assert_relative_eq!(sched_delay(&coef(), &hw, 3), 0.723, max_relative = 1e-12);

        let steep = HardwareProfile { beta_sch_ms: -1.0, ..hw };
        assert_eq!(interference_sched_delay(&steep, 2), 0.0);
    }

    #[test]
    fn cache_contention_examples() {
        let c = WorkloadCoefficients { alpha_cache: 0.25, ..coef() };
        let k_act = solo_active_time(&c, 8, 0.3).unwrap();
        assert_eq!(active_time_with_interference(&c, 8, 0.3, 0.0).unwrap(), k_act);
        assert_relative_eq!(
            active_time_with_interference(&c, 8, 0.3, 0.4).unwrap(),
            k_act * 1.1,
            max_relative = 1e-12
        );
        let insensitive = WorkloadCoefficients { alpha_cache: 0.0, ..c };
        assert_eq!(active_time_with_interference(&insensitive, 8, 0.3, 0.9).unwrap(), k_act);
    }

    #[test]
    fn power_and_frequency_examples() {
        let hw = v100();
        assert_eq!(power_demand(&hw, &[]), 53.5);
        assert_relative_eq!(power_demand(&hw, &[195.39]), 248.89, max_relative = 1e-12);
        assert_eq!(power_demand(&hw, &[150.0, 150.0]), 353.5);

        assert_eq!(gpu_frequency(&hw, 250.0), 1530.0);
        assert_eq!(gpu_frequency(&hw, 300.0), 1530.0);
        assert_relative_eq!(gpu_frequency(&hw, 310.0), 1519.75, max_relative = 1e-12);
        assert_relative_eq!(gpu_frequency(&hw, 400.0), 1427.5, max_relative = 1e-12);
        assert_eq!(gpu_frequency(&hw, 10_000.0), 0.3 * 1530.0);
    }

    #[test]
    fn predict_single_workload() {
        let hw = v100();
        let s = spec();
        let c = coef();
        let specs = BTreeMap::from([(s.name.clone(), s.clone())]);
        let coefs = BTreeMap::from([(s.name.clone(), c)]);
        let allocs = vec![Allocation { workload: s.name.clone(), r: 0.025, batch: 8 }];
        let out = predict_gpu(&allocs, &specs, &coefs, &hw).unwrap();
        let b = out["resnet"];
        assert_eq!(b.freq_mhz, 1530.0);
        assert_relative_eq!(b.t_gpu_ms, 13.2533, epsilon = 1e-4);
        assert_relative_eq!(b.t_inf_ms, 13.7157, epsilon = 1e-4);
        assert_eq!(b.t_gpu_ms, b.t_sch_ms + b.t_act_ms);
        assert!(slo_check(&b, &s).ok());

        assert!(predict_gpu(&[], &specs, &coefs, &hw).unwrap().is_empty());
    }

    #[test]
    fn predict_two_identical_workloads() {
        let hw = HardwareProfile { alpha_sch_ms: 0.0, beta_sch_ms: 0.0, ..v100() };
        let c = WorkloadCoefficients { alpha_cache: 0.25, ..coef() };
        let mut specs = BTreeMap::new();
        let mut coefs = BTreeMap::new();
        for name in ["a", "b"] {
            specs.insert(name.to_string(), WorkloadSpec { name: name.into(), ..spec() });
            coefs.insert(name.to_string(), c.clone());
        }
        let allocs: Vec<_> = ["a", "b"]
            .iter()
            .map(|n| Allocation { workload: n.to_string(), r: 0.3, batch: 8 })
            .collect();
        let out = predict_gpu(&allocs, &specs, &coefs, &hw).unwrap();
        let solo = solo_active_time(&c, 8, 0.3).unwrap();
        for b in out.values() {
            assert_relative_eq!(b.t_act_ms, solo * 1.05, max_relative = 1e-12);
        }
    }

    #[test]
    fn predict_rejects_bad_allocations() {
        let hw = v100();
        let s = spec();
        let specs = BTreeMap::from([(s.name.clone(), s.clone())]);
        let coefs = BTreeMap::from([(s.name.clone(), coef())]);
        let over = vec![Allocation { workload: s.name.clone(), r: 1.2, batch: 8 }];
        assert!(matches!(
            predict_gpu(&over, &specs, &coefs, &hw),
            Err(ModelError::OverAllocated { .. })
        ));
        let unknown = vec![Allocation { workload: "x".into(), r: 0.2, batch: 8 }];
        assert!(matches!(
            predict_gpu(&unknown, &specs, &coefs, &hw),
            Err(ModelError::UnknownWorkload(_))
        ));
        let dup = vec![
            Allocation { workload: s.name.clone(), r: 0.2, batch: 8 },
            Allocation { workload: s.name.clone(), r: 0.2, batch: 8 },
        ];
        assert!(matches!(
            predict_gpu(&dup, &specs, &coefs, &hw),
            Err(ModelError::DuplicateWorkload(_))
        ));
    }

    #[test]
    fn slo_check_boundaries() {
        let s = spec();
        let mut b = LatencyBreakdown {
            t_load_ms: 0.0,
            t_sch_ms: 0.0,
            t_act_ms: 0.0,
            freq_mhz: 1530.0,
            t_gpu_ms: 0.0,
            t_feedback_ms: 0.0,
            t_inf_ms: 13.72,
            throughput_rps: 500.0,
            power_w: 0.0,
            cache_util: 0.0,
        };
        assert!(slo_check(&b, &s).latency_ok);
        b.t_inf_ms = 20.0;
        assert!(slo_check(&b, &s).latency_ok);
        b.throughput_rps = 399.9;
        assert!(!slo_check(&b, &s).throughput_ok);
    }

    #[test]
    fn validation() {
        assert!(v100().validate().is_ok());
        assert!(HardwareProfile { r_unit: 0.03, ..v100() }.validate().is_err());
        assert!(HardwareProfile { power_idle_w: 400.0, ..v100() }.validate().is_err());
        assert!(WorkloadCoefficients { n_kernels: 0, ..coef() }.validate().is_err());
        assert!(WorkloadSpec { slo_ms: 0.0, ..spec() }.validate().is_err());
        assert_eq!(v100().max_units(), 40);
    }
}
