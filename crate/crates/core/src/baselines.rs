//! Interference-unaware baseline provisioning strategies.
//!
//! Both baselines size and place workloads without looking at co-location;
//! the returned plans still carry interference-inclusive predictions so
//! their SLO misses show up in `Plan::violations`.

use crate::model::{predict_residents, slo_check, HardwareProfile, Resident};
use crate::planner::{
    descending_order, finalize, requirements, Device, Plan, PlanError, PlannerConfig, Requirement,
    Strategy, Workload,
};

/// First-fit decreasing on the solo lower bound. Every workload gets exactly
/// its lower bound.
pub fn ffd_plus(
    workloads: &[Workload],
    hw: &HardwareProfile,
    cfg: &PlannerConfig,
) -> Result<Plan, PlanError> {
    let reqs = requirements(workloads, hw, cfg)?;
    let max_units = hw.max_units();
    let mut devices: Vec<Device> = Vec::new();
    for w in descending_order(workloads, &reqs) {
        let need = reqs[w].lower_units;
        match devices.iter_mut().find(|d| d.used_units() + need <= max_units) {
            Some(d) => {
                d.members.push(w);
                d.units.push(need);
            }
            None => devices.push(Device {
                members: vec![w],
                units: vec![need],
            }),
        }
    }
    finalize(Strategy::Ffd, workloads, &reqs, &devices, hw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestFitConfig {
    /// Allowed resource fractions, ascending.
    pub choices: Vec<f64>,
    /// A step up in resources is worth taking only if it raises solo
    /// throughput by at least this fraction.
    pub efficiency_threshold: f64,
    pub max_per_gpu: usize,
}

impl Default for BestFitConfig {
    fn default() -> Self {
        Self {
            choices: vec![0.2, 0.4, 0.5, 0.6, 0.8],
            efficiency_threshold: 0.10,
            max_per_gpu: 2,
        }
    }
}

fn units_for(r: f64, hw: &HardwareProfile) -> u32 {
    (r / hw.r_unit - 1e-9).ceil().max(1.0) as u32
}

/// Most efficient choice: the last one before solo throughput stops growing
/// by at least the threshold.
pub fn most_efficient_choice(throughputs: &[f64], threshold: f64) -> usize {
    for k in 1..throughputs.len() {
        let gain = throughputs[k] / throughputs[k - 1] - 1.0;
        if gain < threshold {
            return k - 1;
        }
    }
    throughputs.len().saturating_sub(1)
}

fn throughput_oriented_units(
    w: &Workload,
    req: &Requirement,
    hw: &HardwareProfile,
    cfg: &BestFitConfig,
) -> Result<u32, PlanError> {
    let mut throughputs = Vec::with_capacity(cfg.choices.len());
    let mut solo_ok = Vec::with_capacity(cfg.choices.len());
    for &r in &cfg.choices {
        let resident = Resident {
            spec: &w.spec,
            coef: &w.coef,
            r: hw.units_to_r(units_for(r, hw)),
            batch: req.batch,
        };
        let p = predict_residents(&[resident], hw)?[0];
        throughputs.push(p.throughput_rps);
        solo_ok.push(slo_check(&p, &w.spec).ok());
    }
    let efficient = most_efficient_choice(&throughputs, cfg.efficiency_threshold);
    let first_ok = solo_ok.iter().position(|&ok| ok).ok_or_else(|| PlanError::InfeasibleResource {
        workload: w.spec.name.clone(),
        r_needed: hw.units_to_r(req.lower_units),
    })?;
    Ok(units_for(cfg.choices[efficient.max(first_ok)], hw))
}

/// Throughput-oriented sizing from a fixed menu of fractions, best-fit
/// placement with at most `max_per_gpu` workloads per device.
pub fn bestfit_throughput(
    workloads: &[Workload],
    hw: &HardwareProfile,
    cfg: &PlannerConfig,
    bf: &BestFitConfig,
) -> Result<Plan, PlanError> {
    let reqs = requirements(workloads, hw, cfg)?;
    let max_units = hw.max_units();
    let mut sized = Vec::with_capacity(workloads.len());
    for (i, w) in workloads.iter().enumerate() {
        sized.push((i, throughput_oriented_units(w, &reqs[i], hw, bf)?));
    }
    sized.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| workloads[a.0].spec.name.cmp(&workloads[b.0].spec.name))
    });

    let mut devices: Vec<Device> = Vec::new();
    for (w, units) in sized {
        let target = devices
            .iter()
            .enumerate()
            .filter(|(_, d)| d.members.len() < bf.max_per_gpu && d.used_units() + units <= max_units)
            .min_by_key(|(j, d)| (max_units - d.used_units() - units, *j))
            .map(|(j, _)| j);
        match target {
            Some(j) => {
                devices[j].members.push(w);
                devices[j].units.push(units);
            }
            None => devices.push(Device {
                members: vec![w],
                units: vec![units],
            }),
        }
    }
    finalize(Strategy::Bestfit, workloads, &reqs, &devices, hw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{WorkloadCoefficients, WorkloadSpec};

    fn hw() -> HardwareProfile {
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

    /// A workload whose solo lower bound is exactly `target` units: pure
    /// `k3 / r` curve with no transfers or scheduling.
    fn sized(name: &str, target: u32) -> Workload {
        let slo_ms = 40.0;
        let delta = slo_ms / 2.0;
        let r = (target as f64 - 0.5) * 0.025;
        Workload {
            spec: WorkloadSpec {
                name: name.into(),
                slo_ms,
                rate_rps: 100.0,
                d_load_mb: 0.0,
                d_feedback_mb: 0.0,
            },
            coef: WorkloadCoefficients {
                n_kernels: 50,
                k_sch_ms: 0.0,
                k1: 0.0,
                k2: 0.0,
                k3: r * delta,
                k4: 0.0,
                k5: 0.0,
                alpha_power_w: 0.0,
                beta_power_w: 50.0,
                alpha_cacheutil: 0.0,
                beta_cacheutil: 0.3,
                alpha_cache: 0.4,
            },
        }
    }

    #[test]
    fn ffd_hand_trace() {
        let w = vec![sized("a", 24), sized("b", 20), sized("c", 16)];
        let p = ffd_plus(&w, &hw(), &PlannerConfig::default()).unwrap();
        assert_eq!(p.gpu_count(), 2);
        let names = |g: usize| -> Vec<&str> {
            p.gpus[g].allocations.iter().map(|a| a.workload.as_str()).collect()
        };
        assert_eq!(names(0), vec!["a", "c"]);
        assert_eq!(names(1), vec!["b"]);
        let rs: Vec<f64> = p.gpus[0].allocations.iter().map(|a| a.r).collect();
        assert_eq!(rs, vec![0.6, 0.4]);
    }

    #[test]
    fn ffd_reports_interference_violations() {
        // Each sits right at its solo bound; cache contention pushes both over.
        let w = vec![sized("a", 20), sized("b", 20)];
        let p = ffd_plus(&w, &hw(), &PlannerConfig::default()).unwrap();
        assert_eq!(p.gpu_count(), 1);
        assert_eq!(p.violations, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn single_workload_matches_interference_aware_plan() {
        let w = vec![sized("a", 13)];
        let ffd = ffd_plus(&w, &hw(), &PlannerConfig::default()).unwrap();
        let ign = crate::planner::plan(&w, &hw(), &PlannerConfig::default()).unwrap();
        assert_eq!(ffd.gpus, ign.gpus);
    }

    #[test]
    fn efficiency_rule() {
        // Saturates after 0.4: 0.5 adds only 2%.
        assert_eq!(most_efficient_choice(&[100.0, 150.0, 153.0, 154.0, 155.0], 0.1), 1);
        // Keeps growing: take the largest.
        assert_eq!(most_efficient_choice(&[100.0, 150.0, 200.0, 250.0, 300.0], 0.1), 4);
        // Flat from the start.
        assert_eq!(most_efficient_choice(&[100.0, 101.0, 102.0, 103.0, 104.0], 0.1), 0);
    }

    #[test]
    fn bestfit_caps_two_per_gpu() {
        let w = vec![sized("a", 2), sized("b", 2), sized("c", 2)];
        let p = bestfit_throughput(&w, &hw(), &PlannerConfig::default(), &BestFitConfig::default()).unwrap();
        assert!(p.gpu_count() >= 2);
        let allowed = [0.2, 0.4, 0.5, 0.6, 0.8];
        for g in &p.gpus {
            assert!(g.allocations.len() <= 2);
            for a in &g.allocations {
                assert!(allowed.iter().any(|c| (c - a.r).abs() < 1e-12), "r = {}", a.r);
            }
        }
    }

    #[test]
    fn bestfit_respects_solo_feasibility() {
        // Lower bound 0.7 forces the 0.8 choice regardless of efficiency.
        let w = vec![sized("a", 28)];
        let p = bestfit_throughput(&w, &hw(), &PlannerConfig::default(), &BestFitConfig::default()).unwrap();
        assert!((p.gpus[0].allocations[0].r - 0.8).abs() < 1e-12);

        let too_big = vec![sized("a", 36)];
        assert!(bestfit_throughput(&too_big, &hw(), &PlannerConfig::default(), &BestFitConfig::default()).is_err());
    }
}
