//! Exhaustive reference planner for tiny instances.
//!
//! Batches are fixed at the appropriate batch size; every assignment of
//! workloads to at most `max_gpus` devices and every allocation on the
//! `r_unit` grid is checked against the model. The optimum is the
//! lexicographic minimum of (GPU count, total allocated units, partition,
//! unit vector).

use thiserror::Error;

use crate::model::{slo_check, HardwareProfile};
use crate::planner::{finalize, requirements, Device, Plan, PlanError, PlannerConfig, Requirement, Strategy, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_workloads: usize,
    pub max_gpus: usize,
    /// Cap on model evaluations of candidate allocations.
    pub max_evaluations: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_workloads: 4,
            max_gpus: 3,
            max_evaluations: 100_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{count} workloads exceed the oracle limit of {limit}")]
    TooManyWorkloads { count: usize, limit: usize },
    #[error("enumeration needs {needed} evaluations, budget is {cap}")]
    BudgetExceeded { needed: u64, cap: u64 },
    #[error("no allocation on at most {max_gpus} GPUs satisfies every SLO")]
    Infeasible { max_gpus: usize },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of candidate unit vectors the oracle will evaluate.
pub fn evaluation_count(n_workloads: usize, max_units: u32) -> u64 {
    // Subset sizes 1..=n, C(n, k) subsets each with C(max_units, k) vectors
    // of positive entries summing to at most max_units.
    (1..=n_workloads as u64)
        .map(|k| binomial(n_workloads as u64, k).saturating_mul(binomial(max_units as u64, k)))
        .fold(0u64, u64::saturating_add)
}

struct SubsetSearch<'a> {
    workloads: &'a [Workload],
    reqs: &'a [Requirement],
    hw: &'a HardwareProfile,
    members: Vec<usize>,
    max_units: u32,
    best: Option<(u32, Vec<u32>)>,
}

impl SubsetSearch<'_> {
    fn feasible(&self, units: &[u32]) -> Result<bool, PlanError> {
        let predicted = crate::planner::predict_members(self.workloads, self.reqs, &self.members, units, self.hw)?;
        Ok(predicted
            .iter()
            .zip(&self.members)
            .all(|(p, &i)| slo_check(p, &self.workloads[i].spec).ok()))
    }

    /// Lexicographic walk; the first vector found at a given total wins ties.
    fn walk(&mut self, units: &mut Vec<u32>, used: u32) -> Result<(), PlanError> {
        let k = self.members.len();
        let pos = units.len();
        if pos == k {
            if self.best.as_ref().is_none_or(|(t, _)| used < *t) && self.feasible(units)? {
                self.best = Some((used, units.clone()));
            }
            return Ok(());
        }
        let remaining_slots = (k - pos - 1) as u32;
        let mut u = 1;
        while used + u + remaining_slots <= self.max_units {
            if let Some((t, _)) = &self.best {
                if used + u + remaining_slots >= *t {
                    break;
                }
            }
            units.push(u);
            self.walk(units, used + u)?;
            units.pop();
            u += 1;
        }
        Ok(())
    }
}

/// Restricted-growth strings for set partitions of `n` items into at most
/// `max_blocks` blocks, in lexicographic order.
fn partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, max_blocks: usize, cur: &mut Vec<usize>, top: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let limit = if cur.is_empty() { 0 } else { (top + 1).min(max_blocks - 1) };
        for b in 0..=limit {
            cur.push(b);
            rec(n, max_blocks, cur, top.max(b), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 && max_blocks > 0 {
        rec(n, max_blocks, &mut Vec::with_capacity(n), 0, &mut out);
    }
    out
}

pub fn exhaustive_plan(
    workloads: &[Workload],
    hw: &HardwareProfile,
    cfg: &PlannerConfig,
    budget: &OracleBudget,
) -> Result<Plan, OracleError> {
    let n = workloads.len();
    if n > budget.max_workloads {
        return Err(OracleError::TooManyWorkloads {
            count: n,
            limit: budget.max_workloads,
        });
    }
    let reqs = requirements(workloads, hw, cfg)?;
    let max_units = hw.max_units();
    let needed = evaluation_count(n, max_units);
    if needed > budget.max_evaluations {
        return Err(OracleError::BudgetExceeded {
            needed,
            cap: budget.max_evaluations,
        });
    }
    if n == 0 {
        return Ok(finalize(Strategy::Oracle, workloads, &reqs, &[], hw)?);
    }

    // Best allocation for every non-empty subset, indexed by bitmask.
    let mut subset_best: Vec<Option<(u32, Vec<u32>)>> = vec![None; 1 << n];
    for mask in 1usize..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut search = SubsetSearch {
            workloads,
            reqs: &reqs,
            hw,
            members,
            max_units,
            best: None,
        };
        search.walk(&mut Vec::new(), 0)?;
        subset_best[mask] = search.best;
    }

    type Key = (usize, u32, Vec<usize>, Vec<u32>);
    let mut best: Option<(Key, Vec<Device>)> = None;
    for rgs in partitions(n, budget.max_gpus) {
        let blocks = rgs.iter().max().map_or(0, |m| m + 1);
        let mut devices = Vec::with_capacity(blocks);
        let mut per_workload = vec![0u32; n];
        let mut total = 0;
        let mut ok = true;
        for b in 0..blocks {
            let mask = rgs
                .iter()
                .enumerate()
                .filter(|(_, &blk)| blk == b)
                .fold(0usize, |m, (i, _)| m | (1 << i));
            match &subset_best[mask] {
                Some((t, units)) => {
                    total += t;
                    let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                    for (&i, &u) in members.iter().zip(units) {
                        per_workload[i] = u;
                    }
                    devices.push(Device {
                        members,
                        units: units.clone(),
                    });
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let key = (blocks, total, rgs, per_workload);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, devices));
        }
    }

    let (_, devices) = best.ok_or(OracleError::Infeasible {
        max_gpus: budget.max_gpus,
    })?;
    Ok(finalize(Strategy::Oracle, workloads, &reqs, &devices, hw)?)
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
            alpha_f: 0.0,
            alpha_sch_ms: 0.0,
            beta_sch_ms: 0.0,
            r_unit: 0.025,
            r_max: 1.0,
            price_per_hour: 3.06,
            freq_min_ratio: 0.3,
        }
    }

    fn sized(name: &str, target: u32) -> Workload {
        let r = (target as f64 - 0.5) * 0.025;
        Workload {
            spec: WorkloadSpec {
                name: name.into(),
                slo_ms: 40.0,
                rate_rps: 100.0,
                d_load_mb: 0.0,
                d_feedback_mb: 0.0,
            },
            coef: WorkloadCoefficients {
                n_kernels: 10,
                k_sch_ms: 0.0,
                k1: 0.0,
                k2: 0.0,
                k3: r * 20.0,
                k4: 0.0,
                k5: 0.0,
                alpha_power_w: 0.0,
                beta_power_w: 40.0,
                alpha_cacheutil: 0.0,
                beta_cacheutil: 0.0,
                alpha_cache: 0.0,
            },
        }
    }

    #[test]
    fn partition_counts() {
        // Bell numbers, and the truncated counts for at most 3 blocks.
        assert_eq!(partitions(3, 3).len(), 5);
        assert_eq!(partitions(4, 4).len(), 15);
        assert_eq!(partitions(4, 3).len(), 14);
        assert_eq!(partitions(4, 1).len(), 1);
    }

    #[test]
    fn pigeonhole_split() {
        let w = vec![sized("a", 24), sized("b", 24)];
        let p = exhaustive_plan(&w, &hw(), &PlannerConfig::default(), &OracleBudget::default()).unwrap();
        assert_eq!(p.gpu_count(), 2);
        assert!(p.violations.is_empty());
    }

    #[test]
    fn single_workload_gets_lower_bound() {
        let w = vec![sized("a", 13)];
        let p = exhaustive_plan(&w, &hw(), &PlannerConfig::default(), &OracleBudget::default()).unwrap();
        assert_eq!(p.gpu_count(), 1);
        assert!((p.gpus[0].allocations[0].r - 13.0 * 0.025).abs() < 1e-12);
    }

    #[test]
    fn infeasible_within_gpu_limit() {
        let w = vec![sized("a", 30), sized("b", 30), sized("c", 30)];
        let budget = OracleBudget { max_gpus: 2, ..OracleBudget::default() };
        assert!(matches!(
            exhaustive_plan(&w, &hw(), &PlannerConfig::default(), &budget),
            Err(OracleError::Infeasible { max_gpus: 2 })
        ));
    }

    #[test]
    fn budget_guard() {
        let w = vec![sized("a", 2), sized("b", 2), sized("c", 2)];
        let budget = OracleBudget { max_evaluations: 1000, ..OracleBudget::default() };
        assert!(matches!(
            exhaustive_plan(&w, &hw(), &PlannerConfig::default(), &budget),
            Err(OracleError::BudgetExceeded { .. })
        ));
        let five: Vec<_> = (0..5).map(|i| sized(&format!("w{i}"), 2)).collect();
        assert!(matches!(
            exhaustive_plan(&five, &hw(), &PlannerConfig::default(), &OracleBudget::default()),
            Err(OracleError::TooManyWorkloads { .. })
        ));
    }

    #[test]
    fn evaluation_count_matches_brute_force() {
        // Count positive vectors with sum <= 6 directly.
        let brute = |k: usize| -> u64 {
            let mut count = 0;
            let mut v = vec![1u32; k];
            loop {
                if v.iter().sum::<u32>() <= 6 {
                    count += 1;
                }
                let mut i = 0;
                loop {
                    if i == k {
                        return count;
                    }
                    v[i] += 1;
                    if v[i] <= 6 {
                        break;
                    }
                    v[i] = 1;
                    i += 1;
                }
            }
        };
        let expected: u64 = (1..=3).map(|k| binomial(3, k as u64) * brute(k)).sum();
        assert_eq!(evaluation_count(3, 6), expected);
    }
}
