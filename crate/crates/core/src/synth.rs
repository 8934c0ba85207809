//! Fixture hardware, fixture models and seeded random workload generators.
//!
//! The V100 profile uses measured hardware coefficients. The T4 profile and
//! all per-model coefficients are illustrative fixtures, shaped like real
//! image models but not measured.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::calibration::{default_profile_grid, SoloSample};
use crate::model::{solo_active_time, solo_cache_util, solo_power, HardwareProfile, WorkloadCoefficients, WorkloadSpec};
use crate::planner::{requirement, GpuTypeOption, PlannerConfig, Workload};

/// One 224x224x3 float32 image, MB.
pub const IMAGE_MB: f64 = 0.574;

pub fn v100_profile() -> HardwareProfile {
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

pub fn t4_profile() -> HardwareProfile {
    HardwareProfile {
        gpu_type: "T4".into(),
        power_max_w: 70.0,
        freq_max_mhz: 1590.0,
        power_idle_w: 10.0,
        pcie_bw_mb_per_ms: 10.0,
        alpha_f: -6.0,
        alpha_sch_ms: 0.00475,
        beta_sch_ms: -0.00902,
        r_unit: 0.025,
        r_max: 1.0,
        price_per_hour: 0.526,
        freq_min_ratio: 0.3,
    }
}

#[allow(clippy::too_many_arguments)]
fn coef(
    n_kernels: u32,
    k: [f64; 5],
    power: (f64, f64),
    cache: (f64, f64),
    alpha_cache: f64,
) -> WorkloadCoefficients {
    WorkloadCoefficients {
        n_kernels,
        k_sch_ms: 0.002,
        k1: k[0],
        k2: k[1],
        k3: k[2],
        k4: k[3],
        k5: k[4],
        alpha_power_w: power.0,
        beta_power_w: power.1,
        alpha_cacheutil: cache.0,
        beta_cacheutil: cache.1,
        alpha_cache,
    }
}

pub fn alexnet_v100() -> WorkloadCoefficients {
    coef(20, [0.0, 0.02, 0.15, 0.02, 0.1], (15.0, 50.0), (0.01, 0.05), 0.15)
}

pub fn resnet50_v100() -> WorkloadCoefficients {
    coef(100, [0.001, 0.05, 0.5, 0.05, 0.2], (50.0, 60.0), (0.05, 0.10), 0.25)
}

pub fn vgg19_v100() -> WorkloadCoefficients {
    coef(50, [0.002, 0.12, 0.8, 0.03, 0.3], (60.0, 70.0), (0.04, 0.12), 0.3)
}

pub fn ssd_v100() -> WorkloadCoefficients {
    coef(150, [0.003, 0.15, 1.0, 0.05, 0.4], (55.0, 65.0), (0.05, 0.15), 0.35)
}

/// Slower, lower-power counterpart of a V100 fixture.
pub fn t4_from_v100(c: &WorkloadCoefficients) -> WorkloadCoefficients {
    WorkloadCoefficients {
        k1: c.k1 * 2.2,
        k2: c.k2 * 2.2,
        k3: c.k3 * 2.2,
        k5: c.k5 * 1.5,
        k_sch_ms: c.k_sch_ms * 1.2,
        alpha_power_w: c.alpha_power_w * 0.25 * 2.2,
        beta_power_w: c.beta_power_w * 0.2,
        ..c.clone()
    }
}

fn spec(name: &str, slo_ms: f64, rate_rps: f64) -> WorkloadSpec {
    WorkloadSpec {
        name: name.into(),
        slo_ms,
        rate_rps,
        d_load_mb: IMAGE_MB,
        d_feedback_mb: 0.004,
    }
}

/// The three four-model applications: (SLO ms, rate req/s) for AlexNet,
/// ResNet-50, VGG-19 and SSD.
pub fn application(app: usize) -> Vec<WorkloadSpec> {
    let table: [[(f64, f64); 4]; 3] = [
        [(10.0, 1200.0), (20.0, 400.0), (20.0, 300.0), (25.0, 150.0)],
        [(15.0, 400.0), (30.0, 600.0), (30.0, 400.0), (40.0, 50.0)],
        [(20.0, 800.0), (40.0, 200.0), (40.0, 200.0), (55.0, 300.0)],
    ];
    let names = ["alexnet", "resnet50", "vgg19", "ssd"];
    table[app - 1]
        .iter()
        .zip(names)
        .map(|(&(slo, rate), n)| spec(&format!("app{app}-{n}"), slo, rate))
        .collect()
}

/// All twelve application workloads with V100 fixture coefficients.
pub fn application_workloads_v100() -> Vec<Workload> {
    let coefs = [alexnet_v100(), resnet50_v100(), vgg19_v100(), ssd_v100()];
    (1..=3)
        .flat_map(|app| application(app).into_iter().zip(coefs.clone()))
        .map(|(spec, coef)| Workload { spec, coef })
        .collect()
}

/// A workload whose solo lower bound is exactly `units` slices on `hw`:
/// a pure `k3 / r` curve with negligible transfers and scheduling.
pub fn sized_workload(name: &str, units: u32, hw: &HardwareProfile, power_w: f64) -> Workload {
    let slo_ms = 40.0;
    let r = (units as f64 - 0.5) * hw.r_unit;
    Workload {
        spec: WorkloadSpec {
            name: name.into(),
            slo_ms,
            rate_rps: 100.0,
            d_load_mb: 0.0,
            d_feedback_mb: 0.0,
        },
        coef: WorkloadCoefficients {
            n_kernels: 1,
            k_sch_ms: 0.0,
            k1: 0.0,
            k2: 0.0,
            k3: r * slo_ms / 2.0,
            k4: 0.0,
            k5: 0.0,
            alpha_power_w: 0.0,
            beta_power_w: power_w,
            alpha_cacheutil: 0.0,
            beta_cacheutil: 0.0,
            alpha_cache: 0.0,
        },
    }
}

/// Fifteen workloads that need six V100s (six at 0.45 and nine at 0.3) but
/// a T4 each.
pub fn cost_fixture() -> (Vec<WorkloadSpec>, Vec<GpuTypeOption>) {
    let v100 = v100_profile();
    let t4 = t4_profile();
    let mut specs = Vec::new();
    let mut on_v100 = Vec::new();
    let mut on_t4 = Vec::new();
    for i in 0..15 {
        let units = if i < 6 { 18 } else { 12 };
        let name = format!("w{i:02}");
        let a = sized_workload(&name, units, &v100, 20.0);
        let b = sized_workload(&name, 24, &t4, 20.0);
        specs.push(a.spec);
        on_v100.push(a.coef);
        on_t4.push(b.coef);
    }
    (
        specs,
        vec![
            GpuTypeOption { hw: v100, coefficients: on_v100 },
            GpuTypeOption { hw: t4, coefficients: on_t4 },
        ],
    )
}

/// Draws one random workload. May be infeasible.
pub fn random_workload<R: Rng + ?Sized>(rng: &mut R, name: &str) -> Workload {
    Workload {
        spec: WorkloadSpec {
            name: name.into(),
            slo_ms: rng.random_range(10.0..80.0),
            rate_rps: rng.random_range(50.0..800.0),
            d_load_mb: rng.random_range(0.05..1.0),
            d_feedback_mb: rng.random_range(0.0..0.01),
        },
        coef: WorkloadCoefficients {
            n_kernels: rng.random_range(20..300),
            k_sch_ms: rng.random_range(0.0005..0.003),
            k1: rng.random_range(0.0..0.003),
            k2: rng.random_range(0.005..0.15),
            k3: rng.random_range(0.05..1.0),
            k4: rng.random_range(0.0..0.1),
            k5: rng.random_range(0.02..0.5),
            alpha_power_w: rng.random_range(5.0..60.0),
            beta_power_w: rng.random_range(20.0..80.0),
            alpha_cacheutil: rng.random_range(0.0..0.06),
            beta_cacheutil: rng.random_range(0.02..0.2),
            alpha_cache: rng.random_range(0.0..0.5),
        },
    }
}

/// Draws until the workload fits on one device and runs under the power
/// cap alone at full resources.
pub fn random_feasible_workload<R: Rng + ?Sized>(
    rng: &mut R,
    name: &str,
    hw: &HardwareProfile,
    cfg: &PlannerConfig,
) -> Workload {
    loop {
        let w = random_workload(rng, name);
        let Ok(req) = requirement(&w, hw, cfg) else {
            continue;
        };
        let Ok(p) = solo_power(&w.coef, req.batch, hw.r_max) else {
            continue;
        };
        if hw.power_idle_w + p <= hw.power_max_w {
            return w;
        }
    }
}

/// Solo profiling samples on the default grid, with multiplicative Gaussian
/// noise of relative size `noise` on every measurement.
pub fn solo_samples<R: Rng + ?Sized>(
    coef: &WorkloadCoefficients,
    grid: &[(f64, u32)],
    noise: f64,
    rng: &mut R,
) -> Vec<SoloSample> {
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut jitter = |v: f64| if noise > 0.0 { v * (1.0 + normal.sample(rng)) } else { v };
    grid.iter()
        .map(|&(r, batch)| SoloSample {
            r,
            batch,
            k_act_ms: jitter(solo_active_time(coef, batch, r).expect("valid coefficients")),
            power_w: jitter(solo_power(coef, batch, r).expect("valid coefficients")),
            cache_util: jitter(solo_cache_util(coef, batch, r).expect("valid coefficients")),
        })
        .collect()
}

/// Solo samples on the standard profiling grid.
pub fn default_solo_samples<R: Rng + ?Sized>(coef: &WorkloadCoefficients, noise: f64, rng: &mut R) -> Vec<SoloSample> {
    solo_samples(coef, &default_profile_grid(), noise, rng)
}
