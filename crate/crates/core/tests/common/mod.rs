//! Generators and invariant checks shared by the integration suites.
#![allow(dead_code)]

use gpuplan::model::{
    gpu_frequency, predict_residents, solo_active_time, transfer_latencies, HardwareProfile, LatencyBreakdown,
    Resident, WorkloadCoefficients, WorkloadSpec,
};
use gpuplan::synth;
use rand::Rng;

/// Hardware with the measured constants but random interference slopes,
/// `alpha_sch >= 0` and `alpha_f <= 0`.
pub fn draw_hw<R: Rng + ?Sized>(rng: &mut R) -> HardwareProfile {
    HardwareProfile {
        alpha_f: -rng.random_range(0.0..3.0),
        alpha_sch_ms: rng.random_range(0.0..0.01),
        beta_sch_ms: rng.random_range(-0.02..0.01),
        power_idle_w: rng.random_range(20.0..80.0),
        ..synth::v100_profile()
    }
}

pub fn draw_spec<R: Rng + ?Sized>(rng: &mut R, name: &str) -> WorkloadSpec {
    synth::random_workload(rng, name).spec
}

pub fn draw_coef<R: Rng + ?Sized>(rng: &mut R) -> WorkloadCoefficients {
    let mut c = synth::random_workload(rng, "x").coef;
    // Exercise the power cap and cache clamp as well.
    c.alpha_power_w = rng.random_range(0.0..150.0);
    c.alpha_cacheutil = rng.random_range(0.0..0.3);
    c
}

/// A random device: specs, coefficients, batches and unit counts with
/// `total_units` slices in use.
pub struct DeviceDraw {
    pub specs: Vec<WorkloadSpec>,
    pub coefs: Vec<WorkloadCoefficients>,
    pub batches: Vec<u32>,
    pub units: Vec<u32>,
}

impl DeviceDraw {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, n: usize, max_units: u32) -> Self {
        let mut units = Vec::with_capacity(n);
        let mut left = max_units;
        for k in 0..n {
            let reserve = (n - k - 1) as u32;
            let u = rng.random_range(1..=(left - reserve).min(20));
            units.push(u);
            left -= u;
        }
        Self {
            specs: (0..n).map(|i| draw_spec(rng, &format!("w{i}"))).collect(),
            coefs: (0..n).map(|_| draw_coef(rng)).collect(),
            batches: (0..n).map(|_| rng.random_range(1..=32)).collect(),
            units,
        }
    }

    pub fn used(&self) -> u32 {
        self.units.iter().sum()
    }

    pub fn predict(&self, hw: &HardwareProfile, units: &[u32]) -> Vec<LatencyBreakdown> {
        let residents: Vec<Resident<'_>> = (0..units.len())
            .map(|i| Resident {
                spec: &self.specs[i],
                coef: &self.coefs[i],
                r: hw.units_to_r(units[i]),
                batch: self.batches[i],
            })
            .collect();
        predict_residents(&residents, hw).expect("valid device")
    }
}

fn le(a: f64, b: f64) -> bool {
    a <= b
}

/// Giving one member more resources never slows its active phase, and never
/// slows its end-to-end latency while the device stays below the power cap.
pub fn check_resource_monotonicity(d: &DeviceDraw, hw: &HardwareProfile, member: usize, extra: u32) -> Result<(), String> {
    let before = d.predict(hw, &d.units);
    let mut more = d.units.clone();
    more[member] += extra;
    let after = d.predict(hw, &more);
    let (b, a) = (&before[member], &after[member]);
    if !le(a.t_act_ms, b.t_act_ms) {
        return Err(format!("t_act rose from {} to {} with more resources", b.t_act_ms, a.t_act_ms));
    }
    let k0 = solo_active_time(&d.coefs[member], d.batches[member], hw.units_to_r(d.units[member])).unwrap();
    let k1 = solo_active_time(&d.coefs[member], d.batches[member], hw.units_to_r(more[member])).unwrap();
    if !le(k1, k0) {
        return Err(format!("k_act rose from {k0} to {k1}"));
    }
    if b.freq_mhz == hw.freq_max_mhz && a.freq_mhz == hw.freq_max_mhz && !le(a.t_inf_ms, b.t_inf_ms) {
        return Err(format!("t_inf rose from {} to {} below the cap", b.t_inf_ms, a.t_inf_ms));
    }
    Ok(())
}

/// Larger batches never move less data or finish the active phase sooner.
pub fn check_batch_monotonicity(spec: &WorkloadSpec, coef: &WorkloadCoefficients, hw: &HardwareProfile, b: u32, r: f64) -> Result<(), String> {
    let (l0, f0) = transfer_latencies(spec, b, hw);
    let (l1, f1) = transfer_latencies(spec, b + 1, hw);
    let k0 = solo_active_time(coef, b, r).unwrap();
    let k1 = solo_active_time(coef, b + 1, r).unwrap();
    if !(le(l0, l1) && le(f0, f1) && le(k0, k1)) {
        return Err(format!("batch {b} -> {}: load {l0}->{l1}, feedback {f0}->{f1}, k_act {k0}->{k1}", b + 1));
    }
    Ok(())
}

/// Appending a co-runner never lowers any resident's predicted latency.
pub fn check_colocation_monotonicity(d: &DeviceDraw, hw: &HardwareProfile) -> Result<(), String> {
    let n = d.units.len();
    let before = d.predict(hw, &d.units[..n - 1]);
    let after = d.predict(hw, &d.units);
    for (i, (b, a)) in before.iter().zip(&after).enumerate() {
        if !le(b.t_inf_ms, a.t_inf_ms) {
            return Err(format!("resident {i}: t_inf fell from {} to {} when a co-runner joined", b.t_inf_ms, a.t_inf_ms));
        }
        if !le(b.t_sch_ms, a.t_sch_ms) || !le(a.freq_mhz, b.freq_mhz) {
            return Err(format!("resident {i}: scheduling or frequency moved the wrong way"));
        }
    }
    Ok(())
}

/// `t_inf` is the sum of its parts on every resident.
pub fn check_additivity(d: &DeviceDraw, hw: &HardwareProfile) -> Result<(), String> {
    for (i, p) in d.predict(hw, &d.units).iter().enumerate() {
        let sum = p.t_load_ms + p.t_gpu_ms + p.t_feedback_ms;
        if (p.t_inf_ms - sum).abs() > 1e-9 * p.t_inf_ms.abs() {
            return Err(format!("resident {i}: t_inf {} != {sum}", p.t_inf_ms));
        }
    }
    Ok(())
}

/// Both branches of the frequency model agree at the cap, and the curve
/// moves by at most `|alpha_f| * eps` just above it.
pub fn check_frequency_continuity(hw: &HardwareProfile, eps: f64) -> Result<(), String> {
    let at = gpu_frequency(hw, hw.power_max_w);
    if at != hw.freq_max_mhz {
        return Err(format!("f(P) = {at}, expected {}", hw.freq_max_mhz));
    }
    let above = gpu_frequency(hw, hw.power_max_w + eps);
    if (above - at).abs() > hw.alpha_f.abs() * eps * (1.0 + 1e-9) + 1e-9 {
        return Err(format!("jump of {} at the cap for eps {eps}", above - at));
    }
    let below = gpu_frequency(hw, hw.power_max_w - eps);
    if below != at {
        return Err(format!("f(P - eps) = {below}"));
    }
    Ok(())
}

/// Solo device below the cap: `t_gpu` is exactly scheduling plus solo active
/// time.
pub fn check_solo_consistency(spec: &WorkloadSpec, coef: &WorkloadCoefficients, hw: &HardwareProfile, batch: u32, units: u32) -> Result<(), String> {
    let r = hw.units_to_r(units);
    let p = predict_residents(&[Resident { spec, coef, r, batch }], hw).unwrap()[0];
    if p.freq_mhz != hw.freq_max_mhz {
        return Ok(());
    }
    let want = coef.k_sch_ms * coef.n_kernels as f64 + solo_active_time(coef, batch, r).unwrap();
    if p.t_gpu_ms != want {
        return Err(format!("solo t_gpu {} != {want}", p.t_gpu_ms));
    }
    Ok(())
}
