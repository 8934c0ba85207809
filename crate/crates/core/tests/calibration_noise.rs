use gpuplan::calibration::{
    default_profile_grid, fit_active_time, fit_interference, fit_power_cache, read_solo_samples, ColoSample,
    SoloSample,
};
use gpuplan::model::{solo_active_time, WorkloadCoefficients};
use gpuplan::synth;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn draw_coef(rng: &mut ChaCha8Rng) -> WorkloadCoefficients {
    WorkloadCoefficients {
        n_kernels: 100,
        k_sch_ms: 0.002,
        k1: rng.random_range(2e-4..3e-3),
        k2: rng.random_range(0.01..0.15),
        k3: rng.random_range(0.1..1.0),
        k4: rng.random_range(0.01..0.2),
        k5: rng.random_range(0.05..0.5),
        alpha_power_w: rng.random_range(10.0..80.0),
        beta_power_w: rng.random_range(30.0..80.0),
        alpha_cacheutil: rng.random_range(0.01..0.06),
        beta_cacheutil: rng.random_range(0.05..0.2),
        alpha_cache: 0.3,
    }
}

fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

/// Points off the profiling grid.
fn held_out() -> Vec<(f64, u32)> {
    let mut v = Vec::new();
    for r in [0.3, 0.45, 0.7, 0.9] {
        for b in [2, 6, 12, 24] {
            v.push((r, b));
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn noise_free_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = draw_coef(&mut rng);
        let samples = synth::default_solo_samples(&c, 0.0, &mut rng);
        let act = fit_active_time(&samples).unwrap();
        for (got, want) in [(act.k1, c.k1), (act.k2, c.k2), (act.k3, c.k3), (act.k5, c.k5)] {
            prop_assert!(rel(got, want) < 0.01, "got {got}, want {want}");
        }
        prop_assert!(rel(act.k4, c.k4) < 0.02, "k4 {} vs {}", act.k4, c.k4);
        let pc = fit_power_cache(&samples).unwrap();
        prop_assert!(rel(pc.alpha_power_w, c.alpha_power_w) < 0.01);
        prop_assert!(rel(pc.beta_power_w, c.beta_power_w) < 0.01);
        prop_assert!(rel(pc.alpha_cacheutil, c.alpha_cacheutil) < 0.01);
        prop_assert!(rel(pc.beta_cacheutil, c.beta_cacheutil) < 0.01);
    }

    #[test]
    fn one_percent_noise_predicts_held_out_points(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = draw_coef(&mut rng);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let mut samples = synth::default_solo_samples(&c, 0.0, &mut rng);
        for s in &mut samples {
            s.k_act_ms *= 1.0 + normal.sample(&mut rng);
        }
        let act = fit_active_time(&samples).unwrap();
        let pts = held_out();
        let mse: f64 = pts
            .iter()
            .map(|&(r, b)| {
                let want = solo_active_time(&c, b, r).unwrap();
                let e = (act.predict(b, r) - want) / want;
                e * e
            })
            .sum::<f64>()
            / pts.len() as f64;
        prop_assert!(mse.sqrt() < 0.05, "held-out RMS {}", mse.sqrt());
    }
}

#[test]
fn fits_are_bit_for_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = draw_coef(&mut rng);
    let samples = synth::default_solo_samples(&c, 0.01, &mut rng);
    let a = fit_active_time(&samples).unwrap();
    let b = fit_active_time(&samples.clone()).unwrap();
    assert_eq!(a.k1.to_bits(), b.k1.to_bits());
    assert_eq!(a.k4.to_bits(), b.k4.to_bits());
    assert_eq!(a, b);
}

#[test]
fn csv_round_trip_any_column_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = draw_coef(&mut rng);
    let samples = synth::default_solo_samples(&c, 0.0, &mut rng);
    let mut text = String::from("cache_util,power_w,batch,r,k_act_ms\n");
    for s in &samples {
        text.push_str(&format!("{},{},{},{},{}\n", s.cache_util, s.power_w, s.batch, s.r, s.k_act_ms));
    }
    let back: Vec<SoloSample> = read_solo_samples(text.as_bytes()).unwrap();
    assert_eq!(back, samples);
}

#[test]
fn interference_coefficients_recovered() {
    let hw = synth::v100_profile();
    let alpha_cache = 0.3;
    let k_sch = 0.002;
    let mut colo = Vec::new();
    for n in 2..=5u32 {
        let co_cache = 0.1 * (n - 1) as f64;
        let total_power = 200.0 + 40.0 * n as f64;
        let freq = if total_power > hw.power_max_w {
            hw.freq_max_mhz + hw.alpha_f * (total_power - hw.power_max_w)
        } else {
            hw.freq_max_mhz
        };
        colo.push(ColoSample {
            n_colocated: n,
            per_kernel_delay_ms: k_sch + hw.alpha_sch_ms * n as f64 + hw.beta_sch_ms,
            co_cache_sum: co_cache,
            act_inflation: 1.0 + alpha_cache * co_cache,
            total_power_w: total_power,
            freq_mhz: freq,
        });
    }
    let fit = fit_interference(&colo, k_sch, hw.power_max_w, hw.freq_max_mhz);
    let (a, b) = fit.sched.unwrap();
    assert!(rel(a, hw.alpha_sch_ms) < 1e-9);
    assert!(rel(b, hw.beta_sch_ms) < 1e-9);
    assert!(rel(fit.alpha_cache.unwrap(), alpha_cache) < 1e-9);
    assert!(rel(fit.alpha_f.unwrap(), hw.alpha_f) < 1e-9);
}

#[test]
fn grid_is_the_default_eleven_points() {
    assert_eq!(default_profile_grid().len(), 11);
}
