//! Least-squares calibration of model coefficients from profiling samples.
//!
//! The active-time curve is linear in `(k1, k2, k3, k5)` once `k4` is fixed,
//! so it is fitted by a one-dimensional search over `k4` with an inner linear
//! solve. Everything else is ordinary regression.

use std::collections::BTreeSet;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("insufficient data for {what}: {reason}")]
    InsufficientData { what: &'static str, reason: String },
    #[error("degenerate design matrix for {0}")]
    DegenerateDesign(&'static str),
    #[error("zero variance in regressor for {0}")]
    ZeroVariance(&'static str),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
}

#[derive(Debug, Error)]
pub enum SampleReadError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One solo profiling measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoloSample {
    pub r: f64,
    pub batch: u32,
    pub k_act_ms: f64,
    pub power_w: f64,
    pub cache_util: f64,
}

/// One co-location profiling measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColoSample {
    pub n_colocated: u32,
    pub per_kernel_delay_ms: f64,
    pub co_cache_sum: f64,
    pub act_inflation: f64,
    pub total_power_w: f64,
    pub freq_mhz: f64,
}

pub const SOLO_COLUMNS: [&str; 5] = ["r", "batch", "k_act_ms", "power_w", "cache_util"];
pub const COLO_COLUMNS: [&str; 6] = [
    "n_colocated",
    "per_kernel_delay_ms",
    "co_cache_sum",
    "act_inflation",
    "total_power_w",
    "freq_mhz",
];

fn check_columns<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), SampleReadError> {
    let headers = rdr.headers()?;
    for col in expected {
        if !headers.iter().any(|h| h.trim() == *col) {
            return Err(SampleReadError::MissingColumn(col.to_string()));
        }
    }
    Ok(())
}

pub fn read_solo_samples<R: Read>(input: R) -> Result<Vec<SoloSample>, SampleReadError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_columns(&mut rdr, &SOLO_COLUMNS)?;
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

pub fn read_colo_samples<R: Read>(input: R) -> Result<Vec<ColoSample>, SampleReadError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_columns(&mut rdr, &COLO_COLUMNS)?;
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

/// The 11 profiling configurations: a resource sweep at batch 8 and a batch
/// sweep at half the device.
pub fn default_profile_grid() -> Vec<(f64, u32)> {
    let mut grid: Vec<(f64, u32)> = [0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&r| (r, 8)).collect();
    grid.extend([1, 2, 4, 8, 16, 32].iter().map(|&b| (0.5, b)));
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveTimeFit {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub rms_error_ms: f64,
}

impl ActiveTimeFit {
    pub fn predict(&self, batch: u32, r: f64) -> f64 {
        let b = batch as f64;
        (self.k1 * b * b + self.k2 * b + self.k3) / (r + self.k4) + self.k5
    }
}

const K4_LOWER: f64 = 0.0;
const K4_UPPER: f64 = 2.0;
const K4_GRID_POINTS: usize = 2001;
const K4_TOLERANCE: f64 = 1e-6;

fn validate_solo(samples: &[SoloSample]) -> Result<(), FitError> {
    for s in samples {
        if !(s.r > 0.0 && s.r <= 1.0) || s.batch == 0 || !(s.k_act_ms > 0.0) {
            return Err(FitError::InvalidSample(format!("{s:?}")));
        }
    }
    Ok(())
}

/// Inner linear least squares for fixed `k4`: returns `[k1, k2, k3, k5]`
/// and the residual sum of squares.
fn solve_given_k4(samples: &[SoloSample], k4: f64) -> Result<([f64; 4], f64), FitError> {
    let n = samples.len();
    let design = DMatrix::from_fn(n, 4, |i, j| {
        let s = &samples[i];
        let b = s.batch as f64;
        let d = s.r + k4;
        match j {
            0 => b * b / d,
            1 => b / d,
            2 => 1.0 / d,
            _ => 1.0,
        }
    });
    let target = DVector::from_iterator(n, samples.iter().map(|s| s.k_act_ms));
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(max_sv > 0.0) || min_sv / max_sv < 1e-12 {
        return Err(FitError::DegenerateDesign("active-time curve"));
    }
    let x = svd
        .solve(&target, 1e-14 * max_sv)
        .map_err(|_| FitError::DegenerateDesign("active-time curve"))?;
    let resid = &design * &x - &target;
    Ok(([x[0], x[1], x[2], x[3]], resid.norm_squared()))
}

/// Fits the solo active-time curve.
///
/// `k4` is located on a 2001-point grid over `[0, 2]` and refined by
/// golden-section search to 1e-6. The schedule is fixed, so identical input
/// gives bit-identical output.
pub fn fit_active_time(samples: &[SoloSample]) -> Result<ActiveTimeFit, FitError> {
    const WHAT: &str = "active-time curve";
    if samples.len() < 6 {
        return Err(FitError::InsufficientData {
            what: WHAT,
            reason: format!("need at least 6 samples, got {}", samples.len()),
        });
    }
    validate_solo(samples)?;
    let distinct_r: BTreeSet<u64> = samples.iter().map(|s| s.r.to_bits()).collect();
    let distinct_b: BTreeSet<u32> = samples.iter().map(|s| s.batch).collect();
    if distinct_r.len() < 2 || distinct_b.len() < 3 {
        return Err(FitError::InsufficientData {
            what: WHAT,
            reason: "need at least 2 distinct r and 3 distinct batch sizes".into(),
        });
    }

    let step = (K4_UPPER - K4_LOWER) / (K4_GRID_POINTS - 1) as f64;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..K4_GRID_POINTS {
        let k4 = K4_LOWER + step * i as f64;
        let (_, sse) = solve_given_k4(samples, k4)?;
        if best.is_none_or(|(_, b)| sse < b) {
            best = Some((k4, sse));
        }
    }
    let (grid_k4, _) = best.expect("grid is non-empty");

    let sse_at = |k4: f64| solve_given_k4(samples, k4).map(|(_, sse)| sse);
    let mut lo = (grid_k4 - step).max(K4_LOWER);
    let mut hi = (grid_k4 + step).min(K4_UPPER);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = sse_at(c)?;
    let mut fd = sse_at(d)?;
    while hi - lo > K4_TOLERANCE {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = sse_at(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = sse_at(d)?;
        }
    }
    // The refined point must not be worse than the grid point it started from.
    let mut k4 = 0.5 * (lo + hi);
    let (mut coeffs, mut sse) = solve_given_k4(samples, k4)?;
    let (grid_coeffs, grid_sse) = solve_given_k4(samples, grid_k4)?;
    if grid_sse < sse {
        k4 = grid_k4;
        coeffs = grid_coeffs;
        sse = grid_sse;
    }
    Ok(ActiveTimeFit {
        k1: coeffs[0],
        k2: coeffs[1],
        k3: coeffs[2],
        k4,
        k5: coeffs[3],
        rms_error_ms: (sse / samples.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCacheFit {
    pub alpha_power_w: f64,
    pub beta_power_w: f64,
    pub alpha_cacheutil: f64,
    pub beta_cacheutil: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
fn linear_fit(x: &[f64], y: &[f64], what: &'static str) -> Result<(f64, f64), FitError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(FitError::ZeroVariance(what));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Least squares `y = slope * x` through the origin.
fn origin_fit(x: &[f64], y: &[f64], what: &'static str) -> Result<f64, FitError> {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return Err(FitError::ZeroVariance(what));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx)
}

/// Fits solo power and cache utilization against processing ability
/// `batch / k_act_ms`.
pub fn fit_power_cache(samples: &[SoloSample]) -> Result<PowerCacheFit, FitError> {
    if samples.len() < 5 {
        return Err(FitError::InsufficientData {
            what: "power/cache fit",
            reason: format!("need at least 5 samples, got {}", samples.len()),
        });
    }
    validate_solo(samples)?;
    let x: Vec<f64> = samples.iter().map(|s| s.batch as f64 / s.k_act_ms).collect();
    let power: Vec<f64> = samples.iter().map(|s| s.power_w).collect();
    let cache: Vec<f64> = samples.iter().map(|s| s.cache_util).collect();
    let (alpha_power_w, beta_power_w) = linear_fit(&x, &power, "power fit")?;
    let (alpha_cacheutil, beta_cacheutil) = linear_fit(&x, &cache, "cache-utilization fit")?;
    Ok(PowerCacheFit {
        alpha_power_w,
        beta_power_w,
        alpha_cacheutil,
        beta_cacheutil,
    })
}

/// Interference coefficients. Each is fitted independently, so one may be
/// missing while the others are present.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceFit {
    /// `(alpha_sch_ms, beta_sch_ms)`
    pub sched: Result<(f64, f64), FitError>,
    pub alpha_cache: Result<f64, FitError>,
    pub alpha_f: Result<f64, FitError>,
}

/// Fits scheduling, cache-contention and frequency coefficients from
/// co-location samples.
pub fn fit_interference(
    colo: &[ColoSample],
    solo_k_sch: f64,
    power_max_w: f64,
    freq_max_mhz: f64,
) -> InterferenceFit {
    let distinct_n: BTreeSet<u32> = colo.iter().map(|s| s.n_colocated).collect();
    let sched = if distinct_n.len() < 2 {
        Err(FitError::InsufficientData {
            what: "scheduling delay",
            reason: "need at least 2 distinct co-location counts".into(),
        })
    } else {
        let x: Vec<f64> = colo.iter().map(|s| s.n_colocated as f64).collect();
        let y: Vec<f64> = colo.iter().map(|s| s.per_kernel_delay_ms - solo_k_sch).collect();
        linear_fit(&x, &y, "scheduling delay")
    };

    let distinct_cache: BTreeSet<u64> = colo.iter().map(|s| s.co_cache_sum.to_bits()).collect();
    let alpha_cache = if distinct_cache.len() < 2 {
        Err(FitError::InsufficientData {
            what: "cache contention",
            reason: "need at least 2 distinct co-runner cache sums".into(),
        })
    } else {
        let x: Vec<f64> = colo.iter().map(|s| s.co_cache_sum).collect();
        let y: Vec<f64> = colo.iter().map(|s| s.act_inflation - 1.0).collect();
        origin_fit(&x, &y, "cache contention")
    };

    let over_cap: Vec<&ColoSample> = colo.iter().filter(|s| s.total_power_w > power_max_w).collect();
    let alpha_f = if over_cap.len() < 2 {
        Err(FitError::InsufficientData {
            what: "frequency slope",
            reason: format!("need at least 2 over-cap samples, got {}", over_cap.len()),
        })
    } else {
        let x: Vec<f64> = over_cap.iter().map(|s| s.total_power_w - power_max_w).collect();
        let y: Vec<f64> = over_cap.iter().map(|s| s.freq_mhz - freq_max_mhz).collect();
        origin_fit(&x, &y, "frequency slope")
    };

    InterferenceFit {
        sched,
        alpha_cache,
        alpha_f,
    }
}
