//! Problem, coefficient and plan documents.
//!
//! A problem file is JSON: hardware profiles, planner settings and a list of
//! workloads. Each workload carries coefficients per GPU type, either inline,
//! as a path to a coefficient document, or as paths to profiling CSVs that
//! are calibrated on load. Relative paths resolve against the problem file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    fit_active_time, fit_interference, fit_power_cache, read_colo_samples, read_solo_samples, ColoSample,
    FitError, SampleReadError, SoloSample,
};
use crate::model::{HardwareProfile, ModelError, WorkloadCoefficients, WorkloadSpec};
use crate::planner::{GpuTypeOption, Plan, PlannerConfig, Workload, DEFAULT_B_MAX};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Samples {
        path: PathBuf,
        source: SampleReadError,
    },
    #[error("fitting `{workload}`: {source}")]
    Fit { workload: String, source: FitError },
    #[error("duplicate workload `{0}`")]
    DuplicateWorkload(String),
    #[error("duplicate hardware profile `{0}`")]
    DuplicateHardware(String),
    #[error("no hardware profiles in problem")]
    NoHardware,
    #[error("unknown GPU type `{0}`")]
    UnknownGpuType(String),
    #[error("workload `{workload}` has no coefficients for GPU type `{gpu_type}`")]
    MissingCoefficients { workload: String, gpu_type: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn default_b_max() -> u32 {
    DEFAULT_B_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    #[serde(default = "default_b_max")]
    pub b_max: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Self { b_max: DEFAULT_B_MAX }
    }
}

/// Where one workload's coefficients for one GPU type come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSource {
    Inline(WorkloadCoefficients),
    Document {
        file: PathBuf,
    },
    Samples {
        solo_csv: PathBuf,
        #[serde(default)]
        colo_csv: Option<PathBuf>,
        n_kernels: u32,
        k_sch_ms: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadEntry {
    #[serde(flatten)]
    pub spec: WorkloadSpec,
    /// Keyed by GPU type.
    pub coefficients: BTreeMap<String, CoefficientSource>,
}

/// The on-disk problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default)]
    pub settings: Settings,
    pub hardware: Vec<HardwareProfile>,
    pub workloads: Vec<WorkloadEntry>,
}

/// Fit quality reported next to calibrated coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub solo_samples: usize,
    pub colo_samples: usize,
    pub k_act_rms_ms: f64,
    /// RMS of the relative active-time residual.
    pub k_act_rms_relative: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Hardware coefficients recovered from co-location samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareFit {
    pub alpha_sch_ms: Option<f64>,
    pub beta_sch_ms: Option<f64>,
    pub alpha_f: Option<f64>,
}

/// Output of calibration for one workload on one GPU type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDocument {
    pub workload: String,
    pub gpu_type: String,
    pub coefficients: WorkloadCoefficients,
    pub fit: FitReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardware_fit: Option<HardwareFit>,
}

/// Calibrates one workload from its profiling samples. Without co-location
/// samples `alpha_cache` is zero and a note says so. Hardware coefficients
/// are fitted when `hw` is given and the samples support them.
pub fn fit_workload(
    workload: &str,
    gpu_type: &str,
    solo: &[SoloSample],
    colo: &[ColoSample],
    n_kernels: u32,
    k_sch_ms: f64,
    hw: Option<&HardwareProfile>,
) -> Result<CoefficientDocument, FitError> {
    let act = fit_active_time(solo)?;
    let pc = fit_power_cache(solo)?;
    let rel = (solo
        .iter()
        .map(|s| {
            let e = (act.predict(s.batch, s.r) - s.k_act_ms) / s.k_act_ms;
            e * e
        })
        .sum::<f64>()
        / solo.len() as f64)
        .sqrt();
    let mut notes = Vec::new();
    let mut alpha_cache = 0.0;
    let mut hardware_fit = None;
    if colo.is_empty() {
        notes.push("no co-location samples; alpha_cache set to 0".to_string());
    } else {
        let (p_max, f_max) = hw.map_or((f64::INFINITY, 0.0), |h| (h.power_max_w, h.freq_max_mhz));
        let inter = fit_interference(colo, k_sch_ms, p_max, f_max);
        match inter.alpha_cache {
            Ok(a) => alpha_cache = a.max(0.0),
            Err(e) => notes.push(format!("alpha_cache set to 0: {e}")),
        }
        if hw.is_some() {
            let (alpha_sch_ms, beta_sch_ms) = match inter.sched {
                Ok((a, b)) => (Some(a), Some(b)),
                Err(e) => {
                    notes.push(format!("scheduling delay not fitted: {e}"));
                    (None, None)
                }
            };
            let alpha_f = match inter.alpha_f {
                Ok(a) => Some(a),
                Err(e) => {
                    notes.push(format!("frequency slope not fitted: {e}"));
                    None
                }
            };
            hardware_fit = Some(HardwareFit {
                alpha_sch_ms,
                beta_sch_ms,
                alpha_f,
            });
        }
    }
    let coefficients = WorkloadCoefficients {
        n_kernels,
        k_sch_ms,
        k1: act.k1,
        k2: act.k2,
        k3: act.k3,
        k4: act.k4,
        k5: act.k5,
        alpha_power_w: pc.alpha_power_w,
        beta_power_w: pc.beta_power_w,
        alpha_cacheutil: pc.alpha_cacheutil,
        beta_cacheutil: pc.beta_cacheutil,
        alpha_cache,
    };
    Ok(CoefficientDocument {
        workload: workload.to_string(),
        gpu_type: gpu_type.to_string(),
        coefficients,
        fit: FitReport {
            solo_samples: solo.len(),
            colo_samples: colo.len(),
            k_act_rms_ms: act.rms_error_ms,
            k_act_rms_relative: rel,
            notes,
        },
        hardware_fit,
    })
}

/// A loaded problem with every coefficient source resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub settings: Settings,
    pub hardware: Vec<HardwareProfile>,
    pub specs: Vec<WorkloadSpec>,
    /// Per workload, keyed by GPU type.
    pub coefficients: Vec<BTreeMap<String, WorkloadCoefficients>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProblemError + '_ {
    move |source| ProblemError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> ProblemError + '_ {
    move |source| ProblemError::Json {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self, ProblemError> {
        let file: ProblemFile = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_file(file, base)
    }

    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self, ProblemError> {
        let file: ProblemFile = serde_json::from_str(text).map_err(json_err(Path::new("<problem>")))?;
        Self::from_file(file, base_dir)
    }

    pub fn from_file(file: ProblemFile, base_dir: &Path) -> Result<Self, ProblemError> {
        if file.hardware.is_empty() {
            return Err(ProblemError::NoHardware);
        }
        let mut types = BTreeSet::new();
        for hw in &file.hardware {
            hw.validate()?;
            if !types.insert(hw.gpu_type.clone()) {
                return Err(ProblemError::DuplicateHardware(hw.gpu_type.clone()));
            }
        }
        let mut names = BTreeSet::new();
        let mut specs = Vec::with_capacity(file.workloads.len());
        let mut coefficients = Vec::with_capacity(file.workloads.len());
        for entry in file.workloads {
            entry.spec.validate()?;
            if !names.insert(entry.spec.name.clone()) {
                return Err(ProblemError::DuplicateWorkload(entry.spec.name));
            }
            let mut per_type = BTreeMap::new();
            for (gpu_type, source) in entry.coefficients {
                let hw = file
                    .hardware
                    .iter()
                    .find(|h| h.gpu_type == gpu_type)
                    .ok_or_else(|| ProblemError::UnknownGpuType(gpu_type.clone()))?;
                let coef = load_coefficients(&entry.spec.name, hw, &source, base_dir)?;
                coef.validate()?;
                per_type.insert(gpu_type, coef);
            }
            specs.push(entry.spec);
            coefficients.push(per_type);
        }
        Ok(Self {
            settings: file.settings,
            hardware: file.hardware,
            specs,
            coefficients,
        })
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            b_max: self.settings.b_max,
        }
    }

    pub fn hardware(&self, gpu_type: &str) -> Result<&HardwareProfile, ProblemError> {
        self.hardware
            .iter()
            .find(|h| h.gpu_type == gpu_type)
            .ok_or_else(|| ProblemError::UnknownGpuType(gpu_type.to_string()))
    }

    /// Workloads with their coefficients on `gpu_type`.
    pub fn workloads_for(&self, gpu_type: &str) -> Result<Vec<Workload>, ProblemError> {
        self.hardware(gpu_type)?;
        self.specs
            .iter()
            .zip(&self.coefficients)
            .map(|(spec, per_type)| {
                per_type
                    .get(gpu_type)
                    .map(|coef| Workload {
                        spec: spec.clone(),
                        coef: coef.clone(),
                    })
                    .ok_or_else(|| ProblemError::MissingCoefficients {
                        workload: spec.name.clone(),
                        gpu_type: gpu_type.to_string(),
                    })
            })
            .collect()
    }

    /// GPU types that have coefficients for every workload, in file order.
    pub fn complete_gpu_types(&self) -> Vec<&HardwareProfile> {
        self.hardware
            .iter()
            .filter(|h| self.coefficients.iter().all(|c| c.contains_key(&h.gpu_type)))
            .collect()
    }

    pub fn gpu_type_options(&self) -> Vec<GpuTypeOption> {
        self.complete_gpu_types()
            .into_iter()
            .map(|hw| GpuTypeOption {
                hw: hw.clone(),
                coefficients: self.coefficients.iter().map(|c| c[&hw.gpu_type].clone()).collect(),
            })
            .collect()
    }

    pub fn spec_map(&self) -> BTreeMap<String, WorkloadSpec> {
        self.specs.iter().map(|s| (s.name.clone(), s.clone())).collect()
    }

    pub fn coefficient_map(&self, gpu_type: &str) -> BTreeMap<String, WorkloadCoefficients> {
        self.specs
            .iter()
            .zip(&self.coefficients)
            .filter_map(|(s, c)| c.get(gpu_type).map(|c| (s.name.clone(), c.clone())))
            .collect()
    }
}

fn load_coefficients(
    workload: &str,
    hw: &HardwareProfile,
    source: &CoefficientSource,
    base: &Path,
) -> Result<WorkloadCoefficients, ProblemError> {
    match source {
        CoefficientSource::Inline(c) => Ok(c.clone()),
        CoefficientSource::Document { file } => {
            let doc: CoefficientDocument = read_json(&resolve(base, file))?;
            Ok(doc.coefficients)
        }
        CoefficientSource::Samples {
            solo_csv,
            colo_csv,
            n_kernels,
            k_sch_ms,
        } => {
            let solo_path = resolve(base, solo_csv);
            let solo = read_solo_samples(File::open(&solo_path).map_err(io_err(&solo_path))?)
                .map_err(|source| ProblemError::Samples {
                    path: solo_path.clone(),
                    source,
                })?;
            let colo = match colo_csv {
                Some(p) => {
                    let path = resolve(base, p);
                    read_colo_samples(File::open(&path).map_err(io_err(&path))?)
                        .map_err(|source| ProblemError::Samples { path, source })?
                }
                None => Vec::new(),
            };
            let doc = fit_workload(workload, &hw.gpu_type, &solo, &colo, *n_kernels, *k_sch_ms, Some(hw))
                .map_err(|source| ProblemError::Fit {
                    workload: workload.to_string(),
                    source,
                })?;
            Ok(doc.coefficients)
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), ProblemError> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

pub fn read_plan(path: &Path) -> Result<Plan, ProblemError> {
    read_json(path)
}
