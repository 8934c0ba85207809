//! Request-level replay of a plan.
//!
//! Each workload has one serving process. Requests arrive at a constant rate
//! (or Poisson, for exploration), wait until a full batch has formed, and the
//! batch is dispatched for loading as soon as the GPU stage will be free by
//! the time loading finishes. Loading of one batch therefore overlaps the
//! execution and feedback of the previous one, so the GPU stage is occupied
//! for `t_gpu + t_feedback` per batch and a batch's own latency is `t_inf`.
//! Co-location state is frozen at plan time.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{predict_gpu, Allocation, HardwareProfile, ModelError, WorkloadCoefficients, WorkloadSpec};
use crate::planner::Plan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("workload `{workload}` is unstable: {depth} requests queued at the horizon (batch {batch})")]
    UnstableQueue { workload: String, depth: usize, batch: u32 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Arrival {
    Constant,
    Poisson { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub duration_ms: f64,
    pub warmup_ms: f64,
    pub arrival: Arrival,
    /// Keep a per-request trace in the report.
    #[serde(default)]
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration_ms: 30_000.0,
            warmup_ms: 1_000.0,
            arrival: Arrival::Constant,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub workload: String,
    pub slo_ms: f64,
    pub offered_rps: f64,
    pub achieved_rps: f64,
    pub completed: u64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    /// P99 of queue wait plus batch latency, excluding batch formation.
    pub p99_excl_batching_ms: f64,
    pub max_queue_depth: usize,
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub workload_index: usize,
    pub arrival_ms: f64,
    pub dispatch_ms: f64,
    pub complete_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub duration_ms: f64,
    pub warmup_ms: f64,
    pub workloads: Vec<WorkloadReport>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl SimReport {
    pub fn violations(&self) -> impl Iterator<Item = &WorkloadReport> {
        self.workloads.iter().filter(|w| w.violation)
    }

    /// Writes the trace as `workload,arrival_ms,dispatch_ms,complete_ms`.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["workload", "arrival_ms", "dispatch_ms", "complete_ms"])?;
        for t in &self.trace {
            wtr.write_record([
                self.workloads[t.workload_index].workload.clone(),
                t.arrival_ms.to_string(),
                t.dispatch_ms.to_string(),
                t.complete_ms.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival,
    Dispatch,
    Complete,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    workload: usize,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

struct Batch {
    arrivals: Vec<f64>,
    formed_at: f64,
    dispatched_at: f64,
}

struct Server {
    batch: u32,
    t_load: f64,
    t_inf: f64,
    /// When the GPU stage finishes the last dispatched batch.
    gpu_free_at: f64,
    queue: VecDeque<f64>,
    /// Time at which the head batch became full.
    formed_at: Option<f64>,
    dispatch_pending: bool,
    in_flight: VecDeque<Batch>,
    in_flight_requests: usize,
    arrived: u64,
    completed_total: u64,
    max_queue_depth: usize,
    latencies: Vec<f64>,
    excl_batching: Vec<f64>,
    completed_in_window: u64,
    interarrival: Interarrival,
}

enum Interarrival {
    Constant(f64),
    Poisson(Exp<f64>, ChaCha8Rng),
}

impl Interarrival {
    fn next_gap(&mut self) -> f64 {
        match self {
            Interarrival::Constant(gap) => *gap,
            Interarrival::Poisson(exp, rng) => exp.sample(rng),
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    // Nearest rank.
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: f64, workload: usize, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Event {
            time,
            seq: self.seq,
            workload,
            kind,
        }));
    }
}

/// Replays `plan` for `cfg.duration_ms` and reports end-to-end latency
/// percentiles against the full SLO.
pub fn simulate(
    plan: &Plan,
    specs: &BTreeMap<String, WorkloadSpec>,
    coefs: &BTreeMap<String, WorkloadCoefficients>,
    hw: &HardwareProfile,
    cfg: &SimConfig,
) -> Result<SimReport, SimError> {
    if cfg.duration_ms == 0.0 && cfg.warmup_ms == 0.0 {
        return Ok(SimReport {
            duration_ms: 0.0,
            warmup_ms: 0.0,
            workloads: Vec::new(),
            trace: Vec::new(),
        });
    }
    if !(cfg.warmup_ms >= 0.0 && cfg.duration_ms > cfg.warmup_ms && cfg.duration_ms.is_finite()) {
        return Err(SimError::InvalidConfig(
            "need duration_ms > warmup_ms >= 0".into(),
        ));
    }

    let mut names = Vec::new();
    let mut servers = Vec::new();
    for gpu in &plan.gpus {
        let allocs: Vec<Allocation> = gpu
            .allocations
            .iter()
            .map(|a| Allocation {
                workload: a.workload.clone(),
                r: a.r,
                batch: a.batch,
            })
            .collect();
        let predicted = predict_gpu(&allocs, specs, coefs, hw)?;
        for a in &allocs {
            let p = &predicted[&a.workload];
            let spec = &specs[&a.workload];
            let gap = 1000.0 / spec.rate_rps;
            let interarrival = match cfg.arrival {
                Arrival::Constant => Interarrival::Constant(gap),
                Arrival::Poisson { seed } => Interarrival::Poisson(
                    Exp::new(1.0 / gap).map_err(|e| SimError::InvalidConfig(e.to_string()))?,
                    ChaCha8Rng::seed_from_u64(seed.wrapping_add(names.len() as u64)),
                ),
            };
            names.push(a.workload.clone());
            servers.push(Server {
                batch: a.batch,
                t_load: p.t_load_ms,
                t_inf: p.t_inf_ms,
                gpu_free_at: f64::NEG_INFINITY,
                queue: VecDeque::new(),
                formed_at: None,
                dispatch_pending: false,
                in_flight: VecDeque::new(),
                in_flight_requests: 0,
                arrived: 0,
                completed_total: 0,
                max_queue_depth: 0,
                latencies: Vec::new(),
                excl_batching: Vec::new(),
                completed_in_window: 0,
                interarrival,
            });
        }
    }

    let mut events = EventQueue {
        heap: BinaryHeap::new(),
        seq: 0,
    };
    let mut trace = Vec::new();
    for (i, s) in servers.iter_mut().enumerate() {
        let first = match s.interarrival {
            Interarrival::Constant(_) => 0.0,
            Interarrival::Poisson(..) => s.interarrival.next_gap(),
        };
        if first < cfg.duration_ms {
            events.push(first, i, EventKind::Arrival);
        }
    }

    while let Some(Reverse(ev)) = events.heap.pop() {
        if ev.time > cfg.duration_ms {
            break;
        }
        let now = ev.time;
        let s = &mut servers[ev.workload];
        match ev.kind {
            EventKind::Arrival => {
                s.arrived += 1;
                s.queue.push_back(now);
                s.max_queue_depth = s.max_queue_depth.max(s.queue.len());
                if s.formed_at.is_none() && s.queue.len() >= s.batch as usize {
                    s.formed_at = Some(now);
                }
                let next = now + s.interarrival.next_gap();
                if next < cfg.duration_ms {
                    events.push(next, ev.workload, EventKind::Arrival);
                }
            }
            EventKind::Dispatch => {
                s.dispatch_pending = false;
                let take = s.batch as usize;
                let arrivals: Vec<f64> = s.queue.drain(..take).collect();
                let formed_at = s.formed_at.take().expect("dispatch without a formed batch");
                if s.queue.len() >= take {
                    // The next batch is already waiting; it formed when its
                    // last member arrived.
                    s.formed_at = Some(s.queue[take - 1]);
                }
                let complete = now + s.t_inf;
                s.gpu_free_at = complete;
                s.in_flight_requests += arrivals.len();
                s.in_flight.push_back(Batch {
                    arrivals,
                    formed_at,
                    dispatched_at: now,
                });
                events.push(complete, ev.workload, EventKind::Complete);
            }
            EventKind::Complete => {
                let batch = s.in_flight.pop_front().expect("completion without a batch");
                s.in_flight_requests -= batch.arrivals.len();
                s.completed_total += batch.arrivals.len() as u64;
                for &a in &batch.arrivals {
                    if a >= cfg.warmup_ms {
                        s.latencies.push(now - a);
                        s.excl_batching.push(now - batch.formed_at);
                        s.completed_in_window += 1;
                    }
                    if cfg.trace {
                        trace.push(TraceRecord {
                            workload_index: ev.workload,
                            arrival_ms: a,
                            dispatch_ms: batch.dispatched_at,
                            complete_ms: now,
                        });
                    }
                }
            }
        }

        if !s.dispatch_pending {
            if let Some(formed) = s.formed_at {
                let at = formed.max(s.gpu_free_at - s.t_load).max(now);
                s.dispatch_pending = true;
                events.push(at, ev.workload, EventKind::Dispatch);
            }
        }

        debug_assert_eq!(
            s.arrived,
            s.completed_total + s.queue.len() as u64 + s.in_flight_requests as u64,
            "request conservation"
        );
    }

    let window_s = (cfg.duration_ms - cfg.warmup_ms) / 1000.0;
    let mut reports = Vec::with_capacity(servers.len());
    for (name, s) in names.iter().zip(servers.iter_mut()) {
        if s.queue.len() > 10 * s.batch as usize {
            return Err(SimError::UnstableQueue {
                workload: name.clone(),
                depth: s.queue.len(),
                batch: s.batch,
            });
        }
        s.latencies.sort_by(f64::total_cmp);
        s.excl_batching.sort_by(f64::total_cmp);
        let spec = &specs[name];
        let p99 = percentile(&s.latencies, 0.99);
        reports.push(WorkloadReport {
            workload: name.clone(),
            slo_ms: spec.slo_ms,
            offered_rps: spec.rate_rps,
            achieved_rps: s.completed_in_window as f64 / window_s,
            completed: s.completed_in_window,
            p50_ms: percentile(&s.latencies, 0.50),
            p99_ms: p99,
            p99_excl_batching_ms: percentile(&s.excl_batching, 0.99),
            max_queue_depth: s.max_queue_depth,
            violation: p99 > spec.slo_ms,
        });
    }
    Ok(SimReport {
        duration_ms: cfg.duration_ms,
        warmup_ms: cfg.warmup_ms,
        workloads: reports,
        trace,
    })
}
