//! Virtual-user load profiles and the per-second CPU demand traces derived from them.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TraceError;

/// Noise amplitude used by the flash-sale chatter phases.
pub const FLASH_SALE_CHATTER_NOISE: f64 = 0.10;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ramp {
    /// Interpolate from the previous target to this one over the phase.
    Linear,
    /// Hold the target for the whole phase.
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadPhase {
    pub duration_seconds: u64,
    pub target_vus: u32,
    pub ramp: Ramp,
    /// Multiplicative noise is only applied to phases marked noisy.
    #[serde(default)]
    pub noisy: bool,
}

impl WorkloadPhase {
    pub fn linear(duration_seconds: u64, target_vus: u32) -> Self {
        Self {
            duration_seconds,
            target_vus,
            ramp: Ramp::Linear,
            noisy: false,
        }
    }

    pub fn step(duration_seconds: u64, target_vus: u32) -> Self {
        Self {
            duration_seconds,
            target_vus,
            ramp: Ramp::Step,
            noisy: false,
        }
    }

    pub fn noisy(mut self) -> Self {
        self.noisy = true;
        self
    }
}

/// Three heartbeats (ramp up, hold peak, ramp down, hold trough) and a cool-down.
pub fn heartbeat_phases() -> Vec<WorkloadPhase> {
    let mut phases = Vec::with_capacity(13);
    for _ in 0..3 {
        phases.push(WorkloadPhase::linear(30, 400));
        phases.push(WorkloadPhase::step(120, 400));
        phases.push(WorkloadPhase::linear(30, 10));
        phases.push(WorkloadPhase::step(60, 10));
    }
    phases.push(WorkloadPhase::linear(60, 0));
    phases
}

/// Pre-sale chatter, chaotic ramp, sustained peak, drop-off and cool-down.
pub fn flash_sale_phases() -> Vec<WorkloadPhase> {
    vec![
        WorkloadPhase::step(120, 20).noisy(),
        WorkloadPhase::step(60, 50).noisy(),
        WorkloadPhase::step(60, 20).noisy(),
        WorkloadPhase::linear(30, 200),
        WorkloadPhase::linear(60, 150),
        WorkloadPhase::linear(30, 400),
        WorkloadPhase::linear(60, 300),
        WorkloadPhase::step(240, 700),
        WorkloadPhase::linear(60, 50),
        WorkloadPhase::step(120, 50),
        WorkloadPhase::linear(60, 0),
    ]
}

/// Index of the flash-sale sustained-peak phase in [`flash_sale_phases`].
pub const FLASH_SALE_PEAK_PHASE: usize = 7;
/// Number of leading chatter phases in [`flash_sale_phases`].
pub const FLASH_SALE_CHATTER_PHASES: usize = 3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandSample {
    pub t: u64,
    pub vus: u32,
    pub demand_millicores: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemandTrace {
    pub workload_id: String,
    pub samples: Vec<DemandSample>,
    pub noise_seed: u64,
    pub noise_amplitude: f64,
    /// Start time of each phase, in phase order.
    pub phase_starts: Vec<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TraceParams {
    pub vu_cost_millicores: u32,
    pub noise_amplitude: f64,
    pub noise_seed: u64,
}

fn round_div(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

pub fn build_trace(
    workload_id: impl Into<String>,
    phases: &[WorkloadPhase],
    params: TraceParams,
) -> Result<DemandTrace, TraceError> {
    if params.vu_cost_millicores == 0 {
        return Err(TraceError::NonPositiveVuCost);
    }
    let amplitude = params.noise_amplitude.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(params.noise_seed);
    let total: u64 = phases.iter().map(|p| p.duration_seconds).sum();
    let mut samples = Vec::with_capacity(total as usize);
    let mut phase_starts = Vec::with_capacity(phases.len());
    let mut previous_target = 0u32;
    let mut start = 0u64;

    for (i, phase) in phases.iter().enumerate() {
        if phase.duration_seconds == 0 {
            return Err(TraceError::EmptyPhase(i));
        }
        phase_starts.push(start);
        let d = phase.duration_seconds;
        for k in 0..d {
            let vus = match phase.ramp {
                Ramp::Step => phase.target_vus,
                Ramp::Linear => {
                    let from = previous_target as u64;
                    let to = phase.target_vus as u64;
                    let num = if to >= from {
                        from * d + (to - from) * k
                    } else {
                        from * d - (from - to) * k
                    };
                    round_div(num, d) as u32
                }
            };
            let base = vus as f64 * params.vu_cost_millicores as f64;
            let demand = if phase.noisy && amplitude > 0.0 {
                let eps: f64 = rng.random_range(-amplitude..=amplitude);
                (base * (1.0 + eps)).round().max(0.0) as u32
            } else {
                base as u32
            };
            samples.push(DemandSample {
                t: start + k,
                vus,
                demand_millicores: demand,
            });
        }
        previous_target = phase.target_vus;
        start += d;
    }

    Ok(DemandTrace {
        workload_id: workload_id.into(),
        samples,
        noise_seed: params.noise_seed,
        noise_amplitude: amplitude,
        phase_starts,
    })
}

pub fn build_heartbeat_trace(vu_cost: u32, noise_seed: u64) -> Result<DemandTrace, TraceError> {
    build_trace(
        "heartbeat",
        &heartbeat_phases(),
        TraceParams {
            vu_cost_millicores: vu_cost,
            noise_amplitude: 0.0,
            noise_seed,
        },
    )
}

pub fn build_flash_sale_trace(vu_cost: u32, noise_seed: u64) -> Result<DemandTrace, TraceError> {
    build_trace(
        "flash_sale",
        &flash_sale_phases(),
        TraceParams {
            vu_cost_millicores: vu_cost,
            noise_amplitude: FLASH_SALE_CHATTER_NOISE,
            noise_seed,
        },
    )
}

impl DemandTrace {
    /// Trace length in seconds.
    pub fn len_seconds(&self) -> u64 {
        self.samples.len() as u64
    }

    pub fn demand_at(&self, t: u64) -> u32 {
        self.samples
            .get(t as usize)
            .map_or(0, |s| s.demand_millicores)
    }

    pub fn vus_at(&self, t: u64) -> u32 {
        self.samples.get(t as usize).map_or(0, |s| s.vus)
    }

    /// Samples in `[from, to)`.
    pub fn demand_window(&self, from: u64, to: u64) -> Result<&[DemandSample], TraceError> {
        let len = self.len_seconds();
        if from > to || to > len {
            return Err(TraceError::WindowOutOfRange { from, to, len });
        }
        Ok(&self.samples[from as usize..to as usize])
    }

    /// Everything observed strictly before `now`, as `(t, demand)` pairs.
    pub fn history_before(&self, now: u64) -> Vec<(u64, f64)> {
        let end = now.min(self.len_seconds());
        self.samples[..end as usize]
            .iter()
            .map(|s| (s.t, s.demand_millicores as f64))
            .collect()
    }

    /// Phase index active at `t`.
    pub fn phase_at(&self, t: u64) -> usize {
        self.phase_starts
            .iter()
            .rposition(|start| *start <= t)
            .unwrap_or(0)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}
