//! Drives one scenario end to end and manages run directories.
//!
//! A run is fully computed in memory before anything is written, so a failed run
//! leaves no partial outputs behind.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::control::{
    hierarchical::ManagedWorkload, Controller, ControllerDecision, HierarchicalController,
    MigrationRecord, ReactiveController,
};
use crate::engine::{EventKind, Simulation, MICROS_PER_UNIT};
use crate::error::{SimError, TraceError};
use crate::invariants::{self, CostMonitor};
use crate::metrics::{
    compare_runs, observe, read_metrics_csv, write_metrics_csv, Comparison, CostModel,
    MetricSample, RunMeta, RunSummary, TableError,
};
use crate::scenario::{ControllerKind, ScenarioConfig, ScenarioError, APP_WORKLOAD};
use crate::workload::DemandTrace;

pub const EVENTS_FILE: &str = "events.log";
pub const DECISIONS_FILE: &str = "decisions.log";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot compare runs: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub meta: RunMeta,
    pub trace: DemandTrace,
    pub events: Vec<String>,
    pub decisions: Vec<ControllerDecision>,
    pub samples: Vec<MetricSample>,
    pub summary: RunSummary,
    pub migrations: Vec<MigrationRecord>,
}

impl RunOutput {
    pub fn events_log(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }

    /// One JSON object per line.
    pub fn decisions_log(&self) -> String {
        self.decisions
            .iter()
            .map(|d| serde_json::to_string(d).expect("decisions serialize") + "\n")
            .collect()
    }

    pub fn metrics_csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &self.samples).expect("writing to memory");
        buf
    }

    pub fn summary_text(&self) -> String {
        let mut out = self.meta.render();
        out.push_str(&self.summary.render());
        for (i, m) in self.migrations.iter().enumerate() {
            let t = |v: Option<u64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
            let _ = writeln!(
                out,
                "migration[{i}] = {} -> {} ({} -> {}), requested {}, started {}, provisioned {}, migrated {}, finished {}, reference {}, min_running {}, downtime {} s",
                m.from_policy,
                m.to_policy,
                m.from_pool,
                m.to_pool,
                m.requested_at,
                t(m.started_at),
                t(m.provisioned_at),
                t(m.migrated_at),
                t(m.finished_at),
                m.reference_replicas,
                t(m.min_running.map(u64::from)),
                m.downtime_seconds
            );
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), RunError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let files: [(&str, Vec<u8>); 4] = [
            (EVENTS_FILE, self.events_log().into_bytes()),
            (DECISIONS_FILE, self.decisions_log().into_bytes()),
            (METRICS_FILE, self.metrics_csv()),
            (SUMMARY_FILE, self.summary_text().into_bytes()),
        ];
        for (name, bytes) in files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

pub fn run_meta(config: &ScenarioConfig) -> RunMeta {
    RunMeta {
        scenario: config.name.clone(),
        workload: config.workload.name().to_string(),
        controller: config.controller.as_str().to_string(),
        seed: config.seed,
        vu_cost: config.vu_cost,
        noise_amplitude: config.noise_amplitude,
        duration: config.duration,
        sample_interval: config.sample_interval,
    }
}

/// Runs a scenario to completion. Structural invariants are checked after every
/// event and any violation aborts the run.
pub fn simulate(config: &ScenarioConfig) -> Result<RunOutput, RunError> {
    let trace = config.trace()?;
    let pools = config.pools.iter().map(|p| p.spec.clone()).collect();
    let mut sim = Simulation::new(pools, config.cluster.clone());
    for pool in &config.pools {
        let n = config.initial_nodes(pool);
        if n > 0 {
            sim.bootstrap_nodes(&pool.spec.id, n)?;
        }
    }
    sim.set_preferred_pool(config.starting_pool())?;
    // unmanaged requests go first so they claim room on the initial nodes
    for item in &config.other_requests.items {
        let w = sim.add_workload(item.owner.clone(), item.cpu_request_millicores, false);
        sim.bootstrap_pods(w, 1)?;
    }
    let app = sim.add_workload(APP_WORKLOAD, config.pod_request, true);
    sim.bootstrap_pods(app, config.initial_replicas)?;
    for (phase, start) in trace.phase_starts.iter().enumerate() {
        sim.schedule(
            *start,
            EventKind::WorkloadPhaseChange {
                workload: APP_WORKLOAD.to_string(),
                phase,
            },
        )?;
    }

    let end = config.duration;
    let mut controller: Box<dyn Controller> = match config.controller {
        ControllerKind::MasH2 => Box::new(HierarchicalController::new(
            config.mas.clone(),
            config.schedule.clone(),
            config.policies.clone(),
            vec![ManagedWorkload {
                index: app,
                trace: trace.clone(),
            }],
            config.other_requests.clone(),
            end,
        )?),
        ControllerKind::HpaCa => {
            // the baseline has no policy of its own; score it with the default one
            let policy = config
                .policy(config.schedule.default_policy())
                .cloned()
                .expect("default policy validated at load");
            Box::new(ReactiveController::new(config.hpa.clone(), app, trace.clone(), end, policy))
        }
    };

    let mut decisions = controller.start(&mut sim)?;
    invariants::check_all(&sim.state)?;
    let mut costs = CostMonitor::default();
    let mut samples = Vec::with_capacity((end / config.sample_interval.max(1)) as usize + 1);
    let mut next_sample = 0;
    let ceiling = config.hpa.saturation_ceiling;

    loop {
        let next_event = sim.next_event_time();
        while next_sample < end && next_event.is_none_or(|t| t > next_sample) {
            sim.advance_to(next_sample);
            costs.check(&sim.state)?;
            samples.push(observe(
                &sim.state,
                trace.demand_at(next_sample),
                controller.active_policy(),
                &config.utility,
                ceiling,
            ));
            next_sample += config.sample_interval;
        }
        if next_event.is_none_or(|t| t >= end) {
            break;
        }
        let event = sim.step()?;
        decisions.extend(controller.on_event(&mut sim, &event)?);
        invariants::check_all(&sim.state)?;
        costs.check(&sim.state)?;
    }
    sim.advance_to(end);
    costs.check(&sim.state)?;
    CostModel::from_state(&sim.state)
        .check_accounting(&sim.state)
        .map_err(|e| SimError::invariant("cost_accounting", end, e))?;

    let migrations = controller.migrations().to_vec();
    let downtime: Vec<u64> = migrations.iter().map(|m| m.downtime_seconds).collect();
    let mut summary = RunSummary::from_samples(&samples, config.sample_interval, &downtime);
    // the final sample precedes the end of the run; report the fully integrated cost
    summary.pod_cost = sim.state.costs.pod_cost_micros;
    summary.node_cost = sim.state.costs.total_node_cost_micros();
    summary.total_cost = summary.pod_cost + summary.node_cost;
    Ok(RunOutput {
        meta: run_meta(config),
        trace,
        events: sim.take_event_log(),
        decisions,
        samples,
        summary,
        migrations,
    })
}

/// Simulates and, only on success, writes the four output files.
pub fn run_to_dir(config: &ScenarioConfig, out_dir: &Path) -> Result<RunOutput, RunError> {
    let output = simulate(config)?;
    output.write_to(out_dir)?;
    Ok(output)
}

fn read_run(dir: &Path) -> Result<(RunMeta, Vec<MetricSample>), RunError> {
    let summary_path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
    let meta = RunMeta::parse(&text).map_err(RunError::Mismatch)?;
    let metrics_path = dir.join(METRICS_FILE);
    let file = fs::File::open(&metrics_path).map_err(io_err(&metrics_path))?;
    Ok((meta, read_metrics_csv(file)?))
}

/// Compares two finished run directories and writes `comparison.csv` and
/// `comparison.txt` into `out_dir`.
pub fn compare_dirs(a: &Path, b: &Path, out_dir: &Path) -> Result<Comparison, RunError> {
    let (meta_a, samples_a) = read_run(a)?;
    let (meta_b, samples_b) = read_run(b)?;
    let comparison =
        compare_runs((&meta_a, &samples_a), (&meta_b, &samples_b)).map_err(RunError::Mismatch)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let csv_path = out_dir.join("comparison.csv");
    let mut buf = Vec::new();
    comparison.write_csv(&mut buf).map_err(|e| RunError::Table(e.into()))?;
    fs::write(&csv_path, buf).map_err(io_err(&csv_path))?;
    let txt_path = out_dir.join("comparison.txt");
    fs::write(&txt_path, comparison.render_text()).map_err(io_err(&txt_path))?;
    Ok(comparison)
}

/// Runs every config concurrently, each into `out_dir/<name>-<controller>-seed<seed>`,
/// and writes a one-line-per-run `sweep.csv`. Results keep the input order.
pub fn sweep(configs: &[ScenarioConfig], out_dir: &Path) -> Result<Vec<(PathBuf, RunSummary)>, RunError> {
    let results: Vec<Result<(PathBuf, RunSummary), RunError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|config| {
                scope.spawn(move || {
                    let dir = out_dir.join(format!(
                        "{}-{}-seed{}",
                        config.name,
                        config.controller.as_str(),
                        config.seed
                    ));
                    run_to_dir(config, &dir).map(|out| (dir, out.summary))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut table = String::from(
        "run,mean_utilization,p95_utilization,max_running_replicas,total_cost,migration_downtime_seconds\n",
    );
    for (dir, s) in &results {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(
            table,
            "{name},{},{},{},{},{}",
            s.mean_utilization,
            s.p95_utilization,
            s.max_running_replicas,
            s.total_cost as f64 / MICROS_PER_UNIT as f64,
            s.migration_downtime_seconds
        );
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join("sweep.csv");
    fs::write(&path, table).map_err(io_err(&path))?;
    Ok(results)
}
