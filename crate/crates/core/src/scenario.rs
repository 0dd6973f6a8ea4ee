//! Scenario files: TOML documents describing workload, cluster, policies and
//! controller knobs. Every knob has a default; unknown keys are rejected.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::control::{ForecasterChoice, HierarchicalConfig, HpaConfig, StrategicSchedule};
use crate::engine::{ClusterConfig, PoolSpec, MICROS_PER_UNIT};
use crate::error::TraceError;
use crate::metrics::UtilityNormalizers;
use crate::planning::{Policy, PolicyName, RequestItem, RequestSet};
use crate::workload::{
    build_trace, flash_sale_phases, heartbeat_phases, DemandTrace, TraceParams, WorkloadPhase,
};

/// Id of the single application workload every scenario drives.
pub const APP_WORKLOAD: &str = "web";

pub const STAGING_POOL: &str = "mas-h2-staging-pool";
pub const PERFORMANCE_POOL: &str = "performance-pool";
pub const BASELINE_POOL: &str = "default-pool";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid `{field}`{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadSpec {
    Heartbeat,
    FlashSale,
    Custom(Vec<WorkloadPhase>),
}

impl WorkloadSpec {
    pub fn name(&self) -> &'static str {
        match self {
            WorkloadSpec::Heartbeat => "heartbeat",
            WorkloadSpec::FlashSale => "flash_sale",
            WorkloadSpec::Custom(_) => "custom",
        }
    }

    pub fn phases(&self) -> Vec<WorkloadPhase> {
        match self {
            WorkloadSpec::Heartbeat => heartbeat_phases(),
            WorkloadSpec::FlashSale => flash_sale_phases(),
            WorkloadSpec::Custom(p) => p.clone(),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    MasH2,
    HpaCa,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::MasH2 => "mas_h2",
            ControllerKind::HpaCa => "hpa_ca",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mas_h2" => Some(ControllerKind::MasH2),
            "hpa_ca" => Some(ControllerKind::HpaCa),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolConfig {
    pub spec: PoolSpec,
    /// Unset: one node if the controller starts on this pool, none otherwise.
    pub initial_nodes: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub workload: WorkloadSpec,
    pub vu_cost: u32,
    pub noise_amplitude: f64,
    pub seed: u64,
    pub controller: ControllerKind,
    pub pod_request: u32,
    pub initial_replicas: u32,
    pub duration: u64,
    pub sample_interval: u64,
    pub pools: Vec<PoolConfig>,
    pub policies: Vec<Policy>,
    pub schedule: StrategicSchedule,
    pub other_requests: RequestSet,
    pub cluster: ClusterConfig,
    pub mas: HierarchicalConfig,
    pub hpa: HpaConfig,
    pub utility: UtilityNormalizers,
}

impl ScenarioConfig {
    pub fn trace(&self) -> Result<DemandTrace, TraceError> {
        build_trace(
            APP_WORKLOAD,
            &self.workload.phases(),
            TraceParams {
                vu_cost_millicores: self.vu_cost,
                noise_amplitude: self.noise_amplitude,
                noise_seed: self.seed,
            },
        )
    }

    pub fn policy(&self, name: PolicyName) -> Option<&Policy> {
        self.policies.iter().find(|p| p.name == name)
    }

    /// Pool the controller starts on.
    pub fn starting_pool(&self) -> &str {
        match self.controller {
            ControllerKind::HpaCa => &self.hpa.pool,
            ControllerKind::MasH2 => self
                .policy(self.schedule.default_policy())
                .map_or(STAGING_POOL, |p| p.node_pool.as_str()),
        }
    }

    pub fn initial_nodes(&self, pool: &PoolConfig) -> u32 {
        pool.initial_nodes
            .unwrap_or(u32::from(pool.spec.id == self.starting_pool()))
    }

    /// Human-readable resolved configuration.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}", self.name);
        let _ = writeln!(
            out,
            "  workload {} (vu_cost {}m, noise {}, seed {}), {} s, sampled every {} s",
            self.workload.name(),
            self.vu_cost,
            self.noise_amplitude,
            self.seed,
            self.duration,
            self.sample_interval
        );
        let _ = writeln!(
            out,
            "  controller {}, pod request {}m, {} initial replica(s)",
            self.controller.as_str(),
            self.pod_request,
            self.initial_replicas
        );
        for p in &self.pools {
            let _ = writeln!(
                out,
                "  pool {} ({}, {}m, {} units/node-s, {} s provisioning, {} initial node(s))",
                p.spec.id,
                p.spec.machine_type,
                p.spec.node_capacity_millicores,
                p.spec.cost_rate_micros as f64 / MICROS_PER_UNIT as f64,
                p.spec.provisioning_delay,
                self.initial_nodes(p)
            );
        }
        for p in &self.policies {
            let _ = writeln!(
                out,
                "  policy {} -> {} (min {} replicas, w_perf {}, w_cost {})",
                p.name, p.node_pool, p.min_replicas, p.w_perf, p.w_cost
            );
        }
        let _ = write!(out, "  schedule: {} from 0", self.schedule.default_policy());
        for (at, p) in self.schedule.entries() {
            let _ = write!(out, ", {p} from {at}");
        }
        let _ = writeln!(out);
        if self.controller == ControllerKind::MasH2 {
            let _ = writeln!(
                out,
                "  mas_h2: tick {} s, horizon {} s, target utilization {}, half-life {} s, forecaster {:?}",
                self.mas.control_interval,
                self.mas.horizon,
                self.mas.target_utilization,
                self.mas.smoothing_half_life,
                self.mas.forecaster
            );
        } else {
            let _ = writeln!(
                out,
                "  hpa: pool {}, target {}, replicas {}..={}, sync {} s, stabilization {} s, ca max nodes {}",
                self.hpa.pool,
                self.hpa.target_utilization,
                self.hpa.min_replicas,
                self.hpa.max_replicas,
                self.hpa.sync_period,
                self.hpa.scale_down_stabilization,
                self.hpa.ca_max_nodes
            );
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    workload: Spanned<String>,
    controller: Spanned<String>,
    seed: Option<u64>,
    vu_cost: Option<Spanned<u32>>,
    noise_amplitude: Option<Spanned<f64>>,
    pod_request: Option<Spanned<u32>>,
    initial_replicas: Option<u32>,
    duration: Option<Spanned<u64>>,
    sample_interval: Option<Spanned<u64>>,
    provisioning_delay: Option<u64>,
    pod_startup_delay: Option<u64>,
    pod_termination_delay: Option<u64>,
    pod_cost_rate: Option<Spanned<f64>>,
    default_policy: Option<Spanned<String>>,
    #[serde(default)]
    phases: Vec<WorkloadPhase>,
    pools: Option<Vec<RawPool>>,
    policies: Option<Vec<RawPolicy>>,
    #[serde(default)]
    schedule: Vec<RawSwitch>,
    other_requests: Option<Vec<RawRequest>>,
    mas_h2: Option<RawMas>,
    hpa: Option<RawHpa>,
    utility: Option<RawUtility>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPool {
    id: Spanned<String>,
    machine_type: Option<String>,
    capacity: Spanned<u32>,
    cost_rate: Spanned<f64>,
    initial_nodes: Option<u32>,
    provisioning_delay: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    name: Spanned<String>,
    node_pool: Spanned<String>,
    min_replicas: Option<u32>,
    w_perf: Spanned<f64>,
    w_cost: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSwitch {
    at: Spanned<u64>,
    policy: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequest {
    owner: String,
    cpu: Spanned<u32>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMas {
    control_interval: Option<Spanned<u64>>,
    horizon: Option<Spanned<u64>>,
    target_utilization: Option<Spanned<f64>>,
    smoothing_half_life: Option<f64>,
    forecaster: Option<Spanned<String>>,
    window: Option<Spanned<usize>>,
    period: Option<Spanned<u64>>,
    quantile: Option<Spanned<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawHpa {
    pool: Option<Spanned<String>>,
    target_utilization: Option<Spanned<f64>>,
    min_replicas: Option<Spanned<u32>>,
    max_replicas: Option<u32>,
    scale_down_stabilization: Option<u64>,
    sync_period: Option<Spanned<u64>>,
    saturation_ceiling: Option<Spanned<f64>>,
    ca_trigger_delay: Option<u64>,
    ca_idle_delay: Option<u64>,
    ca_max_nodes: Option<u32>,
    ca_min_nodes: Option<u32>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawUtility {
    perf_scale: Option<Spanned<f64>>,
    cost_scale: Option<Spanned<f64>>,
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].matches('\n').count() + 1
    }

    fn invalid(&self, field: impl Into<String>, span: Option<Range<usize>>, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Invalid {
            field: field.into(),
            line: span.map(|s| self.line(s)),
            message: message.into(),
        }
    }

    /// Unwraps an optional spanned value, checking it with `ok`.
    fn check<T: Copy>(
        &self,
        field: &str,
        value: Option<&Spanned<T>>,
        default: T,
        ok: impl Fn(T) -> bool,
        message: &str,
    ) -> Result<T, ScenarioError> {
        match value {
            None => Ok(default),
            Some(v) if ok(*v.get_ref()) => Ok(*v.get_ref()),
            Some(v) => Err(self.invalid(field, Some(v.span()), message)),
        }
    }
}

fn micros(rate: f64) -> u64 {
    (rate * MICROS_PER_UNIT as f64).round() as u64
}

fn default_pools(provisioning_delay: u64) -> Vec<PoolConfig> {
    let pool = |id: &str, machine: &str, capacity: u32, rate: u64| PoolConfig {
        spec: PoolSpec {
            id: id.into(),
            machine_type: machine.into(),
            node_capacity_millicores: capacity,
            cost_rate_micros: rate * MICROS_PER_UNIT,
            provisioning_delay,
        },
        initial_nodes: None,
    };
    vec![
        pool(STAGING_POOL, "e2-medium", 940, 1),
        pool(PERFORMANCE_POOL, "n2-standard-2", 1930, 3),
        pool(BASELINE_POOL, "e2-medium", 940, 1),
    ]
}

/// The two stock policies, with capacities looked up in `pools`.
pub fn default_policies(pools: &[PoolConfig]) -> Vec<Policy> {
    let capacity = |id: &str| {
        pools
            .iter()
            .find(|p| p.spec.id == id)
            .map_or(0, |p| p.spec.node_capacity_millicores)
    };
    vec![
        Policy {
            name: PolicyName::CostSaving,
            node_pool: STAGING_POOL.into(),
            node_capacity_millicores: capacity(STAGING_POOL),
            min_replicas: 1,
            w_perf: 0.2,
            w_cost: 0.8,
        },
        Policy {
            name: PolicyName::Performance,
            node_pool: PERFORMANCE_POOL.into(),
            node_capacity_millicores: capacity(PERFORMANCE_POOL),
            min_replicas: 2,
            w_perf: 0.8,
            w_cost: 0.2,
        },
    ]
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path
        .file_stem()
        .map_or_else(|| "scenario".to_string(), |s| s.to_string_lossy().into_owned());
    parse_scenario(&text, &stem)
}

/// Parses scenario text; `default_name` is used when the file sets no `name`.
pub fn parse_scenario(text: &str, default_name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let src = Source { text };

    let workload = match raw.workload.get_ref().as_str() {
        "heartbeat" | "flash_sale" if !raw.phases.is_empty() => {
            return Err(src.invalid("phases", Some(raw.workload.span()), "phases are only allowed with workload = \"custom\""))
        }
        "heartbeat" => WorkloadSpec::Heartbeat,
        "flash_sale" => WorkloadSpec::FlashSale,
        "custom" if raw.phases.is_empty() => {
            return Err(src.invalid("phases", Some(raw.workload.span()), "custom workload needs at least one [[phases]] entry"))
        }
        "custom" => WorkloadSpec::Custom(raw.phases.clone()),
        other => {
            return Err(src.invalid(
                "workload",
                Some(raw.workload.span()),
                format!("unknown workload `{other}` (expected heartbeat, flash_sale or custom)"),
            ))
        }
    };
    let controller = ControllerKind::parse(raw.controller.get_ref()).ok_or_else(|| {
        src.invalid(
            "controller",
            Some(raw.controller.span()),
            format!("unknown controller `{}` (expected mas_h2 or hpa_ca)", raw.controller.get_ref()),
        )
    })?;

    let vu_cost = src.check("vu_cost", raw.vu_cost.as_ref(), 2, |v| v > 0, "must be positive")?;
    let noise_amplitude = src.check(
        "noise_amplitude",
        raw.noise_amplitude.as_ref(),
        crate::workload::FLASH_SALE_CHATTER_NOISE,
        |v| (0.0..1.0).contains(&v),
        "must be in [0, 1)",
    )?;
    let pod_request = src.check("pod_request", raw.pod_request.as_ref(), 250, |v| v > 0, "must be positive")?;
    let sample_interval = src.check("sample_interval", raw.sample_interval.as_ref(), 5, |v| v > 0, "must be positive")?;
    let pod_cost_rate = src.check("pod_cost_rate", raw.pod_cost_rate.as_ref(), 0.1, |v| v >= 0.0, "must be non-negative")?;
    let provisioning_delay = raw.provisioning_delay.unwrap_or(120);

    let cluster = ClusterConfig {
        pod_startup_delay: raw.pod_startup_delay.unwrap_or(10),
        pod_termination_delay: raw.pod_termination_delay.unwrap_or(5),
        pod_cost_rate_micros: micros(pod_cost_rate),
    };

    let pools = match &raw.pools {
        None => default_pools(provisioning_delay),
        Some(list) => {
            let mut pools: Vec<PoolConfig> = Vec::new();
            for (i, p) in list.iter().enumerate() {
                let field = |f: &str| format!("pools[{i}].{f}");
                if pools.iter().any(|q| q.spec.id == *p.id.get_ref()) {
                    return Err(src.invalid(field("id"), Some(p.id.span()), format!("duplicate pool `{}`", p.id.get_ref())));
                }
                if *p.capacity.get_ref() == 0 {
                    return Err(src.invalid(field("capacity"), Some(p.capacity.span()), "must be positive"));
                }
                if p.cost_rate.get_ref().is_nan() || *p.cost_rate.get_ref() < 0.0 {
                    return Err(src.invalid(field("cost_rate"), Some(p.cost_rate.span()), "must be non-negative"));
                }
                pools.push(PoolConfig {
                    spec: PoolSpec {
                        id: p.id.get_ref().clone(),
                        machine_type: p.machine_type.clone().unwrap_or_else(|| "custom".into()),
                        node_capacity_millicores: *p.capacity.get_ref(),
                        cost_rate_micros: micros(*p.cost_rate.get_ref()),
                        provisioning_delay: p.provisioning_delay.unwrap_or(provisioning_delay),
                    },
                    initial_nodes: p.initial_nodes,
                });
            }
            pools
        }
    };
    let pool_capacity = |id: &str| pools.iter().find(|p| p.spec.id == id).map(|p| p.spec.node_capacity_millicores);

    let policies = match &raw.policies {
        None => default_policies(&pools),
        Some(list) => {
            let mut policies: Vec<Policy> = Vec::new();
            for (i, p) in list.iter().enumerate() {
                let field = |f: &str| format!("policies[{i}].{f}");
                let name = PolicyName::parse(p.name.get_ref()).ok_or_else(|| {
                    src.invalid(
                        field("name"),
                        Some(p.name.span()),
                        format!("unknown policy `{}` (expected COST_SAVING or PERFORMANCE)", p.name.get_ref()),
                    )
                })?;
                if policies.iter().any(|q| q.name == name) {
                    return Err(src.invalid(field("name"), Some(p.name.span()), format!("duplicate policy `{name}`")));
                }
                let capacity = pool_capacity(p.node_pool.get_ref()).ok_or_else(|| {
                    src.invalid(field("node_pool"), Some(p.node_pool.span()), format!("undefined pool `{}`", p.node_pool.get_ref()))
                })?;
                let policy = Policy {
                    name,
                    node_pool: p.node_pool.get_ref().clone(),
                    node_capacity_millicores: capacity,
                    min_replicas: p.min_replicas.unwrap_or(1),
                    w_perf: *p.w_perf.get_ref(),
                    w_cost: p.w_cost,
                };
                if !policy.weights_normalized() {
                    return Err(src.invalid(field("w_perf"), Some(p.w_perf.span()), "weights must be non-negative and sum to 1"));
                }
                policies.push(policy);
            }
            policies
        }
    };
    for (i, p) in policies.iter().enumerate() {
        if pod_request > p.node_capacity_millicores {
            return Err(src.invalid(
                format!("policies[{i}].node_pool"),
                None,
                format!("pod request {pod_request}m exceeds {} node capacity {}m", p.node_pool, p.node_capacity_millicores),
            ));
        }
    }

    let policy_ref = |field: String, name: &Spanned<String>| -> Result<PolicyName, ScenarioError> {
        PolicyName::parse(name.get_ref())
            .filter(|n| policies.iter().any(|p| p.name == *n))
            .ok_or_else(|| src.invalid(field, Some(name.span()), format!("undefined policy `{}`", name.get_ref())))
    };
    let default_policy = match &raw.default_policy {
        Some(name) => policy_ref("default_policy".into(), name)?,
        None => PolicyName::CostSaving,
    };
    if !policies.iter().any(|p| p.name == default_policy) {
        return Err(src.invalid("default_policy", None, format!("undefined policy `{default_policy}`")));
    }
    let mut entries = Vec::with_capacity(raw.schedule.len());
    for (i, s) in raw.schedule.iter().enumerate() {
        let name = policy_ref(format!("schedule[{i}].policy"), &s.policy)?;
        if let Some((prev, _)) = entries.last() {
            if *s.at.get_ref() <= *prev {
                return Err(src.invalid(format!("schedule[{i}].at"), Some(s.at.span()), "switch times must be strictly increasing"));
            }
        }
        entries.push((*s.at.get_ref(), name));
    }
    let schedule = StrategicSchedule::new(default_policy, entries).map_err(|e| src.invalid("schedule", None, e))?;

    let other_requests = match &raw.other_requests {
        None => RequestSet::default(),
        Some(list) => {
            let mut items = Vec::new();
            for (i, r) in list.iter().enumerate() {
                let cpu = *r.cpu.get_ref();
                let too_big = policies.iter().find(|p| cpu > p.node_capacity_millicores);
                if cpu == 0 || too_big.is_some() {
                    return Err(src.invalid(
                        format!("other_requests[{i}].cpu"),
                        Some(r.cpu.span()),
                        "must be positive and fit on a node of every policy pool",
                    ));
                }
                items.push(RequestItem::new(r.owner.clone(), cpu));
            }
            RequestSet::new(items)
        }
    };

    let m = raw.mas_h2.unwrap_or_default();
    let defaults = HierarchicalConfig::default();
    let quantile = src.check("mas_h2.quantile", m.quantile.as_ref(), 0.95, |q| q > 0.0 && q <= 1.0, "must be in (0, 1]")?;
    let period = match &m.period {
        Some(p) if *p.get_ref() == 0 => return Err(src.invalid("mas_h2.period", Some(p.span()), "must be positive")),
        Some(p) => Some(*p.get_ref()),
        None => None,
    };
    let forecaster = match m.forecaster.as_ref().map(|f| (f.get_ref().as_str(), f.span())) {
        None | Some(("seasonal_peak", _)) => ForecasterChoice::SeasonalPeak { period, quantile },
        Some(("naive", _)) => ForecasterChoice::Naive,
        Some(("moving_average", span)) => ForecasterChoice::MovingAverage {
            window: match &m.window {
                Some(w) if *w.get_ref() > 0 => *w.get_ref(),
                Some(w) => return Err(src.invalid("mas_h2.window", Some(w.span()), "must be positive")),
                None => return Err(src.invalid("mas_h2.window", Some(span), "moving_average needs a window")),
            },
        },
        Some((other, span)) => {
            return Err(src.invalid(
                "mas_h2.forecaster",
                Some(span),
                format!("unknown forecaster `{other}` (expected naive, moving_average or seasonal_peak)"),
            ))
        }
    };
    let mas = HierarchicalConfig {
        control_interval: src.check("mas_h2.control_interval", m.control_interval.as_ref(), defaults.control_interval, |v| v > 0, "must be positive")?,
        horizon: src.check("mas_h2.horizon", m.horizon.as_ref(), defaults.horizon, |v| v > 0, "must be positive")?,
        target_utilization: src.check(
            "mas_h2.target_utilization",
            m.target_utilization.as_ref(),
            defaults.target_utilization,
            |v| v > 0.0 && v <= 1.0,
            "must be in (0, 1]",
        )?,
        smoothing_half_life: m.smoothing_half_life.unwrap_or(defaults.smoothing_half_life),
        forecaster,
    };

    let h = raw.hpa.unwrap_or_default();
    let hd = HpaConfig::default();
    let hpa_pool = match &h.pool {
        Some(p) if pool_capacity(p.get_ref()).is_none() => {
            return Err(src.invalid("hpa.pool", Some(p.span()), format!("undefined pool `{}`", p.get_ref())))
        }
        Some(p) => p.get_ref().clone(),
        None => hd.pool.clone(),
    };
    if controller == ControllerKind::HpaCa && pool_capacity(&hpa_pool).is_none() {
        return Err(src.invalid("hpa.pool", None, format!("undefined pool `{hpa_pool}`")));
    }
    let min_replicas = src.check("hpa.min_replicas", h.min_replicas.as_ref(), hd.min_replicas, |v| v >= 1, "must be at least 1")?;
    let max_replicas = h.max_replicas.unwrap_or(hd.max_replicas);
    if max_replicas < min_replicas {
        return Err(src.invalid("hpa.max_replicas", None, "must be at least min_replicas"));
    }
    let hpa = HpaConfig {
        pool: hpa_pool,
        target_utilization: src.check("hpa.target_utilization", h.target_utilization.as_ref(), hd.target_utilization, |v| v > 0.0 && v <= 1.0, "must be in (0, 1]")?,
        min_replicas,
        max_replicas,
        scale_down_stabilization: h.scale_down_stabilization.unwrap_or(hd.scale_down_stabilization),
        sync_period: src.check("hpa.sync_period", h.sync_period.as_ref(), hd.sync_period, |v| v > 0, "must be positive")?,
        saturation_ceiling: src.check("hpa.saturation_ceiling", h.saturation_ceiling.as_ref(), hd.saturation_ceiling, |v| v >= 1.0, "must be at least 1")?,
        ca_trigger_delay: h.ca_trigger_delay.unwrap_or(hd.ca_trigger_delay),
        ca_idle_delay: h.ca_idle_delay.unwrap_or(hd.ca_idle_delay),
        ca_max_nodes: h.ca_max_nodes.unwrap_or(hd.ca_max_nodes),
        ca_min_nodes: h.ca_min_nodes.unwrap_or(hd.ca_min_nodes),
    };

    let u = raw.utility.unwrap_or_default();
    let ud = UtilityNormalizers::default();
    let utility = UtilityNormalizers {
        perf_scale: src.check("utility.perf_scale", u.perf_scale.as_ref(), ud.perf_scale, |v| v > 0.0, "must be positive")?,
        cost_scale: src.check("utility.cost_scale", u.cost_scale.as_ref(), ud.cost_scale, |v| v > 0.0, "must be positive")?,
    };

    let mut config = ScenarioConfig {
        name: raw.name.clone().unwrap_or_else(|| default_name.to_string()),
        workload,
        vu_cost,
        noise_amplitude,
        seed: raw.seed.unwrap_or(0),
        controller,
        pod_request,
        initial_replicas: raw.initial_replicas.unwrap_or(1),
        duration: 0,
        sample_interval,
        pools,
        policies,
        schedule,
        other_requests,
        cluster,
        mas,
        hpa,
        utility,
    };
    let trace_len = config
        .trace()
        .map_err(|e| src.invalid("phases", None, e.to_string()))?
        .len_seconds();
    config.duration = match &raw.duration {
        None => trace_len,
        Some(d) if *d.get_ref() >= trace_len => *d.get_ref(),
        Some(d) => {
            return Err(src.invalid(
                "duration",
                Some(d.span()),
                format!("must cover the {trace_len} s workload trace"),
            ))
        }
    };
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_scenario("workload = \"heartbeat\"\ncontroller = \"hpa_ca\"\n", "min").unwrap();
        assert_eq!(c.name, "min");
        assert_eq!((c.vu_cost, c.pod_request, c.duration, c.sample_interval), (2, 250, 780, 5));
        assert_eq!(c.hpa, HpaConfig::default());
        assert_eq!(c.pools.len(), 3);
        assert_eq!(c.starting_pool(), BASELINE_POOL);
        let initial: Vec<u32> = c.pools.iter().map(|p| c.initial_nodes(p)).collect();
        assert_eq!(initial, vec![0, 0, 1]);
        assert_eq!(c.schedule.default_policy(), PolicyName::CostSaving);
    }

    #[test]
    fn undefined_policy_names_field_and_line() {
        let text = "workload = \"flash_sale\"\ncontroller = \"mas_h2\"\n\n[[schedule]]\nat = 420\npolicy = \"TURBO\"\n";
        let err = parse_scenario(text, "x").unwrap_err();
        match &err {
            ScenarioError::Invalid { field, line, .. } => {
                assert_eq!(field, "schedule[0].policy");
                assert_eq!(*line, Some(6));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("TURBO"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_scenario("workload = \"heartbeat\"\ncontroller = \"hpa_ca\"\nturbo = 1\n", "x").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(ref m) if m.contains("turbo")), "{err}");
        let err = parse_scenario("workload = \"heartbeat\"\ncontroller = \"hpa_ca\"\n[hpa]\ntarget = 0.5\n", "x").unwrap_err();
        assert!(err.to_string().contains("target"));
    }

    #[test]
    fn short_duration_is_rejected() {
        let err = parse_scenario("workload = \"heartbeat\"\ncontroller = \"hpa_ca\"\nduration = 100\n", "x").unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { ref field, line: Some(3), .. } if field == "duration"));
    }

    #[test]
    fn policy_on_undefined_pool() {
        let text = r#"
workload = "heartbeat"
controller = "mas_h2"

[[policies]]
name = "COST_SAVING"
node_pool = "nowhere"
w_perf = 0.2
w_cost = 0.8
"#;
        let err = parse_scenario(text, "x").unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { ref field, line: Some(7), .. } if field == "policies[0].node_pool"));
    }

    #[test]
    fn custom_workload_with_phases() {
        let text = r#"
workload = "custom"
controller = "mas_h2"

[[phases]]
duration_seconds = 60
target_vus = 100
ramp = "linear"

[[phases]]
duration_seconds = 60
target_vus = 100
ramp = "step"
noisy = true
"#;
        let c = parse_scenario(text, "x").unwrap();
        assert_eq!(c.duration, 120);
        assert_eq!(c.trace().unwrap().demand_at(59), 196);
    }

    #[test]
    fn forecaster_selection() {
        let text = "workload = \"heartbeat\"\ncontroller = \"mas_h2\"\n[mas_h2]\nforecaster = \"moving_average\"\nwindow = 30\n";
        let c = parse_scenario(text, "x").unwrap();
        assert_eq!(c.mas.forecaster, ForecasterChoice::MovingAverage { window: 30 });
        let text = "workload = \"heartbeat\"\ncontroller = \"mas_h2\"\n[mas_h2]\nforecaster = \"moving_average\"\n";
        assert!(parse_scenario(text, "x").is_err());
        let text = "workload = \"heartbeat\"\ncontroller = \"mas_h2\"\n[mas_h2]\nperiod = 240\n";
        let c = parse_scenario(text, "x").unwrap();
        assert_eq!(c.mas.forecaster, ForecasterChoice::SeasonalPeak { period: Some(240), quantile: 0.95 });
    }
}
