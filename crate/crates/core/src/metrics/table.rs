use std::io;

use super::{MetricSample, NodeCounts};

const NODE_STATES: [&str; 3] = ["provisioning", "ready", "draining"];

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("metrics table: {0}")]
    Format(String),
}

/// Writes samples as CSV. Node counts become one column per pool and state, named
/// `nodes_<pool>_<state>`; floats use shortest round-trip formatting.
pub fn write_metrics_csv<W: io::Write>(writer: W, samples: &[MetricSample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let pools: Vec<&str> = samples
        .first()
        .map(|s| s.nodes.iter().map(|(p, _)| p.as_str()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = ["t", "demand_millicores", "running_replicas", "pending_pods"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for pool in &pools {
        header.extend(NODE_STATES.iter().map(|st| format!("nodes_{pool}_{st}")));
    }
    header.extend(
        [
            "utilization",
            "cpu_waste_millicores",
            "cumulative_pod_cost",
            "cumulative_node_cost",
            "packing_efficiency",
            "utility",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![
            s.t.to_string(),
            s.demand_millicores.to_string(),
            s.running_replicas.to_string(),
            s.pending_pods.to_string(),
        ];
        for (_, c) in &s.nodes {
            row.extend([c.provisioning, c.ready, c.draining].iter().map(u32::to_string));
        }
        row.extend([
            s.utilization.to_string(),
            s.cpu_waste_millicores.to_string(),
            s.cumulative_pod_cost.to_string(),
            s.cumulative_node_cost.to_string(),
            s.packing_efficiency.to_string(),
            s.utility.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, name: &str) -> Result<T, TableError> {
    record
        .get(idx)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| TableError::Format(format!("bad `{name}` in row {:?}", record.position().map(|p| p.line()))))
}

pub fn read_metrics_csv<R: io::Read>(reader: R) -> Result<Vec<MetricSample>, TableError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let col = |name: &str| -> Result<usize, TableError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TableError::Format(format!("missing column `{name}`")))
    };
    let fixed = [
        "t",
        "demand_millicores",
        "running_replicas",
        "pending_pods",
        "utilization",
        "cpu_waste_millicores",
        "cumulative_pod_cost",
        "cumulative_node_cost",
        "packing_efficiency",
        "utility",
    ]
    .map(col);
    let mut idx = [0usize; 10];
    for (slot, c) in idx.iter_mut().zip(fixed) {
        *slot = c?;
    }

    // pools in column order, each with its three state columns
    let mut pools: Vec<(String, [usize; 3])> = Vec::new();
    for (i, h) in header.iter().enumerate() {
        let Some((pool, state)) = h.strip_prefix("nodes_").and_then(|rest| rest.rsplit_once('_')) else {
            continue;
        };
        let Some(k) = NODE_STATES.iter().position(|s| *s == state) else {
            return Err(TableError::Format(format!("unknown node state column `{h}`")));
        };
        let entry = match pools.iter_mut().find(|(p, _)| p == pool) {
            Some(e) => e,
            None => {
                pools.push((pool.to_string(), [usize::MAX; 3]));
                pools.last_mut().expect("just pushed")
            }
        };
        entry.1[k] = i;
    }
    if let Some((pool, _)) = pools.iter().find(|(_, c)| c.contains(&usize::MAX)) {
        return Err(TableError::Format(format!("incomplete node columns for pool `{pool}`")));
    }

    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let mut nodes = Vec::with_capacity(pools.len());
        for (pool, c) in &pools {
            nodes.push((
                pool.clone(),
                NodeCounts {
                    provisioning: field(&record, c[0], "nodes")?,
                    ready: field(&record, c[1], "nodes")?,
                    draining: field(&record, c[2], "nodes")?,
                },
            ));
        }
        out.push(MetricSample {
            t: field(&record, idx[0], "t")?,
            demand_millicores: field(&record, idx[1], "demand_millicores")?,
            running_replicas: field(&record, idx[2], "running_replicas")?,
            pending_pods: field(&record, idx[3], "pending_pods")?,
            nodes,
            utilization: field(&record, idx[4], "utilization")?,
            cpu_waste_millicores: field(&record, idx[5], "cpu_waste_millicores")?,
            cumulative_pod_cost: field(&record, idx[6], "cumulative_pod_cost")?,
            cumulative_node_cost: field(&record, idx[7], "cumulative_node_cost")?,
            packing_efficiency: field(&record, idx[8], "packing_efficiency")?,
            utility: field(&record, idx[9], "utility")?,
        });
    }
    Ok(out)
}
