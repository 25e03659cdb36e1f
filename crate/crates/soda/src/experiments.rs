//! Multi-run drivers: seeded sweeps with checking, the exhaustive
//! sender-crash uniformity matrix, and protocol cost comparisons. Individual
//! runs stay sequential; independent seeds fan out across worker threads.

use crate::actors::Note;
use crate::checker::{check_run, delta_window, CheckSet, DeltaWindow};
use crate::protocol::{MessageKind, OpId, ProcessId};
use crate::sim::{
    run, CrashPoint, CrashSpec, DeliveryModel, OpKind, Protocol, RunArtifacts, SimConfig,
};
use crate::trace::TracePhase;
use rayon::prelude::*;
use std::collections::BTreeSet;

/// Outcome of one checked run, reduced to what sweeps aggregate.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub seed: u64,
    pub pass: bool,
    pub failures: Vec<String>,
    pub write_durations: Vec<u64>,
    pub read_durations: Vec<u64>,
    pub max_write_units: f64,
    pub max_read_units: f64,
    pub storage_units: f64,
    pub events: u64,
}

#[derive(Debug, Default, Clone)]
pub struct SweepSummary {
    pub runs: usize,
    pub failures: Vec<(u64, String)>,
    pub max_write_units: f64,
    pub max_read_units: f64,
    pub max_storage_units: f64,
    pub max_write_duration: u64,
    pub max_read_duration: u64,
    pub read_durations: Vec<u64>,
    pub total_events: u64,
}

impl SweepSummary {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn mean_read_duration(&self) -> f64 {
        if self.read_durations.is_empty() {
            return 0.0;
        }
        self.read_durations.iter().sum::<u64>() as f64 / self.read_durations.len() as f64
    }
}

/// Normalization unit in bytes: the padded value size for the erasure-coded
/// protocols, the raw value size for ABD.
pub fn unit_bytes(cfg: &SimConfig) -> f64 {
    match cfg.protocol {
        Protocol::Abd => cfg.value_size as f64,
        _ => {
            let params = cfg.code_params().expect("validated");
            params.padded_len(cfg.value_size) as f64
        }
    }
}

pub fn summarize(art: &RunArtifacts, checks: &CheckSet) -> RunSummary {
    let report = check_run(art, checks);
    let unit = unit_bytes(&art.config);
    let mut s = RunSummary {
        seed: art.config.seed,
        pass: report.all_pass(),
        failures: report.failures(),
        write_durations: Vec::new(),
        read_durations: Vec::new(),
        max_write_units: 0.0,
        max_read_units: 0.0,
        storage_units: art.storage_peak_bytes as f64 / unit,
        events: art.events_processed,
    };
    for rec in art.log.iter().filter(|r| r.response.is_some()) {
        let dur = rec.response.unwrap() - rec.invoke;
        let units = art.cost_bytes.get(&rec.op).copied().unwrap_or(0) as f64 / unit;
        match rec.kind {
            OpKind::Write => {
                s.write_durations.push(dur);
                s.max_write_units = s.max_write_units.max(units);
            }
            OpKind::Read => {
                s.read_durations.push(dur);
                s.max_read_units = s.max_read_units.max(units);
            }
        }
    }
    s
}

/// Runs `count` seeds derived from the base seed, checks each, aggregates.
pub fn sweep(base: &SimConfig, count: u64, checks: &CheckSet) -> SweepSummary {
    let summaries: Vec<RunSummary> = (0..count)
        .into_par_iter()
        .map(|i| {
            let cfg = base.clone().with_seed(base.seed.wrapping_add(i));
            match run(&cfg) {
                Ok(art) => summarize(&art, checks),
                Err(e) => RunSummary {
                    seed: cfg.seed,
                    pass: false,
                    failures: vec![e.to_string()],
                    write_durations: Vec::new(),
                    read_durations: Vec::new(),
                    max_write_units: 0.0,
                    max_read_units: 0.0,
                    storage_units: 0.0,
                    events: 0,
                },
            }
        })
        .collect();
    let mut agg = SweepSummary { runs: summaries.len(), ..Default::default() };
    for s in summaries {
        if !s.pass {
            let msg = s.failures.join("; ");
            agg.failures.push((s.seed, msg));
        }
        agg.max_write_units = agg.max_write_units.max(s.max_write_units);
        agg.max_read_units = agg.max_read_units.max(s.max_read_units);
        agg.max_storage_units = agg.max_storage_units.max(s.storage_units);
        agg.max_write_duration =
            agg.max_write_duration.max(s.write_durations.iter().copied().max().unwrap_or(0));
        agg.max_read_duration =
            agg.max_read_duration.max(s.read_durations.iter().copied().max().unwrap_or(0));
        agg.read_durations.extend(s.read_durations);
        agg.total_events += s.events;
    }
    agg
}

/// Coded elements sent to each completed read, with its concurrency window.
pub fn read_element_counts(art: &RunArtifacts) -> Vec<(OpId, u64, Option<DeltaWindow>)> {
    art.log
        .iter()
        .filter(|r| r.kind == OpKind::Read && r.response.is_some())
        .map(|r| {
            let elems = art
                .trace
                .iter()
                .filter(|ev| {
                    ev.phase == TracePhase::Sent
                        && ev.kind == MessageKind::CodedToReader
                        && ev.op == Some(r.op)
                })
                .count() as u64;
            (r.op, elems, delta_window(art, r.op))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub cases: usize,
    pub runs: usize,
    pub failures: Vec<String>,
}

impl MatrixOutcome {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Exhaustive sender-crash uniformity matrix for a single write: the writer
/// crashes after each prefix of its value sends, and each first-f+1 server
/// crashes after each prefix of its relay/coded sends. Whenever any server
/// delivers a coded element, every non-crashed server must deliver one, and
/// every delivered element must match the encoder output.
pub fn uniformity_matrix(n: usize, f: usize, value_size: usize, seeds_per_case: u64) -> MatrixOutcome {
    let mut cases: Vec<(u64, Option<(u32, u64)>)> = Vec::new();
    for j in 0..=(f as u64 + 1) {
        cases.push((j, None));
        for server in 1..=(f as u32 + 1) {
            // relay fulls + coded sends by this server for one write
            let max_vsends = (f as u64 + 1 - server as u64) + (n as u64 - f as u64 - 1);
            for p in 0..=max_vsends {
                cases.push((j, Some((server, p))));
            }
        }
    }
    let total_cases = cases.len();
    let failures: Vec<String> = cases
        .into_par_iter()
        .flat_map(|(j, server_case)| {
            (0..seeds_per_case)
                .filter_map(|seed_idx| {
                    let mut cfg = SimConfig::new(Protocol::Soda, n, f);
                    cfg.writers = 1;
                    cfg.readers = 0;
                    cfg.ops_per_client = 1;
                    cfg.value_size = value_size;
                    cfg.delivery = DeliveryModel::AsyncUnordered { max_delay: 6 };
                    cfg.start_jitter = 0;
                    cfg.seed = 1000 * j + 17 * seed_idx + 31;
                    cfg.crash.push(CrashSpec {
                        pid: ProcessId::writer(1),
                        point: CrashPoint::AfterValueSends(j),
                    });
                    if let Some((server, p)) = server_case {
                        cfg.seed = cfg.seed.wrapping_add(500_000 * server as u64 + 7 * p);
                        cfg.crash.push(CrashSpec {
                            pid: ProcessId::server(server),
                            point: CrashPoint::AfterValueSends(p),
                        });
                    }
                    let case = format!("writer@vsends={j} server={server_case:?} seed={}", cfg.seed);
                    let art = match run(&cfg) {
                        Ok(art) => art,
                        Err(e) => return Some(format!("{case}: {e}")),
                    };
                    check_uniformity(&art).map(|msg| format!("{case}: {msg}"))
                })
                .collect::<Vec<String>>()
        })
        .collect();
    MatrixOutcome {
        cases: total_cases,
        runs: total_cases * seeds_per_case as usize,
        failures,
    }
}

/// Uniformity and validity verdict for a run with md-value traffic.
pub fn check_uniformity(art: &RunArtifacts) -> Option<String> {
    if !art.validity_failures.is_empty() {
        return Some(art.validity_failures.join("; "));
    }
    let mut delivered_by_mid: std::collections::BTreeMap<_, BTreeSet<usize>> = Default::default();
    for ev in &art.state_events {
        if let Note::MdValueDelivered { server, mid, .. } = ev.note {
            delivered_by_mid.entry(mid).or_default().insert(server);
        }
    }
    let crashed: BTreeSet<usize> = art
        .servers
        .iter()
        .filter(|s| s.crashed)
        .map(|s| s.pid.server_index())
        .collect();
    for (mid, delivered) in delivered_by_mid {
        if delivered.is_empty() {
            continue;
        }
        for s in art.servers.iter().map(|s| s.pid.server_index()) {
            if !crashed.contains(&s) && !delivered.contains(&s) {
                return Some(format!(
                    "uniformity broken for {mid}: s{s} is non-faulty but never delivered \
                     (delivered: {delivered:?}, crashed: {crashed:?})"
                ));
            }
        }
    }
    // residual value bytes in message-disperse state also count as failure
    for s in art.servers.iter().filter(|s| !s.crashed) {
        if !s.md_residual.is_empty() {
            return Some(format!("{} retains md content {:?}", s.pid, s.md_residual));
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct CostRow {
    pub protocol: Protocol,
    pub storage_units: f64,
    pub max_write_units: f64,
    pub max_read_units: f64,
}

/// Runs the same workload shape under each protocol and tabulates measured
/// normalized costs.
pub fn compare_protocols(base: &SimConfig, protocols: &[Protocol], seeds: u64) -> Vec<CostRow> {
    protocols
        .iter()
        .map(|p| {
            let mut cfg = base.clone();
            cfg.protocol = *p;
            if *p != Protocol::SodaErr {
                cfg.e = 0;
                cfg.error_schedule.clear();
            }
            let mut checks = CheckSet::for_config(&cfg);
            checks.latency = false;
            let agg = sweep(&cfg, seeds, &checks);
            CostRow {
                protocol: *p,
                storage_units: agg.max_storage_units,
                max_write_units: agg.max_write_units,
                max_read_units: agg.max_read_units,
            }
        })
        .collect()
}

pub fn render_cost_table(rows: &[CostRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>14} {:>14} {:>14}\n",
        "protocol", "write(units)", "read(units)", "storage(units)"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>14.3} {:>14.3} {:>14.3}\n",
            r.protocol.to_string(),
            r.max_write_units,
            r.max_read_units,
            r.storage_units
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_aggregates_passing_runs() {
        let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
        cfg.writers = 1;
        cfg.readers = 1;
        cfg.ops_per_client = 1;
        cfg.value_size = 30;
        let agg = sweep(&cfg, 8, &CheckSet::for_config(&cfg));
        assert_eq!(agg.runs, 8);
        assert!(agg.all_pass(), "{:?}", agg.failures);
        assert!(agg.max_storage_units > 1.6 && agg.max_storage_units < 1.7);
    }

    #[test]
    fn table_shape_at_half_minus_one() {
        // f = n/2 - 1 with even n: storage <= 2 and read <= 2(delta_w+1)
        // against full replication's n
        let mut cfg = SimConfig::new(Protocol::Soda, 10, 4);
        cfg.writers = 1;
        cfg.readers = 1;
        cfg.ops_per_client = 2;
        cfg.value_size = 60;
        cfg.seed = 21;
        let rows = compare_protocols(&cfg, &[Protocol::Soda, Protocol::Abd], 4);
        let soda = &rows[0];
        let abd = &rows[1];
        assert!(soda.storage_units <= 2.0);
        assert!((abd.storage_units - 10.0).abs() < 1e-9);
        assert!(soda.storage_units < abd.storage_units);
    }
}
