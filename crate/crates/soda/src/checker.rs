//! Post-hoc verification over run artifacts: atomicity (P1/P2/P3 under the
//! tag order), liveness, storage and communication cost bounds, latency
//! bounds, eventual unregistration, and the no-garbage property of
//! message-disperse state.

use crate::actors::{Note, UnregisterReason};
use crate::protocol::{MessageKind, OpId, ProcessId, Role, Tag};
use crate::sim::{DeliveryModel, OpKind, OperationRecord, Protocol, RunArtifacts, Time};
use crate::trace::TracePhase;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckSet {
    pub atomicity: bool,
    pub liveness: bool,
    pub costs: bool,
    pub latency: bool,
    pub unregistration: bool,
    pub no_garbage: bool,
}

impl CheckSet {
    pub fn all() -> CheckSet {
        CheckSet {
            atomicity: true,
            liveness: true,
            costs: true,
            latency: true,
            unregistration: true,
            no_garbage: true,
        }
    }

    /// Everything that applies to this configuration; the latency check
    /// requires the delta-bounded delivery model.
    pub fn for_config(cfg: &crate::sim::SimConfig) -> CheckSet {
        let mut set = CheckSet::all();
        set.latency = matches!(cfg.delivery, DeliveryModel::DeltaBounded { .. });
        set
    }

    pub fn parse(s: &str) -> Result<CheckSet, String> {
        let mut set = CheckSet {
            atomicity: false,
            liveness: false,
            costs: false,
            latency: false,
            unregistration: false,
            no_garbage: false,
        };
        for name in s.split(',') {
            match name.trim() {
                "" => {}
                "all" => return Ok(CheckSet::all()),
                "atomicity" => set.atomicity = true,
                "liveness" => set.liveness = true,
                "costs" => set.costs = true,
                "latency" => set.latency = true,
                "unregistration" => set.unregistration = true,
                "no_garbage" | "no-garbage" => set.no_garbage = true,
                other => return Err(format!("unknown check {other:?}")),
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone)]
pub struct CheckSection {
    pub name: &'static str,
    pub pass: bool,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub sections: Vec<CheckSection>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.sections.iter().all(|s| s.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.sections
            .iter()
            .filter(|s| !s.pass)
            .map(|s| format!("{}: {}", s.name, s.lines.join("; ")))
            .collect()
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sections {
            writeln!(f, "== {}: {}", s.name, if s.pass { "PASS" } else { "FAIL" })?;
            for line in &s.lines {
                writeln!(f, "   {line}")?;
            }
        }
        Ok(())
    }
}

pub fn check_run(art: &RunArtifacts, checks: &CheckSet) -> RunReport {
    let mut sections = Vec::new();
    if checks.atomicity {
        sections.push(check_atomicity(art));
    }
    if checks.liveness {
        sections.push(check_liveness(art));
    }
    if checks.costs {
        sections.push(check_costs(art));
    }
    if checks.latency {
        sections.push(check_latency(art));
    }
    if checks.unregistration {
        sections.push(check_unregistration(art));
    }
    if checks.no_garbage {
        sections.push(check_no_garbage(art));
    }
    RunReport { sections }
}

/// pi precedes phi in the atomicity order: smaller tag, or equal tags with
/// pi a write and phi a read.
fn precedes(pi: &OperationRecord, phi: &OperationRecord) -> bool {
    let (a, b) = (pi.tag.expect("complete"), phi.tag.expect("complete"));
    a < b || (a == b && pi.kind == OpKind::Write && phi.kind == OpKind::Read)
}

pub fn check_atomicity(art: &RunArtifacts) -> CheckSection {
    let mut lines = Vec::new();
    let mut violations: Vec<String> = Vec::new();

    let complete: Vec<&OperationRecord> =
        art.log.iter().filter(|r| r.response.is_some() && r.tag.is_some()).collect();
    lines.push(format!("{} operations, {} complete", art.log.len(), complete.len()));

    // P2: writes totally ordered, i.e. no two distinct writes share a tag
    let mut write_tags: BTreeMap<Tag, OpId> = BTreeMap::new();
    for w in art.log.iter().filter(|r| r.kind == OpKind::Write) {
        if let Some(tag) = w.tag {
            if let Some(prev) = write_tags.insert(tag, w.op) {
                violations.push(format!("P2: writes {prev} and {} share tag {tag}", w.op));
            }
        }
    }

    // P1: the order must extend real-time precedence
    for a in &complete {
        for b in &complete {
            if a.response.unwrap() < b.invoke && precedes(b, a) {
                violations.push(format!(
                    "P1: {} (tag {}) completed at {} before {} (tag {}) invoked at {}, \
                     yet orders after it",
                    a.op,
                    a.tag.unwrap(),
                    a.response.unwrap(),
                    b.op,
                    b.tag.unwrap(),
                    b.invoke
                ));
            }
        }
    }

    // P3: a read returns the value of the write at its tag (or the initial
    // value at t0). Incomplete writes still anchor reads that saw them.
    let mut tag_values: BTreeMap<Tag, u64> = BTreeMap::new();
    tag_values.insert(Tag::INITIAL, art.initial_hash);
    for w in art.log.iter().filter(|r| r.kind == OpKind::Write) {
        if let (Some(tag), Some(h)) = (w.tag, w.value_hash) {
            tag_values.insert(tag, h);
        }
    }
    for r in complete.iter().filter(|r| r.kind == OpKind::Read) {
        let tag = r.tag.unwrap();
        match (tag_values.get(&tag), r.value_hash) {
            (Some(expected), Some(got)) if *expected == got => {}
            (Some(_), Some(_)) => violations.push(format!(
                "P3: read {} returned a value that differs from the write at tag {tag}",
                r.op
            )),
            (Some(_), None) => {
                violations.push(format!("P3: read {} failed to decode at tag {tag}", r.op))
            }
            (None, _) => violations.push(format!(
                "P3: read {} returned tag {tag} that no write produced",
                r.op
            )),
        }
    }

    let pass = violations.is_empty();
    lines.extend(violations.into_iter().take(6));
    CheckSection { name: "atomicity", pass, lines }
}

fn check_liveness(art: &RunArtifacts) -> CheckSection {
    let mut lines = Vec::new();
    let mut pass = true;
    let expected = art.config.ops_per_client as usize;
    for c in &art.clients {
        if c.crashed {
            continue;
        }
        let done = art
            .log
            .iter()
            .filter(|r| r.op.client == c.pid && r.response.is_some())
            .count();
        if done != expected {
            pass = false;
            lines.push(format!("{}: {done}/{expected} operations complete", c.pid));
        }
    }
    if pass {
        lines.push(format!(
            "all operations of {} non-faulty clients complete",
            art.clients.iter().filter(|c| !c.crashed).count()
        ));
    }
    CheckSection { name: "liveness", pass, lines }
}

/// Per-operation sent-byte totals recomputed from the trace, keyed by kind.
fn trace_sends(art: &RunArtifacts, op: OpId) -> (u64, BTreeMap<MessageKind, u64>) {
    let mut bytes = 0u64;
    let mut counts: BTreeMap<MessageKind, u64> = BTreeMap::new();
    for ev in &art.trace {
        if ev.phase == TracePhase::Sent && ev.op == Some(op) && ev.data_bytes > 0 {
            bytes += ev.data_bytes as u64;
            *counts.entry(ev.kind).or_insert(0) += 1;
        }
    }
    (bytes, counts)
}

/// The concurrency window of a read: T1 = earliest registration anywhere,
/// T2 = earliest instant by which every non-faulty server has unregistered
/// it, delta_w = number of writes concurrent with that window.
///
/// A write counts as concurrent when its execution overlaps [T1, T2]: it was
/// invoked by the window's end and had not responded before T1. Counting
/// only writes *invoked inside* the window undercounts: a write invoked just
/// before T1 whose dispersal is still in flight gets its elements relayed to
/// the registered reader all the same.
#[derive(Debug, Clone, Copy)]
pub struct DeltaWindow {
    pub t1: Time,
    /// Earliest instant with the read unregistered at all non-faulty servers.
    pub t2: Time,
    /// Right edge used for concurrency: extends t2 over registered servers
    /// that crashed while still relaying.
    pub t2_cost: Time,
    pub delta_w: u64,
}

pub fn delta_window(art: &RunArtifacts, read: OpId) -> Option<DeltaWindow> {
    let mut t1: Option<Time> = None;
    let mut registered: BTreeMap<usize, Time> = BTreeMap::new();
    let mut unregistered: BTreeMap<usize, Time> = BTreeMap::new();
    for ev in &art.state_events {
        match ev.note {
            Note::Registered { server, read: r, .. } if r == read => {
                t1 = Some(t1.map_or(ev.time, |t: Time| t.min(ev.time)));
                registered.insert(server, ev.time);
            }
            Note::Unregistered { server, read: r, .. } if r == read => {
                unregistered.insert(server, ev.time);
            }
            _ => {}
        }
    }
    let t1 = t1?;
    let mut t2 = t1;
    let mut t2_cost = t1;
    for (server, _) in registered {
        let pid = ProcessId::server(server as u32);
        match unregistered.get(&server) {
            Some(t) => {
                t2_cost = t2_cost.max(*t);
                if !art.crashed(pid) {
                    t2 = t2.max(*t);
                }
            }
            None if art.crashed(pid) => {
                // relays from this server stopped at its crash instant
                if let Some(t) = art.crash_times.get(&pid) {
                    t2_cost = t2_cost.max(*t);
                }
            }
            None => return None, // still registered: no finite window
        }
    }
    t2_cost = t2_cost.max(t2);
    let delta_w = art
        .log
        .iter()
        .filter(|r| {
            r.kind == OpKind::Write
                && r.invoke <= t2_cost
                && r.response.is_none_or(|resp| resp >= t1)
        })
        .count() as u64;
    Some(DeltaWindow { t1, t2, t2_cost, delta_w })
}

fn check_costs(art: &RunArtifacts) -> CheckSection {
    match art.config.protocol {
        Protocol::Abd => check_costs_abd(art),
        _ => check_costs_soda(art),
    }
}

fn check_costs_soda(art: &RunArtifacts) -> CheckSection {
    let mut lines = Vec::new();
    let mut pass = true;
    let cfg = &art.config;
    let (n, f) = (cfg.n as u64, cfg.f as u64);
    let params = cfg.code_params().expect("validated");
    let k = params.k as u64;
    let value_len = cfg.value_size as u64;
    let stripe = params.stripe_len(cfg.value_size) as u64;
    let unit = (k * stripe) as f64;

    // storage: one coded element per server at every instant
    let expect_peak = n * stripe;
    if art.storage_peak_bytes != expect_peak {
        pass = false;
        lines.push(format!(
            "storage peak {} B differs from the single-element-per-server total {} B",
            art.storage_peak_bytes, expect_peak
        ));
    }
    let units = art.storage_peak_bytes as f64 / unit;
    lines.push(format!(
        "storage peak {} B = {:.4} units (bound n/k = {}/{} = {:.4}); \
         padding quantization vs raw size: {} B",
        art.storage_peak_bytes,
        units,
        n,
        k,
        n as f64 / k as f64,
        art.storage_peak_bytes as i64 - ((n * value_len) as f64 / k as f64).ceil() as i64,
    ));

    let crash_free = cfg.crash.is_empty();
    let expect_fulls = (f + 1) + f * (f + 1) / 2;
    let expect_codeds = (f + 1) * (n - f - 1);

    let mut max_write_units = 0f64;
    for rec in art.log.iter().filter(|r| r.kind == OpKind::Write) {
        let meter = art.cost_bytes.get(&rec.op).copied().unwrap_or(0);
        if meter == 0 {
            continue; // never reached the put phase
        }
        let (traced, counts) = trace_sends(art, rec.op);
        let fulls = counts.get(&MessageKind::MdFull).copied().unwrap_or(0);
        let codeds = counts.get(&MessageKind::MdCoded).copied().unwrap_or(0);
        if traced != meter || meter != fulls * value_len + codeds * stripe {
            pass = false;
            lines.push(format!(
                "{}: cost accounting identity broken (meter {meter} B, trace {traced} B, \
                 {fulls} full x {value_len} + {codeds} coded x {stripe})",
                rec.op
            ));
        }
        if crash_free && rec.response.is_some() && (fulls != expect_fulls || codeds != expect_codeds)
        {
            pass = false;
            lines.push(format!(
                "{}: dispersal counts ({fulls} full, {codeds} coded) differ from the \
                 closed form ({expect_fulls} full, {expect_codeds} coded)",
                rec.op
            ));
        }
        let units = meter as f64 / unit;
        max_write_units = max_write_units.max(units);
        if f >= 1 && units > (5 * f * f) as f64 {
            pass = false;
            lines.push(format!(
                "{}: write cost {units:.3} units exceeds 5f^2 = {} ({fulls} full, {codeds} coded)",
                rec.op,
                5 * f * f
            ));
        }
    }
    if f >= 1 {
        lines.push(format!(
            "max write cost {max_write_units:.3} units, bound 5f^2 = {}",
            5 * f * f
        ));
    } else {
        lines.push(format!(
            "f = 0: write cost {max_write_units:.3} units reported against the closed form only"
        ));
    }

    let mut max_read_units = 0f64;
    for rec in art.log.iter().filter(|r| r.kind == OpKind::Read && r.response.is_some()) {
        let meter = art.cost_bytes.get(&rec.op).copied().unwrap_or(0);
        let (traced, counts) = trace_sends(art, rec.op);
        let elems = counts.get(&MessageKind::CodedToReader).copied().unwrap_or(0);
        if traced != meter || meter != elems * stripe {
            pass = false;
            lines.push(format!(
                "{}: read cost identity broken (meter {meter} B, trace {traced} B, {elems} elements)",
                rec.op
            ));
        }
        let window = delta_window(art, rec.op);
        match window {
            Some(w) => {
                // elems/k <= (n/k)(delta_w + 1), integer form
                if elems > n * (w.delta_w + 1) {
                    pass = false;
                    lines.push(format!(
                        "{}: {elems} elements exceed n(delta_w+1) = {}x{} (window [{}, {}])",
                        rec.op,
                        n,
                        w.delta_w + 1,
                        w.t1,
                        w.t2
                    ));
                }
                max_read_units = max_read_units.max(elems as f64 / k as f64);
            }
            None if elems == 0 => {}
            None => {
                pass = false;
                lines.push(format!(
                    "{}: {elems} elements sent but the registration window never closed",
                    rec.op
                ));
            }
        }
    }
    lines.push(format!("max read cost {max_read_units:.3} units (bound n/k x (delta_w+1))"));

    CheckSection { name: "costs", pass, lines }
}

fn check_costs_abd(art: &RunArtifacts) -> CheckSection {
    let mut lines = Vec::new();
    let mut pass = true;
    let cfg = &art.config;
    let (n, value_len) = (cfg.n as u64, cfg.value_size as u64);

    let expect_peak = n * value_len;
    if art.storage_peak_bytes != expect_peak {
        pass = false;
        lines.push(format!(
            "storage peak {} B differs from full replication {} B",
            art.storage_peak_bytes, expect_peak
        ));
    }
    lines.push(format!("storage peak = {} units (full replication bound n = {n})", n));

    for rec in &art.log {
        let meter = art.cost_bytes.get(&rec.op).copied().unwrap_or(0);
        let units = meter as f64 / value_len as f64;
        match rec.kind {
            OpKind::Write => {
                if units > n as f64 {
                    pass = false;
                    lines.push(format!("{}: write cost {units:.2} exceeds n = {n}", rec.op));
                }
            }
            OpKind::Read => {
                if units > 2.0 * n as f64 {
                    pass = false;
                    lines.push(format!("{}: read cost {units:.2} exceeds 2n = {}", rec.op, 2 * n));
                }
            }
        }
    }
    lines.push(
        "read cost counted with the write-back phase, so up to 2n; \
         the classic table lists n for the query phase alone"
            .to_string(),
    );
    CheckSection { name: "costs", pass, lines }
}

fn check_latency(art: &RunArtifacts) -> CheckSection {
    let mut lines = Vec::new();
    let DeliveryModel::DeltaBounded { delta } = art.config.delivery else {
        return CheckSection {
            name: "latency",
            pass: false,
            lines: vec!["latency check requires the delta-bounded delivery model".into()],
        };
    };
    if art.config.protocol == Protocol::Abd {
        return CheckSection {
            name: "latency",
            pass: true,
            lines: vec!["no latency bound is asserted for the ABD baseline".into()],
        };
    }
    let mut pass = true;
    let mut max_write = 0;
    let mut max_read = 0;
    for rec in art.log.iter().filter(|r| r.response.is_some()) {
        let dur = rec.response.unwrap() - rec.invoke;
        let bound = match rec.kind {
            OpKind::Write => {
                max_write = max_write.max(dur);
                5 * delta
            }
            OpKind::Read => {
                max_read = max_read.max(dur);
                6 * delta
            }
        };
        if dur > bound {
            pass = false;
            lines.push(format!(
                "{}: {:?} took {dur} ticks, bound {bound} (invoked {} responded {})",
                rec.op,
                rec.kind,
                rec.invoke,
                rec.response.unwrap()
            ));
        }
    }
    lines.push(format!(
        "max write {max_write} <= 5*delta = {}, max read {max_read} <= 6*delta = {}",
        5 * delta,
        6 * delta
    ));
    CheckSection { name: "latency", pass, lines }
}

fn check_unregistration(art: &RunArtifacts) -> CheckSection {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut registered: BTreeSet<(usize, OpId)> = BTreeSet::new();
    let mut unregistered: BTreeSet<(usize, OpId)> = BTreeSet::new();
    let mut by_threshold = 0u64;
    let mut by_complete = 0u64;
    for ev in &art.state_events {
        match ev.note {
            Note::Registered { server, read, .. } => {
                // md-meta delivers each registration exactly once per server
                if !registered.insert((server, read)) {
                    pass = false;
                    lines.push(format!("s{server} registered {read} twice"));
                }
            }
            Note::Unregistered { server, read, reason } => {
                unregistered.insert((server, read));
                match reason {
                    UnregisterReason::ReadComplete => by_complete += 1,
                    UnregisterReason::DisperseThreshold => by_threshold += 1,
                }
            }
            _ => {}
        }
    }
    for (server, read) in &registered {
        let pid = ProcessId::server(*server as u32);
        if art.crashed(pid) {
            continue;
        }
        if !unregistered.contains(&(*server, *read)) {
            pass = false;
            let h_len = art
                .servers
                .iter()
                .find(|s| s.pid == pid)
                .map_or(0, |s| s.history_len);
            lines.push(format!(
                "s{server} never unregistered {read} ({h_len} history records held)"
            ));
        }
    }
    for s in art.servers.iter().filter(|s| !s.crashed) {
        if !s.registered.is_empty() {
            pass = false;
            lines.push(format!(
                "{} still has registered readers at quiescence: {:?}",
                s.pid, s.registered
            ));
        }
    }
    lines.push(format!(
        "{} registrations, {} unregistered via READ-COMPLETE, {} via the dispersal threshold",
        registered.len(),
        by_complete,
        by_threshold
    ));
    CheckSection { name: "unregistration", pass, lines }
}

fn check_no_garbage(art: &RunArtifacts) -> CheckSection {
    let mut lines = Vec::new();
    let mut pass = true;
    for s in art.servers.iter().filter(|s| !s.crashed) {
        if !s.md_residual.is_empty() {
            pass = false;
            lines.push(format!(
                "{} retains value/coded bytes for {:?} after quiescence",
                s.pid, s.md_residual
            ));
        }
    }
    for c in art.clients.iter().filter(|c| !c.crashed) {
        if c.md_holds_value {
            pass = false;
            lines.push(format!("{} retains value bytes in its send buffer", c.pid));
        }
    }
    if !art.validity_failures.is_empty() {
        pass = false;
        for v in art.validity_failures.iter().take(4) {
            lines.push(v.clone());
        }
    }
    if pass {
        lines.push("no residual value or coded bytes in message-disperse state".into());
    }
    CheckSection { name: "no_garbage", pass, lines }
}

/// Checker sensitivity self-test: regress a completed read's tag to the
/// initial tag and confirm the atomicity check reports a violation. Requires
/// a run where some write completed before some read was invoked.
pub fn atomicity_self_test(art: &RunArtifacts) -> bool {
    let candidate = art.log.iter().position(|r| {
        r.kind == OpKind::Read
            && r.response.is_some()
            && r.tag.map(|t| t > Tag::INITIAL).unwrap_or(false)
            && art.log.iter().any(|w| {
                w.kind == OpKind::Write
                    && w.response.map(|t| t < r.invoke).unwrap_or(false)
            })
    });
    let Some(idx) = candidate else {
        return false;
    };
    let mut mutated = art.clone();
    mutated.log[idx].tag = Some(Tag::INITIAL);
    mutated.log[idx].value_hash = Some(art.initial_hash);
    !check_atomicity(&mutated).pass
}

/// Operation log lines: `opId role invokeTime responseTime tag valueHash kind`.
pub fn render_op_log(art: &RunArtifacts) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for r in &art.log {
        let role = match r.op.client.role {
            Role::Writer => "writer",
            Role::Reader => "reader",
            Role::Server => "server",
        };
        let resp = r.response.map_or("incomplete".to_string(), |t| t.to_string());
        let tag = r.tag.map_or("-".to_string(), |t| t.to_string());
        let hash = r.value_hash.map_or("-".to_string(), |h| format!("{h:016x}"));
        let kind = match r.kind {
            OpKind::Write => "write",
            OpKind::Read => "read",
        };
        let _ = writeln!(out, "{} {role} {} {resp} {tag} {hash} {kind}", r.op, r.invoke);
    }
    out
}
