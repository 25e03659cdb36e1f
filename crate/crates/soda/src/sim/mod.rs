//! Deterministic discrete-event simulator: reliable point-to-point channels
//! with seeded (possibly adversarial) delivery delays, crash injection at
//! tick or send-count granularity, and full bookkeeping for the checkers.
//!
//! A run is a pure function of (config, seed): the event queue is ordered by
//! (time, class, sequence) and every random draw comes from one seeded
//! stream. Local computation takes zero ticks; latency comes only from
//! message delivery.

pub mod config;

pub use config::{ConfigError, CrashPoint, CrashSpec, DeliveryModel, Protocol, SimConfig};

use crate::abd::{AbdReader, AbdServer, AbdWriter};
use crate::actors::{
    ClientOp, Effect, NodeImpl, Note, Outbox, ProtocolParams, SodaReader, SodaServer, SodaWriter,
};
use crate::codec::{Codec, Value};
use crate::protocol::{Message, MessageKind, OpId, ProcessId, Role, Tag};
use crate::soda_err::ErrConfig;
use crate::trace::{TraceEvent, TracePhase};
use crate::util::hash64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::sync::Arc;
use thiserror::Error;

pub type Time = u64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schedule exhausted without quiescence after {events} events; live events:\n{live}")]
    NonTermination { events: u64, live: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Write,
    Read,
}

/// One entry of the operation log consumed by the checkers.
#[derive(Debug, Clone)]
pub struct OperationRecord {
    pub op: OpId,
    pub kind: OpKind,
    pub invoke: Time,
    pub response: Option<Time>,
    pub tag: Option<Tag>,
    pub value_hash: Option<u64>,
    /// For reads: decoded bytes equal the bytes some write (or the initial
    /// value) put under this tag.
    pub bytes_exact: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct StateEvent {
    pub time: Time,
    pub note: Note,
}

#[derive(Debug, Clone)]
pub struct ServerFinal {
    pub pid: ProcessId,
    pub crashed: bool,
    pub tag: Tag,
    pub stored_bytes: usize,
    pub registered: Vec<OpId>,
    pub history_len: usize,
    pub md_residual: Vec<crate::protocol::MessageId>,
}

#[derive(Debug, Clone)]
pub struct ClientFinal {
    pub pid: ProcessId,
    pub crashed: bool,
    pub md_holds_value: bool,
}

/// Everything a run leaves behind for post-hoc verification.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: SimConfig,
    pub log: Vec<OperationRecord>,
    pub trace: Vec<TraceEvent>,
    pub state_events: Vec<StateEvent>,
    pub servers: Vec<ServerFinal>,
    pub clients: Vec<ClientFinal>,
    /// Value-bearing bytes sent, attributed per operation.
    pub cost_bytes: BTreeMap<OpId, u64>,
    pub storage_peak_bytes: u64,
    pub tag_hashes: BTreeMap<Tag, u64>,
    pub initial_hash: u64,
    /// Delivered coded elements that did not match the encoder output.
    pub validity_failures: Vec<String>,
    pub crash_times: BTreeMap<ProcessId, Time>,
    pub events_processed: u64,
}

impl RunArtifacts {
    pub fn crashed(&self, pid: ProcessId) -> bool {
        self.servers.iter().any(|s| s.pid == pid && s.crashed)
            || self.clients.iter().any(|c| c.pid == pid && c.crashed)
    }
}

#[derive(Debug)]
enum EventBody {
    Deliver { src: ProcessId, dst: ProcessId, msg: Message },
    Invoke { client: ProcessId },
    Crash { pid: ProcessId },
}

struct QItem {
    time: Time,
    class: u8,
    seq: u64,
    body: EventBody,
}

impl QItem {
    fn key(&self) -> (Time, u8, u64) {
        (self.time, self.class, self.seq)
    }
}

impl PartialEq for QItem {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for QItem {}
impl PartialOrd for QItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

const CLASS_CRASH: u8 = 0;
const CLASS_INVOKE: u8 = 1;
const CLASS_DELIVER: u8 = 2;

/// Targeted delay biases that stress known schedule races.
#[derive(Debug, Clone, Copy)]
enum Mutator {
    None,
    /// Completion metadata races ahead of registration metadata, hitting the
    /// sentinel path.
    MetaRace,
    /// Coded relays spread out, so duplicate relays arrive in odd orders.
    CodedRace,
    /// One server-to-server link runs much slower than the rest.
    Straggler { src: ProcessId, dst: ProcessId },
}

struct Sim {
    cfg: SimConfig,
    codec: Option<Arc<Codec>>,
    nodes: BTreeMap<ProcessId, NodeImpl>,
    scripts: BTreeMap<ProcessId, VecDeque<ClientOp>>,
    queue: BinaryHeap<Reverse<QItem>>,
    seq: u64,
    time: Time,
    rng: ChaCha8Rng,
    mutator: Mutator,
    crashed: BTreeSet<ProcessId>,
    crash_times: BTreeMap<ProcessId, Time>,
    crash_trigger: BTreeMap<ProcessId, CrashPoint>,
    sends_total: BTreeMap<ProcessId, u64>,
    value_sends: BTreeMap<ProcessId, u64>,
    log: BTreeMap<OpId, OperationRecord>,
    trace: Vec<TraceEvent>,
    state_events: Vec<StateEvent>,
    cost_bytes: BTreeMap<OpId, u64>,
    tag_values: BTreeMap<Tag, Value>,
    storage_total: i64,
    storage_peak: i64,
    validity_failures: Vec<String>,
    pending_writes: u64,
    gated_readers: Vec<ProcessId>,
    events_processed: u64,
}

pub fn run(config: &SimConfig) -> Result<RunArtifacts, SimError> {
    config.validate().map_err(|e| SimError::Config(e.to_string()))?;
    let mut sim = Sim::new(config.clone());
    sim.run_loop()?;
    Ok(sim.finish())
}

impl Sim {
    fn new(cfg: SimConfig) -> Sim {
        let params = ProtocolParams { n: cfg.n, f: cfg.f, e: cfg.effective_e() };
        params.assert_quorums();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let codec = match cfg.protocol {
            Protocol::Abd => None,
            _ => Some(Arc::new(Codec::new(cfg.code_params().expect("validated")))),
        };
        let initial_value =
            Value(cfg.initial_value.clone().unwrap_or_else(|| vec![0u8; cfg.value_size]));
        let err_cfg = ErrConfig {
            e: cfg.effective_e(),
            schedule: cfg.error_schedule.iter().copied().collect(),
        };

        let mut nodes = BTreeMap::new();
        for ord in 1..=cfg.n as u32 {
            let pid = ProcessId::server(ord);
            let node = match cfg.protocol {
                Protocol::Abd => NodeImpl::AbdServer(AbdServer::new(pid, &initial_value)),
                _ => NodeImpl::SodaServer(Box::new(SodaServer::new(
                    pid,
                    params,
                    codec.clone().expect("codec"),
                    &initial_value,
                    err_cfg.schedule_for(ord as usize),
                ))),
            };
            nodes.insert(pid, node);
        }
        let mut scripts = BTreeMap::new();
        for w in 1..=cfg.writers {
            let pid = ProcessId::writer(w);
            let node = match cfg.protocol {
                Protocol::Abd => NodeImpl::AbdWriter(AbdWriter::new(pid, params)),
                _ => NodeImpl::SodaWriter(SodaWriter::new(pid, params)),
            };
            nodes.insert(pid, node);
            let ops: VecDeque<ClientOp> = (1..=cfg.ops_per_client)
                .map(|i| ClientOp::Write(gen_value(cfg.seed, w, i, cfg.value_size)))
                .collect();
            scripts.insert(pid, ops);
        }
        for r in 1..=cfg.readers {
            let pid = ProcessId::reader(r);
            let node = match cfg.protocol {
                Protocol::Abd => NodeImpl::AbdReader(AbdReader::new(pid, params)),
                _ => NodeImpl::SodaReader(SodaReader::new(
                    pid,
                    params,
                    codec.clone().expect("codec"),
                )),
            };
            nodes.insert(pid, node);
            scripts.insert(pid, (0..cfg.ops_per_client).map(|_| ClientOp::Read).collect());
        }

        let mutator = if cfg.adversarial
            && matches!(cfg.delivery, DeliveryModel::AsyncUnordered { .. })
        {
            match rng.gen_range(0..4u8) {
                1 => Mutator::MetaRace,
                2 => Mutator::CodedRace,
                3 => {
                    let a = rng.gen_range(1..=cfg.n as u32);
                    let mut b = rng.gen_range(1..=cfg.n as u32);
                    if b == a {
                        b = b % cfg.n as u32 + 1;
                    }
                    Mutator::Straggler { src: ProcessId::server(a), dst: ProcessId::server(b) }
                }
                _ => Mutator::None,
            }
        } else {
            Mutator::None
        };

        let storage_total: i64 = nodes.values().map(|n| n.stored_bytes() as i64).sum();
        let mut tag_values = BTreeMap::new();
        tag_values.insert(Tag::INITIAL, initial_value);

        let mut sim = Sim {
            codec,
            nodes,
            scripts,
            queue: BinaryHeap::new(),
            seq: 0,
            time: 0,
            mutator,
            crashed: BTreeSet::new(),
            crash_times: BTreeMap::new(),
            crash_trigger: BTreeMap::new(),
            sends_total: BTreeMap::new(),
            value_sends: BTreeMap::new(),
            log: BTreeMap::new(),
            trace: Vec::new(),
            state_events: Vec::new(),
            cost_bytes: BTreeMap::new(),
            tag_values,
            storage_total,
            storage_peak: storage_total,
            validity_failures: Vec::new(),
            pending_writes: cfg.writers as u64 * cfg.ops_per_client as u64,
            gated_readers: Vec::new(),
            events_processed: 0,
            rng,
            cfg,
        };
        sim.schedule_initial();
        sim
    }

    fn schedule_initial(&mut self) {
        for spec in self.cfg.crash.clone() {
            match spec.point {
                CrashPoint::AtTime(t) => self.push(t, CLASS_CRASH, EventBody::Crash { pid: spec.pid }),
                p => {
                    self.crash_trigger.insert(spec.pid, p);
                }
            }
        }
        let gate_readers = self.cfg.read_after_write && self.cfg.writers > 0;
        let clients: Vec<ProcessId> = self.scripts.keys().copied().collect();
        for pid in clients {
            if gate_readers && pid.role == Role::Reader {
                self.gated_readers.push(pid);
                continue;
            }
            let jitter = if self.cfg.start_jitter == 0 {
                0
            } else {
                self.rng.gen_range(0..=self.cfg.start_jitter)
            };
            self.push(jitter, CLASS_INVOKE, EventBody::Invoke { client: pid });
        }
    }

    fn push(&mut self, time: Time, class: u8, body: EventBody) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(QItem { time, class, seq, body }));
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        let budget = self.cfg.event_budget();
        while let Some(Reverse(item)) = self.queue.pop() {
            self.events_processed += 1;
            if self.events_processed > budget {
                let mut live = format!(
                    "(processing {} at t={})\n",
                    describe_body(&item.body),
                    item.time
                );
                for Reverse(q) in self.queue.iter().take(8) {
                    live.push_str(&format!("  t={} {}\n", q.time, describe_body(&q.body)));
                }
                return Err(SimError::NonTermination { events: self.events_processed, live });
            }
            debug_assert!(item.time >= self.time, "time moves forward");
            self.time = item.time;
            match item.body {
                EventBody::Crash { pid } => self.crash_now(pid),
                EventBody::Invoke { client } => self.handle_invoke(client),
                EventBody::Deliver { src, dst, msg } => self.handle_deliver(src, dst, msg),
            }
        }
        Ok(())
    }

    fn crash_now(&mut self, pid: ProcessId) {
        if self.crashed.insert(pid) {
            self.crash_times.insert(pid, self.time);
        }
    }

    fn handle_invoke(&mut self, client: ProcessId) {
        if self.crashed.contains(&client) {
            return;
        }
        let Some(op_body) = self.scripts.get_mut(&client).and_then(|s| s.pop_front()) else {
            return;
        };
        let kind = match op_body {
            ClientOp::Write(_) => OpKind::Write,
            ClientOp::Read => OpKind::Read,
        };
        let mut out = Outbox::default();
        let node = self.nodes.get_mut(&client).expect("client exists");
        let op = node.invoke(op_body, &mut out);
        self.log.insert(
            op,
            OperationRecord {
                op,
                kind,
                invoke: self.time,
                response: None,
                tag: None,
                value_hash: None,
                bytes_exact: None,
            },
        );
        self.apply_effects(client, out);
    }

    fn handle_deliver(&mut self, src: ProcessId, dst: ProcessId, msg: Message) {
        if self.crashed.contains(&dst) {
            self.trace.push(TraceEvent::from_message(self.time, TracePhase::Dropped, src, dst, &msg));
            return;
        }
        self.trace.push(TraceEvent::from_message(self.time, TracePhase::Delivered, src, dst, &msg));
        let mut out = Outbox::default();
        let node = self.nodes.get_mut(&dst).expect("destination exists");
        node.on_message(src, &msg, &mut out);
        self.apply_effects(dst, out);
    }

    fn apply_effects(&mut self, actor: ProcessId, out: Outbox) {
        for effect in out.effects {
            if self.crashed.contains(&actor) {
                break;
            }
            match effect {
                Effect::Send { dst, msg } => self.apply_send(actor, dst, msg),
                Effect::Complete { op, tag, value } => self.apply_complete(op, tag, value),
                Effect::Note(note) => self.apply_note(note),
            }
        }
    }

    fn apply_send(&mut self, src: ProcessId, dst: ProcessId, msg: Message) {
        let is_value = matches!(msg.kind(), MessageKind::MdFull | MessageKind::MdCoded);
        if let Some(point) = self.crash_trigger.get(&src).copied() {
            let tripped = match point {
                CrashPoint::AfterSends(j) => *self.sends_total.get(&src).unwrap_or(&0) == j,
                CrashPoint::AfterValueSends(j) => {
                    is_value && *self.value_sends.get(&src).unwrap_or(&0) == j
                }
                CrashPoint::AtTime(_) => false,
            };
            if tripped {
                // crash point reached: this message is never placed
                self.crash_now(src);
                return;
            }
        }
        // ground truth: the dispersed (tag -> value) mapping
        match &msg {
            Message::MdFull { tag, value, .. } | Message::AbdPut { tag, value, .. } => {
                self.tag_values.entry(*tag).or_insert_with(|| value.clone());
            }
            _ => {}
        }
        if let Some(op) = msg.cost_op() {
            *self.cost_bytes.entry(op).or_insert(0) += msg.data_bytes() as u64;
        }
        self.trace.push(TraceEvent::from_message(self.time, TracePhase::Sent, src, dst, &msg));
        let delay = self.draw_delay(src, dst, msg.kind());
        self.push(self.time + delay, CLASS_DELIVER, EventBody::Deliver { src, dst, msg });
        *self.sends_total.entry(src).or_insert(0) += 1;
        if is_value {
            *self.value_sends.entry(src).or_insert(0) += 1;
        }
        if let Some(point) = self.crash_trigger.get(&src).copied() {
            let tripped = match point {
                CrashPoint::AfterSends(j) => *self.sends_total.get(&src).unwrap_or(&0) == j,
                CrashPoint::AfterValueSends(j) => {
                    is_value && *self.value_sends.get(&src).unwrap_or(&0) == j
                }
                CrashPoint::AtTime(_) => false,
            };
            if tripped {
                self.crash_now(src);
            }
        }
    }

    fn apply_complete(&mut self, op: OpId, tag: Tag, value: Option<Value>) {
        let rec = self.log.get_mut(&op).expect("completion for a logged op");
        rec.response = Some(self.time);
        rec.tag = Some(tag);
        match rec.kind {
            OpKind::Write => {
                rec.value_hash = self.tag_values.get(&tag).map(|v| hash64(&v.0));
                self.pending_writes = self.pending_writes.saturating_sub(1);
                if self.pending_writes == 0 && !self.gated_readers.is_empty() {
                    for pid in std::mem::take(&mut self.gated_readers) {
                        let at = self.time + 1;
                        self.push(at, CLASS_INVOKE, EventBody::Invoke { client: pid });
                    }
                }
            }
            OpKind::Read => match value {
                Some(v) => {
                    rec.value_hash = Some(hash64(&v.0));
                    rec.bytes_exact = Some(self.tag_values.get(&tag) == Some(&v));
                }
                None => {
                    rec.value_hash = None;
                    rec.bytes_exact = Some(false);
                }
            },
        }
        // well-formed clients issue the next operation after the response
        let client = op.client;
        if self.scripts.get(&client).map(|s| !s.is_empty()).unwrap_or(false) {
            let think = if self.cfg.think_max == 0 {
                0
            } else {
                self.rng.gen_range(0..=self.cfg.think_max)
            };
            self.push(self.time + think, CLASS_INVOKE, EventBody::Invoke { client });
        }
    }

    fn apply_note(&mut self, note: Note) {
        match &note {
            Note::StoredReplaced { old_bytes, new_bytes, .. } => {
                self.storage_total += *new_bytes as i64 - *old_bytes as i64;
                self.storage_peak = self.storage_peak.max(self.storage_total);
            }
            Note::MdValueDelivered { server, tag, index, payload_hash, mid } => {
                let expected = self
                    .tag_values
                    .get(tag)
                    .zip(self.codec.as_ref())
                    .map(|(v, c)| hash64(&c.encode_fragment(v, *index).expect("index").payload));
                if expected != Some(*payload_hash) {
                    self.validity_failures.push(format!(
                        "s{server} delivered a fragment for {mid} tag {tag} that is not the encoder output"
                    ));
                }
            }
            _ => {}
        }
        self.state_events.push(StateEvent { time: self.time, note });
    }

    fn draw_delay(&mut self, src: ProcessId, dst: ProcessId, kind: MessageKind) -> u64 {
        match self.cfg.delivery {
            DeliveryModel::DeltaBounded { delta } => {
                if delta == 1 {
                    1
                } else {
                    self.rng.gen_range(1..=delta)
                }
            }
            DeliveryModel::AsyncUnordered { max_delay } => {
                let base =
                    if max_delay == 1 { 1 } else { self.rng.gen_range(1..=max_delay) };
                match self.mutator {
                    Mutator::None => base,
                    Mutator::MetaRace => match kind {
                        MessageKind::ReadValue => max_delay + base,
                        MessageKind::ReadComplete => 1,
                        _ => base,
                    },
                    Mutator::CodedRace => match kind {
                        MessageKind::MdCoded | MessageKind::MdFull => {
                            self.rng.gen_range(1..=2 * max_delay)
                        }
                        _ => base,
                    },
                    Mutator::Straggler { src: a, dst: b } => {
                        if src == a && dst == b {
                            base * 4
                        } else {
                            base
                        }
                    }
                }
            }
        }
    }

    fn finish(self) -> RunArtifacts {
        let mut servers = Vec::new();
        let mut clients = Vec::new();
        for (pid, node) in &self.nodes {
            let crashed = self.crashed.contains(pid);
            match node {
                NodeImpl::SodaServer(s) => servers.push(ServerFinal {
                    pid: *pid,
                    crashed,
                    tag: s.stored_tag(),
                    stored_bytes: s.stored_bytes(),
                    registered: s.registered(),
                    history_len: s.history_len(),
                    md_residual: s.md_residual(),
                }),
                NodeImpl::AbdServer(s) => servers.push(ServerFinal {
                    pid: *pid,
                    crashed,
                    tag: s.stored_tag(),
                    stored_bytes: s.stored_bytes(),
                    registered: Vec::new(),
                    history_len: 0,
                    md_residual: Vec::new(),
                }),
                NodeImpl::SodaWriter(w) => clients.push(ClientFinal {
                    pid: *pid,
                    crashed,
                    md_holds_value: w.md_sender().holds_value_bytes(),
                }),
                NodeImpl::SodaReader(r) => clients.push(ClientFinal {
                    pid: *pid,
                    crashed,
                    md_holds_value: r.md_sender().holds_value_bytes(),
                }),
                NodeImpl::AbdWriter(_) | NodeImpl::AbdReader(_) => {
                    clients.push(ClientFinal { pid: *pid, crashed, md_holds_value: false })
                }
            }
        }
        let mut log: Vec<OperationRecord> = self.log.into_values().collect();
        log.sort_by_key(|r| (r.invoke, r.op.client, r.op.seq));
        let initial_hash = hash64(&self.tag_values[&Tag::INITIAL].0);
        let tag_hashes =
            self.tag_values.iter().map(|(t, v)| (*t, hash64(&v.0))).collect();
        RunArtifacts {
            config: self.cfg,
            log,
            trace: self.trace,
            state_events: self.state_events,
            servers,
            clients,
            cost_bytes: self.cost_bytes,
            storage_peak_bytes: self.storage_peak as u64,
            tag_hashes,
            initial_hash,
            validity_failures: self.validity_failures,
            crash_times: self.crash_times,
            events_processed: self.events_processed,
        }
    }
}

fn describe_body(body: &EventBody) -> String {
    match body {
        EventBody::Deliver { src, dst, msg } => {
            format!("deliver {} {} -> {} ({})", msg.kind(), src, dst, msg.summary())
        }
        EventBody::Invoke { client } => format!("invoke at {client}"),
        EventBody::Crash { pid } => format!("crash {pid}"),
    }
}

/// Deterministic per-operation value: seeded bytes stamped with the writer
/// ordinal and sequence so distinct writes never collide.
pub fn gen_value(seed: u64, writer_ord: u32, seq: u32, size: usize) -> Value {
    let mix = seed
        ^ 0x9e37_79b9_7f4a_7c15u64
            .wrapping_mul(((writer_ord as u64) << 32) | seq as u64 | 1);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    let mut bytes = vec![0u8; size];
    rng.fill_bytes(&mut bytes);
    if size >= 8 {
        bytes[..4].copy_from_slice(&writer_ord.to_le_bytes());
        bytes[4..8].copy_from_slice(&seq.to_le_bytes());
    }
    Value(bytes)
}
