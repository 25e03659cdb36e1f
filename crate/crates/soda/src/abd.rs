//! Minimal ABD replication baseline behind the same actor and checker
//! interfaces, kept around to reproduce the classic cost comparison: full
//! replicas, majority quorums, and a read write-back phase.

use crate::actors::{ClientOp, Note, Outbox, ProtocolParams};
use crate::codec::Value;
use crate::protocol::{Message, OpId, ProcessId, Tag, WriterId};
use std::collections::BTreeSet;

/// Full-replica server: stores the complete value (1 unit per server).
pub struct AbdServer {
    ord: usize,
    tag: Tag,
    value: Value,
}

impl AbdServer {
    pub fn new(pid: ProcessId, initial_value: &Value) -> Self {
        AbdServer { ord: pid.server_index(), tag: Tag::INITIAL, value: initial_value.clone() }
    }

    pub fn on_message(&mut self, _src: ProcessId, msg: &Message, out: &mut Outbox) {
        match msg {
            Message::WriteGetTag { op } => {
                out.send(op.client, Message::WriteGetTagResp { op: *op, tag: self.tag });
            }
            Message::AbdGet { op } => {
                out.send(
                    op.client,
                    Message::AbdGetResp { op: *op, tag: self.tag, value: self.value.clone() },
                );
            }
            Message::AbdPut { op, tag, value } => {
                self.store(*tag, value, out);
                out.send(op.client, Message::AbdPutAck { op: *op });
            }
            Message::AbdWriteBack { op, tag, value } => {
                self.store(*tag, value, out);
                out.send(op.client, Message::AbdWriteBackAck { op: *op });
            }
            _ => {}
        }
    }

    fn store(&mut self, tag: Tag, value: &Value, out: &mut Outbox) {
        if tag > self.tag {
            out.note(Note::StoredReplaced {
                server: self.ord,
                old_bytes: self.value.len(),
                new_bytes: value.len(),
            });
            self.tag = tag;
            self.value = value.clone();
        }
    }

    pub fn stored_bytes(&self) -> usize {
        self.value.len()
    }

    pub fn stored_tag(&self) -> Tag {
        self.tag
    }
}

#[derive(Debug)]
enum WPhase {
    Idle,
    GetTag { op: OpId, responders: BTreeSet<ProcessId>, tmax: Tag, value: Value },
    Put { op: OpId, tw: Tag, acks: BTreeSet<ProcessId> },
}

/// Two-phase ABD writer: majority tag query, then (tag, value) to all and
/// majority acks.
pub struct AbdWriter {
    pid: ProcessId,
    params: ProtocolParams,
    op_seq: u32,
    phase: WPhase,
}

impl AbdWriter {
    pub fn new(pid: ProcessId, params: ProtocolParams) -> Self {
        AbdWriter { pid, params, op_seq: 0, phase: WPhase::Idle }
    }

    pub fn invoke(&mut self, op: ClientOp, out: &mut Outbox) -> OpId {
        let value = match op {
            ClientOp::Write(v) => v,
            ClientOp::Read => panic!("writer invoked with a read"),
        };
        assert!(matches!(self.phase, WPhase::Idle));
        self.op_seq += 1;
        let op = OpId { client: self.pid, seq: self.op_seq };
        for ord in 1..=self.params.n {
            out.send(ProcessId::server(ord as u32), Message::WriteGetTag { op });
        }
        self.phase = WPhase::GetTag { op, responders: BTreeSet::new(), tmax: Tag::INITIAL, value };
        op
    }

    pub fn on_message(&mut self, src: ProcessId, msg: &Message, out: &mut Outbox) {
        match msg {
            Message::WriteGetTagResp { op, tag } => {
                let WPhase::GetTag { op: cur, responders, tmax, value } = &mut self.phase else {
                    return;
                };
                if *cur != *op {
                    return;
                }
                responders.insert(src);
                if *tag > *tmax {
                    *tmax = *tag;
                }
                if responders.len() < self.params.majority() {
                    return;
                }
                let tw = Tag::next(*tmax, WriterId(self.pid.ord));
                let (op, value) = (*cur, value.clone());
                for ord in 1..=self.params.n {
                    out.send(
                        ProcessId::server(ord as u32),
                        Message::AbdPut { op, tag: tw, value: value.clone() },
                    );
                }
                self.phase = WPhase::Put { op, tw, acks: BTreeSet::new() };
            }
            Message::AbdPutAck { op } => {
                let WPhase::Put { op: cur, tw, acks } = &mut self.phase else {
                    return;
                };
                if *cur != *op {
                    return;
                }
                acks.insert(src);
                if acks.len() >= self.params.majority() {
                    let (op, tw) = (*cur, *tw);
                    self.phase = WPhase::Idle;
                    out.complete(op, tw, None);
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug)]
enum RPhase {
    Idle,
    Get { op: OpId, responses: Vec<(ProcessId, Tag, Value)> },
    WriteBack { op: OpId, tag: Tag, value: Value, acks: BTreeSet<ProcessId> },
}

/// ABD reader: majority (tag, value) query, write back the maximum, return.
pub struct AbdReader {
    pid: ProcessId,
    params: ProtocolParams,
    op_seq: u32,
    phase: RPhase,
}

impl AbdReader {
    pub fn new(pid: ProcessId, params: ProtocolParams) -> Self {
        AbdReader { pid, params, op_seq: 0, phase: RPhase::Idle }
    }

    pub fn invoke(&mut self, op: ClientOp, out: &mut Outbox) -> OpId {
        assert!(matches!(op, ClientOp::Read));
        assert!(matches!(self.phase, RPhase::Idle));
        self.op_seq += 1;
        let op = OpId { client: self.pid, seq: self.op_seq };
        for ord in 1..=self.params.n {
            out.send(ProcessId::server(ord as u32), Message::AbdGet { op });
        }
        self.phase = RPhase::Get { op, responses: Vec::new() };
        op
    }

    pub fn on_message(&mut self, src: ProcessId, msg: &Message, out: &mut Outbox) {
        match msg {
            Message::AbdGetResp { op, tag, value } => {
                let RPhase::Get { op: cur, responses } = &mut self.phase else {
                    return;
                };
                if *cur != *op || responses.iter().any(|(s, _, _)| *s == src) {
                    return;
                }
                responses.push((src, *tag, value.clone()));
                if responses.len() < self.params.majority() {
                    return;
                }
                let (_, tag, value) =
                    responses.iter().max_by_key(|(_, t, _)| *t).cloned().expect("majority");
                let op = *cur;
                for ord in 1..=self.params.n {
                    out.send(
                        ProcessId::server(ord as u32),
                        Message::AbdWriteBack { op, tag, value: value.clone() },
                    );
                }
                self.phase = RPhase::WriteBack { op, tag, value, acks: BTreeSet::new() };
            }
            Message::AbdWriteBackAck { op } => {
                let RPhase::WriteBack { op: cur, tag, value, acks } = &mut self.phase else {
                    return;
                };
                if *cur != *op {
                    return;
                }
                acks.insert(src);
                if acks.len() >= self.params.majority() {
                    let (op, tag, value) = (*cur, *tag, value.clone());
                    self.phase = RPhase::Idle;
                    out.complete(op, tag, Some(value));
                }
            }
            _ => {}
        }
    }
}
