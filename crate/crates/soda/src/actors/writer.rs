//! SODA writer: query all servers for tags, pick the majority maximum, then
//! disperse the value under the next tag and wait for n - f acks.

use super::{ClientOp, Outbox, ProtocolParams};
use crate::disperse::MdSender;
use crate::protocol::{Message, OpId, ProcessId, Tag, WriterId};
use std::collections::BTreeSet;

#[derive(Debug)]
enum Phase {
    Idle,
    GetTag { op: OpId, responders: BTreeSet<ProcessId>, tmax: Tag, value: crate::codec::Value },
    Put { op: OpId, tw: Tag, acks: BTreeSet<ProcessId> },
}

pub struct SodaWriter {
    pid: ProcessId,
    params: ProtocolParams,
    md: MdSender,
    op_seq: u32,
    phase: Phase,
}

impl SodaWriter {
    pub fn new(pid: ProcessId, params: ProtocolParams) -> Self {
        SodaWriter { pid, params, md: MdSender::new(pid), op_seq: 0, phase: Phase::Idle }
    }

    pub fn writer_id(&self) -> WriterId {
        WriterId(self.pid.ord)
    }

    pub fn invoke(&mut self, op: ClientOp, out: &mut Outbox) -> OpId {
        let value = match op {
            ClientOp::Write(v) => v,
            ClientOp::Read => panic!("writer invoked with a read"),
        };
        assert!(matches!(self.phase, Phase::Idle), "write invoked while busy at {}", self.pid);
        self.op_seq += 1;
        let op = OpId { client: self.pid, seq: self.op_seq };
        for ord in 1..=self.params.n {
            out.send(ProcessId::server(ord as u32), Message::WriteGetTag { op });
        }
        self.phase = Phase::GetTag { op, responders: BTreeSet::new(), tmax: Tag::INITIAL, value };
        op
    }

    pub fn on_message(&mut self, src: ProcessId, msg: &Message, out: &mut Outbox) {
        match msg {
            Message::WriteGetTagResp { op, tag } => self.on_tag_resp(src, *op, *tag, out),
            Message::WritePutAck { tag } => self.on_ack(src, *tag, out),
            _ => {}
        }
    }

    fn on_tag_resp(&mut self, src: ProcessId, op: OpId, tag: Tag, out: &mut Outbox) {
        let Phase::GetTag { op: cur, responders, tmax, value } = &mut self.phase else {
            return;
        };
        if *cur != op {
            return;
        }
        responders.insert(src);
        if tag > *tmax {
            *tmax = tag;
        }
        if responders.len() < self.params.majority() {
            return;
        }
        // responses beyond the majority are ignored
        let tw = Tag::next(*tmax, WriterId(self.pid.ord));
        let value = value.clone();
        let op = *cur;
        self.md.send_value(self.params.topology(), tw, &value, op);
        while let Some((dst, m)) = self.md.pop_send() {
            out.send(dst, m);
        }
        // the value is no longer needed; only the tag and ack count remain
        self.phase = Phase::Put { op, tw, acks: BTreeSet::new() };
    }

    fn on_ack(&mut self, src: ProcessId, tag: Tag, out: &mut Outbox) {
        let Phase::Put { op, tw, acks } = &mut self.phase else {
            return;
        };
        if tag != *tw {
            // stray ack from an earlier operation
            return;
        }
        acks.insert(src);
        if acks.len() >= self.params.write_quorum() {
            let (op, tw) = (*op, *tw);
            self.phase = Phase::Idle;
            out.complete(op, tw, None);
        }
    }

    pub fn md_sender(&self) -> &MdSender {
        &self.md
    }
}
