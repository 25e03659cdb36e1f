//! SODA reader: query tags, register with every server via md-meta, collect
//! coded elements until one tag reaches the decode threshold, then announce
//! completion.
//!
//! The threshold is k for SODA and k + 2e for SODA-err; in the latter case
//! decoding tolerates up to e corrupted elements.

use super::{ClientOp, Outbox, ProtocolParams};
use crate::codec::{Codec, CodedElement, Value};
use crate::disperse::MdSender;
use crate::protocol::{Message, MetaMsg, OpId, ProcessId, ReadId, Tag};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug)]
enum Phase {
    Idle,
    GetTag { op: OpId, responders: BTreeSet<ProcessId>, tmax: Tag },
    Collect { op: OpId, tr: Tag, received: BTreeMap<Tag, BTreeMap<usize, CodedElement>> },
}

pub struct SodaReader {
    pid: ProcessId,
    params: ProtocolParams,
    codec: Arc<Codec>,
    md: MdSender,
    op_seq: u32,
    phase: Phase,
}

impl SodaReader {
    pub fn new(pid: ProcessId, params: ProtocolParams, codec: Arc<Codec>) -> Self {
        SodaReader { pid, params, codec, md: MdSender::new(pid), op_seq: 0, phase: Phase::Idle }
    }

    /// Elements of one tag needed before decoding.
    fn collect_threshold(&self) -> usize {
        crate::soda_err::collect_threshold(&self.params)
    }

    pub fn invoke(&mut self, op: ClientOp, out: &mut Outbox) -> OpId {
        assert!(matches!(op, ClientOp::Read), "reader invoked with a write");
        assert!(matches!(self.phase, Phase::Idle), "read invoked while busy at {}", self.pid);
        self.op_seq += 1;
        let op = OpId { client: self.pid, seq: self.op_seq };
        for ord in 1..=self.params.n {
            out.send(ProcessId::server(ord as u32), Message::ReadGetTag { op });
        }
        self.phase = Phase::GetTag { op, responders: BTreeSet::new(), tmax: Tag::INITIAL };
        op
    }

    pub fn on_message(&mut self, src: ProcessId, msg: &Message, out: &mut Outbox) {
        match msg {
            Message::ReadGetTagResp { op, tag } => self.on_tag_resp(src, *op, *tag, out),
            Message::CodedToReader { read, tag, element } => {
                self.on_element(*read, *tag, element, out)
            }
            _ => {}
        }
    }

    fn on_tag_resp(&mut self, src: ProcessId, op: OpId, tag: Tag, out: &mut Outbox) {
        let Phase::GetTag { op: cur, responders, tmax } = &mut self.phase else {
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
        let (op, tr) = (*cur, *tmax);
        self.md.send_meta(self.params.topology(), MetaMsg::ReadValue { read: op, tr });
        while let Some((dst, m)) = self.md.pop_send() {
            out.send(dst, m);
        }
        self.phase = Phase::Collect { op, tr, received: BTreeMap::new() };
    }

    fn on_element(&mut self, read: ReadId, tag: Tag, element: &CodedElement, out: &mut Outbox) {
        let threshold = self.collect_threshold();
        let Phase::Collect { op, tr, received } = &mut self.phase else {
            return;
        };
        if read != *op {
            // element for an earlier read by this reader
            return;
        }
        debug_assert!(tag >= *tr, "servers only relay tags at or above tr");
        let per_tag = received.entry(tag).or_default();
        // the same server may serve several tags, but one element per (tag, index)
        if per_tag.contains_key(&element.index) {
            return;
        }
        per_tag.insert(element.index, element.clone());
        if per_tag.len() < threshold {
            return;
        }
        let fragments: Vec<CodedElement> = per_tag.values().cloned().collect();
        let decoded: Option<Value> = if self.params.e == 0 {
            self.codec.decode(&fragments).ok()
        } else {
            self.codec.decode_with_errors(&fragments).ok()
        };
        let (op, tr) = (*op, *tr);
        self.md.send_meta(self.params.topology(), MetaMsg::ReadComplete { read: op, tr });
        while let Some((dst, m)) = self.md.pop_send() {
            out.send(dst, m);
        }
        self.phase = Phase::Idle;
        out.complete(op, tag, decoded);
    }

    pub fn md_sender(&self) -> &MdSender {
        &self.md
    }
}
