//! The md-value and md-meta message-disperse primitives.
//!
//! A sender pushes the full (tag, value) to the first f+1 servers in server
//! order. A server in that set, on first receipt, relays the full message to
//! the strictly higher-ordinal members of the set, sends each remaining
//! server its coded element (md-value) or the metadata itself (md-meta), and
//! only then delivers locally. Whenever any server delivers, every non-faulty
//! server delivers, even if the sender crashed mid-send.

use crate::codec::{Codec, CodedElement, Value};
use crate::protocol::{Message, MessageId, MetaMsg, OpId, ProcessId, Tag};
use std::collections::{BTreeMap, VecDeque};

/// Fixed server ordering parameters shared by both primitives.
#[derive(Debug, Clone, Copy)]
pub struct Topology {
    pub n: usize,
    pub f: usize,
}

impl Topology {
    /// D: ordinals of the first f+1 servers, the only targets of a send.
    pub fn disperse_set(&self) -> impl Iterator<Item = usize> {
        1..=self.f + 1
    }

    pub fn in_disperse_set(&self, ord: usize) -> bool {
        ord <= self.f + 1
    }

    /// Higher-ordinal members of D that `ord` relays the full message to.
    pub fn relay_targets(&self, ord: usize) -> impl Iterator<Item = usize> {
        ord + 1..=self.f + 1
    }

    /// Servers outside D, which receive coded elements (or relayed metadata).
    pub fn outside_disperse_set(&self) -> impl Iterator<Item = usize> {
        self.f + 2..=self.n
    }
}

/// Sender half of both primitives. The owning actor drains `send_buff` into
/// the network one message at a time, which is what gives crash-after-the-
/// j-th-send schedules their meaning.
#[derive(Debug)]
pub struct MdSender {
    pid: ProcessId,
    m_count: u32,
    active: bool,
    curr_tag: Option<Tag>,
    send_buff: VecDeque<(ProcessId, Message)>,
}

impl MdSender {
    pub fn new(pid: ProcessId) -> Self {
        MdSender { pid, m_count: 0, active: false, curr_tag: None, send_buff: VecDeque::new() }
    }

    /// md-value-send(t, v): enqueues the full value for the first f+1
    /// servers, in server order.
    pub fn send_value(&mut self, topo: Topology, tag: Tag, value: &Value, op: OpId) -> MessageId {
        assert!(!self.active, "md-value-send while a send is active at {}", self.pid);
        self.m_count += 1;
        let mid = MessageId { sender: self.pid, count: self.m_count };
        for ord in topo.disperse_set() {
            self.send_buff.push_back((
                ProcessId::server(ord as u32),
                Message::MdFull { mid, op, tag, value: value.clone() },
            ));
        }
        self.active = true;
        self.curr_tag = Some(tag);
        mid
    }

    /// md-meta-send(m): same targets, metadata payload.
    pub fn send_meta(&mut self, topo: Topology, meta: MetaMsg) -> MessageId {
        self.m_count += 1;
        let mid = MessageId { sender: self.pid, count: self.m_count };
        for ord in topo.disperse_set() {
            self.send_buff
                .push_back((ProcessId::server(ord as u32), Message::MdMeta { mid, meta: meta.clone() }));
        }
        mid
    }

    /// Next buffered message; the internal send-ack fires when the buffer
    /// drains, clearing `active`.
    pub fn pop_send(&mut self) -> Option<(ProcessId, Message)> {
        let item = self.send_buff.pop_front();
        if self.send_buff.is_empty() {
            self.active = false;
            self.curr_tag = None;
        }
        item
    }

    /// True while undrained value bytes sit in the buffer (only possible for
    /// a crashed sender).
    pub fn holds_value_bytes(&self) -> bool {
        self.send_buff
            .iter()
            .any(|(_, m)| matches!(m, Message::MdFull { .. } | Message::MdCoded { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdStatus {
    Sending,
    Ready,
    Delivered,
}

/// Server half. `status` deduplicates by message id; `content` holds the
/// local coded element only between receipt and delivery.
#[derive(Debug)]
pub struct MdReceiver {
    ord: usize,
    status: BTreeMap<MessageId, MdStatus>,
    content: BTreeMap<MessageId, (Tag, CodedElement)>,
}

impl MdReceiver {
    pub fn new(ord: usize) -> Self {
        MdReceiver { ord, status: BTreeMap::new(), content: BTreeMap::new() }
    }

    /// Handles a full (tag, value) receipt. Returns the ordered relay and
    /// coded messages to send, or None if this mid was already seen.
    pub fn on_full(
        &mut self,
        topo: Topology,
        codec: &Codec,
        mid: MessageId,
        op: OpId,
        tag: Tag,
        value: &Value,
    ) -> Option<Vec<(ProcessId, Message)>> {
        assert!(
            topo.in_disperse_set(self.ord),
            "MD-FULL delivered to s{} outside the first f+1 servers",
            self.ord
        );
        if self.status.contains_key(&mid) {
            return None;
        }
        self.status.insert(mid, MdStatus::Sending);
        let mut out = Vec::new();
        for ord in topo.relay_targets(self.ord) {
            out.push((
                ProcessId::server(ord as u32),
                Message::MdFull { mid, op, tag, value: value.clone() },
            ));
        }
        for ord in topo.outside_disperse_set() {
            let element = codec.encode_fragment(value, ord).expect("valid fragment index");
            out.push((ProcessId::server(ord as u32), Message::MdCoded { mid, op, tag, element }));
        }
        let own = codec.encode_fragment(value, self.ord).expect("own fragment");
        self.content.insert(mid, (tag, own));
        Some(out)
    }

    /// Out-queue drained: the mid becomes ready and must be delivered via
    /// `take_ready`.
    pub fn mark_ready(&mut self, mid: MessageId) {
        self.status.insert(mid, MdStatus::Ready);
    }

    /// Handles a coded receipt. Returns true when this mid should now be
    /// delivered (first receipt); duplicates after delivery are dropped.
    pub fn on_coded(&mut self, mid: MessageId, tag: Tag, element: CodedElement) -> bool {
        if self.status.get(&mid) == Some(&MdStatus::Delivered) {
            return false;
        }
        self.status.insert(mid, MdStatus::Ready);
        self.content.insert(mid, (tag, element));
        true
    }

    /// md-value-deliver: takes the content out and reclaims storage.
    pub fn take_ready(&mut self, mid: MessageId) -> (Tag, CodedElement) {
        debug_assert_eq!(self.status.get(&mid), Some(&MdStatus::Ready));
        self.status.insert(mid, MdStatus::Delivered);
        self.content.remove(&mid).expect("ready mid has content")
    }

    /// Handles a metadata receipt. Returns the relay messages to send (empty
    /// outside the disperse set), or None if already delivered for this mid.
    /// The caller delivers the metadata locally exactly once per Some.
    pub fn on_meta(
        &mut self,
        topo: Topology,
        mid: MessageId,
        meta: &MetaMsg,
    ) -> Option<Vec<(ProcessId, Message)>> {
        if self.status.contains_key(&mid) {
            return None;
        }
        self.status.insert(mid, MdStatus::Delivered);
        let mut out = Vec::new();
        if topo.in_disperse_set(self.ord) {
            for ord in topo.relay_targets(self.ord) {
                out.push((
                    ProcessId::server(ord as u32),
                    Message::MdMeta { mid, meta: meta.clone() },
                ));
            }
            for ord in topo.outside_disperse_set() {
                out.push((
                    ProcessId::server(ord as u32),
                    Message::MdMeta { mid, meta: meta.clone() },
                ));
            }
        }
        Some(out)
    }

    /// Message ids whose content was never reclaimed (crash residue).
    pub fn residual_mids(&self) -> Vec<MessageId> {
        self.content.keys().copied().collect()
    }

    pub fn delivered(&self, mid: MessageId) -> bool {
        self.status.get(&mid) == Some(&MdStatus::Delivered)
    }
}
