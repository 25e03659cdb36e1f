//! SODA server: one stored (tag, coded element) pair, a registered-reader
//! set, and the dispersal history used to stop relaying to finished or
//! crashed readers.

use super::{Note, Outbox, ProtocolParams, UnregisterReason};
use crate::codec::{Codec, CodedElement, Value};
use crate::disperse::{MdReceiver, MdSender};
use crate::protocol::{Message, MessageId, MetaMsg, OpId, ProcessId, ReadId, Tag};
use crate::soda_err;
use crate::util::hash64;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub struct SodaServer {
    ord: usize,
    params: ProtocolParams,
    codec: Arc<Codec>,
    tag: Tag,
    element: CodedElement,
    /// Registered readers: read id -> requested tag floor.
    rc: BTreeMap<ReadId, Tag>,
    /// Dispersal records (tag, sending server, read). The tuple
    /// (t0, self, read) doubles as the completion-before-registration
    /// sentinel; it can only exist while the read is unregistered here.
    h: BTreeSet<(Tag, usize, ReadId)>,
    md_rx: MdReceiver,
    md_tx: MdSender,
    /// Reads whose registration-time serve flips the stored payload first.
    error_schedule: BTreeSet<ReadId>,
    corrupted: bool,
}

impl SodaServer {
    pub fn new(
        pid: ProcessId,
        params: ProtocolParams,
        codec: Arc<Codec>,
        initial_value: &Value,
        error_schedule: BTreeSet<ReadId>,
    ) -> Self {
        let ord = pid.server_index();
        let element = codec.encode_fragment(initial_value, ord).expect("initial fragment");
        SodaServer {
            ord,
            params,
            codec,
            tag: Tag::INITIAL,
            element,
            rc: BTreeMap::new(),
            h: BTreeSet::new(),
            md_rx: MdReceiver::new(ord),
            md_tx: MdSender::new(pid),
            error_schedule,
            corrupted: false,
        }
    }

    pub fn on_message(&mut self, _src: ProcessId, msg: &Message, out: &mut Outbox) {
        match msg {
            Message::WriteGetTag { op } => {
                out.send(op.client, Message::WriteGetTagResp { op: *op, tag: self.tag });
            }
            Message::ReadGetTag { op } => {
                out.send(op.client, Message::ReadGetTagResp { op: *op, tag: self.tag });
            }
            Message::MdFull { mid, op, tag, value } => self.on_full(*mid, *op, *tag, value, out),
            Message::MdCoded { mid, tag, element, .. } => {
                if self.md_rx.on_coded(*mid, *tag, element.clone()) {
                    let (t, c) = self.md_rx.take_ready(*mid);
                    self.deliver_value(*mid, t, c, out);
                }
            }
            Message::MdMeta { mid, meta } => self.on_meta(*mid, meta, out),
            _ => {}
        }
    }

    fn on_full(&mut self, mid: MessageId, op: OpId, tag: Tag, value: &Value, out: &mut Outbox) {
        let topo = self.params.topology();
        let Some(relays) = self.md_rx.on_full(topo, &self.codec, mid, op, tag, value) else {
            return;
        };
        for (dst, m) in relays {
            out.send(dst, m);
        }
        // out-queue drained; deliver the local element
        self.md_rx.mark_ready(mid);
        let (t, c) = self.md_rx.take_ready(mid);
        self.deliver_value(mid, t, c, out);
    }

    /// md-value-deliver(t_w, c'): relay to registered readers with a matching
    /// tag floor, store if newer, always ack the writer.
    fn deliver_value(&mut self, mid: MessageId, tw: Tag, c_new: CodedElement, out: &mut Outbox) {
        out.note(Note::MdValueDelivered {
            server: self.ord,
            mid,
            tag: tw,
            index: c_new.index,
            payload_hash: hash64(&c_new.payload),
        });
        let registered: Vec<(ReadId, Tag)> = self.rc.iter().map(|(r, t)| (*r, *t)).collect();
        for (read, tr) in registered {
            if tw >= tr {
                out.send(
                    read.client,
                    Message::CodedToReader { read, tag: tw, element: c_new.clone() },
                );
                self.h.insert((tw, self.ord, read));
                self.send_meta(MetaMsg::ReadDisperse { tag: tw, from: self.ord, read }, out);
            }
        }
        if tw > self.tag {
            out.note(Note::StoredReplaced {
                server: self.ord,
                old_bytes: self.element.payload.len(),
                new_bytes: c_new.payload.len(),
            });
            self.tag = tw;
            self.element = c_new;
            self.corrupted = false;
        }
        out.send(mid.sender, Message::WritePutAck { tag: tw });
    }

    fn on_meta(&mut self, mid: MessageId, meta: &MetaMsg, out: &mut Outbox) {
        let topo = self.params.topology();
        let Some(relays) = self.md_rx.on_meta(topo, mid, meta) else {
            return;
        };
        for (dst, m) in relays {
            out.send(dst, m);
        }
        match meta {
            MetaMsg::ReadValue { read, tr } => self.on_read_value(*read, *tr, out),
            MetaMsg::ReadComplete { read, .. } => self.on_read_complete(*read, out),
            MetaMsg::ReadDisperse { tag, from, read } => {
                self.on_read_disperse(*tag, *from, *read, out)
            }
        }
    }

    /// Registration. If the sentinel is present the READ-COMPLETE already
    /// arrived, so clear the read's history instead of registering.
    fn on_read_value(&mut self, read: ReadId, tr: Tag, out: &mut Outbox) {
        if self.h.contains(&(Tag::INITIAL, self.ord, read)) {
            self.h.retain(|(_, _, r)| *r != read);
            return;
        }
        self.rc.insert(read, tr);
        out.note(Note::Registered { server: self.ord, read, tr });
        if self.tag >= tr {
            let element = self.serve_stored(read, out);
            out.send(read.client, Message::CodedToReader { read, tag: self.tag, element });
            self.h.insert((self.tag, self.ord, read));
            self.send_meta(MetaMsg::ReadDisperse { tag: self.tag, from: self.ord, read }, out);
        }
    }

    fn on_read_complete(&mut self, read: ReadId, out: &mut Outbox) {
        if self.rc.remove(&read).is_some() {
            self.h.retain(|(_, _, r)| *r != read);
            out.note(Note::Unregistered {
                server: self.ord,
                read,
                reason: UnregisterReason::ReadComplete,
            });
        } else {
            self.h.insert((Tag::INITIAL, self.ord, read));
        }
    }

    /// Dispersal record bookkeeping: once k + 2e distinct servers are known
    /// to have sent elements of one tag to a registered reader, that reader
    /// can decode, so unregister it and drop its history.
    fn on_read_disperse(&mut self, tag: Tag, from: usize, read: ReadId, out: &mut Outbox) {
        self.h.insert((tag, from, read));
        if !self.rc.contains_key(&read) {
            return;
        }
        let count = self.h.iter().filter(|(t, _, r)| *t == tag && *r == read).count();
        if count >= soda_err::unregister_threshold(&self.params) {
            self.rc.remove(&read);
            self.h.retain(|(_, _, r)| *r != read);
            out.note(Note::Unregistered {
                server: self.ord,
                read,
                reason: UnregisterReason::DisperseThreshold,
            });
        }
    }

    /// The local-disk read feeding a registration-time response. A scheduled
    /// error flips the stored payload in place; the server serves it
    /// obliviously, and the flip persists until a newer write overwrites it.
    fn serve_stored(&mut self, read: ReadId, out: &mut Outbox) -> CodedElement {
        if self.error_schedule.remove(&read) {
            soda_err::corrupt_payload(&mut self.element.payload);
            self.corrupted = true;
            out.note(Note::CorruptionApplied { server: self.ord, read });
        }
        self.element.clone()
    }

    fn send_meta(&mut self, meta: MetaMsg, out: &mut Outbox) {
        self.md_tx.send_meta(self.params.topology(), meta);
        while let Some((dst, m)) = self.md_tx.pop_send() {
            out.send(dst, m);
        }
    }

    pub fn stored_bytes(&self) -> usize {
        self.element.payload.len()
    }

    pub fn stored_tag(&self) -> Tag {
        self.tag
    }

    pub fn registered(&self) -> Vec<ReadId> {
        self.rc.keys().copied().collect()
    }

    pub fn history_len(&self) -> usize {
        self.h.len()
    }

    pub fn md_residual(&self) -> Vec<MessageId> {
        self.md_rx.residual_mids()
    }

    pub fn md_sender(&self) -> &MdSender {
        &self.md_tx
    }

    pub fn is_corrupted(&self) -> bool {
        self.corrupted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::Effect;
    use crate::codec::CodeParams;
    use crate::protocol::WriterId;

    fn server(ord: u32) -> SodaServer {
        let params = ProtocolParams { n: 5, f: 2, e: 0 };
        let codec = Arc::new(Codec::new(CodeParams::for_soda(5, 2).unwrap()));
        SodaServer::new(
            ProcessId::server(ord),
            params,
            codec,
            &Value(vec![0u8; 6]),
            BTreeSet::new(),
        )
    }

    fn read_id(r: u32, seq: u32) -> ReadId {
        OpId { client: ProcessId::reader(r), seq }
    }

    fn meta(mid_count: u32, from: ProcessId, meta: MetaMsg) -> Message {
        Message::MdMeta { mid: MessageId { sender: from, count: mid_count }, meta }
    }

    fn sent_kinds(out: &Outbox) -> Vec<crate::protocol::MessageKind> {
        out.effects
            .iter()
            .filter_map(|e| match e {
                Effect::Send { msg, .. } => Some(msg.kind()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn get_tag_initially_t0() {
        let mut s = server(1);
        let mut out = Outbox::default();
        let op = OpId { client: ProcessId::writer(1), seq: 1 };
        s.on_message(ProcessId::writer(1), &Message::WriteGetTag { op }, &mut out);
        assert!(matches!(
            &out.effects[0],
            Effect::Send { msg: Message::WriteGetTagResp { tag, .. }, .. } if *tag == Tag::INITIAL
        ));
    }

    #[test]
    fn registration_serves_when_tag_at_floor() {
        let mut s = server(1);
        let mut out = Outbox::default();
        let r = read_id(1, 1);
        let m = meta(1, ProcessId::reader(1), MetaMsg::ReadValue { read: r, tr: Tag::INITIAL });
        s.on_message(ProcessId::reader(1), &m, &mut out);
        // relays (s2..s3 full-set + s4..s5) then the served element + dispersal
        let kinds = sent_kinds(&out);
        assert!(kinds.contains(&crate::protocol::MessageKind::CodedToReader));
        assert!(kinds.contains(&crate::protocol::MessageKind::ReadDisperse));
        assert_eq!(s.registered(), vec![r]);
    }

    #[test]
    fn registration_holds_fire_when_tag_below_floor() {
        let mut s = server(1);
        let mut out = Outbox::default();
        let r = read_id(1, 1);
        let tr = Tag { z: 3, w: WriterId(2) };
        let m = meta(1, ProcessId::reader(1), MetaMsg::ReadValue { read: r, tr });
        s.on_message(ProcessId::reader(1), &m, &mut out);
        assert!(!sent_kinds(&out).contains(&crate::protocol::MessageKind::CodedToReader));
        assert_eq!(s.registered(), vec![r]);
    }

    #[test]
    fn sentinel_blocks_registration() {
        let mut s = server(1);
        let r = read_id(1, 1);
        let mut out = Outbox::default();
        // READ-COMPLETE first: sentinel inserted
        let complete =
            meta(1, ProcessId::reader(1), MetaMsg::ReadComplete { read: r, tr: Tag::INITIAL });
        s.on_message(ProcessId::reader(1), &complete, &mut out);
        assert_eq!(s.history_len(), 1);
        // duplicate completion handling: a second insert is absorbed by the set
        let complete2 =
            meta(2, ProcessId::reader(1), MetaMsg::ReadComplete { read: r, tr: Tag::INITIAL });
        s.on_message(ProcessId::reader(1), &complete2, &mut out);
        assert_eq!(s.history_len(), 1);
        // late registration clears the sentinel and does not register
        let reg = meta(3, ProcessId::reader(1), MetaMsg::ReadValue { read: r, tr: Tag::INITIAL });
        let mut out2 = Outbox::default();
        s.on_message(ProcessId::reader(1), &reg, &mut out2);
        assert!(s.registered().is_empty());
        assert_eq!(s.history_len(), 0);
        assert!(!sent_kinds(&out2).contains(&crate::protocol::MessageKind::CodedToReader));
    }

    #[test]
    fn disperse_threshold_unregisters_at_k() {
        let mut s = server(5);
        let r = read_id(1, 1);
        let mut out = Outbox::default();
        let reg = meta(1, ProcessId::reader(1), MetaMsg::ReadValue { read: r, tr: Tag::INITIAL });
        s.on_message(ProcessId::reader(1), &reg, &mut out);
        assert_eq!(s.registered(), vec![r]);
        let t = Tag { z: 1, w: WriterId(1) };
        // k = 3: two records keep it registered, the third unregisters
        for (i, from) in [1usize, 2].iter().enumerate() {
            let d = meta(
                10 + i as u32,
                ProcessId::server(*from as u32),
                MetaMsg::ReadDisperse { tag: t, from: *from, read: r },
            );
            s.on_message(ProcessId::server(*from as u32), &d, &mut out);
            assert_eq!(s.registered(), vec![r]);
        }
        let d = meta(20, ProcessId::server(3), MetaMsg::ReadDisperse { tag: t, from: 3, read: r });
        s.on_message(ProcessId::server(3), &d, &mut out);
        assert!(s.registered().is_empty());
        assert_eq!(s.history_len(), 0);
    }

    #[test]
    fn read_complete_purges_registration_and_history() {
        let mut s = server(2);
        let r = read_id(1, 1);
        let mut out = Outbox::default();
        let reg = meta(1, ProcessId::reader(1), MetaMsg::ReadValue { read: r, tr: Tag::INITIAL });
        s.on_message(ProcessId::reader(1), &reg, &mut out);
        assert_eq!(s.registered(), vec![r]);
        assert!(s.history_len() > 0);
        let complete =
            meta(2, ProcessId::reader(1), MetaMsg::ReadComplete { read: r, tr: Tag::INITIAL });
        s.on_message(ProcessId::reader(1), &complete, &mut out);
        assert!(s.registered().is_empty());
        assert_eq!(s.history_len(), 0);
    }

    #[test]
    fn disperse_records_accumulate_for_unregistered_reads() {
        let mut s = server(4);
        let r = read_id(2, 7);
        let mut out = Outbox::default();
        let t = Tag { z: 1, w: WriterId(1) };
        let d = meta(1, ProcessId::server(1), MetaMsg::ReadDisperse { tag: t, from: 1, read: r });
        s.on_message(ProcessId::server(1), &d, &mut out);
        assert!(s.registered().is_empty());
        assert_eq!(s.history_len(), 1);
    }

    #[test]
    fn stale_write_still_relayed_not_stored() {
        use crate::codec::Codec;
        let params = ProtocolParams { n: 5, f: 2, e: 0 };
        let codec = Codec::new(CodeParams::for_soda(5, 2).unwrap());
        let mut s = server(4);
        let r = read_id(1, 1);
        let mut out = Outbox::default();

        // store tag (2, w1) first
        let v2 = Value(vec![9u8; 6]);
        let t2 = Tag { z: 2, w: WriterId(1) };
        let mid2 = MessageId { sender: ProcessId::writer(1), count: 2 };
        let op2 = OpId { client: ProcessId::writer(1), seq: 2 };
        let c2 = codec.encode_fragment(&v2, 4).unwrap();
        s.on_message(
            ProcessId::server(1),
            &Message::MdCoded { mid: mid2, op: op2, tag: t2, element: c2 },
            &mut out,
        );
        assert_eq!(s.stored_tag(), t2);

        // register a reader with floor t0
        let reg = meta(1, ProcessId::reader(1), MetaMsg::ReadValue { read: r, tr: Tag::INITIAL });
        s.on_message(ProcessId::reader(1), &reg, &mut out);

        // now an older write's element arrives: relayed to the reader, acked,
        // but the stored pair is unchanged
        let v1 = Value(vec![3u8; 6]);
        let t1 = Tag { z: 1, w: WriterId(1) };
        let mid1 = MessageId { sender: ProcessId::writer(1), count: 1 };
        let op1 = OpId { client: ProcessId::writer(1), seq: 1 };
        let c1 = codec.encode_fragment(&v1, 4).unwrap();
        let mut out2 = Outbox::default();
        s.on_message(
            ProcessId::server(2),
            &Message::MdCoded { mid: mid1, op: op1, tag: t1, element: c1 },
            &mut out2,
        );
        assert_eq!(s.stored_tag(), t2);
        let kinds = sent_kinds(&out2);
        assert!(kinds.contains(&crate::protocol::MessageKind::CodedToReader));
        assert!(kinds.contains(&crate::protocol::MessageKind::WritePutAck));
        assert_eq!(params.k(), 3);
    }
}
