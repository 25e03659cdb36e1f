//! Actor plumbing shared by the SODA and ABD state machines.
//!
//! Every actor is a single-owner deterministic event handler: it consumes one
//! event, mutates its own state and pushes effects (sends, operation
//! completions, bookkeeping notes) into an [`Outbox`]. All nondeterminism
//! lives in the simulator's schedule.

mod reader;
mod server;
mod writer;

pub use reader::SodaReader;
pub use server::SodaServer;
pub use writer::SodaWriter;

use crate::abd::{AbdReader, AbdServer, AbdWriter};
use crate::codec::Value;
use crate::disperse::Topology;
use crate::protocol::{Message, MessageId, OpId, ProcessId, ReadId, Tag};

/// Protocol dimensions. For SODA e = 0 and k = n - f; for SODA-err
/// k = n - f - 2e.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolParams {
    pub n: usize,
    pub f: usize,
    pub e: usize,
}

impl ProtocolParams {
    pub fn k(&self) -> usize {
        self.n - self.f - 2 * self.e
    }

    /// Phase-1 quorum: ceil((n+1)/2) responses.
    pub fn majority(&self) -> usize {
        (self.n + 1).div_ceil(2)
    }

    /// Acks that complete a write: n - f = k + 2e. Phase-1 majorities and
    /// write quorums must intersect, which this guarantees for f <= (n-1)/2.
    pub fn write_quorum(&self) -> usize {
        self.n - self.f
    }

    pub fn topology(&self) -> Topology {
        Topology { n: self.n, f: self.f }
    }

    /// Checks the quorum arithmetic the protocol relies on: write quorums
    /// and phase-1 majorities intersect in at least one server.
    pub fn assert_quorums(&self) {
        assert!(2 * self.f <= self.n, "f <= n/2 required");
        assert!(self.k() >= 1, "k = n - f - 2e must be at least 1");
        assert!(
            self.write_quorum() + self.majority() > self.n,
            "write quorum must intersect every majority"
        );
    }
}

/// A client-initiated operation.
#[derive(Debug, Clone)]
pub enum ClientOp {
    Write(Value),
    Read,
}

/// Why a server dropped a reader from its registered set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnregisterReason {
    ReadComplete,
    DisperseThreshold,
}

/// Bookkeeping events surfaced to the harness for checking; not messages.
#[derive(Debug, Clone)]
pub enum Note {
    Registered { server: usize, read: ReadId, tr: Tag },
    Unregistered { server: usize, read: ReadId, reason: UnregisterReason },
    MdValueDelivered { server: usize, mid: MessageId, tag: Tag, index: usize, payload_hash: u64 },
    StoredReplaced { server: usize, old_bytes: usize, new_bytes: usize },
    CorruptionApplied { server: usize, read: ReadId },
}

#[derive(Debug)]
pub enum Effect {
    Send { dst: ProcessId, msg: Message },
    Complete { op: OpId, tag: Tag, value: Option<Value> },
    Note(Note),
}

/// Ordered effect buffer for one handler invocation. The simulator applies
/// effects in order and may cut the sequence short at a crash point.
#[derive(Debug, Default)]
pub struct Outbox {
    pub effects: Vec<Effect>,
}

impl Outbox {
    pub fn send(&mut self, dst: ProcessId, msg: Message) {
        self.effects.push(Effect::Send { dst, msg });
    }

    pub fn complete(&mut self, op: OpId, tag: Tag, value: Option<Value>) {
        self.effects.push(Effect::Complete { op, tag, value });
    }

    pub fn note(&mut self, note: Note) {
        self.effects.push(Effect::Note(note));
    }
}

/// All actor kinds, dispatched by the simulator.
pub enum NodeImpl {
    SodaWriter(SodaWriter),
    SodaReader(SodaReader),
    SodaServer(Box<SodaServer>),
    AbdWriter(AbdWriter),
    AbdReader(AbdReader),
    AbdServer(AbdServer),
}

impl NodeImpl {
    pub fn on_message(&mut self, src: ProcessId, msg: &Message, out: &mut Outbox) {
        match self {
            NodeImpl::SodaWriter(a) => a.on_message(src, msg, out),
            NodeImpl::SodaReader(a) => a.on_message(src, msg, out),
            NodeImpl::SodaServer(a) => a.on_message(src, msg, out),
            NodeImpl::AbdWriter(a) => a.on_message(src, msg, out),
            NodeImpl::AbdReader(a) => a.on_message(src, msg, out),
            NodeImpl::AbdServer(a) => a.on_message(src, msg, out),
        }
    }

    /// Client-only: begin the next operation.
    pub fn invoke(&mut self, op: ClientOp, out: &mut Outbox) -> OpId {
        match self {
            NodeImpl::SodaWriter(a) => a.invoke(op, out),
            NodeImpl::SodaReader(a) => a.invoke(op, out),
            NodeImpl::AbdWriter(a) => a.invoke(op, out),
            NodeImpl::AbdReader(a) => a.invoke(op, out),
            _ => panic!("invoke on a server"),
        }
    }

    /// Bytes of value/coded payload held in server storage (the register
    /// itself, not message-disperse state).
    pub fn stored_bytes(&self) -> usize {
        match self {
            NodeImpl::SodaServer(a) => a.stored_bytes(),
            NodeImpl::AbdServer(a) => a.stored_bytes(),
            _ => 0,
        }
    }
}
