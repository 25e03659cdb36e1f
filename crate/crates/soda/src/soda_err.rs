//! SODA-err support: k = n - f - 2e dimensioning, the raised decode and
//! unregister thresholds, and the scheduled disk-read-error model.
//!
//! Errors are injected only where a server reads its stored element off disk
//! to answer a registration; relays of in-flight write data and all tags stay
//! clean. A flip persists in local storage until a newer write replaces it,
//! so schedules must budget for that persistence.

use crate::actors::ProtocolParams;
use crate::protocol::ReadId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// One scheduled disk-read error: server `server` serves a corrupted element
/// to read `read`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrEntry {
    pub server: usize,
    pub read: ReadId,
}

/// Error-injection configuration for a run.
#[derive(Debug, Clone, Default)]
pub struct ErrConfig {
    pub e: usize,
    pub schedule: BTreeSet<ErrEntry>,
}

impl ErrConfig {
    pub fn schedule_for(&self, server: usize) -> BTreeSet<ReadId> {
        self.schedule.iter().filter(|en| en.server == server).map(|en| en.read).collect()
    }
}

/// Elements of one tag a reader must hold before decoding: k + 2e.
pub fn collect_threshold(params: &ProtocolParams) -> usize {
    params.k() + 2 * params.e
}

/// Distinct dispersal records of one tag that let a server unregister a
/// reader: k + 2e.
pub fn unregister_threshold(params: &ProtocolParams) -> usize {
    params.k() + 2 * params.e
}

/// Deterministic corruption: complement every payload byte, so the result
/// always differs from any valid fragment and the oracle knows ground truth.
pub fn corrupt_payload(payload: &mut [u8]) {
    for b in payload.iter_mut() {
        *b = !*b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_reduce_to_k_at_e0() {
        let p = ProtocolParams { n: 5, f: 2, e: 0 };
        assert_eq!(collect_threshold(&p), 3);
        assert_eq!(unregister_threshold(&p), 3);
    }

    #[test]
    fn thresholds_k_plus_2e() {
        let p = ProtocolParams { n: 7, f: 2, e: 1 };
        assert_eq!(p.k(), 3);
        assert_eq!(collect_threshold(&p), 5);
        assert_eq!(unregister_threshold(&p), 5);
    }

    #[test]
    fn corruption_changes_every_byte() {
        let mut payload = vec![0x00, 0x5a, 0xff];
        let orig = payload.clone();
        corrupt_payload(&mut payload);
        assert!(payload.iter().zip(&orig).all(|(a, b)| a != b));
        corrupt_payload(&mut payload);
        assert_eq!(payload, orig);
    }
}
