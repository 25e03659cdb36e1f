//! Storage-optimized erasure-coded atomic register protocols on a
//! deterministic simulated network.
//!
//! The crate implements the SODA multi-writer multi-reader atomic register
//! over an [n, k] MDS code with k = n - f, its SODA-err variant that
//! additionally tolerates e silently corrupted served fragments per read
//! (k = n - f - 2e), and a minimal ABD replication baseline. All three run
//! inside a seeded discrete-event simulator with crash and disk-error
//! injection, and a post-hoc checker verifies atomicity, liveness, storage
//! and communication cost bounds, latency bounds, eventual reader
//! unregistration, and the no-garbage property of the message-disperse
//! primitives.
//!
//! Layout:
//! - [`codec`]: GF(256) MDS encode/decode, including error-correcting decode
//! - [`protocol`]: tags, process ids, the message grammar
//! - [`disperse`]: the md-value / md-meta dissemination primitives
//! - [`actors`]: SODA writer, reader and server state machines
//! - [`soda_err`]: SODA-err thresholds and the disk-error model
//! - [`abd`]: the replication baseline
//! - [`sim`]: the deterministic simulator and run artifacts
//! - [`checker`]: post-hoc verification and reports
//! - [`experiments`]: seed sweeps, the uniformity matrix, cost comparisons
//! - [`cli`]: the `soda` command-line front end

pub mod abd;
pub mod actors;
pub mod checker;
pub mod cli;
pub mod codec;
pub mod disperse;
pub mod experiments;
pub mod protocol;
pub mod sim;
pub mod soda_err;
pub mod trace;
mod util;
