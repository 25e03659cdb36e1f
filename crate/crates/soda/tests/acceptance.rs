//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test -- --nocapture`).
//!
//! Run with `cargo test --test acceptance`. Every tolerance is pinned here;
//! the seeded workloads make each criterion reproducible bit for bit.

use itertools::Itertools;
use soda::checker::{atomicity_self_test, check_run, CheckSet};
use soda::codec::{CodeParams, Codec, CodedElement, Value};
use soda::experiments::{read_element_counts, sweep, uniformity_matrix, SweepSummary};
use soda::protocol::{OpId, ProcessId};
use soda::sim::{run, CrashPoint, CrashSpec, DeliveryModel, OpKind, Protocol, SimConfig};
use soda::soda_err::ErrEntry;
use std::time::Instant;

fn announce(criterion: &str, pass: bool, details: &str) {
    println!("criterion {criterion}: {} ({details})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {details}");
}

fn checks_basic() -> CheckSet {
    CheckSet {
        atomicity: true,
        liveness: true,
        costs: false,
        latency: false,
        unregistration: true,
        no_garbage: true,
    }
}

fn checks_with_costs() -> CheckSet {
    CheckSet { costs: true, ..checks_basic() }
}

fn checks_with_latency() -> CheckSet {
    CheckSet { latency: true, ..checks_basic() }
}

fn fail_lines(agg: &SweepSummary) -> String {
    agg.failures
        .iter()
        .take(3)
        .map(|(seed, msg)| format!("seed {seed}: {msg}"))
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Criterion 1: peak normalized storage equals n/(n-f) for
/// (n,f) in {(5,2),(7,3),(100,50)} at 1 KB values, within padding
/// quantization, in under 5 s per configuration; spot-check n=100, f=49
/// at <= 2 units.
#[test]
fn criterion_1_storage_bound() {
    const KB: usize = 1000;
    let mut details = Vec::new();
    for (n, f) in [(5usize, 2usize), (7, 3), (100, 50)] {
        let started = Instant::now();
        let mut cfg = SimConfig::new(Protocol::Soda, n, f);
        cfg.writers = 1;
        cfg.readers = 1;
        cfg.ops_per_client = if n >= 50 { 1 } else { 2 };
        cfg.value_size = KB;
        cfg.seed = 42;
        let art = run(&cfg).expect("run completes");
        let elapsed = started.elapsed();

        let k = n - f;
        let stripe = KB.div_ceil(k);
        assert_eq!(
            art.storage_peak_bytes,
            (n * stripe) as u64,
            "({n},{f}): peak must be one {stripe}-byte element per server"
        );
        // exact in padded units: n*stripe / (k*stripe) = n/k
        let padded_units = art.storage_peak_bytes as f64 / (k * stripe) as f64;
        assert!(
            (padded_units - n as f64 / k as f64).abs() < 1e-12,
            "({n},{f}): normalized storage {padded_units} != n/(n-f)"
        );
        // quantization vs the raw value size: at most (n/k)(k-1) bytes, the
        // feasibility bound for byte-granular fragments
        let raw_ideal = n as f64 * KB as f64 / k as f64;
        let quantization = art.storage_peak_bytes as f64 - raw_ideal;
        assert!(
            quantization >= -1e-9 && quantization <= n as f64 / k as f64 * (k - 1) as f64 + 1e-9,
            "({n},{f}): quantization {quantization} bytes out of range"
        );
        let report = check_run(&art, &checks_with_costs());
        assert!(report.all_pass(), "({n},{f}): {report}");
        assert!(
            elapsed.as_secs_f64() < 5.0,
            "({n},{f}) took {:.2}s, budget 5s",
            elapsed.as_secs_f64()
        );
        details.push(format!(
            "({n},{f}): {} B = {:.4} units in {:.2}s",
            art.storage_peak_bytes,
            padded_units,
            elapsed.as_secs_f64()
        ));
    }

    // Table-1 spot check: n=100, f=49 stays at or below 2 units even
    // against the raw value size
    let mut cfg = SimConfig::new(Protocol::Soda, 100, 49);
    cfg.writers = 1;
    cfg.readers = 1;
    cfg.ops_per_client = 1;
    cfg.value_size = KB;
    cfg.seed = 43;
    let art = run(&cfg).expect("run completes");
    let raw_units = art.storage_peak_bytes as f64 / KB as f64;
    assert!(raw_units <= 2.0 + 1e-12, "(100,49): {raw_units} units > 2");
    details.push(format!("(100,49): {raw_units:.3} units <= 2"));

    announce("1 storage-bound", true, &details.join("; "));
}

/// Criterion 2: over 1000 seeded crash-free runs per configuration, every
/// write costs at most 5f^2 units and its dispersal counts match the closed
/// form (f+1) + f(f+1)/2 full messages and (f+1)(n-f-1) coded messages.
#[test]
fn criterion_2_write_cost_bound() {
    const SEEDS: u64 = 1000;
    let mut details = Vec::new();
    for (n, f) in [(5usize, 2usize), (9, 4), (11, 5)] {
        let mut cfg = SimConfig::new(Protocol::Soda, n, f);
        cfg.writers = 2;
        cfg.readers = 1;
        cfg.ops_per_client = 2;
        cfg.value_size = 200;
        cfg.seed = 7_000 + n as u64;
        let agg = sweep(&cfg, SEEDS, &checks_with_costs());
        assert!(
            agg.all_pass(),
            "({n},{f}): {} of {} runs failed: {}",
            agg.failures.len(),
            agg.runs,
            fail_lines(&agg)
        );

        let k = (n - f) as f64;
        let stripe = 200f64 / k;
        let stripe = stripe.ceil();
        let unit = k * stripe;
        let fulls = (f as f64 + 1.0) + (f as f64) * (f as f64 + 1.0) / 2.0;
        let codeds = (f as f64 + 1.0) * (n as f64 - f as f64 - 1.0);
        let expected_units = (fulls * 200.0 + codeds * stripe) / unit;
        let bound = 5.0 * (f * f) as f64;
        assert!(
            (agg.max_write_units - expected_units).abs() < 1e-9,
            "({n},{f}): max write cost {} != closed form {expected_units}",
            agg.max_write_units
        );
        assert!(expected_units <= bound);
        details.push(format!(
            "({n},{f}): {SEEDS} runs, every write {expected_units:.3} units <= 5f^2 = {bound}"
        ));
    }
    announce("2 write-cost-bound", true, &details.join("; "));
}

/// Criterion 3: with 1 to 8 writers generating concurrency, every read's
/// cost stays within n/(n-f) x (delta_w + 1); reads with no concurrent
/// write cost exactly n/(n-f) (n elements).
#[test]
fn criterion_3_read_cost_bound() {
    let mut total_runs = 0usize;
    for writers in 1..=8u32 {
        let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
        cfg.writers = writers;
        cfg.readers = 2;
        cfg.ops_per_client = 3;
        cfg.value_size = 120;
        cfg.seed = 30_000 + writers as u64 * 1000;
        let agg = sweep(&cfg, 125, &checks_with_costs());
        assert!(
            agg.all_pass(),
            "{writers} writers: {} of {} runs failed: {}",
            agg.failures.len(),
            agg.runs,
            fail_lines(&agg)
        );
        total_runs += agg.runs;
    }

    // zero-concurrency reads: exactly n elements each
    let mut zero_checked = 0usize;
    for seed in 0..50u64 {
        let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
        cfg.writers = 2;
        cfg.readers = 2;
        cfg.ops_per_client = 2;
        cfg.value_size = 120;
        cfg.read_after_write = true;
        cfg.seed = 60_000 + seed;
        let art = run(&cfg).expect("run completes");
        for (op, elems, window) in read_element_counts(&art) {
            let w = window.expect("window closes");
            assert_eq!(w.delta_w, 0, "{op}: expected no concurrent writes");
            assert_eq!(elems, 5, "{op}: zero-concurrency read must cost exactly n elements");
            zero_checked += 1;
        }
        let report = check_run(&art, &checks_with_costs());
        assert!(report.all_pass(), "seed {seed}: {report}");
    }
    announce(
        "3 read-cost-bound",
        true,
        &format!(
            "{total_runs} concurrent runs within n/(n-f) x (delta_w+1); \
             {zero_checked} quiescent reads cost exactly n/(n-f)"
        ),
    );
}

/// Criterion 4: in delta-bounded mode with delta in {1, 3}, across 1000+
/// runs per delta including up to f crashes, writes finish within 5*delta
/// and reads within 6*delta; mean read latency shifts by at most 1 delta
/// between 1 and 8 writers.
#[test]
fn criterion_4_latency_bounds() {
    let mut details = Vec::new();
    for delta in [1u64, 3] {
        let mut means: Vec<(u32, f64)> = Vec::new();
        let mut runs = 0usize;
        for writers in [1u32, 8] {
            let mut durations: Vec<u64> = Vec::new();
            for (variant, crash) in
                [(0u64, vec![]), (1, vec![("s1", 0u64), ("s3", 7)])].into_iter()
            {
                let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
                cfg.writers = writers;
                cfg.readers = 2;
                cfg.ops_per_client = 3;
                cfg.value_size = 100;
                cfg.delivery = DeliveryModel::DeltaBounded { delta };
                cfg.crash = crash
                    .iter()
                    .map(|(s, t)| CrashSpec {
                        pid: ProcessId::server(s[1..].parse().unwrap()),
                        point: CrashPoint::AtTime(*t),
                    })
                    .collect();
                cfg.seed = 80_000 + delta * 10_000 + writers as u64 * 100 + variant;
                let agg = sweep(&cfg, 250, &checks_with_latency());
                assert!(
                    agg.all_pass(),
                    "delta={delta} writers={writers} crash#{variant}: {}",
                    fail_lines(&agg)
                );
                assert!(agg.max_write_duration <= 5 * delta);
                assert!(agg.max_read_duration <= 6 * delta);
                durations.extend(agg.read_durations.iter().copied());
                runs += agg.runs;
            }
            let mean = durations.iter().sum::<u64>() as f64 / durations.len() as f64;
            means.push((writers, mean));
        }
        let diff = (means[0].1 - means[1].1).abs();
        assert!(
            diff <= delta as f64,
            "delta={delta}: mean read latency differs by {diff} ticks between \
             1 writer ({:.3}) and 8 writers ({:.3})",
            means[0].1,
            means[1].1
        );
        details.push(format!(
            "delta={delta}: {runs} runs, writes <= {}, reads <= {}, \
             mean read latency {:.2} vs {:.2} ticks (1 vs 8 writers)",
            5 * delta,
            6 * delta,
            means[0].1,
            means[1].1
        ));
    }
    announce("4 latency-bounds", true, &details.join("; "));
}

/// Criterion 5: 10,000 adversarial seeded schedules per protocol at n=5,
/// f=2 with up to two server crashes, 3 writers x 4 writes and 3 readers x
/// 4 reads: zero P1/P2/P3 violations; the checker's own tag-regression
/// self-test must report a violation.
#[test]
fn criterion_5_atomicity_sweeps() {
    const SEEDS_PER_VARIANT: u64 = 2500;
    let crash_variants: [&[(u32, CrashPoint)]; 4] = [
        &[],
        &[(2, CrashPoint::AtTime(15))],
        &[(1, CrashPoint::AtTime(0)), (4, CrashPoint::AtTime(25))],
        &[(3, CrashPoint::AfterSends(40)), (5, CrashPoint::AtTime(60))],
    ];
    let mut details = Vec::new();
    for (p_idx, protocol) in [Protocol::Soda, Protocol::SodaErr, Protocol::Abd]
        .into_iter()
        .enumerate()
    {
        let mut runs = 0usize;
        for (v_idx, variant) in crash_variants.iter().enumerate() {
            let mut cfg = SimConfig::new(protocol, 5, 2);
            cfg.writers = 3;
            cfg.readers = 3;
            cfg.ops_per_client = 4;
            cfg.value_size = 100;
            cfg.adversarial = true;
            cfg.crash = variant
                .iter()
                .map(|(s, point)| CrashSpec { pid: ProcessId::server(*s), point: *point })
                .collect();
            if protocol == Protocol::SodaErr {
                cfg.e = 1;
                // one scheduled disk error per run keeps every read within
                // the e = 1 budget despite persistence
                cfg.error_schedule = vec![ErrEntry {
                    server: 4,
                    read: OpId { client: ProcessId::reader(2), seq: 2 },
                }];
            }
            cfg.seed = 100_000 + p_idx as u64 * 20_000 + v_idx as u64 * SEEDS_PER_VARIANT;
            let agg = sweep(&cfg, SEEDS_PER_VARIANT, &checks_basic());
            assert!(
                agg.all_pass(),
                "{protocol} crash-variant {v_idx}: {} of {} failed: {}",
                agg.failures.len(),
                agg.runs,
                fail_lines(&agg)
            );
            runs += agg.runs;
        }
        details.push(format!("{protocol}: {runs} schedules, zero violations"));
    }

    // checker sensitivity: an injected tag regression must be reported
    let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
    cfg.writers = 2;
    cfg.readers = 2;
    cfg.ops_per_client = 2;
    cfg.value_size = 100;
    cfg.read_after_write = true;
    cfg.seed = 424_242;
    let art = run(&cfg).expect("run completes");
    assert!(
        atomicity_self_test(&art),
        "checker failed to flag an injected tag regression"
    );
    details.push("checker self-test flags injected tag regression".to_string());

    announce("5 atomicity", true, &details.join("; "));
}

/// Criterion 6: exhaustive sender-crash-prefix matrix at n=5, f=2: whenever
/// any server delivers for a message id, every non-crashed server delivers,
/// and every delivered element equals the encoder output.
#[test]
fn criterion_6_uniformity_under_sender_crash() {
    let outcome = uniformity_matrix(5, 2, 240, 3);
    assert_eq!(outcome.cases, 52, "expected 4 writer prefixes x 13 server cases");
    announce(
        "6 uniformity",
        outcome.all_pass(),
        &format!(
            "{} crash cases, {} runs, {} failures{}",
            outcome.cases,
            outcome.runs,
            outcome.failures.len(),
            outcome
                .failures
                .first()
                .map(|f| format!("; first: {f}"))
                .unwrap_or_default()
        ),
    );
}

/// Criterion 7: at quiescence no non-faulty process retains value or coded
/// bytes in message-disperse state, across idle, normal, crashed-writer and
/// crashed-server runs.
#[test]
fn criterion_7_no_garbage() {
    // zero operations: vacuously clean
    let mut idle = SimConfig::new(Protocol::Soda, 5, 2);
    idle.writers = 0;
    idle.readers = 0;
    idle.value_size = 100;
    let art = run(&idle).expect("run completes");
    assert!(art.servers.iter().all(|s| s.md_residual.is_empty()));

    // single write to quiescence
    let mut single = SimConfig::new(Protocol::Soda, 5, 2);
    single.writers = 1;
    single.readers = 0;
    single.ops_per_client = 1;
    single.value_size = 100;
    single.seed = 5;
    let art = run(&single).expect("run completes");
    assert!(art.servers.iter().all(|s| s.md_residual.is_empty()));
    assert!(art.clients.iter().all(|c| !c.md_holds_value));

    // sweeps with crashes (crashed processes are exempt, everyone else clean)
    let mut runs = 2usize;
    for (idx, crash) in [
        vec![],
        vec![CrashSpec { pid: ProcessId::writer(1), point: CrashPoint::AfterValueSends(1) }],
        vec![
            CrashSpec { pid: ProcessId::server(1), point: CrashPoint::AfterValueSends(3) },
            CrashSpec { pid: ProcessId::server(5), point: CrashPoint::AtTime(20) },
        ],
    ]
    .into_iter()
    .enumerate()
    {
        let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
        cfg.writers = 2;
        cfg.readers = 2;
        cfg.ops_per_client = 3;
        cfg.value_size = 100;
        cfg.adversarial = true;
        cfg.crash = crash;
        cfg.seed = 200_000 + idx as u64 * 1000;
        let checks = CheckSet {
            atomicity: false,
            liveness: false,
            costs: false,
            latency: false,
            unregistration: false,
            no_garbage: true,
        };
        let agg = sweep(&cfg, 200, &checks);
        assert!(agg.all_pass(), "variant {idx}: {}", fail_lines(&agg));
        runs += agg.runs;
    }
    announce("7 no-garbage", true, &format!("{runs} runs with zero residual payload bytes"));
}

/// Criterion 8: 1000 runs in which every reader crashes immediately after
/// dispatching its phase-2 registration; every non-faulty server still ends
/// with an empty registered set.
#[test]
fn criterion_8_unregistration_after_reader_crash() {
    let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
    cfg.writers = 2;
    cfg.readers = 3;
    cfg.ops_per_client = 2;
    cfg.value_size = 100;
    // a reader's sends: n = 5 phase-1 queries, then f+1 = 3 registration
    // relays; crashing after send 8 is "immediately after phase 2"
    cfg.crash = (1..=3)
        .map(|r| CrashSpec { pid: ProcessId::reader(r), point: CrashPoint::AfterSends(8) })
        .collect();
    cfg.seed = 300_000;
    let checks = CheckSet { atomicity: true, ..checks_basic() };
    let agg = sweep(&cfg, 1000, &checks);
    assert!(agg.all_pass(), "{} of {} failed: {}", agg.failures.len(), agg.runs, fail_lines(&agg));

    // explicit final-state spot check on one artifact
    let art = run(&cfg).expect("run completes");
    for s in art.servers.iter().filter(|s| !s.crashed) {
        assert!(s.registered.is_empty(), "{} still has registered readers", s.pid);
    }
    announce(
        "8 unregistration",
        true,
        &format!("{} runs; crashed readers always unregistered everywhere", agg.runs),
    );
}

/// Criterion 9: SODA-err returns byte-exact written data under exhaustive
/// corruption-position sweeps at (7,2,1) and (9,2,2), with storage
/// n/(n-f-2e) and read cost within the raised bound.
#[test]
fn criterion_9_soda_err_correctness() {
    let mut runs = 0usize;

    let mut run_case = |n: usize, f: usize, e: usize, servers: &[usize], seed: u64| {
        let mut cfg = SimConfig::new(Protocol::SodaErr, n, f);
        cfg.e = e;
        cfg.writers = 1;
        cfg.readers = 1;
        cfg.ops_per_client = 1;
        cfg.value_size = 300;
        cfg.read_after_write = true;
        cfg.seed = seed;
        let read_op = OpId { client: ProcessId::reader(1), seq: 1 };
        cfg.error_schedule =
            servers.iter().map(|s| ErrEntry { server: *s, read: read_op }).collect();
        let art = run(&cfg).expect("run completes");

        let read = art
            .log
            .iter()
            .find(|r| r.kind == OpKind::Read)
            .expect("read logged");
        assert_eq!(
            read.bytes_exact,
            Some(true),
            "({n},{f},{e}) corrupt {servers:?}: read returned wrong bytes"
        );
        let report = check_run(&art, &checks_with_costs());
        assert!(report.all_pass(), "({n},{f},{e}) corrupt {servers:?}: {report}");

        // storage exactly n/(n-f-2e) in padded units
        let k = n - f - 2 * e;
        let stripe = 300usize.div_ceil(k);
        assert_eq!(art.storage_peak_bytes, (n * stripe) as u64);

        // zero-concurrency: exactly n elements, bound n/k x 1
        for (op, elems, window) in read_element_counts(&art) {
            assert_eq!(window.expect("window closes").delta_w, 0);
            assert_eq!(elems, n as u64, "{op}: expected one element per server");
        }
        runs += 1;
    };

    // (7,2,1): every single corruption position, three seeds each
    for server in 1..=7usize {
        for seed in 0..3u64 {
            run_case(7, 2, 1, &[server], 400_000 + server as u64 * 10 + seed);
        }
    }
    // baseline without corruption
    run_case(7, 2, 1, &[], 405_000);

    // (9,2,2): every corruption pair
    for pair in (1..=9usize).combinations(2) {
        run_case(9, 2, 2, &pair, 410_000 + pair[0] as u64 * 100 + pair[1] as u64);
    }
    run_case(9, 2, 2, &[], 415_000);

    announce(
        "9 soda-err",
        true,
        &format!("{runs} corruption-sweep runs, all reads byte-exact within budget"),
    );
}

/// Criterion 10: codec oracle equivalence for n <= 7: every k-subset
/// decodes, and every (f-erasure x e-error) pattern decodes through the
/// error-correcting path, with zero mismatches.
#[test]
fn criterion_10_codec_oracle() {
    let mut subset_checks = 0usize;
    for n in 1..=7usize {
        for k in 1..=n {
            let codec = Codec::new(CodeParams::new(n, k, 0).unwrap());
            let v = Value((0..53u8).map(|i| i.wrapping_mul(37).wrapping_add(n as u8)).collect());
            let frags = codec.encode(&v).unwrap();
            for subset in frags.iter().cloned().combinations(k) {
                assert_eq!(codec.decode(&subset).unwrap(), v, "n={n} k={k}");
                subset_checks += 1;
            }
        }
    }

    let mut pattern_checks = 0usize;
    for n in 3..=7usize {
        for f in 0..n {
            for e in 1..=n {
                let Some(k) = n.checked_sub(f + 2 * e) else { break };
                if k == 0 {
                    break;
                }
                let codec = Codec::new(CodeParams::new(n, k, e).unwrap());
                let v = Value((0..41u8).map(|i| i.wrapping_mul(11).wrapping_add(f as u8)).collect());
                let frags = codec.encode(&v).unwrap();
                for survivors in (0..n).combinations(n - f) {
                    for corrupt in survivors.iter().copied().combinations(e) {
                        let got: Vec<CodedElement> = survivors
                            .iter()
                            .map(|&i| {
                                let mut frag = frags[i].clone();
                                if corrupt.contains(&i) {
                                    for b in frag.payload.iter_mut() {
                                        *b = !*b;
                                    }
                                }
                                frag
                            })
                            .collect();
                        assert_eq!(
                            codec.decode_with_errors(&got).unwrap(),
                            v,
                            "n={n} f={f} e={e} corrupt={corrupt:?}"
                        );
                        pattern_checks += 1;
                    }
                }
            }
        }
    }
    announce(
        "10 codec-oracle",
        true,
        &format!("{subset_checks} k-subset decodes, {pattern_checks} erasure x error patterns"),
    );
}
