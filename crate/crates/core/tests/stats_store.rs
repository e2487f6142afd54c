use std::fs;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcpspread::chain::{distribution_stats, rate_distribution, solve, ChainSpec};
use tcpspread::sim::{
    run_random_drop, run_shared_bottleneck, FlowCounters, LinkSpec, LossReaction, RateTrace,
    ScenarioConfig, TraceMeta, ENGINE_VERSION,
};
use tcpspread::stats::{
    histogram, reaggregate, reaggregated_bytes, sawtooth_interval, stddev_vs_interval, summary,
    DEFAULT_INTERVALS_S,
};
use tcpspread::store::{read_trace, run_id, trace_csv, write_trace};
use tcpspread::{Error, Flavor, TcpParams};

fn tcp() -> TcpParams {
    TcpParams::new(1514.0, 0.1, 2.0, Flavor::Reno).unwrap()
}

/// A synthetic trace with consistent counters.
fn synthetic(bytes: Vec<Vec<u64>>, segment: u64) -> RateTrace {
    let cfg = ScenarioConfig::random_drop(tcp(), 1e-4, 600.0, 1, LossReaction::PerLoss).unwrap();
    let counters = bytes
        .iter()
        .map(|b| {
            let d = b.iter().sum::<u64>() / segment;
            FlowCounters {
                sent: d,
                delivered: d,
                ..Default::default()
            }
        })
        .collect();
    RateTrace {
        interval_s: 1.0,
        start_s: 0.0,
        meta: TraceMeta {
            config: cfg,
            seed: 1,
            engine_version: ENGINE_VERSION.into(),
            counters,
            segment_bytes: vec![segment; bytes.len()],
            max_queue_bytes: None,
            cwnd_occupancy: None,
            completion_times: None,
        },
        bytes,
    }
}

#[test]
fn reaggregation_examples() {
    let constant = synthetic(vec![vec![1_250_000; 60]], 1);
    for &t in &[1.0, 4.0, 30.0] {
        let s = reaggregate(&constant, 0, t).unwrap();
        assert!(s.samples.iter().all(|&x| (x - 10e6).abs() < 1e-6));
    }
    let alternating: Vec<u64> = (0..10)
        .map(|i| if i % 2 == 0 { 625_000 } else { 1_875_000 })
        .collect();
    let t = synthetic(vec![alternating], 1);
    let s = reaggregate(&t, 0, 2.0).unwrap();
    assert_eq!(s.samples, vec![10e6; 5]);
    assert!(matches!(
        reaggregate(&t, 0, 1.5),
        Err(Error::IntervalMismatch { .. })
    ));
    // 12 h at 600 s after a 300 s warm-up.
    let long = synthetic(vec![vec![1; 43_200]], 1).after_warmup(300.0);
    assert_eq!(reaggregate(&long, 0, 600.0).unwrap().len(), 71);
}

#[test]
fn stddev_scales_like_clt_for_independent_intervals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bytes: Vec<u64> = (0..200_000).map(|_| rng.gen_range(0..2_500_000)).collect();
    let t = synthetic(vec![bytes], 1);
    let curve = stddev_vs_interval(&t, 0, &[1.0, 4.0, 16.0]).unwrap();
    let r4 = curve[0].1 / curve[1].1;
    let r16 = curve[0].1 / curve[2].1;
    assert!((r4 - 2.0).abs() < 0.05, "{r4}");
    assert!((r16 - 4.0).abs() < 0.15, "{r16}");
}

#[test]
fn sawtooth_reconstruction_matches_reference_rows() {
    let rows = [
        (3.3e-3, 0.37),
        (4.0e-5, 29.5),
        (2.8e-3, 0.42),
        (2.5e-4, 4.7),
    ];
    for (p, expected) in rows {
        let got = sawtooth_interval(p, 10e6, 1514.0).unwrap();
        assert!((got - expected).abs() / expected < 0.10, "p={p}: {got}");
    }
}

#[test]
fn random_drop_summary_matches_chain() {
    let p = 1.1e-4;
    let cfg = ScenarioConfig::random_drop(tcp(), p, 43_200.0, 21, LossReaction::PerLoss).unwrap();
    let t = run_random_drop(&cfg).unwrap().steady_state();
    let s = summary(&t.rates_bps(0)).unwrap();
    assert!(t.num_intervals() >= 42_900);
    let chain = distribution_stats(&rate_distribution(
        &solve(&ChainSpec::new(p, &tcp(), None).unwrap()).unwrap(),
    ));
    for (a, b) in [
        (s.mean, chain.mean),
        (s.q05, chain.q05),
        (s.q50, chain.q50),
        (s.q95, chain.q95),
    ] {
        assert!((a - b).abs() / b < 0.10, "{a} vs {b}");
    }
    // The density peaks below the mean.
    let h = histogram(&t.rates_bps(0), 1e6).unwrap();
    let peak = h.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    assert!(peak < 10e6 && peak > 5e6, "{peak}");
    // Longer intervals never add spread beyond noise.
    let curve = stddev_vs_interval(&t, 0, &DEFAULT_INTERVALS_S).unwrap();
    for w in curve.windows(2) {
        assert!(w[1].1 <= w[0].1 * 1.05, "{curve:?}");
    }
}

#[test]
fn trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        ScenarioConfig::shared(tcp(), 2, LinkSpec::with_bdp_buffer(20e6, 0.1), 120.0, 3).unwrap();
    let t = run_shared_bottleneck(&cfg).unwrap();
    let rec = write_trace(&t, dir.path()).unwrap();
    assert_eq!(rec.run_id, run_id(&cfg, 3, ENGINE_VERSION));
    let back = read_trace(&rec.trace_path).unwrap();
    assert_eq!(back.trace, t);
    assert!(back.warnings.is_empty());

    // Same config and seed: byte-identical files.
    let again = run_shared_bottleneck(&cfg).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let rec2 = write_trace(&again, dir2.path()).unwrap();
    assert_eq!(
        fs::read(&rec.trace_path).unwrap(),
        fs::read(&rec2.trace_path).unwrap()
    );
}

#[test]
fn csv_layout() {
    let t = synthetic(vec![vec![10, 20, 30], vec![1, 2, 3]], 1);
    let csv = trace_csv(&t);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "t_end_s,flow_id,bytes");
    assert_eq!(lines[1], "1,0,10");
    assert_eq!(lines[2], "1,1,1");
    assert_eq!(lines[6], "3,1,3");
}

#[test]
fn read_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let t = synthetic(vec![vec![10, 20, 30]], 1);
    let rec = write_trace(&t, dir.path()).unwrap();

    // Truncated: the last row is gone.
    let text = fs::read_to_string(&rec.trace_path).unwrap();
    let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    fs::write(&rec.trace_path, cut).unwrap();
    match read_trace(&rec.trace_path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    fs::write(&rec.trace_path, "t_end_s,flow_id,bytes\n1,0,10\n2,0,x\n").unwrap();
    match read_trace(&rec.trace_path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }

    fs::remove_file(&rec.meta_path).unwrap();
    match read_trace(&rec.trace_path) {
        Err(Error::MissingMetadata(p)) => assert_eq!(p, rec.meta_path),
        other => panic!("{other:?}"),
    }
}

#[test]
fn version_mismatch_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = synthetic(vec![vec![10, 20]], 1);
    t.meta.engine_version = "tcpspread-0.0.0".into();
    let rec = write_trace(&t, dir.path()).unwrap();
    let back = read_trace(&rec.trace_path).unwrap();
    assert_eq!(back.warnings.len(), 1);
    assert_eq!(back.trace, t);
}

#[test]
fn empty_trace_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let t = synthetic(vec![vec![], vec![]], 1);
    let rec = write_trace(&t, dir.path()).unwrap();
    let back = read_trace(&rec.trace_path).unwrap();
    assert_eq!(back.trace.num_intervals(), 0);
    assert!(matches!(
        summary(&back.trace.rates_bps(0)),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn counter_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = synthetic(vec![vec![10, 20]], 1);
    t.meta.counters[0].delivered += 1;
    t.meta.counters[0].sent += 1;
    let rec = write_trace(&t, dir.path()).unwrap();
    assert!(matches!(
        read_trace(&rec.trace_path),
        Err(Error::CounterMismatch(_))
    ));
}

proptest! {
    #[test]
    fn reaggregation_keeps_bytes(
        bytes in prop::collection::vec(0u64..5_000_000, 0..400),
        k in 1usize..50,
    ) {
        let t = synthetic(vec![bytes.clone()], 1);
        let s = reaggregate(&t, 0, k as f64).unwrap();
        prop_assert_eq!(s.len(), bytes.len() / k);
        let kept: u64 = bytes[..s.len() * k].iter().sum();
        prop_assert_eq!(reaggregated_bytes(&t, 0, k as f64).unwrap(), kept);
        let back: f64 = s.samples.iter().map(|x| x * k as f64 / 8.0).sum();
        prop_assert!((back - kept as f64).abs() < 1e-6 * (kept as f64 + 1.0));
    }

    #[test]
    fn histogram_has_unit_mass(xs in prop::collection::vec(0.0f64..3e7, 1..500), w in 1e3f64..5e6) {
        let h = histogram(&xs, w).unwrap();
        let mass: f64 = h.iter().map(|(_, d)| d * w).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn summary_quantiles_are_samples(xs in prop::collection::vec(0.0f64..1e8, 1..300)) {
        let s = summary(&xs).unwrap();
        for q in [s.q05, s.q50, s.q95] {
            prop_assert!(xs.contains(&q));
        }
        prop_assert!(s.q05 <= s.q50 && s.q50 <= s.q95);
        prop_assert!(s.stddev >= 0.0);
    }

    #[test]
    fn run_id_ignores_reserialization(seed in any::<u64>()) {
        let cfg = ScenarioConfig::random_drop(tcp(), 1e-4, 600.0, seed, LossReaction::PerLoss).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(run_id(&cfg, seed, ENGINE_VERSION), run_id(&back, seed, ENGINE_VERSION));
        prop_assert_ne!(run_id(&cfg, seed, ENGINE_VERSION), run_id(&cfg, seed ^ 1, ENGINE_VERSION));
    }
}
