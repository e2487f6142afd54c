//! Single flow under i.i.d. random drop, stepped once per round trip.

use rand::Rng;

use super::rng::flow_stream;
use super::trace::{FlowCounters, RateTrace, TraceMeta};
use super::{LossReaction, ScenarioConfig, ScenarioKind, ENGINE_VERSION};
use crate::error::{invalid, Result};
use crate::flow::FlowState;

/// Runs a [`ScenarioKind::RandomDrop`] configuration.
///
/// Each round sends `floor(cwnd)` packets spread evenly over one RTT; every
/// packet is dropped independently with probability `p_loss`. Losses act
/// immediately. The trace records the rounds spent in each integer window
/// state after warm-up in `meta.cwnd_occupancy`.
pub fn run_random_drop(cfg: &ScenarioConfig) -> Result<RateTrace> {
    cfg.validate()?;
    if cfg.scenario != ScenarioKind::RandomDrop {
        return Err(invalid("scenario", "expected random-drop"));
    }
    let flow = cfg.flows[0];
    let p_loss = cfg.p_loss.unwrap_or(0.0);
    let rtt = flow.tcp.rtt_s;
    let segment = flow.tcp.mss_bytes.round() as u64;
    let n_bins = (cfg.duration_s / cfg.interval_s).round() as usize;
    let rounds = (cfg.duration_s / rtt).ceil() as u64;

    let mut rng = flow_stream(cfg.seed, 0);
    let mut state = FlowState::congestion_avoidance(&flow, 0.0);
    let mut bins = vec![0u64; n_bins];
    let mut occupancy: Vec<u64> = Vec::new();
    let mut counters = FlowCounters::default();

    'rounds: for r in 0..rounds {
        let start = r as f64 * rtt;
        let window = state.send_limit();
        if start >= cfg.warmup_s {
            let s = window as usize;
            if occupancy.len() <= s {
                occupancy.resize(s + 1, 0);
            }
            occupancy[s] += 1;
        }
        let mut reduced = false;
        for k in 0..window {
            let t = start + rtt * k as f64 / window as f64;
            if t >= cfg.duration_s {
                break 'rounds;
            }
            counters.sent += 1;
            if rng.gen::<f64>() < p_loss {
                counters.dropped += 1;
                counters.losses_detected += 1;
                if cfg.loss_reaction == LossReaction::PerLoss || !reduced {
                    state.on_loss(&flow, t);
                    counters.reductions += 1;
                    reduced = true;
                }
            } else {
                counters.delivered += 1;
                let bin = ((t / cfg.interval_s) as usize).min(n_bins - 1);
                bins[bin] += segment;
                state.on_delivered(&flow, 1, t);
            }
        }
    }
    counters.min_rtt_s = Some(rtt);
    counters.max_rtt_s = Some(rtt);

    Ok(RateTrace {
        interval_s: cfg.interval_s,
        start_s: 0.0,
        bytes: vec![bins],
        meta: TraceMeta {
            config: cfg.clone(),
            seed: cfg.seed,
            engine_version: ENGINE_VERSION.to_string(),
            counters: vec![counters],
            segment_bytes: vec![segment],
            max_queue_bytes: None,
            cwnd_occupancy: Some(occupancy),
            completion_times: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulas::{Flavor, TcpParams};

    fn tcp(flavor: Flavor) -> TcpParams {
        TcpParams::new(1514.0, 0.1, 2.0, flavor).unwrap()
    }

    #[test]
    fn lossless_run_grows_monotonically() {
        let mut cfg =
            ScenarioConfig::random_drop(tcp(Flavor::Reno), 0.0, 60.0, 3, LossReaction::PerLoss)
                .unwrap();
        cfg.warmup_s = 0.0;
        let t = run_random_drop(&cfg).unwrap();
        assert_eq!(t.meta.counters[0].dropped, 0);
        assert_eq!(t.meta.counters[0].reductions, 0);
        let r = t.rates_bps(0);
        for w in r.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(r.last().unwrap() > r.first().unwrap());
        t.validate().unwrap();
    }

    #[test]
    fn deterministic_for_equal_seeds() {
        let cfg = ScenarioConfig::random_drop(
            tcp(Flavor::Cubic),
            3.4e-4,
            900.0,
            11,
            LossReaction::PerWindow,
        )
        .unwrap();
        let a = run_random_drop(&cfg).unwrap();
        let b = run_random_drop(&cfg).unwrap();
        assert_eq!(a, b);
        let other = ScenarioConfig { seed: 12, ..cfg };
        assert_ne!(a.bytes, run_random_drop(&other).unwrap().bytes);
    }

    #[test]
    fn measured_loss_is_binomially_consistent() {
        let p = 1e-3;
        let cfg =
            ScenarioConfig::random_drop(tcp(Flavor::Reno), p, 3600.0, 5, LossReaction::PerLoss)
                .unwrap();
        let t = run_random_drop(&cfg).unwrap();
        let c = t.meta.counters[0];
        let n = c.sent as f64;
        let sigma = (p * (1.0 - p) / n).sqrt();
        let measured = crate::sim::measured_loss_ratio(&t.meta, 0);
        assert!(
            (measured - p).abs() < 3.0 * sigma,
            "{measured} vs {p} ± {sigma}"
        );
        assert!(c.is_conserved());
        t.validate().unwrap();
    }

    #[test]
    fn per_window_never_reduces_twice_in_a_round() {
        let cfg =
            ScenarioConfig::random_drop(tcp(Flavor::Reno), 0.05, 600.0, 9, LossReaction::PerWindow)
                .unwrap();
        let t = run_random_drop(&cfg).unwrap();
        let c = t.meta.counters[0];
        assert!(c.reductions < c.losses_detected);
        let per_loss = ScenarioConfig {
            loss_reaction: LossReaction::PerLoss,
            ..cfg
        };
        let c2 = run_random_drop(&per_loss).unwrap().meta.counters[0];
        assert_eq!(c2.reductions, c2.losses_detected);
    }

    #[test]
    fn monte_carlo_means_match_response_functions() {
        // Reno at 1.1e-4 (square-root law) and Cubic at 3.4e-4.
        for (flavor, p) in [(Flavor::Reno, 1.1e-4), (Flavor::Cubic, 3.4e-4)] {
            let params = tcp(flavor);
            let cfg =
                ScenarioConfig::random_drop(params, p, 43_200.0, 7, LossReaction::PerLoss).unwrap();
            let t = run_random_drop(&cfg).unwrap();
            let occ = t.meta.cwnd_occupancy.as_ref().unwrap();
            let total: u64 = occ.iter().sum();
            let mean = occ
                .iter()
                .enumerate()
                .map(|(s, &n)| s as f64 * n as f64)
                .sum::<f64>()
                / total as f64;
            let expected = crate::formulas::expected_cwnd(p, &params).unwrap();
            assert!(
                ((mean - expected) / expected).abs() < 0.10,
                "{flavor}: mean window {mean} vs {expected}"
            );
        }
    }
}
