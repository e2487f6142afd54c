//! Deterministic, seedable simulation of TCP flows.
//!
//! Three scenarios are supported:
//!
//! * [`ScenarioKind::RandomDrop`]: one flow, no queue, every packet dropped
//!   independently with a fixed probability. Stepped once per RTT.
//! * [`ScenarioKind::SharedBottleneck`]: several long-lived flows through a
//!   tail-drop FIFO, simulated packet by packet.
//! * [`ScenarioKind::FiniteFlow`]: like the shared bottleneck, plus one flow
//!   that repeatedly transfers a fixed volume from slow start.
//!
//! Every run is a single-threaded event loop; identical configurations
//! produce bit-identical traces.

mod config;
mod packet;
mod random_drop;
pub mod rng;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::FlowConfig;
use crate::formulas::TcpParams;

pub use config::parse_config;
pub use packet::{run_finite_flow, run_shared_bottleneck, FiniteFlowRun};
pub use random_drop::run_random_drop;
pub use trace::{FlowCounters, RateTrace, TraceMeta};

pub const ENGINE_VERSION: &str = concat!("tcpspread-", env!("CARGO_PKG_VERSION"));

/// Default exclusion window for long-lived scenarios.
/// Warm-up for a run of `duration_s`; short runs keep everything.
pub fn default_warmup(duration_s: f64) -> f64 {
    if duration_s > DEFAULT_WARMUP_S {
        DEFAULT_WARMUP_S
    } else {
        0.0
    }
}

pub const DEFAULT_WARMUP_S: f64 = 300.0;
/// Default idle gap between finite-flow repetitions.
pub const DEFAULT_FINITE_GAP_S: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    RandomDrop,
    SharedBottleneck,
    FiniteFlow,
}

impl std::str::FromStr for ScenarioKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-drop" | "random_drop" => Ok(Self::RandomDrop),
            "shared" | "shared-bottleneck" | "shared_bottleneck" => Ok(Self::SharedBottleneck),
            "finite" | "finite-flow" | "finite_flow" => Ok(Self::FiniteFlow),
            other => Err(invalid("scenario", format!("unknown scenario `{other}`"))),
        }
    }
}

/// How detected losses translate into window reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossReaction {
    /// Every loss reduces the window.
    PerLoss,
    /// At most one reduction per window of data.
    PerWindow,
}

impl std::str::FromStr for LossReaction {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-loss" | "per_loss" | "perloss" => Ok(Self::PerLoss),
            "per-window" | "per_window" | "perwindow" => Ok(Self::PerWindow),
            other => Err(invalid("loss_reaction", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub capacity_bps: f64,
    pub buffer_bytes: u64,
    pub base_rtt_s: f64,
}

impl LinkSpec {
    /// Link with a bandwidth-delay-product buffer.
    pub fn with_bdp_buffer(capacity_bps: f64, base_rtt_s: f64) -> Self {
        Self {
            capacity_bps,
            buffer_bytes: (capacity_bps * base_rtt_s / 8.0).round() as u64,
            base_rtt_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_bps > 0.0 && self.capacity_bps.is_finite()) {
            return Err(invalid("capacity_bps", "must be > 0"));
        }
        if self.buffer_bytes == 0 {
            return Err(invalid("buffer_bytes", "must be > 0"));
        }
        if !(self.base_rtt_s > 0.0 && self.base_rtt_s.is_finite()) {
            return Err(invalid("base_rtt_s", "must be > 0"));
        }
        Ok(())
    }

    /// Largest queueing plus transmission delay a packet can see.
    pub fn max_queue_delay_s(&self) -> f64 {
        self.buffer_bytes as f64 * 8.0 / self.capacity_bps
    }
}

/// The repeatedly restarted flow of a [`ScenarioKind::FiniteFlow`] run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSpec {
    pub flow: FlowConfig,
    pub volume_bytes: u64,
    pub gap_s: f64,
    /// Stop after this many completions; `None` runs until `duration_s`.
    pub repetitions: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    /// Long-lived flows.
    pub flows: Vec<FlowConfig>,
    pub link: Option<LinkSpec>,
    pub p_loss: Option<f64>,
    pub duration_s: f64,
    pub seed: u64,
    pub loss_reaction: LossReaction,
    pub interval_s: f64,
    pub warmup_s: f64,
    pub finite: Option<FiniteSpec>,
}

impl ScenarioConfig {
    /// Single flow under i.i.d. random drop, starting at its expected window.
    pub fn random_drop(
        tcp: TcpParams,
        p_loss: f64,
        duration_s: f64,
        seed: u64,
        loss_reaction: LossReaction,
    ) -> Result<Self> {
        let initial = if p_loss > 0.0 {
            crate::formulas::expected_cwnd(p_loss, &tcp)?.max(crate::flow::MIN_CWND)
        } else {
            crate::flow::MIN_CWND
        };
        let cfg = Self {
            scenario: ScenarioKind::RandomDrop,
            flows: vec![FlowConfig::new(tcp, initial)?],
            link: None,
            p_loss: Some(p_loss),
            duration_s,
            seed,
            loss_reaction,
            interval_s: 1.0,
            warmup_s: default_warmup(duration_s),
            finite: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n` identical flows sharing `link`, each starting at its fair-share BDP.
    pub fn shared(
        tcp: TcpParams,
        n: usize,
        link: LinkSpec,
        duration_s: f64,
        seed: u64,
    ) -> Result<Self> {
        let flows = vec![FlowConfig::new(tcp, fair_share_cwnd(&tcp, &link, n))?; n];
        let cfg = Self {
            scenario: ScenarioKind::SharedBottleneck,
            flows,
            link: Some(link),
            p_loss: None,
            duration_s,
            seed,
            loss_reaction: LossReaction::PerWindow,
            interval_s: 1.0,
            warmup_s: default_warmup(duration_s),
            finite: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n_long` long-lived flows plus one finite flow of `volume_bytes`.
    pub fn finite(
        tcp: TcpParams,
        n_long: usize,
        link: LinkSpec,
        volume_bytes: u64,
        repetitions: Option<u32>,
        duration_s: f64,
        seed: u64,
    ) -> Result<Self> {
        let share = fair_share_cwnd(&tcp, &link, n_long + 1);
        let flows = vec![FlowConfig::new(tcp, share)?; n_long];
        let cfg = Self {
            scenario: ScenarioKind::FiniteFlow,
            flows,
            link: Some(link),
            p_loss: None,
            duration_s,
            seed,
            loss_reaction: LossReaction::PerWindow,
            interval_s: 1.0,
            warmup_s: default_warmup(duration_s),
            finite: Some(FiniteSpec {
                flow: FlowConfig::new(tcp, 10.0)?,
                volume_bytes,
                gap_s: DEFAULT_FINITE_GAP_S,
                repetitions,
            }),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration_s", "must be > 0"));
        }
        if !(self.interval_s > 0.0) {
            return Err(invalid("interval_s", "must be > 0"));
        }
        let ratio = self.duration_s / self.interval_s;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(invalid(
                "duration_s",
                "must be an integer multiple of interval_s",
            ));
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s < self.duration_s) {
            return Err(invalid("warmup_s", "must lie in [0, duration_s)"));
        }
        for f in &self.flows {
            f.validate()?;
        }
        match self.scenario {
            ScenarioKind::RandomDrop => {
                if self.flows.len() != 1 {
                    return Err(invalid("flows", "random drop uses exactly one flow"));
                }
                match self.p_loss {
                    Some(p) if (0.0..1.0).contains(&p) => {}
                    _ => return Err(invalid("p_loss", "random drop needs p_loss in [0, 1)")),
                }
            }
            ScenarioKind::SharedBottleneck | ScenarioKind::FiniteFlow => {
                let link = self
                    .link
                    .as_ref()
                    .ok_or_else(|| invalid("link", "bottleneck scenarios need a link"))?;
                link.validate()?;
                if self.scenario == ScenarioKind::SharedBottleneck && self.flows.is_empty() {
                    return Err(invalid("flows", "need at least one flow"));
                }
                for f in &self.flows {
                    if (f.tcp.mss_bytes as u64) as f64 > link.buffer_bytes as f64 {
                        return Err(invalid("buffer_bytes", "smaller than one segment"));
                    }
                }
            }
        }
        if self.scenario == ScenarioKind::FiniteFlow {
            let fin = self
                .finite
                .as_ref()
                .ok_or_else(|| invalid("finite", "finite-flow scenario needs a finite flow"))?;
            fin.flow.validate()?;
            if fin.volume_bytes == 0 {
                return Err(invalid("volume_bytes", "must be > 0"));
            }
            if !(fin.gap_s >= 0.0) {
                return Err(invalid("gap_s", "must be >= 0"));
            }
        }
        Ok(())
    }

    /// Number of flows that appear in the trace.
    pub fn trace_flows(&self) -> usize {
        self.flows.len() + usize::from(self.finite.is_some())
    }
}

/// Per-flow share of the bandwidth-delay product, in segments.
pub fn fair_share_cwnd(tcp: &TcpParams, link: &LinkSpec, n: usize) -> f64 {
    let bdp = link.capacity_bps * link.base_rtt_s / tcp.mss_bits();
    (bdp / n.max(1) as f64).max(crate::flow::MIN_CWND)
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: RateTrace,
    pub completion_times: Option<Vec<f64>>,
}

/// Runs any scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<SimOutput> {
    match cfg.scenario {
        ScenarioKind::RandomDrop => Ok(SimOutput {
            trace: run_random_drop(cfg)?,
            completion_times: None,
        }),
        ScenarioKind::SharedBottleneck => Ok(SimOutput {
            trace: run_shared_bottleneck(cfg)?,
            completion_times: None,
        }),
        ScenarioKind::FiniteFlow => {
            let r = run_finite_flow(cfg)?;
            Ok(SimOutput {
                trace: r.trace,
                completion_times: Some(r.completion_times),
            })
        }
    }
}

/// Dropped over sent packets for one flow of a completed run.
pub fn measured_loss_ratio(meta: &TraceMeta, flow: usize) -> f64 {
    let c = &meta.counters[flow];
    if c.sent == 0 {
        0.0
    } else {
        c.dropped as f64 / c.sent as f64
    }
}

/// Dropped over sent packets across all flows.
pub fn aggregate_loss_ratio(meta: &TraceMeta) -> f64 {
    let (d, s) = meta
        .counters
        .iter()
        .fold((0u64, 0u64), |(d, s), c| (d + c.dropped, s + c.sent));
    if s == 0 {
        0.0
    } else {
        d as f64 / s as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulas::Flavor;

    #[test]
    fn bdp_buffer() {
        let l = LinkSpec::with_bdp_buffer(20e6, 0.1);
        assert_eq!(l.buffer_bytes, 250_000);
        assert!((l.max_queue_delay_s() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let tcp = TcpParams::default();
        assert!(ScenarioConfig::random_drop(tcp, 1e-4, 0.0, 1, LossReaction::PerLoss).is_err());
        assert!(ScenarioConfig::random_drop(tcp, 1.0, 100.0, 1, LossReaction::PerLoss).is_err());
        assert!(ScenarioConfig::random_drop(tcp, 1e-4, 100.5, 1, LossReaction::PerLoss).is_err());
        let mut c =
            ScenarioConfig::random_drop(tcp, 1e-4, 600.0, 1, LossReaction::PerLoss).unwrap();
        c.flows.push(c.flows[0]);
        assert!(c.validate().is_err());
        let link = LinkSpec::with_bdp_buffer(20e6, 0.1);
        let mut s = ScenarioConfig::shared(tcp, 2, link, 600.0, 1).unwrap();
        s.link = None;
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::shared(tcp, 2, link, 600.0, 1).unwrap();
        s.link.as_mut().unwrap().buffer_bytes = 1000;
        assert!(s.validate().is_err());
    }

    #[test]
    fn fair_share_window() {
        let tcp = TcpParams::new(1514.0, 0.1, 2.0, Flavor::Reno).unwrap();
        let w = fair_share_cwnd(&tcp, &LinkSpec::with_bdp_buffer(20e6, 0.1), 2);
        assert!((w - 82.56).abs() < 0.01);
    }

    #[test]
    fn parses_names() {
        assert_eq!(
            "shared".parse::<ScenarioKind>().unwrap(),
            ScenarioKind::SharedBottleneck
        );
        assert_eq!(
            "per-loss".parse::<LossReaction>().unwrap(),
            LossReaction::PerLoss
        );
        assert!("bogus".parse::<ScenarioKind>().is_err());
    }
}
