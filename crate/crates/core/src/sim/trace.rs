use serde::{Deserialize, Serialize};

use super::ScenarioConfig;
use crate::error::{invalid, Error, Result};

/// Packet counters of one flow over a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight_end: u64,
    pub retransmits: u64,
    pub losses_detected: u64,
    pub reductions: u64,
    pub timeouts: u64,
    /// Smallest and largest send-to-ACK time observed, seconds.
    pub min_rtt_s: Option<f64>,
    pub max_rtt_s: Option<f64>,
}

impl FlowCounters {
    pub fn is_conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_flight_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub engine_version: String,
    pub counters: Vec<FlowCounters>,
    /// Segment size per flow, used to check byte totals against counters.
    pub segment_bytes: Vec<u64>,
    /// Peak bottleneck occupancy in bytes (bottleneck scenarios).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_queue_bytes: Option<u64>,
    /// Rounds spent with `floor(cwnd) = i`, after warm-up (random drop).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwnd_occupancy: Option<Vec<u64>>,
    /// Finite-flow completion times in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_times: Option<Vec<f64>>,
}

/// Bytes delivered per flow per fixed interval, starting at `start_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTrace {
    pub interval_s: f64,
    pub start_s: f64,
    /// `bytes[flow][k]` covers `[start + k·interval, start + (k+1)·interval)`.
    pub bytes: Vec<Vec<u64>>,
    pub meta: TraceMeta,
}

impl RateTrace {
    pub fn num_flows(&self) -> usize {
        self.bytes.len()
    }

    pub fn num_intervals(&self) -> usize {
        self.bytes.first().map_or(0, Vec::len)
    }

    /// Average bit rate of `flow` in each interval.
    pub fn rates_bps(&self, flow: usize) -> Vec<f64> {
        self.bytes[flow]
            .iter()
            .map(|&b| b as f64 * 8.0 / self.interval_s)
            .collect()
    }

    /// Drops the leading intervals that end at or before `warmup_s`.
    pub fn after_warmup(&self, warmup_s: f64) -> RateTrace {
        let skip = ((warmup_s - self.start_s) / self.interval_s)
            .ceil()
            .max(0.0) as usize;
        let skip = skip.min(self.num_intervals());
        RateTrace {
            interval_s: self.interval_s,
            start_s: self.start_s + skip as f64 * self.interval_s,
            bytes: self.bytes.iter().map(|b| b[skip..].to_vec()).collect(),
            meta: self.meta.clone(),
        }
    }

    /// The run's configured warm-up removed.
    pub fn steady_state(&self) -> RateTrace {
        self.after_warmup(self.meta.config.warmup_s)
    }

    pub fn total_bytes(&self, flow: usize) -> u64 {
        self.bytes[flow].iter().sum()
    }

    /// Delivered bytes of all flows over capacity for the covered span.
    pub fn utilization(&self, capacity_bps: f64) -> f64 {
        let span = self.num_intervals() as f64 * self.interval_s;
        if span == 0.0 {
            return 0.0;
        }
        let total: u64 = (0..self.num_flows()).map(|f| self.total_bytes(f)).sum();
        total as f64 * 8.0 / (capacity_bps * span)
    }

    /// Checks the trace against its counters.
    pub fn validate(&self) -> Result<()> {
        if !(self.interval_s > 0.0) {
            return Err(invalid("interval_s", "must be > 0"));
        }
        let n = self.meta.counters.len();
        if self.bytes.len() != n || self.meta.segment_bytes.len() != n {
            return Err(Error::CounterMismatch(format!(
                "{} flows in trace, {} counter sets, {} segment sizes",
                self.bytes.len(),
                n,
                self.meta.segment_bytes.len()
            )));
        }
        let len = self.num_intervals();
        for (f, series) in self.bytes.iter().enumerate() {
            if series.len() != len {
                return Err(Error::CounterMismatch(format!(
                    "flow {f} has {} intervals, expected {len}",
                    series.len()
                )));
            }
            let c = &self.meta.counters[f];
            let expected = c.delivered * self.meta.segment_bytes[f];
            let got: u64 = series.iter().sum();
            if got != expected {
                return Err(Error::CounterMismatch(format!(
                    "flow {f}: trace carries {got} bytes, counters say {expected}"
                )));
            }
            if !c.is_conserved() {
                return Err(Error::CounterMismatch(format!(
                    "flow {f}: sent {} != delivered {} + dropped {} + in flight {}",
                    c.sent, c.delivered, c.dropped, c.in_flight_end
                )));
            }
        }
        Ok(())
    }
}
