//! Congestion-control state machines used by the simulator.
//!
//! Windows are fractional segment counts. The receiver acknowledges every
//! `a`-th segment and each acknowledgement event adds `1/cwnd` in Reno
//! congestion avoidance, so a full window of ACKs grows the window by `1/a`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::formulas::{Flavor, TcpParams};

pub const MIN_CWND: f64 = 2.0;

/// Cubic scaling constant `C` (segments / s³).
pub const CUBIC_C: f64 = 0.4;
/// Cubic multiplicative decrease factor.
pub const CUBIC_BETA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub tcp: TcpParams,
    pub initial_cwnd: f64,
}

impl FlowConfig {
    pub fn new(tcp: TcpParams, initial_cwnd: f64) -> Result<Self> {
        let cfg = Self { tcp, initial_cwnd };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn flavor(&self) -> Flavor {
        self.tcp.flavor
    }

    pub fn validate(&self) -> Result<()> {
        self.tcp.validate()?;
        if !(self.initial_cwnd >= MIN_CWND && self.initial_cwnd.is_finite()) {
            return Err(invalid(
                "initial_cwnd",
                format!("must be >= {MIN_CWND}, got {}", self.initial_cwnd),
            ));
        }
        Ok(())
    }
}

/// Dynamic congestion-control state of one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub cwnd: f64,
    /// Plateau of the current cubic epoch.
    pub w_max: f64,
    /// Window just before the last reduction (Cubic).
    pub w_last_max: f64,
    /// Time of the last reduction in seconds (Cubic).
    pub epoch_start: f64,
    /// Emulated Reno window (Cubic).
    pub reno_estimate: f64,
    pub slow_start: bool,
    /// Segments delivered but not yet turned into an ACK event.
    pub ack_credit: f64,
    pub bytes_delivered: u64,
    pub next_seq: u64,
    pub highest_acked: u64,
}

impl FlowState {
    /// Starts in congestion avoidance with the Cubic curve at its plateau.
    pub fn congestion_avoidance(cfg: &FlowConfig, now: f64) -> Self {
        let w = cfg.initial_cwnd;
        Self {
            cwnd: w,
            w_max: w,
            w_last_max: w,
            epoch_start: now - cubic_plateau_time(w),
            reno_estimate: w,
            slow_start: false,
            ack_credit: 0.0,
            bytes_delivered: 0,
            next_seq: 0,
            highest_acked: 0,
        }
    }

    /// Starts in slow start; it ends at the first loss.
    pub fn slow_start(cfg: &FlowConfig, now: f64) -> Self {
        Self {
            slow_start: true,
            epoch_start: now,
            ..Self::congestion_avoidance(cfg, now)
        }
    }

    /// Segments that may be outstanding.
    pub fn send_limit(&self) -> u64 {
        self.cwnd.floor() as u64
    }

    /// Credits `segments` newly delivered segments at time `now`.
    pub fn on_delivered(&mut self, cfg: &FlowConfig, segments: u64, now: f64) {
        self.bytes_delivered += segments * cfg.tcp.mss_bytes as u64;
        self.ack_credit += segments as f64;
        let a = cfg.tcp.ack_ratio;
        while self.ack_credit >= a {
            self.ack_credit -= a;
            self.on_ack_event(cfg, now);
        }
    }

    fn on_ack_event(&mut self, cfg: &FlowConfig, now: f64) {
        if self.slow_start {
            // Growth counts acknowledged segments, not ACKs.
            self.cwnd += cfg.tcp.ack_ratio;
            return;
        }
        match cfg.tcp.flavor {
            Flavor::Reno => reno_on_ack(self, 1),
            Flavor::Cubic => cubic_on_ack(self, now, cfg.tcp.ack_ratio),
        }
    }

    /// Ends slow start without a reduction; Cubic grows from the current
    /// window as a fresh plateau.
    pub fn leave_slow_start(&mut self, now: f64) {
        self.slow_start = false;
        self.w_max = self.cwnd;
        self.w_last_max = self.cwnd;
        self.epoch_start = now - cubic_plateau_time(self.cwnd);
        self.reno_estimate = self.cwnd;
    }

    pub fn on_loss(&mut self, cfg: &FlowConfig, now: f64) {
        self.slow_start = false;
        match cfg.tcp.flavor {
            Flavor::Reno => reno_on_loss(self),
            Flavor::Cubic => cubic_on_loss(self, now),
        }
    }
}

/// Applies `ack_events` Reno increments of `1/cwnd` each.
pub fn reno_on_ack(state: &mut FlowState, ack_events: u64) {
    for _ in 0..ack_events {
        state.cwnd += 1.0 / state.cwnd;
    }
}

pub fn reno_on_loss(state: &mut FlowState) {
    state.cwnd = (state.cwnd / 2.0).max(MIN_CWND);
}

/// Time from a reduction until the cubic curve returns to `w_max`.
pub fn cubic_plateau_time(w_max: f64) -> f64 {
    (w_max * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt()
}

/// Growth of the emulated Reno window per window of ACKs.
pub const RENO_FRIENDLY_GAIN: f64 = 3.0 * (1.0 - CUBIC_BETA) / (1.0 + CUBIC_BETA);

/// Cubic curve `t` seconds after a reduction from `w_max`.
pub fn cubic_window(t_since_epoch: f64, w_max: f64) -> f64 {
    let d = t_since_epoch - cubic_plateau_time(w_max);
    CUBIC_C * d * d * d + w_max
}

/// One ACK event covering `acked_segments` segments.
///
/// The emulated Reno window starts at the window of the epoch start and
/// grows by `RENO_FRIENDLY_GAIN / cwnd` per ACK, so delayed ACKs slow it
/// down like they slow Reno. The
/// target is the larger of it and the cubic curve; the window closes the
/// gap to the target by `(target - cwnd) / cwnd` per acknowledged segment,
/// and above the target creeps up by `1/(100 cwnd)`.
pub fn cubic_on_ack(state: &mut FlowState, now: f64, acked_segments: f64) {
    let t = now - state.epoch_start;
    state.reno_estimate += RENO_FRIENDLY_GAIN / state.cwnd;
    let target = cubic_window(t, state.w_max).max(state.reno_estimate);
    if target > state.cwnd {
        state.cwnd += acked_segments * (target - state.cwnd) / state.cwnd;
        state.cwnd = state.cwnd.min(target);
    } else {
        state.cwnd += acked_segments / (100.0 * state.cwnd);
    }
}

/// Multiplicative decrease. A flow that loses below its previous peak
/// also lowers its plateau to `(1 + β)/2` of the current window, as Linux
/// does with fast convergence enabled.
pub fn cubic_on_loss(state: &mut FlowState, now: f64) {
    state.w_max = if state.cwnd < state.w_last_max {
        state.cwnd * (1.0 + CUBIC_BETA) / 2.0
    } else {
        state.cwnd
    };
    state.w_last_max = state.cwnd;
    state.cwnd = (CUBIC_BETA * state.cwnd).max(MIN_CWND);
    state.epoch_start = now;
    state.reno_estimate = state.cwnd;
}

/// Hybrid slow-start exit detection as in Linux Cubic.
///
/// Slow start ends early when the minimum RTT of the first ACKs of a round
/// exceeds the connection's minimum by a clamped margin, or when closely
/// spaced ACKs of one round span more than half the minimum RTT.
#[derive(Debug, Clone, PartialEq)]
pub struct HyStart {
    delay_min: Option<f64>,
    round_end: u64,
    round_start: f64,
    last_ack: f64,
    samples: u32,
    curr_rtt: f64,
}

impl Default for HyStart {
    fn default() -> Self {
        Self::new()
    }
}

impl HyStart {
    pub const LOW_WINDOW: f64 = 16.0;
    pub const MIN_SAMPLES: u32 = 8;
    pub const ACK_DELTA_S: f64 = 0.002;

    pub fn new() -> Self {
        Self {
            delay_min: None,
            round_end: 0,
            round_start: 0.0,
            last_ack: 0.0,
            samples: 0,
            curr_rtt: f64::INFINITY,
        }
    }

    fn delay_threshold(delay_min: f64) -> f64 {
        (delay_min / 16.0).clamp(0.004, 0.016)
    }

    /// Feeds one ACK for transmission `acked_tx`; `next_tx` is the next
    /// transmission number to be used. Returns true when slow start should
    /// end.
    pub fn on_ack(&mut self, now: f64, rtt: f64, acked_tx: u64, next_tx: u64, cwnd: f64) -> bool {
        let delay_min = self.delay_min.map_or(rtt, |d| d.min(rtt));
        self.delay_min = Some(delay_min);
        if acked_tx >= self.round_end {
            self.round_end = next_tx;
            self.round_start = now;
            self.last_ack = now;
            self.samples = 0;
            self.curr_rtt = f64::INFINITY;
        }
        if cwnd < Self::LOW_WINDOW {
            return false;
        }
        let mut found = false;
        if now - self.last_ack <= Self::ACK_DELTA_S {
            self.last_ack = now;
            found |= now - self.round_start > delay_min / 2.0;
        }
        if self.samples < Self::MIN_SAMPLES {
            self.curr_rtt = self.curr_rtt.min(rtt);
            self.samples += 1;
        } else {
            found |= self.curr_rtt > delay_min + Self::delay_threshold(delay_min);
        }
        found
    }
}
