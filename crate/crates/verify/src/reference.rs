//! Published reference numbers the reproduction targets are compared with.

use serde::Serialize;

/// One quantile row in Mbit/s.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuantileRow {
    pub label: &'static str,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub mean: f64,
}

const fn row(label: &'static str, q05: f64, q50: f64, q95: f64, mean: f64) -> QuantileRow {
    QuantileRow {
        label,
        q05,
        q50,
        q95,
        mean,
    }
}

pub const RENO_ROWS: [QuantileRow; 5] = [
    row("random drop (numeric)", 4.7, 10.0, 19.0, 10.7),
    row("random drop (experiment)", 4.9, 10.0, 18.7, 10.7),
    row("1 of 2 flows", 5.0, 10.0, 15.0, 10.0),
    row("1 of 3 flows", 4.7, 9.6, 16.0, 9.9),
    row("1 of 10 flows", 4.5, 8.9, 16.6, 9.5),
];

pub const CUBIC_ROWS: [QuantileRow; 4] = [
    row("random drop (experiment)", 5.0, 9.4, 20.0, 10.6),
    row("1 of 2 flows", 6.5, 10.0, 13.6, 10.0),
    row("1 of 3 flows", 6.3, 9.8, 14.6, 10.0),
    row("1 of 10 flows", 6.1, 9.8, 16.0, 10.3),
];

/// Loss, sawtooth and averaging figures for one flavor and RTT.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AveragingRow {
    pub flavor: &'static str,
    pub rtt_s: f64,
    pub theory_loss: f64,
    pub measured_loss: f64,
    pub sawtooth_s: f64,
    pub convergence_s: f64,
    pub ratio: f64,
}

pub const AVERAGING_ROWS: [AveragingRow; 4] = [
    AveragingRow {
        flavor: "reno",
        rtt_s: 0.01,
        theory_loss: 3.8e-3,
        measured_loss: 3.3e-3,
        sawtooth_s: 0.37,
        convergence_s: 4.0,
        ratio: 11.0,
    },
    AveragingRow {
        flavor: "reno",
        rtt_s: 0.1,
        theory_loss: 3.8e-5,
        measured_loss: 4.0e-5,
        sawtooth_s: 29.5,
        convergence_s: 220.0,
        ratio: 7.5,
    },
    AveragingRow {
        flavor: "cubic",
        rtt_s: 0.01,
        theory_loss: 6.2e-4,
        measured_loss: 2.8e-3,
        sawtooth_s: 0.42,
        convergence_s: 9.5,
        ratio: 22.0,
    },
    AveragingRow {
        flavor: "cubic",
        rtt_s: 0.1,
        theory_loss: 2.9e-4,
        measured_loss: 2.5e-4,
        sawtooth_s: 4.7,
        convergence_s: 130.0,
        ratio: 27.0,
    },
];

/// Operating point of the random-drop experiments.
pub const P_OPERATING: f64 = 1.1e-4;
/// Target per-flow rate used throughout.
pub const TARGET_RATE_BPS: f64 = 10e6;
/// Finite-flow completion-time tails: 5 % finish faster, 5 % slower.
pub const COMPLETION_Q05_S: f64 = 8.0;
pub const COMPLETION_Q95_S: f64 = 22.0;
