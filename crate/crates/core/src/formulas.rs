//! Steady-state TCP response functions.
//!
//! Square-root law for Reno with delayed acknowledgements, the Cubic response
//! function, and their inversions. Rates are in bit/s, windows in segments,
//! times in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Wire size of one full Ethernet frame; used as the segment size throughout.
pub const DEFAULT_MSS_BYTES: f64 = 1514.0;

/// Segments per acknowledgement for a receiver with delayed ACKs.
pub const DEFAULT_ACK_RATIO: f64 = 2.0;

/// Cubic response-function constant (window in segments, RTT in seconds).
pub const CUBIC_RESPONSE_COEFF: f64 = 1.17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Reno,
    Cubic,
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flavor::Reno => f.write_str("reno"),
            Flavor::Cubic => f.write_str("cubic"),
        }
    }
}

impl std::str::FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reno" => Ok(Flavor::Reno),
            "cubic" => Ok(Flavor::Cubic),
            other => Err(invalid("flavor", format!("unknown flavor `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcpParams {
    pub mss_bytes: f64,
    pub rtt_s: f64,
    pub ack_ratio: f64,
    pub flavor: Flavor,
}

impl Default for TcpParams {
    fn default() -> Self {
        Self {
            mss_bytes: DEFAULT_MSS_BYTES,
            rtt_s: 0.1,
            ack_ratio: DEFAULT_ACK_RATIO,
            flavor: Flavor::Reno,
        }
    }
}

impl TcpParams {
    pub fn new(mss_bytes: f64, rtt_s: f64, ack_ratio: f64, flavor: Flavor) -> Result<Self> {
        let p = Self {
            mss_bytes,
            rtt_s,
            ack_ratio,
            flavor,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mss_bytes > 0.0 && self.mss_bytes.is_finite()) {
            return Err(invalid(
                "mss_bytes",
                format!("must be > 0, got {}", self.mss_bytes),
            ));
        }
        if !(self.rtt_s > 0.0 && self.rtt_s.is_finite()) {
            return Err(invalid("rtt_s", format!("must be > 0, got {}", self.rtt_s)));
        }
        if !(self.ack_ratio >= 1.0 && self.ack_ratio.is_finite()) {
            return Err(invalid(
                "ack_ratio",
                format!("must be >= 1, got {}", self.ack_ratio),
            ));
        }
        Ok(())
    }

    pub fn mss_bits(&self) -> f64 {
        self.mss_bytes * 8.0
    }
}

fn check_probability(p_loss: f64) -> Result<()> {
    if p_loss > 0.0 && p_loss <= 1.0 {
        Ok(())
    } else {
        Err(invalid(
            "p_loss",
            format!("must lie in (0, 1], got {p_loss}"),
        ))
    }
}

/// Bit rate of a window-limited flow: `mss · cwnd / rtt`.
pub fn flow_rate(cwnd: f64, p: &TcpParams) -> f64 {
    p.mss_bits() * cwnd / p.rtt_s
}

/// Expected Reno window under i.i.d. loss, `sqrt(3 / (2a)) / sqrt(p_loss)`.
pub fn reno_expected_cwnd(p_loss: f64, ack_ratio: f64) -> Result<f64> {
    check_probability(p_loss)?;
    if !(ack_ratio >= 1.0) {
        return Err(invalid(
            "ack_ratio",
            format!("must be >= 1, got {ack_ratio}"),
        ));
    }
    Ok((3.0 / (2.0 * ack_ratio)).sqrt() / p_loss.sqrt())
}

pub fn reno_expected_rate(p_loss: f64, p: &TcpParams) -> Result<f64> {
    Ok(flow_rate(reno_expected_cwnd(p_loss, p.ack_ratio)?, p))
}

/// Loss probability at which Reno settles to `target_bps`.
///
/// Fails with [`Error::UnreachableRate`] when the required probability
/// exceeds one, i.e. the rate is below what a minimal window can sustain.
pub fn reno_required_loss(target_bps: f64, p: &TcpParams) -> Result<f64> {
    if !(target_bps > 0.0) {
        return Err(invalid(
            "target_rate",
            format!("must be > 0, got {target_bps}"),
        ));
    }
    let cwnd = target_bps * p.rtt_s / p.mss_bits();
    let p_loss = 3.0 / (2.0 * p.ack_ratio) / (cwnd * cwnd);
    if p_loss > 1.0 {
        return Err(Error::UnreachableRate { target_bps, p_loss });
    }
    Ok(p_loss)
}

/// Expected Cubic window, `1.17 · (rtt / p_loss)^(3/4)` with `rtt` in seconds.
pub fn cubic_expected_cwnd(p_loss: f64, rtt_s: f64) -> Result<f64> {
    check_probability(p_loss)?;
    if !(rtt_s > 0.0) {
        return Err(invalid("rtt_s", format!("must be > 0, got {rtt_s}")));
    }
    Ok(CUBIC_RESPONSE_COEFF * (rtt_s / p_loss).powf(0.75))
}

pub fn cubic_expected_rate(p_loss: f64, p: &TcpParams) -> Result<f64> {
    Ok(flow_rate(cubic_expected_cwnd(p_loss, p.rtt_s)?, p))
}

pub fn cubic_required_loss(target_bps: f64, p: &TcpParams) -> Result<f64> {
    if !(target_bps > 0.0) {
        return Err(invalid(
            "target_rate",
            format!("must be > 0, got {target_bps}"),
        ));
    }
    let cwnd = target_bps * p.rtt_s / p.mss_bits();
    let p_loss = p.rtt_s / (cwnd / CUBIC_RESPONSE_COEFF).powf(4.0 / 3.0);
    if p_loss > 1.0 {
        return Err(Error::UnreachableRate { target_bps, p_loss });
    }
    Ok(p_loss)
}

/// Expected window for the given flavor at loss probability `p_loss`.
pub fn expected_cwnd(p_loss: f64, p: &TcpParams) -> Result<f64> {
    match p.flavor {
        Flavor::Reno => reno_expected_cwnd(p_loss, p.ack_ratio),
        Flavor::Cubic => cubic_expected_cwnd(p_loss, p.rtt_s),
    }
}

pub fn required_loss(target_bps: f64, p: &TcpParams) -> Result<f64> {
    match p.flavor {
        Flavor::Reno => reno_required_loss(target_bps, p),
        Flavor::Cubic => cubic_required_loss(target_bps, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_params() -> TcpParams {
        TcpParams::new(1514.0, 0.1, 2.0, Flavor::Reno).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn flow_rate_examples() {
        let p = paper_params();
        // 82.6 * 1514 * 8 / 0.1
        assert!(rel(flow_rate(82.6, &p), 10_004_512.0) < 1e-12);
        let unit = TcpParams::new(1514.0, 1.0, 2.0, Flavor::Reno).unwrap();
        assert_eq!(flow_rate(1.0, &unit), 12_112.0);
        assert_eq!(flow_rate(0.5, &unit), 6_056.0);
    }

    #[test]
    fn flow_rate_is_linear_in_cwnd_and_inverse_rtt() {
        let a = TcpParams::new(1000.0, 0.25, 2.0, Flavor::Reno).unwrap();
        let b = TcpParams { rtt_s: 0.5, ..a };
        assert_eq!(flow_rate(8.0, &a), 2.0 * flow_rate(4.0, &a));
        assert_eq!(flow_rate(8.0, &a), 2.0 * flow_rate(8.0, &b));
    }

    #[test]
    fn reno_expected_cwnd_examples() {
        assert!(
            rel(
                reno_expected_cwnd(1.1e-4, 2.0).unwrap(),
                (0.75f64 / 1.1e-4).sqrt()
            ) < 1e-14
        );
        assert!((reno_expected_cwnd(1.1e-4, 2.0).unwrap() - 82.6).abs() < 0.05);
        assert!((reno_expected_cwnd(3.0 / 8.0, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!((reno_expected_cwnd(0.75, 1.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn probability_domain_is_enforced() {
        assert!(reno_expected_cwnd(0.0, 2.0).is_err());
        assert!(reno_expected_cwnd(1.5, 2.0).is_err());
        assert!(reno_expected_cwnd(-1e-3, 2.0).is_err());
        assert!(cubic_expected_cwnd(0.0, 0.1).is_err());
        assert!(reno_expected_cwnd(1.0, 2.0).is_ok());
    }

    #[test]
    fn reno_expected_rate_examples() {
        let p = paper_params();
        let r = reno_expected_rate(1.1e-4, &p).unwrap();
        assert!(rel(r, 10e6) < 0.02, "{r}");
        let r4 = reno_expected_rate(4.4e-4, &p).unwrap();
        assert!(rel(r4, r / 2.0) < 1e-12);
        let unit = TcpParams::new(1514.0, 1.0, 2.0, Flavor::Reno).unwrap();
        let r = reno_expected_rate(3.0 / 8.0, &unit).unwrap();
        assert!(rel(r, 2f64.sqrt() * 12_112.0) < 1e-14);
    }

    #[test]
    fn reno_required_loss_targets() {
        let p = paper_params();
        let p10 = reno_required_loss(10e6, &p).unwrap();
        assert!(rel(p10, 1.1e-4) < 0.05, "{p10}");
        let p20 = reno_required_loss(20e6, &p).unwrap();
        assert!(rel(p20, p10 / 4.0) < 1e-12);
        assert!(matches!(
            reno_required_loss(1.0, &p),
            Err(Error::UnreachableRate { .. })
        ));
        assert!(reno_required_loss(0.0, &p).is_err());
    }

    #[test]
    fn cubic_expected_cwnd_examples() {
        let w = cubic_expected_cwnd(3.4e-4, 0.1).unwrap();
        assert!((w - 83.0).abs() < 0.5, "{w}");
        assert!((cubic_expected_cwnd(0.5, 0.5).unwrap() - 1.17).abs() < 1e-14);
        let a = cubic_expected_cwnd(1.6e-3, 0.1).unwrap();
        let b = cubic_expected_cwnd(1e-4, 0.1).unwrap();
        assert!(rel(b, 8.0 * a) < 1e-12);
    }

    #[test]
    fn cubic_required_loss_targets() {
        let p = TcpParams {
            flavor: Flavor::Cubic,
            ..paper_params()
        };
        let p10 = cubic_required_loss(10e6, &p).unwrap();
        assert!(rel(p10, 3.4e-4) < 0.05, "{p10}");
        let back = flow_rate(cubic_expected_cwnd(p10, p.rtt_s).unwrap(), &p);
        assert!(rel(back, 10e6) < 1e-12);

        let doubled = TcpParams {
            mss_bytes: 2.0 * p.mss_bytes,
            ..p
        };
        let p2 = cubic_required_loss(10e6, &doubled).unwrap();
        assert!(rel(p2 / p10, 2f64.powf(4.0 / 3.0)) < 1e-12);
    }

    #[test]
    fn expected_cwnd_is_strictly_decreasing() {
        let grid: Vec<f64> = (0..60).map(|k| 10f64.powf(-6.0 + k as f64 * 0.1)).collect();
        for w in grid.windows(2) {
            assert!(
                reno_expected_cwnd(w[0], 2.0).unwrap() > reno_expected_cwnd(w[1], 2.0).unwrap()
            );
            assert!(
                cubic_expected_cwnd(w[0], 0.1).unwrap() > cubic_expected_cwnd(w[1], 0.1).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn reno_round_trip(exp in 3.0f64..9.0, mss in 500.0f64..9000.0, rtt in 0.001f64..1.0) {
            let p = TcpParams::new(mss, rtt, 2.0, Flavor::Reno).unwrap();
            let target = 10f64.powf(exp);
            if let Ok(loss) = reno_required_loss(target, &p) {
                let back = reno_expected_rate(loss, &p).unwrap();
                prop_assert!(rel(back, target) < 1e-9);
            }
        }

        #[test]
        fn cubic_round_trip(exp in 3.0f64..9.0, mss in 500.0f64..9000.0, rtt in 0.001f64..1.0) {
            let p = TcpParams::new(mss, rtt, 2.0, Flavor::Cubic).unwrap();
            let target = 10f64.powf(exp);
            if let Ok(loss) = cubic_required_loss(target, &p) {
                let back = cubic_expected_rate(loss, &p).unwrap();
                prop_assert!(rel(back, target) < 1e-9);
            }
        }
    }
}
