//! Interval statistics over rate traces.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sim::RateTrace;

/// Interval durations in seconds used when none are given.
pub const DEFAULT_INTERVALS_S: [f64; 8] = [1.0, 4.0, 16.0, 30.0, 60.0, 120.0, 300.0, 600.0];

/// Average bit rates over consecutive intervals of one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSeries {
    pub interval_s: f64,
    pub samples: Vec<f64>,
}

impl IntervalSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub stddev: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Integer ratio `interval_s / base_s`, if there is one.
fn interval_factor(interval_s: f64, base_s: f64) -> Result<usize> {
    let k = interval_s / base_s;
    let r = k.round();
    if !(interval_s > 0.0) || r < 1.0 || (k - r).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::IntervalMismatch {
            requested_s: interval_s,
            base_s,
        });
    }
    Ok(r as usize)
}

/// Sums base intervals of `flow` into windows of `interval_s`. A trailing
/// partial window is dropped.
pub fn reaggregate(trace: &RateTrace, flow: usize, interval_s: f64) -> Result<IntervalSeries> {
    if flow >= trace.num_flows() {
        return Err(invalid(
            "flow",
            format!("trace has {} flows", trace.num_flows()),
        ));
    }
    let k = interval_factor(interval_s, trace.interval_s)?;
    let samples = trace.bytes[flow]
        .chunks_exact(k)
        .map(|c| c.iter().sum::<u64>() as f64 * 8.0 / interval_s)
        .collect();
    Ok(IntervalSeries {
        interval_s,
        samples,
    })
}

/// Per-flow byte totals of the full windows that `reaggregate` keeps.
pub fn reaggregated_bytes(trace: &RateTrace, flow: usize, interval_s: f64) -> Result<u64> {
    let k = interval_factor(interval_s, trace.interval_s)?;
    Ok(trace.bytes[flow].chunks_exact(k).flatten().sum())
}

/// Normalized density estimate: `(bin_start, density)` pairs with bins of
/// `bin_width` anchored at zero. Density times width sums to one.
pub fn histogram(samples: &[f64], bin_width: f64) -> Result<Vec<(f64, f64)>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(invalid("bin_width", "must be > 0"));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let max_bin = samples
        .iter()
        .map(|&x| (x / bin_width).floor() as usize)
        .max()
        .unwrap_or(0);
    let mut counts = vec![0u64; max_bin + 1];
    for &x in samples {
        counts[(x / bin_width).floor() as usize] += 1;
    }
    let norm = 1.0 / (samples.len() as f64 * bin_width);
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * bin_width, c as f64 * norm))
        .collect())
}

/// Nearest-rank quantile of sorted data: the `ceil(q·n)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn mean_stddev(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean, population standard deviation and nearest-rank quantiles.
pub fn summary(samples: &[f64]) -> Result<SummaryStats> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mean, stddev) = mean_stddev(samples);
    Ok(SummaryStats {
        mean,
        stddev,
        q05: nearest_rank(&sorted, 0.05),
        q50: nearest_rank(&sorted, 0.50),
        q95: nearest_rank(&sorted, 0.95),
    })
}

/// `(interval_s, stddev)` of one flow's rate for each interval.
///
/// Intervals that leave fewer than two samples are skipped.
pub fn stddev_vs_interval(
    trace: &RateTrace,
    flow: usize,
    intervals_s: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut curve = Vec::with_capacity(intervals_s.len());
    for &t in intervals_s {
        let s = reaggregate(trace, flow, t)?;
        if s.len() >= 2 {
            curve.push((t, mean_stddev(&s.samples).1));
        }
    }
    Ok(curve)
}

/// Mean time between losses of a flow: one loss per `1/p` packets.
pub fn sawtooth_interval(p_loss: f64, mean_rate_bps: f64, mss_bytes: f64) -> Result<f64> {
    if !(p_loss > 0.0 && mean_rate_bps > 0.0 && mss_bytes > 0.0) {
        return Err(invalid("sawtooth_interval", "all arguments must be > 0"));
    }
    let packet_rate = mean_rate_bps / (8.0 * mss_bytes);
    Ok(1.0 / (p_loss * packet_rate))
}

/// Smallest interval whose stddev is at most half the first point's, with
/// linear interpolation of stddev in `ln(interval)` between points.
pub fn convergence_interval_50(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two curve points".into(),
        ));
    }
    let half = 0.5 * curve[0].1;
    for w in curve.windows(2) {
        let ((t0, s0), (t1, s1)) = (w[0], w[1]);
        if s1 <= half {
            if s0 <= half {
                return Ok(t0);
            }
            let frac = (s0 - half) / (s0 - s1);
            let (l0, l1) = (t0.ln(), t1.ln());
            return Ok((l0 + frac * (l1 - l0)).exp());
        }
    }
    Err(Error::NotConverged {
        largest_s: curve[curve.len() - 1].0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_on_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summary(&v).unwrap();
        assert_eq!((s.q05, s.q50, s.q95), (5.0, 50.0, 95.0));
        assert_eq!(s.mean, 50.5);
    }

    #[test]
    fn summary_rejects_empty() {
        assert!(matches!(summary(&[]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn histogram_point_data() {
        let h = histogram(&[3.2, 3.2, 3.7], 1.0).unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(h[3], (3.0, 1.0));
        assert!(histogram(&[1.0], 0.0).is_err());
    }

    #[test]
    fn convergence_interpolates_in_log_time() {
        let c = [(1.0, 4.0), (100.0, 0.0)];
        // Half way down in stddev is half way in log time.
        assert!((convergence_interval_50(&c).unwrap() - 10.0).abs() < 1e-9);
        assert!(matches!(
            convergence_interval_50(&[(1.0, 4.0), (600.0, 4.0)]),
            Err(Error::NotConverged { largest_s }) if largest_s == 600.0
        ));
        assert!(convergence_interval_50(&[(1.0, 4.0)]).is_err());
    }

    #[test]
    fn sawtooth_is_reciprocal_in_loss() {
        let a = sawtooth_interval(4.0e-5, 10e6, 1514.0).unwrap();
        assert!((a - 30.28).abs() < 0.01);
        let b = sawtooth_interval(8.0e-5, 10e6, 1514.0).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }
}
