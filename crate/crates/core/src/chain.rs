//! Continuous-time Markov chain of the congestion window under i.i.d. loss.
//!
//! States are integer windows `2..=cwnd_max` (a window of 1 is unreachable
//! and omitted, so index `k` holds state `k + 2`). Time is rescaled so that
//! the additive-increase rate is exactly one; with `P = a · p_loss` the
//! halving rate of state `i` is then `i · P`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::formulas::{self, TcpParams};

/// Smallest modelled window.
pub const MIN_CWND: usize = 2;

/// Largest chain the dense elimination accepts (~1 GiB of pivot rows).
pub const MAX_CWND_STATES: usize = 1 << 14;

/// Logarithmic standard deviation of the log-normal window approximation.
pub const LOGNORMAL_SIGMA: f64 = 0.41;

const RESIDUAL_BOUND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub p_loss: f64,
    pub ack_ratio: f64,
    pub cwnd_max: usize,
    pub rtt_s: f64,
    pub mss_bytes: f64,
}

impl ChainSpec {
    /// Builds a spec; `cwnd_max = None` selects [`ChainSpec::auto_cwnd_max`].
    pub fn new(p_loss: f64, tcp: &TcpParams, cwnd_max: Option<usize>) -> Result<Self> {
        tcp.validate()?;
        if !(p_loss > 0.0 && p_loss < 1.0) {
            return Err(invalid(
                "p_loss",
                format!("must lie in (0, 1), got {p_loss}"),
            ));
        }
        let cwnd_max = match cwnd_max {
            Some(m) => m,
            None => Self::auto_cwnd_max(p_loss, tcp.ack_ratio)?,
        };
        let spec = Self {
            p_loss,
            ack_ratio: tcp.ack_ratio,
            cwnd_max,
            rtt_s: tcp.rtt_s,
            mss_bytes: tcp.mss_bytes,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Smallest power of two at or above eight times the square-root-law window.
    pub fn auto_cwnd_max(p_loss: f64, ack_ratio: f64) -> Result<usize> {
        let mean = formulas::reno_expected_cwnd(p_loss, ack_ratio)?;
        let m = (8.0 * mean).ceil().max(4.0) as usize;
        Ok(m.next_power_of_two())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_loss > 0.0 && self.p_loss < 1.0) {
            return Err(invalid(
                "p_loss",
                format!("must lie in (0, 1), got {}", self.p_loss),
            ));
        }
        if self.cwnd_max < 4 {
            return Err(invalid(
                "cwnd_max",
                format!("must be >= 4, got {}", self.cwnd_max),
            ));
        }
        if self.cwnd_max > MAX_CWND_STATES {
            return Err(invalid(
                "cwnd_max",
                format!("must be <= {MAX_CWND_STATES}, got {}", self.cwnd_max),
            ));
        }
        if !(self.ack_ratio >= 1.0) {
            return Err(invalid(
                "ack_ratio",
                format!("must be >= 1, got {}", self.ack_ratio),
            ));
        }
        if !(self.rtt_s > 0.0 && self.mss_bytes > 0.0) {
            return Err(invalid("rtt_s/mss_bytes", "must be > 0"));
        }
        Ok(())
    }

    /// The combined halving coefficient `a · p_loss`.
    pub fn halving_coeff(&self) -> f64 {
        self.ack_ratio * self.p_loss
    }

    pub fn num_states(&self) -> usize {
        self.cwnd_max - MIN_CWND + 1
    }

    pub fn tcp_params(&self) -> TcpParams {
        TcpParams {
            mss_bytes: self.mss_bytes,
            rtt_s: self.rtt_s,
            ack_ratio: self.ack_ratio,
            flavor: formulas::Flavor::Reno,
        }
    }

    /// Total outgoing rate of `state` in increment-rate units.
    pub fn out_rate(&self, state: usize) -> f64 {
        let p = self.halving_coeff();
        if state == MIN_CWND {
            1.0
        } else if state == self.cwnd_max {
            state as f64 * p
        } else {
            1.0 + state as f64 * p
        }
    }
}

/// Destination of a loss in `state`: floor of the half, never below two.
pub fn halving_target(state: usize) -> usize {
    debug_assert!(state >= 3);
    (state / 2).max(MIN_CWND)
}

/// Row-normalised transition matrix `A` with `p = A · p` at equilibrium.
///
/// Entry `(i, j)` is the rate from state `j` into state `i` divided by the
/// outgoing rate of `i`. Stored sparsely: each row has the increment entry
/// from `i - 1` plus at most three halving entries.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    spec: ChainSpec,
    out: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn build_transition_matrix(spec: &ChainSpec) -> Result<TransitionMatrix> {
    spec.validate()?;
    let n = spec.num_states();
    let p = spec.halving_coeff();
    let out: Vec<f64> = (0..n).map(|k| spec.out_rate(k + MIN_CWND)).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(4); n];
    for k in 0..n {
        let state = k + MIN_CWND;
        if state > MIN_CWND {
            rows[k].push((k - 1, 1.0 / out[k]));
        }
    }
    for j in 1..n {
        let src = j + MIN_CWND;
        let dst = halving_target(src) - MIN_CWND;
        rows[dst].push((j, src as f64 * p / out[dst]));
    }
    for row in &mut rows {
        row.sort_by_key(|&(c, _)| c);
    }
    Ok(TransitionMatrix {
        spec: *spec,
        out,
        rows,
    })
}

impl TransitionMatrix {
    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    /// Entry by cwnd state numbers (not indices); zero outside the pattern.
    pub fn get(&self, to_state: usize, from_state: usize) -> f64 {
        if to_state < MIN_CWND || from_state < MIN_CWND {
            return 0.0;
        }
        let (i, j) = (to_state - MIN_CWND, from_state - MIN_CWND);
        self.rows
            .get(i)
            .and_then(|row| row.iter().find(|&&(c, _)| c == j))
            .map_or(0.0, |&(_, v)| v)
    }

    pub fn out_rate(&self, state: usize) -> f64 {
        self.out[state - MIN_CWND]
    }

    /// Nonzero entries of the row for `to_state` as `(from_state, value)`.
    pub fn row(&self, to_state: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[to_state - MIN_CWND]
            .iter()
            .map(|&(c, v)| (c + MIN_CWND, v))
    }

    /// `A · p` for a probability vector indexed from state two.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * p[c]).sum())
            .collect()
    }

    /// Max-norm of `A · p - p`.
    pub fn residual(&self, p: &[f64]) -> f64 {
        self.apply(p)
            .iter()
            .zip(p)
            .map(|(ap, x)| (ap - x).abs())
            .fold(0.0, f64::max)
    }

    /// Max over states of `|p_i · out(i) - inflow(i)|` in unscaled rates.
    pub fn balance_residual(&self, p: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let inflow: f64 = row.iter().map(|&(c, v)| v * self.out[i] * p[c]).sum();
                (p[i] * self.out[i] - inflow).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Equilibrium window distribution over states `2..=cwnd_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub spec: ChainSpec,
    probabilities: Vec<f64>,
}

impl StateDistribution {
    /// Wraps an externally computed vector; it must be a probability simplex.
    pub fn from_probabilities(spec: ChainSpec, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != spec.num_states() {
            return Err(invalid(
                "probabilities",
                format!(
                    "expected {} states, got {}",
                    spec.num_states(),
                    probabilities.len()
                ),
            ));
        }
        if probabilities.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("probabilities", "entries must be nonnegative"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "probabilities",
                format!("sum is {total}, expected 1"),
            ));
        }
        Ok(Self {
            spec,
            probabilities,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn prob(&self, state: usize) -> f64 {
        state
            .checked_sub(MIN_CWND)
            .and_then(|k| self.probabilities.get(k))
            .copied()
            .unwrap_or(0.0)
    }

    /// `(state, probability)` pairs in ascending state order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, &p)| (k + MIN_CWND, p))
    }

    /// Cumulative probabilities aligned with [`Self::iter`].
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.probabilities
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect()
    }

    pub fn mean_cwnd(&self) -> f64 {
        self.iter().map(|(s, p)| s as f64 * p).sum()
    }

    /// Probability mass in the top tenth of the state range.
    pub fn top_decile_mass(&self) -> f64 {
        let n = self.probabilities.len();
        let start = n - (n / 10).max(1);
        self.probabilities[start..].iter().sum()
    }
}

/// Solves `(A - I) p = 0` with the first equation replaced by `Σ p = 1`.
///
/// `A - I` is upper Hessenberg in natural state order (the only
/// sub-diagonal entry of a row is the increment from the state below), and
/// replacing the first row keeps it so. Gaussian elimination with partial
/// pivoting therefore only ever compares two candidate rows per column.
pub fn solve_equilibrium(m: &TransitionMatrix) -> Result<StateDistribution> {
    let n = m.num_states();
    // Row k holds columns (k - 1)..n, except row 0 which holds 0..n.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    rows.push(vec![1.0; n]);
    for k in 1..n {
        let offset = k - 1;
        let mut row = vec![0.0; n - offset];
        row[k - offset] = -1.0;
        for &(c, v) in &m.rows[k] {
            debug_assert!(c >= offset);
            row[c - offset] += v;
        }
        rows.push(row);
    }
    let mut rhs = vec![0.0; n];
    rhs[0] = 1.0;

    // `acc` is the working row k with columns k..n.
    let mut acc = std::mem::take(&mut rows[0]);
    let mut acc_rhs = rhs[0];
    let mut upper: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut upper_rhs = Vec::with_capacity(n);
    for k in 0..n {
        if k + 1 == n {
            upper.push(acc);
            upper_rhs.push(acc_rhs);
            break;
        }
        // Next original row restricted to columns k..n.
        let next = std::mem::take(&mut rows[k + 1]);
        let next_rhs = rhs[k + 1];
        let (pivot, pivot_rhs, other, other_rhs) = if acc[0].abs() >= next[0].abs() {
            (acc, acc_rhs, next, next_rhs)
        } else {
            (next, next_rhs, acc, acc_rhs)
        };
        if pivot[0] == 0.0 {
            return Err(Error::Solver(format!("singular system at column {k}")));
        }
        let f = other[0] / pivot[0];
        let new_acc: Vec<f64> = other[1..]
            .iter()
            .zip(&pivot[1..])
            .map(|(o, p)| o - f * p)
            .collect();
        acc_rhs = other_rhs - f * pivot_rhs;
        acc = new_acc;
        upper.push(pivot);
        upper_rhs.push(pivot_rhs);
    }

    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let row = &upper[k];
        let mut s = upper_rhs[k];
        for (c, v) in row.iter().enumerate().skip(1) {
            s -= v * x[k + c];
        }
        x[k] = s / row[0];
    }
    drop(upper);

    for v in &mut x {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::Solver(format!("negative probability {v}")));
            }
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Solver("solution does not normalise".into()));
    }
    for v in &mut x {
        *v /= total;
    }
    let residual = m.residual(&x);
    if !(residual <= RESIDUAL_BOUND) {
        return Err(Error::Solver(format!(
            "residual {residual:e} exceeds {RESIDUAL_BOUND:e}"
        )));
    }
    Ok(StateDistribution {
        spec: m.spec,
        probabilities: x,
    })
}

/// Builds and solves in one step.
pub fn solve(spec: &ChainSpec) -> Result<StateDistribution> {
    solve_equilibrium(&build_transition_matrix(spec)?)
}

/// Outcome of the truncation-insensitivity check on an automatic `cwnd_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationCheck {
    pub cwnd_max: usize,
    pub doubled_cwnd_max: usize,
    /// Largest relative change of the 5/50/95 % rate quantiles.
    pub max_quantile_change: f64,
    pub top_decile_mass: f64,
}

impl TruncationCheck {
    pub fn passed(&self) -> bool {
        self.max_quantile_change < 1e-3
    }
}

/// Solves with the automatic truncation, doubling `cwnd_max` until the
/// quantiles no longer move by 0.1 % when the state space is doubled.
pub fn solve_auto(p_loss: f64, tcp: &TcpParams) -> Result<(StateDistribution, TruncationCheck)> {
    let mut spec = ChainSpec::new(p_loss, tcp, None)?;
    let mut dist = solve(&spec)?;
    loop {
        let doubled = ChainSpec {
            cwnd_max: spec.cwnd_max * 2,
            ..spec
        };
        if doubled.cwnd_max > MAX_CWND_STATES {
            let check = TruncationCheck {
                cwnd_max: spec.cwnd_max,
                doubled_cwnd_max: doubled.cwnd_max,
                max_quantile_change: f64::NAN,
                top_decile_mass: dist.top_decile_mass(),
            };
            return Ok((dist, check));
        }
        let wide = solve(&doubled)?;
        let change = quantile_change(&dist, &wide);
        let check = TruncationCheck {
            cwnd_max: spec.cwnd_max,
            doubled_cwnd_max: doubled.cwnd_max,
            max_quantile_change: change,
            top_decile_mass: dist.top_decile_mass(),
        };
        if check.passed() {
            return Ok((dist, check));
        }
        spec = doubled;
        dist = wide;
    }
}

/// Largest relative difference of the 5/50/95 % quantiles of two solutions.
pub fn quantile_change(a: &StateDistribution, b: &StateDistribution) -> f64 {
    let sa = distribution_stats(&rate_distribution(a));
    let sb = distribution_stats(&rate_distribution(b));
    [(sa.q05, sb.q05), (sa.q50, sb.q50), (sa.q95, sb.q95)]
        .iter()
        .map(|(x, y)| ((x - y) / x).abs())
        .fold(0.0, f64::max)
}

/// Discrete probability mass function over bit rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePmf {
    /// `(rate_bps, probability)` in ascending rate order.
    pub points: Vec<(f64, f64)>,
}

impl RatePmf {
    /// Smallest support point whose cumulative probability reaches `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut acc = 0.0;
        for &(x, p) in &self.points {
            acc += p;
            // Rounding in the running sum must not skip a point that
            // reaches q exactly.
            if acc >= q - 1e-12 {
                return x;
            }
        }
        self.points.last().map_or(f64::NAN, |&(x, _)| x)
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().map(|&(x, p)| x * p).sum()
    }

    pub fn stddev(&self) -> f64 {
        let m = self.mean();
        self.points
            .iter()
            .map(|&(x, p)| p * (x - m) * (x - m))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn rate_distribution(d: &StateDistribution) -> RatePmf {
    let tcp = d.spec.tcp_params();
    RatePmf {
        points: d
            .iter()
            .map(|(s, p)| (formulas::flow_rate(s as f64, &tcp), p))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub mean: f64,
    pub stddev: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

pub fn distribution_stats(pmf: &RatePmf) -> DistributionStats {
    DistributionStats {
        mean: pmf.mean(),
        stddev: pmf.stddev(),
        q05: pmf.quantile(0.05),
        q50: pmf.quantile(0.5),
        q95: pmf.quantile(0.95),
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Log-normal window CDF `Φ(ln(cwnd / e_cwnd) / σ)`.
pub fn lognormal_cdf(cwnd: f64, e_cwnd: f64, sigma: f64) -> f64 {
    if cwnd <= 0.0 {
        return 0.0;
    }
    if cwnd.is_infinite() {
        return 1.0;
    }
    normal_cdf((cwnd / e_cwnd).ln() / sigma)
}

/// Kolmogorov distance between the chain and the log-normal approximation.
///
/// State `i` stands for the fractional windows `[i, i + 1)`, so the chain's
/// cumulative probability up to `i` is compared with the log-normal CDF at
/// the upper edge `i + 1`.
pub fn ks_distance(d: &StateDistribution, e_cwnd: f64, sigma: f64) -> f64 {
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for (s, p) in d.iter() {
        acc += p;
        worst = worst.max((acc - lognormal_cdf(s as f64 + 1.0, e_cwnd, sigma)).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulas::Flavor;

    fn spec(p_loss: f64, cwnd_max: usize) -> ChainSpec {
        let tcp = TcpParams::new(1514.0, 0.1, 2.0, Flavor::Reno).unwrap();
        ChainSpec::new(p_loss, &tcp, Some(cwnd_max)).unwrap()
    }

    #[test]
    fn halving_targets() {
        assert_eq!(halving_target(3), 2);
        assert_eq!(halving_target(4), 2);
        assert_eq!(halving_target(5), 2);
        assert_eq!(halving_target(9), 4);
        assert_eq!(halving_target(100), 50);
    }

    #[test]
    fn rejects_small_or_invalid_chains() {
        let tcp = TcpParams::default();
        assert!(ChainSpec::new(1e-3, &tcp, Some(3)).is_err());
        assert!(ChainSpec::new(0.0, &tcp, Some(16)).is_err());
        assert!(ChainSpec::new(1.0, &tcp, Some(16)).is_err());
        let mut s = spec(1e-3, 16);
        s.cwnd_max = 3;
        assert!(build_transition_matrix(&s).is_err());
    }

    #[test]
    fn auto_cwnd_max_is_power_of_two_above_eight_means() {
        assert_eq!(ChainSpec::auto_cwnd_max(1.1e-4, 2.0).unwrap(), 1024);
        assert_eq!(ChainSpec::auto_cwnd_max(1e-5, 2.0).unwrap(), 4096);
        assert_eq!(ChainSpec::auto_cwnd_max(0.999, 2.0).unwrap(), 8);
    }

    #[test]
    fn four_state_matrix_by_hand() {
        // P = a * p_loss = 0.1
        let m = build_transition_matrix(&spec(0.05, 4)).unwrap();
        assert!((m.out_rate(2) - 1.0).abs() < 1e-15);
        assert!((m.out_rate(3) - 1.3).abs() < 1e-15);
        assert!((m.out_rate(4) - 0.4).abs() < 1e-15);
        assert!((m.get(3, 2) - 1.0 / 1.3).abs() < 1e-15);
        assert!((m.get(2, 3) - 0.3).abs() < 1e-15);
        assert!((m.get(4, 3) - 1.0 / 0.4).abs() < 1e-15);
        assert!((m.get(2, 4) - 0.4).abs() < 1e-15);
        let nonzero: usize = (2..=4).map(|i| m.row(i).count()).sum();
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn nine_state_layout_matches_reference_pattern() {
        let s = spec(0.01, 9);
        let p = s.halving_coeff();
        let m = build_transition_matrix(&s).unwrap();
        let row2: Vec<usize> = m.row(2).map(|(j, _)| j).collect();
        assert_eq!(row2, vec![3, 4, 5]);
        assert!((m.get(2, 3) - 3.0 * p).abs() < 1e-15);
        assert!((m.get(2, 5) - 5.0 * p).abs() < 1e-15);
        let row3: Vec<usize> = m.row(3).map(|(j, _)| j).collect();
        assert_eq!(row3, vec![2, 6, 7]);
        assert!((m.get(3, 7) - 7.0 * p / (1.0 + 3.0 * p)).abs() < 1e-15);
        let row4: Vec<usize> = m.row(4).map(|(j, _)| j).collect();
        assert_eq!(row4, vec![3, 8, 9]);
        assert!((m.get(4, 9) - 9.0 * p / (1.0 + 4.0 * p)).abs() < 1e-15);
        for i in 5..=8 {
            let r: Vec<usize> = m.row(i).map(|(j, _)| j).collect();
            assert_eq!(r, vec![i - 1]);
            assert!((m.get(i, i - 1) - 1.0 / (1.0 + i as f64 * p)).abs() < 1e-15);
        }
        assert!((m.get(9, 8) - 1.0 / (9.0 * p)).abs() < 1e-15);
    }

    #[test]
    fn columns_of_rate_matrix_conserve_outflow() {
        let s = spec(2e-3, 64);
        let m = build_transition_matrix(&s).unwrap();
        let mut col = vec![0.0; s.num_states()];
        for i in 2..=s.cwnd_max {
            for (j, v) in m.row(i) {
                col[j - 2] += v * m.out_rate(i);
            }
        }
        for (k, c) in col.iter().enumerate() {
            let out = m.out_rate(k + 2);
            assert!((c - out).abs() <= 1e-12 * out, "state {}", k + 2);
        }
    }

    #[test]
    fn two_state_chain_is_uniform() {
        // cwnd_max = 3 is below the accepted minimum, so assemble it by hand:
        // p_2 * 1 = p_3 * 3P with P = 1/3.
        let s = ChainSpec {
            p_loss: 1.0 / 6.0,
            ack_ratio: 2.0,
            cwnd_max: 3,
            rtt_s: 0.1,
            mss_bytes: 1514.0,
        };
        let out = vec![s.out_rate(2), s.out_rate(3)];
        assert!((out[1] - 1.0).abs() < 1e-15);
        let m = TransitionMatrix {
            spec: s,
            out,
            rows: vec![vec![(1, 1.0)], vec![(0, 1.0)]],
        };
        let d = solve_equilibrium(&m).unwrap();
        assert!((d.probabilities()[0] - 0.5).abs() < 1e-15);
        assert!((d.probabilities()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_satisfies_balance_and_simplex() {
        for &(p_loss, nmax) in &[(1e-1, 32), (1e-2, 128), (1e-3, 256), (1.1e-4, 1024)] {
            let m = build_transition_matrix(&spec(p_loss, nmax)).unwrap();
            let d = solve_equilibrium(&m).unwrap();
            let total: f64 = d.probabilities().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(d.probabilities().iter().all(|&x| x >= 0.0));
            assert!(m.balance_residual(d.probabilities()) < 1e-10);
            assert!(m.residual(d.probabilities()) < 1e-10);
        }
    }

    #[test]
    fn equilibrium_is_invariant_under_time_rescaling() {
        let m = build_transition_matrix(&spec(1e-3, 128)).unwrap();
        let c = 7.5;
        let mut scaled = m.clone();
        for (i, row) in scaled.rows.iter_mut().enumerate() {
            let out = m.out[i] * c;
            for (_, v) in row.iter_mut() {
                *v = (*v * m.out[i] * c) / out;
            }
        }
        scaled.out.iter_mut().for_each(|o| *o *= c);
        let a = solve_equilibrium(&m).unwrap();
        let b = solve_equilibrium(&scaled).unwrap();
        for (x, y) in a.probabilities().iter().zip(b.probabilities()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn point_mass_statistics() {
        let pmf = RatePmf {
            points: vec![(5.0, 0.0), (7.0, 1.0), (9.0, 0.0)],
        };
        let s = distribution_stats(&pmf);
        assert_eq!(
            (s.q05, s.q50, s.q95, s.mean, s.stddev),
            (7.0, 7.0, 7.0, 7.0, 0.0)
        );
    }

    #[test]
    fn uniform_four_point_statistics() {
        let pmf = RatePmf {
            points: (1..=4).map(|x| (x as f64, 0.25)).collect(),
        };
        let s = distribution_stats(&pmf);
        assert_eq!(s.q50, 2.0);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.q05, 1.0);
        assert_eq!(s.q95, 4.0);
    }

    #[test]
    fn degenerate_distribution_maps_to_point_rate() {
        let s = spec(1e-2, 16);
        let mut probs = vec![0.0; s.num_states()];
        probs[5] = 1.0;
        let d = StateDistribution::from_probabilities(s, probs).unwrap();
        let pmf = rate_distribution(&d);
        let total: f64 = pmf.points.iter().map(|p| p.1).sum();
        assert_eq!(total, 1.0);
        let r = formulas::flow_rate(7.0, &s.tcp_params());
        assert_eq!(pmf.quantile(0.5), r);
        assert_eq!(pmf.mean(), r);
    }

    #[test]
    fn lognormal_reference_points() {
        assert!((lognormal_cdf(50.0, 50.0, 0.41) - 0.5).abs() < 1e-15);
        let one_sigma = lognormal_cdf(50.0 * 0.41f64.exp(), 50.0, 0.41);
        assert!((one_sigma - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!(lognormal_cdf(1e-300, 50.0, 0.41) < 1e-12);
        assert_eq!(lognormal_cdf(0.0, 50.0, 0.41), 0.0);
        assert!(lognormal_cdf(1e300, 50.0, 0.41) > 1.0 - 1e-12);
        assert_eq!(lognormal_cdf(f64::INFINITY, 50.0, 0.41), 1.0);
        // Common rescaling of the window and the expectation cancels.
        let a = lognormal_cdf(30.0, 40.0, 0.41);
        let b = lognormal_cdf(300.0, 400.0, 0.41);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn ks_of_binned_lognormal_is_zero() {
        let s = spec(1e-3, 1024);
        let e = 60.0;
        let mut probs: Vec<f64> = (2..=s.cwnd_max)
            .map(|i| lognormal_cdf(i as f64 + 1.0, e, 0.41) - lognormal_cdf(i as f64, e, 0.41))
            .collect();
        probs[0] += lognormal_cdf(2.0, e, 0.41);
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let d = StateDistribution::from_probabilities(s, probs).unwrap();
        assert!(ks_distance(&d, e, 0.41) < 1e-9);
    }

    #[test]
    fn paper_operating_point_statistics() {
        let tcp = TcpParams::new(1514.0, 0.1, 2.0, Flavor::Reno).unwrap();
        let (d, check) = solve_auto(1.1e-4, &tcp).unwrap();
        assert!(d.spec.cwnd_max >= 1024);
        assert!(check.passed());
        let st = distribution_stats(&rate_distribution(&d));
        let within = |x: f64, r: f64| ((x / 1e6 - r) / r).abs() <= 0.05;
        assert!(within(st.q05, 4.7), "{st:?}");
        assert!(within(st.q50, 10.0), "{st:?}");
        assert!(within(st.q95, 19.0), "{st:?}");
        assert!(within(st.mean, 10.7), "{st:?}");
    }

    #[test]
    fn mean_tracks_square_root_law_and_falls_with_loss() {
        let tcp = TcpParams::default();
        let mut prev = f64::INFINITY;
        for &p in &[1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2] {
            let d = solve(&ChainSpec::new(p, &tcp, None).unwrap()).unwrap();
            let mean = d.mean_cwnd();
            let law = formulas::reno_expected_cwnd(p, 2.0).unwrap();
            assert!(((mean - law) / law).abs() < 0.10, "p={p}: {mean} vs {law}");
            assert!(mean < prev);
            prev = mean;
        }
    }
}
