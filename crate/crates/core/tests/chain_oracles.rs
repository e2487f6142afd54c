use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcpspread::chain::{
    self, build_transition_matrix, halving_target, solve, solve_auto, ChainSpec, MIN_CWND,
};
use tcpspread::{Flavor, TcpParams};

fn tcp() -> TcpParams {
    TcpParams::new(1514.0, 0.1, 2.0, Flavor::Reno).unwrap()
}

/// Balance across the cut between `k` and `k + 1`: upward flow out of `k`
/// equals the halving flow from above landing at or below `k`.
fn cut_recursion(p_loss: f64, ack_ratio: f64, cwnd_max: usize) -> Vec<f64> {
    let big_p = p_loss * ack_ratio;
    let n = cwnd_max - MIN_CWND + 1;
    let mut p = vec![0.0; n];
    p[n - 1] = 1.0;
    for k in (MIN_CWND..cwnd_max).rev() {
        let hi = (2 * k + 1).min(cwnd_max);
        let down: f64 = (k + 1..=hi)
            .map(|j| big_p * j as f64 * p[j - MIN_CWND])
            .sum();
        p[k - MIN_CWND] = down;
        // Keep the numbers in range for long chains.
        if down > 1e100 {
            p.iter_mut().for_each(|x| *x *= 1e-100);
        }
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|x| x / total).collect()
}

/// Plain dense Gaussian elimination on `(A - I) p = 0` with the first row
/// replaced by the normalization.
fn dense_solve(spec: &ChainSpec) -> Vec<f64> {
    let m = build_transition_matrix(spec).unwrap();
    let n = spec.num_states();
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().take(n).enumerate() {
            *x = m.get(i + MIN_CWND, j + MIN_CWND) - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[0] = vec![1.0; n + 1];
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Time-weighted occupancy of a simulated continuous-time chain.
fn jump_chain_occupancy(spec: &ChainSpec, steps: usize, seed: u64) -> Vec<f64> {
    let big_p = spec.halving_coeff();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut time = vec![0.0; spec.num_states()];
    let mut s = MIN_CWND;
    for _ in 0..steps {
        let up = if s < spec.cwnd_max { 1.0 } else { 0.0 };
        let down = if s > MIN_CWND { s as f64 * big_p } else { 0.0 };
        let total = up + down;
        // Expected holding time instead of a sampled one: same mean, less noise.
        time[s - MIN_CWND] += 1.0 / total;
        s = if rng.gen::<f64>() * total < up {
            s + 1
        } else {
            halving_target(s)
        };
    }
    let total: f64 = time.iter().sum();
    time.iter().map(|t| t / total).collect()
}

/// Relative error over the states carrying at least 2 % of the mass.
fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, _)| **x >= 0.02)
        .map(|(x, y)| ((x - y) / x).abs())
        .fold(0.0, f64::max)
}

#[test]
fn matches_cut_recursion_at_operating_point() {
    let spec = ChainSpec::new(1.1e-4, &tcp(), None).unwrap();
    let d = solve(&spec).unwrap();
    let oracle = cut_recursion(1.1e-4, 2.0, spec.cwnd_max);
    let worst = d
        .probabilities()
        .iter()
        .zip(&oracle)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12, "max abs diff {worst}");
}

#[test]
fn matches_dense_elimination() {
    for &(p, m) in &[(1e-2, 40), (1e-3, 128), (0.2, 9)] {
        let spec = ChainSpec::new(p, &tcp(), Some(m)).unwrap();
        let d = solve(&spec).unwrap();
        let dense = dense_solve(&spec);
        let worst = d
            .probabilities()
            .iter()
            .zip(&dense)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "p={p} max={m}: {worst}");
    }
}

#[test]
fn matches_simulated_jump_chain() {
    for (i, &m) in [6usize, 9, 12].iter().enumerate() {
        let spec = ChainSpec::new(0.05, &tcp(), Some(m)).unwrap();
        let d = solve(&spec).unwrap();
        let sim = jump_chain_occupancy(&spec, 10_000_000, 100 + i as u64);
        let diff = max_rel_diff(d.probabilities(), &sim);
        assert!(diff < 0.005, "cwnd_max={m}: relative error {diff}");
    }
}

#[test]
fn truncation_insensitivity() {
    for &p in &[1e-5, 1.1e-4, 1e-3, 1e-2] {
        let (_, check) = solve_auto(p, &tcp()).unwrap();
        assert!(check.passed(), "p={p}: {check:?}");
        assert!(check.top_decile_mass < 1e-6, "p={p}: {check:?}");
    }
}

#[test]
fn flow_balance_residual_small() {
    for &p in &[1e-5, 1.1e-4, 1e-2, 0.1] {
        let spec = ChainSpec::new(p, &tcp(), None).unwrap();
        let m = build_transition_matrix(&spec).unwrap();
        let d = chain::solve_equilibrium(&m).unwrap();
        assert!(m.residual(d.probabilities()) <= 1e-10);
        assert!(m.balance_residual(d.probabilities()) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solution_is_a_distribution(exp in -4.5f64..-1.0, a in 1.0f64..3.0, m in 8usize..600) {
        let p = 10f64.powf(exp);
        let t = TcpParams::new(1514.0, 0.1, a, Flavor::Reno).unwrap();
        let spec = ChainSpec::new(p, &t, Some(m)).unwrap();
        let d = solve(&spec).unwrap();
        let total: f64 = d.probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(d.probabilities().iter().all(|&x| x >= 0.0));
        let oracle = cut_recursion(p, a, m);
        for (x, y) in d.probabilities().iter().zip(&oracle) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn more_loss_means_smaller_mean_window(exp in -4.5f64..-1.5) {
        let p = 10f64.powf(exp);
        let lo = solve(&ChainSpec::new(p, &tcp(), Some(2048)).unwrap()).unwrap();
        let hi = solve(&ChainSpec::new(p * 1.5, &tcp(), Some(2048)).unwrap()).unwrap();
        prop_assert!(hi.mean_cwnd() < lo.mean_cwnd());
    }

    #[test]
    fn time_rescaling_leaves_equilibrium_unchanged(exp in -4.0f64..-1.5, rtt in 0.001f64..1.0) {
        // The RTT only converts windows into rates.
        let p = 10f64.powf(exp);
        let a = TcpParams::new(1514.0, 0.1, 2.0, Flavor::Reno).unwrap();
        let b = TcpParams::new(1514.0, rtt, 2.0, Flavor::Reno).unwrap();
        let da = solve(&ChainSpec::new(p, &a, Some(256)).unwrap()).unwrap();
        let db = solve(&ChainSpec::new(p, &b, Some(256)).unwrap()).unwrap();
        prop_assert_eq!(da.probabilities(), db.probabilities());
    }
}
