//! `reproduce`: plot-ready data and reference comparisons for each figure
//! and table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::{json, Value};
use tcpspread::chain::{
    distribution_stats, ks_distance, lognormal_cdf, rate_distribution, solve_auto, RatePmf,
    LOGNORMAL_SIGMA,
};
use tcpspread::formulas::{reno_expected_cwnd, required_loss};
use tcpspread::sim::{
    aggregate_loss_ratio, run, LinkSpec, LossReaction, RateTrace, ScenarioConfig,
};
use tcpspread::stats::{
    convergence_interval_50, histogram, sawtooth_interval, stddev_vs_interval, summary,
    DEFAULT_INTERVALS_S,
};
use tcpspread::store::write_trace;
use tcpspread::{Flavor, TcpParams};
use tcpspread_verify::reference::{
    AveragingRow, QuantileRow, AVERAGING_ROWS, COMPLETION_Q05_S, COMPLETION_Q95_S, CUBIC_ROWS,
    P_OPERATING, RENO_ROWS, TARGET_RATE_BPS,
};

use crate::args::ReproduceArgs;
use crate::output::{create_dir, dat, write_file, write_json, Failure};

pub const TARGETS: [&str; 9] = [
    "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "table1", "table2",
];

/// Long-lived run length at full scale and at desk scale.
const FULL_DURATION_S: f64 = 43_200.0;
const DESK_DURATION_S: f64 = 7_500.0;
const FULL_REPETITIONS: u32 = 2_500;
const DESK_REPETITIONS: u32 = 500;
/// Histogram bin width for the density plots.
const BIN_WIDTH_BPS: f64 = 0.5e6;
const SHARING_FLOWS: [usize; 3] = [2, 3, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Run {
    RandomDrop(FlavorKey),
    /// Flavor, number of flows, RTT in milliseconds.
    Shared(FlavorKey, usize, u32),
    Finite,
}

/// `Flavor` with an ordering, so runs can key a `BTreeMap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum FlavorKey {
    Reno,
    Cubic,
}

impl FlavorKey {
    fn flavor(self) -> Flavor {
        match self {
            FlavorKey::Reno => Flavor::Reno,
            FlavorKey::Cubic => Flavor::Cubic,
        }
    }
}

const FLAVORS: [FlavorKey; 2] = [FlavorKey::Reno, FlavorKey::Cubic];

impl Run {
    fn label(self) -> String {
        match self {
            Run::RandomDrop(f) => format!("{}-random-drop", f.flavor()),
            Run::Shared(f, n, rtt) => format!("{}-{n}flows-{rtt}ms", f.flavor()),
            Run::Finite => "finite".into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Scale {
    duration_s: f64,
    repetitions: u32,
    seed: u64,
}

struct RunData {
    trace: RateTrace,
    completion: Option<Vec<f64>>,
}

fn tcp(flavor: Flavor, rtt_s: f64) -> TcpParams {
    TcpParams::new(1514.0, rtt_s, 2.0, flavor).expect("valid parameters")
}

fn config(run: Run, scale: Scale) -> tcpspread::Result<ScenarioConfig> {
    match run {
        Run::RandomDrop(f) => {
            let t = tcp(f.flavor(), 0.1);
            let p = required_loss(TARGET_RATE_BPS, &t)?;
            ScenarioConfig::random_drop(t, p, scale.duration_s, scale.seed, LossReaction::PerLoss)
        }
        Run::Shared(f, n, rtt_ms) => {
            let rtt = f64::from(rtt_ms) / 1000.0;
            let link = LinkSpec::with_bdp_buffer(n as f64 * TARGET_RATE_BPS, rtt);
            ScenarioConfig::shared(tcp(f.flavor(), rtt), n, link, scale.duration_s, scale.seed)
        }
        Run::Finite => ScenarioConfig::finite(
            tcp(Flavor::Cubic, 0.1),
            9,
            LinkSpec::with_bdp_buffer(100e6, 0.1),
            12_000_000,
            Some(scale.repetitions),
            300.0 + f64::from(scale.repetitions) * 60.0,
            scale.seed,
        ),
    }
}

fn sharing_runs() -> Vec<Run> {
    FLAVORS
        .iter()
        .flat_map(|&f| SHARING_FLOWS.iter().map(move |&n| Run::Shared(f, n, 100)))
        .collect()
}

fn rtt_runs() -> Vec<Run> {
    FLAVORS
        .iter()
        .flat_map(|&f| [10, 100].map(|rtt| Run::Shared(f, 2, rtt)))
        .collect()
}

fn random_drop_runs() -> Vec<Run> {
    FLAVORS.iter().map(|&f| Run::RandomDrop(f)).collect()
}

fn runs_for(target: &str) -> Vec<Run> {
    match target {
        "fig2" => random_drop_runs(),
        "fig3" => Vec::new(),
        "fig4" => sharing_runs(),
        "fig5" | "table1" => [random_drop_runs(), sharing_runs()].concat(),
        "fig6" | "table2" => rtt_runs(),
        "fig7" => vec![Run::Shared(FlavorKey::Cubic, 2, 100)],
        "fig8" => vec![Run::Finite],
        _ => Vec::new(),
    }
}

/// Runs every scenario on a pool of worker threads. Each run is
/// deterministic on its own, so the schedule does not affect results.
fn execute(
    runs: &BTreeSet<Run>,
    scale: Scale,
    trace_dir: &Path,
) -> Result<BTreeMap<Run, RunData>, Failure> {
    let queue = Mutex::new(runs.iter().copied().collect::<Vec<_>>());
    let done = Mutex::new(BTreeMap::new());
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(runs.len().max(1));
    let result: Result<(), Failure> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| -> Result<(), Failure> {
                    loop {
                        let Some(r) = queue.lock().expect("queue").pop() else {
                            return Ok(());
                        };
                        let out = run(&config(r, scale)?)?;
                        let rec = write_trace(&out.trace, trace_dir)?;
                        eprintln!("  {} done ({})", r.label(), rec.run_id);
                        done.lock().expect("results").insert(
                            r,
                            RunData {
                                trace: out.trace,
                                completion: out.completion_times,
                            },
                        );
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("worker thread"))
    });
    result?;
    Ok(done.into_inner().expect("results"))
}

pub fn reproduce(a: &ReproduceArgs) -> Result<(), Failure> {
    let targets: Vec<&str> = if a.target == "all" {
        TARGETS.to_vec()
    } else if let Some(t) = TARGETS.iter().find(|t| **t == a.target) {
        vec![*t]
    } else {
        return Err(Failure::Usage(format!(
            "unknown target `{}`; expected one of {} or all",
            a.target,
            TARGETS.join(", ")
        )));
    };
    let scale = if a.full {
        Scale {
            duration_s: FULL_DURATION_S,
            repetitions: FULL_REPETITIONS,
            seed: a.seed,
        }
    } else {
        println!(
            "desk scale: long-lived runs {DESK_DURATION_S} s instead of {FULL_DURATION_S} s, \
             {DESK_REPETITIONS} finite-flow repetitions instead of {FULL_REPETITIONS}; \
             pass --full for the full lengths"
        );
        Scale {
            duration_s: DESK_DURATION_S,
            repetitions: DESK_REPETITIONS,
            seed: a.seed,
        }
    };
    let dir = &a.out.out_dir;
    create_dir(dir)?;
    let needed: BTreeSet<Run> = targets.iter().flat_map(|t| runs_for(t)).collect();
    if !needed.is_empty() {
        eprintln!("running {} simulation(s)", needed.len());
    }
    let data = execute(&needed, scale, &dir.join("traces"))?;

    for t in targets {
        let files = match t {
            "fig2" => fig2(dir, &data)?,
            "fig3" => fig3(dir)?,
            "fig4" => fig4(dir, &data)?,
            "fig5" => fig5(dir, &data)?,
            "fig6" => fig6(dir, &data)?,
            "fig7" => fig7(dir, &data)?,
            "fig8" => fig8(dir, &data, scale)?,
            "table1" => table1(dir, &data)?,
            "table2" => table2(dir, &data)?,
            _ => unreachable!("target list is fixed"),
        };
        for f in files {
            println!("wrote {}", f.display());
        }
    }
    Ok(())
}

/// Histogram of samples as `(bin centre Mbit/s, density per Mbit/s)`.
fn sample_density(samples: &[f64]) -> tcpspread::Result<Vec<Vec<f64>>> {
    Ok(histogram(samples, BIN_WIDTH_BPS)?
        .into_iter()
        .map(|(start, d)| vec![(start + BIN_WIDTH_BPS / 2.0) / 1e6, d * 1e6])
        .collect())
}

/// The chain's rate distribution binned like [`sample_density`].
fn pmf_density(pmf: &RatePmf) -> Vec<Vec<f64>> {
    let mut bins: BTreeMap<i64, f64> = BTreeMap::new();
    for &(rate, p) in &pmf.points {
        *bins
            .entry((rate / BIN_WIDTH_BPS).floor() as i64)
            .or_default() += p;
    }
    bins.into_iter()
        .filter(|(_, p)| *p > 1e-12)
        .map(|(k, p)| {
            vec![
                (k as f64 + 0.5) * BIN_WIDTH_BPS / 1e6,
                p / (BIN_WIDTH_BPS / 1e6),
            ]
        })
        .collect()
}

fn theory_pmf() -> tcpspread::Result<RatePmf> {
    let (dist, _) = solve_auto(P_OPERATING, &tcp(Flavor::Reno, 0.1))?;
    Ok(rate_distribution(&dist))
}

/// Steady-state rates of all flows of a run, pooled.
fn pooled_rates(trace: &RateTrace) -> Vec<f64> {
    let t = trace.steady_state();
    (0..t.num_flows()).flat_map(|f| t.rates_bps(f)).collect()
}

fn get(data: &BTreeMap<Run, RunData>, r: Run) -> &RunData {
    data.get(&r).expect("run was scheduled")
}

fn density_comment(what: &str) -> String {
    format!("{what}\nrate_mbps density_per_mbps")
}

fn fig2(dir: &Path, data: &BTreeMap<Run, RunData>) -> Result<Vec<PathBuf>, Failure> {
    let mut files = vec![write_file(
        &dir.join("fig2.theory.dat"),
        &dat(
            &density_comment("chain, random drop"),
            pmf_density(&theory_pmf()?),
        ),
    )?];
    for f in FLAVORS {
        let r = Run::RandomDrop(f);
        let rates = pooled_rates(&get(data, r).trace);
        files.push(write_file(
            &dir.join(format!("fig2.{}.dat", f.flavor())),
            &dat(&density_comment(&r.label()), sample_density(&rates)?),
        )?);
    }
    Ok(files)
}

fn fig3(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut markers = Vec::new();
    for p in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
        let (dist, _) = solve_auto(p, &tcp(Flavor::Reno, 0.1))?;
        let e = reno_expected_cwnd(p, 2.0)?;
        let cdf = dist.cdf();
        let lines = dist.iter().zip(&cdf).map(|((s, _), c)| {
            vec![
                s as f64,
                *c,
                lognormal_cdf(s as f64 + 1.0, e, LOGNORMAL_SIGMA),
            ]
        });
        files.push(write_file(
            &dir.join(format!("fig3.p{p:.0e}.dat")),
            &dat(
                &format!("p_loss {p:e}, expected cwnd {e:.2}\ncwnd chain_cdf lognormal_cdf"),
                lines,
            ),
        )?);
        let at_mean = dist
            .iter()
            .zip(&cdf)
            .take_while(|((s, _), _)| (*s as f64) <= e)
            .last()
            .map_or(0.0, |(_, c)| *c);
        markers.push(vec![e, at_mean]);
        let ks = ks_distance(&dist, e, LOGNORMAL_SIGMA);
        rows.push(json!({"p_loss": p, "expected_cwnd": e, "ks": ks, "tolerance": 0.05, "within": ks <= 0.05}));
    }
    files.push(write_file(
        &dir.join("fig3.markers.dat"),
        &dat("expected cwnd markers\ncwnd chain_cdf", markers),
    )?);
    files.push(write_json(
        &dir.join("fig3.comparison.json"),
        &json!({"target": "fig3", "sigma": LOGNORMAL_SIGMA, "rows": rows}),
    )?);
    Ok(files)
}

fn fig4(dir: &Path, data: &BTreeMap<Run, RunData>) -> Result<Vec<PathBuf>, Failure> {
    let mut files = vec![write_file(
        &dir.join("fig4.theory.dat"),
        &dat(
            &density_comment("chain, random drop"),
            pmf_density(&theory_pmf()?),
        ),
    )?];
    for r in sharing_runs() {
        let rates = pooled_rates(&get(data, r).trace);
        files.push(write_file(
            &dir.join(format!("fig4.{}.dat", r.label())),
            &dat(&density_comment(&r.label()), sample_density(&rates)?),
        )?);
    }
    Ok(files)
}

/// Stddev-vs-interval curve of flow 0 after warm-up.
fn curve(trace: &RateTrace) -> tcpspread::Result<Vec<(f64, f64)>> {
    stddev_vs_interval(&trace.steady_state(), 0, &DEFAULT_INTERVALS_S)
}

fn curve_dat(label: &str, c: &[(f64, f64)]) -> String {
    dat(
        &format!("{label}\ninterval_s stddev_mbps"),
        c.iter().map(|(t, sd)| vec![*t, sd / 1e6]),
    )
}

fn fig5(dir: &Path, data: &BTreeMap<Run, RunData>) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for r in [random_drop_runs(), sharing_runs()].concat() {
        let c = curve(&get(data, r).trace)?;
        files.push(write_file(
            &dir.join(format!("fig5.{}.dat", r.label())),
            &curve_dat(&r.label(), &c),
        )?);
        let at = |t: f64| c.iter().find(|(x, _)| *x == t).map(|(_, sd)| *sd);
        rows.push(json!({
            "run": r.label(),
            "stddev_1s_bps": at(1.0),
            "ratio_16s_to_1s": at(16.0).zip(at(1.0)).map(|(a, b)| a / b),
            "stddev_600s_bps": at(600.0),
        }));
    }
    files.push(write_json(
        &dir.join("fig5.comparison.json"),
        &json!({
            "target": "fig5",
            "reference": {"ratio_16s_to_1s_at_least": 0.8, "stddev_600s_bps": 1.0e6, "tolerance_bps": 0.4e6},
            "rows": rows,
        }),
    )?);
    Ok(files)
}

fn fig6(dir: &Path, data: &BTreeMap<Run, RunData>) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for r in rtt_runs() {
        let c = curve(&get(data, r).trace)?;
        files.push(write_file(
            &dir.join(format!("fig6.{}.dat", r.label())),
            &curve_dat(&r.label(), &c),
        )?);
        let reference = reference_row(r).map(|x| x.convergence_s);
        rows.push(json!({
            "run": r.label(),
            "convergence_50_s": convergence_interval_50(&c).ok(),
            "reference_convergence_50_s": reference,
        }));
    }
    files.push(write_json(
        &dir.join("fig6.comparison.json"),
        &json!({"target": "fig6", "rows": rows}),
    )?);
    Ok(files)
}

fn fig7(dir: &Path, data: &BTreeMap<Run, RunData>) -> Result<Vec<PathBuf>, Failure> {
    let t = &get(data, Run::Shared(FlavorKey::Cubic, 2, 100)).trace;
    let n = t.num_intervals();
    let tail = (600.0 / t.interval_s).round() as usize;
    let rates: Vec<Vec<f64>> = (0..t.num_flows()).map(|f| t.rates_bps(f)).collect();
    let rows = (n.saturating_sub(tail)..n).map(|k| {
        let t_end = t.start_s + (k + 1) as f64 * t.interval_s;
        let a = rates[0][k] / 1e6;
        let b = rates[1][k] / 1e6;
        vec![t_end, a, b, a + b]
    });
    Ok(vec![write_file(
        &dir.join("fig7.dat"),
        &dat(
            "last 10 minutes, two cubic flows, 20 Mbit/s, 100 ms\nt_end_s flow0_mbps flow1_mbps total_mbps",
            rows,
        ),
    )?])
}

fn fig8(dir: &Path, data: &BTreeMap<Run, RunData>, scale: Scale) -> Result<Vec<PathBuf>, Failure> {
    let times = get(data, Run::Finite)
        .completion
        .clone()
        .unwrap_or_default();
    let s = summary(&times)?;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(vec![
        write_file(
            &dir.join("fig8.dat"),
            &dat(
                "12 MB flow among 9 cubic flows at 100 Mbit/s\nrepetition completion_s",
                times.iter().enumerate().map(|(i, t)| vec![i as f64, *t]),
            ),
        )?,
        write_file(
            &dir.join("fig8.cdf.dat"),
            &dat(
                "completion_s cumulative_fraction",
                sorted
                    .iter()
                    .enumerate()
                    .map(|(i, t)| vec![*t, (i + 1) as f64 / n]),
            ),
        )?,
        write_json(
            &dir.join("fig8.comparison.json"),
            &json!({
                "target": "fig8",
                "repetitions": scale.repetitions,
                "completed": times.len(),
                "measured": {"q05_s": s.q05, "median_s": s.q50, "q95_s": s.q95, "mean_s": s.mean},
                "reference": {"q05_s_below": COMPLETION_Q05_S, "q95_s_above": COMPLETION_Q95_S, "expected_s": 10.0},
            }),
        )?,
    ])
}

fn reference_row(r: Run) -> Option<&'static AveragingRow> {
    let Run::Shared(f, 2, rtt_ms) = r else {
        return None;
    };
    AVERAGING_ROWS
        .iter()
        .find(|row| row.flavor == f.flavor().to_string() && row.rtt_s == f64::from(rtt_ms) / 1000.0)
}

fn quantile_json(row: &QuantileRow, measured: [f64; 4]) -> Value {
    let reference = [row.q05, row.q50, row.q95, row.mean];
    let rel: Vec<f64> = measured
        .iter()
        .zip(&reference)
        .map(|(m, r)| (m - r) / r)
        .collect();
    json!({
        "label": row.label,
        "reference_mbps": {"q05": row.q05, "q50": row.q50, "q95": row.q95, "mean": row.mean},
        "measured_mbps": {"q05": measured[0], "q50": measured[1], "q95": measured[2], "mean": measured[3]},
        "relative_error": {"q05": rel[0], "q50": rel[1], "q95": rel[2], "mean": rel[3]},
    })
}

fn measured_quantiles(samples: &[f64]) -> tcpspread::Result<[f64; 4]> {
    let s = summary(samples)?;
    Ok([s.q05, s.q50, s.q95, s.mean].map(|x| x / 1e6))
}

fn table1(dir: &Path, data: &BTreeMap<Run, RunData>) -> Result<Vec<PathBuf>, Failure> {
    let theory = distribution_stats(&theory_pmf()?);
    let mut rows: Vec<(&str, &QuantileRow, [f64; 4])> = vec![(
        "reno",
        &RENO_ROWS[0],
        [theory.q05, theory.q50, theory.q95, theory.mean].map(|x| x / 1e6),
    )];
    for (f, refs) in [
        (FlavorKey::Reno, &RENO_ROWS[1..]),
        (FlavorKey::Cubic, &CUBIC_ROWS[..]),
    ] {
        let name = if f == FlavorKey::Reno {
            "reno"
        } else {
            "cubic"
        };
        let drop = pooled_rates(&get(data, Run::RandomDrop(f)).trace);
        rows.push((name, &refs[0], measured_quantiles(&drop)?));
        for (row, n) in refs[1..].iter().zip(SHARING_FLOWS) {
            let rates = pooled_rates(&get(data, Run::Shared(f, n, 100)).trace);
            rows.push((name, row, measured_quantiles(&rates)?));
        }
    }

    let mut text = String::from(
        "flavor  row                        reference q05/q50/q95/mean   measured q05/q50/q95/mean (Mbit/s)\n",
    );
    for (flavor, row, m) in &rows {
        let _ = writeln!(
            text,
            "{flavor:<7} {:<26} {:>5.1} {:>5.1} {:>5.1} {:>5.1}        {:>5.2} {:>5.2} {:>5.2} {:>5.2}",
            row.label, row.q05, row.q50, row.q95, row.mean, m[0], m[1], m[2], m[3]
        );
    }
    print!("{text}");
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|(flavor, row, m)| {
            let mut v = quantile_json(row, *m);
            v["flavor"] = json!(flavor);
            v
        })
        .collect();
    Ok(vec![
        write_file(&dir.join("table1.txt"), &text)?,
        write_json(
            &dir.join("table1.comparison.json"),
            &json!({"target": "table1", "rows": json_rows}),
        )?,
    ])
}

fn table2(dir: &Path, data: &BTreeMap<Run, RunData>) -> Result<Vec<PathBuf>, Failure> {
    let mut text = String::from(
        "flavor rtt_ms  loss(formula) loss(measured) [ref]      sawtooth_s [ref]   convergence_s [ref]   ratio [ref]\n",
    );
    let mut json_rows = Vec::new();
    for r in rtt_runs() {
        let Run::Shared(f, _, rtt_ms) = r else {
            unreachable!()
        };
        let reference = reference_row(r).expect("reference row for every RTT run");
        let rtt = f64::from(rtt_ms) / 1000.0;
        let trace = &get(data, r).trace;
        let formula = required_loss(TARGET_RATE_BPS, &tcp(f.flavor(), rtt))?;
        let measured = aggregate_loss_ratio(&trace.meta);
        let sawtooth = sawtooth_interval(measured, TARGET_RATE_BPS, 1514.0).ok();
        let conv = convergence_interval_50(&curve(trace)?).ok();
        let ratio = conv.zip(sawtooth).map(|(c, s)| c / s);
        let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(
            text,
            "{:<6} {rtt_ms:>6}  {formula:>13.2e} {measured:>14.2e} [{:.1e}]  {:>10} [{}]  {:>13} [{}]  {:>5} [{}]",
            f.flavor().to_string(),
            reference.measured_loss,
            show(sawtooth),
            reference.sawtooth_s,
            show(conv),
            reference.convergence_s,
            show(ratio),
            reference.ratio
        );
        json_rows.push(json!({
            "flavor": f.flavor(),
            "rtt_s": rtt,
            "loss_formula": formula,
            "loss_measured": measured,
            "sawtooth_s": sawtooth,
            "convergence_50_s": conv,
            "ratio": ratio,
            "reference": reference,
        }));
    }
    print!("{text}");
    Ok(vec![
        write_file(&dir.join("table2.txt"), &text)?,
        write_json(
            &dir.join("table2.comparison.json"),
            &json!({"target": "table2", "rows": json_rows}),
        )?,
    ])
}
