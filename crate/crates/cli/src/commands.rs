//! `solve`, `simulate`, `analyze` and `verify`.

use std::fs;

use serde::Serialize;
use tcpspread::chain::{
    self, distribution_stats, ks_distance, lognormal_cdf, rate_distribution, ChainSpec,
    TruncationCheck,
};
use tcpspread::flow::FlowConfig;
use tcpspread::formulas::{expected_cwnd, reno_expected_cwnd};
use tcpspread::sim::{
    self, default_warmup, fair_share_cwnd, parse_config, FiniteSpec, LinkSpec, LossReaction,
    ScenarioConfig, ScenarioKind, DEFAULT_FINITE_GAP_S,
};
use tcpspread::stats::{
    convergence_interval_50, histogram, mean_stddev, nearest_rank, stddev_vs_interval,
};
use tcpspread::store::{content_id, metric_file, read_trace, write_trace};
use tcpspread::{Error, Flavor, TcpParams};

use crate::args::{parse_flows, AnalyzeArgs, SimulateArgs, SolveArgs, VerifyArgs};
use crate::output::{create_dir, csv, write_file, write_json, Failure};
use tcpspread_verify::{run_checks, VerifyOptions};

#[derive(Debug, Serialize)]
struct SolveSummary {
    p_loss: f64,
    ack_ratio: f64,
    rtt_s: f64,
    mss_bytes: f64,
    cwnd_max: usize,
    cwnd_max_auto: bool,
    truncation: Option<TruncationCheck>,
    mean_cwnd: f64,
    expected_cwnd_formula: f64,
    mean_bps: f64,
    stddev_bps: f64,
    q05_bps: f64,
    q50_bps: f64,
    q95_bps: f64,
    sigma: f64,
    ks_to_lognormal: f64,
}

pub fn solve(a: &SolveArgs) -> Result<(), Failure> {
    let tcp = TcpParams::new(a.mss, a.rtt, a.a, Flavor::Reno)?;
    if !(a.sigma > 0.0 && a.sigma.is_finite()) {
        return Err(Failure::Usage("--sigma must be > 0".into()));
    }
    let (dist, truncation) = match a.cwnd_max {
        Some(m) => (
            chain::solve(&ChainSpec::new(a.p_loss, &tcp, Some(m))?)?,
            None,
        ),
        None => {
            let (d, check) = chain::solve_auto(a.p_loss, &tcp)?;
            (d, Some(check))
        }
    };
    let pmf = rate_distribution(&dist);
    let stats = distribution_stats(&pmf);
    let e_cwnd = reno_expected_cwnd(a.p_loss, a.a)?;
    let summary = SolveSummary {
        p_loss: a.p_loss,
        ack_ratio: a.a,
        rtt_s: a.rtt,
        mss_bytes: a.mss,
        cwnd_max: dist.spec.cwnd_max,
        cwnd_max_auto: a.cwnd_max.is_none(),
        truncation,
        mean_cwnd: dist.mean_cwnd(),
        expected_cwnd_formula: e_cwnd,
        mean_bps: stats.mean,
        stddev_bps: stats.stddev,
        q05_bps: stats.q05,
        q50_bps: stats.q50,
        q95_bps: stats.q95,
        sigma: a.sigma,
        ks_to_lognormal: ks_distance(&dist, e_cwnd, a.sigma),
    };

    let dir = &a.out.out_dir;
    create_dir(dir)?;
    let id = format!(
        "solve-{}",
        content_id(&(a.p_loss, a.a, a.rtt, a.mss, a.cwnd_max, a.sigma), "solve")
    );
    let cdf = dist.cdf();
    let pmf_rows = dist
        .iter()
        .zip(&pmf.points)
        .zip(&cdf)
        .map(|(((s, p), (r, _)), c)| {
            vec![s.to_string(), p.to_string(), r.to_string(), c.to_string()]
        });
    let lognormal_rows = dist.iter().zip(&cdf).map(|((s, _), c)| {
        let upper = s as f64 + 1.0;
        vec![
            s.to_string(),
            c.to_string(),
            lognormal_cdf(upper, e_cwnd, a.sigma).to_string(),
        ]
    });
    let files = [
        write_file(
            &metric_file(dir, &id, "pmf"),
            &csv("cwnd,probability,rate_bps,cdf", pmf_rows),
        )?,
        write_file(
            &metric_file(dir, &id, "lognormal"),
            &csv("cwnd,chain_cdf,lognormal_cdf", lognormal_rows),
        )?,
        write_json(&dir.join(format!("{id}.summary.json")), &summary)?,
    ];

    println!(
        "p_loss {:e}: q05 {:.2}  q50 {:.2}  q95 {:.2}  mean {:.2} Mbit/s  (cwnd_max {}{}, KS to log-normal {:.4})",
        a.p_loss,
        stats.q05 / 1e6,
        stats.q50 / 1e6,
        stats.q95 / 1e6,
        stats.mean / 1e6,
        summary.cwnd_max,
        if summary.cwnd_max_auto { " auto" } else { "" },
        summary.ks_to_lognormal
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

/// Scenario configuration from a file or from flags.
pub fn scenario_from_args(a: &SimulateArgs) -> Result<ScenarioConfig, Failure> {
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        return parse_config(&text, path).map_err(|e| match e {
            Error::Parse { .. } => Failure::Usage(e.to_string()),
            other => other.into(),
        });
    }
    let kind = a
        .scenario
        .ok_or_else(|| Failure::Usage("--scenario or --config is required".into()))?;
    let flavors = match &a.flows {
        Some(s) => parse_flows(s).map_err(Failure::Usage)?,
        None if kind == ScenarioKind::FiniteFlow => Vec::new(),
        None => vec![a.flavor],
    };
    let tcp_for = |f: Flavor| TcpParams::new(a.mss, a.rtt, a.a, f);
    let warmup = a.warmup.unwrap_or_else(|| default_warmup(a.duration));
    let need = |name: &str| Failure::Usage(format!("--{name} is required for this scenario"));

    let (flows, link, p_loss, reaction, finite) = match kind {
        ScenarioKind::RandomDrop => {
            if flavors.len() != 1 {
                return Err(Failure::Usage("random drop takes exactly one flow".into()));
            }
            let p = a.p_loss.ok_or_else(|| need("p-loss"))?;
            let tcp = tcp_for(flavors[0])?;
            let initial = if p > 0.0 && p < 1.0 {
                expected_cwnd(p, &tcp)?.max(tcpspread::flow::MIN_CWND)
            } else {
                tcpspread::flow::MIN_CWND
            };
            let flows = vec![FlowConfig::new(tcp, initial)?];
            (flows, None, Some(p), LossReaction::PerLoss, None)
        }
        ScenarioKind::SharedBottleneck | ScenarioKind::FiniteFlow => {
            let capacity = a.capacity.ok_or_else(|| need("capacity"))?;
            let mut link = LinkSpec::with_bdp_buffer(capacity, a.rtt);
            if let Some(b) = a.buffer {
                link.buffer_bytes = b;
            }
            let total = flavors.len() + usize::from(kind == ScenarioKind::FiniteFlow);
            let flows = flavors
                .iter()
                .map(|&f| {
                    let tcp = tcp_for(f)?;
                    FlowConfig::new(tcp, fair_share_cwnd(&tcp, &link, total))
                })
                .collect::<tcpspread::Result<Vec<_>>>()?;
            let finite = if kind == ScenarioKind::FiniteFlow {
                Some(FiniteSpec {
                    flow: FlowConfig::new(tcp_for(a.finite_flavor)?, 10.0)?,
                    volume_bytes: a.volume,
                    gap_s: DEFAULT_FINITE_GAP_S,
                    repetitions: a.repetitions,
                })
            } else {
                None
            };
            (flows, Some(link), None, LossReaction::PerWindow, finite)
        }
    };
    let cfg = ScenarioConfig {
        scenario: kind,
        flows,
        link,
        p_loss,
        duration_s: a.duration,
        seed: a.seed,
        loss_reaction: a.mode.unwrap_or(reaction),
        interval_s: a.interval,
        warmup_s: warmup,
        finite,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let cfg = scenario_from_args(a)?;
    let out = sim::run(&cfg)?;
    let dir = &a.out.out_dir;
    let rec = write_trace(&out.trace, dir)?;
    println!("run_id {}", rec.run_id);
    println!("wrote {}", rec.trace_path.display());
    println!("wrote {}", rec.meta_path.display());
    if let Some(times) = &out.completion_times {
        let rows = times
            .iter()
            .enumerate()
            .map(|(i, t)| vec![i.to_string(), t.to_string()]);
        let path = write_file(
            &metric_file(dir, &rec.run_id, "completion"),
            &csv("repetition,completion_s", rows),
        )?;
        println!("wrote {}", path.display());
        println!("{} completions", times.len());
    }
    for (f, c) in rec.counters.iter().enumerate() {
        println!(
            "flow {f}: sent {} delivered {} dropped {} loss {:.3e}",
            c.sent,
            c.delivered,
            c.dropped,
            sim::measured_loss_ratio(&out.trace.meta, f)
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FlowSummary {
    flow: usize,
    samples: usize,
    mean_bps: f64,
    stddev_bps: f64,
    /// `(percent, rate_bps)` pairs.
    quantiles: Vec<(f64, f64)>,
    convergence_50_s: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AnalyzeSummary {
    run_id: String,
    interval_s: f64,
    start_s: f64,
    warnings: Vec<String>,
    flows: Vec<FlowSummary>,
}

pub fn analyze(a: &AnalyzeArgs) -> Result<(), Failure> {
    if let Some(q) = a.quantiles.iter().find(|q| !(**q > 0.0 && **q <= 100.0)) {
        return Err(Failure::Usage(format!("quantile {q} is outside (0, 100]")));
    }
    if !(a.bin_width > 0.0) {
        return Err(Failure::Usage("--bin-width must be > 0".into()));
    }
    let loaded = read_trace(&a.trace)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let trace = if a.keep_warmup {
        loaded.trace.clone()
    } else {
        loaded.trace.steady_state()
    };
    if trace.num_intervals() == 0 || trace.num_flows() == 0 {
        return Err(Error::InsufficientData(format!(
            "{} has no intervals to analyze",
            a.trace.display()
        ))
        .into());
    }

    let mut hist_rows = Vec::new();
    let mut sd_rows = Vec::new();
    let mut flows = Vec::new();
    for f in 0..trace.num_flows() {
        let rates = trace.rates_bps(f);
        for (bin, density) in histogram(&rates, a.bin_width)? {
            hist_rows.push(vec![f.to_string(), bin.to_string(), density.to_string()]);
        }
        let curve = stddev_vs_interval(&trace, f, &a.intervals)?;
        for (t, sd) in &curve {
            sd_rows.push(vec![f.to_string(), t.to_string(), sd.to_string()]);
        }
        let mut sorted = rates.clone();
        sorted.sort_by(f64::total_cmp);
        let (mean, sd) = mean_stddev(&rates);
        flows.push(FlowSummary {
            flow: f,
            samples: rates.len(),
            mean_bps: mean,
            stddev_bps: sd,
            quantiles: a
                .quantiles
                .iter()
                .map(|&q| (q, nearest_rank(&sorted, q / 100.0)))
                .collect(),
            convergence_50_s: convergence_interval_50(&curve).ok(),
        });
    }

    let dir = &a.out.out_dir;
    create_dir(dir)?;
    let id = &loaded.run_id;
    let summary = AnalyzeSummary {
        run_id: id.clone(),
        interval_s: trace.interval_s,
        start_s: trace.start_s,
        warnings: loaded.warnings.clone(),
        flows,
    };
    let files = [
        write_file(
            &metric_file(dir, id, "hist"),
            &csv("flow_id,bin_start_bps,density", hist_rows),
        )?,
        write_file(
            &metric_file(dir, id, "stddev"),
            &csv("flow_id,interval_s,stddev_bps", sd_rows),
        )?,
        write_json(&dir.join(format!("{id}.summary.json")), &summary)?,
    ];
    for s in &summary.flows {
        let qs: Vec<String> = s
            .quantiles
            .iter()
            .map(|(q, r)| format!("q{q} {:.2}", r / 1e6))
            .collect();
        let conv = s
            .convergence_50_s
            .map_or("not reached".to_string(), |t| format!("{t:.1} s"));
        println!(
            "flow {}: mean {:.2} sd {:.2} {} Mbit/s, 50% convergence {conv}",
            s.flow,
            s.mean_bps / 1e6,
            s.stddev_bps / 1e6,
            qs.join(" ")
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    let opts = VerifyOptions {
        quick: a.quick,
        only: a.only.clone(),
        sigma: a.sigma,
    };
    if let Some(id) = opts.only.iter().find(|id| !(1..=10).contains(*id)) {
        return Err(Failure::Usage(format!("there is no check {id}")));
    }
    let results = run_checks(&opts);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} of {} checks passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        Err(Failure::Verification(failed))
    } else {
        Ok(())
    }
}
