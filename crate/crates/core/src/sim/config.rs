//! Plain-text scenario files.
//!
//! One `key = value` pair per line; `#` starts a comment. Top-level keys
//! describe the scenario and link. Each `[flow]` section adds `count`
//! identical long-lived flows; a single `[finite]` section describes the
//! repeatedly started flow of a finite-flow run.
//!
//! ```text
//! scenario = shared
//! capacity_bps = 20e6
//! base_rtt_s = 0.1
//! duration_s = 7200
//! seed = 7
//!
//! [flow]
//! flavor = reno
//! count = 2
//! ```

use std::path::Path;

use super::{
    default_warmup, fair_share_cwnd, FiniteSpec, LinkSpec, LossReaction, ScenarioConfig,
    ScenarioKind, DEFAULT_FINITE_GAP_S,
};
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::formulas::{self, Flavor, TcpParams, DEFAULT_ACK_RATIO, DEFAULT_MSS_BYTES};

#[derive(Default)]
struct FlowSection {
    line: usize,
    flavor: Option<Flavor>,
    count: Option<usize>,
    mss_bytes: Option<f64>,
    rtt_s: Option<f64>,
    ack_ratio: Option<f64>,
    initial_cwnd: Option<f64>,
    volume_bytes: Option<u64>,
    gap_s: Option<f64>,
    repetitions: Option<u32>,
}

#[derive(Default)]
struct TopLevel {
    scenario: Option<ScenarioKind>,
    capacity_bps: Option<f64>,
    buffer_bytes: Option<u64>,
    base_rtt_s: Option<f64>,
    p_loss: Option<f64>,
    duration_s: Option<f64>,
    seed: Option<u64>,
    loss_reaction: Option<LossReaction>,
    interval_s: Option<f64>,
    warmup_s: Option<f64>,
}

enum Section {
    Top,
    Flow,
    Finite,
}

/// Parses a scenario file; `path` is only used in error messages.
pub fn parse_config(text: &str, path: &Path) -> Result<ScenarioConfig> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut top = TopLevel::default();
    let mut flows: Vec<FlowSection> = Vec::new();
    let mut finite: Option<FlowSection> = None;
    let mut section = Section::Top;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            match line {
                "[flow]" => {
                    flows.push(FlowSection {
                        line: lineno,
                        ..Default::default()
                    });
                    section = Section::Flow;
                }
                "[finite]" => {
                    if finite.is_some() {
                        return Err(err(lineno, "duplicate [finite] section".into()));
                    }
                    finite = Some(FlowSection {
                        line: lineno,
                        ..Default::default()
                    });
                    section = Section::Finite;
                }
                other => return Err(err(lineno, format!("unknown section {other}"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(lineno, format!("expected `key = value`, got `{line}`")))?;
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| err(lineno, format!("`{key}`: not a number: `{v}`")))
        };
        let int = |v: &str| -> Result<u64> {
            // Accept 12e6-style integers too.
            v.parse::<u64>().or_else(|_| {
                let x = num(v)?;
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as u64)
                } else {
                    Err(err(
                        lineno,
                        format!("`{key}`: not a nonnegative integer: `{v}`"),
                    ))
                }
            })
        };
        let wrap = |e: Error| err(lineno, e.to_string());
        match section {
            Section::Top => match key {
                "scenario" => top.scenario = Some(value.parse().map_err(wrap)?),
                "capacity_bps" => top.capacity_bps = Some(num(value)?),
                "buffer_bytes" => top.buffer_bytes = Some(int(value)?),
                "base_rtt_s" => top.base_rtt_s = Some(num(value)?),
                "p_loss" => top.p_loss = Some(num(value)?),
                "duration_s" => top.duration_s = Some(num(value)?),
                "seed" => top.seed = Some(int(value)?),
                "loss_reaction" => top.loss_reaction = Some(value.parse().map_err(wrap)?),
                "interval_s" => top.interval_s = Some(num(value)?),
                "warmup_s" => top.warmup_s = Some(num(value)?),
                _ => return Err(err(lineno, format!("unknown key `{key}`"))),
            },
            Section::Flow | Section::Finite => {
                let sec = match section {
                    Section::Flow => flows.last_mut().unwrap(),
                    _ => finite.as_mut().unwrap(),
                };
                match key {
                    "flavor" => sec.flavor = Some(value.parse().map_err(wrap)?),
                    "count" => sec.count = Some(int(value)? as usize),
                    "mss_bytes" => sec.mss_bytes = Some(num(value)?),
                    "rtt_s" => sec.rtt_s = Some(num(value)?),
                    "ack_ratio" => sec.ack_ratio = Some(num(value)?),
                    "initial_cwnd" => sec.initial_cwnd = Some(num(value)?),
                    "volume_bytes" => sec.volume_bytes = Some(int(value)?),
                    "gap_s" => sec.gap_s = Some(num(value)?),
                    "repetitions" => sec.repetitions = Some(int(value)? as u32),
                    _ => return Err(err(lineno, format!("unknown key `{key}`"))),
                }
            }
        }
    }

    let scenario = top
        .scenario
        .ok_or_else(|| err(0, "missing `scenario`".into()))?;
    let duration_s = top
        .duration_s
        .ok_or_else(|| err(0, "missing `duration_s`".into()))?;
    let link = match (top.capacity_bps, top.base_rtt_s) {
        (Some(cap), Some(rtt)) => {
            let mut l = LinkSpec::with_bdp_buffer(cap, rtt);
            if let Some(b) = top.buffer_bytes {
                l.buffer_bytes = b;
            }
            Some(l)
        }
        (None, None) => None,
        _ => {
            return Err(err(
                0,
                "link needs both `capacity_bps` and `base_rtt_s`".into(),
            ))
        }
    };
    let default_rtt = top.base_rtt_s.unwrap_or(0.1);
    let tcp_of = |sec: &FlowSection| -> Result<TcpParams> {
        TcpParams::new(
            sec.mss_bytes.unwrap_or(DEFAULT_MSS_BYTES),
            sec.rtt_s.unwrap_or(default_rtt),
            sec.ack_ratio.unwrap_or(DEFAULT_ACK_RATIO),
            sec.flavor.unwrap_or(Flavor::Reno),
        )
        .map_err(|e| err(sec.line, e.to_string()))
    };

    let total_flows: usize =
        flows.iter().map(|f| f.count.unwrap_or(1)).sum::<usize>() + usize::from(finite.is_some());
    let mut flow_cfgs = Vec::new();
    for sec in &flows {
        let tcp = tcp_of(sec)?;
        let initial = match (sec.initial_cwnd, scenario, link) {
            (Some(w), _, _) => w,
            (None, ScenarioKind::RandomDrop, _) => match top.p_loss {
                Some(p) if p > 0.0 => formulas::expected_cwnd(p, &tcp)
                    .map_err(|e| err(sec.line, e.to_string()))?
                    .max(crate::flow::MIN_CWND),
                _ => crate::flow::MIN_CWND,
            },
            (None, _, Some(l)) => fair_share_cwnd(&tcp, &l, total_flows),
            (None, _, None) => crate::flow::MIN_CWND,
        };
        let fc = FlowConfig::new(tcp, initial).map_err(|e| err(sec.line, e.to_string()))?;
        for _ in 0..sec.count.unwrap_or(1) {
            flow_cfgs.push(fc);
        }
    }
    let finite = match finite {
        Some(sec) => {
            let tcp = tcp_of(&sec)?;
            Some(FiniteSpec {
                flow: FlowConfig::new(tcp, sec.initial_cwnd.unwrap_or(10.0))
                    .map_err(|e| err(sec.line, e.to_string()))?,
                volume_bytes: sec
                    .volume_bytes
                    .ok_or_else(|| err(sec.line, "[finite] needs `volume_bytes`".into()))?,
                gap_s: sec.gap_s.unwrap_or(DEFAULT_FINITE_GAP_S),
                repetitions: sec.repetitions,
            })
        }
        None => None,
    };

    let cfg = ScenarioConfig {
        scenario,
        flows: flow_cfgs,
        link,
        p_loss: top.p_loss,
        duration_s,
        seed: top.seed.unwrap_or(0),
        loss_reaction: top.loss_reaction.unwrap_or(match scenario {
            ScenarioKind::RandomDrop => LossReaction::PerLoss,
            _ => LossReaction::PerWindow,
        }),
        interval_s: top.interval_s.unwrap_or(1.0),
        warmup_s: top.warmup_s.unwrap_or(default_warmup(duration_s)),
        finite,
    };
    cfg.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_shared_file() {
        let text = "\
# two reno flows
scenario = shared
capacity_bps = 20e6
base_rtt_s = 0.1
duration_s = 7200
seed = 7

[flow]
flavor = reno
count = 2
";
        let cfg = parse_config(text, Path::new("x.conf")).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::SharedBottleneck);
        assert_eq!(cfg.flows.len(), 2);
        assert_eq!(cfg.link.unwrap().buffer_bytes, 250_000);
        assert_eq!(cfg.loss_reaction, LossReaction::PerWindow);
        assert!((cfg.flows[0].initial_cwnd - 82.56).abs() < 0.01);
    }

    #[test]
    fn parses_finite_section() {
        let text = "\
scenario = finite
capacity_bps = 100e6
base_rtt_s = 0.1
duration_s = 1000
[flow]
flavor = cubic
count = 9
[finite]
flavor = cubic
volume_bytes = 12e6
repetitions = 3
";
        let cfg = parse_config(text, Path::new("f.conf")).unwrap();
        let fin = cfg.finite.unwrap();
        assert_eq!(fin.volume_bytes, 12_000_000);
        assert_eq!(fin.repetitions, Some(3));
        assert_eq!(cfg.flows.len(), 9);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "scenario = shared\ncapacity_bps = fast\n";
        match parse_config(text, Path::new("bad.conf")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_config("scenario = shared\n[flows]\n", Path::new("bad.conf")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
