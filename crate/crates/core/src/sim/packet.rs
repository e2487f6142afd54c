//! Packet-level event simulation of flows through one tail-drop bottleneck.
//!
//! Path of a data packet: the sender emits it (after a host scheduling
//! jitter of up to one bottleneck transmission time), it travels half the
//! base RTT to the bottleneck, is either tail-dropped or queued and served
//! at link rate, and its delivery is reported back to the sender after
//! another half base RTT. The return path is lossless. Receivers acknowledge
//! every `a`-th segment (immediately after a gap, or after 40 ms), so each
//! ACK releases a small back-to-back burst at the sender.
//!
//! Loss detection abstracts duplicate ACKs: since packets of one flow are
//! never reordered, any packet sent before a delivered one is missing; it is
//! declared lost after three later deliveries, or at once when nothing else
//! is outstanding. A retransmission timer (longer than the largest possible
//! RTT, so never spurious) recovers fully lost windows.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;

use super::rng::{flow_stream, SimRng};
use super::trace::{FlowCounters, RateTrace, TraceMeta};
use super::{LossReaction, ScenarioConfig, ScenarioKind, ENGINE_VERSION};
use crate::error::{invalid, Result};
use crate::flow::{FlowConfig, FlowState, HyStart};
use crate::formulas::Flavor;

const NS_PER_S: f64 = 1e9;
const DUP_THRESHOLD: u32 = 3;
const MIN_RTO_S: f64 = 0.2;
const DELAYED_ACK_S: f64 = 0.04;

type Nanos = u64;

fn to_ns(s: f64) -> Nanos {
    (s * NS_PER_S).round() as Nanos
}

fn to_s(ns: Nanos) -> f64 {
    ns as f64 / NS_PER_S
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    flow: u32,
    generation: u32,
    tx: u64,
    size: u64,
    sent_at: Nanos,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Arrive(Packet),
    Departure,
    /// The oldest ACK in flight for `flow` reaches the sender.
    Ack {
        flow: u32,
    },
    DelayedAck {
        flow: u32,
        token: u64,
    },
    Timeout {
        flow: u32,
        generation: u32,
    },
    Start {
        flow: u32,
    },
}

#[derive(Debug)]
struct Scheduled {
    at: Nanos,
    order: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.order) == (other.at, other.order)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.order).cmp(&(other.at, other.order))
    }
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    tx: u64,
    seq: u64,
    sent_at: Nanos,
}

#[derive(Debug, Clone, Copy)]
struct Suspect {
    tx: u64,
    seq: u64,
    later_deliveries: u32,
}

struct Sender {
    cfg: FlowConfig,
    state: FlowState,
    rng: SimRng,
    segment: u64,
    active: bool,
    generation: u32,
    next_tx: u64,
    next_seq: u64,
    /// Segments to transfer; `None` for long-lived flows.
    volume: Option<u64>,
    acked_segments: u64,
    outstanding: VecDeque<InFlight>,
    suspects: VecDeque<Suspect>,
    retransmit: VecDeque<u64>,
    in_recovery: bool,
    recovery_point: Option<u64>,
    last_emit: Nanos,
    last_progress: Nanos,
    timer_armed: bool,
    started_at: Nanos,
    counters: FlowCounters,
    /// Receiver: transmissions delivered but not yet acknowledged.
    rx_pending: Vec<u64>,
    rx_expected: u64,
    rx_token: u64,
    /// ACKs on the return path, oldest first, tagged with the generation.
    acks: VecDeque<(u32, Vec<u64>)>,
    ack_every: usize,
    hystart: Option<HyStart>,
}

impl Sender {
    fn new(cfg: FlowConfig, rng: SimRng, volume: Option<u64>) -> Self {
        Self {
            state: FlowState::congestion_avoidance(&cfg, 0.0),
            segment: cfg.tcp.mss_bytes.round() as u64,
            cfg,
            rng,
            active: false,
            generation: 0,
            next_tx: 0,
            next_seq: 0,
            volume,
            acked_segments: 0,
            outstanding: VecDeque::new(),
            suspects: VecDeque::new(),
            retransmit: VecDeque::new(),
            in_recovery: false,
            recovery_point: None,
            last_emit: 0,
            last_progress: 0,
            timer_armed: false,
            started_at: 0,
            counters: FlowCounters::default(),
            rx_pending: Vec::new(),
            rx_expected: 0,
            rx_token: 0,
            acks: VecDeque::new(),
            ack_every: (cfg.tcp.ack_ratio.round() as usize).max(1),
            hystart: None,
        }
    }

    fn in_flight(&self) -> u64 {
        (self.outstanding.len() + self.suspects.len()) as u64
    }

    fn restart(&mut self, now: Nanos, slow_start: bool) {
        self.generation += 1;
        self.active = true;
        self.state = if slow_start {
            FlowState::slow_start(&self.cfg, to_s(now))
        } else {
            FlowState::congestion_avoidance(&self.cfg, to_s(now))
        };
        self.next_seq = 0;
        self.acked_segments = 0;
        self.outstanding.clear();
        self.suspects.clear();
        self.retransmit.clear();
        self.in_recovery = false;
        self.recovery_point = None;
        self.last_progress = now;
        self.timer_armed = false;
        self.started_at = now;
        self.rx_pending.clear();
        self.rx_token += 1;
        self.hystart = (slow_start && self.cfg.flavor() == Flavor::Cubic).then(HyStart::new);
    }

    fn record_rtt(&mut self, rtt_s: f64) {
        let c = &mut self.counters;
        c.min_rtt_s = Some(c.min_rtt_s.map_or(rtt_s, |m| m.min(rtt_s)));
        c.max_rtt_s = Some(c.max_rtt_s.map_or(rtt_s, |m| m.max(rtt_s)));
    }
}

/// Result of a finite-flow run.
#[derive(Debug, Clone)]
pub struct FiniteFlowRun {
    pub trace: RateTrace,
    pub completion_times: Vec<f64>,
}

struct Engine {
    reaction: LossReaction,
    heap: BinaryHeap<Reverse<Scheduled>>,
    order: u64,
    now: Nanos,
    end: Nanos,
    one_way: Nanos,
    service_ns_per_byte: f64,
    jitter: Nanos,
    rto: Nanos,
    queue: VecDeque<Packet>,
    occupancy: u64,
    buffer: u64,
    max_occupancy: u64,
    senders: Vec<Sender>,
    interval: Nanos,
    bins: Vec<Vec<u64>>,
    finite: Option<FiniteRunState>,
}

struct FiniteRunState {
    flow: usize,
    gap: Nanos,
    remaining: Option<u32>,
    completions: Vec<f64>,
}

impl Engine {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let link = cfg
            .link
            .ok_or_else(|| invalid("link", "bottleneck scenarios need a link"))?;
        let n_bins = (cfg.duration_s / cfg.interval_s).round() as usize;
        let mut senders: Vec<Sender> = cfg
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| Sender::new(*f, flow_stream(cfg.seed, i as u64), None))
            .collect();
        let mut finite = None;
        if let Some(spec) = cfg.finite {
            let id = senders.len();
            let segment = spec.flow.tcp.mss_bytes.round() as u64;
            let volume = spec.volume_bytes.div_ceil(segment);
            senders.push(Sender::new(
                spec.flow,
                flow_stream(cfg.seed, id as u64),
                Some(volume),
            ));
            finite = Some(FiniteRunState {
                flow: id,
                gap: to_ns(spec.gap_s),
                remaining: spec.repetitions,
                completions: Vec::new(),
            });
        }
        let largest_segment = senders.iter().map(|s| s.segment).max().unwrap_or(1);
        let service_ns_per_byte = 8.0 * NS_PER_S / link.capacity_bps;
        let max_rtt = link.base_rtt_s + link.max_queue_delay_s();
        Ok(Self {
            reaction: cfg.loss_reaction,
            heap: BinaryHeap::new(),
            order: 0,
            now: 0,
            end: to_ns(cfg.duration_s),
            one_way: to_ns(link.base_rtt_s / 2.0),
            service_ns_per_byte,
            jitter: (largest_segment as f64 * service_ns_per_byte).round() as Nanos,
            rto: to_ns((2.0 * max_rtt).max(MIN_RTO_S)),
            queue: VecDeque::new(),
            occupancy: 0,
            buffer: link.buffer_bytes,
            max_occupancy: 0,
            bins: vec![vec![0; n_bins]; senders.len()],
            senders,
            interval: to_ns(cfg.interval_s),
            finite,
        })
    }

    fn schedule(&mut self, at: Nanos, event: Event) {
        debug_assert!(at >= self.now);
        self.order += 1;
        self.heap.push(Reverse(Scheduled {
            at,
            order: self.order,
            event,
        }));
    }

    fn service_time(&self, bytes: u64) -> Nanos {
        (bytes as f64 * self.service_ns_per_byte).round() as Nanos
    }

    fn run(&mut self, long_lived: usize) {
        for f in 0..long_lived {
            // Stagger starts over one base RTT.
            let offset = self.senders[f].rng.gen_range(0..2 * self.one_way.max(1));
            self.schedule(offset, Event::Start { flow: f as u32 });
        }
        while let Some(Reverse(next)) = self.heap.pop() {
            if next.at >= self.end {
                break;
            }
            debug_assert!(next.at >= self.now, "event time went backwards");
            self.now = next.at;
            match next.event {
                Event::Arrive(p) => self.on_arrive(p),
                Event::Departure => self.on_departure(),
                Event::Ack { flow } => self.on_ack(flow as usize),
                Event::DelayedAck { flow, token } => {
                    let s = &self.senders[flow as usize];
                    if s.rx_token == token && !s.rx_pending.is_empty() {
                        self.flush_acks(flow as usize);
                    }
                }
                Event::Timeout { flow, generation } => self.on_timeout(flow as usize, generation),
                Event::Start { flow } => self.on_start(flow as usize),
            }
        }
    }

    fn on_start(&mut self, f: usize) {
        let now = self.now;
        let finite = self.finite.as_ref().is_some_and(|fin| fin.flow == f);
        self.senders[f].restart(now, finite);
        self.try_send(f);
    }

    fn on_arrive(&mut self, p: Packet) {
        if self.occupancy + p.size > self.buffer {
            self.senders[p.flow as usize].counters.dropped += 1;
            return;
        }
        self.occupancy += p.size;
        self.max_occupancy = self.max_occupancy.max(self.occupancy);
        self.queue.push_back(p);
        if self.queue.len() == 1 {
            let t = self.now + self.service_time(p.size);
            self.schedule(t, Event::Departure);
        }
    }

    fn on_departure(&mut self) {
        let p = self
            .queue
            .pop_front()
            .expect("departure scheduled with an empty queue");
        self.occupancy -= p.size;
        let f = p.flow as usize;
        self.senders[f].counters.delivered += 1;
        let bin = (self.now / self.interval) as usize;
        if let Some(b) = self.bins[f].get_mut(bin) {
            *b += p.size;
        }
        self.receive(f, p);
        if let Some(head) = self.queue.front() {
            let t = self.now + self.service_time(head.size);
            self.schedule(t, Event::Departure);
        }
    }

    /// Receiver side: acknowledges every `a`-th segment, at once after a
    /// gap, and otherwise after the delayed-ACK timeout.
    fn receive(&mut self, f: usize, p: Packet) {
        let now = self.now;
        let s = &mut self.senders[f];
        if s.generation != p.generation || !s.active {
            return;
        }
        // Path RTT of this segment, excluding any receiver ACK delay.
        s.record_rtt(to_s(now + self.one_way - p.sent_at));
        let gap = p.tx != s.rx_expected;
        s.rx_expected = p.tx + 1;
        s.rx_pending.push(p.tx);
        if gap || s.rx_pending.len() >= s.ack_every {
            self.flush_acks(f);
        } else if s.rx_pending.len() == 1 {
            let token = s.rx_token;
            self.schedule(
                now + to_ns(DELAYED_ACK_S),
                Event::DelayedAck {
                    flow: f as u32,
                    token,
                },
            );
        }
    }

    fn flush_acks(&mut self, f: usize) {
        let at = self.now + self.one_way;
        let s = &mut self.senders[f];
        s.rx_token += 1;
        let batch = std::mem::take(&mut s.rx_pending);
        s.acks.push_back((s.generation, batch));
        self.schedule(at, Event::Ack { flow: f as u32 });
    }

    fn on_ack(&mut self, f: usize) {
        let (generation, batch) = self.senders[f]
            .acks
            .pop_front()
            .expect("ACK event without an ACK in flight");
        {
            let now = self.now;
            let s = &mut self.senders[f];
            if !s.active || s.generation != generation {
                return;
            }
            if let (Some(h), Some(&last)) = (s.hystart.as_mut(), batch.last()) {
                if s.state.slow_start {
                    let sent_at = s
                        .outstanding
                        .binary_search_by_key(&last, |x| x.tx)
                        .ok()
                        .map(|i| s.outstanding[i].sent_at);
                    if let Some(sent_at) = sent_at {
                        let rtt = to_s(now - sent_at);
                        if h.on_ack(to_s(now), rtt, last, s.next_tx, s.state.cwnd) {
                            s.state.leave_slow_start(to_s(now));
                        }
                    }
                }
            }
        }
        for tx in batch {
            if self.process_delivery(f, tx) {
                return;
            }
        }
        self.try_send(f);
    }

    /// Sender bookkeeping for one delivered transmission; true once a
    /// finite flow has completed.
    fn process_delivery(&mut self, f: usize, tx: u64) -> bool {
        let now = self.now;
        let now_s = to_s(now);
        let reaction = self.reaction;
        let s = &mut self.senders[f];
        while let Some(front) = s.outstanding.front() {
            if front.tx >= tx {
                break;
            }
            let gap = s.outstanding.pop_front().unwrap();
            s.suspects.push_back(Suspect {
                tx: gap.tx,
                seq: gap.seq,
                later_deliveries: 0,
            });
        }
        let acked = s
            .outstanding
            .pop_front()
            .expect("acknowledged packet must be outstanding");
        debug_assert_eq!(acked.tx, tx);
        s.last_progress = now;
        s.acked_segments += 1;

        for sus in s.suspects.iter_mut() {
            sus.later_deliveries += 1;
        }
        let mut lost = Vec::new();
        while s
            .suspects
            .front()
            .is_some_and(|x| x.later_deliveries >= DUP_THRESHOLD)
        {
            lost.push(s.suspects.pop_front().unwrap());
        }
        if s.outstanding.is_empty() {
            // Nothing left to produce further deliveries.
            lost.extend(s.suspects.drain(..));
        }
        for l in lost {
            handle_loss(s, reaction, l.tx, l.seq, now_s);
        }

        if s.in_recovery && s.recovery_point.is_some_and(|rp| tx >= rp) {
            s.in_recovery = false;
        }
        if s.in_recovery {
            s.state.bytes_delivered += s.segment;
        } else {
            let cfg = s.cfg;
            s.state.on_delivered(&cfg, 1, now_s);
        }

        if let Some(volume) = s.volume {
            if s.acked_segments >= volume {
                self.complete_finite(f);
                return true;
            }
        }
        false
    }

    fn complete_finite(&mut self, f: usize) {
        let now = self.now;
        let s = &mut self.senders[f];
        s.active = false;
        s.generation += 1;
        let elapsed = to_s(now - s.started_at);
        let fin = self.finite.as_mut().expect("finite flow state");
        fin.completions.push(elapsed);
        if let Some(r) = fin.remaining.as_mut() {
            *r = r.saturating_sub(1);
            if *r == 0 {
                self.end = self.end.min(now + 1);
                return;
            }
        }
        let at = now + fin.gap;
        self.schedule(at, Event::Start { flow: f as u32 });
    }

    fn on_timeout(&mut self, f: usize, generation: u32) {
        let now = self.now;
        let rto = self.rto;
        let s = &mut self.senders[f];
        if s.generation != generation {
            return;
        }
        s.timer_armed = false;
        if !s.active || s.in_flight() == 0 {
            return;
        }
        if now >= s.last_progress + rto {
            s.counters.timeouts += 1;
            let mut seqs: Vec<u64> = s
                .suspects
                .drain(..)
                .map(|x| x.seq)
                .chain(s.outstanding.drain(..).map(|x| x.seq))
                .collect();
            seqs.sort_unstable();
            s.counters.losses_detected += seqs.len() as u64;
            let cfg = s.cfg;
            s.state.on_loss(&cfg, to_s(now));
            s.counters.reductions += 1;
            s.in_recovery = true;
            s.recovery_point = Some(s.next_tx);
            s.retransmit.extend(seqs);
            s.last_progress = now;
            self.try_send(f);
        } else {
            let at = s.last_progress + rto;
            s.timer_armed = true;
            let generation = s.generation;
            self.schedule(
                at,
                Event::Timeout {
                    flow: f as u32,
                    generation,
                },
            );
        }
    }

    fn try_send(&mut self, f: usize) {
        let now = self.now;
        let one_way = self.one_way;
        let jitter = self.jitter;
        let rto = self.rto;
        let mut to_schedule: Vec<(Nanos, Event)> = Vec::new();
        {
            let s = &mut self.senders[f];
            if !s.active {
                return;
            }
            // One host delay per burst; the burst itself leaves back to back.
            let delay = if jitter > 0 {
                s.rng.gen_range(0..jitter)
            } else {
                0
            };
            while s.in_flight() < s.state.send_limit() {
                let seq = if let Some(seq) = s.retransmit.pop_front() {
                    s.counters.retransmits += 1;
                    seq
                } else {
                    if s.volume.is_some_and(|v| s.next_seq >= v) {
                        break;
                    }
                    s.next_seq += 1;
                    s.next_seq - 1
                };
                let emit = (now + delay).max(s.last_emit);
                s.last_emit = emit;
                let tx = s.next_tx;
                s.next_tx += 1;
                s.outstanding.push_back(InFlight {
                    tx,
                    seq,
                    sent_at: emit,
                });
                s.counters.sent += 1;
                let packet = Packet {
                    flow: f as u32,
                    generation: s.generation,
                    tx,
                    size: s.segment,
                    sent_at: emit,
                };
                to_schedule.push((emit + one_way, Event::Arrive(packet)));
            }
            if !s.timer_armed && s.in_flight() > 0 {
                s.timer_armed = true;
                to_schedule.push((
                    s.last_progress.max(now) + rto,
                    Event::Timeout {
                        flow: f as u32,
                        generation: s.generation,
                    },
                ));
            }
        }
        for (at, ev) in to_schedule {
            self.schedule(at, ev);
        }
    }

    fn finish(self, cfg: &ScenarioConfig) -> (RateTrace, Vec<f64>) {
        let in_queue = {
            let mut v = vec![0u64; self.senders.len()];
            for p in &self.queue {
                v[p.flow as usize] += 1;
            }
            v
        };
        let counters: Vec<FlowCounters> = self
            .senders
            .iter()
            .map(|s| {
                let mut c = s.counters;
                c.in_flight_end = c.sent - c.delivered - c.dropped;
                c
            })
            .collect();
        debug_assert!(counters
            .iter()
            .zip(&in_queue)
            .all(|(c, &q)| c.in_flight_end >= q));
        let segment_bytes = self.senders.iter().map(|s| s.segment).collect();
        let completions = self.finite.map(|f| f.completions).unwrap_or_default();
        let trace = RateTrace {
            interval_s: cfg.interval_s,
            start_s: 0.0,
            bytes: self.bins,
            meta: TraceMeta {
                config: cfg.clone(),
                seed: cfg.seed,
                engine_version: ENGINE_VERSION.to_string(),
                counters,
                segment_bytes,
                max_queue_bytes: Some(self.max_occupancy),
                cwnd_occupancy: None,
                completion_times: cfg.finite.map(|_| completions.clone()),
            },
        };
        (trace, completions)
    }
}

fn handle_loss(s: &mut Sender, reaction: LossReaction, tx: u64, seq: u64, now_s: f64) {
    s.counters.losses_detected += 1;
    let reduce = match reaction {
        LossReaction::PerLoss => true,
        LossReaction::PerWindow => s.recovery_point.is_none_or(|rp| tx >= rp),
    };
    if reduce {
        let cfg = s.cfg;
        s.state.on_loss(&cfg, now_s);
        s.counters.reductions += 1;
        s.in_recovery = true;
        s.recovery_point = Some(s.next_tx);
    }
    s.retransmit.push_back(seq);
}

/// Runs a [`ScenarioKind::SharedBottleneck`] configuration.
pub fn run_shared_bottleneck(cfg: &ScenarioConfig) -> Result<RateTrace> {
    cfg.validate()?;
    if cfg.scenario != ScenarioKind::SharedBottleneck {
        return Err(invalid("scenario", "expected shared-bottleneck"));
    }
    let mut engine = Engine::new(cfg)?;
    engine.run(cfg.flows.len());
    Ok(engine.finish(cfg).0)
}

/// Runs a [`ScenarioKind::FiniteFlow`] configuration.
///
/// The finite flow first starts at the end of the warm-up and restarts
/// `gap_s` after each completion. Completion is the time from its start
/// until the sender has seen every segment acknowledged.
pub fn run_finite_flow(cfg: &ScenarioConfig) -> Result<FiniteFlowRun> {
    cfg.validate()?;
    if cfg.scenario != ScenarioKind::FiniteFlow {
        return Err(invalid("scenario", "expected finite-flow"));
    }
    let mut engine = Engine::new(cfg)?;
    let first = to_ns(cfg.warmup_s).max(1);
    let fin = engine.finite.as_ref().expect("validated").flow;
    engine.schedule(first, Event::Start { flow: fin as u32 });
    engine.run(cfg.flows.len());
    let (trace, completion_times) = engine.finish(cfg);
    Ok(FiniteFlowRun {
        trace,
        completion_times,
    })
}
