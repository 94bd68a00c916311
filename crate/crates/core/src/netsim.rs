//! Deterministic discrete-event model of the two-node testbed.
//!
//! A sender session paces updates into a forward channel (an optional FIFO
//! bottleneck followed by propagation delay and jitter), an echo monitor
//! reflects each arriving update through an independent reverse channel, and
//! a coalescing fault can make the monitor hold arrivals until several have
//! queued up. Everything random is drawn from one seed split into fixed
//! per-subsystem streams, so a `(config, seed)` pair replays bit for bit.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use thiserror::Error;

use crate::age::{AgeError, AgeTracker, DeliveryEvent, EpochAgeSummary};
use crate::session::{EpochRecord, SenderSession, SessionConfig, SessionCounters, SessionError};
use crate::time::{secs_to_nanos, Timestamp, NANOS_PER_MS, NANOS_PER_SEC};

const STREAM_FORWARD: u64 = 1;
const STREAM_REVERSE: u64 = 2;
const STREAM_SERVICE: u64 = 3;
const STREAM_FAULT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Age(#[from] AgeError),
    #[error("event queue ran dry at {at} before the session finished")]
    Starved { at: Timestamp },
}

/// A non-negative random delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayDist {
    Constant { ns: u64 },
    Exponential { mean_ns: u64 },
    /// `exp(N(mu, sigma))` milliseconds.
    LogNormal { mu: f64, sigma: f64 },
}

impl DelayDist {
    pub const ZERO: DelayDist = DelayDist::Constant { ns: 0 };

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            DelayDist::LogNormal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) => {
                Err(format!("lognormal parameters ({mu}, {sigma}) are invalid"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            DelayDist::Constant { ns } => ns,
            DelayDist::Exponential { mean_ns: 0 } => 0,
            DelayDist::Exponential { mean_ns } => {
                let exp = Exp::new(1.0).expect("unit rate");
                let x: f64 = exp.sample(rng);
                secs_to_nanos(x * mean_ns as f64 / NANOS_PER_SEC as f64)
            }
            DelayDist::LogNormal { mu, sigma } => {
                let d = LogNormal::new(mu, sigma).expect("validated");
                let ms: f64 = d.sample(rng);
                secs_to_nanos(ms / 1_000.0)
            }
        }
    }

    pub fn mean_ns(&self) -> f64 {
        match *self {
            DelayDist::Constant { ns } => ns as f64,
            DelayDist::Exponential { mean_ns } => mean_ns as f64,
            DelayDist::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp() * NANOS_PER_MS as f64,
        }
    }
}

/// One direction of the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub base_delay_ns: u64,
    pub jitter: DelayDist,
    pub loss_prob: f64,
    /// Per-packet service time of a FIFO bottleneck on the forward path
    /// (hotspot and radio contention). `Constant { ns: 0 }` disables it.
    pub service: DelayDist,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            base_delay_ns: 10 * NANOS_PER_MS,
            jitter: DelayDist::Exponential { mean_ns: 5 * NANOS_PER_MS },
            loss_prob: 0.005,
            service: DelayDist::Constant { ns: 4 * NANOS_PER_MS },
        }
    }
}

impl ChannelModel {
    pub fn constant(delay_ns: u64) -> Self {
        ChannelModel {
            base_delay_ns: delay_ns,
            jitter: DelayDist::ZERO,
            loss_prob: 0.0,
            service: DelayDist::ZERO,
        }
    }

    /// One-hop link with a few milliseconds of delay and a 500 packets/s
    /// bottleneck.
    pub fn small_delay() -> Self {
        ChannelModel {
            base_delay_ns: 2 * NANOS_PER_MS,
            jitter: DelayDist::Exponential { mean_ns: NANOS_PER_MS },
            loss_prob: 0.005,
            service: DelayDist::Constant { ns: 2 * NANOS_PER_MS },
        }
    }

    /// Reverse-direction counterpart: same delay and loss, no bottleneck.
    pub fn reversed(&self) -> Self {
        ChannelModel { service: DelayDist::ZERO, ..*self }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(format!("loss probability {} outside [0, 1]", self.loss_prob));
        }
        self.jitter.validate()?;
        self.service.validate()
    }
}

/// Receiver-buffer coalescing: while active, arrivals are held until
/// `hold_count` have queued or `flush_timeout_ns` has passed since the oldest
/// one, then all are released together in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalesceFault {
    pub hold_count: u32,
    pub flush_timeout_ns: u64,
    /// Episode onsets per second (Poisson); zero disables random episodes.
    pub onset_rate_per_sec: f64,
    pub episode_duration_ns: u64,
    /// Explicit `(start, duration_ns)` episodes.
    pub scheduled: Vec<(Timestamp, u64)>,
}

impl Default for CoalesceFault {
    fn default() -> Self {
        CoalesceFault {
            hold_count: 5,
            flush_timeout_ns: 500 * NANOS_PER_MS,
            onset_rate_per_sec: 1.0 / 60.0,
            episode_duration_ns: 5 * NANOS_PER_SEC,
            scheduled: Vec::new(),
        }
    }
}

impl CoalesceFault {
    pub fn disabled() -> Self {
        CoalesceFault { onset_rate_per_sec: 0.0, ..CoalesceFault::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hold_count == 0 {
            return Err("fault hold count must be at least 1".into());
        }
        if !(self.onset_rate_per_sec >= 0.0 && self.onset_rate_per_sec.is_finite()) {
            return Err(format!("fault onset rate {} is invalid", self.onset_rate_per_sec));
        }
        if self.onset_rate_per_sec > 0.0 && self.episode_duration_ns == 0 {
            return Err("fault episode duration must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub session: SessionConfig,
    pub forward: ChannelModel,
    pub reverse: ChannelModel,
    pub fault: CoalesceFault,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::with_channel(ChannelModel::default())
    }
}

impl SimConfig {
    pub fn with_channel(forward: ChannelModel) -> Self {
        SimConfig {
            session: SessionConfig::default(),
            reverse: forward.reversed(),
            forward,
            fault: CoalesceFault::default(),
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.forward.validate().map_err(SimError::Config)?;
        self.reverse.validate().map_err(SimError::Config)?;
        self.fault.validate().map_err(SimError::Config)?;
        self.session.policy.validate().map_err(SessionError::from)?;
        Ok(())
    }
}

/// Event kinds in tie-break order: measurement before control at equal times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SimEventKind {
    ChannelDeliver,
    AckDeliver,
    CoalesceFlush,
    FaultToggle,
    EpochBoundary,
    SendUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Payload {
    Packet { seq: u32, gen: Timestamp },
    Flush { token: u64 },
    Fault { on: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct SimEvent {
    time: Timestamp,
    kind: SimEventKind,
    order: u64,
    payload: Payload,
}

/// Per-update fate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketLog {
    pub seq: u32,
    pub gen_time: Timestamp,
    pub send_time: Timestamp,
    /// When the monitor processed the update.
    pub monitor_recv: Option<Timestamp>,
    pub ack_recv: Option<Timestamp>,
    pub lost_forward: bool,
    pub lost_reverse: bool,
    pub init_probe: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Conservation {
    pub sent: u64,
    pub acked: u64,
    pub lost_forward: u64,
    pub lost_reverse: u64,
    pub in_flight: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub rows: Vec<EpochRecord>,
    /// Monitor-side age over the whole epochs phase.
    pub monitor_summary: Option<EpochAgeSummary>,
    pub packets: Vec<PacketLog>,
    pub counters: SessionCounters,
    pub conservation: Conservation,
    /// Fault episodes that started during the run, `(start, end)`.
    pub fault_episodes: Vec<(Timestamp, Timestamp)>,
    pub epochs_start: Option<Timestamp>,
    pub end_time: Timestamp,
}

impl SimResult {
    /// Session time-average of the sender-side age.
    pub fn sender_avg_age_ns(&self) -> Option<f64> {
        let total: u64 = self.rows.iter().map(|r| r.epoch_len_ns()).sum();
        (total > 0).then(|| {
            self.rows.iter().map(|r| r.avg_age_ns * r.epoch_len_ns() as f64).sum::<f64>() / total as f64
        })
    }
}

/// FIFO hold buffer of the coalescing fault.
#[derive(Debug, Clone, Default)]
pub struct HoldBuffer {
    held: Vec<(Timestamp, u32, Timestamp)>,
    token: u64,
}

impl HoldBuffer {
    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    /// Token identifying the current batch; bumped on every release.
    pub fn token(&self) -> u64 {
        self.token
    }

    /// Holds an arrival. Returns the released batch if this arrival filled it,
    /// otherwise the flush deadline when the arrival opened a new batch.
    pub fn push(
        &mut self,
        now: Timestamp,
        seq: u32,
        gen: Timestamp,
        fault: &CoalesceFault,
    ) -> (Vec<(u32, Timestamp)>, Option<Timestamp>) {
        self.held.push((now, seq, gen));
        if self.held.len() as u32 >= fault.hold_count {
            return (self.release(), None);
        }
        let deadline = (self.held.len() == 1).then(|| now.saturating_add_nanos(fault.flush_timeout_ns));
        (Vec::new(), deadline)
    }

    pub fn release(&mut self) -> Vec<(u32, Timestamp)> {
        self.token += 1;
        self.held.drain(..).map(|(_, seq, gen)| (seq, gen)).collect()
    }
}

/// Forward transit: queueing at the bottleneck, then propagation and jitter.
/// Returns the arrival time at the monitor, or `None` if the packet is lost.
pub fn channel_transit(
    model: &ChannelModel,
    rng: &mut ChaCha8Rng,
    service_rng: &mut ChaCha8Rng,
    bottleneck_free_at: &mut Timestamp,
    now: Timestamp,
) -> Option<Timestamp> {
    let service = model.service.sample(service_rng);
    let departs = if service > 0 {
        let start = (*bottleneck_free_at).max(now);
        *bottleneck_free_at = start.saturating_add_nanos(service);
        *bottleneck_free_at
    } else {
        now
    };
    let lost = model.loss_prob > 0.0 && rng.random_bool(model.loss_prob);
    let jitter = model.jitter.sample(rng);
    if lost {
        return None;
    }
    Some(departs.saturating_add_nanos(model.base_delay_ns).saturating_add_nanos(jitter))
}

/// Echo semantics: the monitor reflects sequence number and generation time.
pub fn echo_monitor(seq: u32, gen: Timestamp) -> (u32, Timestamp) {
    (seq, gen)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Simulator {
    cfg: SimConfig,
    session: SenderSession,
    queue: BinaryHeap<Reverse<SimEvent>>,
    order: u64,
    forward_rng: ChaCha8Rng,
    reverse_rng: ChaCha8Rng,
    service_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    bottleneck_free_at: Timestamp,
    reverse_free_at: Timestamp,
    hold: HoldBuffer,
    fault_active: bool,
    fault_episodes: Vec<(Timestamp, Timestamp)>,
    monitor: AgeTracker,
    monitor_window_opened: bool,
    monitor_total: Option<EpochAgeSummary>,
    packets: Vec<PacketLog>,
    rows: Vec<EpochRecord>,
}

impl Simulator {
    fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let session = SenderSession::new(cfg.session.clone(), Timestamp::ZERO)?;
        let seed = cfg.seed;
        let mut sim = Simulator {
            session,
            queue: BinaryHeap::new(),
            order: 0,
            forward_rng: rng_for(seed, STREAM_FORWARD),
            reverse_rng: rng_for(seed, STREAM_REVERSE),
            service_rng: rng_for(seed, STREAM_SERVICE),
            fault_rng: rng_for(seed, STREAM_FAULT),
            bottleneck_free_at: Timestamp::ZERO,
            reverse_free_at: Timestamp::ZERO,
            hold: HoldBuffer::default(),
            fault_active: false,
            fault_episodes: Vec::new(),
            monitor: AgeTracker::new(),
            monitor_window_opened: false,
            monitor_total: None,
            packets: Vec::new(),
            rows: Vec::new(),
            cfg,
        };
        for &(start, dur) in &sim.cfg.fault.scheduled.clone() {
            sim.push(start, SimEventKind::FaultToggle, Payload::Fault { on: true });
            sim.push(start.saturating_add_nanos(dur), SimEventKind::FaultToggle, Payload::Fault { on: false });
            sim.fault_episodes.push((start, start.saturating_add_nanos(dur)));
        }
        sim.schedule_next_random_fault(Timestamp::ZERO);
        Ok(sim)
    }

    fn push(&mut self, time: Timestamp, kind: SimEventKind, payload: Payload) {
        self.order += 1;
        self.queue.push(Reverse(SimEvent { time, kind, order: self.order, payload }));
    }

    fn schedule_next_random_fault(&mut self, after: Timestamp) {
        let rate = self.cfg.fault.onset_rate_per_sec;
        if rate <= 0.0 {
            return;
        }
        let gap: f64 = Exp::new(rate).expect("positive rate").sample(&mut self.fault_rng);
        let start = after.saturating_add_nanos(secs_to_nanos(gap));
        let end = start.saturating_add_nanos(self.cfg.fault.episode_duration_ns);
        self.push(start, SimEventKind::FaultToggle, Payload::Fault { on: true });
        self.push(end, SimEventKind::FaultToggle, Payload::Fault { on: false });
        self.fault_episodes.push((start, end));
    }

    fn next_event(&self) -> Option<(Timestamp, SimEventKind)> {
        let mut best: Option<(Timestamp, SimEventKind)> = self.queue.peek().map(|Reverse(e)| (e.time, e.kind));
        for cand in [
            self.session.next_timer().map(|t| (t, SimEventKind::EpochBoundary)),
            self.session.next_send_time().map(|t| (t, SimEventKind::SendUpdate)),
        ]
        .into_iter()
        .flatten()
        {
            if best.is_none_or(|b| cand < b) {
                best = Some(cand);
            }
        }
        best
    }

    fn monitor_process(&mut self, now: Timestamp, seq: u32, gen: Timestamp) -> Result<(), SimError> {
        self.monitor.deliver(DeliveryEvent::new(u64::from(seq), gen, now))?;
        let log = &mut self.packets[seq as usize];
        log.monitor_recv.get_or_insert(now);
        let (ack_seq, ack_gen) = echo_monitor(seq, gen);
        let arrival = channel_transit(
            &self.cfg.reverse,
            &mut self.reverse_rng,
            &mut self.service_rng,
            &mut self.reverse_free_at,
            now,
        );
        match arrival {
            Some(at) => self.push(at, SimEventKind::AckDeliver, Payload::Packet { seq: ack_seq, gen: ack_gen }),
            None => self.packets[seq as usize].lost_reverse = true,
        }
        Ok(())
    }

    fn release_held(&mut self, now: Timestamp) -> Result<(), SimError> {
        for (seq, gen) in self.hold.release() {
            self.monitor_process(now, seq, gen)?;
        }
        Ok(())
    }

    fn sync_monitor_window(&mut self, now: Timestamp) -> Result<(), SimError> {
        if !self.monitor_window_opened && self.session.epochs_started_at().is_some() {
            let start = self.session.epochs_started_at().expect("checked");
            debug_assert_eq!(start, now);
            if start > self.monitor.window_start() {
                self.monitor.close_window(start)?;
            }
            self.monitor_window_opened = true;
        }
        Ok(())
    }

    fn record_epoch(&mut self, mut row: EpochRecord) -> Result<(), SimError> {
        let m = self.monitor.close_window(row.t_end)?;
        row.true_avg_age_ns = Some(m.avg_age_ns());
        self.monitor_total = Some(match self.monitor_total {
            None => m,
            Some(acc) => EpochAgeSummary {
                window_start: acc.window_start,
                window_end: m.window_end,
                twice_area: acc.twice_area + m.twice_area,
                peak_age_ns: acc.peak_age_ns.max(m.peak_age_ns),
                n_deliveries: acc.n_deliveries + m.n_deliveries,
            },
        });
        self.rows.push(row);
        Ok(())
    }

    fn run(mut self) -> Result<SimResult, SimError> {
        let mut now = Timestamp::ZERO;
        while !self.session.is_done() {
            let Some((t, kind)) = self.next_event() else {
                return Err(SimError::Starved { at: now });
            };
            now = t;
            match kind {
                SimEventKind::SendUpdate => {
                    let init_probe = self.session.in_init();
                    let u = self.session.on_send(now);
                    debug_assert_eq!(u.seq as usize, self.packets.len());
                    self.packets.push(PacketLog {
                        seq: u.seq,
                        gen_time: u.gen_time,
                        send_time: now,
                        monitor_recv: None,
                        ack_recv: None,
                        lost_forward: false,
                        lost_reverse: false,
                        init_probe,
                    });
                    let arrival = channel_transit(
                        &self.cfg.forward,
                        &mut self.forward_rng,
                        &mut self.service_rng,
                        &mut self.bottleneck_free_at,
                        now,
                    );
                    match arrival {
                        Some(at) => {
                            self.push(at, SimEventKind::ChannelDeliver, Payload::Packet { seq: u.seq, gen: u.gen_time })
                        }
                        None => self.packets[u.seq as usize].lost_forward = true,
                    }
                }
                SimEventKind::EpochBoundary => {
                    let row = self.session.on_timer(now)?;
                    self.sync_monitor_window(now)?;
                    if let Some(row) = row {
                        self.record_epoch(row)?;
                    }
                }
                _ => {
                    let Reverse(ev) = self.queue.pop().expect("peeked");
                    match (ev.kind, ev.payload) {
                        (SimEventKind::ChannelDeliver, Payload::Packet { seq, gen }) => {
                            if self.fault_active {
                                let (batch, deadline) = self.hold.push(now, seq, gen, &self.cfg.fault);
                                for (s, g) in batch {
                                    self.monitor_process(now, s, g)?;
                                }
                                if let Some(d) = deadline {
                                    let token = self.hold.token();
                                    self.push(d, SimEventKind::CoalesceFlush, Payload::Flush { token });
                                }
                            } else {
                                self.monitor_process(now, seq, gen)?;
                            }
                        }
                        (SimEventKind::AckDeliver, Payload::Packet { seq, gen }) => {
                            if self.session.on_ack(now, seq, gen)?.is_some() {
                                self.packets[seq as usize].ack_recv.get_or_insert(now);
                            }
                            self.sync_monitor_window(now)?;
                        }
                        (SimEventKind::CoalesceFlush, Payload::Flush { token }) => {
                            if token == self.hold.token() && !self.hold.is_empty() {
                                self.release_held(now)?;
                            }
                        }
                        (SimEventKind::FaultToggle, Payload::Fault { on }) => {
                            if on {
                                self.fault_active = true;
                            } else {
                                self.fault_active = false;
                                self.release_held(now)?;
                                if self.cfg.fault.onset_rate_per_sec > 0.0
                                    && self.fault_episodes.last().is_some_and(|&(_, end)| end == now)
                                {
                                    self.schedule_next_random_fault(now);
                                }
                            }
                        }
                        _ => unreachable!("payload does not match event kind"),
                    }
                }
            }
        }

        let mut conservation = Conservation::default();
        for p in &self.packets {
            conservation.sent += 1;
            if p.ack_recv.is_some() {
                conservation.acked += 1;
            } else if p.lost_forward {
                conservation.lost_forward += 1;
            } else if p.lost_reverse {
                conservation.lost_reverse += 1;
            } else {
                conservation.in_flight += 1;
            }
        }
        let fault_episodes = self.fault_episodes.into_iter().filter(|&(s, _)| s <= now).collect();
        Ok(SimResult {
            rows: self.rows,
            monitor_summary: self.monitor_total,
            packets: self.packets,
            counters: self.session.counters(),
            conservation,
            fault_episodes,
            epochs_start: self.session.epochs_started_at(),
            end_time: now,
        })
    }
}

/// Runs one seeded simulation to completion.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult, SimError> {
    Simulator::new(cfg.clone())?.run()
}

/// Recovery statistics of a run with one injected coalescing episode.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultScenarioOutcome {
    pub result: SimResult,
    pub fault_start: Timestamp,
    pub fault_end: Timestamp,
    /// Index of the first epoch whose sender-side average age exceeded the
    /// peak-age threshold at or after the fault onset.
    pub first_violation: Option<usize>,
    /// Epochs ending after the fault ended that still violated the threshold
    /// before the first compliant one; `None` if the run never recovered.
    pub recovery_epochs: Option<usize>,
    pub recovery_time_ns: Option<u64>,
}

/// Runs `cfg` with random fault episodes disabled and one episode of
/// `duration_ns` injected at `start`.
pub fn fault_recovery_scenario(cfg: &SimConfig, start: Timestamp, duration_ns: u64) -> Result<FaultScenarioOutcome, SimError> {
    let mut cfg = cfg.clone();
    cfg.fault.onset_rate_per_sec = 0.0;
    cfg.fault.scheduled = vec![(start, duration_ns)];
    let result = run_simulation(&cfg)?;
    let end = start.saturating_add_nanos(duration_ns);
    let r = FaultRecovery::from_rows(&result.rows, start, end, cfg.session.peak_age_threshold_ns);
    Ok(FaultScenarioOutcome {
        result,
        fault_start: start,
        fault_end: end,
        first_violation: r.first_violation,
        recovery_epochs: r.recovery_epochs,
        recovery_time_ns: r.recovery_time_ns,
    })
}

/// Violation and recovery markers around one fault episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultRecovery {
    pub first_violation: Option<usize>,
    pub recovery_epochs: Option<usize>,
    pub recovery_time_ns: Option<u64>,
}

impl FaultRecovery {
    pub fn from_rows(rows: &[EpochRecord], start: Timestamp, end: Timestamp, threshold_ns: u64) -> Self {
        let threshold = threshold_ns as f64;
        let first_violation = rows.iter().position(|r| r.t_end > start && r.avg_age_ns > threshold);
        let after: Vec<&EpochRecord> = rows.iter().filter(|r| r.t_end > end).collect();
        let recovered = after.iter().position(|r| r.avg_age_ns < threshold);
        FaultRecovery {
            first_violation,
            recovery_epochs: recovered,
            recovery_time_ns: recovered.map(|i| after[i].t_end.saturating_since(end)),
        }
    }
}
