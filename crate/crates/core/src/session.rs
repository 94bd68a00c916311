//! Transport-independent sender session.
//!
//! [`SenderSession`] owns the estimators, the rate controller, the sender-side
//! age tracker and the backlog meter. A transport drives it with three calls
//! (`on_send`, `on_ack`, `on_timer`) and asks it when the next send and the
//! next timer are due. The simulator and the UDP runner share this code path.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::age::{AgeError, AgeTracker, DeliveryEvent};
use crate::estimators::{AckOutcome, AckRecord, EstimatorError, FeedbackState, LinkEstimators};
use crate::policy::{self, ActionKind, EpochInput, PolicyConfig, PolicyError, RatePolicy};
use crate::time::{secs_to_nanos, Timestamp, NANOS_PER_MS, NANOS_PER_SEC};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("initialization aborted: no ACK received after {attempts} attempt(s)")]
    InitAborted { attempts: u32 },
    #[error("no ACK received for {silent_ns}ns; link considered down")]
    LinkSilent { silent_ns: u64 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Age(#[from] AgeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Init-phase probing: `probes` packets `spacing_ns` apart, then wait
/// `timeout_ns` for ACKs; repeat up to `retries` more times if none arrive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitConfig {
    pub probes: u32,
    pub spacing_ns: u64,
    pub timeout_ns: u64,
    pub retries: u32,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { probes: 10, spacing_ns: 100 * NANOS_PER_MS, timeout_ns: NANOS_PER_SEC, retries: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub policy: PolicyConfig,
    pub ewma_alpha: f64,
    pub feedback: bool,
    pub peak_age_threshold_ns: u64,
    /// Updates to send in the epochs phase; init probes are not counted.
    pub packet_budget: u64,
    pub init: InitConfig,
    /// An unacknowledged update stops counting toward the backlog after this long.
    pub backlog_expiry_ns: u64,
    /// Abort when no ACK arrives for this long during the epochs phase.
    pub max_silence_ns: Option<u64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            policy: PolicyConfig::default(),
            ewma_alpha: crate::estimators::DEFAULT_EWMA_ALPHA,
            feedback: false,
            peak_age_threshold_ns: crate::estimators::DEFAULT_PEAK_AGE_THRESHOLD_NS,
            packet_budget: 10_000,
            init: InitConfig::default(),
            backlog_expiry_ns: 2 * NANOS_PER_SEC,
            max_silence_ns: None,
        }
    }
}

/// Per-epoch record: what was measured over `[t_start, t_end]` and what the
/// controller decided at `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub k: u64,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    /// Sender-side (ACK-based) average age.
    pub avg_age_ns: f64,
    pub peak_age_ns: u64,
    /// Monitor-side average age, when the transport can observe it.
    pub true_avg_age_ns: Option<f64>,
    pub avg_backlog: f64,
    /// Update rate in effect during the epoch.
    pub lambda: f64,
    pub action: Option<ActionKind>,
    /// Whether the rate chosen at `t_end` was clamped.
    pub clamped: bool,
    pub rtt_bar_ns: f64,
    pub z_bar_ns: Option<f64>,
    pub zeta: u32,
    pub sent: u64,
    pub acked: u64,
}

impl EpochRecord {
    pub fn epoch_len_ns(&self) -> u64 {
        self.t_end.saturating_since(self.t_start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutgoingUpdate {
    pub seq: u32,
    pub gen_time: Timestamp,
}

/// Sender-side counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionCounters {
    pub sent: u64,
    pub init_probes: u64,
    pub acked: u64,
    pub duplicate_acks: u64,
    pub unknown_acks: u64,
    pub expired: u64,
}

/// Time-average of the number of sent-but-unacknowledged updates.
#[derive(Debug, Clone)]
struct BacklogMeter {
    outstanding: BTreeMap<u32, Timestamp>,
    last: Timestamp,
    window_start: Timestamp,
    integral: u128,
    expiry_ns: u64,
    expired: u64,
}

impl BacklogMeter {
    fn new(start: Timestamp, expiry_ns: u64) -> Self {
        BacklogMeter {
            outstanding: BTreeMap::new(),
            last: start,
            window_start: start,
            integral: 0,
            expiry_ns,
            expired: 0,
        }
    }

    fn integrate_to(&mut self, t: Timestamp) {
        let w = t.saturating_since(self.last);
        self.integral += self.outstanding.len() as u128 * u128::from(w);
        if t > self.last {
            self.last = t;
        }
    }

    fn advance(&mut self, now: Timestamp) {
        // Sequence numbers are assigned in send order, so the first entry is the oldest.
        while let Some((&seq, &sent)) = self.outstanding.first_key_value() {
            let expires = sent.saturating_add_nanos(self.expiry_ns);
            if expires > now {
                break;
            }
            self.integrate_to(expires);
            self.outstanding.remove(&seq);
            self.expired += 1;
        }
        self.integrate_to(now);
    }

    fn on_send(&mut self, now: Timestamp, seq: u32) {
        self.advance(now);
        self.outstanding.insert(seq, now);
    }

    fn on_ack(&mut self, now: Timestamp, seq: u32) {
        self.advance(now);
        self.outstanding.remove(&seq);
    }

    fn close(&mut self, now: Timestamp) -> f64 {
        self.advance(now);
        let len = now.saturating_since(self.window_start);
        let avg = if len == 0 { self.outstanding.len() as f64 } else { self.integral as f64 / len as f64 };
        self.window_start = now;
        self.integral = 0;
        avg
    }

    fn in_flight(&self) -> usize {
        self.outstanding.len()
    }
}

#[derive(Debug, Clone)]
enum Phase {
    Init {
        round: u32,
        probes_sent: u32,
        next_probe: Timestamp,
        deadline: Option<Timestamp>,
        samples: Vec<u64>,
    },
    Epochs {
        policy: RatePolicy,
        k: u64,
        epoch_start: Timestamp,
        boundary: Timestamp,
        next_send: Option<Timestamp>,
        sent_at_epoch_start: u64,
        acked_at_epoch_start: u64,
    },
    Done,
}

#[derive(Debug, Clone)]
pub struct SenderSession {
    cfg: SessionConfig,
    phase: Phase,
    estimators: LinkEstimators,
    age: AgeTracker,
    backlog: BacklogMeter,
    send_times: HashMap<u32, Timestamp>,
    next_seq: u32,
    last_send: Option<Timestamp>,
    last_ack: Option<Timestamp>,
    epochs_started_at: Option<Timestamp>,
    epoch_sends: u64,
    counters: SessionCounters,
}

fn spacing_ns(lambda: f64) -> u64 {
    secs_to_nanos(1.0 / lambda).max(1)
}

impl SenderSession {
    pub fn new(cfg: SessionConfig, start: Timestamp) -> Result<Self, SessionError> {
        cfg.policy.validate()?;
        let feedback = FeedbackState::new(cfg.feedback, cfg.peak_age_threshold_ns);
        let estimators = LinkEstimators::new(cfg.ewma_alpha, feedback)?;
        let phase = if cfg.packet_budget == 0 {
            Phase::Done
        } else {
            Phase::Init { round: 0, probes_sent: 0, next_probe: start, deadline: None, samples: Vec::new() }
        };
        let backlog = BacklogMeter::new(start, cfg.backlog_expiry_ns);
        Ok(SenderSession {
            cfg,
            phase,
            estimators,
            age: AgeTracker::starting_at(start),
            backlog,
            send_times: HashMap::new(),
            next_seq: 0,
            last_send: None,
            last_ack: None,
            epochs_started_at: None,
            epoch_sends: 0,
            counters: SessionCounters::default(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done)
    }

    pub fn in_init(&self) -> bool {
        matches!(self.phase, Phase::Init { .. })
    }

    pub fn epochs_started_at(&self) -> Option<Timestamp> {
        self.epochs_started_at
    }

    pub fn estimators(&self) -> &LinkEstimators {
        &self.estimators
    }

    pub fn counters(&self) -> SessionCounters {
        SessionCounters { expired: self.backlog.expired, ..self.counters }
    }

    /// Updates sent but neither acknowledged nor expired.
    pub fn in_flight(&self) -> usize {
        self.backlog.in_flight()
    }

    pub fn current_lambda(&self) -> Option<f64> {
        match &self.phase {
            Phase::Epochs { policy, .. } => Some(policy.lambda()),
            _ => None,
        }
    }

    pub fn next_send_time(&self) -> Option<Timestamp> {
        match &self.phase {
            Phase::Init { probes_sent, next_probe, .. } if *probes_sent < self.cfg.init.probes => Some(*next_probe),
            Phase::Epochs { next_send, .. } => *next_send,
            _ => None,
        }
    }

    /// Next init deadline or epoch boundary.
    pub fn next_timer(&self) -> Option<Timestamp> {
        match &self.phase {
            Phase::Init { deadline, .. } => *deadline,
            Phase::Epochs { boundary, .. } => Some(*boundary),
            Phase::Done => None,
        }
    }

    /// Emits the update due now. Callers only invoke this at or after
    /// [`Self::next_send_time`].
    pub fn on_send(&mut self, now: Timestamp) -> OutgoingUpdate {
        let seq = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        self.send_times.insert(seq, now);
        self.backlog.on_send(now, seq);
        self.last_send = Some(now);
        self.counters.sent += 1;
        let init = self.cfg.init;
        match &mut self.phase {
            Phase::Init { probes_sent, next_probe, deadline, .. } => {
                self.counters.init_probes += 1;
                *probes_sent += 1;
                *next_probe = now.saturating_add_nanos(init.spacing_ns);
                if *probes_sent >= init.probes {
                    *deadline = Some(now.saturating_add_nanos(init.timeout_ns));
                }
            }
            Phase::Epochs { policy, next_send, boundary, .. } => {
                self.epoch_sends += 1;
                let due = now.saturating_add_nanos(spacing_ns(policy.lambda()));
                if self.epoch_sends >= self.cfg.packet_budget {
                    // The last epoch closes where the next send would have been.
                    *next_send = None;
                    *boundary = (*boundary).min(due);
                } else {
                    *next_send = Some(due);
                }
            }
            Phase::Done => {}
        }
        OutgoingUpdate { seq, gen_time: now }
    }

    /// Processes an echoed update. Returns the RTT sample when the ACK was fresh.
    pub fn on_ack(&mut self, now: Timestamp, seq: u32, gen_time: Timestamp) -> Result<Option<u64>, SessionError> {
        let Some(&sent) = self.send_times.get(&seq) else {
            self.counters.unknown_acks += 1;
            return Ok(None);
        };
        let rtt_ns = now.saturating_since(sent);
        let record = AckRecord { seq, gen_time, ack_recv_time: now, rtt_ns };
        let init_sample = match &mut self.phase {
            Phase::Init { samples, .. } => {
                if !self.estimators.mark_acked(seq) {
                    self.counters.duplicate_acks += 1;
                    return Ok(None);
                }
                samples.push(rtt_ns.max(1));
                true
            }
            Phase::Epochs { .. } | Phase::Done => {
                if self.estimators.on_ack(&record) == AckOutcome::Duplicate {
                    self.counters.duplicate_acks += 1;
                    return Ok(None);
                }
                false
            }
        };
        self.counters.acked += 1;
        self.last_ack = Some(now);
        self.backlog.on_ack(now, seq);
        self.age.deliver(DeliveryEvent::new(u64::from(seq), gen_time, now))?;
        if init_sample {
            if let Phase::Init { samples, .. } = &self.phase {
                if samples.len() as u32 >= self.cfg.init.probes {
                    self.start_epochs(now)?;
                }
            }
        }
        Ok(Some(rtt_ns))
    }

    /// Handles the timer returned by [`Self::next_timer`]. Returns the record
    /// of the epoch that just ended, if any.
    pub fn on_timer(&mut self, now: Timestamp) -> Result<Option<EpochRecord>, SessionError> {
        match &mut self.phase {
            Phase::Init { round, probes_sent, next_probe, deadline, samples } => {
                if deadline.is_none_or(|d| now < d) {
                    return Ok(None);
                }
                if !samples.is_empty() {
                    self.start_epochs(now)?;
                } else if *round < self.cfg.init.retries {
                    *round += 1;
                    *probes_sent = 0;
                    *next_probe = now;
                    *deadline = None;
                } else {
                    let attempts = *round + 1;
                    self.phase = Phase::Done;
                    return Err(SessionError::InitAborted { attempts });
                }
                Ok(None)
            }
            Phase::Epochs { boundary, .. } if now < *boundary => Ok(None),
            Phase::Epochs { .. } => self.end_epoch(now).map(Some),
            Phase::Done => Ok(None),
        }
    }

    fn start_epochs(&mut self, now: Timestamp) -> Result<(), SessionError> {
        let samples = match &self.phase {
            Phase::Init { samples, .. } => samples.clone(),
            _ => return Ok(()),
        };
        let (lambda0, rtt) = policy::init_phase(&samples)?;
        self.estimators.rtt.set(rtt)?;
        self.estimators.feedback.rtt_min_epoch_ns = None;
        let policy = RatePolicy::new(self.cfg.policy.clone(), lambda0)?;
        let len = policy.initial_epoch_length(rtt);
        if now > self.age.window_start() {
            self.age.close_window(now)?;
        }
        self.backlog.close(now);
        self.epochs_started_at = Some(now);
        self.last_ack = Some(now);
        self.phase = Phase::Epochs {
            policy,
            k: 0,
            epoch_start: now,
            boundary: now.saturating_add_nanos(len),
            next_send: Some(now),
            sent_at_epoch_start: self.counters.sent,
            acked_at_epoch_start: self.counters.acked,
        };
        Ok(())
    }

    fn end_epoch(&mut self, now: Timestamp) -> Result<EpochRecord, SessionError> {
        let summary = self.age.close_window(now)?;
        let avg_backlog = self.backlog.close(now);
        let avg_age_ns = summary.avg_age_ns();
        self.estimators.feedback_epoch_end(avg_age_ns);
        let rtt_ns = self.estimators.rtt_ns().expect("seeded at init");
        let z_ns = self.estimators.inter_ack_ns();
        let budget_spent = self.epoch_sends >= self.cfg.packet_budget;
        let silent = self.last_ack.map(|t| now.saturating_since(t));
        let Phase::Epochs { policy, k, epoch_start, boundary, next_send, sent_at_epoch_start, acked_at_epoch_start } =
            &mut self.phase
        else {
            unreachable!("end_epoch outside the epochs phase");
        };
        let lambda = policy.lambda();
        let t = policy.epoch_transition(EpochInput { avg_age_ns, avg_backlog, rtt_ns, z_ns });
        let record = EpochRecord {
            k: *k,
            t_start: *epoch_start,
            t_end: now,
            avg_age_ns,
            peak_age_ns: summary.peak_age_ns,
            true_avg_age_ns: None,
            avg_backlog,
            lambda,
            action: t.action,
            clamped: t.clamped,
            rtt_bar_ns: rtt_ns,
            z_bar_ns: z_ns,
            zeta: self.estimators.feedback.zeta,
            sent: self.counters.sent - *sent_at_epoch_start,
            acked: self.counters.acked - *acked_at_epoch_start,
        };
        *k += 1;
        *epoch_start = now;
        *boundary = now.saturating_add_nanos(t.epoch_len_ns);
        *sent_at_epoch_start = self.counters.sent;
        *acked_at_epoch_start = self.counters.acked;
        if next_send.is_some() {
            let paced = self.last_send.map_or(now, |s| s.saturating_add_nanos(spacing_ns(t.lambda)));
            *next_send = Some(paced.max(now));
        }
        if budget_spent {
            self.phase = Phase::Done;
        } else if let (Some(limit), Some(silent)) = (self.cfg.max_silence_ns, silent) {
            if silent > limit {
                self.phase = Phase::Done;
                return Err(SessionError::LinkSilent { silent_ns: silent });
            }
        }
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    const MS: u64 = NANOS_PER_MS;

    fn cfg(kind: PolicyKind, budget: u64) -> SessionConfig {
        SessionConfig { policy: PolicyConfig::new(kind), packet_budget: budget, ..SessionConfig::default() }
    }

    /// Drives a session over an ideal link with constant RTT.
    fn drive(mut s: SenderSession, rtt: u64, until: Timestamp) -> (SenderSession, Vec<EpochRecord>) {
        let mut pending: std::collections::VecDeque<(Timestamp, OutgoingUpdate)> = Default::default();
        let mut rows = Vec::new();
        loop {
            let ack_at = pending.front().map(|p| p.0);
            let candidates = [ack_at, s.next_timer(), s.next_send_time()];
            let Some(now) = candidates.iter().flatten().min().copied() else { break };
            if now > until || s.is_done() {
                break;
            }
            if ack_at == Some(now) {
                let (_, u) = pending.pop_front().unwrap();
                s.on_ack(now, u.seq, u.gen_time).unwrap();
            } else if s.next_timer() == Some(now) {
                if let Some(r) = s.on_timer(now).unwrap() {
                    rows.push(r);
                }
            } else {
                let u = s.on_send(now);
                pending.push_back((now.saturating_add_nanos(rtt), u));
            }
        }
        (s, rows)
    }

    #[test]
    fn zero_budget_is_done_immediately() {
        let s = SenderSession::new(cfg(PolicyKind::Lazy, 0), Timestamp::ZERO).unwrap();
        assert!(s.is_done());
        assert_eq!(s.next_send_time(), None);
    }

    #[test]
    fn init_aborts_after_retries_without_acks() {
        let mut s = SenderSession::new(cfg(PolicyKind::Acp, 100), Timestamp::ZERO).unwrap();
        let mut now = Timestamp::ZERO;
        let err = loop {
            let next = [s.next_send_time(), s.next_timer()].into_iter().flatten().min().unwrap();
            now = now.max(next);
            if s.next_send_time() == Some(now) {
                s.on_send(now);
            } else if let Err(e) = s.on_timer(now) {
                break e;
            }
        };
        assert_eq!(err, SessionError::InitAborted { attempts: 4 });
        assert_eq!(s.counters().init_probes, 40);
        assert!(s.is_done());
    }

    #[test]
    fn init_seeds_rate_from_mean_rtt() {
        let s = SenderSession::new(cfg(PolicyKind::Lazy, 1_000), Timestamp::ZERO).unwrap();
        let (s, _) = drive(s, 50 * MS, Timestamp::from_millis(960));
        // all ten probes acked at 950 ms → epochs start there
        assert_eq!(s.epochs_started_at(), Some(Timestamp::from_millis(950)));
        assert!((s.current_lambda().unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn lazy_keeps_one_update_in_flight() {
        let s = SenderSession::new(cfg(PolicyKind::Lazy, 500), Timestamp::ZERO).unwrap();
        let (s, rows) = drive(s, 40 * MS, Timestamp::from_secs(1_000));
        assert!(s.is_done());
        assert!(rows.len() > 3);
        for r in &rows[1..] {
            assert!((r.avg_backlog - 1.0).abs() < 0.05, "backlog {}", r.avg_backlog);
            assert_eq!(r.action, None);
        }
    }

    #[test]
    fn budget_counts_epoch_updates_only() {
        let s = SenderSession::new(cfg(PolicyKind::AcpPlusModified, 200), Timestamp::ZERO).unwrap();
        let (s, rows) = drive(s, 30 * MS, Timestamp::from_secs(1_000));
        let c = s.counters();
        assert_eq!(c.sent - c.init_probes, 200);
        assert_eq!(rows.iter().map(|r| r.sent).sum::<u64>(), 200);
        // rows partition the epochs phase
        for w in rows.windows(2) {
            assert_eq!(w[0].t_end, w[1].t_start);
        }
    }

    #[test]
    fn duplicate_and_unknown_acks_are_ignored() {
        let s = SenderSession::new(cfg(PolicyKind::Lazy, 100), Timestamp::ZERO).unwrap();
        let (mut s, _) = drive(s, 30 * MS, Timestamp::from_millis(1_500));
        let before = s.estimators().rtt_ns();
        let t = Timestamp::from_millis(1_600);
        assert_eq!(s.on_ack(t, 0, Timestamp::ZERO).unwrap(), None);
        assert_eq!(s.on_ack(t, 999_999, Timestamp::ZERO).unwrap(), None);
        assert_eq!(s.estimators().rtt_ns(), before);
        assert_eq!(s.counters().duplicate_acks, 1);
        assert_eq!(s.counters().unknown_acks, 1);
    }

    #[test]
    fn unacked_updates_expire_from_backlog() {
        let mut c = cfg(PolicyKind::FixedRate, 50);
        c.backlog_expiry_ns = 300 * MS;
        let mut s = SenderSession::new(c, Timestamp::ZERO).unwrap();
        // one probe, acked, then nothing else is ever acked
        let u = s.on_send(Timestamp::ZERO);
        s.on_ack(Timestamp::from_millis(20), u.seq, u.gen_time).unwrap();
        for i in 1..10 {
            s.on_send(Timestamp::from_millis(100 * i));
        }
        s.on_timer(Timestamp::from_millis(1_900)).unwrap();
        assert!(!s.in_init());
        assert_eq!(s.in_flight(), 0);
        assert_eq!(s.counters().expired, 9);
    }
}
