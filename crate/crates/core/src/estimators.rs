//! Link estimators driven by returning ACKs: smoothed RTT, smoothed inter-ACK
//! time, and the peak-age feedback that pulls the RTT estimate back toward the
//! epoch's minimum RTT after consecutive violations.

use std::collections::HashSet;

use thiserror::Error;

use crate::time::{Timestamp, NANOS_PER_MS};

pub const DEFAULT_EWMA_ALPHA: f64 = 0.125;
pub const DEFAULT_PEAK_AGE_THRESHOLD_NS: u64 = 200 * NANOS_PER_MS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("EWMA sample must be positive, got {0}ns")]
    NonPositiveSample(f64),
    #[error("EWMA weight must lie in (0, 1], got {0}")]
    BadAlpha(f64),
}

/// An acknowledgement as seen by the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckRecord {
    pub seq: u32,
    /// Generation time of the acknowledged update.
    pub gen_time: Timestamp,
    pub ack_recv_time: Timestamp,
    /// `ack_recv_time` minus the send time of `seq`.
    pub rtt_ns: u64,
}

/// Exponentially weighted moving average over nanosecond samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EwmaEstimator {
    current: f64,
    alpha: f64,
    initialized: bool,
}

impl Default for EwmaEstimator {
    fn default() -> Self {
        EwmaEstimator { current: 0.0, alpha: DEFAULT_EWMA_ALPHA, initialized: false }
    }
}

impl EwmaEstimator {
    pub fn new(alpha: f64) -> Result<Self, EstimatorError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(EstimatorError::BadAlpha(alpha));
        }
        Ok(EwmaEstimator { current: 0.0, alpha, initialized: false })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Current estimate in nanoseconds, `None` before the first sample.
    pub fn get(&self) -> Option<f64> {
        self.initialized.then_some(self.current)
    }

    /// Overwrites the estimate, as done when seeding from the init phase or
    /// applying peak-age feedback.
    pub fn set(&mut self, value_ns: f64) -> Result<(), EstimatorError> {
        if !value_ns.is_finite() || value_ns <= 0.0 {
            return Err(EstimatorError::NonPositiveSample(value_ns));
        }
        self.current = value_ns;
        self.initialized = true;
        Ok(())
    }

    pub fn update(&mut self, sample_ns: f64) -> Result<f64, EstimatorError> {
        if !sample_ns.is_finite() || sample_ns <= 0.0 {
            return Err(EstimatorError::NonPositiveSample(sample_ns));
        }
        if self.initialized {
            self.current = (1.0 - self.alpha) * self.current + self.alpha * sample_ns;
        } else {
            self.current = sample_ns;
            self.initialized = true;
        }
        Ok(self.current)
    }
}

/// Peak-age feedback state.
///
/// Only meaningful on a one-hop link with a single sender and a single
/// monitor, where a violation cannot be caused by competing traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackState {
    /// Length of the current run of violating epochs.
    pub zeta: u32,
    pub peak_age_threshold_ns: u64,
    /// Minimum RTT sampled in the current epoch.
    pub rtt_min_epoch_ns: Option<u64>,
    pub enabled: bool,
}

impl FeedbackState {
    pub fn new(enabled: bool, peak_age_threshold_ns: u64) -> Self {
        FeedbackState { zeta: 0, peak_age_threshold_ns, rtt_min_epoch_ns: None, enabled }
    }

    pub fn record_rtt(&mut self, rtt_ns: u64) {
        self.rtt_min_epoch_ns = Some(self.rtt_min_epoch_ns.map_or(rtt_ns, |m| m.min(rtt_ns)));
    }

    /// Epoch-end step: counts the violation run and blends the RTT estimate
    /// toward the epoch minimum, `(rtt + zeta * min) / (zeta + 1)`.
    ///
    /// A no-op, leaving `zeta` untouched, when the epoch produced no RTT sample.
    /// Returns whether the RTT estimate changed.
    pub fn epoch_end(&mut self, rtt: &mut EwmaEstimator, avg_age_ns: f64) -> bool {
        let Some(rtt_min) = self.rtt_min_epoch_ns.take() else {
            return false;
        };
        if avg_age_ns > self.peak_age_threshold_ns as f64 {
            self.zeta += 1;
        } else {
            self.zeta = 0;
            return false;
        }
        let Some(current) = rtt.get() else {
            return false;
        };
        let zeta = f64::from(self.zeta);
        let blended = (current + zeta * rtt_min as f64) / (zeta + 1.0);
        // rtt_min > 0 always; set only fails on non-positive values.
        rtt.set(blended).is_ok() && blended != current
    }
}

/// What an ACK did to the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    /// First ACK for this sequence number; carries whether an inter-ACK sample was taken.
    Fresh { z_sampled: bool },
    /// Repeated sequence number; ignored.
    Duplicate,
}

/// The sender's link-state estimators.
#[derive(Debug, Clone)]
pub struct LinkEstimators {
    pub rtt: EwmaEstimator,
    pub inter_ack: EwmaEstimator,
    pub feedback: FeedbackState,
    last_ack_time: Option<Timestamp>,
    acked: HashSet<u32>,
}

impl LinkEstimators {
    pub fn new(alpha: f64, feedback: FeedbackState) -> Result<Self, EstimatorError> {
        Ok(LinkEstimators {
            rtt: EwmaEstimator::new(alpha)?,
            inter_ack: EwmaEstimator::new(alpha)?,
            feedback,
            last_ack_time: None,
            acked: HashSet::new(),
        })
    }

    pub fn rtt_ns(&self) -> Option<f64> {
        self.rtt.get()
    }

    pub fn inter_ack_ns(&self) -> Option<f64> {
        self.inter_ack.get()
    }

    pub fn last_ack_time(&self) -> Option<Timestamp> {
        self.last_ack_time
    }

    /// Marks `seq` as acknowledged without sampling, for ACKs consumed elsewhere
    /// (the init phase seeds the RTT estimate from its own mean). The
    /// inter-ACK estimate starts with the first sampled ACK after this.
    pub fn mark_acked(&mut self, seq: u32) -> bool {
        self.acked.insert(seq)
    }

    pub fn is_acked(&self, seq: u32) -> bool {
        self.acked.contains(&seq)
    }

    pub fn on_ack(&mut self, ack: &AckRecord) -> AckOutcome {
        if !self.acked.insert(ack.seq) {
            return AckOutcome::Duplicate;
        }
        if ack.rtt_ns > 0 {
            // rtt_ns > 0 so the update cannot fail.
            let _ = self.rtt.update(ack.rtt_ns as f64);
            self.feedback.record_rtt(ack.rtt_ns);
        }
        let mut z_sampled = false;
        if let Some(prev) = self.last_ack_time {
            if let Some(gap) = ack.ack_recv_time.checked_since(prev).filter(|&g| g > 0) {
                let _ = self.inter_ack.update(gap as f64);
                z_sampled = true;
            }
        }
        if self.last_ack_time.is_none_or(|prev| ack.ack_recv_time > prev) {
            self.last_ack_time = Some(ack.ack_recv_time);
        }
        AckOutcome::Fresh { z_sampled }
    }

    /// Runs the peak-age feedback step if enabled. Returns whether the RTT
    /// estimate changed.
    pub fn feedback_epoch_end(&mut self, avg_age_ns: f64) -> bool {
        if !self.feedback.enabled {
            self.feedback.rtt_min_epoch_ns = None;
            return false;
        }
        self.feedback.epoch_end(&mut self.rtt, avg_age_ns)
    }
}
