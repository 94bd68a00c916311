//! Epoch-driven rate controllers.
//!
//! At every epoch boundary the sender hands the controller the epoch's average
//! age and average backlog together with the current RTT and inter-ACK
//! estimates; the controller answers with the update rate and length of the
//! next epoch.
//!
//! ACP picks an action from the signs of the age change `delta` and backlog
//! change `b`:
//!
//! | `delta` | `b`  | target            |
//! |---------|------|-------------------|
//! | > 0     | > 0  | decrease backlog  |
//! | > 0     | < 0  | increase backlog  |
//! | < 0     | > 0  | increase backlog  |
//! | < 0     | < 0  | decrease backlog  |
//!
//! and turns it into a desired backlog change `b*` (INC: `+kappa`, DEC:
//! `-kappa`, MDEC: `-(1 - 2^-gamma) * B`). The rate for the next epoch is
//! `1/Z + b*/min(RTT, Z)`. ACP+ divides by `RTT` alone, fixes `kappa = 1` and
//! clamps the new rate into a band around the previous one.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::time::{secs_to_nanos, NANOS_PER_MS, NANOS_PER_SEC};

pub const DEFAULT_LAMBDA_MIN: f64 = 0.1;
pub const DEFAULT_LAMBDA_MAX: f64 = 1000.0;
pub const DEFAULT_GAMMA_CAP: u32 = 10;
pub const DEFAULT_EPOCH_MULTIPLIER: u32 = 30;
pub const DEFAULT_MIN_EPOCH_NS: u64 = 10 * NANOS_PER_MS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("initialization phase received no ACKs")]
    NoInitSamples,
    #[error("invalid policy parameter: {0}")]
    Invalid(String),
    #[error("unknown policy '{0}' (expected fixed, lazy, acp, acp+ or acp+mod)")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    FixedRate,
    Lazy,
    Acp,
    AcpPlusOriginal,
    AcpPlusModified,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::FixedRate,
        PolicyKind::Lazy,
        PolicyKind::Acp,
        PolicyKind::AcpPlusOriginal,
        PolicyKind::AcpPlusModified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::FixedRate => "fixed",
            PolicyKind::Lazy => "lazy",
            PolicyKind::Acp => "acp",
            PolicyKind::AcpPlusOriginal => "acp+",
            PolicyKind::AcpPlusModified => "acp+mod",
        }
    }

    pub fn is_acp_plus(self) -> bool {
        matches!(self, PolicyKind::AcpPlusOriginal | PolicyKind::AcpPlusModified)
    }

    /// Whether the controller runs the age/backlog decision table.
    pub fn uses_actions(self) -> bool {
        matches!(self, PolicyKind::Acp | PolicyKind::AcpPlusOriginal | PolicyKind::AcpPlusModified)
    }

    /// Clamp band relative to the previous rate; only the ACP+ variants clamp.
    pub fn default_clamp(self) -> Option<ClampBounds> {
        match self {
            PolicyKind::AcpPlusOriginal => Some(ClampBounds { lo: 0.75, hi: 1.25 }),
            PolicyKind::AcpPlusModified => Some(ClampBounds { lo: 0.9, hi: 1.1 }),
            _ => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" | "fixedrate" => Ok(PolicyKind::FixedRate),
            "lazy" => Ok(PolicyKind::Lazy),
            "acp" => Ok(PolicyKind::Acp),
            "acp+" | "acpplus" | "acp+orig" => Ok(PolicyKind::AcpPlusOriginal),
            "acp+mod" | "acpplusmod" | "acp+modified" => Ok(PolicyKind::AcpPlusModified),
            other => Err(PolicyError::UnknownPolicy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampBounds {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Inc,
    Dec,
    /// Multiplicative decrease with escalation level `gamma >= 1`.
    Mdec(u32),
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Inc => f.write_str("INC"),
            ActionKind::Dec => f.write_str("DEC"),
            ActionKind::Mdec(g) => write!(f, "MDEC{g}"),
        }
    }
}

impl FromStr for ActionKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "INC" => Ok(ActionKind::Inc),
            "DEC" => Ok(ActionKind::Dec),
            _ => s
                .strip_prefix("MDEC")
                .and_then(|g| g.parse::<u32>().ok())
                .filter(|&g| g >= 1)
                .map(ActionKind::Mdec)
                .ok_or_else(|| PolicyError::Invalid(format!("bad action '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Backlog step for ACP. ACP+ always steps by one packet.
    pub kappa: f64,
    /// Epoch length multiplier: 10 for the classic epoch, 30 for the long one.
    pub epoch_multiplier: u32,
    /// Overrides the kind's default clamp band.
    pub clamp: Option<ClampBounds>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub min_epoch_ns: u64,
    /// Rate used by `FixedRate`, packets/s.
    pub fixed_rate: f64,
    /// Sign assigned to an exactly-zero age or backlog change.
    pub zero_is_positive: bool,
    pub gamma_cap: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::new(PolicyKind::Acp)
    }
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            kind,
            kappa: 0.1,
            epoch_multiplier: DEFAULT_EPOCH_MULTIPLIER,
            clamp: None,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_max: DEFAULT_LAMBDA_MAX,
            min_epoch_ns: DEFAULT_MIN_EPOCH_NS,
            fixed_rate: 10.0,
            zero_is_positive: true,
            gamma_cap: DEFAULT_GAMMA_CAP,
        }
    }

    pub fn effective_kappa(&self) -> f64 {
        if self.kind.is_acp_plus() {
            1.0
        } else {
            self.kappa
        }
    }

    pub fn effective_clamp(&self) -> Option<ClampBounds> {
        if self.kind.is_acp_plus() {
            self.clamp.or(self.kind.default_clamp())
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::Invalid(m));
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if self.epoch_multiplier == 0 {
            return bad("epoch multiplier must be positive".into());
        }
        if !(self.lambda_min > 0.0 && self.lambda_min < self.lambda_max && self.lambda_max.is_finite()) {
            return bad(format!("rate bounds [{}, {}] are not a positive interval", self.lambda_min, self.lambda_max));
        }
        if self.min_epoch_ns == 0 {
            return bad("minimum epoch length must be positive".into());
        }
        if !(self.fixed_rate >= self.lambda_min && self.fixed_rate <= self.lambda_max) {
            return bad(format!("fixed rate {} outside rate bounds", self.fixed_rate));
        }
        if self.gamma_cap == 0 {
            return bad("gamma cap must be at least 1".into());
        }
        if let Some(c) = self.clamp {
            if !(c.lo > 0.0 && c.lo < 1.0 && c.hi > 1.0 && c.hi.is_finite()) {
                return bad(format!("clamp band [{}, {}] must satisfy 0 < lo < 1 < hi", c.lo, c.hi));
            }
        }
        Ok(())
    }

    pub fn bound(&self, lambda: f64) -> f64 {
        lambda.clamp(self.lambda_min, self.lambda_max)
    }
}

/// Seeds the RTT estimate from the init-phase samples and derives the first
/// update rate `1 / RTT`. Returns `(rate in packets/s, RTT in ns)`.
pub fn init_phase(rtt_samples_ns: &[u64]) -> Result<(f64, f64), PolicyError> {
    if rtt_samples_ns.is_empty() {
        return Err(PolicyError::NoInitSamples);
    }
    let mean = rtt_samples_ns.iter().map(|&s| s as f64).sum::<f64>() / rtt_samples_ns.len() as f64;
    if mean <= 0.0 {
        return Err(PolicyError::Invalid("init RTT samples must be positive".into()));
    }
    Ok((NANOS_PER_SEC as f64 / mean, mean))
}

fn is_positive(x: f64, zero_is_positive: bool) -> bool {
    x > 0.0 || (x == 0.0 && zero_is_positive)
}

/// Whether the decision table targets a backlog increase.
pub fn targets_increase(delta: f64, b: f64, zero_is_positive: bool) -> bool {
    is_positive(delta, zero_is_positive) != is_positive(b, zero_is_positive)
}

/// Picks the next action. A decrease target following a DEC or MDEC whose
/// backlog change was non-negative escalates to MDEC; `gamma` grows by one per
/// consecutive escalation, up to `gamma_cap`.
pub fn decide_action(
    last: Option<ActionKind>,
    delta: f64,
    b: f64,
    zero_is_positive: bool,
    gamma_cap: u32,
) -> ActionKind {
    if targets_increase(delta, b, zero_is_positive) {
        return ActionKind::Inc;
    }
    match last {
        Some(ActionKind::Dec) if b >= 0.0 => ActionKind::Mdec(1),
        Some(ActionKind::Mdec(g)) if b >= 0.0 => ActionKind::Mdec((g + 1).min(gamma_cap)),
        _ => ActionKind::Dec,
    }
}

/// Desired backlog change for `action`, given the epoch's average backlog.
pub fn target_backlog_change(action: ActionKind, kappa: f64, avg_backlog: f64) -> f64 {
    match action {
        ActionKind::Inc => kappa,
        ActionKind::Dec => -kappa,
        ActionKind::Mdec(gamma) => -(1.0 - 0.5f64.powi(gamma as i32)) * avg_backlog,
    }
}

/// Next update rate in packets/s and whether a clamp engaged.
///
/// `z_ns` and `rtt_ns` are the smoothed inter-ACK time and RTT.
pub fn next_lambda(
    cfg: &PolicyConfig,
    z_ns: f64,
    rtt_ns: f64,
    b_star: f64,
    lambda_prev: f64,
) -> (f64, bool) {
    let z = z_ns / NANOS_PER_SEC as f64;
    let rtt = rtt_ns / NANOS_PER_SEC as f64;
    let mut clamped = false;
    let raw = if cfg.kind.is_acp_plus() {
        1.0 / z + b_star / rtt
    } else {
        1.0 / z + b_star / rtt.min(z)
    };
    let mut lambda = raw;
    if let Some(band) = cfg.effective_clamp() {
        let (lo, hi) = (band.lo * lambda_prev, band.hi * lambda_prev);
        if lambda > hi {
            lambda = hi;
            clamped = true;
        } else if lambda < lo {
            lambda = lo;
            clamped = true;
        }
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return (cfg.lambda_min, true);
    }
    (cfg.bound(lambda), clamped)
}

/// Length of the next epoch in ns: `M * min(RTT, Z)` for ACP and Lazy,
/// `M / lambda` for ACP+ and the fixed-rate baseline, floored at the
/// configured minimum.
pub fn next_epoch_length(cfg: &PolicyConfig, z_ns: f64, rtt_ns: f64, lambda: f64) -> u64 {
    let m = f64::from(cfg.epoch_multiplier);
    let secs = match cfg.kind {
        PolicyKind::Acp | PolicyKind::Lazy => m * rtt_ns.min(z_ns) / NANOS_PER_SEC as f64,
        PolicyKind::AcpPlusOriginal | PolicyKind::AcpPlusModified | PolicyKind::FixedRate => m / lambda,
    };
    secs_to_nanos(secs).max(cfg.min_epoch_ns)
}

/// Lazy policy rate: one update per smoothed RTT.
pub fn lazy_epoch_end(rtt_ns: f64) -> f64 {
    NANOS_PER_SEC as f64 / rtt_ns
}

/// What the controller saw at the end of an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochInput {
    pub avg_age_ns: f64,
    pub avg_backlog: f64,
    pub rtt_ns: f64,
    /// `None` when no inter-ACK gap has been observed yet.
    pub z_ns: Option<f64>,
}

/// The controller's answer for the next epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub action: Option<ActionKind>,
    pub b_star: f64,
    pub lambda: f64,
    pub clamped: bool,
    pub epoch_len_ns: u64,
}

/// Controller state carried across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePolicy {
    cfg: PolicyConfig,
    prev: Option<(f64, f64)>,
    last_action: Option<ActionKind>,
    lambda: f64,
}

impl RatePolicy {
    /// Builds the controller once the init phase produced its first rate.
    pub fn new(cfg: PolicyConfig, initial_lambda: f64) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let lambda = match cfg.kind {
            PolicyKind::FixedRate => cfg.fixed_rate,
            _ => cfg.bound(initial_lambda),
        };
        Ok(RatePolicy { cfg, prev: None, last_action: None, lambda })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn last_action(&self) -> Option<ActionKind> {
        self.last_action
    }

    /// Length of the first epoch, before any inter-ACK gap is known.
    pub fn initial_epoch_length(&self, rtt_ns: f64) -> u64 {
        let z = NANOS_PER_SEC as f64 / self.lambda;
        next_epoch_length(&self.cfg, z, rtt_ns, self.lambda)
    }

    pub fn epoch_transition(&mut self, input: EpochInput) -> Transition {
        // Without an inter-ACK sample, fall back to the current send spacing.
        let z_ns = input.z_ns.unwrap_or(NANOS_PER_SEC as f64 / self.lambda);
        let rtt_ns = input.rtt_ns;
        let (action, b_star, lambda, clamped) = match self.cfg.kind {
            PolicyKind::FixedRate => (None, 0.0, self.cfg.fixed_rate, false),
            PolicyKind::Lazy => (None, 0.0, self.cfg.bound(lazy_epoch_end(rtt_ns)), false),
            PolicyKind::Acp | PolicyKind::AcpPlusOriginal | PolicyKind::AcpPlusModified => {
                let action = match self.prev {
                    None => ActionKind::Inc,
                    Some((prev_age, prev_backlog)) => decide_action(
                        self.last_action,
                        input.avg_age_ns - prev_age,
                        input.avg_backlog - prev_backlog,
                        self.cfg.zero_is_positive,
                        self.cfg.gamma_cap,
                    ),
                };
                let b_star = target_backlog_change(action, self.cfg.effective_kappa(), input.avg_backlog);
                let (lambda, clamped) = next_lambda(&self.cfg, z_ns, rtt_ns, b_star, self.lambda);
                self.prev = Some((input.avg_age_ns, input.avg_backlog));
                self.last_action = Some(action);
                (Some(action), b_star, lambda, clamped)
            }
        };
        self.lambda = lambda;
        let epoch_len_ns = next_epoch_length(&self.cfg, z_ns, rtt_ns, lambda);
        Transition { action, b_star, lambda, clamped, epoch_len_ns }
    }
}
