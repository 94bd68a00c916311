//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Durations take a unit
//! suffix (`ns`, `us`, `ms`, `s`); delay distributions are written as
//! `const:DUR`, `exp:MEAN` or `lognormal:MU,SIGMA` (milliseconds, natural
//! log). Unknown keys are rejected. [`ExperimentConfig::to_text`] writes every
//! key in a fixed order, and parsing that text yields the same config.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::netsim::{ChannelModel, CoalesceFault, DelayDist, SimConfig};
use crate::policy::{ClampBounds, PolicyConfig};
use crate::session::{InitConfig, SessionConfig};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid value for '{key}': {msg}")]
    Value { key: String, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelPreset {
    Default,
    SmallDelay,
}

impl ChannelPreset {
    pub fn name(self) -> &'static str {
        match self {
            ChannelPreset::Default => "default",
            ChannelPreset::SmallDelay => "small-delay",
        }
    }

    pub fn model(self) -> ChannelModel {
        match self {
            ChannelPreset::Default => ChannelModel::default(),
            ChannelPreset::SmallDelay => ChannelModel::small_delay(),
        }
    }
}

impl FromStr for ChannelPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "default" => Ok(ChannelPreset::Default),
            "small-delay" => Ok(ChannelPreset::SmallDelay),
            _ => Err(format!("unknown channel preset '{s}'")),
        }
    }
}

/// Everything needed to reproduce a cell of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub policy: PolicyConfig,
    pub ewma_alpha: f64,
    pub feedback: bool,
    pub peak_age_threshold_ns: u64,
    pub packet_budget: u64,
    pub init: InitConfig,
    pub backlog_expiry_ns: u64,
    pub forward: ChannelModel,
    pub reverse: ChannelModel,
    pub fault: CoalesceFault,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::with_channel(ChannelPreset::Default)
    }
}

impl ExperimentConfig {
    pub fn with_channel(preset: ChannelPreset) -> Self {
        let session = SessionConfig::default();
        let forward = preset.model();
        ExperimentConfig {
            name: "run".into(),
            policy: session.policy,
            ewma_alpha: session.ewma_alpha,
            feedback: session.feedback,
            peak_age_threshold_ns: session.peak_age_threshold_ns,
            packet_budget: session.packet_budget,
            init: session.init,
            backlog_expiry_ns: session.backlog_expiry_ns,
            reverse: forward.reversed(),
            forward,
            fault: CoalesceFault::default(),
            seeds: (1..=5).collect(),
        }
    }

    pub fn session(&self) -> SessionConfig {
        SessionConfig {
            policy: self.policy.clone(),
            ewma_alpha: self.ewma_alpha,
            feedback: self.feedback,
            peak_age_threshold_ns: self.peak_age_threshold_ns,
            packet_budget: self.packet_budget,
            init: self.init,
            backlog_expiry_ns: self.backlog_expiry_ns,
            max_silence_ns: None,
        }
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            session: self.session(),
            forward: self.forward,
            reverse: self.reverse,
            fault: self.fault.clone(),
            seed,
        }
    }

    /// Copy restricted to a single seed, as embedded in per-run files.
    pub fn for_seed(&self, seed: u64) -> Self {
        ExperimentConfig { seeds: vec![seed], ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() || self.name.contains(|c: char| c.is_whitespace() || c == '/' || c == ',') {
            return Err(ConfigError::Invalid(format!("name '{}' must be a non-empty path-safe token", self.name)));
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return Err(ConfigError::Invalid(format!("ewma_alpha {} outside (0, 1]", self.ewma_alpha)));
        }
        if self.init.probes == 0 {
            return Err(ConfigError::Invalid("init_probes must be at least 1".into()));
        }
        if self.reverse != self.forward.reversed() {
            return Err(ConfigError::Invalid("reverse channel must mirror the forward one without its bottleneck".into()));
        }
        self.sim_config(0).validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut clamp_lo = None;
        let mut clamp_hi = None;
        // The preset must apply before individual channel keys regardless of order.
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
            seen.push(key.clone());
            entries.push((i + 1, key, v.trim().to_string()));
        }
        if let Some((_, _, v)) = entries.iter().find(|(_, k, _)| k == "channel") {
            let preset: ChannelPreset = v.parse().map_err(|msg| ConfigError::Value { key: "channel".into(), msg })?;
            cfg.forward = preset.model();
            cfg.reverse = cfg.forward.reversed();
        }
        for (line, key, v) in entries {
            let val = |msg: String| ConfigError::Value { key: key.clone(), msg };
            let v = v.as_str();
            match key.as_str() {
                "channel" => {}
                "name" => cfg.name = v.to_string(),
                "policy" => cfg.policy.kind = v.parse().map_err(|e: crate::policy::PolicyError| val(e.to_string()))?,
                "kappa" => cfg.policy.kappa = parse_num(v).map_err(val)?,
                "epoch_multiplier" => cfg.policy.epoch_multiplier = parse_num(v).map_err(val)?,
                "clamp_lo" => clamp_lo = parse_opt(v).map_err(val)?,
                "clamp_hi" => clamp_hi = parse_opt(v).map_err(val)?,
                "lambda_min" => cfg.policy.lambda_min = parse_num(v).map_err(val)?,
                "lambda_max" => cfg.policy.lambda_max = parse_num(v).map_err(val)?,
                "min_epoch" => cfg.policy.min_epoch_ns = parse_duration(v).map_err(val)?,
                "fixed_rate" => cfg.policy.fixed_rate = parse_num(v).map_err(val)?,
                "zero_is_positive" => cfg.policy.zero_is_positive = parse_bool(v).map_err(val)?,
                "gamma_cap" => cfg.policy.gamma_cap = parse_num(v).map_err(val)?,
                "ewma_alpha" => cfg.ewma_alpha = parse_num(v).map_err(val)?,
                "feedback" => cfg.feedback = parse_bool(v).map_err(val)?,
                "peak_age_threshold" => cfg.peak_age_threshold_ns = parse_duration(v).map_err(val)?,
                "packets" => cfg.packet_budget = parse_num(v).map_err(val)?,
                "init_probes" => cfg.init.probes = parse_num(v).map_err(val)?,
                "init_spacing" => cfg.init.spacing_ns = parse_duration(v).map_err(val)?,
                "init_timeout" => cfg.init.timeout_ns = parse_duration(v).map_err(val)?,
                "init_retries" => cfg.init.retries = parse_num(v).map_err(val)?,
                "backlog_expiry" => cfg.backlog_expiry_ns = parse_duration(v).map_err(val)?,
                "base_delay" => {
                    cfg.forward.base_delay_ns = parse_duration(v).map_err(val)?;
                    cfg.reverse.base_delay_ns = cfg.forward.base_delay_ns;
                }
                "jitter" => {
                    cfg.forward.jitter = parse_dist(v).map_err(val)?;
                    cfg.reverse.jitter = cfg.forward.jitter;
                }
                "loss" => {
                    cfg.forward.loss_prob = parse_num(v).map_err(val)?;
                    cfg.reverse.loss_prob = cfg.forward.loss_prob;
                }
                "service" => cfg.forward.service = parse_dist(v).map_err(val)?,
                "fault_hold_count" => cfg.fault.hold_count = parse_num(v).map_err(val)?,
                "fault_flush_timeout" => cfg.fault.flush_timeout_ns = parse_duration(v).map_err(val)?,
                "fault_onset_rate" => cfg.fault.onset_rate_per_sec = parse_num(v).map_err(val)?,
                "fault_duration" => cfg.fault.episode_duration_ns = parse_duration(v).map_err(val)?,
                "fault_schedule" => cfg.fault.scheduled = parse_schedule(v).map_err(val)?,
                "seeds" => cfg.seeds = parse_seeds(v).map_err(val)?,
                _ => return Err(ConfigError::UnknownKey { line, key }),
            }
        }
        cfg.policy.clamp = match (clamp_lo, clamp_hi) {
            (None, None) => None,
            (Some(lo), Some(hi)) => Some(ClampBounds { lo, hi }),
            _ => return Err(ConfigError::Invalid("clamp_lo and clamp_hi must be given together".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; every key, fixed order.
    pub fn to_text(&self) -> String {
        let p = &self.policy;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("name", self.name.clone());
        kv("policy", p.kind.to_string());
        kv("kappa", p.kappa.to_string());
        kv("epoch_multiplier", p.epoch_multiplier.to_string());
        kv("clamp_lo", p.clamp.map_or("none".into(), |c| c.lo.to_string()));
        kv("clamp_hi", p.clamp.map_or("none".into(), |c| c.hi.to_string()));
        kv("lambda_min", p.lambda_min.to_string());
        kv("lambda_max", p.lambda_max.to_string());
        kv("min_epoch", fmt_duration(p.min_epoch_ns));
        kv("fixed_rate", p.fixed_rate.to_string());
        kv("zero_is_positive", p.zero_is_positive.to_string());
        kv("gamma_cap", p.gamma_cap.to_string());
        kv("ewma_alpha", self.ewma_alpha.to_string());
        kv("feedback", self.feedback.to_string());
        kv("peak_age_threshold", fmt_duration(self.peak_age_threshold_ns));
        kv("packets", self.packet_budget.to_string());
        kv("init_probes", self.init.probes.to_string());
        kv("init_spacing", fmt_duration(self.init.spacing_ns));
        kv("init_timeout", fmt_duration(self.init.timeout_ns));
        kv("init_retries", self.init.retries.to_string());
        kv("backlog_expiry", fmt_duration(self.backlog_expiry_ns));
        kv("base_delay", fmt_duration(self.forward.base_delay_ns));
        kv("jitter", fmt_dist(&self.forward.jitter));
        kv("loss", self.forward.loss_prob.to_string());
        kv("service", fmt_dist(&self.forward.service));
        kv("fault_hold_count", self.fault.hold_count.to_string());
        kv("fault_flush_timeout", fmt_duration(self.fault.flush_timeout_ns));
        kv("fault_onset_rate", self.fault.onset_rate_per_sec.to_string());
        kv("fault_duration", fmt_duration(self.fault.episode_duration_ns));
        kv("fault_schedule", fmt_schedule(&self.fault.scheduled));
        kv("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        s
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("'{v}' is not a valid number"))
}

fn parse_opt(v: &str) -> Result<Option<f64>, String> {
    if v == "none" {
        Ok(None)
    } else {
        parse_num(v).map(Some)
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

/// Parses `250ms`, `1.5s`, `40us` or `12ns` into nanoseconds.
pub fn parse_duration(v: &str) -> Result<u64, String> {
    let v = v.trim();
    let split = v.find(|c: char| c.is_ascii_alphabetic()).ok_or_else(|| format!("'{v}' lacks a unit"))?;
    let (num, unit) = v.split_at(split);
    let scale = match unit {
        "ns" => 1.0,
        "us" => 1e3,
        "ms" => 1e6,
        "s" => 1e9,
        _ => return Err(format!("unknown duration unit '{unit}'")),
    };
    let x: f64 = num.trim().parse().map_err(|_| format!("'{v}' is not a duration"))?;
    let ns = x * scale;
    if !(ns >= 0.0 && ns < u64::MAX as f64) {
        return Err(format!("duration '{v}' out of range"));
    }
    Ok(ns.round() as u64)
}

pub fn fmt_duration(ns: u64) -> String {
    if ns == 0 {
        "0ns".into()
    } else if ns.is_multiple_of(1_000_000_000) {
        format!("{}s", ns / 1_000_000_000)
    } else if ns.is_multiple_of(1_000_000) {
        format!("{}ms", ns / 1_000_000)
    } else if ns.is_multiple_of(1_000) {
        format!("{}us", ns / 1_000)
    } else {
        format!("{ns}ns")
    }
}

fn parse_dist(v: &str) -> Result<DelayDist, String> {
    let (kind, arg) = v.split_once(':').ok_or_else(|| format!("'{v}' is not KIND:ARGS"))?;
    match kind {
        "const" => Ok(DelayDist::Constant { ns: parse_duration(arg)? }),
        "exp" => Ok(DelayDist::Exponential { mean_ns: parse_duration(arg)? }),
        "lognormal" => {
            let (mu, sigma) = arg.split_once(',').ok_or_else(|| format!("'{arg}' is not MU,SIGMA"))?;
            let d = DelayDist::LogNormal { mu: parse_num(mu.trim())?, sigma: parse_num(sigma.trim())? };
            d.validate()?;
            Ok(d)
        }
        _ => Err(format!("unknown distribution '{kind}'")),
    }
}

fn fmt_dist(d: &DelayDist) -> String {
    match *d {
        DelayDist::Constant { ns } => format!("const:{}", fmt_duration(ns)),
        DelayDist::Exponential { mean_ns } => format!("exp:{}", fmt_duration(mean_ns)),
        DelayDist::LogNormal { mu, sigma } => format!("lognormal:{mu},{sigma}"),
    }
}

fn parse_schedule(v: &str) -> Result<Vec<(Timestamp, u64)>, String> {
    if v.is_empty() || v == "none" {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|item| {
            let (start, dur) = item.split_once('+').ok_or_else(|| format!("'{item}' is not START+DURATION"))?;
            Ok((Timestamp::from_nanos(parse_duration(start)?), parse_duration(dur)?))
        })
        .collect()
}

fn fmt_schedule(s: &[(Timestamp, u64)]) -> String {
    if s.is_empty() {
        return "none".into();
    }
    s.iter().map(|(t, d)| format!("{}+{}", fmt_duration(t.as_nanos()), fmt_duration(*d))).collect::<Vec<_>>().join(",")
}

/// Parses `1,2,5` or the inclusive range `1..5`.
fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    let seeds: Vec<u64> = if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (parse_num(a.trim())?, parse_num(b.trim())?);
        (a..=b).collect()
    } else {
        v.split(',').map(|x| parse_num(x.trim())).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(seeds)
}

