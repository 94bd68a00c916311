use agectl_core::netsim::{
    fault_recovery_scenario, run_simulation, ChannelModel, CoalesceFault, DelayDist, SimConfig,
};
use agectl_core::policy::{PolicyConfig, PolicyKind};
use agectl_core::time::{Timestamp, NANOS_PER_MS, NANOS_PER_SEC};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = PolicyKind> {
    prop::sample::select(PolicyKind::ALL.to_vec())
}

fn config(kind: PolicyKind, seed: u64, loss: f64, jitter_ms: u64, budget: u64) -> SimConfig {
    let forward = ChannelModel {
        base_delay_ns: 5 * NANOS_PER_MS,
        jitter: DelayDist::Exponential { mean_ns: jitter_ms * NANOS_PER_MS + 1 },
        loss_prob: loss,
        service: DelayDist::Constant { ns: 2 * NANOS_PER_MS },
    };
    let mut cfg = SimConfig::with_channel(forward);
    cfg.session.policy = PolicyConfig::new(kind);
    cfg.session.packet_budget = budget;
    cfg.fault.onset_rate_per_sec = 0.1;
    cfg.seed = seed;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_packet_is_accounted_for(kind in kind_strategy(), seed in 0u64..1000, loss in 0.0f64..0.2, jitter in 0u64..20) {
        let res = run_simulation(&config(kind, seed, loss, jitter, 400)).unwrap();
        let c = res.conservation;
        prop_assert_eq!(c.sent, c.acked + c.lost_forward + c.lost_reverse + c.in_flight);
        prop_assert_eq!(c.sent, res.counters.sent);
        prop_assert_eq!(res.counters.sent - res.counters.init_probes, 400);
    }

    #[test]
    fn epochs_tile_the_run(kind in kind_strategy(), seed in 0u64..1000) {
        let res = run_simulation(&config(kind, seed, 0.01, 5, 300)).unwrap();
        prop_assert!(!res.rows.is_empty());
        prop_assert_eq!(Some(res.rows[0].t_start), res.epochs_start);
        for (i, w) in res.rows.windows(2).enumerate() {
            prop_assert_eq!(w[0].t_end, w[1].t_start);
            prop_assert_eq!(w[1].k, i as u64 + 1);
        }
        for r in &res.rows {
            prop_assert!(r.t_end > r.t_start);
            prop_assert!(r.avg_age_ns >= 0.0 && r.avg_age_ns <= r.peak_age_ns as f64);
            prop_assert!(r.true_avg_age_ns.is_some_and(|a| a >= 0.0));
            prop_assert!(r.avg_backlog >= 0.0);
            prop_assert!(r.lambda > 0.0);
        }
    }

    #[test]
    fn packets_respect_causality(seed in 0u64..1000) {
        let res = run_simulation(&config(PolicyKind::Acp, seed, 0.05, 10, 300)).unwrap();
        for p in &res.packets {
            prop_assert!(p.send_time >= p.gen_time);
            if let Some(m) = p.monitor_recv {
                prop_assert!(m > p.send_time);
                if let Some(a) = p.ack_recv {
                    prop_assert!(a > m);
                }
            } else {
                prop_assert!(p.ack_recv.is_none());
            }
        }
    }

    #[test]
    fn same_seed_same_result(kind in kind_strategy(), seed in 0u64..1000) {
        let cfg = config(kind, seed, 0.02, 5, 200);
        prop_assert_eq!(run_simulation(&cfg).unwrap(), run_simulation(&cfg).unwrap());
    }
}

#[test]
fn different_seeds_differ() {
    let a = run_simulation(&config(PolicyKind::Acp, 1, 0.02, 5, 300)).unwrap();
    let b = run_simulation(&config(PolicyKind::Acp, 2, 0.02, 5, 300)).unwrap();
    assert_ne!(a.rows, b.rows);
}

#[test]
fn lossless_constant_channel_acks_everything() {
    let mut cfg = SimConfig::with_channel(ChannelModel::constant(10 * NANOS_PER_MS));
    cfg.fault = CoalesceFault::disabled();
    cfg.session.policy = PolicyConfig::new(PolicyKind::Lazy);
    cfg.session.packet_budget = 500;
    let res = run_simulation(&cfg).unwrap();
    let c = res.conservation;
    assert_eq!(c.lost_forward + c.lost_reverse + c.in_flight, 0);
    for p in &res.packets {
        assert_eq!(p.ack_recv.unwrap().saturating_since(p.send_time), 20 * NANOS_PER_MS);
    }
    assert!(res.fault_episodes.is_empty());
}

#[test]
fn scheduled_fault_inflates_rtt_and_is_logged() {
    let mut cfg = SimConfig::default();
    cfg.session.policy = PolicyConfig::new(PolicyKind::Lazy);
    cfg.session.packet_budget = 3_000;
    let out = fault_recovery_scenario(&cfg, Timestamp::from_secs(20), 30 * NANOS_PER_SEC).unwrap();
    assert_eq!(out.result.fault_episodes, vec![(Timestamp::from_secs(20), Timestamp::from_secs(50))]);
    let during: Vec<_> = out.result.rows.iter().filter(|r| r.t_start > out.fault_start && r.t_end < out.fault_end).collect();
    let before: Vec<_> = out.result.rows.iter().filter(|r| r.t_end < out.fault_start).collect();
    let max_before = before.iter().map(|r| r.rtt_bar_ns).fold(0.0, f64::max);
    assert!(during.iter().any(|r| r.rtt_bar_ns > 3.0 * max_before));
    assert!(out.first_violation.is_some());
    assert!(out.recovery_epochs.is_some());
}

#[test]
fn feedback_pulls_rtt_estimate_down_during_fault() {
    let mut cfg = SimConfig::default();
    cfg.session.policy = PolicyConfig::new(PolicyKind::Lazy);
    cfg.session.packet_budget = 3_000;
    let run = |fb: bool| {
        let mut c = cfg.clone();
        c.session.feedback = fb;
        fault_recovery_scenario(&c, Timestamp::from_secs(20), 30 * NANOS_PER_SEC).unwrap()
    };
    let (on, off) = (run(true), run(false));
    let zeta_max = on.result.rows.iter().map(|r| r.zeta).max().unwrap();
    assert!(zeta_max >= 1);
    assert!(off.result.rows.iter().all(|r| r.zeta == 0));
    assert!(on.recovery_time_ns.unwrap() < off.recovery_time_ns.unwrap());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = SimConfig::default();
    cfg.forward.loss_prob = 1.5;
    assert!(run_simulation(&cfg).is_err());
    let mut cfg = SimConfig::default();
    cfg.fault.hold_count = 0;
    assert!(run_simulation(&cfg).is_err());
    let mut cfg = SimConfig::default();
    cfg.forward.jitter = DelayDist::LogNormal { mu: 0.0, sigma: -1.0 };
    assert!(run_simulation(&cfg).is_err());
}

#[test]
fn zero_budget_finishes_without_epochs() {
    let mut cfg = SimConfig::default();
    cfg.session.packet_budget = 0;
    let res = run_simulation(&cfg).unwrap();
    assert!(res.rows.is_empty());
    assert_eq!(res.conservation.sent, 0);
}
