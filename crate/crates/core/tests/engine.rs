use pricequake_core::engine::{CouplingWeights, Engine, ModelParams, NewsSource, SimulationOptions, StressTensor};
use pricequake_core::market::{build_calendar, build_calendar_with_sessions, sample_registry, ExchangeSpec};
use proptest::prelude::*;

fn registry(caps: &[f64], zones: &[f64], hours: &[(f64, f64)]) -> Vec<ExchangeSpec> {
    (0..caps.len())
        .map(|i| ExchangeSpec::new(i, format!("E{i}"), caps[i], zones[i], hours[i].0, hours[i].1))
        .collect()
}

fn small_market() -> impl Strategy<Value = (Vec<ExchangeSpec>, ModelParams, u32)> {
    (2usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(0.05f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec((0u8..6, 6u8..12), n),
            0.005f64..0.08,
            1.0f64..50.0,
            0.1f64..3.0,
            0.001f64..0.05,
            any::<u64>(),
            1u32..15,
        )
            .prop_map(|(caps, zones, hours, rc, tau, gamma, sd, seed, days)| {
                let hours: Vec<(f64, f64)> = hours.iter().map(|&(o, c)| (o as f64, c as f64)).collect();
                let params = ModelParams {
                    threshold: rc,
                    zone_scale: tau,
                    cap_scale: gamma,
                    noise_sd: sd,
                    seed,
                };
                (registry(&caps, &zones, &hours), params, days)
            })
    })
}

fn no_warmup() -> SimulationOptions {
    SimulationOptions {
        warmup_days: 0,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn return_is_coupling_plus_news((ex, p, days) in small_market()) {
        let cal = build_calendar(&ex, days).unwrap();
        let run = Engine::new(&ex, p).unwrap().simulate(&cal, &no_warmup()).unwrap();
        for o in &run.outcomes {
            prop_assert_eq!(o.ret, o.coupling_term + o.noise);
            prop_assert!(o.active.iter().all(|a| a.stress.abs() > p.threshold && a.counterpart != o.event.exchange));
        }
    }

    #[test]
    fn active_trace_matches_full_replay((ex, p, days) in small_market(), gamma in 0.1f64..3.0, tau in 1.0f64..50.0) {
        let cal = build_calendar(&ex, days).unwrap();
        let run = Engine::new(&ex, p).unwrap().simulate(&cal, &no_warmup()).unwrap();
        let obs = run.returns();
        // The trace is taken under p's weights and re-weighted with other ones.
        let trace = Engine::new(&ex, p).unwrap().replay_active(&cal, &obs).unwrap();
        let other = ModelParams { cap_scale: gamma, zone_scale: tau, ..p };
        let mut full = Vec::new();
        Engine::new(&ex, other).unwrap().replay_residuals(&cal, &obs, &mut full).unwrap();
        let weights = CouplingWeights::new(&ex, &other, Default::default()).unwrap();
        let fast: Vec<(f64, f64)> = trace.residuals(&weights).collect();
        prop_assert_eq!(fast, full);
    }

    #[test]
    fn diagonal_stays_zero((ex, p, days) in small_market()) {
        let cal = build_calendar(&ex, days).unwrap();
        let run = Engine::new(&ex, p).unwrap().simulate(&cal, &no_warmup()).unwrap();
        for i in 0..ex.len() {
            prop_assert_eq!(run.final_tensor.get(i, i), 0.0);
        }
    }

    #[test]
    fn negated_news_mirrors_everything((ex, p, days) in small_market(), init in prop::collection::vec(-0.1f64..0.1, 36)) {
        let n = ex.len();
        let cal = build_calendar(&ex, days).unwrap();
        let engine = Engine::new(&ex, p).unwrap();
        let initial = StressTensor::from_fn(n, |i, j| init[i * n + j]).unwrap();
        let mut up = NewsSource::homogeneous(p.seed, n, p.noise_sd);
        let mut down = up.clone();
        let a = engine.simulate_with_news(&cal, initial.clone(), 0, |e| up.draw(e.exchange)).unwrap();
        let b = engine.simulate_with_news(&cal, initial.negated(), 0, |e| -down.draw(e.exchange)).unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            prop_assert_eq!(x.ret, -y.ret);
            prop_assert_eq!(x.active.len(), y.active.len());
        }
        prop_assert_eq!(a.final_tensor.negated(), b.final_tensor);
    }

    #[test]
    fn replay_recovers_news((ex, p, days) in small_market()) {
        let cal = build_calendar(&ex, days).unwrap();
        let engine = Engine::new(&ex, p).unwrap();
        let run = engine.simulate(&cal, &no_warmup()).unwrap();
        let replayed = engine.replay(&cal, &run.returns()).unwrap();
        prop_assert_eq!(&replayed.final_tensor, &run.final_tensor);
        for (o, r) in run.outcomes.iter().zip(&replayed.residuals) {
            prop_assert!((o.noise - r).abs() <= 1e-15);
        }
    }

    #[test]
    fn same_seed_same_run((ex, p, days) in small_market()) {
        let cal = build_calendar(&ex, days).unwrap();
        let engine = Engine::new(&ex, p).unwrap();
        prop_assert_eq!(engine.simulate(&cal, &no_warmup()).unwrap(), engine.simulate(&cal, &no_warmup()).unwrap());
    }
}

#[test]
fn gaps_skip_events_and_keep_stress() {
    let ex = sample_registry();
    let cal = build_calendar_with_sessions(&ex, 30, |day, id| !(id == 21 && day % 5 == 0)).unwrap();
    assert_eq!(cal.event_count(), 2 * (24 * 30 - 6));
    let run = Engine::new(&ex, ModelParams::reference().with_seed(4))
        .unwrap()
        .simulate(&cal, &no_warmup())
        .unwrap();
    assert_eq!(run.outcomes.len(), cal.event_count());
    assert!(run.outcomes.iter().all(|o| o.event.exchange != 21 || o.event.day % 5 != 0));
}

#[test]
fn different_seeds_differ() {
    let ex = sample_registry();
    let cal = build_calendar(&ex, 5).unwrap();
    let a = Engine::new(&ex, ModelParams::reference().with_seed(1)).unwrap().simulate(&cal, &no_warmup()).unwrap();
    let b = Engine::new(&ex, ModelParams::reference().with_seed(2)).unwrap().simulate(&cal, &no_warmup()).unwrap();
    assert_ne!(a.returns(), b.returns());
}

#[test]
fn warmup_sets_measurement_start() {
    let ex = sample_registry();
    let cal = build_calendar(&ex, 12).unwrap();
    let opts = SimulationOptions {
        warmup_days: 10,
        ..Default::default()
    };
    let run = Engine::new(&ex, ModelParams::reference()).unwrap().simulate(&cal, &opts).unwrap();
    assert_eq!(run.warmup_events, 10 * 48);
    assert_eq!(run.measured().len(), 2 * 48);
    assert_eq!(run.measured()[0].event.day, 10);
    assert_eq!(run.measure_from_group, run.measured()[0].event.group);
}
