use std::collections::BTreeSet;

use pricequake_core::detector::{
    critical_nodes, detect, detect_impacts, marks_from_outcome, classify_critical, InfluenceKind, QuakeKind, Role,
};
use pricequake_core::engine::{Engine, ModelParams, SimulationOptions, StressTensor};
use pricequake_core::market::{build_calendar, ExchangeSpec};
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = (Vec<ExchangeSpec>, ModelParams, u32)> {
    (2usize..7, 0.01f64..0.05, any::<u64>(), 2u32..20).prop_map(|(n, rc, seed, days)| {
        let ex = (0..n)
            .map(|i| {
                ExchangeSpec::new(i, format!("E{i}"), 1.0 + i as f64, i as f64 * 2.0, (i % 3) as f64, 8.0 + (i % 2) as f64)
            })
            .collect();
        let p = ModelParams {
            threshold: rc,
            noise_sd: 0.03,
            ..ModelParams::reference().with_seed(seed)
        };
        (ex, p, days)
    })
}

fn run(ex: &[ExchangeSpec], p: ModelParams, days: u32) -> Vec<pricequake_core::engine::EventOutcome> {
    let cal = build_calendar(ex, days).unwrap();
    let opts = SimulationOptions {
        warmup_days: 0,
        ..Default::default()
    };
    Engine::new(ex, p).unwrap().simulate(&cal, &opts).unwrap().outcomes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edges_respect_definitions((ex, p, days) in scenario()) {
        let outcomes = run(&ex, p, days);
        for e in detect_impacts(&outcomes, p.threshold) {
            prop_assert!(e.contributing_set.contains(&e.from));
            prop_assert!(e.from_event.group < e.at.group);
            prop_assert!(e.from != e.to);
            if e.kind == InfluenceKind::Single {
                prop_assert!(e.contribution.abs() > p.threshold);
                prop_assert_eq!(e.contributing_set.len(), 1);
            } else {
                prop_assert!(e.contributing_set.len() >= 2);
            }
        }
    }

    #[test]
    fn quake_records_are_consistent((ex, p, days) in scenario(), cipq in any::<bool>()) {
        let outcomes = run(&ex, p, days);
        let kind = if cipq { QuakeKind::Cipq } else { QuakeKind::Sipq };
        let d = detect(&outcomes, p.threshold, kind);
        let mut seen = BTreeSet::new();
        for q in &d.quakes {
            prop_assert!(q.size() >= 2);
            prop_assert!(q.sources_without_influence.contains(&q.source));
            for e in &q.edges {
                prop_assert_eq!(e.sign, q.sign);
                prop_assert!(q.members.contains(&e.from) && q.members.contains(&e.to));
                prop_assert!(e.at.group <= q.start.group + q.duration_events);
                // An edge belongs to exactly one quake.
                prop_assert!(seen.insert((e.from, e.to, e.at.group, e.kind, e.sign)));
            }
            for m in &q.members {
                let influenced = q.edges.iter().any(|e| e.to == *m);
                prop_assert!(influenced || q.sources_without_influence.contains(m));
            }
        }
        prop_assert_eq!(seen.len(), d.edges.len());
    }

    #[test]
    fn every_sipq_sits_inside_a_cipq((ex, p, days) in scenario()) {
        let outcomes = run(&ex, p, days);
        let sipq = detect(&outcomes, p.threshold, QuakeKind::Sipq);
        let cipq = detect(&outcomes, p.threshold, QuakeKind::Cipq);
        for q in &sipq.quakes {
            prop_assert!(cipq.quakes.iter().any(|c| c.sign == q.sign && q.members.iter().all(|m| c.members.contains(m))));
        }
    }

    #[test]
    fn roles_partition_critical_nodes((ex, p, days) in scenario()) {
        let outcomes = run(&ex, p, days);
        let d = detect(&outcomes, p.threshold, QuakeKind::Sipq);
        prop_assert_eq!(d.nodes.len(), critical_nodes(&outcomes).len());
        for n in &d.nodes {
            let has_in = d.edges.iter().any(|e| e.at == n.event && e.sign == n.sign);
            let has_out = d.edges.iter().any(|e| e.from_event == n.event && e.sign == n.sign);
            let expected = if has_in { Role::Influenced } else if has_out { Role::Source } else { Role::Excluded };
            prop_assert_eq!(n.role, expected);
        }
    }

    #[test]
    fn marks_match_snapshot_classification(stress in prop::collection::vec(-0.1f64..0.1, 16), rc in 0.01f64..0.05) {
        let t = StressTensor::from_fn(4, |i, j| stress[i * 4 + j]).unwrap();
        let engine = Engine::from_weights(
            pricequake_core::engine::CouplingWeights::from_matrix(4, vec![0.5; 16]).unwrap(),
            ModelParams { threshold: rc, ..ModelParams::reference() },
        ).unwrap();
        let ex: Vec<ExchangeSpec> = (0..4).map(|i| ExchangeSpec::new(i, "E", 1.0, 0.0, 1.0, 2.0)).collect();
        let cal = build_calendar(&ex, 1).unwrap();
        let event = cal.events().next().copied().unwrap();
        let (outcome, _) = engine.evaluate_event(&t, &event, 0.0).unwrap();
        prop_assert_eq!(marks_from_outcome(&outcome), classify_critical(&t, &event, rc));
    }
}

#[test]
fn warmup_filter_drops_early_quakes() {
    let ex: Vec<ExchangeSpec> = (0..5)
        .map(|i| ExchangeSpec::new(i, format!("E{i}"), 1.0, 0.0, i as f64, 10.0 + i as f64))
        .collect();
    let p = ModelParams::reference().with_seed(9);
    let outcomes = run(&ex, p, 60);
    let d = detect(&outcomes, p.threshold, QuakeKind::Sipq);
    let cut = outcomes[outcomes.len() / 2].event.group;
    let later = d.clone().measured_from(cut);
    assert!(later.quakes.iter().all(|q| q.start.group >= cut));
    assert!(later.nodes.iter().all(|n| n.event.group >= cut));
    assert!(later.quakes.len() <= d.quakes.len());
}
