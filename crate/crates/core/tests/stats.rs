use pricequake_core::detector::{detect, QuakeKind, Sign};
use pricequake_core::engine::{Engine, ModelParams, SimulationOptions};
use pricequake_core::market::{build_calendar, sample_registry};
use pricequake_core::stats::{degree_stats, distribution, log2_pdf, role_counts, source_ranking, spread_by_source, summarize, Measure};
use proptest::prelude::*;

proptest! {
    #[test]
    fn pdf_is_normalized(values in prop::collection::vec(0u64..100_000, 1..400)) {
        let pdf = log2_pdf(&values).unwrap();
        let total: f64 = pdf.iter().map(|b| b.probability).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for w in pdf.windows(2) {
            prop_assert_eq!(w[0].upper, w[1].lower);
        }
        for v in values {
            prop_assert!(pdf.iter().any(|b| b.lower <= v && v < b.upper));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tables_on_simulated_runs(seed in any::<u64>(), cipq in any::<bool>()) {
        let ex = sample_registry();
        let cal = build_calendar(&ex, 120).unwrap();
        let p = ModelParams::reference().with_seed(seed);
        let opts = SimulationOptions { warmup_days: 20, ..Default::default() };
        let run = Engine::new(&ex, p).unwrap().simulate(&cal, &opts).unwrap();
        let kind = if cipq { QuakeKind::Cipq } else { QuakeKind::Sipq };
        let d = detect(&run.outcomes, p.threshold, kind).measured_from(run.measure_from_group);

        let degrees = degree_stats(&d.quakes, ex.len());
        for row in degrees.network {
            prop_assert_eq!(row.delta(), 0.0);
        }
        let sum_in: f64 = degrees.rows.iter().map(|r| r[2].mean_in).sum();
        let sum_out: f64 = degrees.rows.iter().map(|r| r[2].mean_out).sum();
        prop_assert!((sum_in - sum_out).abs() < 1e-9);

        let roles = role_counts(&d.nodes, ex.len());
        for (x, row) in roles.rows.iter().enumerate() {
            for s in Sign::BOTH {
                let critical = d.nodes.iter().filter(|n| n.event.exchange == x && n.sign == s).count();
                prop_assert_eq!(row.total(s), critical);
                if critical > 0 {
                    let pct: f64 = row.percentages(s).iter().sum();
                    prop_assert!((pct - 100.0).abs() < 1e-9);
                }
            }
        }

        let summary = summarize(&d.quakes);
        let neg = summary.row(kind, Some(Sign::Negative));
        let pos = summary.row(kind, Some(Sign::Positive));
        let all = summary.row(kind, None);
        prop_assert_eq!(neg.count + pos.count, all.count);
        if all.count > 0 {
            let weighted = (neg.mean_members * neg.count as f64 + pos.mean_members * pos.count as f64) / all.count as f64;
            prop_assert!((weighted - all.mean_members).abs() < 1e-9);
            let pdf = distribution(&d.quakes, Measure::DurationEvents).unwrap();
            prop_assert!((pdf.iter().map(|b| b.probability).sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        let ranking = source_ranking(&d.quakes, ex.len());
        prop_assert!(ranking.windows(2).all(|w| w[0].1 >= w[1].1));
        let spread = spread_by_source(&d.quakes, ex.len());
        for (x, row) in spread.iter().enumerate() {
            let seeds = ranking.iter().find(|r| r.0 == x).unwrap().1;
            prop_assert_eq!(seeds == 0.0, row[2] == 0.0);
        }
    }
}
