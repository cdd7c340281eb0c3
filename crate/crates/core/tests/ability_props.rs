mod common;

use std::collections::BTreeMap;
use std::thread;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skillgraph::ability::{
    AbilityBinding, AbilityGraph, BindingDocument, ConcurrentMonitor, MonitorThresholds,
    Redundancy, SignalSample,
};
use skillgraph::graph::{follow_mode_example, SkillCategory, SkillGraph, SkillNode};
use skillgraph::metrics::{CompositionRule, MetricCatalog, MetricDocument};
use skillgraph::requirements::afas_goals;

#[test]
fn thousand_random_dags_match_recursive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let case = common::random_propagation_case(&mut rng, n);
        let mut ag = case.instantiate();
        ag.propagate();
        for i in 0..n {
            let got = ag.level(&format!("n{i}")).unwrap().value();
            assert!(
                (got - case.oracle(i)).abs() < 1e-12,
                "node n{i}: {got} vs {}",
                case.oracle(i)
            );
        }
        for ((from, to), l) in ag.edge_levels() {
            assert_eq!(l, ag.level(&to).unwrap(), "{from}->{to}");
        }
    }
}

proptest! {
    #[test]
    fn lowering_a_leaf_never_raises_an_ancestor(seed in any::<u64>(), n in 2usize..=8, drop in 0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = common::random_propagation_case(&mut rng, n);
        prop_assume!(!case.samples.is_empty());
        let mut ag = case.instantiate();
        ag.propagate();
        let before = ag.levels();
        let pick = rng.random_range(0..case.samples.len());
        let (metric, comp, m) = case.samples[pick].clone();
        let lowered = if m >= 0.0 { m + drop } else { m - drop };
        ag.ingest_sample(SignalSample::new(&metric, &comp, lowered, "1", 1.0)).unwrap();
        ag.propagate();
        for (id, l) in ag.levels() {
            prop_assert!(l.value() <= before[&id].value() + 1e-12, "{} rose", id);
        }
    }

    #[test]
    fn repeated_propagation_is_a_fixed_point(seed in any::<u64>(), n in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = common::random_propagation_case(&mut rng, n);
        let mut ag = case.instantiate();
        ag.propagate();
        let first = ag.levels();
        ag.propagate();
        prop_assert_eq!(&ag.levels(), &first);
        prop_assert!(ag.is_isomorphic_to(&case.graph));
    }

    #[test]
    fn redundancy_masks_any_single_failure(healthy in 0usize..2, values in prop::collection::vec(0f64..1.0, 2)) {
        let mut g = SkillGraph::new("r");
        g.add_skill(SkillNode::new("root", "root", SkillCategory::Main)).unwrap();
        g.add_skill(SkillNode::new("cam", "cam", SkillCategory::Sensor)).unwrap();
        g.add_dependency("root", "cam").unwrap();
        let doc = MetricDocument::from_json(r#"{"atomics":[{"id":"ok","spec":{"kind":"validity_flag"}},
            {"id":"noise","spec":{"kind":"variance_bound","threshold":1,"unit":"m^2"}}]}"#).unwrap();
        let cat = MetricCatalog::from_document(&doc, None).unwrap();
        let bindings = BTreeMap::from([
            ("root".to_string(), AbilityBinding { components: vec!["r".into()], metrics: vec![], rule: CompositionRule::Min, redundancy: Redundancy::Single }),
            ("cam".to_string(), AbilityBinding { components: vec!["a".into(), "b".into()], metrics: vec!["ok".into(), "noise".into()], rule: CompositionRule::Min, redundancy: Redundancy::Max }),
        ]);
        let mut ag = AbilityGraph::instantiate(&g, &bindings, cat).unwrap();
        let comps = ["a", "b"];
        // Both healthy, the healthy one being the better of the two.
        for (i, c) in comps.iter().enumerate() {
            let v = if i == healthy { values[0].min(values[1]) } else { values[0].max(values[1]) };
            ag.ingest_sample(SignalSample::new("ok", c, 1.0, "flag", 0.0)).unwrap();
            ag.ingest_sample(SignalSample::new("noise", c, v, "m^2", 0.0)).unwrap();
        }
        ag.propagate();
        let both = ag.level("cam").unwrap();
        ag.ingest_sample(SignalSample::new("ok", comps[1 - healthy], 0.0, "flag", 1.0)).unwrap();
        ag.propagate();
        prop_assert_eq!(ag.level("cam").unwrap(), both);
    }
}

#[test]
fn shipped_bindings_instantiate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let bindings = BindingDocument::from_json(
        &std::fs::read_to_string(dir.join("follow_mode_bindings.json")).unwrap(),
    )
    .unwrap();
    let doc = MetricDocument::from_json(
        &std::fs::read_to_string(dir.join("follow_mode_metrics.json")).unwrap(),
    )
    .unwrap();
    let cat = MetricCatalog::from_document(&doc, Some(&afas_goals())).unwrap();
    let g = follow_mode_example();
    let ag = AbilityGraph::instantiate(&g, &bindings.bindings, cat).unwrap();
    assert!(ag.is_isomorphic_to(&g));
    assert_eq!(ag.main_id(), "follow_mode");
}

#[test]
fn shared_dependency_reports_one_level_on_both_parents() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    loop {
        let case = common::random_propagation_case(&mut rng, 6);
        let mut ag = case.instantiate();
        ag.propagate();
        let levels = ag.edge_levels();
        let shared =
            (0..6).find(|&c| case.children.values().filter(|v| v.contains(&c)).count() > 1);
        if let Some(c) = shared {
            let id = format!("n{c}");
            let incoming: Vec<_> = levels
                .iter()
                .filter(|((_, to), _)| *to == id)
                .map(|(_, l)| *l)
                .collect();
            assert!(incoming.len() > 1);
            assert!(incoming.windows(2).all(|w| w[0] == w[1]));
            break;
        }
    }
}

#[test]
fn concurrent_producers_feed_consistent_snapshots() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let case = common::random_propagation_case(&mut rng, 8);
    let ag = AbilityGraph::instantiate(&case.graph, &case.bindings, case.catalog.clone()).unwrap();
    let (mut monitor, tx) = ConcurrentMonitor::new(ag, MonitorThresholds::default());
    let reader = monitor.reader();
    assert_eq!(reader.latest().cycle, 0);

    let handles: Vec<_> = case
        .samples
        .chunks(2)
        .map(|chunk| {
            let tx = tx.clone();
            let chunk = chunk.to_vec();
            thread::spawn(move || {
                for (metric, comp, v) in chunk {
                    tx.send(SignalSample::new(&metric, &comp, v, "1", 0.0))
                        .unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let report = monitor.run_cycle();
    assert_eq!(report.accepted, case.samples.len());
    assert!(report.rejected.is_empty());
    let snap = reader.latest();
    assert_eq!(snap.cycle, 1);
    for i in 0..case.n {
        assert!((snap.levels[&format!("n{i}")].value() - case.oracle(i)).abs() < 1e-12);
    }

    // Readers on other threads see whole snapshots only.
    let r2 = reader.clone();
    let t = thread::spawn(move || r2.latest().levels.len());
    assert_eq!(t.join().unwrap(), case.n);

    tx.send(SignalSample::new("missing", "x", 0.0, "1", 0.0))
        .unwrap();
    let report = monitor.run_cycle();
    assert_eq!(report.rejected.len(), 1);
}
