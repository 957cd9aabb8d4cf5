mod common;

use std::cmp::Ordering;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recourse_core::dataset::{Dataset, SubjectRecord};
use recourse_core::recourse::{
    deviation_stats, rank_order, trajectory_slope, undo, PROJECTION_EPSILON,
};
use recourse_core::{
    ConstraintSet, DisplaySelection, Engine, LogisticModel, RecourseError, RecoursePath, Scorer,
    Termination,
};

use common::{background, dataset, engine, hand_score, model, FIXTURE};

fn unit(ds: &Dataset, j: usize, v: f64) -> f64 {
    let f = &ds.schema.features()[j];
    (v - f.min) / (f.max - f.min)
}

#[derive(Debug, Clone, PartialEq)]
struct Ranked {
    id: String,
    projection: f64,
    l1: f64,
}

/// Every subject other than the current one and the visited ones, filtered
/// and sorted without going through the engine.
fn brute_force_candidates(
    ds: &Dataset,
    m: &LogisticModel,
    current: &SubjectRecord,
    visited: &[String],
    immutable: &[usize],
    tolerance: f64,
) -> Vec<Ranked> {
    let here = hand_score(m, ds, &current.values);
    let mut out: Vec<Ranked> = ds
        .records
        .iter()
        .filter(|r| r.id != current.id && !visited.contains(&r.id))
        .filter(|r| {
            immutable.iter().all(|&j| {
                (unit(ds, j, r.values[j]) - unit(ds, j, current.values[j])).abs() <= tolerance
            })
        })
        .filter_map(|r| {
            let l1: f64 = (0..r.values.len())
                .map(|j| (unit(ds, j, r.values[j]) - unit(ds, j, current.values[j])).abs())
                .sum();
            let gain = hand_score(m, ds, &r.values) - here;
            (gain > 0.0).then(|| Ranked {
                id: r.id.clone(),
                projection: gain / l1.max(1e-6),
                l1,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.projection
            .partial_cmp(&a.projection)
            .unwrap()
            .then(a.l1.partial_cmp(&b.l1).unwrap())
            .then(a.id.cmp(&b.id))
    });
    out
}

#[test]
fn projections_match_brute_force_formula() {
    let e = engine();
    let ds = e.dataset();
    let current = e.state("a040").unwrap();
    let here = hand_score(model(), ds, &current.values);
    for r in ds.records.iter().filter(|r| r.id != "a040").take(50) {
        let p = e.projection_score(&current, r).unwrap();
        let l1: f64 = (0..11)
            .map(|j| (unit(ds, j, r.values[j]) - unit(ds, j, current.values[j])).abs())
            .sum();
        let gain = hand_score(model(), ds, &r.values) - here;
        assert!((p.l1_change - l1).abs() <= 1e-12);
        assert!((p.outcome_gain - gain).abs() <= 1e-12);
        assert!((p.projection - gain / l1.max(PROJECTION_EPSILON)).abs() <= 1e-9);
    }
}

#[test]
fn candidate_ranking_matches_brute_force() {
    let e = engine();
    let ds = e.dataset();
    let cs = ConstraintSet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let id = ds.records[rng.random_range(0..ds.len())].id.clone();
        let path = e.start(&id, 0.8).unwrap();
        let got = e.find_candidates(&path, &cs).unwrap();
        let want = brute_force_candidates(ds, model(), ds.get(&id).unwrap(), &[], &[], 0.05);
        let got_ids: Vec<&str> = got.iter().map(|c| c.subject_id.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(got_ids, want_ids, "from {id}");
        let top3: Vec<&str> = got
            .iter()
            .filter(|c| c.top3)
            .map(|c| c.subject_id.as_str())
            .collect();
        assert_eq!(top3, want_ids.iter().take(3).copied().collect::<Vec<_>>());
    }
}

#[test]
fn immutable_features_hold_for_every_candidate() {
    let e = engine();
    let ds = e.dataset();
    let age = ds.schema.index_of("person_age").unwrap();
    let defaults = ds.schema.index_of("prior_defaults").unwrap();
    let cs = ConstraintSet {
        immutable_features: vec!["person_age".into(), "prior_defaults".into()],
        immutable_tolerance: 0.1,
        ..ConstraintSet::default()
    };
    for id in ["a003", "a077", "a150"] {
        let path = e.start(id, 0.8).unwrap();
        let current = ds.get(id).unwrap();
        let got = e.find_candidates(&path, &cs).unwrap();
        for c in &got {
            let r = ds.get(&c.subject_id).unwrap();
            for j in [age, defaults] {
                assert!((unit(ds, j, r.values[j]) - unit(ds, j, current.values[j])).abs() <= 0.1);
            }
        }
        let want = brute_force_candidates(ds, model(), current, &[], &[age, defaults], 0.1);
        assert_eq!(got.len(), want.len());
    }
}

#[test]
fn extended_states_carry_direct_scores() {
    let e = engine();
    let cs = ConstraintSet::default();
    let mut path = e.start("a132", 0.999).unwrap();
    for _ in 0..3 {
        let cands = e.find_candidates(&path, &cs).unwrap();
        // take the third-ranked candidate so the path grows slowly
        let pick = cands.get(2).or(cands.first()).unwrap().subject_id.clone();
        path = e.extend_path(&path, &pick, &cs).unwrap();
    }
    assert_eq!(path.len(), 4);
    for st in &path.states {
        let r = e.dataset().get(&st.subject_id).unwrap();
        assert!((st.outcome - hand_score(model(), e.dataset(), &r.values)).abs() <= 1e-12);
        assert!((st.attribution.total() - st.outcome).abs() <= 1e-9);
    }
    for w in path.states.windows(2) {
        assert!(w[1].outcome > w[0].outcome);
    }
}

#[test]
fn select_undo_sequences_follow_a_stack() {
    let e = engine();
    let cs = ConstraintSet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let mut path = RecoursePath::default();
        let mut stack: Vec<String> = Vec::new();
        let mut history: Vec<RecoursePath> = Vec::new();
        for _ in 0..30 {
            if rng.random_bool(0.35) {
                match undo(&path) {
                    Ok(prev) => {
                        stack.pop();
                        assert_eq!(&prev, history.last().unwrap());
                        history.pop();
                        path = prev;
                    }
                    Err(err) => {
                        assert_eq!(err, RecourseError::EmptyPath);
                        assert!(stack.is_empty());
                    }
                }
                continue;
            }
            let next = if path.is_empty() {
                let id = &e.dataset().records[rng.random_range(0..200)].id;
                e.start(id, 0.8).unwrap()
            } else {
                let cands = e.find_candidates(&path, &cs).unwrap();
                if cands.is_empty() {
                    continue;
                }
                let pick = &cands[rng.random_range(0..cands.len())].subject_id;
                e.extend_path(&path, pick, &cs).unwrap()
            };
            history.push(path.clone());
            stack.push(next.last().unwrap().subject_id.clone());
            path = next;
        }
        let ids: Vec<String> = path.states.iter().map(|s| s.subject_id.clone()).collect();
        assert_eq!(ids, stack);
    }
}

#[test]
fn deviations_match_column_average_oracle() {
    let ds = dataset();
    let mut rdr = csv::Reader::from_path(FIXTURE).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let mean = |col: usize| {
        rows.iter()
            .map(|r| r[col].parse::<f64>().unwrap())
            .sum::<f64>()
            / rows.len() as f64
    };
    for id in ["a010", "a099"] {
        let r = ds.get(id).unwrap();
        let dev = deviation_stats(&ds.schema, &r.values);
        for (j, f) in ds.schema.features().iter().enumerate() {
            let expected = unit(&ds, j, r.values[j]) - unit(&ds, j, mean(j + 1));
            assert!((dev[&f.name] - expected).abs() <= 1e-12);
            assert!((-1.0..=1.0).contains(&dev[&f.name]));
        }
    }
}

#[test]
fn slopes_follow_the_attribution_table() {
    let e = engine();
    let cs = ConstraintSet::default();
    let plan = e.greedy_plan("a094", &cs, 0.8, 10).unwrap();
    assert!(plan.path.len() >= 2);
    let (a, b) = (&plan.path.states[0], &plan.path.states[1]);
    let table = e.attributions();
    let ia = e.dataset().position(&a.subject_id).unwrap();
    let ib = e.dataset().position(&b.subject_id).unwrap();
    for (j, name) in e.schema().names().enumerate() {
        let dx = e.dataset().records[ib].values[j] - e.dataset().records[ia].values[j];
        let expected = (dx.abs() > 1e-12).then(|| (table[ib].phi[name] - table[ia].phi[name]) / dx);
        assert_eq!(trajectory_slope(e.schema(), a, b, name), expected);
    }
}

/// Greedy walk written against the brute-force ranking.
fn greedy_oracle(
    ds: &Dataset,
    m: &LogisticModel,
    start: &str,
    target: f64,
    budget: usize,
) -> (Vec<String>, &'static str) {
    let mut path = vec![start.to_string()];
    loop {
        let here = ds.get(path.last().unwrap()).unwrap();
        if hand_score(m, ds, &here.values) >= target {
            return (path, "target_reached");
        }
        if path.len() > budget {
            return (path, "budget");
        }
        let ranked = brute_force_candidates(ds, m, here, &path, &[], 0.05);
        match ranked.first() {
            Some(best) => path.push(best.id.clone()),
            None => return (path, "stuck"),
        }
    }
}

#[test]
fn greedy_plans_match_oracle_for_bottom_decile() {
    let e = engine();
    let ds = e.dataset();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| e.outcomes()[a].total_cmp(&e.outcomes()[b]));
    let mut reached = 0;
    for &i in order.iter().take(ds.len() / 10) {
        let id = &ds.records[i].id;
        let plan = e
            .greedy_plan(id, &ConstraintSet::default(), 0.8, 10)
            .unwrap();
        let ids: Vec<String> = plan
            .path
            .states
            .iter()
            .map(|s| s.subject_id.clone())
            .collect();
        let (want, reason) = greedy_oracle(ds, model(), id, 0.8, 10);
        assert_eq!(ids, want);
        assert_eq!(plan.termination.as_str(), reason);
        for w in plan.path.states.windows(2) {
            assert!(w[1].outcome > w[0].outcome);
        }
        reached += usize::from(plan.termination == Termination::TargetReached);
    }
    assert!(reached >= 1);
}

#[test]
fn global_maximum_is_stuck() {
    let e = engine();
    let best = (0..e.dataset().len())
        .max_by(|&a, &b| e.outcomes()[a].total_cmp(&e.outcomes()[b]))
        .unwrap();
    let id = &e.dataset().records[best].id;
    let plan = e
        .greedy_plan(id, &ConstraintSet::default(), 1.0, 10)
        .unwrap();
    assert_eq!(plan.termination, Termination::Stuck);
    assert_eq!(plan.path.len(), 1);
}

#[test]
fn ids_only_break_ties() {
    // relabel ids preserving their order; projections and ranking carry over
    let e = engine();
    let mut ds = dataset();
    for r in &mut ds.records {
        r.id = format!("zz-{}", r.id);
    }
    let ds = Dataset::new(ds.schema.clone(), ds.records).unwrap();
    let bg = background(&ds);
    let relabeled = Engine::build(
        ds,
        Arc::new(model().clone()),
        bg,
        DisplaySelection::ByImportance,
    )
    .unwrap();
    let cs = ConstraintSet::default();
    let a = e
        .find_candidates(&e.start("a061", 0.8).unwrap(), &cs)
        .unwrap();
    let b = relabeled
        .find_candidates(&relabeled.start("zz-a061", 0.8).unwrap(), &cs)
        .unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(format!("zz-{}", x.subject_id), y.subject_id);
        assert_eq!(x.projection, y.projection);
        assert_eq!(x.l1_change, y.l1_change);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ranked_lists_are_sorted_and_flagged(
        start in 0usize..200,
        radius in proptest::option::of(0.2f64..4.0),
        require_improvement in any::<bool>(),
    ) {
        let e = engine();
        let cs = ConstraintSet {
            max_l1_radius: radius,
            require_improvement,
            ..ConstraintSet::default()
        };
        let path = e.start(&e.dataset().records[start].id, 0.8).unwrap();
        let c = e.find_candidates(&path, &cs).unwrap();
        let mut resorted = c.clone();
        resorted.sort_by(rank_order);
        prop_assert_eq!(&resorted, &c);
        for w in c.windows(2) {
            prop_assert_ne!(rank_order(&w[0], &w[1]), Ordering::Greater);
        }
        for (i, cand) in c.iter().enumerate() {
            prop_assert_eq!(cand.top3, i < 3);
            prop_assert!(cand.l1_change >= 0.0);
            if let Some(r) = radius {
                prop_assert!(cand.l1_change <= r);
            }
            if require_improvement {
                prop_assert!(cand.outcome_gain > 0.0);
            }
            prop_assert!((cand.outcome - model().score(&e.dataset().get(&cand.subject_id).unwrap().values)).abs() <= 1e-15);
        }
    }
}
