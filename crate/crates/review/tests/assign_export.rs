use std::collections::{BTreeMap, BTreeSet};

use ils_core::model::{LesionType, Polarity, TemplateType};
use ils_review::{assign_samples, export_filtered, Decision, ReviewError, Sample, Verdict, VerdictMap};
use proptest::prelude::*;

fn sample(id: usize, polarity: Polarity, lesion: LesionType) -> Sample {
    Sample {
        sample_id: format!("s{id:05}"),
        study_id: format!("st{}", id / 3),
        lesion,
        template_type: TemplateType::Basic,
        polarity,
        locations: BTreeSet::new(),
        instruction: String::new(),
        answer_text: String::new(),
        report_text: String::new(),
        image_path: Default::default(),
        mask_path: None,
    }
}

fn corpus(pos: usize, neg: usize) -> Vec<Sample> {
    (0..pos)
        .map(|i| sample(i, Polarity::Positive, LesionType::Pneumonia))
        .chain((pos..pos + neg).map(|i| sample(i, Polarity::Negative, LesionType::Edema)))
        .collect()
}

fn experts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("e{i}")).collect()
}

fn put(map: &mut VerdictMap, e: &str, s: &str, d: Decision) {
    map.insert(
        (e.into(), s.into()),
        Verdict {
            expert_id: e.into(),
            sample_id: s.into(),
            decision: d,
            timestamp: 0,
        },
    );
}

#[test]
fn four_experts_at_full_scale() {
    let samples = corpus(1841, 8860);
    let lists = assign_samples(&samples, &experts(4), 11).unwrap();
    let mut neg_sizes = Vec::new();
    let mut seen_neg = BTreeSet::new();
    for list in lists.values() {
        let pos = list.iter().filter(|id| id.as_str() < "s01841").count();
        assert_eq!(pos, 1841);
        neg_sizes.push(list.len() - pos);
        for id in &list[pos..] {
            assert!(seen_neg.insert(id.clone()), "negative {id} assigned twice");
        }
    }
    assert_eq!(neg_sizes, vec![2215; 4]);
    assert_eq!(seen_neg.len(), 8860);
    assert_eq!(lists, assign_samples(&samples, &experts(4), 11).unwrap());
    assert_ne!(lists, assign_samples(&samples, &experts(4), 12).unwrap());
}

#[test]
fn small_assignments() {
    let samples = corpus(3, 5);
    let one = assign_samples(&samples, &experts(1), 0).unwrap();
    assert_eq!(one["e0"].len(), 8);
    let none = assign_samples(&corpus(4, 0), &experts(3), 0).unwrap();
    assert!(none.values().all(|l| l.len() == 4));
    assert!(matches!(assign_samples(&samples, &[], 0), Err(ReviewError::NoExperts)));
    assert!(matches!(
        assign_samples(&samples, &["a".into(), "a".into()], 0),
        Err(ReviewError::DuplicateExpert)
    ));
}

#[test]
fn all_accepted_keeps_everything() {
    let samples = corpus(4, 6);
    let lists = assign_samples(&samples, &experts(2), 0).unwrap();
    let mut v = VerdictMap::new();
    for (e, ids) in &lists {
        for id in ids {
            put(&mut v, e, id, Decision::Acceptable);
        }
    }
    let ex = export_filtered(&samples, &lists, &v);
    assert_eq!(ex.samples.len(), 10);
    assert!(ex.excluded.is_empty() && ex.unreviewed.is_empty());
    for r in ex.report.experts.values().chain([&ex.report.overall]) {
        assert_eq!(r.total.percent, Some(100.0));
    }
}

#[test]
fn overall_positive_rate_needs_every_expert() {
    // 4 positives, 3 experts; each expert rejects a different positive
    let samples = corpus(4, 0);
    let lists = assign_samples(&samples, &experts(3), 0).unwrap();
    let mut v = VerdictMap::new();
    for (i, e) in experts(3).iter().enumerate() {
        for (j, id) in lists[e].iter().enumerate() {
            let d = if i == j { Decision::NotAcceptable } else { Decision::Acceptable };
            put(&mut v, e, id, d);
        }
    }
    let ex = export_filtered(&samples, &lists, &v);
    for r in ex.report.experts.values() {
        assert_eq!(r.positive.percent, Some(75.0));
    }
    assert_eq!(ex.report.overall.positive.accepted, 1);
    assert_eq!(ex.report.overall.positive.percent, Some(25.0));
    assert_eq!(ex.excluded, vec!["s00000", "s00001", "s00002"]);
    assert_eq!(ex.report.per_lesion[&LesionType::Pneumonia].positive.percent, Some(25.0));
}

#[test]
fn partial_review_is_flagged() {
    let samples = corpus(1, 1);
    let lists = assign_samples(&samples, &experts(2), 0).unwrap();
    let mut v = VerdictMap::new();
    put(&mut v, "e0", "s00000", Decision::Acceptable);
    let ex = export_filtered(&samples, &lists, &v);
    assert_eq!(ex.unreviewed, vec!["s00000", "s00001"]);
    assert_eq!(ex.samples.len(), 2);
    assert_eq!(ex.report.overall.total.evaluated, 0);
    // a single rejection settles the sample even before the rest weigh in
    put(&mut v, "e1", "s00000", Decision::NotAcceptable);
    let ex = export_filtered(&samples, &lists, &v);
    assert_eq!(ex.excluded, vec!["s00000"]);
    assert_eq!(ex.report.overall.positive.evaluated, 1);
}

fn verdict_strategy() -> impl Strategy<Value = Vec<(usize, usize, bool)>> {
    prop::collection::vec((0usize..3, 0usize..12, any::<bool>()), 0..40)
}

proptest! {
    #[test]
    fn coverage_and_near_even_split(pos in 0usize..20, neg in 0usize..40, n in 1usize..6, seed in any::<u64>()) {
        let samples = corpus(pos, neg);
        let lists = assign_samples(&samples, &experts(n), seed).unwrap();
        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        for l in lists.values() {
            for id in l {
                *count.entry(id).or_default() += 1;
            }
        }
        for s in &samples {
            let c = count.get(s.sample_id.as_str()).copied().unwrap_or(0);
            match s.polarity {
                Polarity::Positive => prop_assert_eq!(c, n),
                Polarity::Negative => prop_assert_eq!(c, 1),
            }
        }
        let sizes: Vec<usize> = lists.values().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn rejections_never_grow_the_export(vs in verdict_strategy(), extra in (0usize..3, 0usize..12)) {
        let samples = corpus(5, 7);
        let lists = assign_samples(&samples, &experts(3), 3).unwrap();
        let mut map = VerdictMap::new();
        for (e, s, ok) in vs {
            let e = format!("e{e}");
            let id = format!("s{s:05}");
            if lists[&e].contains(&id) {
                put(&mut map, &e, &id, if ok { Decision::Acceptable } else { Decision::NotAcceptable });
            }
        }
        let before = export_filtered(&samples, &lists, &map);
        prop_assert_eq!(&before, &export_filtered(&samples, &lists, &map));
        let (e, s) = (format!("e{}", extra.0), format!("s{:05}", extra.1));
        put(&mut map, &e, &s, Decision::NotAcceptable);
        let after = export_filtered(&samples, &lists, &map);
        prop_assert!(after.samples.len() <= before.samples.len());
        let kept: BTreeSet<_> = before.samples.iter().map(|s| &s.sample_id).collect();
        prop_assert!(after.samples.iter().all(|s| kept.contains(&s.sample_id)));
    }
}
