use interlace_analysis::stats::{group_summary, ols_dummy, ptukey, qtukey, tukey_kramer, GroupSample, StatsError};
use proptest::prelude::*;
use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Deserialize)]
struct Pair {
    a: String,
    b: String,
    mean_difference: f64,
    q: f64,
    p_value: f64,
    significant: bool,
}

#[derive(Deserialize)]
struct Tukey {
    alpha: f64,
    groups: Vec<GroupSample>,
    mse: f64,
    critical_q: f64,
    pairs: Vec<Pair>,
}

#[derive(Deserialize)]
struct CdfPoint {
    q: f64,
    k: usize,
    df: f64,
    p: f64,
}

#[derive(Deserialize)]
struct QuantilePoint {
    p: f64,
    k: usize,
    df: f64,
    q: f64,
}

#[derive(Deserialize)]
struct Reference {
    tukey: Tukey,
    cdf: Vec<CdfPoint>,
    quantiles: Vec<QuantilePoint>,
}

fn reference() -> Reference {
    serde_json::from_str(include_str!("fixtures/stats_reference.json")).unwrap()
}

#[test]
fn group_summary_hand_values() {
    let s = group_summary(&[1.0, 2.0, 3.0]).unwrap();
    assert!((s.mean - 2.0).abs() < 1e-12);
    assert!((s.se.unwrap() - 0.577_350_269_189_625_8).abs() < 1e-12);
    let s = group_summary(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
    // Sample variance 32/7 over n = 8.
    assert!((s.mean - 5.0).abs() < 1e-12);
    assert!((s.se.unwrap() - (32.0 / 7.0 / 8.0f64).sqrt()).abs() < 1e-12);
}

#[test]
fn studentized_range_matches_reference_points() {
    let r = reference();
    for c in &r.cdf {
        let got = ptukey(c.q, c.k, c.df);
        assert!((got - c.p).abs() < 1e-7, "ptukey({}, {}, {}) = {got}, want {}", c.q, c.k, c.df, c.p);
    }
    for c in &r.quantiles {
        let got = qtukey(c.p, c.k, c.df);
        assert!((got - c.q).abs() < 1e-6, "qtukey({}, {}, {}) = {got}, want {}", c.p, c.k, c.df, c.q);
    }
}

#[test]
fn tukey_kramer_matches_reference_dataset() {
    let r = reference().tukey;
    let res = tukey_kramer(&r.groups, r.alpha).unwrap();
    assert!((res.mse - r.mse).abs() < 1e-9);
    assert!((res.critical_q - r.critical_q).abs() < 1e-6);
    for want in &r.pairs {
        let got = res.pair(&want.a, &want.b).unwrap();
        assert_eq!(got.group_a, want.a);
        assert!((got.mean_difference - want.mean_difference).abs() < 1e-9);
        assert!((got.q - want.q).abs() < 1e-6);
        assert!((got.p_value - want.p_value).abs() < 1e-6);
        assert_eq!(got.significant, want.significant);
    }
}

#[test]
fn equal_sizes_reduce_to_hsd() {
    let r = reference().tukey;
    let res = tukey_kramer(&r.groups, 0.05).unwrap();
    let n = 5.0;
    let means: Vec<f64> = r.groups.iter().map(|g| g.values.iter().sum::<f64>() / n).collect();
    let hsd_se = (res.mse / n).sqrt();
    let q01 = (means[0] - means[1]).abs() / hsd_se;
    assert!((res.pair("g0", "g1").unwrap().q - q01).abs() < 1e-12);
}

#[test]
fn identical_groups_never_differ() {
    let g = vec![3.0, 4.0, 5.0, 6.0];
    let groups = vec![GroupSample::new("a", g.clone()), GroupSample::new("b", g)];
    let res = tukey_kramer(&groups, 0.05).unwrap();
    assert!(!res.pairs[0].significant);
}

#[test]
fn extreme_separation_is_significant() {
    let lo: Vec<f64> = (0..20).map(|i| f64::from(i) * 1e-3).collect();
    let hi: Vec<f64> = lo.iter().map(|x| 100.0 + x).collect();
    let res = tukey_kramer(&[GroupSample::new("lo", lo), GroupSample::new("hi", hi)], 0.05).unwrap();
    assert!(res.pairs[0].significant);
}

#[test]
fn zero_variance_convention() {
    let same = [GroupSample::new("a", vec![2.0, 2.0]), GroupSample::new("b", vec![2.0, 2.0])];
    assert!(!tukey_kramer(&same, 0.05).unwrap().pairs[0].significant);
    let apart = [GroupSample::new("a", vec![2.0, 2.0]), GroupSample::new("b", vec![3.0, 3.0])];
    assert!(tukey_kramer(&apart, 0.05).unwrap().pairs[0].significant);
}

#[test]
fn degenerate_inputs_are_errors() {
    assert_eq!(tukey_kramer(&[GroupSample::new("a", vec![1.0])], 0.05).unwrap_err(), StatsError::TooFewGroups(1));
    let one_each = [GroupSample::new("a", vec![1.0]), GroupSample::new("b", vec![2.0])];
    assert_eq!(tukey_kramer(&one_each, 0.05).unwrap_err(), StatsError::NoDegreesOfFreedom);
    let empty = [GroupSample::new("a", vec![1.0, 2.0]), GroupSample::new("b", vec![])];
    assert!(matches!(ols_dummy(&empty, "a", 0.0125), Err(StatsError::EmptyGroup(_))));
}

#[test]
fn ols_fitted_values_are_group_means() {
    let r = reference().tukey;
    for reference in ["g0", "g1", "g2"] {
        let ols = ols_dummy(&r.groups, reference, 0.0125).unwrap();
        for (g, fit) in r.groups.iter().zip(&ols.groups) {
            let mean = g.values.iter().sum::<f64>() / g.values.len() as f64;
            assert!((fit.fitted - mean).abs() < 1e-9);
        }
    }
}

#[test]
fn ols_matches_pooled_two_sample_t() {
    let a = vec![5.1, 4.9, 5.6, 5.8, 6.0, 5.2];
    let b = vec![6.3, 6.9, 7.1, 6.4, 7.4, 6.8, 6.6];
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let ss = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
    let df = na + nb - 2.0;
    let sp = (ss / df).sqrt();
    let t = (mb - ma) / (sp * (1.0 / na + 1.0 / nb).sqrt());
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));

    let ols = ols_dummy(&[GroupSample::new("a", a), GroupSample::new("b", b)], "a", 0.0125).unwrap();
    let g = &ols.groups[1];
    assert!((g.t.unwrap() - t).abs() < 1e-9);
    assert!((g.p_value.unwrap() - p).abs() < 1e-9);
    assert_eq!(g.significant_vs_reference, p < 0.0125);
    assert!(ols.groups[0].beta.is_none());
}

#[test]
fn ols_identical_groups_not_significant() {
    let v = vec![1.0, 2.0, 3.0];
    let groups: Vec<GroupSample> = ["a", "b", "c"].iter().map(|n| GroupSample::new(*n, v.clone())).collect();
    let ols = ols_dummy(&groups, "b", 0.0125).unwrap();
    assert!(ols.groups.iter().all(|g| !g.significant_vs_reference));
}

fn groups_strategy() -> impl Strategy<Value = Vec<GroupSample>> {
    prop::collection::vec(prop::collection::vec(0.0f64..10.0, 2..6), 2..4).prop_map(|gs| {
        gs.into_iter().enumerate().map(|(i, v)| GroupSample::new(format!("m{i}"), v)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relabeling_keeps_decisions(groups in groups_strategy()) {
        let base = tukey_kramer(&groups, 0.05).unwrap();
        let mut rev = groups.clone();
        rev.reverse();
        let flipped = tukey_kramer(&rev, 0.05).unwrap();
        for p in &base.pairs {
            let q = flipped.pair(&p.group_a, &p.group_b).unwrap();
            prop_assert_eq!(p.significant, q.significant);
            prop_assert!((p.q - q.q).abs() < 1e-9);
        }
    }

    #[test]
    fn raising_alpha_is_monotone(groups in groups_strategy()) {
        let strict = tukey_kramer(&groups, 0.01).unwrap();
        let loose = tukey_kramer(&groups, 0.10).unwrap();
        for (s, l) in strict.pairs.iter().zip(&loose.pairs) {
            prop_assert!(!s.significant || l.significant);
        }
    }

    #[test]
    fn ols_fit_ignores_reference(groups in groups_strategy()) {
        let a = ols_dummy(&groups, &groups[0].group_id, 0.0125).unwrap();
        let b = ols_dummy(&groups, &groups[1].group_id, 0.0125).unwrap();
        for (x, y) in a.groups.iter().zip(&b.groups) {
            prop_assert!((x.fitted - y.fitted).abs() < 1e-9);
        }
    }
}

#[test]
fn constant_groups_that_differ_survive_json() {
    let groups = [GroupSample::new("a", vec![1.0; 4]), GroupSample::new("b", vec![2.0; 4])];
    let res = tukey_kramer(&groups, 0.05).unwrap();
    assert!(res.pairs[0].q.is_infinite() && res.pairs[0].significant);
    let back: interlace_analysis::stats::TukeyResult =
        serde_json::from_str(&serde_json::to_string(&res).unwrap()).unwrap();
    assert_eq!(back, res);
}
