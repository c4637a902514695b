use std::collections::BTreeMap;

use mindtrace::corpus::{PersonCategory, TerrorismLabel};
use mindtrace::synth::{date, demo_category_model, ncv_trajectory, normal, rng};
use mindtrace::track::*;
use nalgebra::{Matrix2, Matrix4};
use proptest::prelude::*;
use rand::Rng;

fn draw(r: &mut impl Rng, p: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[test]
fn tables_estimated_from_large_corpus() {
    let p_k = [0.6, 0.25, 0.15];
    // columns are p(s | k)
    let p_s_given_k = [[0.9, 0.3, 0.2], [0.08, 0.6, 0.3], [0.02, 0.1, 0.5]];
    let mut r = rng(21);
    let persons_per = 200;
    let mut categories = BTreeMap::new();
    for k in 0..3 {
        for i in 0..persons_per {
            categories.insert(format!("k{k}_{i}"), PersonCategory::ALL[k]);
        }
    }
    let points: Vec<LabelledPoint> = (0..100_000)
        .map(|_| {
            let k = draw(&mut r, &p_k);
            let s = draw(&mut r, &[p_s_given_k[0][k], p_s_given_k[1][k], p_s_given_k[2][k]]);
            LabelledPoint {
                person_id: format!("k{k}_{}", r.random_range(0..persons_per)),
                label: TerrorismLabel::ALL[s],
                z: [normal(&mut r) + s as f64, normal(&mut r) - k as f64],
            }
        })
        .collect();
    let model = estimate_category_model(&points, &categories, false).unwrap();
    let t = &model.tables;
    // independent Bayes oracle for the remaining tables
    let p_s: Vec<f64> = (0..3).map(|s| (0..3).map(|k| p_s_given_k[s][k] * p_k[k]).sum()).collect();
    for s in 0..3 {
        assert!((t.p_s[s] - p_s[s]).abs() < 0.01);
        assert!((t.p_k[s] - p_k[s]).abs() < 0.01);
        for k in 0..3 {
            assert!((t.p_s_given_k[s][k] - p_s_given_k[s][k]).abs() < 0.01, "p(s={s}|k={k})");
            let bayes = p_s_given_k[s][k] * p_k[k] / p_s[s];
            assert!((t.p_k_given_s[s][k] - bayes).abs() < 0.01, "p(k={k}|s={s})");
        }
    }
    let c = t.check();
    assert!(c.column_sum.max(c.row_sum).max(c.marginal).max(c.bayes) < 1e-6);
}

fn isolated_model() -> CategoryModel {
    let mut m = demo_category_model();
    let unit = [[1.0, 0.0], [0.0, 1.0]];
    m.gaussians.x_given_s = [
        Gaussian2::new([0.0, 0.0], unit).unwrap(),
        Gaussian2::new([10.0, 0.0], unit).unwrap(),
        Gaussian2::new([0.0, 10.0], unit).unwrap(),
    ];
    m.tables.p_s = [0.1, 0.45, 0.45];
    m
}

#[test]
fn isolated_category_takes_the_weight() {
    let (w, fell_back) = statement_weights([0.0, 0.0], &isolated_model());
    assert!(!fell_back);
    assert!(w[0] >= 0.99, "{w:?}");
}

#[test]
fn underflow_falls_back_to_p_s() {
    let m = isolated_model();
    let (w, fell_back) = statement_weights([1e200, -1e200], &m);
    assert!(fell_back);
    let sum: f64 = m.tables.p_s.iter().sum();
    for s in 0..3 {
        assert!((w[s] - m.tables.p_s[s] / sum).abs() < 1e-15);
    }
}

#[test]
fn long_track_beats_raw_measurements() {
    let model = demo_category_model();
    let motion = MotionModel::default();
    let noise = MeasurementNoise::StateDependent(model.clone());
    let mut r = rng(31);
    let truth = ncv_trajectory(&mut r, &motion, 200, 10.0);
    let zs: Vec<_> = truth
        .iter()
        .map(|(t, x)| {
            let m = measurement_mixture([x[0], x[2]], &model);
            let centre = reduce_mixture(&m).mean;
            let e = m.sample(&mut r);
            (*t, [x[0] + e[0] - centre[0], x[2] + e[1] - centre[1]])
        })
        .collect();
    let prior = StateEstimate::prior(&motion, [0.0, 0.0], zs[0].0);
    let track = track_person("p", &zs, &motion, &noise, &prior, None).unwrap();
    let sq = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let raw: f64 = truth.iter().zip(&zs).map(|((_, x), (_, z))| sq([x[0], x[2]], *z)).sum();
    let est: f64 = truth
        .iter()
        .zip(&track.steps)
        .map(|((_, x), s)| sq([x[0], x[2]], s.estimate.position()))
        .sum();
    assert!(est.sqrt() <= 0.8 * raw.sqrt(), "track {} raw {}", est.sqrt(), raw.sqrt());
}

fn gaussian() -> impl Strategy<Value = Gaussian2> {
    (-5.0..5.0f64, -5.0..5.0f64, 0.1..3.0f64, 0.1..3.0f64, -0.9..0.9f64).prop_map(|(m0, m1, s0, s1, rho)| {
        let c = rho * s0 * s1;
        Gaussian2::new([m0, m1], [[s0 * s0, c], [c, s1 * s1]]).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimated_tables_are_consistent(counts in proptest::array::uniform3(proptest::array::uniform3(1u32..500))) {
        let counts = counts.map(|row| row.map(f64::from));
        let c = CategoryTables::from_counts(counts, false).unwrap().check();
        prop_assert!(c.column_sum.max(c.row_sum).max(c.marginal).max(c.bayes) <= 1e-6);
    }

    #[test]
    fn reduction_keeps_first_two_moments(
        comps in proptest::collection::vec(gaussian(), 1..6),
        raw in proptest::collection::vec(0.05..1.0f64, 6),
    ) {
        let total: f64 = raw[..comps.len()].iter().sum();
        let w: Vec<f64> = raw[..comps.len()].iter().map(|v| v / total).collect();
        let m = GaussianMixture2D::new(w.clone(), comps.clone()).unwrap();
        let red = reduce_mixture(&m);
        // E[x] and E[x x'] component by component, then the covariance
        let mut mean = [0.0; 2];
        let mut second = Matrix2::<f64>::zeros();
        for (wi, c) in w.iter().zip(&comps) {
            for a in 0..2 {
                mean[a] += wi * c.mean[a];
                for b in 0..2 {
                    second[(a, b)] += wi * (c.cov[a][b] + c.mean[a] * c.mean[b]);
                }
            }
        }
        for a in 0..2 {
            prop_assert!((red.mean[a] - mean[a]).abs() <= 1e-10);
            for b in 0..2 {
                let cov = second[(a, b)] - mean[a] * mean[b];
                prop_assert!((red.cov[a][b] - cov).abs() <= 1e-10 * (1.0 + second[(a, b)].abs()));
            }
        }
    }

    #[test]
    fn category_factor_cancels(
        x0 in -4.0..4.0f64,
        x1 in -4.0..4.0f64,
        scale in proptest::array::uniform3(0.01..100.0f64),
        replacement in proptest::array::uniform3(gaussian()),
    ) {
        let model = demo_category_model();
        let mut other = model.clone();
        other.tables.p_k = [0, 1, 2].map(|k| model.tables.p_k[k] * scale[k]);
        other.gaussians.x_given_k = replacement;
        let (a, _) = statement_weights([x0, x1], &model);
        let (b, _) = statement_weights([x0, x1], &other);
        for s in 0..3 {
            prop_assert!((a[s] - b[s]).abs() <= 1e-12);
        }
    }

    #[test]
    fn track_covariance_stays_positive_definite(
        steps in proptest::collection::vec((0i64..400, -6.0..6.0f64, -6.0..6.0f64), 1..40),
    ) {
        let motion = MotionModel::default();
        let noise = MeasurementNoise::StateDependent(demo_category_model());
        let mut day = 0;
        let zs: Vec<_> = steps
            .iter()
            .map(|&(gap, a, b)| {
                day += gap;
                (date(day), [a, b])
            })
            .collect();
        let prior = StateEstimate::prior(&motion, [0.0, 0.0], date(0));
        let track = track_person("p", &zs, &motion, &noise, &prior, None).unwrap();
        for s in &track.steps {
            let p = Matrix4::from_fn(|i, j| s.estimate.covariance[i][j]);
            prop_assert!(p.cholesky().is_some());
        }
    }
}
