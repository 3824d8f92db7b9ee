//! Metric oracles and invariants.

use ecgbench_autodiff::{checkpoint, ParamStore};
use ecgbench_core::metrics::linalg::JITTER;
use ecgbench_core::metrics::{
    extract_features, ffd, fit_gaussian, match_events, nms_peaks, shift_probe, trace_sqrt_product, Extractor,
    GaussianStats,
};
use ecgbench_core::model::blocks::Scope;
use ecgbench_core::model::{ModelConfig, Transformer, TransformerConfig, BACKBONE_PREFIX};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let b: Vec<f64> = (0..k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut a = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            a[i * k + j] = (0..k).map(|l| b[i * k + l] * b[j * k + l]).sum::<f64>();
        }
        a[i * k + i] += 0.1;
    }
    a
}

/// `Σ √λ` over the eigenvalues of the nonsymmetric product `Σ·Σ̂`.
fn dense_oracle(a: &[f64], b: &[f64], k: usize) -> f64 {
    let ma = DMatrix::from_row_slice(k, k, a);
    let mb = DMatrix::from_row_slice(k, k, b);
    (ma * mb)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.max(0.0).sqrt())
        .sum()
}

#[test]
fn trace_sqrt_product_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let k = 1 + case % 8;
        let a = random_spd(k, &mut rng);
        let b = random_spd(k, &mut rng);
        let got = trace_sqrt_product(&a, &b, k).unwrap();
        let want = dense_oracle(&a, &b, k);
        assert!((got - want).abs() < 1e-8, "k={k}: {got} vs {want}");
    }
}

fn two_pass(xs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = xs[0].len();
    let n = xs.len() as f64;
    let mean: Vec<f64> = (0..k).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let mut cov = vec![0.0; k * k];
    for x in xs {
        for i in 0..k {
            for j in 0..k {
                cov[i * k + j] += (x[i] - mean[i]) * (x[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n - 1.0);
    (mean, cov)
}

fn samples(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..k)
                .map(|j| rng.gen_range(-1.0..1.0) * (j + 1) as f64 + j as f64)
                .collect()
        })
        .collect()
}

fn stats_of(xs: &[Vec<f64>]) -> GaussianStats {
    let mut s = GaussianStats::new(xs[0].len());
    for x in xs {
        s.push(x).unwrap();
    }
    s
}

#[test]
fn chunked_merge_matches_two_pass() {
    let xs = samples(1000, 16, 2);
    let bounds = [0, 90, 250, 251, 400, 640, 800, 1000];
    let mut total = GaussianStats::new(16);
    for w in bounds.windows(2) {
        total = total.merge(&stats_of(&xs[w[0]..w[1]])).unwrap();
    }
    let (mean, cov) = two_pass(&xs);
    assert_eq!(total.count, 1000);
    for (a, b) in total.mean.iter().zip(&mean) {
        assert!((a - b).abs() < 1e-9);
    }
    for (a, b) in total.covariance().unwrap().iter().zip(&cov) {
        assert!((a - b).abs() < 1e-9);
    }
    let fitted = fit_gaussian(&xs).unwrap();
    for (a, b) in fitted.covariance().unwrap().iter().zip(&cov) {
        assert!((a - b).abs() < 1e-9);
    }
}

fn close(a: &GaussianStats, b: &GaussianStats, tol: f64) -> bool {
    a.count == b.count
        && a.mean.iter().zip(&b.mean).all(|(x, y)| (x - y).abs() < tol)
        && a.scatter.iter().zip(&b.scatter).all(|(x, y)| (x - y).abs() < tol)
}

fn brute_force_tp(preds: &[usize], truths: &[usize], tol: usize) -> usize {
    fn go(i: usize, preds: &[usize], truths: &[usize], used: &mut Vec<bool>, tol: usize) -> usize {
        if i == preds.len() {
            return 0;
        }
        let mut best = go(i + 1, preds, truths, used, tol);
        for t in 0..truths.len() {
            if !used[t] && preds[i].abs_diff(truths[t]) <= tol {
                used[t] = true;
                best = best.max(1 + go(i + 1, preds, truths, used, tol));
                used[t] = false;
            }
        }
        best
    }
    go(0, preds, truths, &mut vec![false; truths.len()], tol)
}

fn sorted_events() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..60, 0..=8).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

#[test]
fn event_matching_against_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let mut p: Vec<usize> = (0..rng.gen_range(0..=8)).map(|_| rng.gen_range(0..60)).collect();
        let mut t: Vec<usize> = (0..rng.gen_range(0..=8)).map(|_| rng.gen_range(0..60)).collect();
        p.sort_unstable();
        t.sort_unstable();
        let m = match_events(&p, &t, 7);
        assert_eq!(m.tp(), brute_force_tp(&p, &t, 7), "{p:?} vs {t:?}");
        assert_eq!(m.tp() + m.fp(), p.len());
        assert_eq!(m.tp() + m.fn_(), t.len());
    }
}

fn nms_reference(probs: &[f64], threshold: f64, min_distance: usize) -> Vec<usize> {
    let mut alive: Vec<bool> = probs.iter().map(|p| *p >= threshold).collect();
    let mut out = Vec::new();
    loop {
        let best = (0..probs.len())
            .filter(|&i| alive[i])
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]));
        let Some(i) = best else { break };
        out.push(i);
        for (j, a) in alive.iter_mut().enumerate() {
            if j.abs_diff(i) < min_distance {
                *a = false;
            }
        }
    }
    out.sort_unstable();
    out
}

proptest! {
    #[test]
    fn merge_is_commutative_and_associative(seed in 0u64..1000, a in 2usize..20, b in 1usize..20, c in 1usize..20) {
        let xs = samples(a + b + c, 3, seed);
        let (sa, sb, sc) = (stats_of(&xs[..a]), stats_of(&xs[a..a + b]), stats_of(&xs[a + b..]));
        let left = sa.merge(&sb).unwrap().merge(&sc).unwrap();
        let right = sa.merge(&sb.merge(&sc).unwrap()).unwrap();
        prop_assert!(close(&left, &right, 1e-9));
        prop_assert!(close(&sa.merge(&sb).unwrap(), &sb.merge(&sa).unwrap(), 1e-9));
        prop_assert!(close(&left, &stats_of(&xs), 1e-9));
    }

    #[test]
    fn ffd_symmetric_nonnegative_and_self_zero(seed in 0u64..1000, k in 1usize..6) {
        let a = fit_gaussian(&samples(30, k, seed)).unwrap();
        let b = fit_gaussian(&samples(40, k, seed + 7)).unwrap();
        let ab = ffd(&a, &b).unwrap();
        let ba = ffd(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        prop_assert!(ffd(&a, &a).unwrap() < 1e-9);
    }

    #[test]
    fn one_dimensional_closed_form(m1 in -3.0f64..3.0, m2 in -3.0f64..3.0, v1 in 0.01f64..4.0, v2 in 0.01f64..4.0) {
        let g = |m: f64, v: f64| GaussianStats { count: 2, mean: vec![m], scatter: vec![v] };
        let want = (m1 - m2).powi(2) + (v1.sqrt() - v2.sqrt()).powi(2);
        prop_assert!((ffd(&g(m1, v1), &g(m2, v2)).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn trace_sqrt_of_self_is_trace(seed in 0u64..1000, k in 1usize..8) {
        let a = random_spd(k, &mut ChaCha8Rng::seed_from_u64(seed));
        let tr: f64 = (0..k).map(|i| a[i * k + i]).sum();
        let got = trace_sqrt_product(&a, &a, k).unwrap();
        prop_assert!((got - tr - k as f64 * JITTER).abs() < 1e-9 * tr.max(1.0));
    }

    #[test]
    fn matching_is_symmetric(p in sorted_events(), t in sorted_events()) {
        let a = match_events(&p, &t, 7);
        let b = match_events(&t, &p, 7);
        prop_assert_eq!(a.tp(), b.tp());
        prop_assert_eq!(a.fp(), b.fn_());
        prop_assert_eq!(a.fn_(), b.fp());
        prop_assert!(a.pairs.iter().all(|&(i, j)| p[i].abs_diff(t[j]) <= 7));
    }

    #[test]
    fn nms_matches_reference_on_distinct_probabilities(seed in 0u64..10_000, dist in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let got = nms_peaks(&probs, 0.5, dist);
        prop_assert_eq!(&got, &nms_reference(&probs, 0.5, dist));
        prop_assert!(got.windows(2).all(|w| w[1] - w[0] >= dist));
        prop_assert!(got.iter().all(|&i| probs[i] >= 0.5));
    }
}

fn extractor(hidden: usize, seed: u64) -> (Extractor, ParamStore, TransformerConfig) {
    let cfg = TransformerConfig {
        hidden,
        layers: 1,
        ..Default::default()
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Transformer::new(cfg.clone(), &mut Scope::new(&mut store, &mut rng, BACKBONE_PREFIX)).unwrap();
    (Extractor::new(cfg.clone(), &store).unwrap(), store, cfg)
}

fn wave(n: usize, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|i| (i as f64 * 0.07 + phase).sin() + 0.3 * (i as f64 * 0.31).cos())
        .collect()
}

#[test]
fn extracted_features_have_hidden_width() {
    let (ex, _, _) = extractor(64, 4);
    let series: Vec<Vec<f64>> = (0..100).map(|i| wave(500, i as f64 * 0.1)).collect();
    let f = extract_features(&series, &ex).unwrap();
    assert_eq!(f.len(), 100);
    assert!(f.iter().all(|v| v.len() == 64));
    assert_eq!(extract_features(&series[..2], &ex).unwrap(), f[..2].to_vec());
    let doubled: Vec<f64> = series[0].iter().map(|v| 2.0 * v).collect();
    assert_ne!(ex.features(&doubled).unwrap(), f[0]);
}

#[test]
fn extractor_checkpoint_round_trip_and_mismatch() {
    let (ex, store, cfg) = extractor(16, 5);
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("extractor");
    let model = ModelConfig {
        kind: "transformer".into(),
        transformer: cfg.clone(),
        ..Default::default()
    };
    checkpoint::save(&store, &base, serde_json::json!({ "model": model })).unwrap();
    let loaded = Extractor::from_checkpoint(&base).unwrap();
    let x = wave(500, 0.3);
    assert_eq!(loaded.features(&x).unwrap(), ex.features(&x).unwrap());

    let wider = TransformerConfig {
        hidden: 32,
        ..cfg.clone()
    };
    assert!(Extractor::new(wider, &store).is_err());
    let deeper = TransformerConfig { layers: 2, ..cfg };
    assert!(Extractor::new(deeper, &store).is_err());
    checkpoint::save(&store, &base, serde_json::json!({})).unwrap();
    assert!(Extractor::from_checkpoint(&base).is_err());
}

#[test]
fn shift_probe_table() {
    let (ex, _, _) = extractor(16, 6);
    let series: Vec<Vec<f64>> = (0..12).map(|i| wave(500, i as f64)).collect();
    let rows = shift_probe(&series, &ex, 40, 4).unwrap();
    let shifts: Vec<usize> = rows.iter().map(|r| r.shift).collect();
    assert_eq!(shifts, (0..=40).step_by(4).collect::<Vec<_>>());
    assert_eq!(rows[0].mse, 0.0);
    assert!(rows[0].ffd < 1e-9);
    assert!(rows[1].mse > 0.0);
    assert!(shift_probe(&series, &ex, 40, 0).is_err());
}
