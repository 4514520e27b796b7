mod common;

use common::{mwe_oracle, projected_newton_ascent, simplex_grid_best, weighted_entropy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomocg::mwe::{maximize_weighted_entropy, mwe_counts, mwe_frequencies, WeightVector};
use tomocg::sampler::Counts;

#[test]
fn reference_weights_match_grid_and_newton_oracle() {
    let w = [0.5, 0.3, 0.2];
    let grid = simplex_grid_best(&w, 1000);
    let expected = [0.34728098, 0.3341935, 0.31852552];
    for (g, e) in grid.iter().zip(expected) {
        assert!((g - e).abs() < 1e-3);
    }
    let (nu, lambda) = maximize_weighted_entropy(&w).unwrap();
    let refined = projected_newton_ascent(&w, &grid);
    for ((a, b), e) in nu.iter().zip(&refined).zip(expected) {
        assert!((a - b).abs() < 1e-10);
        assert!((a - e).abs() < 1e-8);
    }
    assert!((lambda - 0.028810536842379903).abs() < 1e-10);
}

#[test]
fn coarse_counts_scale_reference_solution() {
    let counts = Counts::new(vec![7, 1], vec![2000, 1200, 800]).unwrap();
    let cg = mwe_counts(&counts, 1.0).unwrap();
    assert_eq!(cg.well, vec![7.0, 1.0]);
    for (got, e) in cg.ill.iter().zip([0.34728098, 0.3341935, 0.31852552]) {
        assert!((got - 4000.0 * e).abs() < 1e-3);
    }
}

#[test]
fn solver_matches_oracle_on_random_supports() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let support = 1 + case % 16;
        let zeros = rng.random_range(0..3usize);
        let mut counts: Vec<u64> = (0..support).map(|_| rng.random_range(1..2000)).collect();
        counts.extend(std::iter::repeat_n(0, zeros));
        let t = if case % 2 == 0 { 1.0 } else { 0.5 };
        let sol = mwe_frequencies(&counts, t).unwrap();
        let total: u64 = counts.iter().sum();
        let w: Vec<f64> = counts.iter().map(|&n| (n as f64 / total as f64).powf(t)).collect();
        let oracle = mwe_oracle(&w);
        for (a, b) in sol.nu.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "case {case}: {a} vs {b}");
        }
        assert!((sol.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sol.stationarity_residual() < 1e-8);
    }
}

#[test]
fn maximizer_is_unique_from_random_starts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = [0.05, 0.4, 0.1, 0.25, 0.2];
    let (nu, _) = maximize_weighted_entropy(&w).unwrap();
    for _ in 0..100 {
        let start: Vec<f64> = (0..w.len()).map(|_| rng.random_range(0.01..1.0)).collect();
        let got = projected_newton_ascent(&w, &start);
        for (a, b) in got.iter().zip(&nu) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn solver_beats_every_grid_point() {
    let w = WeightVector::new(vec![0.6, 0.25, 0.15]).unwrap();
    let (nu, _) = maximize_weighted_entropy(w.as_slice()).unwrap();
    let best = weighted_entropy(w.as_slice(), &nu);
    let h = 1.0 / 200.0;
    for i in 0..=200 {
        for j in 0..=200 - i {
            let (a, b) = (i as f64 * h, j as f64 * h);
            let p = [a, b, (1.0 - a - b).max(0.0)];
            assert!(weighted_entropy(w.as_slice(), &p) <= best + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn scale_consistency(counts in prop::collection::vec(0u64..500, 1..16), c in 1u64..50, t in prop::sample::select(vec![0.5, 1.0])) {
        prop_assume!(counts.iter().any(|&n| n > 0));
        let scaled: Vec<u64> = counts.iter().map(|n| n * c).collect();
        let a = mwe_frequencies(&counts, t).unwrap();
        let b = mwe_frequencies(&scaled, t).unwrap();
        for (x, y) in a.nu.iter().zip(&b.nu) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ordering_law(counts in prop::collection::vec(1u64..500, 1..16)) {
        let sol = mwe_frequencies(&counts, 1.0).unwrap();
        if counts.len() >= 3 {
            prop_assert!(sol.lambda > 0.0);
        }
        for a in 0..counts.len() {
            for b in 0..counts.len() {
                let (wa, wb) = (sol.weights[a], sol.weights[b]);
                let expect = (sol.lambda > 0.0 && wa > wb) || (sol.lambda < 0.0 && wa < wb);
                prop_assert_eq!(expect, sol.nu[a] > sol.nu[b]);
                if counts[a] == counts[b] {
                    prop_assert!((sol.nu[a] - sol.nu[b]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn small_exponent_flattens(counts in prop::collection::vec(1u64..500, 1..16)) {
        let sol = mwe_frequencies(&counts, 1e-6).unwrap();
        let u = 1.0 / counts.len() as f64;
        for x in &sol.nu {
            prop_assert!((x - u).abs() < 1e-4);
        }
    }
}
