use nalgebra::Schur;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use tomocg::qops::*;
use tomocg::randgen::{ginibre, haar_pure_state, hs_random_state, SeedSpec};

fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> HermitianOperator {
    let g = ginibre(dim, rng);
    HermitianOperator::new((&g + g.adjoint()).scale(0.5)).unwrap()
}

/// Coefficients `c_0..c_n` of det(λI − A) by Faddeev–LeVerrier.
fn char_poly(a: &CMatrix) -> Vec<C64> {
    let n = a.nrows();
    let mut c = vec![C64::new(0.0, 0.0); n + 1];
    c[n] = C64::new(1.0, 0.0);
    let mut m = CMatrix::zeros(n, n);
    let ident = CMatrix::identity(n, n);
    for k in 1..=n {
        m = a * &m + ident.scale(1.0) * c[n - k + 1];
        c[n - k] = -(a * &m).trace() / k as f64;
    }
    c
}

/// Durand–Kerner on a monic polynomial.
fn poly_roots(c: &[C64]) -> Vec<C64> {
    let n = c.len() - 1;
    let eval = |z: C64| c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &ck| acc * z + ck);
    let seed = C64::new(0.4, 0.9);
    let mut roots: Vec<C64> = (0..n).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..2000 {
        let prev = roots.clone();
        for i in 0..n {
            let denom = (0..n)
                .filter(|&j| j != i)
                .fold(C64::new(1.0, 0.0), |acc, j| acc * (roots[i] - roots[j]));
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
        }
        if roots.iter().zip(&prev).all(|(a, b)| (a - b).norm() < 1e-15) {
            break;
        }
    }
    roots
}

fn wootters_by_schur(rho: &DensityMatrix) -> f64 {
    let y = CMatrix::from_row_slice(
        4,
        4,
        &[0., 0., 0., -1., 0., 0., 1., 0., 0., 1., 0., 0., -1., 0., 0., 0.].map(|x| C64::new(x, 0.0)),
    );
    let tilde = &y * rho.matrix().conjugate() * &y;
    let prod = rho.matrix() * tilde;
    let ev = Schur::new(prod).eigenvalues().unwrap();
    let mut s: Vec<f64> = ev.iter().map(|z| z.re.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    (s[0] - s[1] - s[2] - s[3]).max(0.0)
}

#[test]
fn eigh_matches_characteristic_polynomial_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let h = random_hermitian(4, &mut rng);
        let mut roots: Vec<f64> = poly_roots(&char_poly(h.matrix())).iter().map(|z| z.re).collect();
        roots.sort_by(f64::total_cmp);
        let spec = eigh(&h);
        for (a, b) in spec.values.iter().zip(&roots) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn eigh_reconstructs_random_hermitian_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..1000 {
        let dim = if i % 2 == 0 { 2 } else { 4 };
        let h = random_hermitian(dim, &mut rng);
        let back = eigh(&h).rebuild(|x| x);
        assert!(back.max_abs_diff(&h) < 1e-10);
    }
}

#[test]
fn concurrence_matches_non_hermitian_spin_flip_spectrum() {
    for s in 0..100 {
        let mixed = hs_random_state(4, &SeedSpec::from_master(s)).unwrap();
        let pure = haar_pure_state(4, &SeedSpec::from_master(1000 + s)).unwrap();
        for rho in [mixed, pure] {
            let c = concurrence(&rho).unwrap();
            assert!((c - wootters_by_schur(&rho)).abs() < 1e-7);
            assert!((0.0..=1.0).contains(&c));
        }
    }
}

#[test]
fn concurrence_of_admixed_bell_state() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = CVector::from_vec(vec![C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(h, 0.0)]);
    let rho = admix(&DensityMatrix::pure(&bell).unwrap(), 0.2).unwrap();
    let c = concurrence(&rho).unwrap();
    assert!((c - wootters_by_schur(&rho)).abs() < 1e-8);
    // (3p - 1)/2 with p = 0.8 for this Werner family.
    assert!((c - 0.7).abs() < 1e-8);
    assert_eq!(concurrence(&admix(&rho, 1.0).unwrap()).unwrap(), 0.0);
}

#[test]
fn psd_projection_satisfies_optimality_conditions() {
    // P is the Frobenius projection of H onto the PSD cone iff P ⪰ 0,
    // P − H ⪰ 0 and tr(P (P − H)) = 0.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let h = random_hermitian(4, &mut rng);
        let p = psd_project(&h);
        let gap = p.sub(&h).unwrap();
        assert!(eigh(&p).min() > -1e-12);
        assert!(eigh(&gap).min() > -1e-12);
        assert!(p.trace_product(&gap).abs() < 1e-10);
    }
}

#[test]
fn trace_distance_equals_half_the_nuclear_norm() {
    for s in 0..50 {
        let a = hs_random_state(4, &SeedSpec::from_master(2 * s)).unwrap();
        let b = hs_random_state(4, &SeedSpec::from_master(2 * s + 1)).unwrap();
        let diff = a.matrix() - b.matrix();
        let nuclear: f64 = diff.svd(false, false).singular_values.iter().sum();
        assert!((trace_distance(&a, &b).unwrap() - 0.5 * nuclear).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn trace_distance_triangle_inequality(s in 0u64..1_000_000) {
        let r = |k| hs_random_state(4, &SeedSpec::new(s, k, 0, 0, 9)).unwrap();
        let (a, b, c) = (r(0), r(1), r(2));
        let ab = trace_distance(&a, &b).unwrap();
        let bc = trace_distance(&b, &c).unwrap();
        let ac = trace_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-10);
    }

    #[test]
    fn psd_project_is_idempotent(seed in any::<u64>(), dim in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(dim, &mut rng);
        let once = psd_project(&h);
        let twice = psd_project(&once);
        prop_assert!(once.max_abs_diff(&twice) < 1e-12);
    }

    #[test]
    fn haar_concurrence_in_unit_interval(s in any::<u64>()) {
        let rho = haar_pure_state(4, &SeedSpec::from_master(s)).unwrap();
        let c = concurrence(&rho).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }
}
