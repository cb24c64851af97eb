use london::linalg::{power_iteration_trace, random_orthonormal_columns};
use london::rng::{gaussian_matrix, seeded};
use london::{
    build_tm, jacobi_top_eigenvalue, power_iteration, random_orthogonal, top_singular_pair,
    FeatureMapBatch, Matrix, PowerIterationConfig,
};
use proptest::prelude::*;

fn psd(n: usize, seed: u64) -> Matrix {
    gaussian_matrix(n, n, &mut seeded(seed)).gram()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn power_iteration_matches_jacobi_on_random_psd() {
    for k in 0..100u64 {
        let n = 2 + (k as usize * 7) % 31;
        let m = psd(n, 1000 + k);
        let est = power_iteration(&m, &PowerIterationConfig::default().with_seed(k)).unwrap();
        let exact = jacobi_top_eigenvalue(&m).unwrap();
        assert!(
            rel(est.value, exact) <= 1e-6,
            "n={n} seed={k}: {} vs {exact}",
            est.value
        );
    }
}

#[test]
fn rayleigh_quotients_are_non_decreasing() {
    for k in 0..20u64 {
        let m = psd(3 + k as usize, 50 + k);
        let (_, rayleigh) =
            power_iteration_trace(&m, &PowerIterationConfig::default().with_seed(k)).unwrap();
        for w in rayleigh.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0),
                "{} then {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn orthogonal_similarity_preserves_top_eigenvalue() {
    for k in 0..50u64 {
        let n = 2 + (k as usize) % 15;
        let h = psd(n, 200 + k);
        let u = random_orthogonal(n, 300 + k);
        let rotated = u.t_matmul(&h).unwrap().matmul(&u).unwrap().symmetrized();
        let a = jacobi_top_eigenvalue(&rotated).unwrap();
        let b = jacobi_top_eigenvalue(&h).unwrap();
        assert!(rel(a, b) <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn singular_pair_matches_gram_eigenvalue() {
    for k in 0..30u64 {
        let (r, c) = (2 + k as usize % 9, 2 + (k as usize * 3) % 7);
        let w = gaussian_matrix(r, c, &mut seeded(400 + k));
        let pair = top_singular_pair(&w, &PowerIterationConfig::default().with_seed(k)).unwrap();
        let exact = jacobi_top_eigenvalue(&w.gram()).unwrap().sqrt();
        assert!(
            rel(pair.sigma1, exact) <= 1e-6,
            "{} vs {exact}",
            pair.sigma1
        );
    }
}

#[test]
fn transmitting_matrix_exact_for_orthogonal_front() {
    for k in 0..20u64 {
        let d = 4 + (k as usize) % 13;
        let front = random_orthogonal(d, 500 + k);
        let w = gaussian_matrix(d, d, &mut seeded(600 + k));
        let tm = build_tm(
            &FeatureMapBatch {
                block_index: 0,
                data: front.clone(),
            },
            &FeatureMapBatch {
                block_index: 1,
                data: w.matmul(&front).unwrap(),
            },
            1e-12,
        )
        .unwrap();
        let got = jacobi_top_eigenvalue(&tm.data).unwrap();
        let want = jacobi_top_eigenvalue(&w.gram()).unwrap();
        assert!(rel(got, want) <= 1e-8, "d={d}: {got} vs {want}");
    }
}

#[test]
fn transmitting_matrix_bounded_for_orthonormal_subset() {
    for k in 0..20u64 {
        let d = 6 + (k as usize) % 11;
        let n = 1 + (k as usize) % (d - 1);
        let front = random_orthonormal_columns(d, n, 700 + k);
        let w = gaussian_matrix(d, d, &mut seeded(800 + k));
        let tm = build_tm(
            &FeatureMapBatch {
                block_index: 0,
                data: front.clone(),
            },
            &FeatureMapBatch {
                block_index: 1,
                data: w.matmul(&front).unwrap(),
            },
            1e-12,
        )
        .unwrap();
        let got = jacobi_top_eigenvalue(&tm.data).unwrap();
        let bound = jacobi_top_eigenvalue(&w.gram()).unwrap();
        assert!(got <= bound + 1e-8, "{got} > {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_iteration_is_scale_covariant(n in 2usize..12, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let m = psd(n, seed);
        let cfg = PowerIterationConfig::default().with_seed(seed);
        let a = power_iteration(&m, &cfg).unwrap().value;
        let b = power_iteration(&m.scale(scale), &cfg).unwrap().value;
        prop_assert!(rel(b, scale * a) <= 1e-6);
    }

    #[test]
    fn estimate_never_exceeds_top_eigenvalue(n in 2usize..16, seed in any::<u64>()) {
        let m = psd(n, seed);
        let est = power_iteration(&m, &PowerIterationConfig::default().with_seed(seed)).unwrap();
        let exact = jacobi_top_eigenvalue(&m).unwrap();
        prop_assert!(est.value <= exact * (1.0 + 1e-10) + 1e-12);
        prop_assert!(est.value >= 0.0);
    }

    #[test]
    fn tm_is_symmetric_psd(d in 2usize..10, n in 1usize..12, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let front = gaussian_matrix(d, n, &mut rng);
        let latter = gaussian_matrix(d, n, &mut rng);
        let tm = build_tm(
            &FeatureMapBatch { block_index: 0, data: front },
            &FeatureMapBatch { block_index: 1, data: latter },
            1e-12,
        ).unwrap();
        prop_assert_eq!(tm.data.max_asymmetry(), Some(0.0));
        let eig = london::linalg::jacobi_eigenvalues(&tm.data).unwrap();
        prop_assert!(eig.iter().all(|&e| e >= -1e-9 * eig[0].max(1.0)));
    }
}
