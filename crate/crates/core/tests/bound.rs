use london::lipschitz::empirical_max_ratio;
use london::rng::{gaussian_matrix, seeded};
use london::{build_network, profile_network, ActivationKind, BlockKind, PowerIterationConfig};
use proptest::prelude::*;

fn kinds(widths: &[usize], residual_mask: u8) -> Vec<BlockKind> {
    widths
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            if w[0] == w[1] && residual_mask & (1 << k) != 0 {
                BlockKind::ResidualDense
            } else {
                BlockKind::Dense
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sampled_ratio_never_exceeds_bound(
        hidden in proptest::collection::vec(1usize..12, 0..3),
        input in 1usize..8,
        output in 1usize..5,
        act in prop_oneof![
            Just(ActivationKind::Relu),
            Just(ActivationKind::Tanh),
            Just(ActivationKind::Sigmoid),
            Just(ActivationKind::LeakyRelu(0.2)),
        ],
        residual_mask in any::<u8>(),
        scale in 0.2f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut widths = vec![input];
        widths.extend(&hidden);
        widths.push(output);
        let net = build_network(&widths, &kinds(&widths, residual_mask), act, scale, seed).unwrap();
        let batch = gaussian_matrix(input, 16, &mut seeded(seed ^ 1));
        let profile = profile_network(&net, &batch, &PowerIterationConfig::default().with_seed(seed)).unwrap();
        let ratio = empirical_max_ratio(&net, None, 500, seed).unwrap();
        prop_assert!(ratio <= profile.upper_bound * (1.0 + 1e-9), "{ratio} > {}", profile.upper_bound);
        prop_assert!(profile.block_factors.iter().all(|f| *f >= 0.0));
    }
}
