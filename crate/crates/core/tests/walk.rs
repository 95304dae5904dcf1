use coreset_forge::bench::{generate_points, Generator};
use coreset_forge::gsw::{gram_schmidt_walk_with_stats, random_coloring};
use coreset_forge::rng::derive_seed;
use coreset_forge::{
    gram_schmidt_walk, signed_sum_norm, subgaussian_diagnostic, ColoringAlgorithm, GramOracle, KernelFamily,
    KernelSpec, PreparedPoints,
};
use proptest::prelude::*;

fn gaussian_instance(n: usize, seed: u64) -> (PreparedPoints, GramOracle) {
    let ds = generate_points(&Generator::UniformCube { lo: 0.0, hi: 2.0 }, 2, n, seed).unwrap();
    let points = PreparedPoints::new(KernelSpec::new(KernelFamily::Gaussian, 1.0).unwrap(), &ds).unwrap();
    let oracle = GramOracle::from_all(&points).unwrap();
    (points, oracle)
}

#[test]
fn single_vector_is_a_fair_coin() {
    let oracle = GramOracle::from_matrix(1, vec![1.0]).unwrap();
    let plus = (0..2000u64).filter(|&s| gram_schmidt_walk(&oracle, s).unwrap().signs()[0] == 1).count();
    assert!((900..=1100).contains(&plus), "{plus}");
}

#[test]
fn duplicate_pair_norm() {
    let oracle = GramOracle::from_matrix(2, vec![1.0; 4]).unwrap();
    let mut total = 0.0;
    for s in 0..400u64 {
        let c = gram_schmidt_walk(&oracle, s).unwrap();
        let norm = signed_sum_norm(&oracle, &c).unwrap();
        assert!(norm.abs() < 1e-12 || (norm - 2.0).abs() < 1e-12, "{norm}");
        total += norm * norm;
    }
    assert!(total / 400.0 <= 2.0, "{}", total / 400.0);
}

#[test]
fn signed_sum_norm_examples() {
    let ones = GramOracle::from_matrix(2, vec![1.0; 4]).unwrap();
    let c = coreset_forge::Coloring::new(vec![1, -1], 0, ColoringAlgorithm::Gsw).unwrap();
    assert_eq!(signed_sum_norm(&ones, &c).unwrap(), 0.0);

    let mut eye = vec![0.0; 49];
    (0..7).for_each(|i| eye[i * 8] = 1.0);
    let eye = GramOracle::from_matrix(7, eye).unwrap();
    let c = random_coloring(7, 3);
    assert!((signed_sum_norm(&eye, &c).unwrap() - 7f64.sqrt()).abs() < 1e-15);

    let g = GramOracle::from_matrix(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
    let c = coreset_forge::Coloring::new(vec![1, 1], 0, ColoringAlgorithm::Gsw).unwrap();
    assert!((signed_sum_norm(&g, &c).unwrap() - 1.7320508).abs() < 1e-7);
}

#[test]
fn tail_constant_on_twelve_points() {
    let (points, oracle) = gaussian_instance(12, 41);
    let ds = generate_points(&Generator::UniformCube { lo: 0.0, hi: 2.0 }, 2, 20, 42).unwrap();
    let rows: Vec<Vec<f64>> = ds.points().map(|y| points.cross_row(&points.query(y))).collect();
    let c = subgaussian_diagnostic(&oracle, &rows, 200, 43).unwrap();
    assert!(c <= 4.0, "{c}");
}

#[test]
fn tail_constant_degenerate_cases() {
    let ones = GramOracle::from_matrix(2, vec![1.0; 4]).unwrap();
    let c = subgaussian_diagnostic(&ones, &[vec![1.0, 1.0]], 200, 1).unwrap();
    assert!(c.is_finite());

    let single = GramOracle::from_matrix(1, vec![1.0]).unwrap();
    for k in [1.0, 0.3] {
        let c = subgaussian_diagnostic(&single, &[vec![k]], 200, 2).unwrap();
        assert!(c <= 2.0 * k, "{c} for K={k}");
    }
    assert!(subgaussian_diagnostic(&single, &[vec![1.0]], 99, 2).is_err());
    assert!(subgaussian_diagnostic(&single, &[vec![1.0, 0.0]], 200, 2).is_err());
}

#[test]
fn termination_bounds() {
    for seed in 0..30u64 {
        let n = 5 + (seed as usize % 40);
        let (_, oracle) = gaussian_instance(n, seed);
        let (c, stats) = gram_schmidt_walk_with_stats(&oracle, seed).unwrap();
        assert_eq!(c.len(), n);
        assert!(c.signs().iter().all(|&s| s == 1 || s == -1));
        assert!(stats.pivot_freezes <= n, "{stats:?}");
        assert!(stats.steps < 2 * n, "{stats:?}");
    }
}

#[test]
fn zero_mean_signs() {
    let (_, oracle) = gaussian_instance(10, 5);
    let mut sums = [0i64; 10];
    for s in 0..1000u64 {
        let c = gram_schmidt_walk(&oracle, derive_seed(77, s)).unwrap();
        for (acc, &b) in sums.iter_mut().zip(c.signs()) {
            *acc += b as i64;
        }
    }
    for (i, &s) in sums.iter().enumerate() {
        assert!((s as f64 / 1000.0).abs() <= 0.1, "coordinate {i}: mean {}", s as f64 / 1000.0);
    }
}

#[test]
fn mean_squared_norm_is_linear() {
    for inst in 0..3u64 {
        let n = 40;
        let (_, oracle) = gaussian_instance(n, 100 + inst);
        let runs = 300;
        let mean: f64 = (0..runs)
            .map(|s| {
                let c = gram_schmidt_walk(&oracle, derive_seed(inst, s)).unwrap();
                signed_sum_norm(&oracle, &c).unwrap().powi(2)
            })
            .sum::<f64>()
            / runs as f64;
        assert!(mean <= 4.0 * n as f64, "instance {inst}: {mean}");
    }
}

#[test]
fn walk_beats_random_signs() {
    let (_, oracle) = gaussian_instance(60, 9);
    let norm = |c| signed_sum_norm(&oracle, &c).unwrap();
    let walk: f64 = (0..100u64).map(|s| norm(gram_schmidt_walk(&oracle, s).unwrap())).sum();
    let random: f64 = (0..100u64).map(|s| norm(random_coloring(60, s))).sum();
    assert!(walk < random, "walk {walk} random {random}");
}

#[test]
fn invalid_oracles_rejected() {
    assert!(GramOracle::from_matrix(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
    assert!(GramOracle::from_matrix(2, vec![1.0, 0.5, 0.5, 0.9]).is_err());
    assert!(GramOracle::from_matrix(2, vec![1.0; 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reproducible_valid_colorings(n in 1usize..30, data_seed in any::<u64>(), seed in any::<u64>()) {
        let (_, oracle) = gaussian_instance(n, data_seed);
        let a = gram_schmidt_walk(&oracle, seed).unwrap();
        let b = gram_schmidt_walk(&oracle, seed).unwrap();
        prop_assert_eq!(a.signs(), b.signs());
        prop_assert!(a.signs().iter().all(|&s| s == 1 || s == -1));
        prop_assert_eq!(a.len(), n);
    }
}
