use coreset_forge::bench::{generate_points, Generator};
use coreset_forge::config::RunConfig;
use coreset_forge::coreset::{
    build_coreset, build_partition, halve_once, halve_partitioned, rebalance, uniform_sampling_baseline,
};
use coreset_forge::discrepancy::{kde, kde_error, point_discrepancy};
use coreset_forge::gsw::random_coloring;
use coreset_forge::rng::{derive_seed, prng};
use coreset_forge::{DataSet, Domain, Error, KernelFamily, KernelSpec};
use proptest::prelude::*;
use rand::Rng;

fn gauss(alpha: f64) -> KernelSpec {
    KernelSpec::new(KernelFamily::Gaussian, alpha).unwrap()
}

fn laplace(alpha: f64) -> KernelSpec {
    KernelSpec::new(KernelFamily::Laplacian, alpha).unwrap()
}

fn square(n: usize, seed: u64) -> DataSet {
    generate_points(&Generator::UniformCube { lo: 0.0, hi: 1.0 }, 2, n, seed).unwrap()
}

#[test]
fn duplicate_pair_keeps_one() {
    let ds = DataSet::from_rows("dup", Domain::Euclidean, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let (kept, rec) = halve_once(&gauss(1.0), &ds, 3, 2).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(rec.sup_discrepancy, 0.0);
}

#[test]
fn hundred_points_halve_to_fifty() {
    for family in KernelFamily::ALL {
        let gen = match family.domain() {
            Domain::Euclidean => Generator::UniformBall { radius: 1.0 },
            Domain::Sphere => Generator::SphereUniform,
            Domain::Simplex => Generator::SimplexDirichlet { concentration: 1.0 },
        };
        let ds = generate_points(&gen, 3, 100, 2).unwrap();
        let (kept, _) = halve_once(&KernelSpec::new(family, 2.0).unwrap(), &ds, 4, 100).unwrap();
        assert_eq!(kept.len(), 50, "{family}");
    }
}

#[test]
fn halving_identity_at_random_queries() {
    let spec = gauss(2.0);
    let n = 64;
    let ds = square(n, 5);
    let mut c = random_coloring(n, 6);
    rebalance(&mut c, &mut prng(7));
    assert_eq!(c.plus_count(), n / 2);
    let all: Vec<usize> = (0..n).collect();
    let minus: Vec<usize> = (0..n).filter(|&i| c.signs()[i] == -1).collect();
    let plus: Vec<usize> = (0..n).filter(|&i| c.signs()[i] == 1).collect();
    let mut rng = prng(8);
    for _ in 0..20 {
        let y = [rng.random::<f64>() * 1.4 - 0.2, rng.random::<f64>() * 1.4 - 0.2];
        let signed: f64 = (0..n).map(|i| c.signs()[i] as f64 * spec.evaluate(ds.point(i), &y).unwrap()).sum();
        let diff = kde(&spec, &ds, &all, &y).unwrap() - kde(&spec, &ds, &minus, &y).unwrap();
        assert!((signed / n as f64 - diff).abs() <= 1e-12);
        let kept_err = kde(&spec, &ds, &all, &y).unwrap() - kde(&spec, &ds, &plus, &y).unwrap();
        assert!((kept_err + diff).abs() <= 1e-12);
        assert!((point_discrepancy(&spec, &ds, &c, &y).unwrap() / n as f64 - diff.abs()).abs() <= 1e-12);
    }
}

#[test]
fn target_equal_to_n_does_nothing() {
    let ds = square(37, 1);
    let res = build_coreset(&ds, &RunConfig::for_size(gauss(1.0), 37, 1, 37)).unwrap();
    assert!(res.levels.is_empty());
    assert_eq!(res.error_estimate, 0.0);
    assert_eq!(res.indices, (0..37).collect::<Vec<_>>());
}

#[test]
fn four_levels_and_a_sound_estimate() {
    let spec = gauss(4.0);
    let ds = square(1024, 11);
    let res = build_coreset(&ds, &RunConfig::for_size(spec, 64, 12, 1024)).unwrap();
    assert_eq!(res.levels.len(), 4);
    assert_eq!(res.indices.len(), 64);
    let measured = kde_error(&spec, &ds, &res.indices, 1024, 13).unwrap().sup_discrepancy;
    assert!(measured <= res.error_estimate + 1e-9, "{measured} > {}", res.error_estimate);
}

#[test]
fn duplicates_have_zero_error() {
    let ds = DataSet::from_rows("same", Domain::Euclidean, &vec![vec![0.3, -0.2]; 40]).unwrap();
    let spec = laplace(1.0);
    let res = build_coreset(&ds, &RunConfig::for_size(spec, 5, 2, 40)).unwrap();
    assert_eq!(res.indices.len(), 5);
    // summation order leaves round-off at queries away from the point
    assert!(res.levels.iter().all(|l| l.sup_discrepancy <= 1e-12), "{:?}", res.levels);
    assert!(kde_error(&spec, &ds, &res.indices, 100, 3).unwrap().sup_discrepancy <= 1e-12);
}

#[test]
fn size_contract() {
    for n in [2usize, 3, 7, 33, 100] {
        let ds = square(n, n as u64);
        for t in 0..=n.ilog2() as usize {
            let m = n.div_ceil(1 << t);
            let res = build_coreset(&ds, &RunConfig::for_size(gauss(2.0), m, 5, n)).unwrap();
            assert_eq!(res.levels.len(), t, "n={n} m={m}");
            assert_eq!(res.indices.len(), m, "n={n} m={m}");
        }
    }
}

#[test]
fn epsilon_mode_stays_within_budget() {
    let ds = square(200, 4);
    let res = build_coreset(&ds, &RunConfig::for_epsilon(gauss(3.0), 0.05, 4, 200)).unwrap();
    assert!(res.error_estimate <= 0.05);
    assert!(!res.levels.is_empty());
    let next = res.indices.len().div_ceil(2);
    assert!(next < res.indices.len());
}

#[test]
fn builds_are_deterministic() {
    let ds = square(300, 9);
    for partitioned in [false, true] {
        let config = RunConfig::for_size(laplace(3.0), 30, 9, 300).partitioned(partitioned);
        assert_eq!(build_coreset(&ds, &config).unwrap(), build_coreset(&ds, &config).unwrap());
    }
}

#[test]
fn target_larger_than_n_rejected() {
    let ds = square(10, 1);
    assert!(matches!(
        build_coreset(&ds, &RunConfig::for_size(gauss(1.0), 11, 1, 10)),
        Err(Error::Target { target: 11, n: 10 })
    ));
}

#[test]
fn tight_cluster_is_one_cell() {
    let spec = gauss(1.0);
    let r = spec.impact_radius(30).unwrap();
    let ds = generate_points(&Generator::UniformBall { radius: r / 4.0 }, 2, 30, 3).unwrap();
    let p = build_partition(&spec, &ds, 1).unwrap();
    assert_eq!(p.num_cells(), 1);
    p.verify(&ds).unwrap();
}

#[test]
fn two_clusters_are_two_cells() {
    let spec = gauss(1.0);
    let r = spec.impact_radius(40).unwrap();
    let blob = generate_points(&Generator::UniformBall { radius: r / 4.0 }, 2, 20, 3).unwrap();
    let mut rows: Vec<Vec<f64>> = blob.points().map(|p| p.to_vec()).collect();
    rows.extend(blob.points().map(|p| vec![p[0] + 10.0 * r, p[1]]));
    let ds = DataSet::from_rows("two", Domain::Euclidean, &rows).unwrap();
    let p = build_partition(&spec, &ds, 2).unwrap();
    assert_eq!(p.num_cells(), 2);
    let cells = p.cells();
    let first: Vec<usize> = (0..20).collect();
    assert!(cells.contains(&first));
}

#[test]
fn partition_invariants_on_a_square() {
    let n = 200;
    // r_K(200) = 1 for this bandwidth
    let spec = gauss((n as f64).ln().sqrt());
    let ds = generate_points(&Generator::UniformCube { lo: 0.0, hi: 10.0 }, 2, n, 21).unwrap();
    let p = build_partition(&spec, &ds, 22).unwrap();
    assert!((p.cell_radius - 1.0).abs() < 1e-12);
    p.verify(&ds).unwrap();
    for (a, &ca) in p.center_indices.iter().enumerate() {
        for &cb in &p.center_indices[..a] {
            let d: f64 = ds.point(ca).iter().zip(ds.point(cb)).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!(d.sqrt() >= 1.0);
        }
    }
    for (i, &c) in p.assignment.iter().enumerate() {
        let d: f64 = ds.point(i).iter().zip(ds.point(p.center_indices[c])).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!(d.sqrt() <= 1.0);
    }
}

#[test]
fn corrupted_partition_rejected() {
    let spec = laplace(2.0);
    let ds = generate_points(&Generator::UniformCube { lo: 0.0, hi: 20.0 }, 1, 64, 1).unwrap();
    let mut p = build_partition(&spec, &ds, 1).unwrap();
    p.cell_radius *= 0.25;
    let config = RunConfig::for_size(spec, 32, 1, 64).partitioned(true);
    assert!(halve_partitioned(&spec, &ds, &p, &config, 1).is_err());
}

#[test]
fn single_cell_partition_halves() {
    let spec = gauss(0.5);
    let ds = square(40, 6);
    let p = build_partition(&spec, &ds, 1).unwrap();
    assert_eq!(p.num_cells(), 1);
    let config = RunConfig::for_size(spec, 20, 1, 40).partitioned(true);
    let (kept, rec) = halve_partitioned(&spec, &ds, &p, &config, 5).unwrap();
    assert_eq!(kept.len(), 20);
    let stats = rec.rejection.unwrap();
    assert_eq!(stats.cells, 1);
    assert!(stats.rounds[0] >= 1);
}

#[test]
fn rejection_rounds_are_few() {
    let spec = laplace(2.0);
    let n = 512;
    let (mut few, mut total) = (0, 0);
    for run in 0..10u64 {
        let ds = generate_points(&Generator::UniformCube { lo: 0.0, hi: 20.0 }, 1, n, derive_seed(31, run)).unwrap();
        let p = build_partition(&spec, &ds, run).unwrap();
        let config = RunConfig::for_size(spec, 256, run, n).partitioned(true);
        let (_, rec) = halve_partitioned(&spec, &ds, &p, &config, run).unwrap();
        let stats = rec.rejection.unwrap();
        total += stats.rounds.len();
        few += stats.rounds.iter().filter(|&&r| r <= 5).count();
    }
    assert!(few as f64 >= 0.9 * total as f64, "{few}/{total}");
}

#[test]
fn uniform_baseline_examples() {
    let ds = square(20, 1);
    assert_eq!(uniform_sampling_baseline(&ds, 20, 3).unwrap(), (0..20).collect::<Vec<_>>());
    let mut counts = [0usize; 20];
    for s in 0..4000u64 {
        let idx = uniform_sampling_baseline(&ds, 1, s).unwrap();
        assert_eq!(idx.len(), 1);
        counts[idx[0]] += 1;
    }
    assert!(counts.iter().all(|&c| (130..=270).contains(&c)), "{counts:?}");
    assert!(uniform_sampling_baseline(&ds, 0, 1).is_err());
    assert!(uniform_sampling_baseline(&ds, 21, 1).is_err());
}

#[test]
fn coreset_beats_sampling_at_1024() {
    let spec = gauss(4.0);
    let ds = square(1024, 41);
    let res = build_coreset(&ds, &RunConfig::for_size(spec, 64, 42, 1024)).unwrap();
    let ours = kde_error(&spec, &ds, &res.indices, 1024, 43).unwrap().sup_discrepancy;
    let mut uniform: Vec<f64> = (0..10u64)
        .map(|s| {
            let idx = uniform_sampling_baseline(&ds, 64, derive_seed(44, s)).unwrap();
            kde_error(&spec, &ds, &idx, 1024, 43).unwrap().sup_discrepancy
        })
        .collect();
    uniform.sort_by(f64::total_cmp);
    let median = 0.5 * (uniform[4] + uniform[5]);
    assert!(median > ours, "uniform {median} vs coreset {ours}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cell_locality(seed in any::<u64>(), n in 20usize..120) {
        let spec = laplace(2.0);
        let ds = generate_points(&Generator::UniformCube { lo: 0.0, hi: 30.0 }, 1, n, seed).unwrap();
        let p = build_partition(&spec, &ds, seed).unwrap();
        let r = p.cell_radius;
        let cells = p.cells();
        let cell = &cells[seed as usize % cells.len()];
        let sub = ds.subset(cell);
        let c = random_coloring(cell.len(), seed);
        let mut rng = prng(seed);
        for _ in 0..20 {
            let y = [rng.random::<f64>() * 50.0 - 10.0];
            if sub.points().any(|q| (q[0] - y[0]).abs() <= r) {
                continue;
            }
            let v = point_discrepancy(&spec, &sub, &c, &y).unwrap();
            prop_assert!(v <= cell.len() as f64 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn rebalance_makes_plus_the_ceiling_half(n in 1usize..200, seed in any::<u64>()) {
        let mut c = random_coloring(n, seed);
        let before = c.clone();
        let (flips, negated) = rebalance(&mut c, &mut prng(seed));
        prop_assert_eq!(c.plus_count(), n.div_ceil(2));
        let start = if negated { before.negated() } else { before };
        let changed = start.signs().iter().zip(c.signs()).filter(|(a, b)| a != b).count();
        prop_assert_eq!(changed, flips);
    }
}
