//! Synthetic datasets and the scaling benchmark.
//!
//! The benchmark writes one CSV row per measurement with the fixed columns
//! `kernel,alpha,d,n_or_m,method,value,seed,wall_ms`:
//!
//! * `gsw_disc`: estimated sup discrepancy of one walk coloring of `n` points;
//! * `exact_min`: exact minimum over colorings of the max discrepancy at the
//!   data points (only for `n ≤ 16` when the plan asks for it);
//! * `gsw_coreset`: measured sup KDE error of the halving coreset of size `m`;
//! * `uniform`: the same for a uniform sample of size `m`.
//!
//! `seed` is the row's own seed: the dataset is generated with
//! `derive_seed(seed, 0)`, and the method runs with `derive_seed(seed, 1)` in
//! discrepancy mode or `derive_seed(seed, 1 + k)` for the `k`-th coreset size.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::coreset::{build_coreset, uniform_sampling_baseline};
use crate::dataset::{DataSet, Domain};
use crate::discrepancy::{build_query_space, exact_min_discrepancy, kde_error, sup_discrepancy, EXACT_MAX_N};
use crate::error::{Error, Result};
use crate::gsw::{gram_schmidt_walk, GramOracle};
use crate::kernels::{KernelSpec, PreparedPoints};
use crate::rng::{derive_seed, prng, Prng};

/// Scale of the mixture centers and of the points around them.
pub const MIXTURE_CENTER_SD: f64 = 2.0;
pub const MIXTURE_POINT_SD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Uniform in the ball of the given radius around the origin.
    UniformBall { radius: f64 },
    /// Uniform in the cube `[lo, hi]^d`.
    UniformCube { lo: f64, hi: f64 },
    /// Equal-weight mixture of `components` spherical Gaussians.
    GaussianMixture { components: usize },
    SphereUniform,
    SimplexDirichlet { concentration: f64 },
}

impl Generator {
    pub fn domain(&self) -> Domain {
        match self {
            Generator::SphereUniform => Domain::Sphere,
            Generator::SimplexDirichlet { .. } => Domain::Simplex,
            _ => Domain::Euclidean,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Generator::UniformBall { .. } => "uniform_ball",
            Generator::UniformCube { .. } => "uniform_cube",
            Generator::GaussianMixture { .. } => "gaussian_mixture",
            Generator::SphereUniform => "sphere_uniform",
            Generator::SimplexDirichlet { .. } => "simplex_dirichlet",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Generator::UniformBall { radius } => radius.is_finite() && radius > 0.0,
            Generator::UniformCube { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Generator::GaussianMixture { components } => components >= 1,
            Generator::SphereUniform => true,
            Generator::SimplexDirichlet { concentration } => concentration.is_finite() && concentration > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid generator parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchMode {
    /// One walk coloring per size in `sizes`.
    Discrepancy,
    /// Datasets of `n` points reduced to each size in `sizes`.
    Coreset { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub generator: Generator,
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub kernels: Vec<KernelSpec>,
    pub repetitions: usize,
    pub seed: u64,
    pub mode: BenchMode,
    #[serde(default)]
    pub exact_oracle: bool,
    /// Search budget; `None` uses the dataset size.
    #[serde(default)]
    pub query_budget: Option<usize>,
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.dim == 0 {
            return Err(Error::param("dim must be at least 1"));
        }
        if self.generator == Generator::SphereUniform && self.dim < 2 {
            return Err(Error::param("sphere_uniform needs dim >= 2"));
        }
        if self.sizes.is_empty() || self.sizes[0] == 0 || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("sizes must be positive and strictly increasing"));
        }
        if self.kernels.is_empty() {
            return Err(Error::param("kernel grid is empty"));
        }
        for k in &self.kernels {
            KernelSpec::new(k.family, k.alpha)?;
            if k.domain() != Domain::Euclidean && k.domain() != self.generator.domain() {
                return Err(Error::param(format!(
                    "kernel {} needs {} data, generator gives {}",
                    k.family,
                    k.domain().name(),
                    self.generator.domain().name()
                )));
            }
        }
        if self.repetitions == 0 {
            return Err(Error::param("repetitions must be at least 1"));
        }
        match self.mode {
            BenchMode::Discrepancy if self.sizes[0] < 2 => {
                Err(Error::param("discrepancy sizes must be at least 2"))
            }
            BenchMode::Coreset { n } if *self.sizes.last().unwrap() > n => {
                Err(Error::Target { target: *self.sizes.last().unwrap(), n })
            }
            _ => Ok(()),
        }
    }
}

/// `n` points from the plan's generator, deterministic in `(plan, n, seed)`.
pub fn generate(plan: &BenchPlan, n: usize, seed: u64) -> Result<DataSet> {
    generate_points(&plan.generator, plan.dim, n, seed)
}

pub fn generate_points(generator: &Generator, dim: usize, n: usize, seed: u64) -> Result<DataSet> {
    generator.validate()?;
    if n == 0 || dim == 0 {
        return Err(Error::param("generated datasets need n >= 1 and dim >= 1"));
    }
    let mut rng = prng(seed);
    let rows: Vec<Vec<f64>> = match *generator {
        Generator::UniformBall { radius } => (0..n)
            .map(|_| {
                let dir = unit_direction(&mut rng, dim);
                let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                dir.into_iter().map(|v| v * r).collect()
            })
            .collect(),
        Generator::UniformCube { lo, hi } => {
            (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
        }
        Generator::GaussianMixture { components } => {
            let centers: Vec<Vec<f64>> =
                (0..components).map(|_| gaussian_vec(&mut rng, dim, MIXTURE_CENTER_SD)).collect();
            (0..n)
                .map(|_| {
                    let c = &centers[rng.random_range(0..components)];
                    let noise = gaussian_vec(&mut rng, dim, MIXTURE_POINT_SD);
                    c.iter().zip(noise).map(|(a, b)| a + b).collect()
                })
                .collect()
        }
        Generator::SphereUniform => (0..n).map(|_| unit_direction(&mut rng, dim)).collect(),
        Generator::SimplexDirichlet { concentration } => {
            let gamma = Gamma::new(concentration, 1.0)
                .map_err(|e| Error::param(format!("bad concentration: {e}")))?;
            (0..n)
                .map(|_| loop {
                    let g: Vec<f64> = (0..dim).map(|_| gamma.sample(&mut rng)).collect();
                    let s: f64 = g.iter().sum();
                    if s > 0.0 && s.is_finite() {
                        break g.into_iter().map(|v| v / s).collect();
                    }
                })
                .collect()
        }
    };
    let id = format!("{}-d{dim}-n{n}-s{seed}", generator.name());
    DataSet::from_rows(id, generator.domain(), &rows)
}

fn gaussian_vec(rng: &mut Prng, dim: usize, sd: f64) -> Vec<f64> {
    (0..dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_direction(rng: &mut Prng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, dim, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kernel: String,
    pub alpha: f64,
    pub d: usize,
    pub n_or_m: usize,
    pub method: String,
    pub value: f64,
    pub seed: u64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str = "kernel,alpha,d,n_or_m,method,value,seed,wall_ms";

/// Runs the plan. With `timing` off every `wall_ms` is 0, which makes the
/// output a pure function of the plan.
pub fn run_scaling(plan: &BenchPlan, timing: bool) -> Result<Vec<BenchRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    let clock = |t: Instant| if timing { t.elapsed().as_millis() as u64 } else { 0 };
    for (ki, spec) in plan.kernels.iter().enumerate() {
        let mut push = |n_or_m: usize, method: &str, value: f64, seed: u64, wall_ms: u64| {
            rows.push(BenchRow {
                kernel: spec.family.name().to_string(),
                alpha: spec.alpha,
                d: plan.dim,
                n_or_m,
                method: method.to_string(),
                value,
                seed,
                wall_ms,
            })
        };
        for rep in 0..plan.repetitions {
            match plan.mode {
                BenchMode::Discrepancy => {
                    for (si, &n) in plan.sizes.iter().enumerate() {
                        let seed = cell_seed(plan.seed, ki, si, rep);
                        let ds = generate(plan, n, derive_seed(seed, 0))?;
                        let method_seed = derive_seed(seed, 1);
                        let t = Instant::now();
                        let points = PreparedPoints::new(*spec, &ds)?;
                        let coloring = gram_schmidt_walk(&GramOracle::from_all(&points)?, method_seed)?;
                        let qs = build_query_space(spec, &ds)?;
                        let budget = plan.query_budget.unwrap_or(n).max(n);
                        let rep_ = sup_discrepancy(spec, &ds, &coloring, &qs, budget, method_seed)?;
                        push(n, "gsw_disc", rep_.sup_discrepancy, seed, clock(t));
                        if plan.exact_oracle && n <= EXACT_MAX_N {
                            let t = Instant::now();
                            let queries: Vec<Vec<f64>> = ds.points().map(|p| p.to_vec()).collect();
                            let (_, v) = exact_min_discrepancy(spec, &ds, &queries)?;
                            push(n, "exact_min", v, seed, clock(t));
                        }
                    }
                }
                BenchMode::Coreset { n } => {
                    let data_seed = cell_seed(plan.seed, ki, usize::MAX, rep);
                    let ds = generate(plan, n, derive_seed(data_seed, 0))?;
                    let budget = plan.query_budget.unwrap_or(n);
                    for (si, &m) in plan.sizes.iter().enumerate() {
                        let method_seed = derive_seed(data_seed, 1 + si as u64);
                        let t = Instant::now();
                        let config = RunConfig::for_size(*spec, m, method_seed, budget.max(n));
                        let res = build_coreset(&ds, &config)?;
                        let err = kde_error(spec, &ds, &res.indices, budget, method_seed)?;
                        push(res.indices.len(), "gsw_coreset", err.sup_discrepancy, data_seed, clock(t));
                        let t = Instant::now();
                        let sample = uniform_sampling_baseline(&ds, res.indices.len(), method_seed)?;
                        let err = kde_error(spec, &ds, &sample, budget, method_seed)?;
                        push(res.indices.len(), "uniform", err.sup_discrepancy, data_seed, clock(t));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Seed of one (kernel, size, repetition) cell.
fn cell_seed(base: u64, kernel: usize, size: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(derive_seed(base, kernel as u64), size as u64), rep as u64)
}

pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    if rows.is_empty() {
        return Ok(format!("{CSV_HEADER}\n"));
    }
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    fn plan(generator: Generator, dim: usize) -> BenchPlan {
        BenchPlan {
            generator,
            dim,
            sizes: vec![8, 16],
            kernels: vec![KernelSpec::new(KernelFamily::Gaussian, 2.0).unwrap()],
            repetitions: 1,
            seed: 11,
            mode: BenchMode::Discrepancy,
            exact_oracle: false,
            query_budget: None,
        }
    }

    #[test]
    fn generators_respect_domains() {
        let ds = generate(&plan(Generator::UniformBall { radius: 1.0 }, 2), 10, 1).unwrap();
        assert!(ds.points().all(|p| p.iter().map(|v| v * v).sum::<f64>() <= 1.0));
        let ds = generate(&plan(Generator::SimplexDirichlet { concentration: 1.0 }, 3), 5, 1).unwrap();
        for p in ds.points() {
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let ds = generate(&plan(Generator::SphereUniform, 4), 5, 1).unwrap();
        for p in ds.points() {
            assert!((p.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        }
        let a = generate(&plan(Generator::GaussianMixture { components: 3 }, 2), 20, 5).unwrap();
        let b = generate(&plan(Generator::GaussianMixture { components: 3 }, 2), 20, 5).unwrap();
        assert_eq!(a, b);
        assert!(generate(&plan(Generator::UniformBall { radius: 0.0 }, 2), 5, 1).is_err());
        assert!(generate(&plan(Generator::SimplexDirichlet { concentration: -1.0 }, 2), 5, 1).is_err());
    }

    #[test]
    fn exact_column_for_small_sizes() {
        let mut p = plan(Generator::UniformBall { radius: 1.0 }, 2);
        p.exact_oracle = true;
        let rows = run_scaling(&p, false).unwrap();
        assert!(rows.iter().any(|r| r.method == "exact_min" && r.n_or_m == 16));
        let csv = rows_to_csv(&rows).unwrap();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv, rows_to_csv(&run_scaling(&p, false).unwrap()).unwrap());
    }

    #[test]
    fn plan_validation() {
        let mut p = plan(Generator::UniformBall { radius: 1.0 }, 2);
        p.kernels.clear();
        assert!(matches!(run_scaling(&p, false), Err(Error::Param(_))));
        let mut p = plan(Generator::UniformBall { radius: 1.0 }, 2);
        p.sizes = vec![16, 8];
        assert!(p.validate().is_err());
        let mut p = plan(Generator::UniformBall { radius: 1.0 }, 2);
        p.repetitions = 0;
        assert!(p.validate().is_err());
        let mut p = plan(Generator::UniformBall { radius: 1.0 }, 2);
        p.kernels = vec![KernelSpec::new(KernelFamily::Js, 1.0).unwrap()];
        assert!(p.validate().is_err());
    }

    #[test]
    fn coreset_mode_rows() {
        let mut p = plan(Generator::UniformCube { lo: 0.0, hi: 1.0 }, 2);
        p.mode = BenchMode::Coreset { n: 64 };
        let rows = run_scaling(&p, false).unwrap();
        let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(methods, ["gsw_coreset", "uniform", "gsw_coreset", "uniform"]);
        assert_eq!(rows[0].n_or_m, 8);
    }
}
