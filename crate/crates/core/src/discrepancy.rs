//! Kernel discrepancy of colorings and sup-norm search over the query space.
//!
//! Every quantity here is the absolute value of a weighted kernel sum
//! `y ↦ |Σ w_i K(x_i, y)|`: a coloring uses `w = β`, and a KDE error uses
//! `w_i = 1/n − [i ∈ S]/|S|`. The sup over queries is estimated by
//! evaluating data points, a grid in low dimension, and coordinate-ascent
//! climbs; the result is a lower bound on the true sup together with the
//! witnessing query.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataSet, Domain};
use crate::error::{Error, Result};
use crate::gsw::{Coloring, ColoringAlgorithm};
use crate::kernels::{sq_dist, KernelSpec, PreparedPoints};
use crate::rng::{derive_seed, prng};

/// Largest instance the exhaustive oracle accepts.
pub const EXACT_MAX_N: usize = 16;
/// Dimensions up to this value get a grid search.
pub const GRID_MAX_DIM: usize = 3;
/// Upper limit on grid points per component; the spacing grows to respect it.
pub const GRID_CAP: usize = 200_000;
/// Coordinate-ascent sweeps per climb.
pub const CLIMB_ITERATIONS: usize = 40;
/// Climbs stop once the step falls below this fraction of the initial step.
pub const CLIMB_MIN_STEP: f64 = 1.0 / 4096.0;
/// Number of best deterministic candidates refined by coordinate ascent.
pub const POLISH_COUNT: usize = 8;
/// Grid points allowed while tightening the certified upper bound.
pub const CERTIFY_EVAL_CAP: usize = 4_000_000;

/// Union of the impact-radius balls around the data points, split into
/// connected components.
#[derive(Debug, Clone)]
pub struct QuerySpace {
    pub radius: f64,
    pub domain: Domain,
    /// Dataset indices per component; every index appears exactly once.
    pub components: Vec<Vec<usize>>,
    /// False when the query space is the whole (compact) domain.
    pub bounded: bool,
    dim: usize,
    centers: Vec<f64>,
}

impl QuerySpace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.components.iter().position(|c| c.contains(&i)).expect("index in some component")
    }

    /// Whether `y` is within the radius of some data point.
    pub fn contains(&self, y: &[f64]) -> bool {
        if !self.bounded {
            return true;
        }
        let r2 = self.radius * self.radius;
        self.centers.chunks_exact(self.dim).any(|c| sq_dist(c, y) <= r2)
    }

    /// Smallest Euclidean distance from `y` to a data point.
    pub fn distance_to_data(&self, y: &[f64]) -> f64 {
        self.centers
            .chunks_exact(self.dim)
            .map(|c| sq_dist(c, y))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

/// Builds the query space; components link points at distance ≤ 2r.
pub fn build_query_space(spec: &KernelSpec, ds: &DataSet) -> Result<QuerySpace> {
    spec.check_dataset(ds)?;
    let radius = spec.impact_radius(ds.len())?;
    let n = ds.len();
    let bounded = spec.is_euclidean_radial();
    let components = if bounded {
        let mut uf = UnionFind::new(n);
        let limit = (2.0 * radius) * (2.0 * radius);
        for i in 0..n {
            for j in 0..i {
                if sq_dist(ds.point(i), ds.point(j)) <= limit {
                    uf.union(i, j);
                }
            }
        }
        uf.groups()
    } else {
        vec![(0..n).collect()]
    };
    Ok(QuerySpace {
        radius,
        domain: spec.domain(),
        components,
        bounded,
        dim: ds.dim(),
        centers: ds.coords().to_vec(),
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }

    /// Groups ordered by smallest member, members ascending.
    fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut slot = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            if slot[r] == usize::MAX {
                slot[r] = out.len();
                out.push(Vec::new());
            }
            out[slot[r]].push(i);
        }
        out
    }
}

/// Which search stage produced the reported witness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Grid,
    Multistart,
    ExactCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub sup_discrepancy: f64,
    pub witness: Vec<f64>,
    pub evaluations: u64,
    pub method: SearchMethod,
}

/// `y ↦ |Σ w_i K(x_{idx_i}, y)|`; `idx = None` means every point in order.
pub(crate) struct WeightedSum<'a> {
    pub points: &'a PreparedPoints,
    pub idx: Option<Vec<usize>>,
    pub w: Vec<f64>,
}

impl WeightedSum<'_> {
    pub fn value(&self, y: &[f64]) -> f64 {
        let q = self.points.query(y);
        match &self.idx {
            Some(idx) => self.points.weighted_sum(idx, &self.w, &q).abs(),
            None => self.points.weighted_sum_all(&self.w, &q).abs(),
        }
    }

    fn abs_weight(&self) -> f64 {
        self.w.iter().map(|w| w.abs()).sum()
    }
}

fn check_query(spec: &KernelSpec, dim: usize, y: &[f64]) -> Result<()> {
    if y.len() != dim {
        return Err(Error::Dimension { expected: dim, found: y.len() });
    }
    spec.check_point(y)
}

fn coloring_target<'a>(points: &'a PreparedPoints, coloring: &Coloring) -> Result<WeightedSum<'a>> {
    if coloring.len() != points.len() {
        return Err(Error::Dimension { expected: points.len(), found: coloring.len() });
    }
    Ok(WeightedSum { points, idx: None, w: coloring.as_f64() })
}

/// `|Σ_x β(x) K(x, y)|`.
pub fn point_discrepancy(
    spec: &KernelSpec,
    ds: &DataSet,
    coloring: &Coloring,
    y: &[f64],
) -> Result<f64> {
    check_query(spec, ds.dim(), y)?;
    let points = PreparedPoints::new(*spec, ds)?;
    Ok(coloring_target(&points, coloring)?.value(y))
}

/// `max_q |Σ β(x) K(x, q)|` over a finite query list.
pub fn max_candidate_discrepancy(
    spec: &KernelSpec,
    ds: &DataSet,
    coloring: &Coloring,
    queries: &[Vec<f64>],
) -> Result<f64> {
    let points = PreparedPoints::new(*spec, ds)?;
    let target = coloring_target(&points, coloring)?;
    let mut best: f64 = 0.0;
    for y in queries {
        check_query(spec, ds.dim(), y)?;
        best = best.max(target.value(y));
    }
    Ok(best)
}

/// Estimates `sup_{y∈Q} |Σ β(x) K(x, y)|`.
///
/// Data points are always evaluated. In dimension ≤ 3 a grid of spacing
/// `r/8` over each component's bounding box (clipped to `Q`) follows, the
/// best few candidates are refined by coordinate ascent, and `budget − n`
/// extra climbs run. In higher dimension `budget` climbs run from perturbed
/// data points.
pub fn sup_discrepancy(
    spec: &KernelSpec,
    ds: &DataSet,
    coloring: &Coloring,
    qs: &QuerySpace,
    budget: usize,
    seed: u64,
) -> Result<DiscrepancyReport> {
    let n = ds.len();
    if budget < n {
        return Err(Error::Budget { budget, required: n });
    }
    let points = PreparedPoints::new(*spec, ds)?;
    let target = coloring_target(&points, coloring)?;
    let climbs = if ds.dim() <= GRID_MAX_DIM { budget - n } else { budget };
    let all: Vec<usize> = (0..n).collect();
    Ok(search(&target, ds, qs, &all, &SearchPlan { grid: true, climbs, seed }))
}

/// Estimates `sup_{y∈Q} |KDE_X(y) − KDE_S(y)|` for the subset `S` given by
/// `subset` (dataset indices). Runs data points, the low-dimension grid with
/// refinement, and `budget` climbs in every dimension.
pub fn kde_error(
    spec: &KernelSpec,
    ds: &DataSet,
    subset: &[usize],
    budget: usize,
    seed: u64,
) -> Result<DiscrepancyReport> {
    let n = ds.len();
    if subset.is_empty() {
        return Err(Error::Target { target: 0, n });
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
        return Err(Error::param(format!("subset index {bad} out of range for n={n}")));
    }
    let points = PreparedPoints::new(*spec, ds)?;
    let target = WeightedSum { points: &points, idx: None, w: kde_weights(n, subset) };
    if n < 2 {
        let y = ds.point(0).to_vec();
        let v = target.value(&y);
        return Ok(DiscrepancyReport {
            sup_discrepancy: v,
            witness: y,
            evaluations: 1,
            method: SearchMethod::ExactCandidates,
        });
    }
    let qs = build_query_space(spec, ds)?;
    let all: Vec<usize> = (0..n).collect();
    Ok(search(&target, ds, &qs, &all, &SearchPlan { grid: true, climbs: budget, seed }))
}

/// `w_i = 1/n − (multiplicity of i in S)/|S|`.
pub(crate) fn kde_weights(n: usize, subset: &[usize]) -> Vec<f64> {
    let mut w = vec![1.0 / n as f64; n];
    let m = subset.len() as f64;
    for &i in subset {
        w[i] -= 1.0 / m;
    }
    w
}

/// `KDE_S(y) = (1/|S|) Σ_{i∈S} K(x_i, y)`.
pub fn kde(spec: &KernelSpec, ds: &DataSet, subset: &[usize], y: &[f64]) -> Result<f64> {
    check_query(spec, ds.dim(), y)?;
    if subset.is_empty() {
        return Err(Error::Target { target: 0, n: ds.len() });
    }
    let points = PreparedPoints::new(*spec, ds)?;
    let q = points.query(y);
    let w = vec![1.0 / subset.len() as f64; subset.len()];
    Ok(points.weighted_sum(subset, &w, &q))
}

struct Best {
    value: f64,
    point: Vec<f64>,
    method: SearchMethod,
}

impl Best {
    fn offer(&mut self, value: f64, point: &[f64], method: SearchMethod) {
        if value > self.value {
            self.value = value;
            self.point.clear();
            self.point.extend_from_slice(point);
            self.method = method;
        }
    }
}

pub(crate) struct SearchPlan {
    /// Grid over the query space (only applied in dimension ≤ 3).
    pub grid: bool,
    pub climbs: usize,
    pub seed: u64,
}

/// Search shared by discrepancy and KDE-error estimates.
///
/// Candidates are the data points `starts`, then the grid, then coordinate
/// ascent from the best few of those. These stages do not depend on
/// `climbs` or `seed`. Random climbs draw their starts one after another
/// from a single seeded stream, so a larger `climbs` searches a superset of
/// queries.
pub(crate) fn search(
    target: &WeightedSum<'_>,
    ds: &DataSet,
    qs: &QuerySpace,
    starts: &[usize],
    plan: &SearchPlan,
) -> DiscrepancyReport {
    let d = ds.dim();
    let mut evals: u64 = 0;
    let mut best = Best { value: f64::NEG_INFINITY, point: Vec::new(), method: SearchMethod::ExactCandidates };
    // Best few deterministic candidates, kept for refinement.
    let mut top: Vec<(f64, Vec<f64>)> = Vec::new();

    for &i in starts {
        let y = ds.point(i);
        let v = target.value(y);
        evals += 1;
        best.offer(v, y, SearchMethod::ExactCandidates);
        note_top(&mut top, v, y);
    }

    let step = climb_step(qs);
    if plan.grid && d <= GRID_MAX_DIM {
        for comp in grid_regions(qs, ds) {
            let h = grid_spacing(&comp.0, &comp.1, step);
            for_each_grid_point(&comp.0, &comp.1, h, |y| {
                let mut y = y.to_vec();
                qs.domain.project(&mut y);
                if qs.contains(&y) {
                    let v = target.value(&y);
                    evals += 1;
                    best.offer(v, &y, SearchMethod::Grid);
                    note_top(&mut top, v, &y);
                }
            });
        }
    }
    for (_, start) in std::mem::take(&mut top) {
        let (v, y, e) = climb(target, qs, start, step);
        evals += e;
        best.offer(v, &y, SearchMethod::Multistart);
    }

    if plan.climbs > 0 && !starts.is_empty() {
        let mut rng = prng(derive_seed(plan.seed, 0x5eed));
        let sigma = step * 2.0;
        for _ in 0..plan.climbs {
            let i = starts[rng.random_range(0..starts.len())];
            let mut y: Vec<f64> = ds
                .point(i)
                .iter()
                .map(|&c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            qs.domain.project(&mut y);
            if !qs.contains(&y) {
                y = ds.point(i).to_vec();
            }
            let (v, y, e) = climb(target, qs, y, step);
            evals += e;
            best.offer(v, &y, SearchMethod::Multistart);
        }
    }

    DiscrepancyReport { sup_discrepancy: best.value, witness: best.point, evaluations: evals, method: best.method }
}

fn note_top(top: &mut Vec<(f64, Vec<f64>)>, v: f64, p: &[f64]) {
    if top.len() < POLISH_COUNT || v > top[top.len() - 1].0 {
        let at = top.partition_point(|(tv, _)| *tv >= v);
        top.insert(at, (v, p.to_vec()));
        top.truncate(POLISH_COUNT);
    }
}

/// Initial climb step and grid spacing: `r/8`, capped on compact domains.
fn climb_step(qs: &QuerySpace) -> f64 {
    if qs.bounded {
        qs.radius / 8.0
    } else {
        (qs.radius / 8.0).min(1.0 / 16.0)
    }
}

/// Coordinate ascent from `start`: each sweep tries `±step` along every
/// coordinate and keeps improvements; a sweep without one halves the step.
/// At most [`CLIMB_ITERATIONS`] sweeps, fewer once the step is negligible.
fn climb(target: &WeightedSum<'_>, qs: &QuerySpace, start: Vec<f64>, step: f64) -> (f64, Vec<f64>, u64) {
    let mut cur = start;
    let mut val = target.value(&cur);
    let mut evals = 1;
    let floor = step * CLIMB_MIN_STEP;
    let mut step = step;
    let mut cand = cur.clone();
    for _ in 0..CLIMB_ITERATIONS {
        if step < floor {
            break;
        }
        let mut improved = false;
        for c in 0..cur.len() {
            for dir in [1.0, -1.0] {
                cand.copy_from_slice(&cur);
                cand[c] += dir * step;
                qs.domain.project(&mut cand);
                if !qs.contains(&cand) {
                    continue;
                }
                let v = target.value(&cand);
                evals += 1;
                if v > val {
                    val = v;
                    cur.copy_from_slice(&cand);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (val, cur, evals)
}

/// Bounding boxes covering the query space: one per component (data box
/// padded by `r`) when bounded, else the domain's box.
fn grid_regions(qs: &QuerySpace, ds: &DataSet) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = ds.dim();
    if !qs.bounded {
        let (lo, hi) = match qs.domain {
            Domain::Sphere => (-1.0, 1.0),
            _ => (0.0, 1.0),
        };
        return vec![(vec![lo; d], vec![hi; d])];
    }
    qs.components
        .iter()
        .map(|comp| {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for &i in comp {
                for (k, &c) in ds.point(i).iter().enumerate() {
                    lo[k] = lo[k].min(c - qs.radius);
                    hi[k] = hi[k].max(c + qs.radius);
                }
            }
            (lo, hi)
        })
        .collect()
}

fn grid_count(lo: &[f64], hi: &[f64], h: f64) -> f64 {
    lo.iter().zip(hi).map(|(l, u)| ((u - l) / h).ceil() + 1.0).product()
}

/// `base`, doubled until the box holds at most [`GRID_CAP`] grid points.
fn grid_spacing(lo: &[f64], hi: &[f64], base: f64) -> f64 {
    let mut h = base;
    while grid_count(lo, hi, h) > GRID_CAP as f64 {
        h *= 2.0;
    }
    h
}

/// Visits `lo + k·h` for every multi-index with `lo + k·h ≤ hi + h`, so every
/// point of the box is within `h√d/2` of a visited point.
fn for_each_grid_point(lo: &[f64], hi: &[f64], h: f64, mut f: impl FnMut(&[f64])) {
    let d = lo.len();
    let counts: Vec<usize> = lo.iter().zip(hi).map(|(l, u)| ((u - l) / h).ceil() as usize + 1).collect();
    let mut k = vec![0usize; d];
    let mut y = lo.to_vec();
    loop {
        for j in 0..d {
            y[j] = lo[j] + k[j] as f64 * h;
        }
        f(&y);
        let mut j = 0;
        loop {
            if j == d {
                return;
            }
            k[j] += 1;
            if k[j] < counts[j] {
                break;
            }
            k[j] = 0;
            j += 1;
        }
    }
}

/// Upper bound on `sup_y |Σ β(x) K(x, y)|` over all of ℝ^d, for the
/// Gaussian and Laplacian families in dimension ≤ 3.
///
/// The sum is `L`-Lipschitz with `L = Σ|β|·α·max|κ′|`, so a grid of spacing
/// `h` over boxes covering `Q` gives `max_grid + L·h·√d/2`; outside `Q` the
/// sum is at most `Σ|β|/n`. The spacing is halved until the Lipschitz slack
/// is at most 5% of the grid maximum or the evaluation cap is reached.
pub fn certified_upper_bound(spec: &KernelSpec, ds: &DataSet, coloring: &Coloring) -> Result<f64> {
    let lip = spec
        .lipschitz()
        .ok_or_else(|| Error::Unsupported(format!("no certified bound for {}", spec.family)))?;
    if ds.dim() > GRID_MAX_DIM {
        return Err(Error::Unsupported(format!("certified bound needs d <= 3, got {}", ds.dim())));
    }
    let n = ds.len();
    if n < 2 {
        return Ok(1.0);
    }
    let points = PreparedPoints::new(*spec, ds)?;
    let target = coloring_target(&points, coloring)?;
    let qs = build_query_space(spec, ds)?;
    let regions = grid_regions(&qs, ds);
    let l = target.abs_weight() * lip;
    let outside = target.abs_weight() / n as f64;
    let sqrt_d = (ds.dim() as f64).sqrt();
    let mut h = qs.radius / 8.0;
    let mut bound = f64::INFINITY;
    loop {
        let mut max = 0.0f64;
        for (lo, hi) in &regions {
            for_each_grid_point(lo, hi, h, |y| max = max.max(target.value(y)));
        }
        let slack = l * h * sqrt_d / 2.0;
        bound = bound.min(max + slack);
        let next: f64 = regions.iter().map(|(lo, hi)| grid_count(lo, hi, h / 2.0)).sum();
        if slack <= 0.05 * max || next > CERTIFY_EVAL_CAP as f64 {
            break;
        }
        h /= 2.0;
    }
    Ok(bound.max(outside))
}

/// Minimizes `max_q |Σ β(x) K(x, q)|` over all colorings with `β_1 = +1`.
///
/// Colorings are visited in lexicographic order of the sign vector (−1 before
/// +1) and the incumbent is replaced only on strict improvement, so ties go
/// to the lexicographically smallest vector.
pub fn exact_min_discrepancy(
    spec: &KernelSpec,
    ds: &DataSet,
    candidate_queries: &[Vec<f64>],
) -> Result<(Coloring, f64)> {
    let n = ds.len();
    if n > EXACT_MAX_N {
        return Err(Error::Size { n, max: EXACT_MAX_N });
    }
    if candidate_queries.is_empty() {
        return Err(Error::param("exact oracle needs at least one candidate query"));
    }
    let points = PreparedPoints::new(*spec, ds)?;
    let mut rows = Vec::with_capacity(candidate_queries.len());
    for y in candidate_queries {
        check_query(spec, ds.dim(), y)?;
        rows.push(points.cross_row(&points.query(y)));
    }
    let free = n - 1;
    let mut signs = vec![1.0f64; n];
    let mut best_val = f64::INFINITY;
    let mut best_mask = 0u32;
    for mask in 0u32..(1u32 << free) {
        for (k, s) in signs.iter_mut().enumerate().skip(1) {
            *s = if mask >> (free - k) & 1 == 1 { 1.0 } else { -1.0 };
        }
        let mut worst: f64 = 0.0;
        for row in &rows {
            let s: f64 = row.iter().zip(&signs).map(|(k, b)| k * b).sum();
            worst = worst.max(s.abs());
            if worst >= best_val {
                break;
            }
        }
        if worst < best_val {
            best_val = worst;
            best_mask = mask;
        }
    }
    let mut out = vec![1i8; n];
    for (k, s) in out.iter_mut().enumerate().skip(1) {
        *s = if best_mask >> (free - k) & 1 == 1 { 1 } else { -1 };
    }
    Ok((Coloring::new(out, 0, ColoringAlgorithm::Exhaustive)?, best_val))
}
