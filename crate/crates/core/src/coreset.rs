//! Coresets by repeated halving.
//!
//! Each level colors the surviving points with the Gram-Schmidt walk,
//! balances the two color classes and keeps the `+1` side. For a balanced
//! coloring `β` of `X` with kept side `X⁺`,
//! `KDE_X(y) − KDE_{X⁺}(y) = −(1/|X|) Σ β(x) K(x, y)`, so the error added by a
//! level is the level's sup discrepancy divided by its size. The partitioned
//! variant colors each cell of a packing of the data independently and
//! resamples cells whose local discrepancy is too large.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::DataSet;
use crate::discrepancy::{
    build_query_space, search, sup_discrepancy, SearchMethod, SearchPlan, WeightedSum,
};
use crate::error::{Error, Result};
use crate::gsw::{gram_schmidt_walk, Coloring, ColoringAlgorithm, GramOracle};
use crate::kernels::{sq_dist, KernelSpec, PreparedPoints};
use crate::rng::{derive_seed, prng, Prng};

const STREAM_WALK: u64 = 1;
const STREAM_REBALANCE: u64 = 2;
const STREAM_SEARCH: u64 = 3;
const STREAM_PARTITION: u64 = 4;
const STREAM_CELLS: u64 = 5;

/// Cells whose centers lie within this many radii count as neighbors when
/// a cell's coloring is checked.
pub const NEIGHBOR_RADII: f64 = 3.0;

/// One halving step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub n_before: usize,
    /// Estimated sup discrepancy of the balanced coloring.
    pub sup_discrepancy: f64,
    pub witness: Vec<f64>,
    pub rebalance_flips: usize,
    /// The walk's coloring was negated so that `+1` was the larger side.
    pub negated: bool,
    /// Contribution to the error estimate: `f/n` for even `n`, and
    /// `(f + 1)/(n + 1)` for odd `n`, where the kept side has `(n+1)/2` points.
    pub error_term: f64,
    pub method: SearchMethod,
    pub evaluations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<RejectionStats>,
}

/// Per-level bookkeeping of the partitioned builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub threshold: f64,
    pub cells: usize,
    /// Walk runs used per cell.
    pub rounds: Vec<usize>,
    /// Cells where no run met the threshold; the best run was kept.
    pub exhausted_cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetResult {
    pub n: usize,
    pub indices: Vec<usize>,
    pub levels: Vec<LevelRecord>,
    pub error_estimate: f64,
    pub config: RunConfig,
}

/// Level error term for a balanced coloring of `n` points with sup
/// discrepancy `f`.
pub fn level_error_term(n: usize, f: f64) -> f64 {
    if n.is_multiple_of(2) {
        f / n as f64
    } else {
        (f + 1.0) / (n as f64 + 1.0)
    }
}

/// Makes `+1` the larger class (negating if needed, which leaves every
/// discrepancy unchanged), then flips uniformly chosen `+1` signs until the
/// `+1` class has exactly `⌈n/2⌉` members. Returns the flip count and
/// whether the coloring was negated.
pub fn rebalance(coloring: &mut Coloring, rng: &mut Prng) -> (usize, bool) {
    let n = coloring.len();
    let mut plus = coloring.plus_count();
    let negated = 2 * plus < n;
    if negated {
        coloring.signs_mut().iter_mut().for_each(|s| *s = -*s);
        plus = n - plus;
    }
    let keep = n.div_ceil(2);
    let mut flips = 0;
    while plus > keep {
        let i = rng.random_range(0..n);
        if coloring.signs()[i] == 1 {
            coloring.signs_mut()[i] = -1;
            plus -= 1;
            flips += 1;
        }
    }
    (flips, negated)
}

fn finish_level(
    spec: &KernelSpec,
    ds: &DataSet,
    mut coloring: Coloring,
    seed: u64,
    query_budget: usize,
    rejection: Option<RejectionStats>,
) -> Result<(Vec<usize>, LevelRecord)> {
    let n = ds.len();
    let mut rng = prng(derive_seed(seed, STREAM_REBALANCE));
    let (flips, negated) = rebalance(&mut coloring, &mut rng);
    let qs = build_query_space(spec, ds)?;
    let rep = sup_discrepancy(spec, ds, &coloring, &qs, query_budget, derive_seed(seed, STREAM_SEARCH))?;
    let kept: Vec<usize> = (0..n).filter(|&i| coloring.signs()[i] == 1).collect();
    let record = LevelRecord {
        n_before: n,
        sup_discrepancy: rep.sup_discrepancy,
        witness: rep.witness,
        rebalance_flips: flips,
        negated,
        error_term: level_error_term(n, rep.sup_discrepancy),
        method: rep.method,
        evaluations: rep.evaluations,
        rejection,
    };
    Ok((kept, record))
}

/// One flat halving step; returns the kept positions (ascending) in `ds`.
pub fn halve_once(
    spec: &KernelSpec,
    ds: &DataSet,
    seed: u64,
    query_budget: usize,
) -> Result<(Vec<usize>, LevelRecord)> {
    if ds.len() < 2 {
        return Err(Error::param("halving needs at least 2 points"));
    }
    let points = PreparedPoints::new(*spec, ds)?;
    let oracle = GramOracle::from_all(&points)?;
    let coloring = gram_schmidt_walk(&oracle, derive_seed(seed, STREAM_WALK))?;
    finish_level(spec, ds, coloring, seed, query_budget, None)
}

/// Halves until the target size or the error budget is reached.
///
/// With `target_size = m`, levels continue while the next size `⌈n/2⌉` is
/// still at least `m`, so the result is the smallest reachable size ≥ `m`.
/// With `epsilon`, a level is kept only if the accumulated estimate stays
/// at most `epsilon`.
pub fn build_coreset(ds: &DataSet, config: &RunConfig) -> Result<CoresetResult> {
    config.validate()?;
    let spec = config.kernel()?;
    spec.check_dataset(ds)?;
    let n = ds.len();
    if let Some(m) = config.target_size {
        if m > n {
            return Err(Error::Target { target: m, n });
        }
    }
    let mut current: Vec<usize> = (0..n).collect();
    let mut levels: Vec<LevelRecord> = Vec::new();
    let mut estimate = 0.0;
    while current.len() >= 2 {
        if let Some(m) = config.target_size {
            if current.len().div_ceil(2) < m {
                break;
            }
        }
        let sub = ds.subset(&current);
        let level_seed = derive_seed(config.seed, levels.len() as u64);
        let (kept, record) = if config.partitioned {
            let partition = build_partition(&spec, &sub, derive_seed(level_seed, STREAM_PARTITION))?;
            halve_partitioned(&spec, &sub, &partition, config, level_seed)?
        } else {
            halve_once(&spec, &sub, level_seed, config.query_budget)?
        };
        if let Some(eps) = config.epsilon {
            if estimate + record.error_term > eps {
                break;
            }
        }
        estimate += record.error_term;
        current = kept.iter().map(|&k| current[k]).collect();
        levels.push(record);
    }
    Ok(CoresetResult { n, indices: current, levels, error_estimate: estimate, config: config.clone() })
}

/// Packing of the data by impact-radius balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    /// Center dataset indices, ascending.
    pub center_indices: Vec<usize>,
    /// Cell (position in `center_indices`) of every point.
    pub assignment: Vec<usize>,
    pub cell_radius: f64,
}

impl CellPartition {
    pub fn num_cells(&self) -> usize {
        self.center_indices.len()
    }

    /// Members of each cell, ascending.
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.num_cells()];
        for (i, &c) in self.assignment.iter().enumerate() {
            cells[c].push(i);
        }
        cells
    }

    /// Checks center separation and the cover radius.
    pub fn verify(&self, ds: &DataSet) -> Result<()> {
        if self.assignment.iter().any(|&c| c >= self.num_cells()) {
            return Err(Error::param("partition assigns a point to a missing cell"));
        }
        let r2 = self.cell_radius * self.cell_radius;
        for (a, &ca) in self.center_indices.iter().enumerate() {
            for &cb in &self.center_indices[..a] {
                if sq_dist(ds.point(ca), ds.point(cb)) < r2 {
                    return Err(Error::param(format!("centers {ca} and {cb} closer than the radius")));
                }
            }
        }
        for (i, &c) in self.assignment.iter().enumerate() {
            if sq_dist(ds.point(i), ds.point(self.center_indices[c])) > r2 {
                return Err(Error::param(format!("point {i} farther than the radius from its center")));
            }
        }
        Ok(())
    }
}

/// Greedy maximal packing in a seeded random order: a point becomes a
/// center if it is at least `r_K(n)` from every accepted center. Points go
/// to their nearest center, ties to the lowest center index.
pub fn build_partition(spec: &KernelSpec, ds: &DataSet, seed: u64) -> Result<CellPartition> {
    if !spec.is_euclidean_radial() {
        return Err(Error::Unsupported(format!("cell partition needs a radial kernel on R^d, got {}", spec.family)));
    }
    let n = ds.len();
    if n == 1 {
        return Ok(CellPartition { center_indices: vec![0], assignment: vec![0], cell_radius: 0.0 });
    }
    let r = spec.impact_radius(n)?;
    let r2 = r * r;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut prng(seed));
    let mut centers: Vec<usize> = Vec::new();
    for &i in &order {
        if centers.iter().all(|&c| sq_dist(ds.point(i), ds.point(c)) >= r2) {
            centers.push(i);
        }
    }
    centers.sort_unstable();
    let assignment = (0..n)
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for (k, &c) in centers.iter().enumerate() {
                let d = sq_dist(ds.point(i), ds.point(c));
                if d < best.0 {
                    best = (d, k);
                }
            }
            best.1
        })
        .collect();
    Ok(CellPartition { center_indices: centers, assignment, cell_radius: r })
}

/// Rejection threshold `c·√(d·ln κ⁻¹(1/n) + 1)`, with the logarithm clamped at 0.
pub fn rejection_threshold(spec: &KernelSpec, n: usize, d: usize, constant: f64) -> Result<f64> {
    let radial = spec
        .radial()
        .ok_or_else(|| Error::Unsupported(format!("no radial profile for {}", spec.family)))?;
    let z = radial.profile.kappa_inv_ln(-(n as f64).ln());
    Ok(constant * (d as f64 * z.ln().max(0.0) + 1.0).sqrt())
}

/// One partitioned halving step.
///
/// Each cell is colored on its own Gram matrix. The coloring's discrepancy
/// is estimated at the data points of the cell and of the cells whose
/// centers are within `3r`, refined by coordinate ascent; if it exceeds the
/// threshold the walk is rerun with a fresh seed, up to
/// `max_rejection_rounds` runs, after which the best run is kept and the
/// cell is reported as exhausted. The cell colorings are concatenated and
/// finished as in [`halve_once`].
pub fn halve_partitioned(
    spec: &KernelSpec,
    ds: &DataSet,
    partition: &CellPartition,
    config: &RunConfig,
    seed: u64,
) -> Result<(Vec<usize>, LevelRecord)> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::param("halving needs at least 2 points"));
    }
    if partition.assignment.len() != n {
        return Err(Error::Dimension { expected: n, found: partition.assignment.len() });
    }
    partition.verify(ds)?;
    let threshold = rejection_threshold(spec, n, ds.dim(), config.threshold_constant)?;
    let points = PreparedPoints::new(*spec, ds)?;
    let qs = build_query_space(spec, ds)?;
    let cells = partition.cells();
    let horizon = (NEIGHBOR_RADII * partition.cell_radius).powi(2);
    let mut signs = vec![0i8; n];
    let mut rounds = Vec::with_capacity(cells.len());
    let mut exhausted = Vec::new();

    for (c, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            rounds.push(0);
            continue;
        }
        let center = ds.point(partition.center_indices[c]);
        let mut neighborhood: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter(|(k, _)| sq_dist(center, ds.point(partition.center_indices[*k])) <= horizon)
            .flat_map(|(_, members)| members.iter().copied())
            .collect();
        neighborhood.sort_unstable();

        let oracle = GramOracle::from_points(&points, cell)?;
        let cell_seed = derive_seed(derive_seed(seed, STREAM_CELLS), c as u64);
        let mut best: Option<(f64, Coloring)> = None;
        let mut used = 0;
        let mut accepted = false;
        for round in 0..config.max_rejection_rounds {
            let coloring = gram_schmidt_walk(&oracle, derive_seed(cell_seed, round as u64))?;
            let target = WeightedSum { points: &points, idx: Some(cell.clone()), w: coloring.as_f64() };
            let plan = SearchPlan { grid: false, climbs: 0, seed: 0 };
            let value = search(&target, ds, &qs, &neighborhood, &plan).sup_discrepancy;
            used = round + 1;
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, coloring));
            }
            if value <= threshold {
                accepted = true;
                break;
            }
        }
        if !accepted {
            exhausted.push(c);
        }
        rounds.push(used);
        let (_, coloring) = best.expect("at least one round");
        for (&i, &s) in cell.iter().zip(coloring.signs()) {
            signs[i] = s;
        }
    }

    let coloring = Coloring::new(signs, seed, ColoringAlgorithm::Gsw)?;
    let stats = RejectionStats { threshold, cells: cells.len(), rounds, exhausted_cells: exhausted };
    finish_level(spec, ds, coloring, seed, config.query_budget, Some(stats))
}

/// `m` indices drawn uniformly without replacement, ascending.
pub fn uniform_sampling_baseline(ds: &DataSet, m: usize, seed: u64) -> Result<Vec<usize>> {
    let n = ds.len();
    if m == 0 || m > n {
        return Err(Error::Target { target: m, n });
    }
    let mut idx = sample(&mut prng(seed), n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}
