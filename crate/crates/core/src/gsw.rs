//! Kernelized Gram-Schmidt walk.
//!
//! The walk colors `n` implicit unit vectors `φ(x_i)` that are only known
//! through their Gram matrix. It keeps a fractional coloring `z ∈ [−1, 1]^n`,
//! starting at zero, and repeatedly moves it along a direction `u` with
//! `u_p = 1` on the pivot and, on the other alive coordinates, the
//! minimizer of `‖Σ u_i φ(x_i)‖²`. Each step goes to one of the two faces of
//! the cube hit along `±u`, with probabilities that make it a martingale
//! increment, so at least one coordinate freezes per step.
//!
//! The pivot is the alive index that comes last in a random permutation drawn
//! once at the start. Keeping the Cholesky factor of the alive Gram block in
//! that same order puts the pivot in the last row, so the least-squares
//! direction is one triangular solve, and freezing a coordinate is a row/column
//! deletion followed by a rank-one update of the trailing block. The whole
//! walk costs `O(n³)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::PreparedPoints;
use crate::rng::{derive_seed, prng};

/// Tikhonov regularization per point on the Gram diagonal.
pub const RIDGE_PER_POINT: f64 = 1e-10;
/// Fractional coordinates this close to ±1 are frozen.
pub const FREEZE_TOL: f64 = 1e-12;
/// Tolerated departure from symmetry / unit diagonal in [`GramOracle::from_matrix`].
pub const GRAM_TOL: f64 = 1e-12;

/// Inner products `⟨φ(x_i), φ(x_j)⟩ = K(x_i, x_j)` backed by a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramOracle {
    n: usize,
    g: Vec<f64>,
}

impl GramOracle {
    /// Wraps a row-major `n × n` matrix after checking symmetry and the unit diagonal.
    pub fn from_matrix(n: usize, g: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("Gram matrix must be at least 1x1"));
        }
        if g.len() != n * n {
            return Err(Error::Dimension { expected: n * n, found: g.len() });
        }
        for i in 0..n {
            if (g[i * n + i] - 1.0).abs() > GRAM_TOL {
                return Err(Error::param(format!("Gram diagonal entry {i} is {}", g[i * n + i])));
            }
            for j in 0..i {
                let (a, b) = (g[i * n + j], g[j * n + i]);
                if !a.is_finite() || (a - b).abs() > GRAM_TOL {
                    return Err(Error::param(format!("Gram matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(GramOracle { n, g })
    }

    /// Gram matrix of the prepared rows `idx`.
    pub fn from_points(points: &PreparedPoints, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::param("Gram matrix must be at least 1x1"));
        }
        Ok(GramOracle { n: idx.len(), g: points.gram(idx) })
    }

    /// Gram matrix of every prepared row.
    pub fn from_all(points: &PreparedPoints) -> Result<Self> {
        let idx: Vec<usize> = (0..points.len()).collect();
        Self::from_points(points, &idx)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn inner(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColoringAlgorithm {
    Gsw,
    Random,
    Exhaustive,
}

/// A ±1 assignment over dataset indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    signs: Vec<i8>,
    pub seed: u64,
    pub algorithm: ColoringAlgorithm,
}

impl Coloring {
    pub fn new(signs: Vec<i8>, seed: u64, algorithm: ColoringAlgorithm) -> Result<Self> {
        if let Some(i) = signs.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::param(format!("sign {i} is {}, not ±1", signs[i])));
        }
        Ok(Coloring { signs, seed, algorithm })
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.signs.iter().map(|&s| s as f64).collect()
    }

    pub fn plus_count(&self) -> usize {
        self.signs.iter().filter(|&&s| s > 0).count()
    }

    pub fn negated(&self) -> Coloring {
        Coloring {
            signs: self.signs.iter().map(|s| -s).collect(),
            seed: self.seed,
            algorithm: self.algorithm,
        }
    }

    pub(crate) fn signs_mut(&mut self) -> &mut [i8] {
        &mut self.signs
    }
}

/// Uniformly random signs.
pub fn random_coloring(n: usize, seed: u64) -> Coloring {
    let mut rng = prng(seed);
    let signs = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    Coloring { signs, seed, algorithm: ColoringAlgorithm::Random }
}

/// Counters from one walk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WalkStats {
    pub steps: usize,
    pub pivot_freezes: usize,
    /// Steps skipped because both step lengths vanished.
    pub degenerate_steps: usize,
}

/// Runs the walk and returns the coloring.
pub fn gram_schmidt_walk(oracle: &GramOracle, seed: u64) -> Result<Coloring> {
    gram_schmidt_walk_with_stats(oracle, seed).map(|(c, _)| c)
}

pub fn gram_schmidt_walk_with_stats(oracle: &GramOracle, seed: u64) -> Result<(Coloring, WalkStats)> {
    let n = oracle.n();
    let mut rng = prng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut factor = UpperFactor::cholesky(oracle, &order, RIDGE_PER_POINT * n as f64)?;
    let mut z = vec![0.0f64; n];
    let mut signs = vec![0i8; n];
    let mut stats = WalkStats::default();
    let mut u = vec![0.0f64; n];
    let mut frozen = Vec::new();

    while factor.k > 0 {
        let k = factor.k;
        factor.pivot_direction(&mut u[..k]);
        if u[..k].iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics("non-finite update direction".into()));
        }

        // Largest steps along +u and −u that keep z in the cube.
        let (mut d_plus, mut d_minus) = (f64::INFINITY, f64::INFINITY);
        let (mut hit_plus, mut hit_minus) = (k - 1, k - 1);
        for i in 0..k {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            let zi = z[i];
            let (a, b) = if ui > 0.0 {
                ((1.0 - zi) / ui, (1.0 + zi) / ui)
            } else {
                ((-1.0 - zi) / ui, (zi - 1.0) / ui)
            };
            if a < d_plus {
                d_plus = a;
                hit_plus = i;
            }
            if b < d_minus {
                d_minus = b;
                hit_minus = i;
            }
        }
        let (d_plus, d_minus) = (d_plus.max(0.0), d_minus.max(0.0));

        frozen.clear();
        if d_plus + d_minus > 0.0 && (d_plus + d_minus).is_finite() {
            let take_plus = rng.random::<f64>() < d_minus / (d_plus + d_minus);
            let (delta, hit) = if take_plus { (d_plus, hit_plus) } else { (-d_minus, hit_minus) };
            for i in 0..k {
                z[i] += delta * u[i];
            }
            z[hit] = if z[hit] > 0.0 { 1.0 } else { -1.0 };
            stats.steps += 1;
        } else {
            // Pivot already on the boundary: freeze it without a step.
            let p = k - 1;
            z[p] = if z[p] > 0.0 {
                1.0
            } else if z[p] < 0.0 {
                -1.0
            } else if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            };
            stats.degenerate_steps += 1;
        }
        for (i, zi) in z[..k].iter_mut().enumerate() {
            if zi.abs() >= 1.0 - FREEZE_TOL {
                *zi = zi.signum();
                frozen.push(i);
            }
        }
        // Highest positions first so earlier positions stay valid.
        for &pos in frozen.iter().rev() {
            if pos == factor.k - 1 {
                stats.pivot_freezes += 1;
            }
            signs[order[pos]] = z[pos] as i8;
            z.remove(pos);
            order.remove(pos);
            factor.delete(pos);
        }
    }

    Ok((Coloring { signs, seed, algorithm: ColoringAlgorithm::Gsw }, stats))
}

/// Upper-triangular `R` with `RᵀR = G[order, order] + λI`, stored row-major
/// with a fixed row stride so deletions only shuffle memory in place.
struct UpperFactor {
    stride: usize,
    k: usize,
    r: Vec<f64>,
}

impl UpperFactor {
    fn cholesky(oracle: &GramOracle, order: &[usize], ridge: f64) -> Result<Self> {
        let n = order.len();
        let mut r = vec![0.0f64; n * n];
        // Lower factor L row by row (dot-product form), transposed at the end.
        for i in 0..n {
            let gi = order[i];
            for j in 0..=i {
                let gj = order[j];
                let dot = dot(&r[i * n..i * n + j], &r[j * n..j * n + j]);
                if i == j {
                    let d = oracle.inner(gi, gi) + ridge - dot;
                    if !d.is_finite() || d <= 0.0 {
                        return Err(Error::Numerics(format!(
                            "Cholesky breakdown at pivot {i} (residual {d:e})"
                        )));
                    }
                    r[i * n + i] = d.sqrt();
                } else {
                    r[i * n + j] = (oracle.inner(gi, gj) - dot) / r[j * n + j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                r[j * n + i] = r[i * n + j];
                r[i * n + j] = 0.0;
            }
        }
        Ok(UpperFactor { stride: n, k: n, r })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.stride + j]
    }

    /// Writes the update direction for the pivot in the last position:
    /// `u_p = 1` and `u_B = −R_B⁻¹ r`, where `r` is the pivot column above
    /// the diagonal. This solves `G_BB u_B = −G_Bp`.
    fn pivot_direction(&self, u: &mut [f64]) {
        let k = self.k;
        let b = k - 1;
        // Back substitution for w = R_B⁻¹ r, stored in u and negated at the end.
        for i in (0..b).rev() {
            let row = &self.r[i * self.stride..i * self.stride + b];
            let acc = self.at(i, b) - dot(&row[i + 1..b], &u[i + 1..b]);
            u[i] = acc / row[i];
        }
        u[..b].iter_mut().for_each(|v| *v = -*v);
        u[b] = 1.0;
    }

    /// Removes position `j`: drops its row and column and folds the removed
    /// row into the trailing block with a rank-one Cholesky update.
    fn delete(&mut self, j: usize) {
        let k = self.k;
        let s = self.stride;
        let mut x: Vec<f64> = self.r[j * s + j + 1..j * s + k].to_vec();
        for i in 0..j {
            self.r.copy_within(i * s + j + 1..i * s + k, i * s + j);
        }
        for i in j + 1..k {
            self.r.copy_within(i * s + i..i * s + k, (i - 1) * s + (i - 1));
        }
        self.k = k - 1;
        let m = self.k - j;
        for t in 0..m {
            let xt = x[t];
            if xt == 0.0 {
                continue;
            }
            let row = (j + t) * s + j;
            let d = self.r[row + t];
            let rr = d.hypot(xt);
            let c = rr / d;
            let inv_c = d / rr;
            let sn = xt / d;
            self.r[row + t] = rr;
            let tail = &mut self.r[row + t + 1..row + m];
            for (rv, xv) in tail.iter_mut().zip(x[t + 1..m].iter_mut()) {
                let v = (*rv + sn * *xv) * inv_c;
                *rv = v;
                *xv = c * *xv - sn * v;
            }
        }
    }
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `‖Σ β_i φ(x_i)‖ = √(βᵀGβ)`.
pub fn signed_sum_norm(oracle: &GramOracle, coloring: &Coloring) -> Result<f64> {
    let n = oracle.n();
    if coloring.len() != n {
        return Err(Error::Dimension { expected: n, found: coloring.len() });
    }
    let b = coloring.as_f64();
    let mut q = 0.0;
    for i in 0..n {
        let row = &oracle.matrix()[i * n..(i + 1) * n];
        q += b[i] * row.iter().zip(&b).map(|(g, bj)| g * bj).sum::<f64>();
    }
    if q < -1e-9 {
        return Err(Error::Numerics(format!("negative quadratic form {q:e}")));
    }
    Ok(q.max(0.0).sqrt())
}

/// Tail levels at which the subgaussian fit is taken.
pub const TAIL_LEVELS: [f64; 3] = [1.0, 2.0, 3.0];

/// Smallest `c` with `P̂[|X| ≥ t] ≤ 2exp(−t²/c²)` at every `t` in [`TAIL_LEVELS`].
pub fn fit_tail_constant(samples: &[f64]) -> f64 {
    let runs = samples.len() as f64;
    TAIL_LEVELS
        .iter()
        .map(|&t| {
            let hits = samples.iter().filter(|s| s.abs() >= t).count();
            if hits == 0 {
                0.0
            } else {
                let p = hits as f64 / runs;
                t / (2.0 / p).ln().sqrt()
            }
        })
        .fold(0.0, f64::max)
}

/// Runs the walk `runs` times and fits the tail constant of
/// `Σ_y = Σ β_i K(x_i, y)` for each query row; returns the worst row's constant.
pub fn subgaussian_diagnostic(
    oracle: &GramOracle,
    query_rows: &[Vec<f64>],
    runs: usize,
    seed: u64,
) -> Result<f64> {
    if runs < 100 {
        return Err(Error::param(format!("subgaussian diagnostic needs >= 100 runs, got {runs}")));
    }
    if let Some(row) = query_rows.iter().find(|r| r.len() != oracle.n()) {
        return Err(Error::Dimension { expected: oracle.n(), found: row.len() });
    }
    let mut sums = vec![Vec::with_capacity(runs); query_rows.len()];
    for run in 0..runs {
        let beta = gram_schmidt_walk(oracle, derive_seed(seed, run as u64))?.as_f64();
        for (row, acc) in query_rows.iter().zip(sums.iter_mut()) {
            acc.push(row.iter().zip(&beta).map(|(k, b)| k * b).sum());
        }
    }
    Ok(sums.iter().map(|s| fit_tail_constant(s)).fold(0.0, f64::max))
}
