//! Kernel families with unit diagonal.
//!
//! | family        | domain   | K(x, y)                                  |
//! |---------------|----------|------------------------------------------|
//! | `gaussian`    | ℝ^d      | exp(−α²‖x−y‖²)                           |
//! | `laplacian`   | ℝ^d      | exp(−α‖x−y‖)                             |
//! | `exponential` | sphere   | exp(−α(1−⟨x,y⟩)) = exp(−(α/2)‖x−y‖²)     |
//! | `hellinger`   | simplex  | exp(−α Σ(√x_i − √y_i)²)                  |
//! | `js`          | simplex  | exp(−α (H((x+y)/2) − (H(x)+H(y))/2))     |
//!
//! All of them satisfy `K(x, x) = 1`, so the implicit feature vectors are
//! unit vectors and the kernel distance is `√(2 − 2K)`.
//!
//! Hellinger is evaluated through the square-root map onto the sphere, and
//! the exponential kernel through its squared-distance form, so that the
//! diagonal is exactly one.

use serde::{Deserialize, Serialize};

use crate::dataset::{DataSet, Domain, MEMBERSHIP_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Laplacian,
    Exponential,
    Hellinger,
    Js,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::Gaussian,
        KernelFamily::Laplacian,
        KernelFamily::Exponential,
        KernelFamily::Hellinger,
        KernelFamily::Js,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::Exponential => "exponential",
            KernelFamily::Hellinger => "hellinger",
            KernelFamily::Js => "js",
        }
    }

    /// The domain points must live in for this family.
    pub fn domain(self) -> Domain {
        match self {
            KernelFamily::Gaussian | KernelFamily::Laplacian => Domain::Euclidean,
            KernelFamily::Exponential => Domain::Sphere,
            KernelFamily::Hellinger | KernelFamily::Js => Domain::Simplex,
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown kernel family '{s}'")))
    }
}

/// Strictly decreasing radial profile κ with κ(0) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialProfile {
    /// κ(z) = e^{−z²}
    Gaussian,
    /// κ(z) = e^{−z}
    Laplacian,
}

impl RadialProfile {
    pub fn kappa(self, z: f64) -> f64 {
        self.ln_kappa(z).exp()
    }

    /// Closed-form inverse on (0, 1].
    pub fn kappa_inv(self, u: f64) -> f64 {
        self.kappa_inv_ln(u.ln())
    }

    /// ln κ(z). Round-trips exactly through [`Self::kappa_inv_ln`] even where
    /// κ(z) itself underflows.
    pub fn ln_kappa(self, z: f64) -> f64 {
        match self {
            RadialProfile::Gaussian => -z * z,
            RadialProfile::Laplacian => -z,
        }
    }

    pub fn kappa_inv_ln(self, ln_u: f64) -> f64 {
        let t = (-ln_u).max(0.0);
        match self {
            RadialProfile::Gaussian => t.sqrt(),
            RadialProfile::Laplacian => t,
        }
    }

    /// sup_z |κ'(z)|.
    pub fn max_slope(self) -> f64 {
        match self {
            // attained at z = 1/√2
            RadialProfile::Gaussian => (2.0 / std::f64::consts::E).sqrt(),
            RadialProfile::Laplacian => 1.0,
        }
    }
}

/// `K(x, y) = κ(scale · ‖x − y‖₂)` in the family's native coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radial {
    pub profile: RadialProfile,
    pub scale: f64,
}

/// A kernel family together with its bandwidth parameter `α` (bandwidth `1/α`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub alpha: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param(format!("alpha must be positive and finite, got {alpha}")));
        }
        Ok(KernelSpec { family, alpha })
    }

    pub fn domain(&self) -> Domain {
        self.family.domain()
    }

    /// Radial representation, when the family has one in its own coordinates.
    pub fn radial(&self) -> Option<Radial> {
        match self.family {
            KernelFamily::Gaussian => {
                Some(Radial { profile: RadialProfile::Gaussian, scale: self.alpha })
            }
            KernelFamily::Laplacian => {
                Some(Radial { profile: RadialProfile::Laplacian, scale: self.alpha })
            }
            KernelFamily::Exponential => {
                Some(Radial { profile: RadialProfile::Gaussian, scale: (self.alpha / 2.0).sqrt() })
            }
            KernelFamily::Hellinger | KernelFamily::Js => None,
        }
    }

    /// True for the families defined on all of ℝ^d through a radial profile.
    pub fn is_euclidean_radial(&self) -> bool {
        matches!(self.family, KernelFamily::Gaussian | KernelFamily::Laplacian)
    }

    /// Lipschitz constant of `y ↦ K(x, y)` for the ℝ^d families.
    pub fn lipschitz(&self) -> Option<f64> {
        if !self.is_euclidean_radial() {
            return None;
        }
        self.radial().map(|r| r.scale * r.profile.max_slope())
    }

    pub fn check_point(&self, p: &[f64]) -> Result<()> {
        check_membership(self.domain(), p).map_err(|message| Error::Domain { row: 0, message })
    }

    /// Checks every point of `ds` against the family domain.
    pub fn check_dataset(&self, ds: &DataSet) -> Result<()> {
        if ds.domain() == self.domain() || self.domain() == Domain::Euclidean {
            return Ok(());
        }
        for (row, p) in ds.points().enumerate() {
            check_membership(self.domain(), p).map_err(|message| Error::Domain { row, message })?;
        }
        Ok(())
    }

    /// `K(x, y)`.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Dimension { expected: x.len(), found: y.len() });
        }
        self.check_point(x)?;
        self.check_point(y)?;
        let fx = self.feature_coords(x);
        let fy = self.feature_coords(y);
        Ok(self.eval_prepared(&fx, self.aux(x), &fy, self.aux(y)))
    }

    /// `D_K(x, y) = √(2 − 2K(x, y))`.
    pub fn kernel_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let k = self.evaluate(x, y)?;
        Ok((2.0 - 2.0 * k).max(0.0).sqrt())
    }

    /// Distance beyond which `K ≤ 1/n`.
    ///
    /// Gaussian and Laplacian use `κ⁻¹(1/n)/α`. On the compact domains the
    /// whole domain is the query space, so the domain diameter is returned:
    /// 2 on the sphere, √2 (ℓ2) on the simplex for Hellinger, and 2 (the ℓ1
    /// diameter) for Jensen-Shannon.
    pub fn impact_radius(&self, n: usize) -> Result<f64> {
        if n < 2 {
            return Err(Error::param(format!("impact radius needs n >= 2, got {n}")));
        }
        Ok(match self.family {
            KernelFamily::Gaussian | KernelFamily::Laplacian => {
                let r = self.radial().expect("radial family");
                r.profile.kappa_inv_ln(-(n as f64).ln()) / r.scale
            }
            KernelFamily::Exponential => 2.0,
            KernelFamily::Hellinger => std::f64::consts::SQRT_2,
            KernelFamily::Js => 2.0,
        })
    }

    /// Per-point precomputation: the entropy for Jensen-Shannon, else 0.
    pub(crate) fn aux(&self, p: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Js => shannon_entropy(p),
            _ => 0.0,
        }
    }

    /// Coordinates the kernel formula is evaluated in (square roots for
    /// Hellinger, the point itself otherwise).
    pub(crate) fn feature_coords(&self, p: &[f64]) -> Vec<f64> {
        match self.family {
            KernelFamily::Hellinger => p.iter().map(|v| v.max(0.0).sqrt()).collect(),
            _ => p.to_vec(),
        }
    }

    /// Kernel on prepared coordinates; the single evaluation path used
    /// everywhere so results agree bit for bit.
    #[inline]
    pub(crate) fn eval_prepared(&self, x: &[f64], hx: f64, y: &[f64], hy: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-self.alpha * self.alpha * sq_dist(x, y)).exp(),
            KernelFamily::Laplacian => (-self.alpha * sq_dist(x, y).sqrt()).exp(),
            KernelFamily::Exponential => (-0.5 * self.alpha * sq_dist(x, y)).exp(),
            KernelFamily::Hellinger => (-self.alpha * sq_dist(x, y)).exp(),
            KernelFamily::Js => {
                let mid: f64 = x
                    .iter()
                    .zip(y)
                    .map(|(a, b)| entropy_term(0.5 * (a + b)))
                    .sum();
                let gap = (mid - 0.5 * (hx + hy)).max(0.0);
                (-self.alpha * gap).exp()
            }
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}(alpha={})", self.family, self.alpha)
    }
}

fn check_membership(domain: Domain, p: &[f64]) -> std::result::Result<(), String> {
    if let Some(j) = p.iter().position(|v| !v.is_finite()) {
        return Err(format!("coordinate {j} is not finite"));
    }
    match domain {
        Domain::Euclidean => Ok(()),
        Domain::Sphere => {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > MEMBERSHIP_TOL {
                Err(format!("norm {norm} is not 1"))
            } else {
                Ok(())
            }
        }
        Domain::Simplex => {
            if let Some(j) = p.iter().position(|&v| v < -MEMBERSHIP_TOL) {
                return Err(format!("coordinate {j} is negative"));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > MEMBERSHIP_TOL {
                Err(format!("coordinates sum to {sum}, not 1"))
            } else {
                Ok(())
            }
        }
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// The square-root map taking the simplex onto the unit sphere.
pub fn hellinger_to_exponential(x: &[f64]) -> Result<Vec<f64>> {
    check_membership(Domain::Simplex, x).map_err(|message| Error::Domain { row: 0, message })?;
    Ok(x.iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// `h(x) = −x ln x` with `h(0) = 0`.
#[inline]
pub fn entropy_term(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

/// Shannon entropy (natural log).
pub fn shannon_entropy(p: &[f64]) -> f64 {
    p.iter().map(|&v| entropy_term(v)).sum()
}

/// Jensen gap `H((x+y)/2) − (H(x)+H(y))/2`, the exponent of the JS kernel.
pub fn entropy_midpoint_gap(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), found: y.len() });
    }
    check_membership(Domain::Simplex, x).map_err(|message| Error::Domain { row: 0, message })?;
    check_membership(Domain::Simplex, y).map_err(|message| Error::Domain { row: 1, message })?;
    let mid: f64 = x.iter().zip(y).map(|(a, b)| entropy_term(0.5 * (a + b))).sum();
    Ok((mid - 0.5 * (shannon_entropy(x) + shannon_entropy(y))).max(0.0))
}

/// Points of a dataset prepared for repeated kernel evaluation.
#[derive(Debug, Clone)]
pub struct PreparedPoints {
    spec: KernelSpec,
    dim: usize,
    coords: Vec<f64>,
    aux: Vec<f64>,
}

/// A query point prepared against a [`PreparedPoints`].
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    coords: Vec<f64>,
    aux: f64,
}

impl PreparedPoints {
    pub fn new(spec: KernelSpec, ds: &DataSet) -> Result<Self> {
        spec.check_dataset(ds)?;
        let mut coords = Vec::with_capacity(ds.coords().len());
        let mut aux = Vec::with_capacity(ds.len());
        for p in ds.points() {
            coords.extend(spec.feature_coords(p));
            aux.push(spec.aux(p));
        }
        Ok(PreparedPoints { spec, dim: ds.dim(), coords, aux })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.aux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aux.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        self.spec.eval_prepared(self.row(i), self.aux[i], self.row(j), self.aux[j])
    }

    /// Prepares `y`, which must already lie in the kernel domain.
    pub fn query(&self, y: &[f64]) -> PreparedQuery {
        debug_assert_eq!(y.len(), self.dim);
        PreparedQuery { coords: self.spec.feature_coords(y), aux: self.spec.aux(y) }
    }

    #[inline]
    pub fn against(&self, i: usize, q: &PreparedQuery) -> f64 {
        self.spec.eval_prepared(self.row(i), self.aux[i], &q.coords, q.aux)
    }

    /// `Σ_i w_i K(x_{idx_i}, y)`.
    pub fn weighted_sum(&self, idx: &[usize], w: &[f64], q: &PreparedQuery) -> f64 {
        match self.sq_profile() {
            Some(g) => idx.iter().zip(w).map(|(&i, &wi)| wi * g(sq_dist(self.row(i), &q.coords))).sum(),
            None => idx.iter().zip(w).map(|(&i, &wi)| wi * self.against(i, q)).sum(),
        }
    }

    /// `Σ_i w_i K(x_i, y)` over every row, with `w.len() == self.len()`.
    ///
    /// Gives the same value as [`Self::weighted_sum`] with `idx = 0..n`; the
    /// distance loop is unrolled for dimensions 1 to 3.
    pub fn weighted_sum_all(&self, w: &[f64], q: &PreparedQuery) -> f64 {
        debug_assert_eq!(w.len(), self.len());
        let Some(g) = self.sq_profile() else {
            return (0..self.len()).zip(w).map(|(i, &wi)| wi * self.against(i, q)).sum();
        };
        let y = &q.coords;
        let c = &self.coords;
        match self.dim {
            1 => c.iter().zip(w).map(|(x, wi)| wi * g((x - y[0]) * (x - y[0]))).sum(),
            2 => c
                .chunks_exact(2)
                .zip(w)
                .map(|(x, wi)| {
                    let (a, b) = (x[0] - y[0], x[1] - y[1]);
                    wi * g(a * a + b * b)
                })
                .sum(),
            3 => c
                .chunks_exact(3)
                .zip(w)
                .map(|(x, wi)| {
                    let (a, b, e) = (x[0] - y[0], x[1] - y[1], x[2] - y[2]);
                    wi * g(a * a + b * b + e * e)
                })
                .sum(),
            _ => c.chunks_exact(self.dim).zip(w).map(|(x, wi)| wi * g(sq_dist(x, y))).sum(),
        }
    }

    /// The kernel as a function of the squared distance between prepared
    /// coordinates, for every family except Jensen-Shannon. Matches
    /// [`KernelSpec::eval_prepared`] operation for operation.
    fn sq_profile(&self) -> Option<impl Fn(f64) -> f64> {
        let a = self.spec.alpha;
        let (scale, root) = match self.spec.family {
            KernelFamily::Gaussian => (-a * a, false),
            KernelFamily::Laplacian => (-a, true),
            KernelFamily::Exponential => (-0.5 * a, false),
            KernelFamily::Hellinger => (-a, false),
            KernelFamily::Js => return None,
        };
        Some(move |d2: f64| if root { (scale * d2.sqrt()).exp() } else { (scale * d2).exp() })
    }

    /// `K(x_i, y)` for every prepared row.
    pub fn cross_row(&self, q: &PreparedQuery) -> Vec<f64> {
        (0..self.len()).map(|i| self.against(i, q)).collect()
    }

    /// Dense Gram matrix of the rows `idx`, row-major.
    pub fn gram(&self, idx: &[usize]) -> Vec<f64> {
        let m = idx.len();
        let mut g = vec![0.0; m * m];
        for a in 0..m {
            g[a * m + a] = 1.0;
            for b in 0..a {
                let v = self.pair(idx[a], idx[b]);
                g[a * m + b] = v;
                g[b * m + a] = v;
            }
        }
        g
    }
}
