//! Discretized index spaces, covariance kernels and their projections and
//! contractions.
//!
//! A kernel on an `m`-point grid is stored as the `m×m` matrix
//! `R[i][j] = R(y_i, y_j)`. Integrals against the base measure become
//! weighted sums with the grid's quadrature weights `μ`, so the contraction
//! `[Φ⊗₍₂₎Ψ](y₁,y₂) = ∫ Φ(y₁,x) Ψ(y₂,x) μ(dx)` is `Φ · diag(μ) · Ψᵀ`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{check_action, GroupAction, Irrep};

/// Relative tolerance for positive semidefiniteness: `λ_min ≥ −PSD_REL_TOL·λ_max`.
pub const PSD_REL_TOL: f64 = 1e-8;
/// Symmetry tolerance, relative to the largest entry.
const SYMMETRY_TOL: f64 = 1e-12;

/// A discretized parameter set with quadrature weights and an optional
/// group action.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSpace {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    action: Option<GroupAction>,
    factors: Vec<Arc<IndexSpace>>,
}

impl IndexSpace {
    /// Generic constructor; checks weights and, if present, the action.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, action: Option<GroupAction>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("index space needs at least one point".into()));
        }
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch {
                what: "weights",
                expected: points.len(),
                found: weights.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("points must share a positive dimension".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument("quadrature weights must be nonnegative".into()));
        }
        let space = Self {
            dim,
            points,
            weights,
            action: None,
            factors: Vec::new(),
        };
        match action {
            Some(a) => space.with_action(a),
            None => Ok(space),
        }
    }

    /// Midpoint grid `t_i = (i+½)/n` on [0,1] with weights `1/n`.
    pub fn interval(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid size must be positive".into()));
        }
        let h = 1.0 / n as f64;
        let points = (0..n).map(|i| vec![(i as f64 + 0.5) * h]).collect();
        Self::new(points, vec![h; n], None)
    }

    /// Midpoint grid with the ℤ/2ℤ reversal `t ↦ 1−t` bound.
    pub fn interval_with_reversal(n: usize) -> Result<Self> {
        Self::interval(n)?.with_action(GroupAction::reversal(n))
    }

    /// Binds an action after checking the action axioms and weight invariance.
    pub fn with_action(mut self, action: GroupAction) -> Result<Self> {
        if action.space_size() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "action space size",
                expected: self.len(),
                found: action.space_size(),
            });
        }
        let report = check_action(&action, &self.weights, crate::DEFAULT_TOL)?;
        if !report.passed {
            return Err(Error::InvalidArgument(format!(
                "action check failed: {} axiom, {} weight violations",
                report.axiom_violations.len(),
                report.weight_violations.len()
            )));
        }
        self.action = Some(action);
        Ok(self)
    }

    /// Cartesian product of grids with product weights. Point `(i1, i2, …)`
    /// is stored at the row-major index. When `require_action` is set every
    /// factor must carry an action and the componentwise product action is bound.
    pub fn product(grids: &[Arc<IndexSpace>], require_action: bool) -> Result<Self> {
        let (first, rest) = grids
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("product needs at least one factor".into()))?;
        if require_action {
            if let Some(i) = grids.iter().position(|g| g.action.is_none()) {
                return Err(Error::InvalidArgument(format!("factor {i} has no action")));
            }
        }
        let mut points = first.points.clone();
        let mut weights = first.weights.clone();
        let mut action = first.action.clone();
        for g in rest {
            let mut p = Vec::with_capacity(points.len() * g.len());
            let mut w = Vec::with_capacity(points.len() * g.len());
            for (a, wa) in points.iter().zip(&weights) {
                for (b, wb) in g.points.iter().zip(&g.weights) {
                    p.push(a.iter().chain(b).copied().collect());
                    w.push(wa * wb);
                }
            }
            points = p;
            weights = w;
            action = match (action, &g.action) {
                (Some(x), Some(y)) => Some(GroupAction::product(&x, y)),
                _ => None,
            };
        }
        let mut space = Self::new(points, weights, None)?;
        if let Some(a) = action {
            space = space.with_action(a)?;
        }
        space.factors = grids.iter().flat_map(|g| g.factor_list()).collect();
        Ok(space)
    }

    fn factor_list(self: &Arc<Self>) -> Vec<Arc<IndexSpace>> {
        if self.factors.is_empty() {
            vec![Arc::clone(self)]
        } else {
            self.factors.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn action(&self) -> Option<&GroupAction> {
        self.action.as_ref()
    }

    pub fn require_action(&self) -> Result<&GroupAction> {
        self.action.as_ref().ok_or(Error::MissingAction)
    }

    /// One-dimensional factors of a product grid; empty for non-product grids.
    pub fn factors(&self) -> &[Arc<IndexSpace>] {
        &self.factors
    }

    /// Compensated (Neumaier) sum of the weights, correctly rounded for
    /// uniform grids.
    pub fn total_mass(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &w in &self.weights {
            let t = sum + w;
            comp += if sum.abs() >= w.abs() { (sum - t) + w } else { (w - t) + sum };
            sum = t;
        }
        sum + comp
    }

    /// `⟨a, b⟩_μ = Σ a_i b_i μ_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| x * y * w)
            .sum()
    }
}

/// Closed-form kernels shipped with the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKernel {
    /// Brownian bridge `s∧t − st`.
    Bridge,
    /// Compensated bridge `s∧t − (s+t)/2 + (s−t)²/2 + 1/12`.
    Watson,
    /// Tied-down Brownian sheet, product of two bridge kernels.
    SheetTied,
    /// Compensated sheet, product of two Watson kernels.
    SheetCompensated,
    /// Stationary torus kernel `Π_j k(t_j − s_j)` with `k(u) = (ū−½)²/2 − 1/24`.
    TorusWatson,
}

impl BuiltinKernel {
    pub const ALL: [BuiltinKernel; 5] = [
        Self::Bridge,
        Self::Watson,
        Self::SheetTied,
        Self::SheetCompensated,
        Self::TorusWatson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bridge => "bridge",
            Self::Watson => "watson",
            Self::SheetTied => "sheet_tied",
            Self::SheetCompensated => "sheet_compensated",
            Self::TorusWatson => "torus_watson",
        }
    }

    /// Required point dimension, if fixed.
    fn required_dim(self) -> Option<usize> {
        match self {
            Self::Bridge | Self::Watson => Some(1),
            Self::SheetTied | Self::SheetCompensated => Some(2),
            Self::TorusWatson => None,
        }
    }

    pub fn eval(self, s: &[f64], t: &[f64]) -> f64 {
        match self {
            Self::Bridge => bridge(s[0], t[0]),
            Self::Watson => watson(s[0], t[0]),
            Self::SheetTied => bridge(s[0], t[0]) * bridge(s[1], t[1]),
            Self::SheetCompensated => watson(s[0], t[0]) * watson(s[1], t[1]),
            Self::TorusWatson => s.iter().zip(t).map(|(a, b)| torus_watson_profile(b - a)).product(),
        }
    }
}

impl fmt::Display for BuiltinKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel {s:?}")))
    }
}

pub fn bridge(s: f64, t: f64) -> f64 {
    s.min(t) - s * t
}

pub fn watson(s: f64, t: f64) -> f64 {
    s.min(t) - (s + t) / 2.0 + (s - t) * (s - t) / 2.0 + 1.0 / 12.0
}

/// `k(u) = (ū − ½)²/2 − 1/24` where `ū ∈ [0,1)` is `u` mod 1.
pub fn torus_watson_profile(u: f64) -> f64 {
    let r = u - u.floor();
    (r - 0.5) * (r - 0.5) / 2.0 - 1.0 / 24.0
}

/// A symmetric positive semidefinite covariance matrix on an index space.
#[derive(Clone, Debug)]
pub struct Kernel {
    space: Arc<IndexSpace>,
    matrix: DMatrix<f64>,
    /// Factor kernels when this kernel is a tensor product over a product grid.
    factors: Vec<Kernel>,
}

impl Kernel {
    /// Validates symmetry and positive semidefiniteness.
    pub fn new(space: Arc<IndexSpace>, matrix: DMatrix<f64>) -> Result<Self> {
        let k = Self::new_unchecked(space, matrix)?;
        k.check_symmetric()?;
        k.check_psd()?;
        Ok(k)
    }

    /// Only checks the shape.
    pub fn new_unchecked(space: Arc<IndexSpace>, matrix: DMatrix<f64>) -> Result<Self> {
        let m = space.len();
        if matrix.nrows() != m || matrix.ncols() != m {
            return Err(Error::DimensionMismatch {
                what: "kernel matrix",
                expected: m,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self {
            space,
            matrix,
            factors: Vec::new(),
        })
    }

    pub fn zeros(space: Arc<IndexSpace>) -> Self {
        let m = space.len();
        Self {
            space,
            matrix: DMatrix::zeros(m, m),
            factors: Vec::new(),
        }
    }

    /// Evaluates a closed-form kernel on `space`. Sheet kernels on product
    /// grids keep their factor structure.
    pub fn builtin(kind: BuiltinKernel, space: Arc<IndexSpace>) -> Result<Self> {
        if let Some(d) = kind.required_dim() {
            if space.dim() != d {
                return Err(Error::DimensionMismatch {
                    what: "point dimension",
                    expected: d,
                    found: space.dim(),
                });
            }
        }
        let factor_kind = match kind {
            BuiltinKernel::SheetTied => Some(BuiltinKernel::Bridge),
            BuiltinKernel::SheetCompensated => Some(BuiltinKernel::Watson),
            _ => None,
        };
        if let Some(fk) = factor_kind {
            if space.factors().len() == 2 {
                let factors = space
                    .factors()
                    .iter()
                    .map(|f| Kernel::builtin(fk, Arc::clone(f)))
                    .collect::<Result<Vec<_>>>()?;
                return Self::product_on(space, factors);
            }
        }
        let pts = space.points();
        let m = pts.len();
        let matrix = DMatrix::from_fn(m, m, |i, j| kind.eval(&pts[i], &pts[j]));
        // Exact symmetrization: the closed forms are symmetric up to roundoff.
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        Self::new(space, matrix)
    }

    /// Tensor product of kernels on the product of their spaces.
    pub fn product(factors: Vec<Kernel>) -> Result<Self> {
        let spaces: Vec<_> = factors.iter().map(|k| Arc::clone(&k.space)).collect();
        let require = spaces.iter().all(|s| s.action().is_some());
        let space = Arc::new(IndexSpace::product(&spaces, require)?);
        Self::product_on(space, factors)
    }

    fn product_on(space: Arc<IndexSpace>, factors: Vec<Kernel>) -> Result<Self> {
        let mut matrix = DMatrix::from_element(1, 1, 1.0);
        for f in &factors {
            matrix = matrix.kronecker(&f.matrix);
        }
        let mut k = Self::new_unchecked(space, matrix)?;
        k.factors = factors.into_iter().flat_map(Kernel::into_factor_list).collect();
        Ok(k)
    }

    fn into_factor_list(self) -> Vec<Kernel> {
        if self.factors.is_empty() {
            vec![self]
        } else {
            self.factors
        }
    }

    pub fn space(&self) -> &Arc<IndexSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn factors(&self) -> &[Kernel] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    fn check_symmetric(&self) -> Result<()> {
        let scale = self.matrix.amax().max(1.0);
        let asym = (&self.matrix - self.matrix.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(())
    }

    fn check_psd(&self) -> Result<()> {
        let eig = self.matrix.clone().symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if min < -PSD_REL_TOL * max.max(0.0) {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min,
                max_eigenvalue: max,
            });
        }
        Ok(())
    }

    /// `tr((diag(μ)·R)ⁿ)` for `n = 1..=n_max`, i.e. the weighted diagonal
    /// traces of the contraction powers. Product kernels use the factor
    /// identity `tr((A⊗B)ⁿ) = tr(Aⁿ)·tr(Bⁿ)`.
    pub fn power_traces(&self, n_max: usize) -> Vec<f64> {
        if !self.factors.is_empty() {
            let mut out = vec![1.0; n_max];
            for f in &self.factors {
                for (o, t) in out.iter_mut().zip(f.power_traces(n_max)) {
                    *o *= t;
                }
            }
            return out;
        }
        let sqrt_w = DVector::from_iterator(self.len(), self.space.weights().iter().map(|w| w.sqrt()));
        let a = DMatrix::from_fn(self.len(), self.len(), |i, j| {
            sqrt_w[i] * self.matrix[(i, j)] * sqrt_w[j]
        });
        let top = n_max.div_ceil(2).max(1);
        let mut powers = vec![a];
        for p in 1..top {
            let next = &powers[p - 1] * &powers[0];
            powers.push(next);
        }
        (1..=n_max)
            .map(|n| {
                if n == 1 {
                    powers[0].trace()
                } else if n % 2 == 0 {
                    frobenius(&powers[n / 2 - 1], &powers[n / 2 - 1])
                } else {
                    frobenius(&powers[n / 2 - 1], &powers[n / 2])
                }
            })
            .collect()
    }
}

fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Result of [`check_invariance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub max_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

/// `max_{g,i,j} |R[g·i][g·j] − R[i][j]|`.
pub fn check_invariance(k: &Kernel, tol: f64) -> Result<InvarianceReport> {
    let action = k.space.require_action()?;
    let m = k.len();
    let mut worst = 0.0f64;
    for row in action.perm() {
        for j in 0..m {
            for i in 0..m {
                let d = (k.matrix[(row[i], row[j])] - k.matrix[(i, j)]).abs();
                worst = worst.max(d);
            }
        }
    }
    Ok(InvarianceReport {
        max_deviation: worst,
        tol,
        passed: worst <= tol,
    })
}

/// Applies the real projection `E_π` to every column of a matrix, acting on
/// the row index.
pub(crate) fn project_rows(m: &DMatrix<f64>, action: &GroupAction, irrep: &Irrep) -> Result<DMatrix<f64>> {
    if m.nrows() != action.space_size() {
        return Err(Error::DimensionMismatch {
            what: "projected dimension",
            expected: action.space_size(),
            found: m.nrows(),
        });
    }
    let terms = action.real_projection_terms(irrep)?;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for c in 0..m.ncols() {
        let src_col = m.column(c);
        let mut dst = out.column_mut(c);
        for (coef, src) in &terms {
            for (i, &j) in src.iter().enumerate() {
                dst[i] += coef * src_col[j];
            }
        }
    }
    Ok(out)
}

/// `R^{π⊗σ}(y₁,y₂) = (d_π d_σ/|G|²) Σ_{g₁,g₂} χ_π(g₁)χ_σ(g₂) R(g₁⁻¹·y₁, g₂⁻¹·y₂)`
/// for real characters.
pub fn project_kernel(k: &Kernel, pi: &Irrep, sigma: &Irrep) -> Result<DMatrix<f64>> {
    let action = k.space.require_action()?;
    let left = project_rows(&k.matrix, action, pi)?;
    let both = project_rows(&left.transpose(), action, sigma)?;
    Ok(both.transpose())
}

/// `R^{π⊗π}` as a kernel (positive semidefiniteness is checked).
pub fn project_kernel_diag(k: &Kernel, pi: &Irrep) -> Result<Kernel> {
    let m = project_kernel(k, pi, pi)?;
    let m = (&m + m.transpose()) * 0.5;
    Kernel::new(Arc::clone(&k.space), m)
}

/// Complex-character version of [`project_kernel`]: the covariance
/// `E[Z^π(y₁) conj(Z^σ(y₂))]`, which conjugates the σ character.
pub fn project_kernel_complex(k: &Kernel, pi: &Irrep, sigma: &Irrep) -> Result<DMatrix<Complex64>> {
    let action = k.space.require_action()?;
    let g = action.group();
    let n = g.order();
    for irrep in [pi, sigma] {
        if irrep.values.len() != n {
            return Err(Error::DimensionMismatch {
                what: "character length",
                expected: n,
                found: irrep.values.len(),
            });
        }
    }
    let scale = (pi.dim * sigma.dim) as f64 / (n * n) as f64;
    let m = k.len();
    let mut out = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for g1 in 0..n {
        let p1 = &action.perm()[g.inv(g1)];
        for g2 in 0..n {
            let p2 = &action.perm()[g.inv(g2)];
            let c = pi.chi(g1) * sigma.chi(g2).conj() * scale;
            for j in 0..m {
                for i in 0..m {
                    out[(i, j)] += c * k.matrix[(p1[i], p2[j])];
                }
            }
        }
    }
    Ok(out)
}

/// `[Φ⊗₍₂₎Ψ] = Φ · diag(μ) · Ψᵀ`.
pub fn contract(k1: &DMatrix<f64>, k2: &DMatrix<f64>, space: &IndexSpace) -> Result<DMatrix<f64>> {
    let m = space.len();
    for (what, k) in [("left contraction factor", k1), ("right contraction factor", k2)] {
        if k.ncols() != m {
            return Err(Error::DimensionMismatch {
                what,
                expected: m,
                found: k.ncols(),
            });
        }
    }
    let mut scaled = k1.clone();
    for (j, w) in space.weights().iter().enumerate() {
        scaled.column_mut(j).scale_mut(*w);
    }
    Ok(scaled * k2.transpose())
}

/// The `n`-fold contraction chain `[R⊗₍ₙ₎R]`, equal to `R (diag(μ) R)ⁿ⁻¹`.
pub fn contract_power(k: &Kernel, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("contraction order must be at least 1".into()));
    }
    let mut out = k.matrix.clone();
    for _ in 1..n {
        out = contract(&out, &k.matrix, &k.space)?;
    }
    Ok(out)
}

/// `Σ_i M[i][i] μ_i`.
pub fn weighted_diag_trace(m: &DMatrix<f64>, space: &IndexSpace) -> Result<f64> {
    if m.nrows() != space.len() || m.ncols() != space.len() {
        return Err(Error::DimensionMismatch {
            what: "traced matrix",
            expected: space.len(),
            found: m.nrows(),
        });
    }
    Ok(space.weights().iter().enumerate().map(|(i, w)| m[(i, i)] * w).sum())
}

/// A discretized Volterra representation `Φ[i][k] = φ(y_i, t_k)` with weights
/// `τ_k` on the auxiliary space, inducing `R = Φ·diag(τ)·Φᵀ`.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub space: Arc<IndexSpace>,
    pub phi: DMatrix<f64>,
    pub tau: Vec<f64>,
}

impl FeatureMap {
    pub fn new(space: Arc<IndexSpace>, phi: DMatrix<f64>, tau: Vec<f64>) -> Result<Self> {
        if phi.nrows() != space.len() {
            return Err(Error::DimensionMismatch {
                what: "feature map rows",
                expected: space.len(),
                found: phi.nrows(),
            });
        }
        if tau.len() != phi.ncols() {
            return Err(Error::DimensionMismatch {
                what: "auxiliary weights",
                expected: phi.ncols(),
                found: tau.len(),
            });
        }
        if tau.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::InvalidArgument("auxiliary weights must be nonnegative".into()));
        }
        Ok(Self { space, phi, tau })
    }

    pub fn induced_matrix(&self) -> DMatrix<f64> {
        let mut scaled = self.phi.clone();
        for (k, t) in self.tau.iter().enumerate() {
            scaled.column_mut(k).scale_mut(*t);
        }
        let m = scaled * self.phi.transpose();
        (&m + m.transpose()) * 0.5
    }

    pub fn induced_kernel(&self) -> Result<Kernel> {
        Kernel::new(Arc::clone(&self.space), self.induced_matrix())
    }
}

/// `φ^{(π)}(y,t) = (d_π/|G|) Σ_g χ_π(g) φ(g⁻¹·y, t)`, the feature-level
/// projection whose induced kernel is `R^{π⊗π}`.
pub fn project_feature_map(fm: &FeatureMap, pi: &Irrep) -> Result<FeatureMap> {
    let action = fm.space.require_action()?;
    let phi = project_rows(&fm.phi, action, pi)?;
    FeatureMap::new(Arc::clone(&fm.space), phi, fm.tau.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::SymmetryGroup;

    fn space(n: usize) -> Arc<IndexSpace> {
        Arc::new(IndexSpace::interval_with_reversal(n).unwrap())
    }

    #[test]
    fn interval_grids() {
        let s = IndexSpace::interval(2).unwrap();
        assert_eq!(s.points(), &[vec![0.25], vec![0.75]]);
        assert_eq!(s.weights(), &[0.5, 0.5]);
        let s = IndexSpace::interval_with_reversal(4).unwrap();
        assert_eq!(s.action().unwrap().perm()[1], vec![3, 2, 1, 0]);
        assert_eq!(IndexSpace::interval(100).unwrap().total_mass(), 1.0);
        assert!(IndexSpace::interval(0).is_err());
    }

    #[test]
    fn reversal_maps_midpoints_exactly() {
        let s = IndexSpace::interval_with_reversal(7).unwrap();
        let a = s.action().unwrap();
        for i in 0..7 {
            let t = s.points()[i][0];
            let u = s.points()[a.apply(1, i)][0];
            assert!((t + u - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn product_grids() {
        let a = space(2);
        let p = IndexSpace::product(&[a.clone(), a.clone()], true).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.weights().iter().all(|&w| w == 0.25));
        assert_eq!(p.factors().len(), 2);

        // (e,g)·(t₁,t₂) = (t₁, 1−t₂)
        let act = p.action().unwrap();
        assert_eq!(act.group().order(), 4);
        for (i, pt) in p.points().iter().enumerate() {
            let img = &p.points()[act.apply(1, i)];
            assert_eq!(img[0], pt[0]);
            assert!((img[1] - (1.0 - pt[1])).abs() < 1e-15);
        }

        let three = Arc::new(IndexSpace::interval(3).unwrap());
        let five = Arc::new(IndexSpace::interval(5).unwrap());
        let q = IndexSpace::product(&[three.clone(), five.clone()], false).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(q.weights()[i * 5 + j], three.weights()[i] * five.weights()[j]);
            }
        }
        assert!(IndexSpace::product(&[three, five], true).is_err());
    }

    #[test]
    fn builtin_values() {
        let s = space(4);
        let w = Kernel::builtin(BuiltinKernel::Watson, s.clone()).unwrap();
        for i in 0..4 {
            assert!((w.matrix()[(i, i)] - 1.0 / 12.0).abs() < 1e-15);
        }
        assert!((bridge(0.25, 0.75) - 0.0625).abs() < 1e-15);
        let t = Kernel::builtin(BuiltinKernel::TorusWatson, s.clone()).unwrap();
        assert!((t.matrix() - w.matrix()).amax() < 1e-12);
        assert!(Kernel::builtin(BuiltinKernel::SheetTied, s).is_err());
        assert!("nope".parse::<BuiltinKernel>().is_err());
        assert_eq!("sheet_compensated".parse::<BuiltinKernel>().unwrap(), BuiltinKernel::SheetCompensated);
    }

    #[test]
    fn non_psd_matrix_is_rejected() {
        let s = space(2);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(Kernel::new(s.clone(), m), Err(Error::NotPositiveSemidefinite { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(Kernel::new(s, m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn invariance_checks() {
        let s = space(16);
        for kind in [BuiltinKernel::Bridge, BuiltinKernel::Watson] {
            let k = Kernel::builtin(kind, s.clone()).unwrap();
            assert!(check_invariance(&k, 1e-12).unwrap().passed, "{kind}");
        }
        let pts = s.points();
        let st = DMatrix::from_fn(16, 16, |i, j| pts[i][0] * pts[j][0]);
        let k = Kernel::new(s, st).unwrap();
        let r = check_invariance(&k, 1e-12).unwrap();
        assert!(!r.passed && r.max_deviation > 0.1);

        let plain = Arc::new(IndexSpace::interval(4).unwrap());
        let k = Kernel::builtin(BuiltinKernel::Bridge, plain).unwrap();
        assert!(matches!(check_invariance(&k, 1e-12), Err(Error::MissingAction)));
    }

    #[test]
    fn z2_projection_formula() {
        let s = space(10);
        let sym = SymmetryGroup::cyclic(2).unwrap();
        let k = Kernel::builtin(BuiltinKernel::Bridge, s.clone()).unwrap();
        let u = sym.table.get("pi_u").unwrap();
        let a = sym.table.get("pi_a").unwrap();
        let ru = project_kernel(&k, u, u).unwrap();
        let r = k.matrix();
        for i in 0..10 {
            for j in 0..10 {
                let expected = 0.5 * (r[(i, j)] + r[(i, 9 - j)]);
                assert!((ru[(i, j)] - expected).abs() < 1e-15);
            }
        }
        assert!(project_kernel(&k, u, a).unwrap().amax() < 1e-15);
    }

    #[test]
    fn watson_alternating_projection_vanishes_near_zero() {
        let sym = SymmetryGroup::cyclic(2).unwrap();
        let a = sym.table.get("pi_a").unwrap();
        let mut last = f64::INFINITY;
        for n in [16, 64, 256] {
            let k = Kernel::builtin(BuiltinKernel::Watson, space(n)).unwrap();
            let ra = project_kernel(&k, a, a).unwrap();
            let v = ra[(0, 0)];
            let expected = 0.5 * (k.matrix()[(0, 0)] - k.matrix()[(0, n - 1)]);
            assert!((v - expected).abs() < 1e-15);
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn contraction_examples() {
        let s = IndexSpace::interval(2).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        let c = contract(&id, &id, &s).unwrap();
        assert_eq!(c, DMatrix::from_diagonal_element(2, 2, 0.5));

        let k = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.5, 2.0]);
        let lhs = contract(&(&k * 2.5), &l, &s).unwrap();
        let rhs = contract(&k, &l, &s).unwrap() * 2.5;
        assert!((lhs - rhs).amax() < 1e-14);
        assert!(contract(&k, &DMatrix::zeros(2, 3), &s).is_err());
    }

    #[test]
    fn first_contraction_power_is_the_kernel() {
        let k = Kernel::builtin(BuiltinKernel::Bridge, space(8)).unwrap();
        assert_eq!(&contract_power(&k, 1).unwrap(), k.matrix());
        assert!(contract_power(&k, 0).is_err());
    }

    #[test]
    fn power_traces_match_contraction_chain() {
        let k = Kernel::builtin(BuiltinKernel::Watson, space(40)).unwrap();
        let fast = k.power_traces(7);
        for n in 1..=7 {
            let chain = weighted_diag_trace(&contract_power(&k, n).unwrap(), k.space()).unwrap();
            assert!((chain - fast[n - 1]).abs() <= 1e-12 * chain.abs(), "n={n}");
        }
    }

    #[test]
    fn product_power_traces_match_dense() {
        let a = Kernel::builtin(BuiltinKernel::Watson, space(6)).unwrap();
        let b = Kernel::builtin(BuiltinKernel::Bridge, space(5)).unwrap();
        let p = Kernel::product(vec![a, b]).unwrap();
        let dense = Kernel::new_unchecked(p.space().clone(), p.matrix().clone()).unwrap();
        for (x, y) in p.power_traces(6).iter().zip(dense.power_traces(6)) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn quadrature_traces() {
        let n = 512;
        let w = Kernel::builtin(BuiltinKernel::Watson, space(n)).unwrap();
        assert!((w.power_traces(1)[0] - 1.0 / 12.0).abs() < 1e-14);
        let b = Kernel::builtin(BuiltinKernel::Bridge, space(n)).unwrap();
        // Midpoint rule for t − t²: exact value 1/6 plus 1/(12n²).
        let tb = b.power_traces(1)[0];
        assert!((tb - (1.0 / 6.0 + 1.0 / (12.0 * (n * n) as f64))).abs() < 1e-14);
    }

    #[test]
    fn feature_map_projection() {
        let s = space(8);
        let sym = SymmetryGroup::cyclic(2).unwrap();
        let a = sym.table.get("pi_a").unwrap();
        let constant = FeatureMap::new(s.clone(), DMatrix::from_element(8, 3, 1.7), vec![0.2, 0.3, 0.5]).unwrap();
        assert!(project_feature_map(&constant, a).unwrap().phi.amax() < 1e-15);

        let trivial = Arc::new(
            IndexSpace::interval(8).unwrap().with_action(GroupAction::identity(8)).unwrap(),
        );
        let one = SymmetryGroup::trivial();
        let fm = FeatureMap::new(trivial, DMatrix::from_fn(8, 3, |i, k| (i * 3 + k) as f64), vec![1.0; 3]).unwrap();
        assert_eq!(project_feature_map(&fm, &one.table.irreps()[0]).unwrap().phi, fm.phi);
    }
}
