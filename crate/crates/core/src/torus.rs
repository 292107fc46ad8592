//! Flat tori `ℝⁿ/Γ`: lattices and their duals, Fourier expansions of
//! stationary kernels, and the parity split of torus-indexed paths.
//!
//! Grid points are `Σ_j (i_j/N_j) v_j`, so in fractional coordinates the grid
//! is `∏_j {0, 1/N_j, …}` and both negation and translations are exact index
//! permutations. A dual vector is stored by its integer coordinates `m` in the
//! dual basis; then `⟨v*, t⟩ = Σ_j m_j f_j` for `t` with fractional
//! coordinates `f`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cumulants::analytic_cumulants;
use crate::error::{Error, Result};
use crate::group::{FiniteGroup, GroupAction, SymmetryGroup};
use crate::kernels::{project_kernel_diag, torus_watson_profile, IndexSpace, Kernel};
use crate::sampler::{compare_in_law, GaussianSampler, LawComparison, PathEnsemble, ANALYTIC_ORDERS};

/// Tolerance for integrality of `⟨v_i, w_j⟩` and for the sine coefficients.
pub const LATTICE_TOL: f64 = 1e-10;
/// Allowed spread of kernel entries sharing a torus difference.
pub const STATIONARITY_TOL: f64 = 1e-10;
/// Retained coefficients must be at least `−NEGATIVE_COEFF_TOL`.
pub const NEGATIVE_COEFF_TOL: f64 = 1e-10;

/// `Γ = {Σ a_i v_i : a_i ∈ ℤ}` for an invertible basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    /// Basis vectors `v_i`, one per row.
    pub basis: Vec<Vec<f64>>,
    /// `|det V|`, the volume of a fundamental domain.
    pub volume: f64,
    /// 2-norm condition number of `V`.
    pub condition: f64,
}

impl Lattice {
    pub fn new(basis: Vec<Vec<f64>>) -> Result<Self> {
        let n = basis.len();
        if n == 0 {
            return Err(Error::InvalidArgument("lattice needs at least one basis vector".into()));
        }
        if let Some(bad) = basis.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "lattice basis vector",
                expected: n,
                found: bad.len(),
            });
        }
        if basis.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("lattice basis must be finite".into()));
        }
        let v = Self::rows_to_matrix(&basis);
        let sv = v.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-12 * smax) {
            return Err(Error::SingularLattice);
        }
        Ok(Self {
            volume: v.determinant().abs(),
            condition: smax / smin,
            basis,
        })
    }

    /// `ℤⁿ`.
    pub fn integer(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, n, |i, j| rows[i][j])
    }

    /// `V` with the basis vectors as rows.
    pub fn matrix(&self) -> DMatrix<f64> {
        Self::rows_to_matrix(&self.basis)
    }

    /// Cartesian point with fractional coordinates `f`: `Σ_j f_j v_j`.
    pub fn point(&self, f: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|c| f.iter().zip(&self.basis).map(|(fj, v)| fj * v[c]).sum())
            .collect()
    }
}

/// `Γ*`: basis rows `w_j` with `⟨v_i, w_j⟩ = δ_ij`, i.e. `W = V⁻ᵀ`.
pub fn dual_lattice(l: &Lattice) -> Result<Lattice> {
    let v = l.matrix();
    let inv = v.clone().try_inverse().ok_or(Error::SingularLattice)?;
    let w = inv.transpose();
    let gram = &v * w.transpose();
    let worst = gram.iter().map(|x| (x - x.round()).abs()).fold(0.0, f64::max);
    if worst > LATTICE_TOL {
        return Err(Error::InvalidArgument(format!(
            "dual basis fails integrality by {worst:e}"
        )));
    }
    let n = l.dim();
    Lattice::new((0..n).map(|i| (0..n).map(|j| w[(i, j)]).collect()).collect())
}

/// Uniform grid on `ℝⁿ/Γ` with `N_j` points along `v_j`, closed under
/// negation. The negation `t ↦ −t` is bound as a ℤ/2ℤ action.
#[derive(Clone, Debug)]
pub struct TorusGrid {
    lattice: Lattice,
    sizes: Vec<usize>,
    space: Arc<IndexSpace>,
}

impl TorusGrid {
    /// Every `N_j` must be even so that the half-lattice point `Σ v_j/2` is a
    /// grid point.
    pub fn new(lattice: Lattice, sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() != lattice.dim() {
            return Err(Error::DimensionMismatch {
                what: "torus grid axes",
                expected: lattice.dim(),
                found: sizes.len(),
            });
        }
        if let Some(&n) = sizes.iter().find(|&&n| n == 0 || n % 2 == 1) {
            return Err(Error::InvalidArgument(format!("torus grid sizes must be even and positive, got {n}")));
        }
        let m: usize = sizes.iter().product();
        let mut points = Vec::with_capacity(m);
        let mut f = vec![0.0; sizes.len()];
        for idx in 0..m {
            for (j, c) in Self::split(&sizes, idx).into_iter().enumerate() {
                f[j] = c as f64 / sizes[j] as f64;
            }
            points.push(lattice.point(&f));
        }
        let neg = (0..m)
            .map(|i| {
                let c: Vec<usize> = Self::split(&sizes, i)
                    .into_iter()
                    .zip(&sizes)
                    .map(|(c, &n)| (n - c) % n)
                    .collect();
                Self::join(&sizes, &c)
            })
            .collect();
        let action = GroupAction::new(FiniteGroup::cyclic(2)?, vec![(0..m).collect(), neg])?;
        let space = IndexSpace::new(points, vec![lattice.volume / m as f64; m], Some(action))?;
        Ok(Self {
            lattice,
            sizes,
            space: Arc::new(space),
        })
    }

    /// `N` points on `ℝ/ℤ`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(Lattice::integer(1)?, vec![n])
    }

    fn split(sizes: &[usize], mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; sizes.len()];
        for j in (0..sizes.len()).rev() {
            c[j] = idx % sizes[j];
            idx /= sizes[j];
        }
        c
    }

    fn join(sizes: &[usize], c: &[usize]) -> usize {
        c.iter().zip(sizes).fold(0, |acc, (&x, &n)| acc * n + x)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn space(&self) -> &Arc<IndexSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// Integer coordinates `(i_1, …, i_n)` of point `idx`.
    pub fn coords(&self, idx: usize) -> Vec<usize> {
        Self::split(&self.sizes, idx)
    }

    pub fn fractional(&self, idx: usize) -> Vec<f64> {
        self.coords(idx)
            .into_iter()
            .zip(&self.sizes)
            .map(|(c, &n)| c as f64 / n as f64)
            .collect()
    }

    /// Index of `t_j − t_i`.
    pub fn difference(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.coords(i), self.coords(j));
        let c: Vec<usize> = a
            .iter()
            .zip(&b)
            .zip(&self.sizes)
            .map(|((&x, &y), &n)| (y + n - x) % n)
            .collect();
        Self::join(&self.sizes, &c)
    }

    /// Index of `−t_i`.
    pub fn negation(&self, i: usize) -> usize {
        self.space.action().expect("torus grid carries negation").apply(1, i)
    }

    /// Fixed points of negation: all coordinates in `{0, N_j/2}`.
    pub fn fixed_points(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.negation(i) == i).collect()
    }

    /// Indices of `0` and of the half-lattice point `Σ_j v_j/2`.
    pub fn origin_and_half(&self) -> (usize, usize) {
        let half: Vec<usize> = self.sizes.iter().map(|n| n / 2).collect();
        (0, Self::join(&self.sizes, &half))
    }
}

/// Closed-form stationary profiles, evaluated in fractional coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum TorusProfile {
    /// `∏_j k(f_j)` with `k(u) = (ū−½)²/2 − 1/24`.
    Watson,
    Constant(f64),
}

impl TorusProfile {
    pub fn eval(self, f: &[f64]) -> f64 {
        match self {
            Self::Watson => f.iter().map(|&u| torus_watson_profile(u)).product(),
            Self::Constant(c) => c,
        }
    }

    /// Profile values at every grid point.
    pub fn sample(self, grid: &TorusGrid) -> Vec<f64> {
        (0..grid.len()).map(|i| self.eval(&grid.fractional(i))).collect()
    }
}

/// `K(s,t) = k(t−s)` on the grid from sampled profile values.
pub fn profile_kernel(profile: &[f64], grid: &TorusGrid) -> Result<Kernel> {
    if profile.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            what: "profile samples",
            expected: grid.len(),
            found: profile.len(),
        });
    }
    let m = grid.len();
    let matrix = DMatrix::from_fn(m, m, |i, j| profile[grid.difference(i, j)]);
    Kernel::new(Arc::clone(grid.space()), matrix)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficient {
    /// Coordinates of `v*` in the dual basis.
    pub index: Vec<i64>,
    /// Cartesian `v*`.
    pub dual_vector: Vec<f64>,
    /// Coefficient of `cos(2π⟨v*, t−s⟩)`; `±v*` are listed separately.
    pub a: f64,
    /// Eigenvalue of the cos and sin modes on `L²(dm)`: `a·vol`.
    pub eigenvalue: f64,
    /// `α` with `∫α² cos²(2π⟨v*,s⟩) dm = 1`: `√(2/vol)`, or `√(1/vol)` at `v* = 0`.
    pub alpha: f64,
}

/// Fourier expansion `K(s,t) = Σ_{v*} a_{v*} cos(2π⟨v*, t−s⟩)` of a stationary
/// kernel, truncated to `|m_j| ≤ cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusKernelSpec {
    pub lattice: Lattice,
    pub dual: Lattice,
    pub grid: Vec<usize>,
    pub cutoff: usize,
    pub coefficients: Vec<FourierCoefficient>,
    /// Largest `|b_{v*}|` over all computed sine coefficients.
    pub max_sine: f64,
    /// `Σ |a|` over grid-resolvable frequencies outside the cutoff; bounds the
    /// gap between the assembled and grid-sampled kernels.
    pub truncation_bound: f64,
    /// `max |K_spec − K_grid|`.
    pub assembly_error: f64,
}

/// The exchange format `{basis, dual_basis, coefficients, grid}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusSpecJson {
    pub basis: Vec<Vec<f64>>,
    pub dual_basis: Vec<Vec<f64>>,
    pub coefficients: Vec<CoefficientJson>,
    pub grid: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientJson {
    #[serde(rename = "v*")]
    pub v: Vec<i64>,
    pub a_v: f64,
}

impl TorusKernelSpec {
    /// Profile reconstruction `Σ a cos(2π m·f)` at every grid point.
    fn profile_on(&self, grid: &TorusGrid) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                self.coefficients
                    .iter()
                    .map(|co| co.a * phase(&co.index, &c, grid.sizes()).cos())
                    .sum()
            })
            .collect()
    }

    /// Assembled kernel on `grid` (same lattice, any resolving size).
    pub fn kernel(&self, grid: &TorusGrid) -> Result<Kernel> {
        if grid.lattice() != &self.lattice {
            return Err(Error::InvalidArgument("grid lattice differs from the spec lattice".into()));
        }
        nyquist(self.cutoff, grid.sizes())?;
        profile_kernel(&self.profile_on(grid), grid)
    }

    pub fn to_json(&self) -> TorusSpecJson {
        TorusSpecJson {
            basis: self.lattice.basis.clone(),
            dual_basis: self.dual.basis.clone(),
            coefficients: self
                .coefficients
                .iter()
                .map(|c| CoefficientJson {
                    v: c.index.clone(),
                    a_v: c.a,
                })
                .collect(),
            grid: self.grid.clone(),
        }
    }
}

/// `2π Σ_j m_j c_j / N_j` with each term reduced mod 1 first.
fn phase(m: &[i64], c: &[usize], sizes: &[usize]) -> f64 {
    let turns: f64 = m
        .iter()
        .zip(c)
        .zip(sizes)
        .map(|((&mj, &cj), &n)| {
            let n = n as i64;
            (mj * cj as i64).rem_euclid(n) as f64 / n as f64
        })
        .sum();
    2.0 * PI * turns
}

fn nyquist(cutoff: usize, sizes: &[usize]) -> Result<()> {
    for (axis, &n) in sizes.iter().enumerate() {
        if 2 * cutoff >= n {
            let mut index = vec![0; sizes.len()];
            index[axis] = cutoff as i64;
            return Err(Error::Nyquist {
                index,
                axis,
                points: n,
            });
        }
    }
    Ok(())
}

fn box_indices(dim: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                (-r..=r).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

/// Discrete Fourier coefficients of a stationary profile sampled on `grid`.
///
/// `a_m = (1/M) Σ_i k(f_i) cos(2π m·f_i)` over the `M` grid points; the sine
/// coefficients must vanish and retained `a_m` must be nonnegative.
pub fn fourier_kl(profile: &[f64], grid: &TorusGrid, cutoff: usize) -> Result<TorusKernelSpec> {
    if profile.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            what: "profile samples",
            expected: grid.len(),
            found: profile.len(),
        });
    }
    nyquist(cutoff, grid.sizes())?;
    let sizes = grid.sizes();
    let m = grid.len() as f64;
    let coords: Vec<Vec<usize>> = (0..grid.len()).map(|i| grid.coords(i)).collect();
    let transform = |idx: &[i64]| -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, c) in profile.iter().zip(&coords) {
            let (s, co) = phase(idx, c, sizes).sin_cos();
            re += k * co;
            im += k * s;
        }
        (re / m, im / m)
    };
    let vol = grid.lattice().volume;
    let dual = dual_lattice(grid.lattice())?;
    let mut coefficients = Vec::new();
    let mut max_sine = 0.0f64;
    for idx in box_indices(sizes.len(), cutoff as i64) {
        let (a, b) = transform(&idx);
        max_sine = max_sine.max(b.abs());
        let zero = idx.iter().all(|&x| x == 0);
        let dual_vector = (0..sizes.len())
            .map(|c| idx.iter().zip(&dual.basis).map(|(&mj, w)| mj as f64 * w[c]).sum())
            .collect();
        coefficients.push(FourierCoefficient {
            index: idx,
            dual_vector,
            a,
            eigenvalue: a * vol,
            alpha: if zero { (1.0 / vol).sqrt() } else { (2.0 / vol).sqrt() },
        });
    }
    // Frequencies the grid resolves but the cutoff drops.
    let mut truncation_bound = 0.0;
    let half: Vec<i64> = sizes.iter().map(|&n| (n / 2) as i64).collect();
    let resolvable = box_indices(sizes.len(), *half.iter().max().unwrap_or(&0));
    for idx in resolvable {
        let inside_grid = idx.iter().zip(&half).all(|(&x, &h)| x > -h && x <= h);
        let retained = idx.iter().all(|&x| x.unsigned_abs() as usize <= cutoff);
        if inside_grid && !retained {
            let (a, b) = transform(&idx);
            max_sine = max_sine.max(b.abs());
            truncation_bound += a.abs();
        }
    }
    if max_sine > LATTICE_TOL {
        return Err(Error::NotSymmetric(max_sine));
    }
    let amin = coefficients.iter().map(|c| c.a).fold(f64::INFINITY, f64::min);
    if amin < -NEGATIVE_COEFF_TOL {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: amin * vol,
            max_eigenvalue: coefficients.iter().map(|c| c.a * vol).fold(0.0, f64::max),
        });
    }
    let mut spec = TorusKernelSpec {
        lattice: grid.lattice().clone(),
        dual,
        grid: sizes.to_vec(),
        cutoff,
        coefficients,
        max_sine,
        truncation_bound,
        assembly_error: 0.0,
    };
    spec.assembly_error = spec
        .profile_on(grid)
        .iter()
        .zip(profile)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// Largest spread of kernel entries sharing a difference `t − s`.
    pub max_spread: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Checks `K(s,t) = k(t−s)` on the grid.
pub fn check_stationarity(k: &Kernel, grid: &TorusGrid, tol: f64) -> Result<StationarityReport> {
    if k.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            what: "kernel size",
            expected: grid.len(),
            found: k.len(),
        });
    }
    let m = grid.len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for j in 0..m {
        for i in 0..m {
            let d = grid.difference(i, j);
            let x = k.matrix()[(i, j)];
            lo[d] = lo[d].min(x);
            hi[d] = hi[d].max(x);
        }
    }
    let max_spread = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    Ok(StationarityReport {
        max_spread,
        tol,
        passed: max_spread <= tol,
    })
}

/// Odd and even parts `X₁ = (X − X∘σ)/2`, `X₂ = (X + X∘σ)/2` under the
/// ℤ/2ℤ action bound to the ensemble's space (negation on a torus grid).
#[derive(Clone, Debug)]
pub struct ParityParts {
    pub odd: PathEnsemble,
    pub even: PathEnsemble,
}

fn involution(space: &IndexSpace) -> Result<&[usize]> {
    let action = space.action().ok_or(Error::MissingAction)?;
    if action.group().order() != 2 {
        return Err(Error::WrongGroup(format!(
            "parity needs a group of order 2, found order {}",
            action.group().order()
        )));
    }
    let g = 1 - action.group().identity();
    Ok(&action.perm()[g])
}

pub fn parity_decompose(e: &PathEnsemble) -> Result<ParityParts> {
    let sigma = involution(&e.space)?;
    let m = e.samples.nrows();
    let odd = DMatrix::from_fn(m, e.len(), |i, s| 0.5 * e.samples[(i, s)] - 0.5 * e.samples[(sigma[i], s)]);
    let even = DMatrix::from_fn(m, e.len(), |i, s| 0.5 * e.samples[(i, s)] + 0.5 * e.samples[(sigma[i], s)]);
    let wrap = |samples| PathEnsemble {
        space: Arc::clone(&e.space),
        samples,
        seed: e.seed,
        factorization_rank: e.factorization_rank,
    };
    Ok(ParityParts {
        odd: wrap(odd),
        even: wrap(even),
    })
}

/// One reading of the pathwise energy split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConventionCheck {
    pub parts: String,
    pub identity: String,
    /// `max_s |lhs − rhs|`.
    pub max_residual: f64,
    pub tol: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusWatsonConfig {
    pub samples: usize,
    pub seed: u64,
    pub ks_threshold: f64,
    pub z_score: f64,
    pub orders: usize,
    /// Pathwise tolerance for the energy identities.
    pub pathwise_tol: f64,
}

impl TorusWatsonConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            ks_threshold: 0.02,
            z_score: 4.0,
            orders: 4,
            pathwise_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusWatsonReport {
    pub grid: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub stationarity: StationarityReport,
    /// Halved parts `X = X₁ + X₂`, unhalved parts `U = X ∓ X∘σ`, and the
    /// quarter factors applied to the halved parts.
    pub conventions: Vec<ConventionCheck>,
    /// Names of the conventions whose identity holds pathwise.
    pub satisfied_by: Vec<String>,
    /// `max_s |⟨X₁, X₂⟩_m|`.
    pub max_parity_inner: f64,
    /// `max |X₁|` at the grid images of `0` and `Σ v_j/2`.
    pub odd_at_fixed_points: f64,
    /// `max_{ij} |(1/S) Σ_s X₁(t_i) X₂(t_j)|`.
    pub cross_covariance_max: f64,
    pub cross_covariance_threshold: f64,
    pub independence_passed: bool,
    /// Exact cumulants of `∫X₁²` and `∫X₂²` on the grid.
    pub odd_analytic: Vec<f64>,
    pub even_analytic: Vec<f64>,
    /// `∫X₁²` against `∫X₂²`.
    pub law: LawComparison,
    pub passed: bool,
}

struct BlockStats {
    energy: Vec<[f64; 5]>,
    inner: f64,
    fixed: f64,
    cross: DMatrix<f64>,
}

/// Samples `X` from the spec kernel and checks the parity energy split, the
/// independence of the parts and `∫X₁² =law ∫X₂²`.
pub fn torus_watson_check(spec: &TorusKernelSpec, grid: &TorusGrid, cfg: &TorusWatsonConfig) -> Result<TorusWatsonReport> {
    if cfg.samples < 2 {
        return Err(Error::SampleTooSmall {
            found: cfg.samples,
            required: 2,
        });
    }
    let k = spec.kernel(grid)?;
    let stationarity = check_stationarity(&k, grid, STATIONARITY_TOL)?;
    if !stationarity.passed {
        return Err(Error::NotInvariant {
            max_deviation: stationarity.max_spread,
            tol: stationarity.tol,
        });
    }
    let sigma = involution(grid.space())?.to_vec();
    let w = grid.space().weights().to_vec();
    let (o, h) = grid.origin_and_half();
    let m = grid.len();
    let sampler = GaussianSampler::new(&k)?;
    let blocks = sampler.map_blocks(cfg.samples, cfg.seed, |_, z| {
        let b = z.ncols();
        let mut x1 = DMatrix::zeros(m, b);
        let mut x2 = DMatrix::zeros(m, b);
        let mut energy = Vec::with_capacity(b);
        let mut inner = 0.0f64;
        let mut fixed = 0.0f64;
        for s in 0..b {
            let mut e = [0.0; 5];
            let mut ip = 0.0;
            for i in 0..m {
                let (a, r) = (z[(i, s)], z[(sigma[i], s)]);
                let (odd, even) = (0.5 * a - 0.5 * r, 0.5 * a + 0.5 * r);
                let (u1, u2) = (a - r, a + r);
                x1[(i, s)] = odd;
                x2[(i, s)] = even;
                e[0] += w[i] * a * a;
                e[1] += w[i] * odd * odd;
                e[2] += w[i] * even * even;
                e[3] += w[i] * u1 * u1;
                e[4] += w[i] * u2 * u2;
                ip += w[i] * odd * even;
            }
            inner = inner.max(ip.abs());
            fixed = fixed.max(x1[(o, s)].abs()).max(x1[(h, s)].abs());
            energy.push(e);
        }
        BlockStats {
            energy,
            inner,
            fixed,
            cross: &x1 * x2.transpose(),
        }
    })?;
    let mut energy = Vec::with_capacity(cfg.samples);
    let mut cross = DMatrix::zeros(m, m);
    let (mut inner, mut fixed) = (0.0f64, 0.0f64);
    for b in blocks {
        energy.extend(b.energy);
        cross += b.cross;
        inner = inner.max(b.inner);
        fixed = fixed.max(b.fixed);
    }
    cross /= cfg.samples as f64;
    let residual = |f: &dyn Fn(&[f64; 5]) -> f64| energy.iter().map(|e| (e[0] - f(e)).abs()).fold(0.0, f64::max);
    let conv = |parts: &str, identity: &str, r: f64| ConventionCheck {
        parts: parts.into(),
        identity: identity.into(),
        max_residual: r,
        tol: cfg.pathwise_tol,
        holds: r <= cfg.pathwise_tol,
    };
    let conventions = vec![
        conv("halved", "∫X² = ∫X₁² + ∫X₂²", residual(&|e| e[1] + e[2])),
        conv("unhalved", "∫X² = ¼∫U₁² + ¼∫U₂²", residual(&|e| 0.25 * e[3] + 0.25 * e[4])),
        conv("halved", "∫X² = ¼∫X₁² + ¼∫X₂²", residual(&|e| 0.25 * e[1] + 0.25 * e[2])),
    ];
    let satisfied_by = conventions
        .iter()
        .filter(|c| c.holds)
        .map(|c| format!("{}: {}", c.parts, c.identity))
        .collect();
    let threshold = 4.0 / (cfg.samples as f64).sqrt();
    let cross_max = cross.amax();
    let table = SymmetryGroup::cyclic(2)?.table;
    let odd_k = project_kernel_diag(&k, table.get("pi_a").expect("ℤ/2ℤ table"))?;
    let even_k = project_kernel_diag(&k, table.get("pi_u").expect("ℤ/2ℤ table"))?;
    let odd_analytic = analytic_cumulants(&odd_k, 1.0, ANALYTIC_ORDERS)?.values;
    let even_analytic = analytic_cumulants(&even_k, 1.0, ANALYTIC_ORDERS)?.values;
    let odd_energy: Vec<f64> = energy.iter().map(|e| e[1]).collect();
    let even_energy: Vec<f64> = energy.iter().map(|e| e[2]).collect();
    let law = compare_in_law(
        &odd_energy,
        &even_energy,
        &odd_analytic,
        &even_analytic,
        cfg.orders,
        cfg.z_score,
        cfg.ks_threshold,
    )?;
    let independence_passed = cross_max <= threshold;
    let passed = conventions[0].holds
        && conventions[1].holds
        && inner <= cfg.pathwise_tol
        && fixed == 0.0
        && independence_passed
        && law.passed;
    Ok(TorusWatsonReport {
        grid: grid.sizes().to_vec(),
        samples: cfg.samples,
        seed: cfg.seed,
        stationarity,
        conventions,
        satisfied_by,
        max_parity_inner: inner,
        odd_at_fixed_points: fixed,
        cross_covariance_max: cross_max,
        cross_covariance_threshold: threshold,
        independence_passed,
        odd_analytic,
        even_analytic,
        law,
        passed,
    })
}

/// Eigenvalues of the circulant operator `f ↦ Σ_j K(·,t_j) f(t_j) μ_j` of a
/// spec kernel, read from the coefficients: `a_m·vol`, one per retained `m`.
pub fn spec_eigenvalues(spec: &TorusKernelSpec) -> DVector<f64> {
    let mut v: Vec<f64> = spec.coefficients.iter().map(|c| c.eigenvalue).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::project_real_path;
    use crate::kernels::{watson, BuiltinKernel};
    use crate::sampler::sample;

    #[test]
    fn integer_lattice_is_self_dual() {
        for n in 1..=3 {
            let l = Lattice::integer(n).unwrap();
            let d = dual_lattice(&l).unwrap();
            assert_eq!(d.basis, l.basis);
            assert_eq!(l.volume, 1.0);
        }
    }

    #[test]
    fn scaled_lattice_dual() {
        let d = dual_lattice(&Lattice::new(vec![vec![2.0]]).unwrap()).unwrap();
        assert!((d.basis[0][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn skew_lattice_dual() {
        let l = Lattice::new(vec![vec![1.0, 0.0], vec![0.5, 1.0]]).unwrap();
        let d = dual_lattice(&l).unwrap();
        // V = [[1,0],[½,1]], V⁻ᵀ = [[1,−½],[0,1]].
        let want = [[1.0, -0.5], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.basis[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
        for v in &l.basis {
            for w in &d.basis {
                let ip: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                assert!((ip - ip.round()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_lattice_rejected() {
        let r = Lattice::new(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(r, Err(Error::SingularLattice)));
    }

    #[test]
    fn grid_negation_and_fixed_points() {
        let g = TorusGrid::unit(8).unwrap();
        assert_eq!(g.negation(0), 0);
        assert_eq!(g.negation(1), 7);
        assert_eq!(g.fixed_points(), vec![0, 4]);
        assert_eq!(g.origin_and_half(), (0, 4));
        let g2 = TorusGrid::new(Lattice::integer(2).unwrap(), vec![4, 6]).unwrap();
        assert_eq!(g2.fixed_points().len(), 4);
        assert!(TorusGrid::unit(7).is_err());
    }

    #[test]
    fn torus_watson_matches_compensated_bridge() {
        let g = TorusGrid::unit(64).unwrap();
        let k = Kernel::builtin(BuiltinKernel::TorusWatson, Arc::clone(g.space())).unwrap();
        let pts = g.space().points();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert!((k.matrix()[(i, j)] - watson(pts[i][0], pts[j][0])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn watson_coefficients_match_aliased_series() {
        // Sampling aliases a_v onto v mod N: Σ_j 1/(4π²(v+jN)²) = 1/(4N² sin²(πv/N)),
        // and a_0 collects Σ_{j≠0} 1/(4π²j²N²) = 1/(12N²).
        let n = 128;
        let g = TorusGrid::unit(n).unwrap();
        let spec = fourier_kl(&TorusProfile::Watson.sample(&g), &g, 63).unwrap();
        assert!(spec.max_sine <= 1e-10);
        let nf = n as f64;
        for c in &spec.coefficients {
            let v = c.index[0];
            let want = if v == 0 {
                1.0 / (12.0 * nf * nf)
            } else {
                1.0 / (4.0 * nf * nf * (PI * v as f64 / nf).sin().powi(2))
            };
            assert!((c.a - want).abs() < 1e-12 * want + 1e-15, "v={v}: {} vs {want}", c.a);
        }
        // Low modes approach the continuum coefficients 1/(4π²v²).
        let a1 = spec.coefficients.iter().find(|c| c.index == [1]).unwrap();
        assert!((a1.a * 4.0 * PI * PI - 1.0).abs() < 1e-3);
        assert!((a1.alpha - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_profile_has_single_coefficient() {
        let g = TorusGrid::unit(16).unwrap();
        let spec = fourier_kl(&TorusProfile::Constant(0.3).sample(&g), &g, 7).unwrap();
        for c in &spec.coefficients {
            let want = if c.index == [0] { 0.3 } else { 0.0 };
            assert!((c.a - want).abs() < 1e-15);
        }
    }

    #[test]
    fn nyquist_violation() {
        let g = TorusGrid::unit(16).unwrap();
        let r = fourier_kl(&TorusProfile::Watson.sample(&g), &g, 8);
        assert!(matches!(r, Err(Error::Nyquist { axis: 0, points: 16, .. })));
    }

    #[test]
    fn odd_profile_rejected() {
        let g = TorusGrid::unit(16).unwrap();
        let p: Vec<f64> = (0..16).map(|i| (2.0 * PI * i as f64 / 16.0).sin()).collect();
        assert!(matches!(fourier_kl(&p, &g, 4), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn negative_coefficient_rejected() {
        let g = TorusGrid::unit(16).unwrap();
        let p: Vec<f64> = (0..16).map(|i| -(2.0 * PI * i as f64 / 16.0).cos()).collect();
        assert!(matches!(fourier_kl(&p, &g, 4), Err(Error::NotPositiveSemidefinite { .. })));
    }

    #[test]
    fn full_cutoff_reproduces_grid_kernel() {
        let g = TorusGrid::unit(32).unwrap();
        let p = TorusProfile::Watson.sample(&g);
        let spec = fourier_kl(&p, &g, 15).unwrap();
        // Only the N/2 mode is dropped.
        let km = spec.kernel(&g).unwrap();
        let kg = profile_kernel(&p, &g).unwrap();
        let dev = (km.matrix() - kg.matrix()).amax();
        assert!(dev <= spec.truncation_bound + 1e-15);
        assert!((spec.assembly_error - dev).abs() < 1e-15);
    }

    #[test]
    fn truncated_spec_within_continuum_tail() {
        let g = TorusGrid::unit(512).unwrap();
        let cutoff = 40;
        let spec = fourier_kl(&TorusProfile::Watson.sample(&g), &g, cutoff).unwrap();
        let k = Kernel::builtin(BuiltinKernel::TorusWatson, Arc::clone(g.space())).unwrap();
        let dev = (spec.kernel(&g).unwrap().matrix() - k.matrix()).amax();
        // Σ_{|v|>C} 1/(4π²v²), summed far out plus the integral remainder.
        let big = 1_000_000;
        let tail = 2.0 * ((cutoff + 1)..=big).map(|v| 1.0 / (4.0 * PI * PI * (v * v) as f64)).sum::<f64>()
            + 2.0 / (4.0 * PI * PI * (big as f64 + 0.5));
        assert!(dev <= tail, "{dev} > {tail}");
        assert!(spec.truncation_bound <= tail);
        assert!(dev > 0.1 * tail);
    }

    #[test]
    fn circulant_spectrum_is_coefficients() {
        let g = TorusGrid::unit(32).unwrap();
        let spec = fourier_kl(&TorusProfile::Watson.sample(&g), &g, 15).unwrap();
        let s = crate::spectral::eigendecompose(&spec.kernel(&g).unwrap(), 1e-6).unwrap();
        let want = spec_eigenvalues(&spec);
        for (k, w) in want.iter().enumerate() {
            assert!((s.eigenvalues[k] - w).abs() < 1e-14, "{k}");
        }
    }

    #[test]
    fn stationarity_detects_bridge() {
        let g = TorusGrid::unit(16).unwrap();
        let k = profile_kernel(&TorusProfile::Watson.sample(&g), &g).unwrap();
        assert!(check_stationarity(&k, &g, 1e-10).unwrap().passed);
        let b = Kernel::builtin(BuiltinKernel::Bridge, Arc::clone(g.space())).unwrap();
        let r = check_stationarity(&b, &g, 1e-10).unwrap();
        assert!(!r.passed && r.max_spread > 0.01);
    }

    #[test]
    fn parity_parts_are_character_projections() {
        let g = TorusGrid::unit(32).unwrap();
        let k = profile_kernel(&TorusProfile::Watson.sample(&g), &g).unwrap();
        let e = sample(&k, 50, 4).unwrap();
        let parts = parity_decompose(&e).unwrap();
        let table = SymmetryGroup::cyclic(2).unwrap().table;
        let action = g.space().action().unwrap();
        for s in 0..e.len() {
            let pa = project_real_path(e.path(s), action, table.get("pi_a").unwrap()).unwrap();
            let pu = project_real_path(e.path(s), action, table.get("pi_u").unwrap()).unwrap();
            for i in 0..g.len() {
                assert!((parts.odd.path(s)[i] - pa[i]).abs() <= 1e-12);
                assert!((parts.even.path(s)[i] - pu[i]).abs() <= 1e-12);
                assert!((parts.odd.path(s)[i] + parts.even.path(s)[i] - e.path(s)[i]).abs() <= 1e-15);
            }
            assert_eq!(parts.odd.path(s)[0], 0.0);
            assert_eq!(parts.odd.path(s)[16], 0.0);
        }
    }

    #[test]
    fn even_path_has_zero_odd_part() {
        let g = TorusGrid::unit(8).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (2.0 * PI * i as f64 / 8.0).cos()).collect();
        let e = PathEnsemble {
            space: Arc::clone(g.space()),
            samples: DMatrix::from_column_slice(8, 1, &x),
            seed: 0,
            factorization_rank: 0,
        };
        let p = parity_decompose(&e).unwrap();
        assert!(p.odd.samples.amax() < 1e-15);
    }

    #[test]
    fn parity_needs_order_two() {
        let space = Arc::new(IndexSpace::interval(4).unwrap());
        let e = PathEnsemble {
            space,
            samples: DMatrix::zeros(4, 1),
            seed: 0,
            factorization_rank: 0,
        };
        assert!(matches!(parity_decompose(&e), Err(Error::MissingAction)));
    }

    #[test]
    fn small_torus_watson_check() {
        let g = TorusGrid::unit(32).unwrap();
        let spec = fourier_kl(&TorusProfile::Watson.sample(&g), &g, 15).unwrap();
        let r = torus_watson_check(&spec, &g, &TorusWatsonConfig::new(4000, 5)).unwrap();
        assert!(r.conventions[0].holds && r.conventions[1].holds);
        assert!(!r.conventions[2].holds);
        assert_eq!(r.satisfied_by.len(), 2);
        assert_eq!(r.odd_at_fixed_points, 0.0);
        assert!(r.max_parity_inner < 1e-12);
        assert!(r.independence_passed);
        assert!(r.passed, "{:?}", r.law);
    }

    #[test]
    fn spec_json_shape() {
        let g = TorusGrid::new(Lattice::new(vec![vec![1.0, 0.0], vec![0.5, 1.0]]).unwrap(), vec![8, 8]).unwrap();
        let spec = fourier_kl(&TorusProfile::Watson.sample(&g), &g, 3).unwrap();
        let v = serde_json::to_value(spec.to_json()).unwrap();
        assert_eq!(v["grid"], serde_json::json!([8, 8]));
        assert_eq!(v["coefficients"].as_array().unwrap().len(), 49);
        assert!(v["coefficients"][0]["v*"].is_array());
        assert_eq!(v["dual_basis"][0][1], serde_json::json!(-0.5));
    }
}
