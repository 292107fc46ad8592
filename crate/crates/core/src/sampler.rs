//! Seeded Gaussian sampling on a discretized index space.
//!
//! Every sample owns a ChaCha stream keyed by `(seed, sample index)`, and work
//! is split into fixed blocks of [`BLOCK`] samples, so results do not depend
//! on the number of worker threads.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulants::{analytic_cumulants, CumulantVector};
use crate::error::{Error, Result};
use crate::group::CharacterTable;
use crate::kernels::{project_rows, BuiltinKernel, IndexSpace, Kernel, PSD_REL_TOL};
use crate::stats::{compare_distributions, kstat_variance, DistributionComparison};

/// Samples per work unit.
pub const BLOCK: usize = 256;

/// Eigenvalues below this fraction of the largest are dropped from the factor.
pub const CLIP_REL: f64 = 1e-12;

/// Derives an independent seed for a named sub-experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - tag);
    rng.next_u64()
}

fn eigen_factor(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = k.nrows();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(k.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min < -PSD_REL_TOL * max.max(0.0) {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    let mut keep: Vec<usize> = (0..m).filter(|&i| max > 0.0 && eig.eigenvalues[i] > CLIP_REL * max).collect();
    // Descending order makes the factor independent of the solver's output order.
    keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut l = DMatrix::zeros(m, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        l.set_column(c, &(eig.eigenvectors.column(i) * s));
    }
    Ok(l)
}

#[derive(Clone, Debug)]
enum Factor {
    /// `K = L Lᵀ`.
    Dense(DMatrix<f64>),
    /// `K = (L₁L₁ᵀ) ⊗ (L₂L₂ᵀ)`; a sample is `L₁ Ξ L₂ᵀ` read row-major.
    Kronecker(DMatrix<f64>, DMatrix<f64>),
}

/// Square-root factor of a kernel, ready to draw samples.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    space: Arc<IndexSpace>,
    factor: Factor,
}

impl GaussianSampler {
    /// Tensor products of two kernels are factored per axis; everything else
    /// through a dense eigendecomposition.
    pub fn new(k: &Kernel) -> Result<Self> {
        if k.factors().len() == 2 {
            let l1 = eigen_factor(k.factors()[0].matrix())?;
            let l2 = eigen_factor(k.factors()[1].matrix())?;
            return Ok(Self {
                space: Arc::clone(k.space()),
                factor: Factor::Kronecker(l1, l2),
            });
        }
        Self::dense(k)
    }

    pub fn dense(k: &Kernel) -> Result<Self> {
        Ok(Self {
            space: Arc::clone(k.space()),
            factor: Factor::Dense(eigen_factor(k.matrix())?),
        })
    }

    pub fn space(&self) -> &Arc<IndexSpace> {
        &self.space
    }

    /// Number of unit normals consumed per path.
    pub fn rank(&self) -> usize {
        match &self.factor {
            Factor::Dense(l) => l.ncols(),
            Factor::Kronecker(a, b) => a.ncols() * b.ncols(),
        }
    }

    fn dim(&self) -> usize {
        self.space.len()
    }

    /// Unit normals of samples `start..start+count`: `copies` consecutive
    /// blocks of `rank` normals per sample stream.
    fn noise(&self, seed: u64, start: usize, count: usize, copies: usize) -> Vec<DMatrix<f64>> {
        let r = self.rank();
        let mut out = vec![DMatrix::zeros(r, count); copies];
        for j in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((start + j) as u64);
            for xi in out.iter_mut() {
                for i in 0..r {
                    xi[(i, j)] = StandardNormal.sample(&mut rng);
                }
            }
        }
        out
    }

    /// Maps unit normals (`rank × count`) to paths (`m × count`).
    fn apply(&self, xi: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Factor::Dense(l) => {
                if l.ncols() == 0 {
                    DMatrix::zeros(self.dim(), xi.ncols())
                } else {
                    l * xi
                }
            }
            Factor::Kronecker(l1, l2) => {
                let (n1, r1) = l1.shape();
                let (n2, r2) = l2.shape();
                let b = xi.ncols();
                if r1 == 0 || r2 == 0 {
                    return DMatrix::zeros(n1 * n2, b);
                }
                // Column j of xi, read as an r1 × r2 matrix, is Ξ_j, so xi is
                // already X = [Ξ_1 … Ξ_b] (r1 × r2·b) in column-major memory.
                let x = DMatrix::from_column_slice(r1, r2 * b, xi.as_slice());
                let y = l1 * x;
                // Column (j·n1 + i1) of Wᵀ is row i1 of Y_j = L1 Ξ_j.
                let wt = DMatrix::from_fn(r2, n1 * b, |c, col| y[(col % n1, (col / n1) * r2 + c)]);
                // Column (j·n1 + i1) of L2 Wᵀ is row i1 of Z_j, which is the
                // row-major layout of sample j.
                let z = l2 * wt;
                DMatrix::from_vec(n1 * n2, b, z.data.into())
            }
        }
    }

    fn blocks(count: usize) -> Vec<(usize, usize)> {
        (0..count.div_ceil(BLOCK))
            .map(|b| (b * BLOCK, BLOCK.min(count - b * BLOCK)))
            .collect()
    }

    /// Paths `Z₁` and, unless ρ = 1, `Z₂ = ρZ₁ + √(1−ρ²)Z₁′` for one block.
    fn pair_block(&self, rho: f64, seed: u64, start: usize, count: usize) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        if rho == 1.0 {
            let xi = self.noise(seed, start, count, 1);
            return (self.apply(&xi[0]), None);
        }
        let xi = self.noise(seed, start, count, 2);
        let s = (1.0 - rho * rho).sqrt();
        let xi2 = &xi[0] * rho + &xi[1] * s;
        (self.apply(&xi[0]), Some(self.apply(&xi2)))
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<PathEnsemble> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        let parts: Vec<DMatrix<f64>> = Self::blocks(count)
            .into_par_iter()
            .map(|(start, n)| self.apply(&self.noise(seed, start, n, 1)[0]))
            .collect();
        Ok(PathEnsemble {
            space: Arc::clone(&self.space),
            samples: concat_columns(self.dim(), count, &parts),
            seed,
            factorization_rank: self.rank(),
        })
    }

    pub fn sample_pair(&self, rho: f64, count: usize, seed: u64) -> Result<CorrelatedPair> {
        check_pair_args(rho, count)?;
        let parts: Vec<(DMatrix<f64>, Option<DMatrix<f64>>)> = Self::blocks(count)
            .into_par_iter()
            .map(|(start, n)| self.pair_block(rho, seed, start, n))
            .collect();
        let first: Vec<DMatrix<f64>> = parts.iter().map(|p| p.0.clone()).collect();
        let second: Vec<DMatrix<f64>> = parts
            .into_iter()
            .map(|(z1, z2)| z2.unwrap_or(z1))
            .collect();
        let mk = |parts: &[DMatrix<f64>]| PathEnsemble {
            space: Arc::clone(&self.space),
            samples: concat_columns(self.dim(), count, parts),
            seed,
            factorization_rank: self.rank(),
        };
        Ok(CorrelatedPair {
            first: mk(&first),
            second: mk(&second),
            rho,
        })
    }

    /// Applies `f` to each block of paths (`m × b`, samples `start..start+b`)
    /// and returns the per-block results in block order. Paths are bitwise
    /// equal to the matching columns of [`GaussianSampler::sample`].
    pub fn map_blocks<T, F>(&self, count: usize, seed: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &DMatrix<f64>) -> T + Sync + Send,
    {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        Ok(Self::blocks(count)
            .into_par_iter()
            .map(|(start, n)| f(start, &self.apply(&self.noise(seed, start, n, 1)[0])))
            .collect())
    }

    /// `∫ Z₁Z₂ dμ` per sample without materializing the ensembles; bitwise
    /// equal to `quadratic_functional(&self.sample_pair(rho, count, seed)?)`.
    pub fn pair_functional(&self, rho: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
        check_pair_args(rho, count)?;
        let w = self.space.weights();
        let parts: Vec<Vec<f64>> = Self::blocks(count)
            .into_par_iter()
            .map(|(start, n)| {
                let (z1, z2) = self.pair_block(rho, seed, start, n);
                let z2 = z2.as_ref().unwrap_or(&z1);
                (0..n).map(|j| weighted_dot(z1.column(j).as_slice(), z2.column(j).as_slice(), w)).collect()
            })
            .collect();
        Ok(parts.concat())
    }
}

fn check_pair_args(rho: f64, count: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::OutOfDomain(format!("correlation {rho} outside [0, 1]")));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    Ok(())
}

fn concat_columns(m: usize, count: usize, parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, count);
    let mut c = 0;
    for p in parts {
        out.columns_mut(c, p.ncols()).copy_from(p);
        c += p.ncols();
    }
    out
}

fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

/// Sampled paths, one per column.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub space: Arc<IndexSpace>,
    /// `m × S`.
    pub samples: DMatrix<f64>,
    pub seed: u64,
    pub factorization_rank: usize,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn path(&self, s: usize) -> &[f64] {
        let m = self.samples.nrows();
        &self.samples.as_slice()[s * m..(s + 1) * m]
    }

    /// Uncentered second moments `(1/S) Σ_s Z_s Z_sᵀ`.
    pub fn empirical_covariance(&self) -> DMatrix<f64> {
        empirical_cross_covariance(self, self)
    }
}

/// `(1/S) Σ_s A_s B_sᵀ`.
pub fn empirical_cross_covariance(a: &PathEnsemble, b: &PathEnsemble) -> DMatrix<f64> {
    &a.samples * b.samples.transpose() / a.len() as f64
}

#[derive(Clone, Debug)]
pub struct CorrelatedPair {
    pub first: PathEnsemble,
    pub second: PathEnsemble,
    pub rho: f64,
}

pub fn sample(k: &Kernel, count: usize, seed: u64) -> Result<PathEnsemble> {
    GaussianSampler::new(k)?.sample(count, seed)
}

pub fn sample_pair(k: &Kernel, rho: f64, count: usize, seed: u64) -> Result<CorrelatedPair> {
    GaussianSampler::new(k)?.sample_pair(rho, count, seed)
}

/// `Σ_i Z₁[i] Z₂[i] μ_i` per sample.
pub fn quadratic_functional(p: &CorrelatedPair) -> Vec<f64> {
    let w = p.first.space.weights();
    (0..p.first.len())
        .map(|s| weighted_dot(p.first.path(s), p.second.path(s), w))
        .collect()
}

/// Per-sample `⟨a_s, b_s⟩_μ`.
pub fn pathwise_inner(a: &PathEnsemble, b: &PathEnsemble) -> Vec<f64> {
    let w = a.space.weights();
    (0..a.len()).map(|s| weighted_dot(a.path(s), b.path(s), w)).collect()
}

/// Character components of every path, in table order.
pub fn decompose_ensemble(e: &PathEnsemble, table: &CharacterTable) -> Result<Vec<(String, PathEnsemble)>> {
    let action = e.space.require_action()?;
    table
        .irreps()
        .iter()
        .map(|pi| {
            let samples = project_rows(&e.samples, action, pi)?;
            Ok((
                pi.label.clone(),
                PathEnsemble {
                    space: Arc::clone(&e.space),
                    samples,
                    seed: e.seed,
                    factorization_rank: e.factorization_rank,
                },
            ))
        })
        .collect()
}

/// Settings shared by the duplication and quadruplication experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityConfig {
    /// Points per axis.
    pub grid: usize,
    pub samples: usize,
    pub rho: f64,
    pub seed: u64,
    pub ks_threshold: f64,
    /// Width, in standard deviations, of the k-statistic acceptance band.
    pub z_score: f64,
    /// Cumulant orders compared (at most 4).
    pub orders: usize,
}

impl IdentityConfig {
    pub fn duplication(rho: f64, seed: u64) -> Self {
        Self {
            grid: 256,
            samples: 100_000,
            rho,
            seed,
            ks_threshold: 0.01,
            z_score: 4.0,
            orders: 4,
        }
    }

    pub fn quadruplication(rho: f64, seed: u64) -> Self {
        Self {
            grid: 32,
            samples: 50_000,
            rho,
            seed,
            ks_threshold: 0.015,
            z_score: 4.0,
            orders: 3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid == 0 {
            return Err(Error::InvalidArgument("grid must be positive".into()));
        }
        if !(1..=4).contains(&self.orders) {
            return Err(Error::InvalidArgument(format!("orders {} not in 1..=4", self.orders)));
        }
        if !(self.ks_threshold > 0.0 && self.z_score > 0.0) {
            return Err(Error::InvalidArgument("thresholds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::OutOfDomain(format!("correlation {} outside [0, 1]", self.rho)));
        }
        Ok(())
    }
}

/// Outcome of an identity-in-law experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub grid: usize,
    pub samples: usize,
    pub rho: f64,
    pub seed: u64,
    pub lhs_seed: u64,
    pub rhs_seeds: Vec<u64>,
    /// Exact cumulants `κ_1..κ_8` of the discretized left and right sides.
    pub lhs_analytic: Vec<f64>,
    pub rhs_analytic: Vec<f64>,
    pub comparison: DistributionComparison,
    /// `|κ_n^L − κ_n^R|` of the discretizations.
    pub discretization_gap: Vec<f64>,
    /// `√(var k_n^L + var k_n^R)`.
    pub mc_sd: Vec<f64>,
    /// `discretization_gap + z·mc_sd`.
    pub gap_tolerance: Vec<f64>,
    pub gap_passed: Vec<bool>,
    pub ks_threshold: f64,
    pub ks_passed: bool,
    pub z_score: f64,
    pub passed: bool,
}

impl IdentityReport {
    pub fn lhs_mean(&self) -> f64 {
        self.comparison.kstats_a[0]
    }

    pub fn rhs_mean(&self) -> f64 {
        self.comparison.kstats_b[0]
    }
}

/// Orders of analytic cumulants carried by the reports.
pub const ANALYTIC_ORDERS: usize = 8;

/// Distributional agreement of two samples whose exact cumulants are known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawComparison {
    pub comparison: DistributionComparison,
    pub discretization_gap: Vec<f64>,
    pub mc_sd: Vec<f64>,
    pub gap_tolerance: Vec<f64>,
    pub gap_passed: Vec<bool>,
    pub ks_threshold: f64,
    pub ks_passed: bool,
    pub z_score: f64,
    pub passed: bool,
}

/// KS distance below `ks_threshold` and, for orders `1..=orders`, k-statistic
/// gaps within `|κ_n^L − κ_n^R| + z·√(var k_n^L + var k_n^R)`. The cumulant
/// slices must reach order `2·orders`.
pub fn compare_in_law(
    lhs: &[f64],
    rhs: &[f64],
    kl: &[f64],
    kr: &[f64],
    orders: usize,
    z_score: f64,
    ks_threshold: f64,
) -> Result<LawComparison> {
    if !(1..=4).contains(&orders) {
        return Err(Error::InvalidArgument(format!("orders {orders} not in 1..=4")));
    }
    let comparison = compare_distributions(lhs, rhs)?;
    let mut gap = Vec::new();
    let mut sd = Vec::new();
    let mut tol = Vec::new();
    let mut ok = Vec::new();
    for order in 1..=orders {
        let d = (kl[order - 1] - kr[order - 1]).abs();
        let v = kstat_variance(kl, lhs.len(), order)? + kstat_variance(kr, rhs.len(), order)?;
        let t = d + z_score * v.sqrt();
        ok.push(comparison.cumulant_gaps[order - 1].abs() <= t);
        gap.push(d);
        sd.push(v.sqrt());
        tol.push(t);
    }
    let ks_passed = comparison.ks_distance < ks_threshold;
    Ok(LawComparison {
        passed: ks_passed && ok.iter().all(|&b| b),
        comparison,
        discretization_gap: gap,
        mc_sd: sd,
        gap_tolerance: tol,
        gap_passed: ok,
        ks_threshold,
        ks_passed,
        z_score,
    })
}

#[allow(clippy::too_many_arguments)]
fn law_report(
    identity: &str,
    cfg: &IdentityConfig,
    lhs: &[f64],
    rhs: &[f64],
    kl: &CumulantVector,
    kr: &CumulantVector,
    lhs_seed: u64,
    rhs_seeds: Vec<u64>,
) -> Result<IdentityReport> {
    let law = compare_in_law(lhs, rhs, &kl.values, &kr.values, cfg.orders, cfg.z_score, cfg.ks_threshold)?;
    Ok(IdentityReport {
        identity: identity.into(),
        grid: cfg.grid,
        samples: cfg.samples,
        rho: cfg.rho,
        seed: cfg.seed,
        lhs_seed,
        rhs_seeds,
        lhs_analytic: kl.values.clone(),
        rhs_analytic: kr.values.clone(),
        passed: law.passed,
        comparison: law.comparison,
        discretization_gap: law.discretization_gap,
        mc_sd: law.mc_sd,
        gap_tolerance: law.gap_tolerance,
        gap_passed: law.gap_passed,
        ks_threshold: law.ks_threshold,
        ks_passed: law.ks_passed,
        z_score: law.z_score,
    })
}

/// `Σ_j c · F_j` over independent pair functionals `F_j` with seeds `seeds`.
fn scaled_sum(sampler: &GaussianSampler, rho: f64, count: usize, seeds: &[u64], c: f64) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; count];
    for &s in seeds {
        for (a, x) in acc.iter_mut().zip(sampler.pair_functional(rho, count, s)?) {
            *a += c * x;
        }
    }
    Ok(acc)
}

/// Compensated-bridge functional against a quarter of two independent bridge
/// functionals, for a ρ-correlated pair.
pub fn duplication_check(cfg: &IdentityConfig) -> Result<IdentityReport> {
    cfg.validate()?;
    let space = Arc::new(IndexSpace::interval_with_reversal(cfg.grid)?);
    let watson = Kernel::builtin(BuiltinKernel::Watson, Arc::clone(&space))?;
    let bridge = Kernel::builtin(BuiltinKernel::Bridge, space)?;
    let lhs_seed = derive_seed(cfg.seed, 0);
    let rhs_seeds = vec![derive_seed(cfg.seed, 1), derive_seed(cfg.seed, 2)];
    let lhs = GaussianSampler::new(&watson)?.pair_functional(cfg.rho, cfg.samples, lhs_seed)?;
    let rhs = scaled_sum(&GaussianSampler::new(&bridge)?, cfg.rho, cfg.samples, &rhs_seeds, 0.25)?;
    let kl = analytic_cumulants(&watson, cfg.rho, ANALYTIC_ORDERS)?;
    let kr = analytic_cumulants(&bridge, cfg.rho, ANALYTIC_ORDERS)?.scaled_sum(2, 0.25);
    law_report("duplication", cfg, &lhs, &rhs, &kl, &kr, lhs_seed, rhs_seeds)
}

/// Compensated sheet functional against a sixteenth of four independent
/// tied-down sheet functionals, on a `grid × grid` product grid.
pub fn quadruplication_check(cfg: &IdentityConfig) -> Result<IdentityReport> {
    cfg.validate()?;
    let axis = Arc::new(IndexSpace::interval_with_reversal(cfg.grid)?);
    let space = Arc::new(IndexSpace::product(&[Arc::clone(&axis), axis], true)?);
    let compensated = Kernel::builtin(BuiltinKernel::SheetCompensated, Arc::clone(&space))?;
    let tied = Kernel::builtin(BuiltinKernel::SheetTied, space)?;
    let lhs_seed = derive_seed(cfg.seed, 0);
    let rhs_seeds: Vec<u64> = (1..=4).map(|t| derive_seed(cfg.seed, t)).collect();
    let lhs = GaussianSampler::new(&compensated)?.pair_functional(cfg.rho, cfg.samples, lhs_seed)?;
    let rhs = scaled_sum(&GaussianSampler::new(&tied)?, cfg.rho, cfg.samples, &rhs_seeds, 1.0 / 16.0)?;
    let kl = analytic_cumulants(&compensated, cfg.rho, ANALYTIC_ORDERS)?;
    let kr = analytic_cumulants(&tied, cfg.rho, ANALYTIC_ORDERS)?.scaled_sum(4, 1.0 / 16.0);
    law_report("quadruplication", cfg, &lhs, &rhs, &kl, &kr, lhs_seed, rhs_seeds)
}

/// Monte Carlo estimate of `E[exp(λ² ∫ Z₁Z₂ dμ)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfEstimate {
    pub lambda: f64,
    pub rho: f64,
    pub samples: usize,
    pub seed: u64,
    pub estimate: f64,
    pub std_error: f64,
}

pub fn mgf_monte_carlo(k: &Kernel, lambda: f64, rho: f64, count: usize, seed: u64) -> Result<MgfEstimate> {
    let theta = lambda * lambda;
    let q = GaussianSampler::new(k)?.pair_functional(rho, count, seed)?;
    let e: Vec<f64> = q.iter().map(|x| (theta * x).exp()).collect();
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(MgfEstimate {
        lambda,
        rho,
        samples: count,
        seed,
        estimate: mean,
        std_error: (var / n).sqrt(),
    })
}
