//! μ-weighted Karhunen-Loève spectra: eigenpairs of `K·diag(μ)`, eigenvalue
//! clusters, their invariance under a group action and their split into
//! isotypic components.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{CharacterTable, GroupAction};
use crate::kernels::{project_rows, FeatureMap, IndexSpace, Kernel};

/// Default relative gap below which neighbouring eigenvalues share a cluster.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

/// Eigenvalues at or below this fraction of the largest form the null cluster.
pub const NULL_REL: f64 = 1e-12;

/// Residual bound for invariance and containment checks.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// First eigenvalue index of the cluster.
    pub start: usize,
    pub multiplicity: usize,
    /// Mean eigenvalue.
    pub value: f64,
    /// Relative spread `(max − min)/max` within the cluster.
    pub spread: f64,
    /// Whether this is the numerically null cluster.
    pub null: bool,
    /// Whether some neighbours were joined only because their absolute gap is
    /// below the solver resolution (see [`Spectrum::abs_floor`]).
    pub resolution_merged: bool,
}

impl Cluster {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.multiplicity
    }
}

/// Eigenvalues in decreasing order with `μ`-orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub space: Arc<IndexSpace>,
    pub eigenvalues: Vec<f64>,
    /// Column `k` is `f_k`.
    pub vectors: DMatrix<f64>,
    pub clusters: Vec<Cluster>,
    pub rel_tol: f64,
    /// Neighbouring eigenvalues closer than this share a cluster whatever
    /// their relative gap: with a backward error of about `ε·λ_max`, the
    /// eigensolver cannot separate their eigenvectors to [`RESIDUAL_TOL`].
    pub abs_floor: f64,
}

/// Absolute gap below which eigenvectors are not resolved to [`RESIDUAL_TOL`].
pub fn resolution_floor(lambda_max: f64) -> f64 {
    f64::EPSILON * lambda_max.max(0.0) / RESIDUAL_TOL
}

/// Solves `K diag(μ) f = λ f` through the symmetric matrix
/// `diag(μ)^{1/2} K diag(μ)^{1/2}`.
pub fn eigendecompose(k: &Kernel, rel_tol: f64) -> Result<Spectrum> {
    let mut s = eigendecompose_with_floor(k, rel_tol, 0.0)?;
    s.abs_floor = resolution_floor(s.eigenvalues.first().copied().unwrap_or(0.0));
    s.clusters = cluster(&s.eigenvalues, rel_tol, s.abs_floor);
    Ok(s)
}

/// [`eigendecompose`] with an explicit absolute merging floor (0 disables it).
pub fn eigendecompose_with_floor(k: &Kernel, rel_tol: f64, abs_floor: f64) -> Result<Spectrum> {
    let space = Arc::clone(k.space());
    let w = space.weights();
    if let Some(i) = w.iter().position(|&x| x <= 0.0) {
        return Err(Error::InvalidArgument(format!("quadrature weight {i} is not positive")));
    }
    if !(rel_tol >= 0.0) {
        return Err(Error::InvalidArgument("rel_tol must be nonnegative".into()));
    }
    let m = k.len();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |i, j| sw[i] * k.matrix()[(i, j)] * sw[j]);
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m, m);
    for (c, &i) in order.iter().enumerate() {
        let u = eig.eigenvectors.column(i);
        let mut f = DVector::from_fn(m, |r, _| u[r] / sw[r]);
        // Sign convention: the largest-magnitude entry is positive.
        if f[f.iamax()] < 0.0 {
            f.neg_mut();
        }
        vectors.set_column(c, &f);
    }
    let clusters = cluster(&eigenvalues, rel_tol, abs_floor);
    Ok(Spectrum {
        space,
        eigenvalues,
        vectors,
        clusters,
        rel_tol,
        abs_floor,
    })
}

fn cluster(values: &[f64], rel_tol: f64, abs_floor: f64) -> Vec<Cluster> {
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = NULL_REL * max;
    let mut out: Vec<Cluster> = Vec::new();
    let mut i = 0;
    while i < values.len() {
        if values[i] <= floor {
            let rest = &values[i..];
            out.push(Cluster {
                start: i,
                multiplicity: rest.len(),
                value: rest.iter().sum::<f64>() / rest.len() as f64,
                spread: 0.0,
                null: true,
                resolution_merged: false,
            });
            break;
        }
        let mut j = i + 1;
        let mut merged = false;
        while j < values.len() && values[j] > floor {
            let gap = values[j - 1] - values[j];
            if gap <= rel_tol * values[j - 1] {
            } else if gap <= abs_floor {
                merged = true;
            } else {
                break;
            }
            j += 1;
        }
        let part = &values[i..j];
        out.push(Cluster {
            start: i,
            multiplicity: j - i,
            value: part.iter().sum::<f64>() / part.len() as f64,
            spread: (part[0] - part[part.len() - 1]) / part[0],
            null: false,
            resolution_merged: merged,
        });
        i = j;
    }
    out
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }

    /// Non-null clusters in order, as `(value, multiplicity)`.
    pub fn distinct(&self) -> Vec<(f64, usize)> {
        self.clusters.iter().filter(|c| !c.null).map(|c| (c.value, c.multiplicity)).collect()
    }

    /// `Σ_k λ_k f_k f_kᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_top(self.len())
    }

    pub fn reconstruct_top(&self, p: usize) -> DMatrix<f64> {
        let p = p.min(self.len());
        let f = self.vectors.columns(0, p);
        let scaled = DMatrix::from_fn(self.vectors.nrows(), p, |i, k| f[(i, k)] * self.eigenvalues[k]);
        scaled * f.transpose()
    }

    /// `Σ_k λ_kⁿ` for `n = 1..=n_max`.
    pub fn power_sums(&self, n_max: usize) -> Vec<f64> {
        (1..=n_max)
            .map(|n| self.eigenvalues.iter().map(|l| l.powi(n as i32)).sum())
            .collect()
    }

    /// `Σ_{k ≥ p} λ_k`, the trace lost by keeping `p` terms.
    pub fn truncation_bound(&self, p: usize) -> f64 {
        self.eigenvalues.iter().skip(p).map(|l| l.max(0.0)).sum()
    }

    /// Truncated KL feature map `Φ = [√λ_1 f_1, …, √λ_p f_p]` with unit weights.
    pub fn kl_feature_map(&self, p: usize) -> Result<FeatureMap> {
        let p = p.min(self.len());
        let phi = DMatrix::from_fn(self.vectors.nrows(), p, |i, k| {
            self.vectors[(i, k)] * self.eigenvalues[k].max(0.0).sqrt()
        });
        FeatureMap::new(Arc::clone(&self.space), phi, vec![1.0; p])
    }

    fn cluster_basis(&self, c: &Cluster) -> DMatrix<f64> {
        self.vectors.columns(c.start, c.multiplicity).into_owned()
    }

    /// Largest `‖v − F Fᵀ diag(μ) v‖_μ` over the columns `v` of `vs`, for the
    /// μ-orthonormal basis `F`.
    fn max_residual(&self, basis: &DMatrix<f64>, vs: &DMatrix<f64>) -> f64 {
        let w = self.space.weights();
        let dv = DMatrix::from_fn(vs.nrows(), vs.ncols(), |i, j| vs[(i, j)] * w[i]);
        let r = vs - basis * (basis.transpose() * dv);
        (0..r.ncols())
            .map(|j| r.column(j).iter().zip(w).map(|(x, w)| x * x * w).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterInvariance {
    pub cluster: usize,
    pub value: f64,
    pub multiplicity: usize,
    pub max_residual: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenspaceInvarianceReport {
    pub clusters: Vec<ClusterInvariance>,
    pub tol: f64,
    pub max_residual: f64,
    pub passed: bool,
}

/// For each cluster and group element, how far the translated basis vectors
/// `f(g⁻¹·y)` leave the cluster's span.
pub fn check_eigenspace_invariance(s: &Spectrum, action: &GroupAction, tol: f64) -> Result<EigenspaceInvarianceReport> {
    if action.space_size() != s.vectors.nrows() {
        return Err(Error::DimensionMismatch {
            what: "action space",
            expected: s.vectors.nrows(),
            found: action.space_size(),
        });
    }
    let g = action.group();
    let mut clusters = Vec::with_capacity(s.clusters.len());
    for (ci, c) in s.clusters.iter().enumerate() {
        let basis = s.cluster_basis(c);
        let mut worst = 0.0f64;
        for h in 0..g.order() {
            let perm = &action.perm()[g.inv(h)];
            let moved = DMatrix::from_fn(basis.nrows(), basis.ncols(), |i, l| basis[(perm[i], l)]);
            worst = worst.max(s.max_residual(&basis, &moved));
        }
        clusters.push(ClusterInvariance {
            cluster: ci,
            value: c.value,
            multiplicity: c.multiplicity,
            max_residual: worst,
            passed: worst <= tol,
        });
    }
    let max_residual = clusters.iter().map(|c| c.max_residual).fold(0.0, f64::max);
    Ok(EigenspaceInvarianceReport {
        passed: clusters.iter().all(|c| c.passed),
        clusters,
        tol,
        max_residual,
    })
}

#[derive(Clone, Debug)]
pub struct IsotypicPart {
    pub label: String,
    /// μ-orthonormal basis of the component, one column per vector.
    pub basis: DMatrix<f64>,
    /// Largest distance of a projected basis vector from the cluster span.
    pub containment_residual: f64,
}

impl IsotypicPart {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Clone, Debug)]
pub struct ClusterDecomposition {
    pub cluster: usize,
    pub value: f64,
    pub multiplicity: usize,
    pub parts: Vec<IsotypicPart>,
}

impl ClusterDecomposition {
    pub fn dims(&self) -> Vec<(String, usize)> {
        self.parts.iter().map(|p| (p.label.clone(), p.dim())).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CanonicalDecomposition {
    pub clusters: Vec<ClusterDecomposition>,
    pub tol: f64,
    pub max_containment_residual: f64,
}

impl CanonicalDecomposition {
    pub fn containment_passed(&self) -> bool {
        self.max_containment_residual <= self.tol
    }

    /// One row per canonical basis vector: `k, lambda, cluster_id, irrep_label`.
    pub fn to_csv(&self, s: &Spectrum) -> String {
        let mut out = String::from("k,lambda,cluster_id,irrep_label\n");
        for cd in &self.clusters {
            let c = &s.clusters[cd.cluster];
            let mut k = c.start;
            for part in &cd.parts {
                for _ in 0..part.dim() {
                    let _ = writeln!(out, "{},{:e},{},{}", k + 1, s.eigenvalues[k], cd.cluster, part.label);
                    k += 1;
                }
            }
        }
        out
    }
}

/// Splits each cluster into isotypic components by projecting its basis with
/// every character; the projected images are orthonormalized through their
/// μ-Gram matrix. Fails when the component dimensions do not add up to the
/// multiplicity.
pub fn canonical_decomposition(s: &Spectrum, table: &CharacterTable) -> Result<CanonicalDecomposition> {
    let action = s.space.require_action()?;
    let w = s.space.weights();
    let mut clusters = Vec::with_capacity(s.clusters.len());
    let mut max_res = 0.0f64;
    for (ci, c) in s.clusters.iter().enumerate() {
        let basis = s.cluster_basis(c);
        let mut parts = Vec::new();
        for pi in table.irreps() {
            let img = project_rows(&basis, action, pi)?;
            let dimg = DMatrix::from_fn(img.nrows(), img.ncols(), |i, j| img[(i, j)] * w[i]);
            let gram = img.transpose() * dimg;
            let gram = (&gram + gram.transpose()) * 0.5;
            let ge = SymmetricEigen::new(gram);
            let mut keep: Vec<usize> = (0..ge.eigenvalues.len()).filter(|&i| ge.eigenvalues[i] > 0.5).collect();
            keep.sort_by(|&a, &b| ge.eigenvalues[b].total_cmp(&ge.eigenvalues[a]));
            let mut sub = DMatrix::zeros(img.nrows(), keep.len());
            for (col, &i) in keep.iter().enumerate() {
                let v = &img * ge.eigenvectors.column(i) / ge.eigenvalues[i].sqrt();
                sub.set_column(col, &v);
            }
            let res = s.max_residual(&basis, &img);
            max_res = max_res.max(res);
            if !keep.is_empty() {
                parts.push(IsotypicPart {
                    label: pi.label.clone(),
                    basis: sub,
                    containment_residual: res,
                });
            }
        }
        let total: usize = parts.iter().map(IsotypicPart::dim).sum();
        if total != c.multiplicity {
            return Err(Error::DecompositionFailed(format!(
                "cluster {ci} (value {:e}) has multiplicity {} but its components have total dimension {total}",
                c.value, c.multiplicity
            )));
        }
        clusters.push(ClusterDecomposition {
            cluster: ci,
            value: c.value,
            multiplicity: c.multiplicity,
            parts,
        });
    }
    Ok(CanonicalDecomposition {
        clusters,
        tol: RESIDUAL_TOL,
        max_containment_residual: max_res,
    })
}

/// `k, lambda, cluster_id` for every eigenvalue.
pub fn spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::from("k,lambda,cluster_id\n");
    for (ci, c) in s.clusters.iter().enumerate() {
        for k in c.range() {
            let _ = writeln!(out, "{},{:e},{}", k + 1, s.eigenvalues[k], ci);
        }
    }
    out
}
