//! Cumulants of the quadratic functional `∫ Z₁Z₂ dμ` of a ρ-correlated
//! Gaussian pair, the Watson-type relation between character components and
//! the moment generating function of the polarized Watson functional.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::CharacterTable;
use crate::kernels::{check_invariance, contract, project_kernel_diag, Kernel};

/// Number of distinct eigenvalue pairs used by [`mgf_watson`].
pub const MGF_PAIRS: usize = 2000;

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::OutOfDomain(format!("correlation {rho} outside [0, 1]")));
    }
    Ok(())
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `K(n, ρ)`, evaluated from its even/odd binomial sums.
pub fn k_coeff(n: usize, rho: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("K(n, rho) needs n >= 1".into()));
    }
    if n == 1 {
        return Ok(2.0 * rho);
    }
    let m = (n - 1) as u64;
    let mut s = 0.0;
    if n % 2 == 0 {
        for j in 0..(n / 2) as u64 {
            s += binomial(m, 2 * j) * rho.powi(2 * j as i32);
            s += binomial(m, 2 * j + 1) * rho.powi(2 * j as i32 + 2);
        }
    } else {
        for j in 0..=((n - 1) / 2) as u64 {
            s += binomial(m, 2 * j) * rho.powi(2 * j as i32 + 1);
        }
        for j in 0..((n - 1) / 2) as u64 {
            s += binomial(m, 2 * j + 1) * rho.powi(2 * j as i32 + 1);
        }
    }
    Ok(2.0 * s)
}

/// `c_n = 2ⁿ⁻¹ (n−1)!`, the cumulant coefficient of a Gaussian quadratic form.
pub fn cumulant_coefficient(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("c_n needs n >= 1".into()));
    }
    Ok((1..n).fold(2f64.powi(n as i32 - 1), |acc, k| acc * k as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulantVector {
    pub rho: f64,
    /// `values[n-1] = κ_n`.
    pub values: Vec<f64>,
}

impl CumulantVector {
    /// Cumulants from the weighted traces `tr_n = tr((diag(μ)R)ⁿ)`.
    pub fn from_traces(traces: &[f64], rho: f64) -> Result<Self> {
        check_rho(rho)?;
        let values = traces
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let n = i + 1;
                if n == 1 {
                    Ok(rho * t)
                } else {
                    Ok(cumulant_coefficient(n)? * k_coeff(n, rho)? * 0.5f64.powi(n as i32) * t)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rho, values })
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }

    /// Cumulants of `c·Σ_j X_j` for `copies` independent copies `X_j` of this law.
    pub fn scaled_sum(&self, copies: usize, c: f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| copies as f64 * c.powi(i as i32 + 1) * v)
            .collect();
        Self { rho: self.rho, values }
    }
}

pub fn analytic_cumulants(k: &Kernel, rho: f64, n_max: usize) -> Result<CumulantVector> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    check_rho(rho)?;
    CumulantVector::from_traces(&k.power_traces(n_max), rho)
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrrepCumulants {
    pub label: String,
    pub traces: Vec<f64>,
    pub cumulants: Vec<f64>,
    /// Relative gap between `K·tr_n(R^{π⊗π})` and `K·tr_n(R)/|Ĝ|`; `None` when vacuous.
    #[serde(rename = "cII_dev")]
    pub c2_dev: Vec<Option<f64>>,
    /// Largest relative gap to any other irrep at order `n`; `None` when vacuous.
    #[serde(rename = "cIII_dev")]
    pub c3_dev: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatsonVerdicts {
    #[serde(rename = "cII")]
    pub c2: bool,
    #[serde(rename = "cIII")]
    pub c3: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatsonTolerances {
    pub relative: f64,
    pub invariance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatsonCheckReport {
    pub rho: f64,
    pub n_max: usize,
    pub full_traces: Vec<f64>,
    /// Orders `n` with `K(n, ρ) = 0`, for which both conditions hold trivially.
    pub vacuous_orders: Vec<usize>,
    pub per_irrep: Vec<IrrepCumulants>,
    pub verdicts: WatsonVerdicts,
    pub tolerances: WatsonTolerances,
}

impl WatsonCheckReport {
    pub fn passed(&self) -> bool {
        self.verdicts.c2 && self.verdicts.c3
    }

    pub fn max_c2_dev(&self) -> f64 {
        self.per_irrep.iter().flat_map(|p| p.c2_dev.iter().flatten()).fold(0.0, |a, &b| a.max(b))
    }

    pub fn max_c3_dev(&self) -> f64 {
        self.per_irrep.iter().flat_map(|p| p.c3_dev.iter().flatten()).fold(0.0, |a, &b| a.max(b))
    }
}

/// Tolerance of the invariance gate, relative to the largest kernel entry.
const INVARIANCE_REL_TOL: f64 = 1e-10;

/// Compares the per-irrep contraction traces against the full trace split
/// evenly over the irreps, and against each other. `tol` is relative.
pub fn watson_relation_check(
    k: &Kernel,
    table: &CharacterTable,
    rho: f64,
    n_max: usize,
    tol: f64,
) -> Result<WatsonCheckReport> {
    check_rho(rho)?;
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    if let Some(bad) = table.irreps().iter().find(|p| !p.real_valued) {
        return Err(Error::ComplexCharacter(bad.label.clone()));
    }
    let inv_tol = INVARIANCE_REL_TOL * k.matrix().amax().max(f64::MIN_POSITIVE);
    let inv = check_invariance(k, inv_tol)?;
    if !inv.passed {
        return Err(Error::NotInvariant {
            max_deviation: inv.max_deviation,
            tol: inv_tol,
        });
    }
    let full = k.power_traces(n_max);
    let coeffs = (1..=n_max).map(|n| k_coeff(n, rho)).collect::<Result<Vec<_>>>()?;
    let vacuous: Vec<usize> = (1..=n_max).filter(|&n| coeffs[n - 1] == 0.0).collect();
    let h = table.len() as f64;

    let comps = table
        .irreps()
        .iter()
        .map(|pi| {
            let kp = project_kernel_diag(k, pi)?;
            Ok((pi.label.clone(), kp.power_traces(n_max)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_irrep = Vec::with_capacity(comps.len());
    for (a, (label, tr)) in comps.iter().enumerate() {
        let mut c2 = Vec::with_capacity(n_max);
        let mut c3 = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let kc = coeffs[n - 1];
            if kc == 0.0 {
                c2.push(None);
                c3.push(None);
                continue;
            }
            c2.push(Some(rel_gap(kc * tr[n - 1], kc * full[n - 1] / h)));
            let worst = comps
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != a)
                .map(|(_, (_, other))| rel_gap(kc * tr[n - 1], kc * other[n - 1]))
                .fold(0.0, f64::max);
            c3.push(Some(worst));
        }
        per_irrep.push(IrrepCumulants {
            label: label.clone(),
            traces: tr.clone(),
            cumulants: CumulantVector::from_traces(tr, rho)?.values,
            c2_dev: c2,
            c3_dev: c3,
        });
    }
    let ok = |f: fn(&IrrepCumulants) -> &Vec<Option<f64>>| {
        per_irrep.iter().all(|p| f(p).iter().flatten().all(|&d| d <= tol))
    };
    let verdicts = WatsonVerdicts {
        c2: ok(|p| &p.c2_dev),
        c3: ok(|p| &p.c3_dev),
    };
    Ok(WatsonCheckReport {
        rho,
        n_max,
        full_traces: full,
        vacuous_orders: vacuous,
        per_irrep,
        verdicts,
        tolerances: WatsonTolerances {
            relative: tol,
            invariance: inv_tol,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Z2ConditionReport {
    /// `values[n-1] = Σ_i [R⊗₍ₙ₎R](y_i, g·y_i) μ_i`.
    pub values: Vec<f64>,
    /// The matching diagonal traces, for scale.
    pub traces: Vec<f64>,
    pub per_order_passed: Vec<bool>,
    pub tol: f64,
    pub passed: bool,
}

/// Evaluates the twisted traces `∫[R⊗₍ₙ₎R](y, g·y) μ(dy)` for the
/// non-identity element `g` of a two-element group; `tol` is absolute.
pub fn z2_condition_check(k: &Kernel, n_max: usize, tol: f64) -> Result<Z2ConditionReport> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let space = k.space();
    let action = space.require_action()?;
    let group = action.group();
    if group.order() != 2 {
        return Err(Error::WrongGroup(format!(
            "twisted trace condition needs a group of order 2, found order {}",
            group.order()
        )));
    }
    let g = 1 - group.identity();
    let perm = &action.perm()[g];
    let w = space.weights();
    let mut values = Vec::with_capacity(n_max);
    let mut traces = Vec::with_capacity(n_max);
    let mut m = k.matrix().clone();
    for n in 1..=n_max {
        if n > 1 {
            m = contract(&m, k.matrix(), space)?;
        }
        values.push((0..m.nrows()).map(|i| m[(i, perm[i])] * w[i]).sum());
        traces.push((0..m.nrows()).map(|i| m[(i, i)] * w[i]).sum());
    }
    let per_order: Vec<bool> = values.iter().map(|v: &f64| v.abs() <= tol).collect();
    Ok(Z2ConditionReport {
        passed: per_order.iter().all(|&p| p),
        values,
        traces,
        per_order_passed: per_order,
        tol,
    })
}

/// First singularity `2π/√(1+ρ)` of the polarized Watson MGF.
pub fn mgf_singularity(rho: f64) -> f64 {
    2.0 * PI / (1.0 + rho).sqrt()
}

fn check_mgf_domain(lambda: f64, rho: f64) -> Result<()> {
    check_rho(rho)?;
    let lmax = mgf_singularity(rho);
    if !lambda.is_finite() || lambda.abs() >= lmax {
        return Err(Error::OutOfDomain(format!(
            "lambda {lambda} must satisfy |lambda| < {lmax}"
        )));
    }
    Ok(())
}

fn x_over_sin(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 + x * x / 6.0
    } else {
        x / x.sin()
    }
}

fn y_over_sinh(y: f64) -> f64 {
    if y.abs() < 1e-6 {
        1.0 - y * y / 6.0
    } else {
        y / y.sinh()
    }
}

/// `E[exp(λ² ∫ v₁v₂)]` for the ρ-correlated Watson pair, in closed form.
pub fn mgf_closed_form(lambda: f64, rho: f64) -> Result<f64> {
    check_mgf_domain(lambda, rho)?;
    let x = 0.5 * lambda * (1.0 + rho).sqrt();
    let y = 0.5 * lambda * (1.0 - rho).sqrt();
    Ok(x_over_sin(x) * y_over_sinh(y))
}

/// `E[exp(θ Σ_k λ_k ξ_k η_k)]` with `θ = λ²` and `(ξ_k, η_k)` standard normal
/// pairs of correlation ρ. From `ξη = ((ξ+η)² − (ξ−η)²)/4` each eigenvalue
/// contributes `[(1 − θλ_k(1+ρ))(1 + θλ_k(1−ρ))]^{-1/2}`.
/// `eigenvalues` are listed with multiplicity.
pub fn mgf_spectral(eigenvalues: &[f64], lambda: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let theta = lambda * lambda;
    let mut log = 0.0;
    for &l in eigenvalues {
        let a = 1.0 - theta * l * (1.0 + rho);
        let b = 1.0 + theta * l * (1.0 - rho);
        if a <= 0.0 {
            return Err(Error::OutOfDomain(format!(
                "lambda {lambda} beyond the singularity of eigenvalue {l}"
            )));
        }
        log -= 0.5 * (a.ln() + b.ln());
    }
    Ok(log.exp())
}

/// Continuum Watson eigenvalues `1/(4π²k²)`, `k = 1..=pairs`, each listed twice.
pub fn watson_eigenvalues(pairs: usize) -> Vec<f64> {
    (1..=pairs)
        .flat_map(|k| {
            let l = 1.0 / (4.0 * PI * PI * (k * k) as f64);
            [l, l]
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfComparison {
    pub lambda: f64,
    pub rho: f64,
    pub closed_form: f64,
    pub spectral: f64,
    pub pairs: usize,
    pub rel_error: f64,
}

pub fn mgf_watson(lambda: f64, rho: f64) -> Result<MgfComparison> {
    let closed_form = mgf_closed_form(lambda, rho)?;
    let spectral = mgf_spectral(&watson_eigenvalues(MGF_PAIRS), lambda, rho)?;
    Ok(MgfComparison {
        lambda,
        rho,
        closed_form,
        spectral,
        pairs: MGF_PAIRS,
        rel_error: (closed_form - spectral).abs() / closed_form.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::SymmetryGroup;
    use crate::kernels::{BuiltinKernel, IndexSpace};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn k_coeff_examples() {
        for rho in [0.0, 0.3, 1.0] {
            assert_eq!(k_coeff(1, rho).unwrap(), 2.0 * rho);
        }
        for n in 1..=8 {
            assert!((k_coeff(n, 1.0).unwrap() - 2f64.powi(n as i32)).abs() < 1e-12);
        }
        assert!((k_coeff(2, 0.5).unwrap() - 2.5).abs() < 1e-15);
        assert!(k_coeff(0, 0.5).is_err());
    }

    #[test]
    fn k_coeff_matches_polarization() {
        // ((1+ρ)ⁿ + (ρ−1)ⁿ) from splitting Z₁Z₂ into squares of sum and difference.
        for n in 1..=12 {
            for rho in [0.0f64, 0.1, 0.5, 0.77, 1.0] {
                let want = (1.0 + rho).powi(n as i32) + (rho - 1.0).powi(n as i32);
                assert!((k_coeff(n, rho).unwrap() - want).abs() < 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn odd_coeff_vanishes_only_at_zero() {
        for p in 0..5 {
            assert_eq!(k_coeff(2 * p + 1, 0.0).unwrap(), 0.0);
            assert!(k_coeff(2 * p + 1, 1e-3).unwrap() > 0.0);
            assert!(k_coeff(2 * p + 2, 0.0).unwrap() > 0.0);
        }
    }

    #[test]
    fn c_n_values() {
        let want = [1.0, 2.0, 8.0, 48.0, 384.0, 3840.0];
        for (n, w) in want.iter().enumerate() {
            assert_eq!(cumulant_coefficient(n + 1).unwrap(), *w);
        }
    }

    #[test]
    fn zero_kernel_has_zero_cumulants() {
        let space = Arc::new(IndexSpace::interval(8).unwrap());
        let c = analytic_cumulants(&Kernel::zeros(space), 0.5, 6).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_kernel_cumulants() {
        // One point with weight 1 and R = a: ∫Z₁Z₂ = a ξη with corr(ξ, η) = ρ.
        // ρ = 1 gives a χ²₁: κ₁ = a, κ₂ = 2a².
        let space = Arc::new(IndexSpace::new(vec![vec![0.5]], vec![1.0], None).unwrap());
        let k = Kernel::new(space, DMatrix::from_element(1, 1, 3.0)).unwrap();
        let c = analytic_cumulants(&k, 1.0, 2).unwrap();
        assert_eq!(c.values, vec![3.0, 18.0]);
        // ρ = 0: ξη has variance 1 and zero odd cumulants.
        let c = analytic_cumulants(&k, 0.0, 3).unwrap();
        assert_eq!(c.values, vec![0.0, 9.0, 0.0]);
    }

    #[test]
    fn rho_out_of_range() {
        let space = Arc::new(IndexSpace::interval(4).unwrap());
        assert!(analytic_cumulants(&Kernel::zeros(space), 1.5, 2).is_err());
    }

    fn watson_on(n: usize) -> (Kernel, SymmetryGroup) {
        let space = Arc::new(IndexSpace::interval_with_reversal(n).unwrap());
        (Kernel::builtin(BuiltinKernel::Watson, space).unwrap(), SymmetryGroup::cyclic(2).unwrap())
    }

    #[test]
    fn watson_relation_small_grid() {
        let (k, sym) = watson_on(64);
        let r = watson_relation_check(&k, &sym.table, 1.0, 4, 1e-2).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.vacuous_orders.is_empty());
        let r0 = watson_relation_check(&k, &sym.table, 0.0, 4, 1e-2).unwrap();
        assert_eq!(r0.vacuous_orders, vec![1, 3]);
        assert!(r0.per_irrep[0].c2_dev[0].is_none());
    }

    #[test]
    fn bridge_fails_relation() {
        let space = Arc::new(IndexSpace::interval_with_reversal(64).unwrap());
        let k = Kernel::builtin(BuiltinKernel::Bridge, space).unwrap();
        let sym = SymmetryGroup::cyclic(2).unwrap();
        let r = watson_relation_check(&k, &sym.table, 1.0, 4, 1e-3).unwrap();
        assert!(!r.verdicts.c3);
        assert!(r.max_c3_dev() > 0.1);
    }

    #[test]
    fn non_invariant_kernel_rejected() {
        let space = Arc::new(IndexSpace::interval_with_reversal(8).unwrap());
        let pts = space.points().to_vec();
        let m = DMatrix::from_fn(8, 8, |i, j| pts[i][0] * pts[j][0]);
        let k = Kernel::new(space, m).unwrap();
        let sym = SymmetryGroup::cyclic(2).unwrap();
        assert!(matches!(
            watson_relation_check(&k, &sym.table, 1.0, 2, 1e-3),
            Err(Error::NotInvariant { .. })
        ));
    }

    #[test]
    fn complex_characters_rejected() {
        let space = Arc::new(IndexSpace::interval(6).unwrap());
        let perm: Vec<Vec<usize>> = (0..3).map(|g| (0..6).map(|i| (i + 2 * g) % 6).collect()).collect();
        let action = crate::group::GroupAction::new(crate::group::FiniteGroup::cyclic(3).unwrap(), perm).unwrap();
        let space = Arc::new((*space).clone().with_action(action).unwrap());
        let k = Kernel::new(Arc::clone(&space), DMatrix::identity(6, 6)).unwrap();
        let sym = SymmetryGroup::cyclic(3).unwrap();
        assert!(matches!(
            watson_relation_check(&k, &sym.table, 1.0, 2, 1e-3),
            Err(Error::ComplexCharacter(_))
        ));
    }

    #[test]
    fn z2_condition_bridge_first_order() {
        let n = 256;
        let space = Arc::new(IndexSpace::interval_with_reversal(n).unwrap());
        let k = Kernel::builtin(BuiltinKernel::Bridge, Arc::clone(&space)).unwrap();
        let r = z2_condition_check(&k, 2, 1e-8).unwrap();
        // Midpoint quadrature of ∫(t∧(1−t) − t(1−t))dt, computed directly.
        let want: f64 = space
            .points()
            .iter()
            .map(|p| {
                let t = p[0];
                (t.min(1.0 - t) - t * (1.0 - t)) / n as f64
            })
            .sum();
        assert!((r.values[0] - want).abs() < 1e-14);
        assert!(want > 0.05);
        assert!(!r.passed);
    }

    #[test]
    fn z2_condition_needs_order_two() {
        let space = Arc::new(IndexSpace::interval(4).unwrap());
        let space = Arc::new((*space).clone().with_action(crate::group::GroupAction::identity(4)).unwrap());
        let k = Kernel::zeros(space);
        assert!(matches!(z2_condition_check(&k, 2, 1e-8), Err(Error::WrongGroup(_))));
    }

    #[test]
    fn z2_condition_odd_rank_one() {
        // R = f fᵀ with f odd under reversal: the n = 1 twisted trace is −∫f².
        let n = 16;
        let space = Arc::new(IndexSpace::interval_with_reversal(n).unwrap());
        let f: Vec<f64> = space.points().iter().map(|p| p[0] - 0.5).collect();
        let m = DMatrix::from_fn(n, n, |i, j| f[i] * f[j]);
        let k = Kernel::new(space, m).unwrap();
        let r = z2_condition_check(&k, 1, 1e-8).unwrap();
        let norm: f64 = f.iter().map(|x| x * x / n as f64).sum();
        assert!((r.values[0] + norm).abs() < 1e-15);
    }

    #[test]
    fn mgf_limits() {
        assert_eq!(mgf_closed_form(0.0, 0.3).unwrap(), 1.0);
        let s = mgf_spectral(&watson_eigenvalues(50), 0.0, 0.3).unwrap();
        assert_eq!(s, 1.0);
        // ρ = 0 reduces to (λ/2)² / (sin(λ/2) sinh(λ/2)).
        let v = mgf_closed_form(1.0, 0.0).unwrap();
        assert!((v - 0.25 / (0.5f64.sin() * 0.5f64.sinh())).abs() < 1e-15);
        // ρ = 1 is the limit y → 0.
        let v = mgf_closed_form(1.0, 1.0).unwrap();
        let x = 0.5 * 2f64.sqrt();
        assert!((v - x / x.sin()).abs() < 1e-15);
    }

    #[test]
    fn mgf_domain() {
        let lmax = mgf_singularity(0.5);
        assert!(mgf_closed_form(lmax, 0.5).is_err());
        assert!(mgf_closed_form(0.99 * lmax, 0.5).is_ok());
        assert!(mgf_spectral(&watson_eigenvalues(10), 1.01 * lmax, 0.5).is_err());
    }

    #[test]
    fn mgf_watson_agreement() {
        let c = mgf_watson(0.5, 0.5).unwrap();
        assert!(c.rel_error < 1e-3, "{c:?}");
    }
}
