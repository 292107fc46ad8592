//! Property tests for the algebraic invariants.

use std::sync::Arc;

use approx::assert_relative_eq;
use invdecomp::cumulants::{analytic_cumulants, k_coeff};
use invdecomp::kernels::{
    contract, contract_power, project_feature_map, project_kernel, project_kernel_diag, weighted_diag_trace,
};
use invdecomp::sampler::{pathwise_inner, sample};
use invdecomp::spectral::eigendecompose;
use invdecomp::stats::ks_two_sample;
use invdecomp::torus::{dual_lattice, parity_decompose, Lattice, TorusGrid};
use invdecomp::{FeatureMap, IndexSpace, Kernel, SymmetryGroup};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn reversal_space(n: usize) -> Arc<IndexSpace> {
    Arc::new(IndexSpace::interval_with_reversal(n).unwrap())
}

/// Reversal-invariant PSD kernel `Σ_g P_g B Bᵀ P_gᵀ` from a random factor.
fn invariant_kernel(n: usize, entries: &[f64]) -> Kernel {
    let b = DMatrix::from_fn(n, 3, |i, j| entries[(i * 3 + j) % entries.len()]);
    let m = &b * b.transpose();
    let flipped = DMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
    Kernel::new(reversal_space(n), (m + flipped) * 0.5).unwrap()
}

fn entries() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 12..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn invariant_kernels_split_into_diagonal_projections(n in 2usize..12, e in entries()) {
        let k = invariant_kernel(n, &e);
        let table = SymmetryGroup::cyclic(2).unwrap().table;
        let [u, a] = [&table.irreps()[0], &table.irreps()[1]];
        let ru = project_kernel(&k, u, u).unwrap();
        let ra = project_kernel(&k, a, a).unwrap();
        prop_assert!(((&ru + &ra) - k.matrix()).amax() <= 1e-10);
        prop_assert!(project_kernel(&k, u, a).unwrap().amax() <= 1e-10);
        // Idempotence.
        let ku = project_kernel_diag(&k, u).unwrap();
        prop_assert!((project_kernel(&ku, u, u).unwrap() - &ru).amax() <= 1e-10);
    }

    #[test]
    fn product_projection_is_product_of_factor_projections(n1 in 2usize..6, n2 in 2usize..6, e in entries()) {
        let k1 = invariant_kernel(n1, &e);
        let k2 = invariant_kernel(n2, &e[1..]);
        let k = Kernel::product(vec![k1.clone(), k2.clone()]).unwrap();
        let z2 = SymmetryGroup::cyclic(2).unwrap();
        let sym = SymmetryGroup::direct_product(&z2, &z2).unwrap();
        for (idx, eta) in sym.table.irreps().iter().enumerate() {
            let (p1, p2) = (&z2.table.irreps()[idx / 2], &z2.table.irreps()[idx % 2]);
            let want = project_kernel(&k1, p1, p1).unwrap().kronecker(&project_kernel(&k2, p2, p2).unwrap());
            prop_assert!((project_kernel(&k, eta, eta).unwrap() - want).amax() <= 1e-10);
        }
    }

    #[test]
    fn contraction_traces_agree_with_spectrum(n in 2usize..10, e in entries()) {
        let k = invariant_kernel(n, &e);
        let traces = k.power_traces(6);
        let sums = eigendecompose(&k, 1e-6).unwrap().power_sums(6);
        for p in 1..=6 {
            let chain = weighted_diag_trace(&contract_power(&k, p).unwrap(), k.space()).unwrap();
            let scale = traces[0].powi(p as i32).max(1e-300);
            prop_assert!((chain - traces[p - 1]).abs() <= 1e-9 * scale);
            prop_assert!((sums[p - 1] - traces[p - 1]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn contraction_is_bilinear(n in 2usize..8, e in entries(), c in -3.0f64..3.0) {
        let k = invariant_kernel(n, &e);
        let m = k.matrix();
        let lhs = contract(&(m * c), m, k.space()).unwrap();
        let rhs = contract(m, m, k.space()).unwrap() * c;
        prop_assert!((lhs - rhs).amax() <= 1e-12 * (1.0 + m.amax().powi(2)));
    }

    #[test]
    fn k_coefficient_closed_form(n in 1usize..14, rho in 0.0f64..=1.0) {
        let want = (1.0 + rho).powi(n as i32) + (rho - 1.0).powi(n as i32);
        assert_relative_eq!(k_coeff(n, rho).unwrap(), want, epsilon = 1e-12, max_relative = 1e-12);
    }

    #[test]
    fn cumulants_of_sums_scale(n in 2usize..8, e in entries(), copies in 1usize..5, c in 0.1f64..2.0) {
        let k = invariant_kernel(n, &e);
        let kv = analytic_cumulants(&k, 0.7, 4).unwrap();
        let scaled = kv.scaled_sum(copies, c);
        // Scaling the kernel by c is scaling the functional by c.
        let kc = Kernel::new(Arc::clone(k.space()), k.matrix() * c).unwrap();
        let direct = analytic_cumulants(&kc, 0.7, 4).unwrap();
        for i in 0..4 {
            assert_relative_eq!(scaled.values[i], copies as f64 * direct.values[i], max_relative = 1e-10, epsilon = 1e-300);
        }
    }

    #[test]
    fn projected_feature_map_induces_projected_kernel(n in 2usize..10, e in entries()) {
        let phi = DMatrix::from_fn(n, 3, |i, j| e[(i * 3 + j) % e.len()]);
        let fm = FeatureMap::new(reversal_space(n), phi, vec![0.5, 1.0, 2.0]).unwrap();
        let k = fm.induced_kernel().unwrap();
        for pi in SymmetryGroup::cyclic(2).unwrap().table.irreps() {
            let lhs = project_feature_map(&fm, pi).unwrap().induced_matrix();
            prop_assert!((lhs - project_kernel(&k, pi, pi).unwrap()).amax() <= 1e-10);
        }
    }

    #[test]
    fn dual_basis_pairs_to_identity(a in 0.5f64..2.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in 0.5f64..2.0) {
        let l = Lattice::new(vec![vec![a, b], vec![c, d + b.abs() + c.abs()]]).unwrap();
        let w = dual_lattice(&l).unwrap();
        for (i, v) in l.basis.iter().enumerate() {
            for (j, u) in w.basis.iter().enumerate() {
                let ip: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
                prop_assert!((ip - f64::from(u8::from(i == j))).abs() <= 1e-10);
            }
        }
        assert_relative_eq!(l.volume * w.volume, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn ks_is_a_symmetric_distance(a in prop::collection::vec(-5.0f64..5.0, 1..60), b in prop::collection::vec(-5.0f64..5.0, 1..60)) {
        let d = ks_two_sample(&a, &b);
        prop_assert_eq!(d, ks_two_sample(&b, &a));
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn parity_split_is_orthogonal(half in 2usize..16, seed in 0u64..1000) {
        let g = TorusGrid::unit(2 * half).unwrap();
        let k = Kernel::builtin(invdecomp::BuiltinKernel::TorusWatson, Arc::clone(g.space())).unwrap();
        let e = sample(&k, 8, seed).unwrap();
        let p = parity_decompose(&e).unwrap();
        for x in pathwise_inner(&p.odd, &p.even) {
            prop_assert!(x.abs() <= 1e-15);
        }
        prop_assert!((&p.odd.samples + &p.even.samples - &e.samples).amax() <= 1e-15);
    }
}
