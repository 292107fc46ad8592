//! Sample statistics used to compare Monte Carlo distributions: the two-sample
//! Kolmogorov–Smirnov distance, unbiased k-statistics and their sampling
//! variances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum sample size accepted by [`compare_distributions`].
pub const MIN_COMPARISON_SAMPLES: usize = 1000;

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Unbiased k-statistics `k_1..k_4` (entries beyond the sample size are NaN).
pub fn k_statistics(x: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let mut out = [f64::NAN; 4];
    if x.is_empty() {
        return out;
    }
    let mean = x.iter().sum::<f64>() / n;
    out[0] = mean;
    // Central power sums; k-statistics of order ≥ 2 are shift invariant.
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        s1 += d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }
    if x.len() >= 2 {
        out[1] = (n * s2 - s1 * s1) / (n * (n - 1.0));
    }
    if x.len() >= 3 {
        out[2] = (2.0 * s1.powi(3) - 3.0 * n * s1 * s2 + n * n * s3) / (n * (n - 1.0) * (n - 2.0));
    }
    if x.len() >= 4 {
        out[3] = (-6.0 * s1.powi(4) + 12.0 * n * s1 * s1 * s2 - 3.0 * n * (n - 1.0) * s2 * s2
            - 4.0 * n * (n + 1.0) * s1 * s3
            + n * n * (n + 1.0) * s4)
            / (n * (n - 1.0) * (n - 2.0) * (n - 3.0));
    }
    out
}

/// Sampling variance of the k-statistic of order `order` (1..=4) for a
/// sample of size `n` drawn from a law with cumulants `kappa[0] = κ_1, …`.
/// Needs `κ` up to order `2·order`.
pub fn kstat_variance(kappa: &[f64], n: usize, order: usize) -> Result<f64> {
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidArgument(format!("k-statistic order {order} not in 1..=4")));
    }
    if kappa.len() < 2 * order {
        return Err(Error::DimensionMismatch {
            what: "cumulants for k-statistic variance",
            expected: 2 * order,
            found: kappa.len(),
        });
    }
    if n <= order {
        return Err(Error::SampleTooSmall {
            found: n,
            required: order + 1,
        });
    }
    let k = |i: usize| kappa[i - 1];
    let n = n as f64;
    let n1 = n - 1.0;
    let n2 = n - 2.0;
    let n3 = n - 3.0;
    Ok(match order {
        1 => k(2) / n,
        2 => k(4) / n + 2.0 * k(2).powi(2) / n1,
        3 => {
            k(6) / n
                + 9.0 * k(2) * k(4) / n1
                + 9.0 * k(3).powi(2) / n1
                + 6.0 * n * k(2).powi(3) / (n1 * n2)
        }
        _ => {
            k(8) / n
                + 16.0 * k(2) * k(6) / n1
                + 48.0 * k(3) * k(5) / n1
                + 34.0 * k(4).powi(2) / n1
                + 72.0 * n * k(2).powi(2) * k(4) / (n1 * n2)
                + 144.0 * n * k(2) * k(3).powi(2) / (n1 * n2)
                + 24.0 * n * (n + 1.0) * k(2).powi(4) / (n1 * n2 * n3)
        }
    })
}

/// Distributional comparison of two samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionComparison {
    pub ks_distance: f64,
    pub kstats_a: [f64; 4],
    pub kstats_b: [f64; 4],
    /// `k_n(a) − k_n(b)` for `n = 1..4`.
    pub cumulant_gaps: [f64; 4],
    pub samples_a: usize,
    pub samples_b: usize,
}

pub fn compare_distributions(a: &[f64], b: &[f64]) -> Result<DistributionComparison> {
    for s in [a, b] {
        if s.len() < MIN_COMPARISON_SAMPLES {
            return Err(Error::SampleTooSmall {
                found: s.len(),
                required: MIN_COMPARISON_SAMPLES,
            });
        }
    }
    let ka = k_statistics(a);
    let kb = k_statistics(b);
    let mut gaps = [0.0; 4];
    for (g, (x, y)) in gaps.iter_mut().zip(ka.iter().zip(&kb)) {
        *g = x - y;
    }
    Ok(DistributionComparison {
        ks_distance: ks_two_sample(a, b),
        kstats_a: ka,
        kstats_b: kb,
        cumulant_gaps: gaps,
        samples_a: a.len(),
        samples_b: b.len(),
    })
}

/// Empirical characteristic function `(1/S) Σ exp(iλx)` as `(re, im)`.
pub fn empirical_chf(x: &[f64], lambda: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let (re, im) = x.iter().fold((0.0, 0.0), |(r, i), v| {
        let (s, c) = (lambda * v).sin_cos();
        (r + c, i + s)
    });
    (re / n, im / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b: Vec<f64> = (200..300).map(f64::from).collect();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        let half: Vec<f64> = (50..150).map(f64::from).collect();
        assert!((ks_two_sample(&a, &half) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_handles_ties() {
        let a = [1.0, 1.0, 2.0, 2.0];
        let b = [1.0, 2.0, 2.0, 2.0];
        assert!((ks_two_sample(&a, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn k_statistics_small_sample() {
        // Hand values for 1, 2, 3, 4, 10.
        let x = [1.0, 2.0, 3.0, 4.0, 10.0];
        let k = k_statistics(&x);
        assert!((k[0] - 4.0).abs() < 1e-14);
        // Sample variance: Σ(x−4)² / 4 = (9+4+1+0+36)/4 = 12.5
        assert!((k[1] - 12.5).abs() < 1e-13);
        // k3 = n Σd³ / ((n−1)(n−2)) = 5 * (−27−8−1+0+216) / 12 = 75
        assert!((k[2] - 75.0).abs() < 1e-12);
        // k4 with Σd⁴ = 81+16+1+0+1296 = 1394, Σd² = 50:
        // (n²(n+1)Σd⁴ − 3n(n−1)(Σd²)²) / (n(n−1)(n−2)(n−3)) = (25·6·1394 − 3·5·4·2500)/120
        assert!((k[3] - (25.0 * 6.0 * 1394.0 - 150_000.0) / 120.0).abs() < 1e-9);
    }

    #[test]
    fn k_statistics_recover_exponential_cumulants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..400_000).map(|_| Exp1.sample(&mut rng)).collect();
        let k = k_statistics(&x);
        // κ_n = (n−1)! for the unit exponential.
        for (got, want) in k.iter().zip([1.0, 1.0, 2.0, 6.0]) {
            assert!((got - want).abs() < 0.1 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn kstat_variance_matches_replication() {
        // Replicate k-statistics of exponential samples of size 200 and compare
        // their spread with the closed-form variances.
        let kappa: Vec<f64> = (1..=8).map(|n| (1..n).map(f64::from).product()).collect();
        let n = 200;
        let reps = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut stats = vec![Vec::with_capacity(reps); 3];
        for _ in 0..reps {
            let x: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            let k = k_statistics(&x);
            for o in 0..3 {
                stats[o].push(k[o]);
            }
        }
        for o in 0..3 {
            let emp = k_statistics(&stats[o])[1];
            let theory = kstat_variance(&kappa, n, o + 1).unwrap();
            assert!((emp / theory - 1.0).abs() < 0.15, "order {}: {emp} vs {theory}", o + 1);
        }
    }

    #[test]
    fn kstat_variance_gaussian_fourth_order() {
        // For N(0,1): var(k4) = 24 n (n+1) / ((n−1)(n−2)(n−3)).
        let mut kappa = vec![0.0; 8];
        kappa[1] = 1.0;
        let n = 50usize;
        let v = kstat_variance(&kappa, n, 4).unwrap();
        let nf = n as f64;
        assert!((v - 24.0 * nf * (nf + 1.0) / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0))).abs() < 1e-15);
        assert!(kstat_variance(&kappa[..4], n, 3).is_err());
        assert!(kstat_variance(&kappa, 3, 4).is_err());
    }

    #[test]
    fn comparison_requires_enough_samples() {
        let a = vec![0.0; 999];
        assert!(matches!(compare_distributions(&a, &a), Err(Error::SampleTooSmall { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c = compare_distributions(&b, &b).unwrap();
        assert_eq!(c.ks_distance, 0.0);
        assert_eq!(c.cumulant_gaps, [0.0; 4]);
    }

    #[test]
    fn chf_of_constant() {
        let (re, im) = empirical_chf(&[0.5; 10], 2.0);
        assert!((re - 1f64.cos()).abs() < 1e-15 && (im - 1f64.sin()).abs() < 1e-15);
    }
}
