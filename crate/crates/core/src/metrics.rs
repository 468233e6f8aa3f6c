//! QoS figures of merit for a candidate allocation: SINRs, capacities,
//! secrecy capacity, harvested/transmit power and harvesting efficiency.
//!
//! All functions are pure; quadratic forms are evaluated as `w^H (A w)` and
//! truncated to their real part after an imaginary-residue check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::GramSet;
use crate::hermitian;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("harvesting efficiency is undefined at zero transmit power")]
    ZeroTransmitPower,
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("invalid QoS targets: {0}")]
    InvalidTargets(String),
}

/// A beamformer together with an artificial-noise covariance.
#[derive(Debug, Clone)]
pub struct Allocation {
    /// Information beamforming vector.
    pub beamformer: DVector<Complex64>,
    /// Artificial-noise covariance, Hermitian PSD.
    pub noise_cov: DMatrix<Complex64>,
}

impl Allocation {
    pub fn new(
        beamformer: DVector<Complex64>,
        noise_cov: DMatrix<Complex64>,
    ) -> Result<Self, MetricsError> {
        if noise_cov.nrows() != noise_cov.ncols() || noise_cov.nrows() != beamformer.len() {
            return Err(MetricsError::InvalidAllocation(
                "noise covariance must be square with the beamformer dimension".into(),
            ));
        }
        if beamformer.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MetricsError::InvalidAllocation("beamformer has non-finite entries".into()));
        }
        if hermitian::hermitian_residual(&noise_cov) > 1e-9 {
            return Err(MetricsError::InvalidAllocation("noise covariance is not Hermitian".into()));
        }
        if hermitian::min_eigenvalue(&noise_cov) < -1e-9 {
            return Err(MetricsError::InvalidAllocation("noise covariance is not PSD".into()));
        }
        Ok(Allocation { beamformer, noise_cov })
    }

    /// Zero allocation of the given dimension.
    pub fn zero(n: usize) -> Self {
        Allocation {
            beamformer: DVector::zeros(n),
            noise_cov: DMatrix::zeros(n, n),
        }
    }
}

/// Constraint constants of the allocation problems.
#[derive(Debug, Clone)]
pub struct QosTargets {
    /// Required SINR of the desired receiver, linear.
    pub gamma_req: f64,
    /// Maximum tolerable SINR per idle receiver, linear.
    pub gamma_tol: Vec<f64>,
    /// Transmit power budget in Watts.
    pub p_max: f64,
    /// Noise power in Watts.
    pub sigma_s2: f64,
}

impl QosTargets {
    pub fn new(
        gamma_req: f64,
        gamma_tol: Vec<f64>,
        p_max: f64,
        sigma_s2: f64,
    ) -> Result<Self, MetricsError> {
        if !(gamma_req > 0.0) {
            return Err(MetricsError::InvalidTargets("gamma_req must be positive".into()));
        }
        if gamma_tol.iter().any(|g| !(g > &0.0)) {
            return Err(MetricsError::InvalidTargets("every gamma_tol must be positive".into()));
        }
        if let Some(max_tol) = gamma_tol.iter().cloned().fold(None::<f64>, |acc, g| {
            Some(acc.map_or(g, |m| m.max(g)))
        }) {
            if gamma_req <= max_tol {
                return Err(MetricsError::InvalidTargets(
                    "gamma_req must exceed every gamma_tol".into(),
                ));
            }
        }
        if !(p_max > 0.0 && sigma_s2 > 0.0) {
            return Err(MetricsError::InvalidTargets("powers must be positive".into()));
        }
        Ok(QosTargets { gamma_req, gamma_tol, p_max, sigma_s2 })
    }
}

/// SINR at the desired receiver: `w^H H w / (Tr(H V) + sigma^2)`.
pub fn sinr_desired(alloc: &Allocation, h_gram: &DMatrix<Complex64>, sigma_s2: f64) -> f64 {
    let signal = hermitian::quad_form(h_gram, &alloc.beamformer);
    let interference = hermitian::inner(h_gram, &alloc.noise_cov);
    signal / (interference + sigma_s2)
}

/// SINR at an idle receiver: `w^H G_k w / (Tr(G_k V) + sigma^2)`.
pub fn sinr_idle(alloc: &Allocation, g_gram: &DMatrix<Complex64>, sigma_s2: f64) -> f64 {
    sinr_desired(alloc, g_gram, sigma_s2)
}

/// Secrecy capacity `[log2(1+SINR) - max_k log2(1+SINR_k)]^+` in bit/s/Hz.
///
/// With no idle receivers the max over the empty set is zero and the
/// desired-link capacity is returned.
pub fn secrecy_capacity(alloc: &Allocation, grams: &GramSet, sigma_s2: f64) -> f64 {
    let own = (1.0 + sinr_desired(alloc, &grams.h, sigma_s2)).log2();
    let eavesdropper = grams
        .g
        .iter()
        .map(|g| (1.0 + sinr_idle(alloc, g, sigma_s2)).log2())
        .fold(0.0f64, f64::max);
    (own - eavesdropper).max(0.0)
}

/// Total harvested power `sum_k eps_k (w^H G_k w + Tr(G_k V))` in Watts.
pub fn harvested_power(alloc: &Allocation, grams: &GramSet, eps: &[f64]) -> f64 {
    assert_eq!(eps.len(), grams.num_idle(), "one efficiency per idle receiver");
    grams
        .g
        .iter()
        .zip(eps)
        .map(|(g, &e)| e * (hermitian::quad_form(g, &alloc.beamformer) + hermitian::inner(g, &alloc.noise_cov)))
        .sum()
}

/// Radiated power `||w||^2 + Tr(V)` in Watts.
pub fn transmit_power(alloc: &Allocation) -> f64 {
    alloc.beamformer.norm_squared() + hermitian::real_trace(&alloc.noise_cov)
}

/// Harvested power divided by transmit power (dimensionless fraction).
pub fn harvesting_efficiency(
    alloc: &Allocation,
    grams: &GramSet,
    eps: &[f64],
) -> Result<f64, MetricsError> {
    let tp = transmit_power(alloc);
    if tp <= 0.0 {
        return Err(MetricsError::ZeroTransmitPower);
    }
    Ok(harvested_power(alloc, grams, eps) / tp)
}

/// Guaranteed lower bound on the secrecy capacity implied by the targets:
/// `log2(1+gamma_req) - log2(1+max_k gamma_tol_k)`.
pub fn secrecy_floor(qos: &QosTargets) -> f64 {
    let max_tol = qos.gamma_tol.iter().cloned().fold(0.0f64, f64::max);
    (1.0 + qos.gamma_req).log2() - (1.0 + max_tol).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gram_matrices, sample_channels, ChannelRealization, SystemConfig};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn cv(entries: &[(f64, f64)]) -> DVector<Complex64> {
        DVector::from_iterator(entries.len(), entries.iter().map(|&(r, i)| Complex64::new(r, i)))
    }

    fn grams_from(h: &[(f64, f64)], gs: &[&[(f64, f64)]]) -> GramSet {
        let real = ChannelRealization {
            desired: cv(h),
            idle: gs.iter().map(|g| cv(g)).collect(),
            distances: vec![2.0; gs.len() + 1],
        };
        gram_matrices(&real)
    }

    /// Elementwise recomputation of `w^H A w + Tr(A V)` style terms.
    fn quad_oracle(a: &DMatrix<Complex64>, w: &DVector<Complex64>) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..w.len() {
            for j in 0..w.len() {
                acc += w[i].conj() * a[(i, j)] * w[j];
            }
        }
        acc.re
    }

    fn trace_oracle(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                acc += a[(i, j)] * b[(j, i)];
            }
        }
        acc.re
    }

    #[test]
    fn desired_sinr_direct_substitution() {
        let grams = grams_from(&[(1.0, 0.0), (0.0, 0.0)], &[]);
        let alloc = Allocation::new(cv(&[(2.0, 0.0), (0.0, 0.0)]), DMatrix::zeros(2, 2)).unwrap();
        assert_relative_eq!(sinr_desired(&alloc, &grams.h, 1.0), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn desired_sinr_decreases_with_noise_loading() {
        let grams = grams_from(&[(1.0, 0.0), (0.0, 0.0)], &[]);
        let w = cv(&[(2.0, 0.0), (0.0, 0.0)]);
        let mut prev = f64::INFINITY;
        for k in 1..6 {
            let c = k as f64 * 0.3;
            let v = &grams.h * Complex64::new(c / hermitian::real_trace(&grams.h), 0.0);
            let alloc = Allocation::new(w.clone(), v).unwrap();
            let s = sinr_desired(&alloc, &grams.h, 1.0);
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn quadratic_forms_match_double_loop_oracle() {
        let cfg = SystemConfig {
            num_antennas: 4,
            num_receivers: 3,
            ..SystemConfig::study_default()
        };
        for seed in 0..10 {
            let real = sample_channels(seed, &cfg);
            let grams = gram_matrices(&real);
            let w = real.idle[0].clone();
            let v = hermitian::outer(&real.idle[1]) * Complex64::new(0.5, 0.0);
            let alloc = Allocation::new(w.clone(), v.clone()).unwrap();

            let expect = quad_oracle(&grams.h, &w) / (trace_oracle(&grams.h, &v) + cfg.noise_power);
            assert_relative_eq!(
                sinr_desired(&alloc, &grams.h, cfg.noise_power),
                expect,
                max_relative = 1e-12
            );
            let expect_idle =
                quad_oracle(&grams.g[0], &w) / (trace_oracle(&grams.g[0], &v) + cfg.noise_power);
            assert_relative_eq!(
                sinr_idle(&alloc, &grams.g[0], cfg.noise_power),
                expect_idle,
                max_relative = 1e-12
            );

            let eps = [0.5, 0.25];
            let hp_expect: f64 = grams
                .g
                .iter()
                .zip(eps.iter())
                .map(|(g, &e)| e * (quad_oracle(g, &w) + trace_oracle(g, &v)))
                .sum();
            assert_relative_eq!(harvested_power(&alloc, &grams, &eps), hp_expect, max_relative = 1e-12);

            let tp_expect: f64 =
                w.iter().map(|z| z.norm_sqr()).sum::<f64>() + (0..4).map(|i| v[(i, i)].re).sum::<f64>();
            assert_relative_eq!(transmit_power(&alloc), tp_expect, max_relative = 1e-12);

            assert_relative_eq!(
                harvesting_efficiency(&alloc, &grams, &eps).unwrap(),
                hp_expect / tp_expect,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn orthogonal_beam_leaks_nothing() {
        let grams = grams_from(&[(1.0, 0.0), (0.0, 0.0)], &[&[(1.0, 0.0), (0.0, 0.0)]]);
        let alloc = Allocation::new(cv(&[(0.0, 0.0), (3.0, 0.0)]), DMatrix::zeros(2, 2)).unwrap();
        assert_relative_eq!(sinr_idle(&alloc, &grams.g[0], 1.0), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn idle_sinr_with_noise_loading() {
        let grams = grams_from(&[(0.0, 0.0), (1.0, 0.0)], &[&[(1.0, 0.0), (0.0, 0.0)]]);
        let mut v = DMatrix::zeros(2, 2);
        v[(0, 0)] = Complex64::new(1.0, 0.0);
        let alloc = Allocation::new(cv(&[(1.0, 0.0), (0.0, 0.0)]), v).unwrap();
        assert_relative_eq!(sinr_idle(&alloc, &grams.g[0], 1.0), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn secrecy_capacity_matches_study_floor() {
        // desired SINR 10, single eavesdropper at SINR 0.1
        let grams = grams_from(&[(1.0, 0.0), (0.0, 0.0)], &[&[(0.1, 0.0), (0.0, 0.0)]]);
        let alloc = Allocation::new(cv(&[(10f64.sqrt(), 0.0), (0.0, 0.0)]), DMatrix::zeros(2, 2)).unwrap();
        assert_relative_eq!(sinr_desired(&alloc, &grams.h, 1.0), 10.0, epsilon = 1e-12);
        assert_relative_eq!(sinr_idle(&alloc, &grams.g[0], 1.0), 0.1, max_relative = 1e-12);
        let csec = secrecy_capacity(&alloc, &grams, 1.0);
        assert_relative_eq!(csec, 10f64.log2(), epsilon = 1e-10);
        assert!(csec >= 3.32);
    }

    #[test]
    fn secrecy_capacity_clamps_at_zero() {
        let grams = grams_from(&[(0.1, 0.0), (0.0, 0.0)], &[&[(1.0, 0.0), (0.0, 0.0)]]);
        let alloc = Allocation::new(cv(&[(1.0, 0.0), (0.0, 0.0)]), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(secrecy_capacity(&alloc, &grams, 1.0), 0.0);
    }

    #[test]
    fn secrecy_capacity_without_idle_receivers() {
        let grams = grams_from(&[(1.0, 0.0), (0.0, 0.0)], &[]);
        let alloc = Allocation::new(cv(&[(1.0, 0.0), (0.0, 0.0)]), DMatrix::zeros(2, 2)).unwrap();
        assert_relative_eq!(secrecy_capacity(&alloc, &grams, 1.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn harvested_power_substitution_cases() {
        let grams = grams_from(&[(0.0, 0.0), (1.0, 0.0)], &[&[(1.0, 0.0), (0.0, 0.0)]]);
        let alloc = Allocation::new(cv(&[(1.0, 0.0), (0.0, 0.0)]), DMatrix::zeros(2, 2)).unwrap();
        assert_relative_eq!(harvested_power(&alloc, &grams, &[0.5]), 0.5, epsilon = 1e-14);
        let zero = Allocation::zero(2);
        assert_eq!(harvested_power(&zero, &grams, &[0.5]), 0.0);
    }

    #[test]
    fn transmit_power_substitution() {
        let mut v = DMatrix::zeros(2, 2);
        v[(0, 0)] = Complex64::new(0.5, 0.0);
        v[(1, 1)] = Complex64::new(0.5, 0.0);
        let alloc = Allocation::new(cv(&[(1.0, 0.0), (1.0, 0.0)]), v).unwrap();
        assert_relative_eq!(transmit_power(&alloc), 3.0, epsilon = 1e-14);
        assert_eq!(transmit_power(&Allocation::zero(2)), 0.0);
    }

    #[test]
    fn efficiency_combines_parts_and_is_scale_invariant() {
        let grams = grams_from(&[(0.0, 0.0), (1.0, 0.0)], &[&[(1.0, 0.0), (0.0, 0.0)]]);
        let alloc = Allocation::new(cv(&[(1.0, 0.0), (0.0, 0.0)]), DMatrix::zeros(2, 2)).unwrap();
        let eta = harvesting_efficiency(&alloc, &grams, &[0.5]).unwrap();
        assert_relative_eq!(eta, 0.5, epsilon = 1e-14);

        for c in [0.3f64, 2.0, 17.0] {
            let scaled = Allocation::new(
                alloc.beamformer.clone() * Complex64::new(c.sqrt(), 0.0),
                alloc.noise_cov.clone() * Complex64::new(c, 0.0),
            )
            .unwrap();
            assert_relative_eq!(
                harvesting_efficiency(&scaled, &grams, &[0.5]).unwrap(),
                eta,
                max_relative = 1e-12
            );
        }

        assert!(matches!(
            harvesting_efficiency(&Allocation::zero(2), &grams, &[0.5]),
            Err(MetricsError::ZeroTransmitPower)
        ));
    }

    #[test]
    fn efficiency_bounded_by_rayleigh_quotient() {
        let cfg = SystemConfig::study_default();
        for seed in 50..70 {
            let real = sample_channels(seed, &cfg);
            let grams = gram_matrices(&real);
            let alloc = Allocation::new(
                real.desired.clone(),
                hermitian::outer(&real.idle[0]) * Complex64::new(0.3, 0.0),
            )
            .unwrap();
            let eps = &cfg.conversion_efficiency;
            let eta = harvesting_efficiency(&alloc, &grams, eps).unwrap();
            let bound: f64 = grams
                .g
                .iter()
                .zip(eps)
                .map(|(g, &e)| {
                    let (vals, _) = hermitian::eigh_descending(g);
                    e * vals[0]
                })
                .sum();
            assert!(eta <= bound + 1e-12, "eta {eta} exceeded bound {bound}");
        }
    }

    #[test]
    fn secrecy_floor_values() {
        let qos = QosTargets::new(10.0, vec![0.1], 1.0, 1.0).unwrap();
        assert_relative_eq!(secrecy_floor(&qos), 11f64.log2() - 1.1f64.log2(), epsilon = 1e-14);
        assert!((secrecy_floor(&qos) - 3.3219).abs() < 1e-4);

        let no_tol = QosTargets::new(10.0, vec![], 1.0, 1.0).unwrap();
        assert_relative_eq!(secrecy_floor(&no_tol), 11f64.log2(), epsilon = 1e-14);

        // gamma_req equal to the tolerance is rejected by construction, so
        // evaluate the floor formula at a nearly-equal pair instead
        let near = QosTargets::new(1.0 + 1e-12, vec![1.0], 1.0, 1.0).unwrap();
        assert!(secrecy_floor(&near).abs() < 1e-11);
    }

    #[test]
    fn feasible_allocations_meet_the_floor() {
        // any allocation with SINR >= gamma_req and leak <= gamma_tol meets
        // the floor by monotonicity of log2
        let qos = QosTargets::new(10.0, vec![0.1], 10.0, 1.0).unwrap();
        let floor = secrecy_floor(&qos);
        let grams = grams_from(&[(1.0, 0.0), (0.0, 0.0)], &[&[(0.05, 0.0), (0.05, 0.0)]]);
        for scale in [1.0f64, 1.3, 2.0] {
            let w = cv(&[((10.0 * scale).sqrt(), 0.0), (0.0, 0.0)]);
            let alloc = Allocation::new(w, DMatrix::zeros(2, 2)).unwrap();
            let sinr = sinr_desired(&alloc, &grams.h, qos.sigma_s2);
            let leak = sinr_idle(&alloc, &grams.g[0], qos.sigma_s2);
            if sinr >= qos.gamma_req && leak <= qos.gamma_tol[0] {
                assert!(secrecy_capacity(&alloc, &grams, qos.sigma_s2) >= floor - 1e-9);
            }
        }
    }

    #[test]
    fn target_validation() {
        assert!(QosTargets::new(0.5, vec![1.0], 1.0, 1.0).is_err());
        assert!(QosTargets::new(10.0, vec![0.0], 1.0, 1.0).is_err());
        assert!(QosTargets::new(10.0, vec![0.1], 0.0, 1.0).is_err());
        assert!(QosTargets::new(10.0, vec![0.1], 1.0, 1.0).is_ok());
    }
}
