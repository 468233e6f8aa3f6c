//! Channel generation for the downlink study.
//!
//! Receivers are dropped uniformly in distance between a reference distance
//! and the maximum service distance. Large-scale attenuation follows an
//! indoor breakpoint path-loss model (free space up to a breakpoint
//! distance, then a steeper slope), and small-scale fading is Rician with a
//! steering-vector line-of-sight component. Sampling is a pure function of
//! the seed, so Monte-Carlo runs derive per-realization seeds as
//! `master_seed + realization_index` and fan out safely.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hermitian;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),
    #[error("distance {distance} m is below the reference distance {reference} m")]
    DistanceBelowReference { distance: f64, reference: f64 },
}

/// Static system parameters of the deployment.
///
/// `conversion_efficiency` holds one entry per idle receiver (so its length
/// is `num_receivers - 1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of transmit antennas, must exceed 1.
    pub num_antennas: usize,
    /// Total number of receivers (one desired, the rest idle).
    pub num_receivers: usize,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    /// Reference distance of the path-loss model in meters.
    pub reference_distance: f64,
    /// Maximum service distance in meters.
    pub max_distance: f64,
    /// Rician factor as a linear power ratio.
    pub rician_factor: f64,
    /// Combined transmit/receive antenna gain as a linear power factor.
    pub antenna_gain: f64,
    /// Receiver noise power in Watts.
    pub noise_power: f64,
    /// RF-to-electrical conversion efficiency per idle receiver, in [0, 1].
    pub conversion_efficiency: Vec<f64>,
    /// Breakpoint distance of the path-loss model in meters.
    pub breakpoint_distance: f64,
    /// Path-loss exponent beyond the breakpoint (3.5 means 35 dB/decade).
    pub breakpoint_exponent: f64,
}

impl SystemConfig {
    /// Study defaults: 6 antennas, 3 receivers at 470 MHz, drops between
    /// 2 m and 10 m, 3 dB Rician factor, 10 dB combined antenna gain,
    /// -23 dBm noise and 50% conversion efficiency.
    pub fn study_default() -> Self {
        SystemConfig {
            num_antennas: 6,
            num_receivers: 3,
            carrier_freq: 470.0e6,
            reference_distance: 2.0,
            max_distance: 10.0,
            rician_factor: 10f64.powf(0.3),
            antenna_gain: 10.0,
            noise_power: 1e-3 * 10f64.powf(-23.0 / 10.0),
            conversion_efficiency: vec![0.5, 0.5],
            breakpoint_distance: 5.0,
            breakpoint_exponent: 3.5,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let fail = |msg: &str| Err(ChannelError::InvalidConfig(msg.to_string()));
        if self.num_antennas <= 1 {
            return fail("num_antennas must exceed 1");
        }
        if self.num_receivers < 1 {
            return fail("num_receivers must be at least 1");
        }
        if self.conversion_efficiency.len() != self.num_receivers - 1 {
            return fail("conversion_efficiency must have num_receivers - 1 entries");
        }
        if self.conversion_efficiency.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return fail("conversion efficiencies must lie in [0, 1]");
        }
        if !(self.reference_distance > 0.0 && self.reference_distance < self.max_distance) {
            return fail("need 0 < reference_distance < max_distance");
        }
        if !(self.carrier_freq > 0.0 && self.noise_power > 0.0 && self.antenna_gain > 0.0) {
            return fail("carrier frequency, noise power and antenna gain must be positive");
        }
        if !(self.rician_factor >= 0.0) {
            return fail("rician_factor must be nonnegative");
        }
        if !(self.breakpoint_distance > 0.0 && self.breakpoint_exponent > 0.0) {
            return fail("breakpoint parameters must be positive");
        }
        Ok(())
    }

    /// Number of idle receivers `K - 1`.
    pub fn num_idle(&self) -> usize {
        self.num_receivers - 1
    }
}

/// One channel draw: desired-receiver vector, idle-receiver vectors and the
/// distances used for the large-scale gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Channel of the desired receiver, length `num_antennas`.
    pub desired: DVector<Complex64>,
    /// Channels of the idle receivers.
    pub idle: Vec<DVector<Complex64>>,
    /// Distances in meters, desired receiver first.
    pub distances: Vec<f64>,
}

/// Outer-product matrices `H = h h^H` and `G_k = g_k g_k^H`.
#[derive(Debug, Clone)]
pub struct GramSet {
    pub h: DMatrix<Complex64>,
    pub g: Vec<DMatrix<Complex64>>,
}

impl GramSet {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_idle(&self) -> usize {
        self.g.len()
    }
}

/// Free-space path loss in dB at distance `d` for carrier frequency `f`.
fn free_space_db(d: f64, f: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * d * f / SPEED_OF_LIGHT).log10()
}

/// Linear power gain of the link at the given distance.
///
/// The loss is free-space up to the breakpoint distance and
/// `10 * breakpoint_exponent * log10(d / d_bp)` dB steeper beyond it; the
/// configured antenna gain multiplies the result.
pub fn path_loss_gain(distance: f64, config: &SystemConfig) -> Result<f64, ChannelError> {
    if distance < config.reference_distance {
        return Err(ChannelError::DistanceBelowReference {
            distance,
            reference: config.reference_distance,
        });
    }
    let d_bp = config.breakpoint_distance;
    let pl_db = if distance <= d_bp {
        free_space_db(distance, config.carrier_freq)
    } else {
        free_space_db(d_bp, config.carrier_freq)
            + 10.0 * config.breakpoint_exponent * (distance / d_bp).log10()
    };
    Ok(config.antenna_gain * 10f64.powf(-pl_db / 10.0))
}

/// Rician small-scale vector: `sqrt(k/(k+1)) a + sqrt(1/(k+1)) n` with a
/// unit-modulus steering vector `a` (linear phase ramp at a random angle)
/// and i.i.d. standard complex Gaussian `n`.
fn small_scale(rng: &mut ChaCha8Rng, n_t: usize, kappa: f64) -> DVector<Complex64> {
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let los_weight = (kappa / (kappa + 1.0)).sqrt();
    let nlos_weight = (1.0 / (kappa + 1.0)).sqrt();
    DVector::from_fn(n_t, |i, _| {
        let los = Complex64::from_polar(1.0, phase * i as f64);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let scatter = Complex64::new(re, im) / 2f64.sqrt();
        los_weight * los + nlos_weight * scatter
    })
}

/// Draws one channel realization. Deterministic for a given seed.
pub fn sample_channels(seed: u64, config: &SystemConfig) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_t = config.num_antennas;
    let mut distances = Vec::with_capacity(config.num_receivers);
    let mut vectors = Vec::with_capacity(config.num_receivers);
    for _ in 0..config.num_receivers {
        let d: f64 = rng.random_range(config.reference_distance..config.max_distance);
        let gain = path_loss_gain(d, config).expect("draw is at or above the reference distance");
        let v = small_scale(&mut rng, n_t, config.rician_factor) * Complex64::new(gain.sqrt(), 0.0);
        distances.push(d);
        vectors.push(v);
    }
    let desired = vectors.remove(0);
    ChannelRealization {
        desired,
        idle: vectors,
        distances,
    }
}

/// Gram matrices of a realization, Hermitian symmetry enforced exactly.
pub fn gram_matrices(realization: &ChannelRealization) -> GramSet {
    GramSet {
        h: hermitian::hermitianize(&hermitian::outer(&realization.desired)),
        g: realization
            .idle
            .iter()
            .map(|g| hermitian::hermitianize(&hermitian::outer(g)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_gain_config() -> SystemConfig {
        SystemConfig {
            antenna_gain: 1.0,
            ..SystemConfig::study_default()
        }
    }

    #[test]
    fn free_space_loss_at_reference_distance() {
        let cfg = unit_gain_config();
        // independent scalar computation of the same free-space formula
        let expected_db = 20.0 * (4.0 * std::f64::consts::PI * 2.0 * 470.0e6 / SPEED_OF_LIGHT).log10();
        let gain = path_loss_gain(2.0, &cfg).unwrap();
        assert_relative_eq!(gain, 10f64.powf(-expected_db / 10.0), epsilon = 1e-15);
        assert!((expected_db - 31.90).abs() < 0.02, "loss was {expected_db} dB");
        assert!((gain - 6.45e-4).abs() < 2e-6, "gain was {gain}");
    }

    #[test]
    fn continuous_at_breakpoint() {
        let cfg = unit_gain_config();
        let at_bp = path_loss_gain(5.0, &cfg).unwrap();
        let fs_bp = 10f64.powf(-free_space_db(5.0, cfg.carrier_freq) / 10.0);
        assert_relative_eq!(at_bp, fs_bp, epsilon = 1e-15);
        let just_past = path_loss_gain(5.0 + 1e-9, &cfg).unwrap();
        assert_relative_eq!(at_bp, just_past, epsilon = 1e-6);
    }

    #[test]
    fn breakpoint_slope_is_35_db_per_decade() {
        let cfg = unit_gain_config();
        let db = |d: f64| -10.0 * path_loss_gain(d, &cfg).unwrap().log10();
        let expected = db(5.0) + 35.0 * 2f64.log10();
        assert_relative_eq!(db(10.0), expected, epsilon = 1e-10);
        assert!((db(10.0) - db(5.0) - 10.54).abs() < 0.01);
    }

    #[test]
    fn below_reference_distance_is_an_error() {
        let cfg = unit_gain_config();
        assert!(matches!(
            path_loss_gain(1.0, &cfg),
            Err(ChannelError::DistanceBelowReference { .. })
        ));
    }

    #[test]
    fn gain_non_increasing_in_distance() {
        let cfg = unit_gain_config();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let d = 2.0 + 8.0 * i as f64 / 199.0;
            let g = path_loss_gain(d, &cfg).unwrap();
            assert!(g <= prev + 1e-18, "gain increased at {d} m");
            prev = g;
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = SystemConfig::study_default();
        let a = sample_channels(42, &cfg);
        let b = sample_channels(42, &cfg);
        assert_eq!(a, b);
        let c = sample_channels(43, &cfg);
        assert_ne!(a, c);
    }

    #[test]
    fn dominant_los_limit_has_unit_modulus_entries() {
        let mut cfg = SystemConfig::study_default();
        cfg.rician_factor = 1e12;
        let real = sample_channels(7, &cfg);
        let gain = path_loss_gain(real.distances[0], &cfg).unwrap();
        for entry in real.desired.iter() {
            assert_relative_eq!(entry.norm(), gain.sqrt(), max_relative = 1e-4);
        }
    }

    #[test]
    fn rician_fading_has_unit_average_power() {
        let cfg = SystemConfig::study_default();
        let n_t = cfg.num_antennas;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = 10_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let v = small_scale(&mut rng, n_t, cfg.rician_factor);
            acc += v.norm_squared() / n_t as f64;
        }
        let mean = acc / samples as f64;
        assert!((0.97..=1.03).contains(&mean), "mean power {mean}");
    }

    #[test]
    fn pure_rayleigh_keeps_unit_average_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut acc = 0.0;
        let samples = 10_000;
        for _ in 0..samples {
            acc += small_scale(&mut rng, 4, 0.0).norm_squared() / 4.0;
        }
        let mean = acc / samples as f64;
        assert!((0.97..=1.03).contains(&mean), "mean power {mean}");
    }

    #[test]
    fn gram_matrices_are_rank_one_outer_products() {
        let h = DVector::from_vec(vec![
            Complex64::new(1.0, 0.0) / 2f64.sqrt(),
            Complex64::new(0.0, 1.0) / 2f64.sqrt(),
        ]);
        let real = ChannelRealization {
            desired: h,
            idle: vec![],
            distances: vec![2.0],
        };
        let grams = gram_matrices(&real);
        assert_relative_eq!(grams.h[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(grams.h[(0, 1)].im, -0.5, epsilon = 1e-15);
        assert_relative_eq!(grams.h[(1, 0)].im, 0.5, epsilon = 1e-15);
        assert_relative_eq!(grams.h[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(hermitian::real_trace(&grams.h), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gram_eigenstructure_and_symmetry() {
        let cfg = SystemConfig::study_default();
        for seed in 0..20 {
            let real = sample_channels(seed, &cfg);
            let grams = gram_matrices(&real);
            assert_eq!(hermitian::hermitian_residual(&grams.h), 0.0);
            let (vals, _) = hermitian::eigh_descending(&grams.h);
            assert_relative_eq!(vals[0], real.desired.norm_squared(), max_relative = 1e-10);
            for v in &vals[1..] {
                assert!(v.abs() <= 1e-12 * vals[0].max(1.0));
            }
            assert!(hermitian::min_eigenvalue(&grams.h) >= -1e-12);
            for g in &grams.g {
                assert!(hermitian::min_eigenvalue(g) >= -1e-12);
            }
        }
    }

    #[test]
    fn unit_vector_outer_product() {
        let real = ChannelRealization {
            desired: DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
            idle: vec![],
            distances: vec![2.0],
        };
        let grams = gram_matrices(&real);
        assert_eq!(grams.h[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(grams.h[(0, 1)], Complex64::new(0.0, 0.0));
        assert_eq!(grams.h[(1, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let mut cfg = SystemConfig::study_default();
        cfg.num_antennas = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::study_default();
        cfg.conversion_efficiency = vec![1.5, 0.5];
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::study_default();
        cfg.reference_distance = 12.0;
        assert!(cfg.validate().is_err());
        assert!(SystemConfig::study_default().validate().is_ok());
    }
}
