//! Baseband frames, power units and additive noise.
//!
//! Powers are per-complex-sample averages: a frame "at 30 dBm" has expected
//! `|x_m|^2 = 1 W` for every sample. All randomness is drawn from explicit
//! generators; [`stream`] derives independent, reproducible streams from a
//! master seed.

use std::ops::{Add, Index};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Random stream used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Power level in dBm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerDbm(pub f64);

impl PowerDbm {
    pub fn watts(self) -> f64 {
        dbm_to_watts(self)
    }
}

pub fn dbm_to_watts(p: PowerDbm) -> f64 {
    10f64.powf((p.0 - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> PowerDbm {
    PowerDbm(10.0 * watts.log10() + 30.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// A block of `M` complex baseband samples: the unit a detector classifies.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFrame {
    samples: Vec<Complex64>,
}

impl ComplexFrame {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self { samples }
    }

    pub fn zeros(m: usize) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); m])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Sum of `|x_m|^2`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// Average power per sample, in watts.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    /// Multiplies every sample by a complex scalar (a flat channel).
    pub fn scaled(&self, gain: Complex64) -> Self {
        Self::new(self.samples.iter().map(|s| s * gain).collect())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(invalid(format!("frame lengths differ: {} vs {}", self.len(), other.len())));
        }
        Ok(Self::new(self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect()))
    }

    /// Hermitian inner product `sum conj(a_m) b_m`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.samples.iter().zip(&other.samples).map(|(a, b)| a.conj() * b).sum()
    }
}

impl Index<usize> for ComplexFrame {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.samples[i]
    }
}

impl Add for &ComplexFrame {
    type Output = ComplexFrame;

    /// Panics on length mismatch; use [`ComplexFrame::try_add`] for fallible addition.
    fn add(self, rhs: &ComplexFrame) -> ComplexFrame {
        self.try_add(rhs).expect("frame length mismatch")
    }
}

/// Circularly-symmetric complex Gaussian noise, `CN(0, variance)` per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(invalid(format!("noise variance must be finite and >= 0, got {variance}")));
        }
        Ok(Self { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let s = (self.variance / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    }
}

/// One QPSK symbol per sample, uniform over `(+-1 +- j)/sqrt(2)`.
pub fn qpsk_frame<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<ComplexFrame> {
    if m == 0 {
        return Err(invalid("frame length must be >= 1"));
    }
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let samples = (0..m)
        .map(|_| {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { a } else { -a };
            let im = if bits & 2 == 0 { a } else { -a };
            Complex64::new(re, im)
        })
        .collect();
    Ok(ComplexFrame::new(samples))
}

/// Rescales a frame so its average per-sample power equals `p`.
///
/// Sample directions are preserved; a zero frame stays zero.
pub fn scale_to_power(frame: &ComplexFrame, p: PowerDbm) -> ComplexFrame {
    let current = frame.mean_power();
    if current == 0.0 {
        return frame.clone();
    }
    let k = (p.watts() / current).sqrt();
    frame.scaled(Complex64::new(k, 0.0))
}

/// Returns `frame + n` with `n_m ~ CN(0, noise.variance)` i.i.d.
pub fn add_noise<R: Rng + ?Sized>(frame: &ComplexFrame, noise: &NoiseModel, rng: &mut R) -> ComplexFrame {
    if noise.variance == 0.0 {
        return frame.clone();
    }
    ComplexFrame::new(frame.samples.iter().map(|s| s + noise.sample(rng)).collect())
}

/// Mixes a master seed with a path of tags (splitmix64 finalizer per step).
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(master), |acc, &t| mix(acc ^ mix(t)))
}

/// Generator for the stream identified by `(master, tags)`.
pub fn stream(master: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng(seed: u64) -> SimRng {
        SimRng::seed_from_u64(seed)
    }

    #[test]
    fn dbm_reference_points() {
        assert_eq!(dbm_to_watts(PowerDbm(30.0)), 1.0);
        assert!((dbm_to_watts(PowerDbm(0.0)) - 0.001).abs() < 1e-15);
        assert!((dbm_to_watts(PowerDbm(20.0)) - 0.1).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn dbm_round_trip(p in -50.0f64..50.0) {
            let back = watts_to_dbm(dbm_to_watts(PowerDbm(p)));
            prop_assert!((back.0 - p).abs() < 1e-9);
        }

        #[test]
        fn scale_to_power_hits_target(seed in any::<u64>(), m in 1usize..64, p in -20.0f64..40.0) {
            let f = qpsk_frame(m, &mut rng(seed)).unwrap();
            let s = scale_to_power(&f, PowerDbm(p));
            prop_assert!((s.mean_power() / dbm_to_watts(PowerDbm(p)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qpsk_is_unit_modulus_and_unit_power() {
        let f = qpsk_frame(16, &mut rng(1)).unwrap();
        assert_eq!(f.len(), 16);
        for s in f.samples() {
            assert!((s.norm() - 1.0).abs() < 1e-15);
        }
        assert!((f.mean_power() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn qpsk_rejects_empty_frame() {
        assert!(matches!(qpsk_frame(0, &mut rng(1)), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn qpsk_symbols_are_uniform() {
        let n = 100_000;
        let f = qpsk_frame(n, &mut rng(7)).unwrap();
        let mut counts = [0usize; 4];
        for s in f.samples() {
            let idx = (s.re < 0.0) as usize | (((s.im < 0.0) as usize) << 1);
            counts[idx] += 1;
        }
        let mut chi2 = 0.0;
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.02, "frequency {freq}");
            chi2 += (c as f64 - n as f64 / 4.0).powi(2) / (n as f64 / 4.0);
        }
        // 3 degrees of freedom, 0.999 quantile
        assert!(chi2 < 16.27, "chi2 {chi2}");
    }

    #[test]
    fn qpsk_is_reproducible() {
        let a = qpsk_frame(64, &mut rng(99)).unwrap();
        let b = qpsk_frame(64, &mut rng(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scale_to_power_examples() {
        let f = qpsk_frame(16, &mut rng(3)).unwrap();
        for (a, b) in f.samples().iter().zip(scale_to_power(&f, PowerDbm(30.0)).samples()) {
            assert!((a - b).norm() < 1e-15);
        }
        let s = scale_to_power(&f, PowerDbm(20.0));
        for (a, b) in f.samples().iter().zip(s.samples()) {
            assert!((b - a * 0.1f64.sqrt()).norm() < 1e-15);
        }
        let z = ComplexFrame::zeros(8);
        assert_eq!(scale_to_power(&z, PowerDbm(10.0)), z);
    }

    #[test]
    fn zero_variance_noise_is_identity() {
        let f = qpsk_frame(16, &mut rng(3)).unwrap();
        let n = NoiseModel::new(0.0).unwrap();
        assert_eq!(add_noise(&f, &n, &mut rng(4)), f);
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(NoiseModel::new(-1.0).is_err());
        assert!(NoiseModel::new(f64::NAN).is_err());
    }

    #[test]
    fn noise_moments() {
        let var = 2.5;
        let n = 100_000;
        let noisy = add_noise(&ComplexFrame::zeros(n), &NoiseModel::new(var).unwrap(), &mut rng(11));
        let p = noisy.mean_power();
        assert!((p / var - 1.0).abs() < 0.05, "power {p}");
        let vre = noisy.samples().iter().map(|s| s.re * s.re).sum::<f64>() / n as f64;
        let vim = noisy.samples().iter().map(|s| s.im * s.im).sum::<f64>() / n as f64;
        assert!((vre / (var / 2.0) - 1.0).abs() < 0.05);
        assert!((vim / (var / 2.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn independent_noise_streams_are_uncorrelated() {
        let n = 100_000;
        let noise = NoiseModel::new(1.0).unwrap();
        let a = add_noise(&ComplexFrame::zeros(n), &noise, &mut stream(5, &[0]));
        let b = add_noise(&ComplexFrame::zeros(n), &noise, &mut stream(5, &[1]));
        let rho = a.inner(&b).norm() / (a.norm() * b.norm());
        assert!(rho < 0.02, "cross-correlation {rho}");
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(9, &[3, 4]), derive_seed(9, &[3, 4]));
    }
}
