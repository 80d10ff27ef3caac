//! Transmitter-side perturbations against the eavesdropper's detector.
//!
//! The eavesdropper sees `g_eve (x + δ) + n`. A targeted single-step FGM
//! direction is taken at the noiseless observation `g_eve x` and rotated by
//! `conj(g_eve)` so that it arrives at the eavesdropper aligned with the
//! negative loss gradient. The step length is then found by bisection: the
//! smallest norm on that ray that makes the eavesdropper label the received
//! frame as noise, within the energy budget.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorModel, Label};
use crate::error::{invalid, Error, Result};
use crate::signals::{ComplexFrame, PowerDbm};

/// Default bisection tolerance relative to `sqrt(E_max)`.
pub const DEFAULT_RELATIVE_ACCURACY: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBudget {
    /// Per-sample average perturbation power.
    pub p_max: PowerDbm,
    /// Absolute bisection tolerance on the perturbation norm.
    pub eps_acc: f64,
}

impl PerturbationBudget {
    pub fn new(p_max: PowerDbm, eps_acc: f64) -> Result<Self> {
        if !p_max.0.is_finite() {
            return Err(invalid("perturbation power must be finite"));
        }
        if !(eps_acc > 0.0 && eps_acc.is_finite()) {
            return Err(invalid(format!("bisection accuracy must be > 0, got {eps_acc}")));
        }
        Ok(Self { p_max, eps_acc })
    }

    /// Budget whose tolerance is `rel * sqrt(E_max)` for frames of `m` samples.
    pub fn relative(p_max: PowerDbm, m: usize, rel: f64) -> Result<Self> {
        let e = m as f64 * p_max.watts();
        Self::new(p_max, rel * e.sqrt())
    }

    /// Frame-energy budget `E_max = M * P_max[W]`.
    pub fn energy(&self, m: usize) -> f64 {
        m as f64 * self.p_max.watts()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraftedPerturbation {
    pub delta: ComplexFrame,
    /// Norm of `delta`.
    pub epsilon: f64,
    /// Whether the noiseless eavesdropper observation is labeled noise.
    pub success: bool,
}

impl CraftedPerturbation {
    pub fn none(m: usize, success: bool) -> Self {
        Self { delta: ComplexFrame::zeros(m), epsilon: 0.0, success }
    }
}

/// Unit-norm transmit direction `conj(g_eve) ∇L / ||conj(g_eve) ∇L||`, with
/// `∇L` the gradient of the loss toward `Noise` at `y_eve`.
pub fn fgm_direction(eve_model: &DetectorModel, y_eve: &ComplexFrame, g_eve: Complex64) -> Result<ComplexFrame> {
    if g_eve.norm_sqr() == 0.0 {
        return Err(Error::DegenerateChannel("eavesdropper gain is zero".into()));
    }
    let grad = eve_model.complex_input_gradient(y_eve, Label::Noise)?;
    let rotated = grad.scaled(g_eve.conj());
    let norm = rotated.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroGradient);
    }
    Ok(rotated.scaled(Complex64::new(1.0 / norm, 0.0)))
}

/// Minimal-norm perturbation on the FGM ray that flips the eavesdropper's
/// label from signal to noise.
///
/// Frames the eavesdropper already labels noise get a zero perturbation.
/// If the full budget is not enough, the full-budget perturbation is
/// returned with `success = false`. A zero gradient or zero channel yields a
/// zero perturbation with `success = false`.
pub fn craft(
    eve_model: &DetectorModel,
    tx_frame: &ComplexFrame,
    g_eve: Complex64,
    budget: &PerturbationBudget,
) -> Result<CraftedPerturbation> {
    let m = tx_frame.len();
    let y = tx_frame.scaled(g_eve);
    if eve_model.predict_label(&y)? == Label::Noise {
        return Ok(CraftedPerturbation::none(m, true));
    }
    let direction = match fgm_direction(eve_model, &y, g_eve) {
        Ok(d) => d,
        Err(Error::ZeroGradient | Error::DegenerateChannel(_)) => return Ok(CraftedPerturbation::none(m, false)),
        Err(e) => return Err(e),
    };

    let fooled = |eps: f64| -> Result<bool> {
        let sent = tx_frame.try_add(&direction.scaled(Complex64::new(-eps, 0.0)))?;
        Ok(eve_model.predict_label(&sent.scaled(g_eve))? == Label::Noise)
    };

    let e_max = budget.energy(m);
    let mut hi = e_max.sqrt();
    let success = fooled(hi)?;
    if success {
        let mut lo = 0.0;
        while hi - lo > budget.eps_acc {
            let mid = 0.5 * (lo + hi);
            if fooled(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    let delta = direction.scaled(Complex64::new(-hi, 0.0));
    let epsilon = delta.norm();
    assert!(
        epsilon * epsilon <= e_max * (1.0 + 1e-12),
        "perturbation energy {} exceeds budget {e_max}",
        epsilon * epsilon
    );
    Ok(CraftedPerturbation { delta, epsilon, success })
}

/// Transmit-side superposition `x + δ`.
pub fn apply_perturbation(tx_frame: &ComplexFrame, crafted: &CraftedPerturbation) -> Result<ComplexFrame> {
    tx_frame.try_add(&crafted.delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{l1_detector, Architecture};
    use crate::signals::{add_noise, qpsk_frame, stream, NoiseModel};

    fn budget(p: f64) -> PerturbationBudget {
        PerturbationBudget::relative(PowerDbm(p), 16, DEFAULT_RELATIVE_ACCURACY).unwrap()
    }

    #[test]
    fn direction_is_unit_norm_and_conjugate_rotated() {
        let model = l1_detector(10.0);
        let x = qpsk_frame(16, &mut stream(1, &[])).unwrap();
        let g = Complex64::new(0.8, 0.6);
        let y = x.scaled(g);
        let d = fgm_direction(&model, &y, g).unwrap();
        assert!((d.norm() - 1.0).abs() < 1e-12);

        let raw = model.complex_input_gradient(&y, Label::Noise).unwrap();
        let raw_unit = raw.scaled(Complex64::new(1.0 / raw.norm(), 0.0));
        let real_gain = fgm_direction(&model, &y, Complex64::new(2.5, 0.0)).unwrap();
        for i in 0..16 {
            assert!((real_gain[i] - raw_unit[i]).norm() < 1e-12);
        }

        let phi = 0.7;
        let rotated = fgm_direction(&model, &y, g * Complex64::from_polar(1.0, phi)).unwrap();
        for i in 0..16 {
            assert!((rotated[i] - d[i] * Complex64::from_polar(1.0, -phi)).norm() < 1e-12);
        }
    }

    #[test]
    fn direction_errors() {
        let model = l1_detector(10.0);
        let y = qpsk_frame(16, &mut stream(2, &[])).unwrap();
        assert!(matches!(fgm_direction(&model, &y, Complex64::new(0.0, 0.0)), Err(Error::DegenerateChannel(_))));
        let flat = DetectorModel::zeroed(Architecture::default());
        assert!(matches!(fgm_direction(&flat, &y, Complex64::new(1.0, 0.0)), Err(Error::ZeroGradient)));
    }

    #[test]
    fn already_noise_needs_no_perturbation() {
        let model = l1_detector(1e6);
        let x = qpsk_frame(16, &mut stream(3, &[])).unwrap();
        let c = craft(&model, &x, Complex64::new(1.0, 0.0), &budget(25.0)).unwrap();
        assert_eq!(c, CraftedPerturbation::none(16, true));
    }

    #[test]
    fn zero_gradient_gives_zero_perturbation() {
        let flat = DetectorModel::zeroed(Architecture::default());
        let x = qpsk_frame(16, &mut stream(4, &[])).unwrap();
        let c = craft(&flat, &x, Complex64::new(1.0, 0.0), &budget(25.0)).unwrap();
        assert_eq!(c, CraftedPerturbation::none(16, false));
    }

    #[test]
    fn l1_detector_threshold_is_found() {
        // Unit-gain QPSK has L1 mass 14 * 2 / sqrt(2) over the covered samples.
        // The gradient is proportional to sign(y) there, so along the ray the
        // mass drops by eps * sqrt(28) and the label flips at
        // eps* = (mass - threshold) / sqrt(28).
        let model = l1_detector(15.0);
        let x = qpsk_frame(16, &mut stream(5, &[])).unwrap();
        let b = budget(30.0);
        let c = craft(&model, &x, Complex64::new(1.0, 0.0), &b).unwrap();
        assert!(c.success);
        let mass0 = 14.0 * 2.0 * std::f64::consts::FRAC_1_SQRT_2;
        let exact = (mass0 - 15.0) / 28f64.sqrt();
        assert!(c.epsilon >= exact - 1e-12 && c.epsilon - exact <= b.eps_acc, "{} vs {exact}", c.epsilon);
        assert!((c.delta.norm() - c.epsilon).abs() < 1e-9);
    }

    #[test]
    fn insufficient_budget_returns_full_budget() {
        let model = l1_detector(1.0);
        let x = qpsk_frame(16, &mut stream(6, &[])).unwrap();
        let b = budget(0.0);
        let c = craft(&model, &x, Complex64::new(1.0, 0.0), &b).unwrap();
        assert!(!c.success);
        assert!((c.epsilon * c.epsilon - b.energy(16)).abs() < 1e-12);
    }

    #[test]
    fn crafting_is_deterministic() {
        let model = l1_detector(15.0);
        let x = qpsk_frame(16, &mut stream(7, &[])).unwrap();
        let g = Complex64::new(0.3, -1.1);
        assert_eq!(craft(&model, &x, g, &budget(28.0)).unwrap(), craft(&model, &x, g, &budget(28.0)).unwrap());
    }

    #[test]
    fn apply_perturbation_algebra() {
        let mut rng = stream(8, &[]);
        let x = qpsk_frame(16, &mut rng).unwrap();
        assert_eq!(apply_perturbation(&x, &CraftedPerturbation::none(16, true)).unwrap(), x);

        let model = l1_detector(18.0);
        let g = Complex64::new(-0.4, 0.9);
        let c = craft(&model, &x, g, &budget(27.0)).unwrap();
        let sent = apply_perturbation(&x, &c).unwrap();
        assert!(sent.energy() <= (x.norm() + c.epsilon).powi(2) + 1e-12);

        // received frame is the channel applied to the sum, plus noise
        let noise = NoiseModel::new(0.2).unwrap();
        let rx = add_noise(&sent.scaled(g), &noise, &mut stream(9, &[]));
        let parts = add_noise(&(&x.scaled(g) + &c.delta.scaled(g)), &noise, &mut stream(9, &[]));
        for i in 0..16 {
            assert!((rx[i] - parts[i]).norm() < 1e-12);
        }
        assert!(apply_perturbation(&ComplexFrame::zeros(4), &c).is_err());
    }

    #[test]
    fn receiver_sees_scaled_perturbation_power() {
        let model = l1_detector(15.0);
        let x = qpsk_frame(16, &mut stream(10, &[])).unwrap();
        let c = craft(&model, &x, Complex64::new(1.2, 0.2), &budget(27.0)).unwrap();
        assert!(c.epsilon > 0.0);
        let g_r = Complex64::new(3.0, -4.0);
        let analytic = g_r.norm_sqr() * c.epsilon * c.epsilon / 16.0;
        let measured = c.delta.scaled(g_r).mean_power();
        assert!((measured / analytic - 1.0).abs() < 0.01, "{measured} vs {analytic} (eps {})", c.epsilon);
    }

    #[test]
    fn budget_validation() {
        assert!(PerturbationBudget::new(PowerDbm(f64::INFINITY), 1e-3).is_err());
        assert!(PerturbationBudget::new(PowerDbm(20.0), 0.0).is_err());
        let b = budget(20.0);
        assert!((b.energy(16) - 1.6).abs() < 1e-12);
        assert!((b.eps_acc - 1e-4 * 1.6f64.sqrt()).abs() < 1e-15);
    }
}
