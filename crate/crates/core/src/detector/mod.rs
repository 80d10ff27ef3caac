//! Two-class signal/noise detector.
//!
//! The network is the small CNN used at both the receiver and the
//! eavesdropper:
//!
//! ```text
//! [2 x M] I/Q  -> conv 1x3 (valid, F filters, shared over the I and Q rows) -> ReLU
//!              -> flatten (F * 2 * (M-2)) -> dense H -> ReLU -> dropout
//!              -> dense 2 -> softmax [p_signal, p_noise]
//! ```
//!
//! Forward and backward passes are written out by hand; the input gradient
//! is what the adversarial crafting consumes.

mod persist;
mod train;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signals::ComplexFrame;

pub use persist::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{evaluate, train, EpochMetrics, Evaluation, TrainConfig, TrainReport};

const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Signal,
    Noise,
}

impl Label {
    /// Output unit of this class.
    pub fn index(self) -> usize {
        match self {
            Label::Signal => 0,
            Label::Noise => 1,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Signal => Label::Noise,
            Label::Noise => Label::Signal,
        }
    }

    /// Argmax of a probability pair; an exact tie goes to `Signal`.
    pub fn from_probs(p: [f64; 2]) -> Label {
        if p[0] >= p[1] {
            Label::Signal
        } else {
            Label::Noise
        }
    }
}

/// Layer sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    /// Samples per frame (`M`).
    pub frame_len: usize,
    /// Convolution filters (`F`).
    pub filters: usize,
    /// Hidden dense width (`H`).
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { frame_len: 16, filters: 16, hidden: 64 }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len < KERNEL {
            return Err(invalid(format!("frame length must be >= {KERNEL}, got {}", self.frame_len)));
        }
        if self.filters == 0 || self.hidden == 0 {
            return Err(invalid("filters and hidden width must be >= 1"));
        }
        Ok(())
    }

    pub fn conv_len(&self) -> usize {
        self.frame_len - (KERNEL - 1)
    }

    /// Width of the flattened convolution output.
    pub fn flat_len(&self) -> usize {
        self.filters * 2 * self.conv_len()
    }

    pub fn input_len(&self) -> usize {
        2 * self.frame_len
    }
}

/// Real `[2 x M]` input: row 0 holds the in-phase samples, row 1 quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct IqTensor {
    frame_len: usize,
    data: Vec<f64>,
}

impl IqTensor {
    pub fn new(frame_len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * frame_len {
            return Err(invalid(format!(
                "expected {} values for a [2 x {frame_len}] tensor, got {}",
                2 * frame_len,
                data.len()
            )));
        }
        Ok(Self { frame_len, data })
    }

    pub fn zeros(frame_len: usize) -> Self {
        Self { frame_len, data: vec![0.0; 2 * frame_len] }
    }

    pub fn from_frame(frame: &ComplexFrame) -> Self {
        let m = frame.len();
        let mut data = vec![0.0; 2 * m];
        for (i, s) in frame.samples().iter().enumerate() {
            data[i] = s.re;
            data[m + i] = s.im;
        }
        Self { frame_len: m, data }
    }

    /// Packs row 0 as the real part and row 1 as the imaginary part.
    pub fn to_frame(&self) -> ComplexFrame {
        let m = self.frame_len;
        ComplexFrame::new((0..m).map(|i| Complex64::new(self.data[i], self.data[m + i])).collect())
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub input: IqTensor,
    pub label: Label,
}

/// All trainable tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[F, 1, 3]`
    pub conv_w: Vec<f64>,
    /// `[F]`
    pub conv_b: Vec<f64>,
    /// `[H, F*2*(M-2)]`
    pub dense_w: Vec<f64>,
    /// `[H]`
    pub dense_b: Vec<f64>,
    /// `[2, H]`
    pub out_w: Vec<f64>,
    /// `[2]`
    pub out_b: Vec<f64>,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            conv_w: vec![0.0; arch.filters * KERNEL],
            conv_b: vec![0.0; arch.filters],
            dense_w: vec![0.0; arch.hidden * arch.flat_len()],
            dense_b: vec![0.0; arch.hidden],
            out_w: vec![0.0; 2 * arch.hidden],
            out_b: vec![0.0; 2],
        }
    }

    /// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let mut fill = |w: &mut [f64], fan_in: usize| {
            let limit = (6.0 / fan_in as f64).sqrt();
            for x in w {
                *x = rng.random_range(-limit..limit);
            }
        };
        fill(&mut p.conv_w, KERNEL);
        fill(&mut p.dense_w, arch.flat_len());
        fill(&mut p.out_w, arch.hidden);
        p
    }

    /// Tensors in declaration (and file) order.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.conv_w, &self.conv_b, &self.dense_w, &self.dense_b, &self.out_w, &self.out_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [&mut self.conv_w, &mut self.conv_b, &mut self.dense_w, &mut self.dense_b, &mut self.out_w, &mut self.out_b]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = value);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub arch: Architecture,
    pub dropout_rate: f64,
    pub params: Params,
}

/// Intermediate activations of one forward pass.
struct Trace {
    conv_pre: Vec<f64>,
    flat: Vec<f64>,
    hidden_pre: Vec<f64>,
    /// Per-unit dropout multiplier (0 or 1/(1-rate)); `None` at inference.
    mask: Option<Vec<f64>>,
    hidden: Vec<f64>,
    logits: [f64; 2],
    probs: [f64; 2],
}

/// Dot product over eight independent partial sums so the loop can pipeline.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// `-ln softmax(logits)[target]`, computed in log space.
fn cross_entropy(logits: [f64; 2], target: Label) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[target.index()]
}

impl DetectorModel {
    pub fn new(arch: Architecture, dropout_rate: f64, params: Params) -> Result<Self> {
        arch.validate()?;
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(invalid(format!("dropout rate must lie in [0, 1), got {dropout_rate}")));
        }
        let expected = Params::zeros(&arch);
        if params.tensors().iter().zip(expected.tensors()).any(|(a, b)| a.len() != b.len()) {
            return Err(invalid("parameter shapes do not match the architecture"));
        }
        Ok(Self { arch, dropout_rate, params })
    }

    /// Freshly initialized model.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, dropout_rate: f64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        Self::new(arch, dropout_rate, Params::he_uniform(&arch, rng))
    }

    /// Model whose parameters are all zero; outputs `[0.5, 0.5]` everywhere.
    pub fn zeroed(arch: Architecture) -> Self {
        Self { arch, dropout_rate: 0.0, params: Params::zeros(&arch) }
    }

    fn check_input(&self, input: &IqTensor) -> Result<()> {
        if input.frame_len != self.arch.frame_len {
            return Err(invalid(format!(
                "input has {} samples per row, model expects {}",
                input.frame_len, self.arch.frame_len
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64], dropout: Option<&mut dyn RngCore>) -> Trace {
        let a = &self.arch;
        let l = a.conv_len();
        let p = &self.params;

        let mut conv_pre = vec![0.0; a.flat_len()];
        for f in 0..a.filters {
            let w = &p.conv_w[f * KERNEL..(f + 1) * KERNEL];
            for r in 0..2 {
                let row = &x[r * a.frame_len..(r + 1) * a.frame_len];
                let out = &mut conv_pre[(f * 2 + r) * l..(f * 2 + r + 1) * l];
                for (t, o) in out.iter_mut().enumerate() {
                    *o = p.conv_b[f] + w[0] * row[t] + w[1] * row[t + 1] + w[2] * row[t + 2];
                }
            }
        }
        let flat: Vec<f64> = conv_pre.iter().map(|&v| v.max(0.0)).collect();

        let d = a.flat_len();
        let hidden_pre: Vec<f64> = (0..a.hidden)
            .map(|j| {
                let w = &p.dense_w[j * d..(j + 1) * d];
                p.dense_b[j] + dot(w, &flat)
            })
            .collect();
        let mut hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();

        let mask = dropout.filter(|_| self.dropout_rate > 0.0).map(|rng| {
            let keep = 1.0 / (1.0 - self.dropout_rate);
            let mask: Vec<f64> =
                (0..a.hidden).map(|_| if rng.random::<f64>() < self.dropout_rate { 0.0 } else { keep }).collect();
            for (h, m) in hidden.iter_mut().zip(&mask) {
                *h *= m;
            }
            mask
        });

        let mut logits = [0.0; 2];
        for (c, logit) in logits.iter_mut().enumerate() {
            let w = &p.out_w[c * a.hidden..(c + 1) * a.hidden];
            *logit = p.out_b[c] + w.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        Trace { conv_pre, flat, hidden_pre, mask, hidden, logits, probs: softmax(logits) }
    }

    /// Backpropagates the cross-entropy toward `target`, accumulating
    /// parameter gradients into `grads` and the input gradient into `dx`.
    fn backward(&self, x: &[f64], tr: &Trace, target: Label, grads: Option<&mut Params>, dx: Option<&mut [f64]>) {
        let a = &self.arch;
        let p = &self.params;
        let l = a.conv_len();
        let d = a.flat_len();

        let mut dlogits = tr.probs;
        dlogits[target.index()] -= 1.0;

        let mut dhidden_pre = vec![0.0; a.hidden];
        for j in 0..a.hidden {
            let mut g = dlogits[0] * p.out_w[j] + dlogits[1] * p.out_w[a.hidden + j];
            if let Some(mask) = &tr.mask {
                g *= mask[j];
            }
            dhidden_pre[j] = if tr.hidden_pre[j] > 0.0 { g } else { 0.0 };
        }

        let mut dconv_pre = vec![0.0; d];
        for (j, &dz) in dhidden_pre.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let w = &p.dense_w[j * d..(j + 1) * d];
            for (acc, w) in dconv_pre.iter_mut().zip(w) {
                *acc += w * dz;
            }
        }
        for (g, &pre) in dconv_pre.iter_mut().zip(&tr.conv_pre) {
            if pre <= 0.0 {
                *g = 0.0;
            }
        }

        if let Some(gr) = grads {
            for (c, &dl) in dlogits.iter().enumerate() {
                gr.out_b[c] += dl;
                let row = &mut gr.out_w[c * a.hidden..(c + 1) * a.hidden];
                for (g, h) in row.iter_mut().zip(&tr.hidden) {
                    *g += dl * h;
                }
            }
            for (j, &dz) in dhidden_pre.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                gr.dense_b[j] += dz;
                let row = &mut gr.dense_w[j * d..(j + 1) * d];
                for (g, v) in row.iter_mut().zip(&tr.flat) {
                    *g += dz * v;
                }
            }
            for f in 0..a.filters {
                for r in 0..2 {
                    let row = &x[r * a.frame_len..(r + 1) * a.frame_len];
                    let dout = &dconv_pre[(f * 2 + r) * l..(f * 2 + r + 1) * l];
                    for (t, &g) in dout.iter().enumerate() {
                        gr.conv_b[f] += g;
                        for k in 0..KERNEL {
                            gr.conv_w[f * KERNEL + k] += g * row[t + k];
                        }
                    }
                }
            }
        }

        if let Some(dx) = dx {
            for f in 0..a.filters {
                let w = &p.conv_w[f * KERNEL..(f + 1) * KERNEL];
                for r in 0..2 {
                    let drow = &mut dx[r * a.frame_len..(r + 1) * a.frame_len];
                    let dout = &dconv_pre[(f * 2 + r) * l..(f * 2 + r + 1) * l];
                    for (t, &g) in dout.iter().enumerate() {
                        for k in 0..KERNEL {
                            drow[t + k] += w[k] * g;
                        }
                    }
                }
            }
        }
    }

    /// Inference-mode class probabilities `[p_signal, p_noise]`.
    pub fn forward(&self, input: &IqTensor) -> Result<[f64; 2]> {
        self.check_input(input)?;
        Ok(self.trace(&input.data, None).probs)
    }

    /// Inference-mode pre-softmax outputs `[z_signal, z_noise]`.
    pub fn logits(&self, input: &IqTensor) -> Result<[f64; 2]> {
        self.check_input(input)?;
        Ok(self.trace(&input.data, None).logits)
    }

    /// Training-mode forward pass: inverted dropout after the hidden layer.
    pub fn forward_train<R: RngCore>(&self, input: &IqTensor, mut rng: R) -> Result<[f64; 2]> {
        self.check_input(input)?;
        Ok(self.trace(&input.data, Some(&mut rng)).probs)
    }

    pub fn predict_label(&self, frame: &ComplexFrame) -> Result<Label> {
        Ok(Label::from_probs(self.forward(&IqTensor::from_frame(frame))?))
    }

    /// Inference-mode cross-entropy toward `target`.
    pub fn loss(&self, input: &IqTensor, target: Label) -> Result<f64> {
        self.check_input(input)?;
        let tr = self.trace(&input.data, None);
        Ok(cross_entropy(tr.logits, target))
    }

    /// Gradient of the inference-mode cross-entropy toward `target` with
    /// respect to the `[2 x M]` input.
    pub fn input_gradient(&self, input: &IqTensor, target: Label) -> Result<IqTensor> {
        self.check_input(input)?;
        let tr = self.trace(&input.data, None);
        let mut dx = IqTensor::zeros(self.arch.frame_len);
        self.backward(&input.data, &tr, target, None, Some(&mut dx.data));
        Ok(dx)
    }

    /// Input gradient packaged as `dL/dI + j dL/dQ`, so that
    /// `Re <g, δ>` is the first-order loss change for a complex step `δ`.
    pub fn complex_input_gradient(&self, frame: &ComplexFrame, target: Label) -> Result<ComplexFrame> {
        Ok(self.input_gradient(&IqTensor::from_frame(frame), target)?.to_frame())
    }

    /// Loss and parameter gradient for one example. With `dropout` set the
    /// pass runs in training mode using that generator for the mask.
    pub fn param_gradient(
        &self,
        input: &IqTensor,
        target: Label,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<(f64, Params)> {
        self.check_input(input)?;
        let mut grads = Params::zeros(&self.arch);
        let (loss, _) = self.accumulate(input, target, dropout, &mut grads);
        Ok((loss, grads))
    }

    /// Training-mode loss with an explicit dropout generator.
    pub fn loss_train<R: RngCore>(&self, input: &IqTensor, target: Label, mut rng: R) -> Result<f64> {
        self.check_input(input)?;
        Ok(cross_entropy(self.trace(&input.data, Some(&mut rng)).logits, target))
    }

    /// Adds this example's gradient to `grads`; returns its loss and output.
    pub(crate) fn accumulate(
        &self,
        input: &IqTensor,
        target: Label,
        dropout: Option<&mut dyn RngCore>,
        grads: &mut Params,
    ) -> (f64, [f64; 2]) {
        let tr = self.trace(&input.data, dropout);
        self.backward(&input.data, &tr, target, Some(grads), None);
        (cross_entropy(tr.logits, target), tr.probs)
    }
}

#[cfg(test)]
pub(crate) use testing::l1_detector;


#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{qpsk_frame, SimRng};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn small_arch() -> Architecture {
        Architecture { frame_len: 6, filters: 3, hidden: 5 }
    }

    fn random_input(m: usize, scale: f64, rng: &mut SimRng) -> IqTensor {
        IqTensor::new(m, (0..2 * m).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    fn model(arch: Architecture, seed: u64) -> DetectorModel {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut m = DetectorModel::init(arch, 0.1, &mut rng).unwrap();
        // nonzero biases so every tensor carries gradient
        for b in m.params.conv_b.iter_mut().chain(m.params.dense_b.iter_mut()).chain(m.params.out_b.iter_mut()) {
            *b = rng.random_range(-0.3..0.3);
        }
        m
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = DetectorModel::zeroed(Architecture::default());
        let mut rng = SimRng::seed_from_u64(1);
        let x = random_input(16, 3.0, &mut rng);
        assert_eq!(m.forward(&x).unwrap(), [0.5, 0.5]);
        assert_eq!(m.predict_label(&x.to_frame()).unwrap(), Label::Signal);
    }

    #[test]
    fn zero_model_has_zero_input_gradient() {
        let m = DetectorModel::zeroed(Architecture::default());
        let x = random_input(16, 3.0, &mut SimRng::seed_from_u64(2));
        let g = m.input_gradient(&x, Label::Noise).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(m.complex_input_gradient(&x.to_frame(), Label::Noise).unwrap().energy() == 0.0);
    }

    #[test]
    fn tie_break_and_argmax() {
        assert_eq!(Label::from_probs([0.7, 0.3]), Label::Signal);
        assert_eq!(Label::from_probs([0.3, 0.7]), Label::Noise);
        assert_eq!(Label::from_probs([0.5, 0.5]), Label::Signal);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = DetectorModel::zeroed(Architecture::default());
        assert!(m.forward(&IqTensor::zeros(8)).is_err());
        assert!(IqTensor::new(16, vec![0.0; 31]).is_err());
    }

    #[test]
    fn inference_ignores_seed() {
        let m = model(Architecture::default(), 3);
        let x = random_input(16, 2.0, &mut SimRng::seed_from_u64(4));
        assert_eq!(m.forward(&x).unwrap(), m.forward(&x).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn softmax_is_a_distribution(seed in any::<u64>(), scale in 0.01f64..5.0) {
            let m = model(Architecture::default(), 5);
            let x = random_input(16, scale, &mut SimRng::seed_from_u64(seed));
            let p = m.forward(&x).unwrap();
            prop_assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] < 1.0 && p[1] < 1.0);
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_stable_for_large_logits() {
        let p = softmax([1000.0, -1000.0]);
        assert_eq!(p, [1.0, 0.0]);
        assert!(cross_entropy([1000.0, -1000.0], Label::Noise).is_finite());
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let m = model(Architecture::default(), 6);
        let mut rng = SimRng::seed_from_u64(7);
        let h = 1e-4;
        for _ in 0..10 {
            let x = random_input(16, 2.0, &mut rng);
            for target in [Label::Signal, Label::Noise] {
                let g = m.input_gradient(&x, target).unwrap();
                for i in 0..32 {
                    let mut xp = x.clone();
                    xp.as_mut_slice()[i] += h;
                    let mut xm = x.clone();
                    xm.as_mut_slice()[i] -= h;
                    let fd = (m.loss(&xp, target).unwrap() - m.loss(&xm, target).unwrap()) / (2.0 * h);
                    let e = rel_err(g.as_slice()[i], fd);
                    assert!(e < 1e-4, "component {i}: analytic {} fd {fd}", g.as_slice()[i]);
                }
            }
        }
    }

    #[test]
    fn two_class_gradients_are_opposite() {
        let m = model(Architecture::default(), 8);
        let x = random_input(16, 2.0, &mut SimRng::seed_from_u64(9));
        let gs = m.input_gradient(&x, Label::Signal).unwrap();
        let gn = m.input_gradient(&x, Label::Noise).unwrap();
        // both are multiples of d(z_noise - z_signal)/dx: p_noise for one, -p_signal for the other
        let [ps, pn] = m.forward(&x).unwrap();
        let scale = gs.norm().max(gn.norm());
        for (a, b) in gs.as_slice().iter().zip(gn.as_slice()) {
            assert!((a * ps + b * pn).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn param_gradients_match_central_differences() {
        let arch = small_arch();
        let m = model(arch, 10);
        let mut rng = SimRng::seed_from_u64(11);
        let h = 1e-4;
        for _ in 0..10 {
            let x = random_input(arch.frame_len, 2.0, &mut rng);
            let (_, g) = m.param_gradient(&x, Label::Signal, None).unwrap();
            for t in 0..6 {
                for i in 0..g.tensors()[t].len() {
                    let mut mp = m.clone();
                    mp.params.tensors_mut()[t][i] += h;
                    let mut mm = m.clone();
                    mm.params.tensors_mut()[t][i] -= h;
                    let fd = (mp.loss(&x, Label::Signal).unwrap() - mm.loss(&x, Label::Signal).unwrap()) / (2.0 * h);
                    let e = rel_err(g.tensors()[t][i], fd);
                    assert!(e < 1e-4, "tensor {t}[{i}]: analytic {} fd {fd}", g.tensors()[t][i]);
                }
            }
        }
    }

    #[test]
    fn dropout_gradient_matches_differences_under_fixed_mask() {
        let arch = small_arch();
        let m = model(arch, 12);
        let x = random_input(arch.frame_len, 2.0, &mut SimRng::seed_from_u64(13));
        let (_, g) = m.param_gradient(&x, Label::Noise, Some(&mut SimRng::seed_from_u64(14))).unwrap();
        let h = 1e-4;
        for i in 0..m.params.out_w.len() {
            let mut mp = m.clone();
            mp.params.out_w[i] += h;
            let mut mm = m.clone();
            mm.params.out_w[i] -= h;
            let lp = mp.loss_train(&x, Label::Noise, SimRng::seed_from_u64(14)).unwrap();
            let lm = mm.loss_train(&x, Label::Noise, SimRng::seed_from_u64(14)).unwrap();
            assert!(rel_err(g.out_w[i], (lp - lm) / (2.0 * h)) < 1e-4);
        }
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let arch = Architecture { frame_len: 16, filters: 4, hidden: 1000 };
        let mut m = DetectorModel::zeroed(arch);
        m.dropout_rate = 0.1;
        m.params.dense_b.fill(1.0);
        let x = IqTensor::zeros(16);
        let mut rng = SimRng::seed_from_u64(15);
        let (mut zeros, mut total) = (0usize, 0usize);
        for _ in 0..100 {
            let tr = m.trace(x.as_slice(), Some(&mut rng));
            for &h in &tr.hidden {
                total += 1;
                if h == 0.0 {
                    zeros += 1;
                } else {
                    assert!((h - 1.0 / 0.9).abs() < 1e-12);
                }
            }
        }
        let rate = zeros as f64 / total as f64;
        assert!((rate - 0.1).abs() < 0.02, "dropout rate {rate}");
    }

    #[test]
    fn swapping_output_rows_swaps_probabilities() {
        let m = model(Architecture::default(), 16);
        let mut swapped = m.clone();
        let h = m.arch.hidden;
        swapped.params.out_w = [&m.params.out_w[h..], &m.params.out_w[..h]].concat();
        swapped.params.out_b = vec![m.params.out_b[1], m.params.out_b[0]];
        let x = random_input(16, 2.0, &mut SimRng::seed_from_u64(17));
        let p = m.forward(&x).unwrap();
        let q = swapped.forward(&x).unwrap();
        assert_eq!(p, [q[1], q[0]]);
    }

    #[test]
    fn complex_gradient_packaging() {
        let m = model(Architecture::default(), 18);
        let frame = qpsk_frame(16, &mut SimRng::seed_from_u64(19)).unwrap().scaled(Complex64::new(1.3, -0.4));
        let real = m.input_gradient(&IqTensor::from_frame(&frame), Label::Noise).unwrap();
        let g = m.complex_input_gradient(&frame, Label::Noise).unwrap();
        for i in 0..16 {
            assert_eq!(g[i].re, real.as_slice()[i]);
            assert_eq!(g[i].im, real.as_slice()[16 + i]);
        }
        assert!((g.norm() - real.norm()).abs() < 1e-12);
    }

    #[test]
    fn negative_complex_gradient_is_a_descent_direction() {
        let m = model(Architecture::default(), 20);
        let mut rng = SimRng::seed_from_u64(21);
        for _ in 0..10 {
            let frame = qpsk_frame(16, &mut rng).unwrap().scaled(Complex64::new(2.0, 1.0));
            let g = m.complex_input_gradient(&frame, Label::Noise).unwrap();
            if g.norm() == 0.0 {
                continue;
            }
            let step = g.scaled(Complex64::new(-1e-3 / g.norm(), 0.0));
            let before = m.loss(&IqTensor::from_frame(&frame), Label::Noise).unwrap();
            let after = m.loss(&IqTensor::from_frame(&(&frame + &step)), Label::Noise).unwrap();
            assert!(after < before);
        }
    }
}
