//! The entropy-regularized reconstruction objective over an encoder/decoder
//! pair, and the models it trains.
//!
//! The encoder (inverse dynamics model) maps a transition pair `(x, x')` to a
//! distribution over `k_hat` latent actions; the decoder (forward dynamics
//! model) maps `(x, latent)` back to a next-state prediction. The training
//! objective is
//!
//! ```text
//! mean_i [ sum_a q(a | x_i, x'_i) · ||x'_i − g(x_i, onehot(a))||²  +  beta · H(q(· | x_i, x'_i)) ]
//! ```
//!
//! Both terms are nonnegative, so the objective is bounded below by zero.

mod estimator;
mod train;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::categorical::{argmax, entropy_unchecked, softmax};
use crate::env::TransitionSet;
use crate::error::{NumError, TrainError};
use crate::net::{Activation, BatchTrace, Network};

pub use estimator::{estimator_for, GradientEstimator, StepEstimate};
pub use train::{train, TrainOutput};

/// Anything that encodes a transition pair into a latent-action distribution.
/// Implemented both by trained encoders and by the constructive oracle, so the
/// audit machinery can score either through the same surface.
pub trait ActionEncoder {
    fn latent_count(&self) -> usize;
    /// Simplex vector over latent actions. Panics on dimension mismatch;
    /// fallible entry points validate dimensions first.
    fn latent_probs(&self, x: &[f64], x_next: &[f64]) -> Vec<f64>;
}

/// Anything that decodes `(state, latent index)` to a next-state prediction.
pub trait LatentDecoder {
    fn latent_count(&self) -> usize;
    fn predict(&self, x: &[f64], latent: usize) -> Vec<f64>;
}

/// Trained encoder: network from `(x, x')` to latent logits.
#[derive(Debug, Clone)]
pub struct IdmModel {
    pub net: Network,
    pub k_hat: usize,
    pub state_dim: usize,
    pub next_dim: usize,
}

impl IdmModel {
    pub fn seeded(
        state_dim: usize,
        next_dim: usize,
        k_hat: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self, NumError> {
        let net = Network::mlp(state_dim + next_dim, hidden, k_hat, Activation::Identity, seed)?;
        Ok(IdmModel {
            net,
            k_hat,
            state_dim,
            next_dim,
        })
    }

    /// Latent distribution for one transition pair.
    pub fn encode(&self, x: &[f64], x_next: &[f64]) -> Result<Vec<f64>, NumError> {
        if x.len() != self.state_dim || x_next.len() != self.next_dim {
            return Err(NumError::DimensionMismatch {
                expected: self.state_dim + self.next_dim,
                got: x.len() + x_next.len(),
            });
        }
        let mut input = Vec::with_capacity(x.len() + x_next.len());
        input.extend_from_slice(x);
        input.extend_from_slice(x_next);
        let logits = self.net.forward(ndarray::ArrayView1::from(&input))?;
        Ok(softmax(logits.as_slice().expect("contiguous")))
    }

    /// Recorded batch forward over concatenated `(x, x')` rows.
    pub(crate) fn logits_batch(
        &self,
        states: ArrayView2<f64>,
        next: ArrayView2<f64>,
    ) -> Result<BatchTrace<'_>, NumError> {
        let input = concat_columns(states, next);
        self.net.forward_batch(input.view())
    }
}

impl ActionEncoder for IdmModel {
    fn latent_count(&self) -> usize {
        self.k_hat
    }

    fn latent_probs(&self, x: &[f64], x_next: &[f64]) -> Vec<f64> {
        self.encode(x, x_next).expect("dimension mismatch")
    }
}

/// Trained decoder: network from `(x, latent one-hot)` to a next state in the
/// open unit box (sigmoid output).
#[derive(Debug, Clone)]
pub struct FdmModel {
    pub net: Network,
    pub k_hat: usize,
    pub state_dim: usize,
}

impl FdmModel {
    pub fn seeded(
        state_dim: usize,
        next_dim: usize,
        k_hat: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self, NumError> {
        let mut net = Network::mlp(state_dim + k_hat, hidden, next_dim, Activation::Sigmoid, seed)?;
        // Spread the per-latent predictions at initialization. With near-equal
        // heads every latent fits the same mean map and the encoder has no
        // reconstruction signal to route by; amplifying the latent-block input
        // weights separates the heads so routing aligns with the next state
        // from the first steps.
        net.scale_input_rows(state_dim, state_dim + k_hat, 8.0);
        Ok(FdmModel {
            net,
            k_hat,
            state_dim,
        })
    }

    /// Prediction conditioned on an arbitrary latent weighting (one-hot or relaxed).
    pub fn predict_weighted(&self, x: &[f64], latent: &[f64]) -> Result<Vec<f64>, NumError> {
        if x.len() != self.state_dim || latent.len() != self.k_hat {
            return Err(NumError::DimensionMismatch {
                expected: self.state_dim + self.k_hat,
                got: x.len() + latent.len(),
            });
        }
        let mut input = Vec::with_capacity(x.len() + latent.len());
        input.extend_from_slice(x);
        input.extend_from_slice(latent);
        let out = self.net.forward(ndarray::ArrayView1::from(&input))?;
        Ok(out.to_vec())
    }
}

impl LatentDecoder for FdmModel {
    fn latent_count(&self) -> usize {
        self.k_hat
    }

    fn predict(&self, x: &[f64], latent: usize) -> Vec<f64> {
        let mut onehot = vec![0.0; self.k_hat];
        onehot[latent] = 1.0;
        self.predict_weighted(x, &onehot).expect("dimension mismatch")
    }
}

/// The two objective terms, averaged over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub reconstruction: f64,
    pub entropy: f64,
}

impl LossTerms {
    pub fn total(&self, beta: f64) -> f64 {
        self.reconstruction + beta * self.entropy
    }

    pub fn is_finite(&self) -> bool {
        self.reconstruction.is_finite() && self.entropy.is_finite()
    }
}

/// Exact objective terms: the latent expectation is enumerated, never sampled.
pub fn loss_terms(
    encoder: &dyn ActionEncoder,
    decoder: &dyn LatentDecoder,
    batch: &TransitionSet,
) -> Result<LossTerms, TrainError> {
    let rows = loss_term_rows(encoder, decoder, batch)?;
    let n = rows.len() as f64;
    let (recon, entropy) = rows
        .iter()
        .fold((0.0, 0.0), |(r, e), t| (r + t.reconstruction, e + t.entropy));
    Ok(LossTerms {
        reconstruction: recon / n,
        entropy: entropy / n,
    })
}

/// Per-row objective terms, for callers that need worst-case statistics.
pub fn loss_term_rows(
    encoder: &dyn ActionEncoder,
    decoder: &dyn LatentDecoder,
    batch: &TransitionSet,
) -> Result<Vec<LossTerms>, TrainError> {
    if batch.labeled() {
        return Err(TrainError::LabeledInput);
    }
    if encoder.latent_count() != decoder.latent_count() {
        return Err(TrainError::Num(NumError::DimensionMismatch {
            expected: encoder.latent_count(),
            got: decoder.latent_count(),
        }));
    }
    let k_hat = encoder.latent_count();
    let mut rows = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let x = batch.states.row(i);
        let x = x.as_slice().expect("contiguous");
        let x_next = batch.next_states.row(i);
        let x_next = x_next.as_slice().expect("contiguous");
        let probs = encoder.latent_probs(x, x_next);
        debug_assert_eq!(probs.len(), k_hat);
        let mut recon = 0.0;
        for (latent, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let pred = decoder.predict(x, latent);
            let err: f64 = pred
                .iter()
                .zip(x_next)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            recon += p * err;
        }
        rows.push(LossTerms {
            reconstruction: recon,
            entropy: entropy_unchecked(&probs),
        });
    }
    Ok(rows)
}

/// Per-row argmax labels; exact ties break toward the smaller latent index.
pub fn hard_label(idm: &IdmModel, batch: &TransitionSet) -> Result<Vec<u32>, NumError> {
    let trace = idm.logits_batch(batch.states.view(), batch.next_states.view())?;
    Ok(trace
        .output()
        .rows()
        .into_iter()
        .map(|row| argmax(row.as_slice().expect("contiguous")) as u32)
        .collect())
}

/// How the latent expectation is estimated during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Enumerate all latents exactly (default; zero estimator variance).
    ExactMarginal,
    /// One Gumbel-softmax sample with an annealed temperature.
    RelaxedSample,
    /// Straight-through hard argmax. Ablation only; biased gradients.
    HardArgmaxAblation,
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::ExactMarginal => "exact-marginal",
            TrainMode::RelaxedSample => "relaxed-sample",
            TrainMode::HardArgmaxAblation => "hard-argmax-ablation",
        }
    }
}

/// Geometric interpolation between an initial and final value over training.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Schedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub end: f64,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule {
            initial: value,
            end: value,
        }
    }

    pub fn at(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps <= 1 || self.initial == self.end {
            return self.initial;
        }
        let t = step as f64 / (total_steps - 1) as f64;
        self.initial * (self.end / self.initial).powf(t)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub k_hat: usize,
    /// Entropy-regularizer weight. Zero is accepted only as the documented
    /// ablation of the regularizer; the objective proper requires it positive.
    pub beta: f64,
    /// Fraction of training during which the regularizer weight is held at
    /// zero before ramping in. Applying the weight from the first step
    /// collapses the encoder before reconstruction can differentiate the
    /// decoder heads; zero means a constant weight from the start.
    pub beta_warmup_frac: f64,
    pub mode: TrainMode,
    pub lr: Schedule,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub eval_interval: usize,
    pub idm_hidden: Vec<usize>,
    pub fdm_hidden: Vec<usize>,
    /// Gumbel-softmax temperature (relaxed-sample mode only).
    pub temperature: Schedule,
    /// Re-seed latents that fall out of use during the first half of training
    /// by splitting the worst-reconstructing latent. Keeps the latent space
    /// from merging distinct actions into one code.
    pub latent_revival: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_hat: 4,
            beta: 0.05,
            beta_warmup_frac: 0.3,
            mode: TrainMode::ExactMarginal,
            lr: Schedule {
                initial: 3e-3,
                end: 3e-4,
            },
            steps: 20_000,
            batch: 128,
            seed: 0,
            eval_interval: 500,
            idm_hidden: vec![32, 32],
            fdm_hidden: vec![32, 32],
            temperature: Schedule {
                initial: 1.0,
                end: 0.4,
            },
            latent_revival: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.k_hat == 0 {
            return bad("k_hat must be at least 1");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be nonnegative");
        }
        if !(self.lr.initial > 0.0 && self.lr.end > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be at least 1");
        }
        if !(self.temperature.initial > 0.0 && self.temperature.end > 0.0) {
            return bad("temperature must be positive");
        }
        if !(0.0..=1.0).contains(&self.beta_warmup_frac) {
            return bad("beta_warmup_frac must lie in [0, 1]");
        }
        Ok(())
    }
}

/// One loss-trace record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub reconstruction: f64,
    pub entropy: f64,
    pub total: f64,
    pub wallclock_ms: u64,
}

pub(crate) fn concat_columns(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    assert_eq!(a.nrows(), b.nrows(), "row counts match");
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(ndarray::s![.., ..a.ncols()]).assign(&a);
    out.slice_mut(ndarray::s![.., a.ncols()..]).assign(&b);
    out
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// Derived seed streams so that initialization and batch draws are independent.
pub(crate) fn derive_seeds(seed: u64) -> (u64, u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.gen(), rng.gen(), rng.gen())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_builtin_env, sample_transitions};
    use approx::assert_abs_diff_eq;

    /// Encoder with constant output, for loss arithmetic tests.
    struct FixedEncoder(Vec<f64>);
    impl ActionEncoder for FixedEncoder {
        fn latent_count(&self) -> usize {
            self.0.len()
        }
        fn latent_probs(&self, _: &[f64], _: &[f64]) -> Vec<f64> {
            self.0.clone()
        }
    }

    /// Decoder with constant output for every latent.
    struct FixedDecoder {
        k_hat: usize,
        value: Vec<f64>,
    }
    impl LatentDecoder for FixedDecoder {
        fn latent_count(&self) -> usize {
            self.k_hat
        }
        fn predict(&self, _: &[f64], _: usize) -> Vec<f64> {
            self.value.clone()
        }
    }

    #[test]
    fn uniform_encoder_gives_log_k_entropy_term() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let batch = sample_transitions(&env, 100, 3, false).unwrap();
        let enc = FixedEncoder(vec![0.25; 4]);
        let dec = FixedDecoder {
            k_hat: 4,
            value: vec![0.5, 0.5],
        };
        let terms = loss_terms(&enc, &dec, &batch).unwrap();
        assert_abs_diff_eq!(terms.entropy, 4.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn constant_decoder_reconstruction_matches_direct_arithmetic() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let batch = sample_transitions(&env, 200, 5, false).unwrap();
        let enc = FixedEncoder(vec![1.0, 0.0, 0.0, 0.0]);
        let dec = FixedDecoder {
            k_hat: 4,
            value: vec![0.5, 0.5],
        };
        let terms = loss_terms(&enc, &dec, &batch).unwrap();
        let expected: f64 = (0..batch.len())
            .map(|i| {
                let row = batch.next_states.row(i);
                row.iter().map(|&v| (v - 0.5) * (v - 0.5)).sum::<f64>()
            })
            .sum::<f64>()
            / batch.len() as f64;
        assert_abs_diff_eq!(terms.reconstruction, expected, epsilon = 1e-12);
        assert_eq!(terms.entropy, 0.0);
    }

    #[test]
    fn loss_terms_rejects_labeled_batches_and_mismatched_latents() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let labeled = sample_transitions(&env, 10, 1, true).unwrap();
        let enc = FixedEncoder(vec![0.25; 4]);
        let dec = FixedDecoder {
            k_hat: 4,
            value: vec![0.5, 0.5],
        };
        assert!(matches!(
            loss_terms(&enc, &dec, &labeled),
            Err(TrainError::LabeledInput)
        ));
        let dec_wrong = FixedDecoder {
            k_hat: 5,
            value: vec![0.5, 0.5],
        };
        assert!(loss_terms(&enc, &dec_wrong, &labeled.action_free()).is_err());
    }

    #[test]
    fn encode_outputs_a_simplex_and_is_reproducible() {
        let idm = IdmModel::seeded(2, 2, 4, &[16], 9).unwrap();
        let p1 = idm.encode(&[0.1, 0.2], &[0.3, 0.4]).unwrap();
        let p2 = idm.encode(&[0.1, 0.2], &[0.3, 0.4]).unwrap();
        assert_eq!(p1, p2);
        assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(idm.encode(&[0.1], &[0.3, 0.4]).is_err());
    }

    #[test]
    fn hard_label_matches_argmax_of_encode() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let batch = sample_transitions(&env, 50, 2, false).unwrap();
        let idm = IdmModel::seeded(2, 2, 4, &[16], 3).unwrap();
        let labels = hard_label(&idm, &batch).unwrap();
        for i in 0..batch.len() {
            let x = batch.states.row(i);
            let xn = batch.next_states.row(i);
            let probs = idm
                .encode(x.as_slice().unwrap(), xn.as_slice().unwrap())
                .unwrap();
            assert_eq!(labels[i] as usize, argmax(&probs));
        }
    }

    #[test]
    fn schedule_interpolates_geometrically() {
        let s = Schedule {
            initial: 1.0,
            end: 0.25,
        };
        assert_eq!(s.at(0, 3), 1.0);
        assert_abs_diff_eq!(s.at(1, 3), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.at(2, 3), 0.25, epsilon = 1e-12);
        assert_eq!(Schedule::constant(0.7).at(5, 10), 0.7);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = TrainConfig::default();
        cfg.beta = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.k_hat = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.temperature.end = 0.0;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
