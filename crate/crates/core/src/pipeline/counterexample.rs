//! Degenerate-solution demonstrations.
//!
//! Two constructions show how the reconstruction objective can be solved
//! without a useful action representation:
//!
//! - under a deterministic expert the decoder can predict the next state from
//!   the current state alone, leaving the latent ignored (measured here by an
//!   ablation gap: shuffling the latents does not hurt reconstruction) and the
//!   encoder free to collapse;
//! - with an unconstrained continuous latent the encoder can simply copy the
//!   next state into the latent, which a probe then reads back out.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::{audit_table, build_table, AuditThresholds};
use crate::env::{make_builtin_env, sample_transitions, Environment, TransitionSet};
use crate::error::PipelineError;
use crate::net::{adam_step, Activation, AdamState, Network};
use crate::objective::{hard_label, train, FdmModel, IdmModel, LossTerms, TrainConfig};

/// Names accepted by [`run_counterexample`].
pub const COUNTEREXAMPLE_NAMES: [&str; 2] = ["deterministic-policy", "continuous-latent"];

/// Reconstruction gate used by the demonstrations.
pub const RECON_GATE: f64 = 1e-3;

/// Ablation gap below which the decoder is considered to ignore the latent.
pub const ABLATION_GAP_TOLERANCE: f64 = 1e-3;

/// Outcome of one deterministic-expert run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetPolicyReport {
    pub seed: u64,
    pub final_terms: LossTerms,
    pub total: f64,
    /// Reconstruction reached the gate, so the run is a valid demonstration.
    pub recon_pass: bool,
    pub d3_injective: bool,
    pub distinct_modal_latents: usize,
    /// Reconstruction with shuffled latents minus reconstruction with the
    /// encoder's own labels; near zero means the decoder ignores the latent.
    pub ablation_gap: f64,
    /// Informativeness failed or the decoder ignores the latent.
    pub degenerate: bool,
}

/// Outcome of one unconstrained-latent run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousLatentReport {
    pub seed: u64,
    pub reconstruction: f64,
    /// Variance in the next state explained by a probe reading the latent alone.
    pub probe_r2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "counterexample", rename_all = "kebab-case")]
pub enum CounterexampleReport {
    DeterministicPolicy(DetPolicyReport),
    ContinuousLatent(ContinuousLatentReport),
}

/// Dispatch a demonstration by name.
pub fn run_counterexample(name: &str, seed: u64) -> Result<CounterexampleReport, PipelineError> {
    match name {
        "deterministic-policy" => {
            let env = make_builtin_env("det-policy", seed)?;
            deterministic_policy_demo(&env, seed, &det_policy_train_config(seed))
                .map(CounterexampleReport::DeterministicPolicy)
        }
        "continuous-latent" => {
            continuous_latent_demo(seed).map(CounterexampleReport::ContinuousLatent)
        }
        other => Err(PipelineError::UnknownCounterexample {
            name: other.to_string(),
            valid: COUNTEREXAMPLE_NAMES.to_vec(),
        }),
    }
}

/// Training budget for the deterministic-expert demonstration (also used for
/// the matched control run on the stochastic-expert environment).
pub fn det_policy_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..TrainConfig::default()
    }
}

/// Train on a deterministic-expert environment and measure both failure
/// signatures: informativeness collapse and latent-ablation insensitivity.
pub fn deterministic_policy_demo(
    env: &Environment,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<DetPolicyReport, PipelineError> {
    let data = sample_transitions(env, 20_000, seed.wrapping_add(0xDE7), false)?;
    let out = train(&data, cfg)?;

    let table = build_table(env, &out.idm, 2000, seed.wrapping_add(0xA0D))?;
    let audit = audit_table(&table, &env.name, AuditThresholds::default())?;

    let eval = sample_transitions(env, 2000, seed.wrapping_add(0xE7A1), false)?;
    let ablation_gap = latent_ablation_gap(&out.idm, &out.fdm, &eval, seed)?;

    let total = out.final_terms.total(cfg.beta);
    let recon_pass = out.final_terms.reconstruction <= RECON_GATE;
    let d3_injective = audit.informativeness.injective;
    Ok(DetPolicyReport {
        seed,
        final_terms: out.final_terms,
        total,
        recon_pass,
        d3_injective,
        distinct_modal_latents: audit.distinct_modal_latents(),
        ablation_gap,
        degenerate: !d3_injective || ablation_gap <= ABLATION_GAP_TOLERANCE,
    })
}

/// Reconstruction with shuffled hard labels minus reconstruction with the
/// encoder's own hard labels, over an action-free evaluation sample.
pub fn latent_ablation_gap(
    idm: &IdmModel,
    fdm: &FdmModel,
    eval: &TransitionSet,
    seed: u64,
) -> Result<f64, PipelineError> {
    let labels = hard_label(idm, eval).map_err(crate::error::TrainError::Num)?;
    let mut shuffled = labels.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5F0F));
    shuffled.shuffle(&mut rng);
    let recon = |labels: &[u32]| -> f64 {
        let mut total = 0.0;
        for i in 0..eval.len() {
            let x = eval.states.row(i);
            let pred = crate::objective::LatentDecoder::predict(
                fdm,
                x.as_slice().expect("contiguous"),
                labels[i] as usize,
            );
            let target = eval.next_states.row(i);
            total += pred
                .iter()
                .zip(target.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        total / eval.len() as f64
    };
    Ok(recon(&shuffled) - recon(&labels))
}

/// Encoder and decoder for the unconstrained-latent construction: the latent
/// is a real vector of the next state's dimension, nothing restricts it to a
/// discrete set, and the decoder can pass it straight through.
struct ContinuousLatentModel {
    encoder: Network,
    decoder: Network,
}

/// Train the unconstrained-latent model on plain reconstruction and probe how
/// much of the next state the latent alone explains.
pub fn continuous_latent_demo(seed: u64) -> Result<ContinuousLatentReport, PipelineError> {
    let env = make_builtin_env("quadrant4", seed)?;
    let data = sample_transitions(&env, 8000, seed.wrapping_add(0xC0), false)?;
    let d = env.state_dim;
    let latent_dim = env.next_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x11));
    let mut model = ContinuousLatentModel {
        encoder: Network::mlp(d + env.next_dim, &[32, 32], latent_dim, Activation::Identity, rng.gen())?,
        decoder: Network::mlp(d + latent_dim, &[32, 32], env.next_dim, Activation::Identity, rng.gen())?,
    };
    let mut enc_adam = AdamState::new(&model.encoder);
    let mut dec_adam = AdamState::new(&model.decoder);
    let steps = 4000;
    let batch = 128;
    let n = data.len();
    let lr = crate::objective::Schedule {
        initial: 3e-3,
        end: 3e-4,
    };
    let mut reconstruction = f64::INFINITY;
    for step in 0..steps {
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..n)).collect();
        let states = data.states.select(Axis(0), &idx);
        let next = data.next_states.select(Axis(0), &idx);

        let enc_in = crate::objective::concat_columns(states.view(), next.view());
        let enc_trace = model.encoder.forward_batch(enc_in.view())?;
        let latents = enc_trace.output().clone();
        let dec_in = crate::objective::concat_columns(states.view(), latents.view());
        let dec_trace = model.decoder.forward_batch(dec_in.view())?;
        let diff = dec_trace.output() - &next;
        reconstruction = (&diff * &diff).sum() / batch as f64;

        let mut upstream = diff;
        upstream.mapv_inplace(|v| 2.0 * v / batch as f64);
        let (dec_grad, dec_input_grad) = dec_trace.backward(upstream.view())?;
        let dlatent = dec_input_grad.slice(ndarray::s![.., d..]).to_owned();
        let (enc_grad, _) = enc_trace.backward(dlatent.view())?;
        let rate = lr.at(step, steps);
        adam_step(&mut model.decoder, &dec_grad, &mut dec_adam, rate)
            .map_err(crate::error::TrainError::Num)?;
        adam_step(&mut model.encoder, &enc_grad, &mut enc_adam, rate)
            .map_err(crate::error::TrainError::Num)?;
    }

    // Probe: regress the next state from the latent alone on held-out data.
    let held = sample_transitions(&env, 4000, seed.wrapping_add(0xBEEF), false)?;
    let enc_in = crate::objective::concat_columns(held.states.view(), held.next_states.view());
    let latents = model.encoder.forward_batch(enc_in.view())?.output().clone();
    let split = held.len() / 2;
    let probe = train_probe(
        latents.slice(ndarray::s![..split, ..]).to_owned(),
        held.next_states.slice(ndarray::s![..split, ..]).to_owned(),
        seed.wrapping_add(0x9),
    )?;
    let probe_r2 = r_squared(
        &probe,
        latents.slice(ndarray::s![split.., ..]).to_owned(),
        held.next_states.slice(ndarray::s![split.., ..]).to_owned(),
    )?;
    Ok(ContinuousLatentReport {
        seed,
        reconstruction,
        probe_r2,
    })
}

fn train_probe(inputs: Array2<f64>, targets: Array2<f64>, seed: u64) -> Result<Network, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = Network::mlp(
        inputs.ncols(),
        &[32],
        targets.ncols(),
        Activation::Identity,
        rng.gen(),
    )?;
    let mut adam = AdamState::new(&probe);
    let n = inputs.nrows();
    let batch = 128;
    let steps = 2000;
    for step in 0..steps {
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..n)).collect();
        let x = inputs.select(Axis(0), &idx);
        let y = targets.select(Axis(0), &idx);
        let trace = probe.forward_batch(x.view())?;
        let diff = trace.output() - &y;
        let mut upstream = diff;
        upstream.mapv_inplace(|v| 2.0 * v / batch as f64);
        let (grad, _) = trace.backward(upstream.view())?;
        let lr = if step < steps / 2 { 3e-3 } else { 1e-3 };
        adam_step(&mut probe, &grad, &mut adam, lr).map_err(crate::error::TrainError::Num)?;
    }
    Ok(probe)
}

/// Coefficient of determination of the probe over all output coordinates.
fn r_squared(probe: &Network, inputs: Array2<f64>, targets: Array2<f64>) -> Result<f64, PipelineError> {
    let predictions = probe.forward_batch(inputs.view())?.output().clone();
    let mean = targets.mean_axis(Axis(0)).expect("nonempty");
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (pred_row, target_row) in predictions.rows().into_iter().zip(targets.rows()) {
        for ((p, t), m) in pred_row.iter().zip(target_row.iter()).zip(mean.iter()) {
            ss_res += (t - p) * (t - p);
            ss_tot += (t - m) * (t - m);
        }
    }
    Ok(1.0 - ss_res / ss_tot)
}
