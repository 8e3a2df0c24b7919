//! The training loop: seeded initialization, mini-batch Adam over the chosen
//! gradient strategy, loss tracing, and a final exact evaluation.

use std::time::Instant;

use ndarray::Axis;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    derive_seeds, estimator_for, loss_terms, FdmModel, IdmModel, LossTerms, TracePoint,
    TrainConfig,
};
use crate::env::TransitionSet;
use crate::error::TrainError;
use crate::net::{adam_step, AdamState};

/// Models, trace, and final exact loss of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub idm: IdmModel,
    pub fdm: FdmModel,
    pub trace: Vec<TracePoint>,
    /// Exact objective terms over the full training set after the last step.
    pub final_terms: LossTerms,
    /// Revival events: (step, revived latent, donor latent).
    pub revivals: Vec<(usize, usize, usize)>,
}

/// Revival happens at most this often and only while the step count is below
/// half the budget.
const REVIVE_INTERVAL: usize = 200;

/// A latent whose batch usage falls below `REVIVE_USAGE_FRACTION / k_hat` is
/// considered dead.
const REVIVE_USAGE_FRACTION: f64 = 0.1;

/// No revival once every latent's reconstruction contribution is this small;
/// splitting a well-fit latent would only duplicate it.
const REVIVE_RECON_FLOOR: f64 = 1e-5;

/// Regularizer weight at `step`: held at zero while specialization (and
/// revival) happens, then ramped in over a fifth of the budget. Even a small
/// entropy weight re-collapses a freshly split latent pair, so the hold phase
/// must be exactly zero.
fn effective_beta(beta: f64, step: usize, warmup_steps: usize, total_steps: usize) -> f64 {
    if step < warmup_steps {
        return 0.0;
    }
    let ramp = (total_steps / 5).max(1);
    let progress = (step - warmup_steps) as f64 / ramp as f64;
    beta * progress.min(1.0)
}

/// Minimize the objective over an encoder/decoder pair for `cfg.steps` steps.
///
/// The input must be the action-free view. Nonfinite losses or gradients abort
/// with the trace collected so far.
pub fn train(data: &TransitionSet, cfg: &TrainConfig) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    if data.labeled() {
        return Err(TrainError::LabeledInput);
    }
    let (init_idm_seed, init_fdm_seed, stream_seed) = derive_seeds(cfg.seed);
    let mut idm = IdmModel::seeded(
        data.state_dim(),
        data.next_dim(),
        cfg.k_hat,
        &cfg.idm_hidden,
        init_idm_seed,
    )?;
    let mut fdm = FdmModel::seeded(
        data.state_dim(),
        data.next_dim(),
        cfg.k_hat,
        &cfg.fdm_hidden,
        init_fdm_seed,
    )?;
    let estimator = estimator_for(cfg.mode);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mut idm_adam = AdamState::new(&idm.net);
    let mut fdm_adam = AdamState::new(&fdm.net);
    let mut trace = Vec::new();
    let mut revivals = Vec::new();
    let started = Instant::now();
    let n = data.len();
    let warmup_steps = (cfg.beta_warmup_frac * cfg.steps as f64).round() as usize;

    for step in 0..cfg.steps {
        let (states, next) = if n <= cfg.batch {
            (data.states.clone(), data.next_states.clone())
        } else {
            let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.gen_range(0..n)).collect();
            (
                data.states.select(Axis(0), &idx),
                data.next_states.select(Axis(0), &idx),
            )
        };
        let temperature = cfg.temperature.at(step, cfg.steps);
        let beta = effective_beta(cfg.beta, step, warmup_steps, cfg.steps);
        let estimate = estimator.estimate(
            &idm,
            &fdm,
            states.view(),
            next.view(),
            beta,
            temperature,
            &mut rng,
        )?;
        if !estimate.terms.is_finite() {
            return Err(TrainError::Diverged { step, trace });
        }
        if step % cfg.eval_interval == 0 {
            trace.push(trace_point(cfg, step, &estimate.terms, &started));
        }
        let lr = cfg.lr.at(step, cfg.steps);
        let stepped = adam_step(&mut idm.net, &estimate.idm_grad, &mut idm_adam, lr)
            .and_then(|_| adam_step(&mut fdm.net, &estimate.fdm_grad, &mut fdm_adam, lr));
        if stepped.is_err() {
            return Err(TrainError::Diverged { step, trace });
        }
        if cfg.latent_revival
            && step > 0
            && step % REVIVE_INTERVAL == 0
            && beta == 0.0
            && step < (3 * cfg.steps) / 4
        {
            if let Some((dead, donor)) = revival_candidate(&estimate, cfg.k_hat) {
                idm.net.copy_output_unit(donor, dead, 0.1, &mut rng);
                fdm.net
                    .copy_input_row(idm.state_dim + donor, idm.state_dim + dead, 0.1, &mut rng);
                idm_adam.reset_output_unit_moments(dead);
                fdm_adam.reset_input_row_moments(idm.state_dim + dead);
                revivals.push((step, dead, donor));
            }
        }
    }

    let final_terms = loss_terms(&idm, &fdm, data)?;
    trace.push(trace_point(cfg, cfg.steps, &final_terms, &started));
    Ok(TrainOutput {
        idm,
        fdm,
        trace,
        final_terms,
        revivals,
    })
}

/// A dead latent worth reviving plus the donor whose samples it should split:
/// the latent carrying the most reconstruction error, provided that error is
/// still substantial.
fn revival_candidate(
    estimate: &super::StepEstimate,
    k_hat: usize,
) -> Option<(usize, usize)> {
    let threshold = REVIVE_USAGE_FRACTION / k_hat as f64;
    let dead = (0..k_hat).min_by(|&a, &b| {
        estimate.latent_usage[a]
            .partial_cmp(&estimate.latent_usage[b])
            .expect("finite usage")
    })?;
    if estimate.latent_usage[dead] >= threshold {
        return None;
    }
    let donor = (0..k_hat).max_by(|&a, &b| {
        estimate.latent_recon_mass[a]
            .partial_cmp(&estimate.latent_recon_mass[b])
            .expect("finite mass")
    })?;
    if donor == dead || estimate.latent_recon_mass[donor] < REVIVE_RECON_FLOOR {
        return None;
    }
    Some((dead, donor))
}

fn trace_point(cfg: &TrainConfig, step: usize, terms: &LossTerms, started: &Instant) -> TracePoint {
    TracePoint {
        step,
        reconstruction: terms.reconstruction,
        entropy: terms.entropy,
        total: terms.total(cfg.beta),
        wallclock_ms: started.elapsed().as_millis() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_builtin_env, sample_transitions};
    use crate::objective::TrainMode;

    fn small_cfg(steps: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            steps,
            seed,
            batch: 64,
            eval_interval: 100,
            idm_hidden: vec![16],
            fdm_hidden: vec![16],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let data = sample_transitions(&env, 256, 3, false).unwrap();
        let cfg = small_cfg(0, 5);
        let out = train(&data, &cfg).unwrap();
        let fresh_idm = IdmModel::seeded(2, 2, 4, &[16], derive_seeds(5).0).unwrap();
        assert_eq!(out.idm.net.flat_parameters(), fresh_idm.net.flat_parameters());
    }

    #[test]
    fn labeled_input_is_rejected() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let data = sample_transitions(&env, 64, 3, true).unwrap();
        assert!(matches!(
            train(&data, &small_cfg(1, 0)),
            Err(TrainError::LabeledInput)
        ));
    }

    #[test]
    fn identical_config_and_data_give_identical_weights() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let data = sample_transitions(&env, 512, 3, false).unwrap();
        let cfg = small_cfg(300, 7);
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.idm.net.flat_parameters(), b.idm.net.flat_parameters());
        assert_eq!(a.fdm.net.flat_parameters(), b.fdm.net.flat_parameters());
        assert_eq!(a.final_terms, b.final_terms);
    }

    #[test]
    fn short_run_decreases_the_loss() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let data = sample_transitions(&env, 2048, 3, false).unwrap();
        let cfg = TrainConfig {
            steps: 1500,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg).unwrap();
        let first = out.trace.first().unwrap().total;
        let last = out.final_terms.total(cfg.beta);
        assert!(last < 0.5 * first, "loss went from {first} to {last}");
    }

    #[test]
    fn relaxed_mode_also_trains() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let data = sample_transitions(&env, 2048, 3, false).unwrap();
        let cfg = TrainConfig {
            steps: 1500,
            seed: 2,
            mode: TrainMode::RelaxedSample,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg).unwrap();
        let first = out.trace.first().unwrap().total;
        let last = out.final_terms.total(cfg.beta);
        assert!(last < 0.5 * first, "loss went from {first} to {last}");
    }
}
