//! The three-stage latent-action training procedure, end to end, plus a
//! behavior-cloning baseline and the degenerate-solution demonstrations.
//!
//! Stage 1 trains the encoder/decoder pair on action-free transitions. Stage 2
//! relabels fresh action-free transitions with the encoder's hard labels and
//! fits a latent policy. Stage 3 fits the small decoding head from a much
//! smaller labeled set and reports the total-variation gap between the decoded
//! latent policy and the ground-truth expert.

pub mod classifier;
pub mod counterexample;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::audit::{audit_table, build_table, extract_sigma, AuditReport, AuditThresholds, SigmaMap};
use crate::categorical::softmax;
use crate::env::{sample_states, sample_transitions, Environment};
use crate::error::PipelineError;
use crate::net::Network;
use crate::objective::{train, ActionEncoder, LossTerms, TrainConfig, TrainOutput};

pub use classifier::{train_classifier, ClassifierConfig};
pub use counterexample::{
    continuous_latent_demo, deterministic_policy_demo, run_counterexample, ContinuousLatentReport,
    CounterexampleReport, DetPolicyReport,
};

/// Latent policy: state to latent-action distribution.
#[derive(Debug, Clone)]
pub struct LatentPolicy {
    pub net: Network,
    pub k_hat: usize,
}

impl LatentPolicy {
    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        let logits = self
            .net
            .forward(ndarray::ArrayView1::from(x))
            .expect("dimension mismatch");
        softmax(logits.as_slice().expect("contiguous"))
    }
}

/// Deterministic sub-seed derivation for the pipeline's sampling stages.
fn subseed(seed: u64, stage: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stage.wrapping_add(1))
}

/// Stage 1: train the encoder/decoder pair on `n` action-free transitions.
pub fn stage1_train(
    env: &Environment,
    n: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutput, PipelineError> {
    let data = sample_transitions(env, n, subseed(cfg.seed, 1), false)?;
    Ok(train(&data, cfg)?)
}

/// Stage 2 output: the latent policy plus coverage warnings.
#[derive(Debug, Clone)]
pub struct Stage2Output {
    pub policy: LatentPolicy,
    /// Per latent: did it appear among the relabeled transitions?
    pub observed_latents: Vec<bool>,
    pub warnings: Vec<String>,
}

/// Stage 2: relabel `n` fresh transitions with the encoder's hard labels and
/// fit the latent policy by cross-entropy.
pub fn stage2_train_policy(
    env: &Environment,
    encoder: &dyn ActionEncoder,
    n: usize,
    cfg: &ClassifierConfig,
) -> Result<Stage2Output, PipelineError> {
    let data = sample_transitions(env, n, subseed(cfg.seed, 2), false)?;
    let labels = hard_labels_of(encoder, data.states.view(), data.next_states.view());
    let k_hat = encoder.latent_count();
    let mut observed = vec![false; k_hat];
    for &l in &labels {
        observed[l as usize] = true;
    }
    let warnings = observed
        .iter()
        .enumerate()
        .filter(|(_, &seen)| !seen)
        .map(|(latent, _)| format!("latent {latent} never observed in relabeled data"))
        .collect();
    let net = train_classifier(data.states.view(), &labels, k_hat, cfg)?;
    Ok(Stage2Output {
        policy: LatentPolicy { net, k_hat },
        observed_latents: observed,
        warnings,
    })
}

/// Hard labels from any encoder, row by row (argmax, ties to smaller index).
pub fn hard_labels_of(
    encoder: &dyn ActionEncoder,
    states: ArrayView2<f64>,
    next_states: ArrayView2<f64>,
) -> Vec<u32> {
    (0..states.nrows())
        .map(|i| {
            let x = states.row(i);
            let xn = next_states.row(i);
            let probs = encoder.latent_probs(
                x.as_slice().expect("contiguous"),
                xn.as_slice().expect("contiguous"),
            );
            crate::categorical::argmax(&probs) as u32
        })
        .collect()
}

/// Stage 3 output: the fitted head and the composed divergence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage3Output {
    pub sigma: SigmaMap,
    /// Mean total-variation distance between the decoded latent policy and
    /// the expert policy over the test states.
    pub divergence: f64,
    /// Mean latent-policy mass on unmapped latents (counted as error).
    pub unmapped_mass: f64,
    pub n_a: usize,
}

/// Stage 3: fit the decoding head on `n_a` labeled transitions and measure the
/// composed policy divergence on `test_states` fresh states.
pub fn stage3_fit_head(
    policy: &LatentPolicy,
    encoder: &dyn ActionEncoder,
    env: &Environment,
    n_a: usize,
    seed: u64,
    test_states: usize,
) -> Result<Stage3Output, PipelineError> {
    let table = build_table(env, encoder, n_a, subseed(seed, 3))?;
    let sigma = extract_sigma(&table)?;
    let states = sample_states(env, test_states, subseed(seed, 4))?;
    let mut unmapped_total = 0.0;
    let divergence = mean_divergence(env, states.view(), |x| {
        let latent_probs = policy.probs(x);
        let mut pushed = vec![0.0; env.action_count];
        let mut unmapped = 0.0;
        for (latent, &p) in latent_probs.iter().enumerate() {
            match sigma.apply(latent) {
                Some(action) => pushed[action] += p,
                None => unmapped += p,
            }
        }
        unmapped_total += unmapped;
        (pushed, unmapped)
    });
    Ok(Stage3Output {
        sigma,
        divergence,
        unmapped_mass: unmapped_total / test_states as f64,
        n_a,
    })
}

/// Mean total-variation distance between a predictor's action distribution
/// and the expert policy over the given states. The predictor also returns
/// mass it cannot assign to any action, which counts fully as error.
pub fn mean_divergence(
    env: &Environment,
    states: ArrayView2<f64>,
    mut predictor: impl FnMut(&[f64]) -> (Vec<f64>, f64),
) -> f64 {
    let mut total = 0.0;
    for row in states.rows() {
        let x = row.as_slice().expect("contiguous");
        let expert = env
            .restricted_policy_probs(x)
            .expect("test state inside support union");
        let (predicted, unmapped) = predictor(x);
        let l1: f64 = expert
            .iter()
            .zip(&predicted)
            .map(|(e, p)| (e - p).abs())
            .sum();
        total += 0.5 * (l1 + unmapped);
    }
    total / states.nrows() as f64
}

/// Behavior cloning: fit a direct state-to-action classifier on `n_a` labeled
/// transitions and measure the same divergence on the same test states.
pub fn behavior_cloning_baseline(
    env: &Environment,
    n_a: usize,
    cfg: &ClassifierConfig,
    seed: u64,
    test_states: usize,
) -> Result<f64, PipelineError> {
    let data = sample_transitions(env, n_a, subseed(seed, 3), true)?;
    let labels = data.actions.as_ref().expect("labeled sample").clone();
    let net = train_classifier(data.states.view(), &labels, env.action_count, cfg)?;
    let states = sample_states(env, test_states, subseed(seed, 4))?;
    Ok(mean_divergence(env, states.view(), |x| {
        let logits = net
            .forward(ndarray::ArrayView1::from(x))
            .expect("dimension mismatch");
        (softmax(logits.as_slice().expect("contiguous")), 0.0)
    }))
}

/// Sizes and budgets for an end-to-end pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Unlabeled transitions for stages 1 and 2.
    pub n: usize,
    /// Labeled set sizes to sweep in stage 3 and the baseline.
    pub n_a: Vec<usize>,
    /// Evaluation sample for the audit of the stage-1 encoder.
    pub audit_rows: usize,
    pub test_states: usize,
    pub policy: ClassifierConfig,
    pub thresholds: AuditThresholds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n: 50_000,
            n_a: vec![40, 200, 400, 4000],
            audit_rows: 2000,
            test_states: 1000,
            policy: ClassifierConfig::default(),
            thresholds: AuditThresholds::default(),
        }
    }
}

/// One labeled-set size in the divergence sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceEntry {
    pub n_a: usize,
    pub lapo_divergence: f64,
    pub bc_divergence: f64,
    pub unmapped_mass: f64,
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineResult {
    pub env: String,
    pub n: usize,
    pub seed: u64,
    pub stage1_final: LossTerms,
    pub stage1_total: f64,
    pub audit: AuditReport,
    pub stage2_warnings: Vec<String>,
    pub entries: Vec<DivergenceEntry>,
}

/// Header for the pipeline summary CSV (one row per method and size).
pub const SUMMARY_CSV_HEADER: &str = "env,n,n_a,method,divergence,seed";

pub fn summary_csv_rows(result: &PipelineResult) -> Vec<String> {
    let mut rows = Vec::new();
    for entry in &result.entries {
        rows.push(format!(
            "{},{},{},lapo,{},{}",
            result.env, result.n, entry.n_a, entry.lapo_divergence, result.seed
        ));
        rows.push(format!(
            "{},{},{},bc,{},{}",
            result.env, result.n, entry.n_a, entry.bc_divergence, result.seed
        ));
    }
    rows
}

/// Run all three stages plus the baseline for every labeled-set size.
pub fn run_pipeline(
    env: &Environment,
    train_cfg: &TrainConfig,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PipelineResult, PipelineError> {
    let mut stage1_cfg = train_cfg.clone();
    stage1_cfg.seed = seed;
    let stage1 = stage1_train(env, cfg.n, &stage1_cfg)?;

    let table = build_table(env, &stage1.idm, cfg.audit_rows, subseed(seed, 5))?;
    let audit = audit_table(&table, &env.name, cfg.thresholds)?;

    let mut policy_cfg = cfg.policy.clone();
    policy_cfg.seed = seed;
    let stage2 = stage2_train_policy(env, &stage1.idm, cfg.n, &policy_cfg)?;

    let mut entries = Vec::new();
    for &n_a in &cfg.n_a {
        let stage3 = stage3_fit_head(
            &stage2.policy,
            &stage1.idm,
            env,
            n_a,
            seed.wrapping_add(n_a as u64),
            cfg.test_states,
        )?;
        let mut bc_cfg = cfg.policy.clone();
        bc_cfg.seed = seed;
        let bc_divergence = behavior_cloning_baseline(
            env,
            n_a,
            &bc_cfg,
            seed.wrapping_add(n_a as u64),
            cfg.test_states,
        )?;
        entries.push(DivergenceEntry {
            n_a,
            lapo_divergence: stage3.divergence,
            bc_divergence,
            unmapped_mass: stage3.unmapped_mass,
        });
    }

    Ok(PipelineResult {
        env: env.name.clone(),
        n: cfg.n,
        seed,
        stage1_total: stage1.final_terms.total(train_cfg.beta),
        stage1_final: stage1.final_terms,
        audit,
        stage2_warnings: stage2.warnings,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_builtin_env;
    use crate::oracle::{GraphDistanceField, OracleIdm};

    fn small_policy_cfg(seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            steps: 1500,
            hidden: vec![16, 16],
            seed,
            ..ClassifierConfig::default()
        }
    }

    #[test]
    fn stage2_with_oracle_labels_matches_pushforward_of_uniform_expert() {
        // With a perfect encoder on the uniform-expert environment, the latent
        // policy must put mass close to 1/k on each modal latent.
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let field = GraphDistanceField::build(&env, 64);
        let oracle = OracleIdm::new(field, 4).unwrap();
        let stage2 = stage2_train_policy(&env, &oracle, 3000, &small_policy_cfg(1)).unwrap();
        assert!(stage2.warnings.is_empty());
        let states = sample_states(&env, 200, 99).unwrap();
        let mut worst: f64 = 0.0;
        for row in states.rows() {
            let probs = stage2.policy.probs(row.as_slice().unwrap());
            let tv: f64 = 0.5
                * probs
                    .iter()
                    .map(|p| (p - 0.25).abs())
                    .sum::<f64>();
            worst = worst.max(tv);
        }
        assert!(worst <= 0.05, "worst TV to uniform pushforward {worst}");
    }

    #[test]
    fn stage2_warns_on_unobserved_latents() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let field = GraphDistanceField::build(&env, 32);
        // Surplus latent space: latents 4..8 can never be argmax.
        let oracle = OracleIdm::new(field, 8).unwrap();
        let stage2 = stage2_train_policy(&env, &oracle, 500, &small_policy_cfg(2)).unwrap();
        assert_eq!(stage2.warnings.len(), 4);
    }

    #[test]
    fn oracle_pipeline_composes_to_the_expert_policy() {
        // Perfect encoder, fitted latent policy, majority-vote head: the
        // composed policy should match the uniform expert to policy-fit error.
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let field = GraphDistanceField::build(&env, 64);
        let oracle = OracleIdm::new(field, 4).unwrap();
        let stage2 = stage2_train_policy(&env, &oracle, 3000, &small_policy_cfg(3)).unwrap();
        let stage3 = stage3_fit_head(&stage2.policy, &oracle, &env, 40, 7, 500).unwrap();
        assert!(
            stage3.divergence <= 0.05,
            "oracle pipeline divergence {}",
            stage3.divergence
        );
        assert_eq!(stage3.sigma.mapped_count(), 4);
        assert!(stage3.unmapped_mass < 1e-6);
    }

    #[test]
    fn behavior_cloning_eventually_matches_a_uniform_expert() {
        // The uniform expert is easy: with enough labels BC gets close.
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let divergence =
            behavior_cloning_baseline(&env, 4000, &small_policy_cfg(5), 11, 300).unwrap();
        assert!(divergence <= 0.05, "bc divergence {divergence}");
    }

    #[test]
    fn behavior_cloning_rejects_empty_label_sets() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        assert!(behavior_cloning_baseline(&env, 0, &small_policy_cfg(5), 1, 10).is_err());
    }

    #[test]
    fn divergence_is_within_unit_interval() {
        let env = make_builtin_env("affine8", 3).unwrap();
        let states = sample_states(&env, 50, 1).unwrap();
        // Worst possible predictor: all mass unmapped.
        let div = mean_divergence(&env, states.view(), |_| (vec![0.0; 8], 1.0));
        assert!(div > 0.0 && div <= 1.0);
        // Perfect predictor: the expert itself.
        let div = mean_divergence(&env, states.view(), |x| {
            (env.restricted_policy_probs(x).unwrap(), 0.0)
        });
        assert_eq!(div, 0.0);
    }
}
