//! Synthetic ground-truth environments.
//!
//! An [`Environment`] bundles a state density (uniform over a union of boxes),
//! a ground-truth policy, a deterministic transition map, per-action support
//! regions, and a declaration of which regularity assumptions the construction
//! intends to satisfy. Environments are immutable after construction and safe
//! to share across threads; all sampling takes an explicit seed.

pub mod builtins;
pub mod geometry;
pub mod policy;
pub mod transition;
pub mod validate;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::EnvError;
pub use builtins::{builtin_names, make_builtin_env};
pub use geometry::{BoxRegion, SupportSpec};
pub use policy::PolicySpec;
pub use transition::{AffineMap, TransitionSpec};
pub use validate::{validate_assumptions, AssumptionReport, Verdict, Witness};

/// Which of the four regularity assumptions the environment is designed to
/// satisfy: transition continuity, action-injectivity of the transition map,
/// connectedness of each per-action support, and pairwise support overlap.
pub type AssumptionFlags = [bool; 4];

/// A fully specified synthetic environment. Actions are `0..action_count`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub state_dim: usize,
    pub next_dim: usize,
    pub action_count: usize,
    pub policy: PolicySpec,
    pub transition: TransitionSpec,
    pub support: SupportSpec,
    pub assumption_flags: AssumptionFlags,
}

impl Environment {
    /// Deterministic transition: the next state for `(x, action)`.
    pub fn transition(&self, x: &[f64], action: usize) -> Vec<f64> {
        self.transition.apply(x, action)
    }

    /// Ground-truth policy mass function at `x`, before support restriction.
    pub fn policy_probs(&self, x: &[f64]) -> Vec<f64> {
        self.policy.probs(x, self.action_count)
    }

    /// Policy restricted to actions whose support contains `x`, renormalized.
    /// `None` when no supported action carries mass at `x`.
    pub fn restricted_policy_probs(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut probs = self.policy_probs(x);
        for (a, p) in probs.iter_mut().enumerate() {
            if !self.support.contains(a, x) {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return None;
        }
        for p in &mut probs {
            *p /= total;
        }
        Some(probs)
    }

    /// Structural consistency checks run at construction/deserialization time.
    pub fn validate_spec(&self) -> Result<(), EnvError> {
        let fail = |reason: String| EnvError::InvalidSpec {
            name: self.name.clone(),
            reason,
        };
        if self.state_dim == 0 || self.next_dim == 0 || self.action_count == 0 {
            return Err(fail("dimensions and action count must be positive".into()));
        }
        if self.transition.action_count() != self.action_count {
            return Err(fail(format!(
                "transition map covers {} actions, expected {}",
                self.transition.action_count(),
                self.action_count
            )));
        }
        if self.support.action_count() != self.action_count {
            return Err(fail(format!(
                "support spec covers {} actions, expected {}",
                self.support.action_count(),
                self.action_count
            )));
        }
        for (a, boxes) in self.support.regions.iter().enumerate() {
            if boxes.is_empty() {
                return Err(fail(format!("action {a} has an empty support region list")));
            }
            for b in boxes {
                if b.dim() != self.state_dim {
                    return Err(fail(format!(
                        "action {a} has a support box of dimension {}, expected {}",
                        b.dim(),
                        self.state_dim
                    )));
                }
                if !b.is_nonempty() {
                    return Err(fail(format!("action {a} has an empty support box")));
                }
                if !b.contained_in_unit_box() {
                    return Err(fail(format!("action {a} has a support box outside the unit box")));
                }
            }
        }
        if let PolicySpec::DeterministicRegion { regions } = &self.policy {
            for (_, action) in regions {
                if *action >= self.action_count {
                    return Err(fail(format!("policy region targets unknown action {action}")));
                }
            }
        }
        Ok(())
    }

    /// Draw one state uniformly from the union of the per-action supports by
    /// rejection from the union's bounding box.
    fn sample_state<R: Rng>(&self, rng: &mut R, bounds: &BoxRegion) -> Result<Vec<f64>, EnvError> {
        const MAX_TRIES: usize = 100_000;
        let mut x = vec![0.0; self.state_dim];
        for _ in 0..MAX_TRIES {
            for (v, (&lo, &hi)) in x.iter_mut().zip(bounds.lo.iter().zip(&bounds.hi)) {
                *v = rng.gen_range(lo..=hi);
            }
            if self.support.actions_at(&x).is_empty() {
                continue;
            }
            return Ok(x);
        }
        Err(EnvError::StateOutsideSupport { state: x })
    }
}

/// A seeded sample of `(x, a, x')` transitions. The action column is present
/// only in the labeled view; `x'` rows are exact images of the transition map.
#[derive(Debug, Clone)]
pub struct TransitionSet {
    pub states: Array2<f64>,
    pub next_states: Array2<f64>,
    pub actions: Option<Vec<u32>>,
    pub seed: u64,
}

impl TransitionSet {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn next_dim(&self) -> usize {
        self.next_states.ncols()
    }

    pub fn labeled(&self) -> bool {
        self.actions.is_some()
    }

    /// The action-free view: same states, labels dropped.
    pub fn action_free(&self) -> TransitionSet {
        TransitionSet {
            states: self.states.clone(),
            next_states: self.next_states.clone(),
            actions: None,
            seed: self.seed,
        }
    }
}

/// Sample `n` transitions: `x` uniform over the union of supports, `a` from the
/// support-restricted policy, `x' = g(x, a)` exactly.
pub fn sample_transitions(
    env: &Environment,
    n: usize,
    seed: u64,
    labeled: bool,
) -> Result<TransitionSet, EnvError> {
    if n == 0 {
        return Err(EnvError::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = env.support.bounding_box();
    let mut states = Array2::zeros((n, env.state_dim));
    let mut next_states = Array2::zeros((n, env.next_dim));
    let mut actions = Vec::with_capacity(n);
    for i in 0..n {
        let x = env.sample_state(&mut rng, &bounds)?;
        let probs = env
            .restricted_policy_probs(&x)
            .ok_or_else(|| EnvError::StateOutsideSupport { state: x.clone() })?;
        let action = draw_categorical(&probs, &mut rng);
        let x_next = env.transition(&x, action);
        debug_assert!(
            x_next.iter().all(|&v| (0.0..=1.0).contains(&v)),
            "transition left the unit box: {x_next:?}"
        );
        for (j, &v) in x.iter().enumerate() {
            states[[i, j]] = v;
        }
        for (j, &v) in x_next.iter().enumerate() {
            next_states[[i, j]] = v;
        }
        actions.push(action as u32);
    }
    Ok(TransitionSet {
        states,
        next_states,
        actions: labeled.then_some(actions),
        seed,
    })
}

/// Sample `n` states from the uniform density over the union of supports,
/// without actions (the marginal state distribution).
pub fn sample_states(env: &Environment, n: usize, seed: u64) -> Result<Array2<f64>, EnvError> {
    if n == 0 {
        return Err(EnvError::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = env.support.bounding_box();
    let mut states = Array2::zeros((n, env.state_dim));
    for i in 0..n {
        let x = env.sample_state(&mut rng, &bounds)?;
        for (j, &v) in x.iter().enumerate() {
            states[[i, j]] = v;
        }
    }
    Ok(states)
}

fn draw_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
