//! Ground-truth policies: conditional action mass functions over states.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::BoxRegion;

/// Policy kinds. `SmoothSoftmax` carries its realized linear field so that a
/// serialized spec reproduces the policy bit-exactly; `DeterministicRegion`
/// assigns full mass to one action per region (first matching region wins).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    Uniform,
    SmoothSoftmax {
        temperature: f64,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    },
    DeterministicRegion {
        regions: Vec<(BoxRegion, usize)>,
    },
}

impl PolicySpec {
    /// Smooth softmax over seeded linear logit fields. Strictly positive mass
    /// on every action at every state.
    pub fn smooth_softmax_seeded(action_count: usize, state_dim: usize, temperature: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..action_count)
            .map(|_| (0..state_dim).map(|_| rng.gen_range(-0.75..0.75)).collect())
            .collect();
        let biases = (0..action_count).map(|_| rng.gen_range(-0.75..0.75)).collect();
        PolicySpec::SmoothSoftmax {
            temperature,
            weights,
            biases,
        }
    }

    /// Unrestricted action probabilities at `x`.
    pub fn probs(&self, x: &[f64], action_count: usize) -> Vec<f64> {
        match self {
            PolicySpec::Uniform => vec![1.0 / action_count as f64; action_count],
            PolicySpec::SmoothSoftmax {
                temperature,
                weights,
                biases,
            } => {
                let logits: Vec<f64> = weights
                    .iter()
                    .zip(biases)
                    .map(|(w, b)| (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b) / temperature)
                    .collect();
                crate::categorical::softmax(&logits)
            }
            PolicySpec::DeterministicRegion { regions } => {
                let mut probs = vec![0.0; action_count];
                let action = regions
                    .iter()
                    .find(|(region, _)| region.contains(x))
                    .map(|(_, action)| *action)
                    .unwrap_or(0);
                probs[action] = 1.0;
                probs
            }
        }
    }
}
