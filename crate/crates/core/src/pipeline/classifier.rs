//! Shared cross-entropy classifier trainer, used for the latent policy and
//! the behavior-cloning baseline.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::net::{adam_step, Activation, AdamState, Network};
use crate::objective::{softmax_rows, Schedule};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub lr: Schedule,
    pub steps: usize,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            lr: Schedule {
                initial: 3e-3,
                end: 3e-4,
            },
            steps: 4000,
            batch: 128,
            hidden: vec![32, 32],
            seed: 0,
        }
    }
}

/// Fit a softmax classifier from states to class labels by cross-entropy.
pub fn train_classifier(
    states: ArrayView2<f64>,
    labels: &[u32],
    class_count: usize,
    cfg: &ClassifierConfig,
) -> Result<Network, TrainError> {
    if states.nrows() == 0 || states.nrows() != labels.len() {
        return Err(TrainError::InvalidConfig(format!(
            "classifier needs matching nonempty states/labels, got {} and {}",
            states.nrows(),
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_seed: u64 = rng.gen();
    let mut net = Network::mlp(
        states.ncols(),
        &cfg.hidden,
        class_count,
        Activation::Identity,
        init_seed,
    )?;
    let mut adam = AdamState::new(&net);
    let n = states.nrows();
    for step in 0..cfg.steps {
        let (batch_states, batch_labels): (Array2<f64>, Vec<u32>) = if n <= cfg.batch {
            (states.to_owned(), labels.to_vec())
        } else {
            let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.gen_range(0..n)).collect();
            (
                states.select(Axis(0), &idx),
                idx.iter().map(|&i| labels[i]).collect(),
            )
        };
        let rows = batch_states.nrows();
        let trace = net.forward_batch(batch_states.view())?;
        let probs = softmax_rows(trace.output());
        // dL/dz for mean cross-entropy: (softmax − one-hot) / n.
        let mut dlogits = probs;
        for (mut row, &label) in dlogits.rows_mut().into_iter().zip(&batch_labels) {
            row[label as usize] -= 1.0;
            row.mapv_inplace(|v| v / rows as f64);
        }
        let (grad, _) = trace.backward(dlogits.view())?;
        let lr = cfg.lr.at(step, cfg.steps);
        adam_step(&mut net, &grad, &mut adam, lr).map_err(TrainError::Num)?;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorical::{argmax, softmax};

    #[test]
    fn classifier_separates_a_linear_problem() {
        // Two clusters on the line, labels by sign.
        let n = 200;
        let states = Array2::from_shape_fn((n, 1), |(i, _)| if i % 2 == 0 { 0.2 } else { 0.8 });
        let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let cfg = ClassifierConfig {
            steps: 800,
            hidden: vec![8],
            ..ClassifierConfig::default()
        };
        let net = train_classifier(states.view(), &labels, 2, &cfg).unwrap();
        for (x, want) in [(0.2, 0), (0.8, 1)] {
            let logits = net.forward(ndarray::arr1(&[x]).view()).unwrap();
            let probs = softmax(logits.as_slice().unwrap());
            assert_eq!(argmax(&probs), want, "x = {x}, probs {probs:?}");
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let states = Array2::<f64>::zeros((0, 2));
        assert!(train_classifier(states.view(), &[], 2, &ClassifierConfig::default()).is_err());
    }
}
