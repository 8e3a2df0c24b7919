//! Categorical-distribution utilities: entropy, softmax, and the relaxed
//! (Gumbel-softmax) reparameterized sample.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::NumError;

/// Tolerance for "sums to one" checks on simplex vectors.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Shannon entropy in nats, with `0·log 0 := 0`.
///
/// Rejects vectors that are not on the probability simplex (negative entries
/// or mass not summing to one within [`SIMPLEX_TOLERANCE`]).
pub fn categorical_entropy(probs: &[f64]) -> Result<f64, NumError> {
    let mut sum = 0.0;
    for &p in probs {
        if !(p >= 0.0) {
            return Err(NumError::NotASimplex {
                reason: format!("negative or NaN entry {p}"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(NumError::NotASimplex {
            reason: format!("mass sums to {sum}"),
        });
    }
    Ok(entropy_unchecked(probs))
}

/// Entropy without the simplex check, for callers that already hold a softmax output.
pub fn entropy_unchecked(probs: &[f64]) -> f64 {
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; exact ties break toward the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One Gumbel-softmax sample: `softmax((logits + gumbel_noise) / temperature)`.
///
/// Differentiable in the logits; as the temperature goes to zero the sample
/// concentrates on the argmax. The output lies in the open simplex.
pub fn relaxed_categorical_sample(
    logits: &[f64],
    temperature: f64,
    seed: u64,
) -> Result<Vec<f64>, NumError> {
    if !(temperature > 0.0) {
        return Err(NumError::NonPositiveTemperature(temperature));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(relaxed_sample_with_rng(logits, temperature, &mut rng))
}

/// As [`relaxed_categorical_sample`] but drawing noise from a caller-owned stream.
pub fn relaxed_sample_with_rng<R: Rng>(logits: &[f64], temperature: f64, rng: &mut R) -> Vec<f64> {
    let perturbed: Vec<f64> = logits
        .iter()
        .map(|&z| (z + sample_gumbel(rng)) / temperature)
        .collect();
    softmax(&perturbed)
}

fn sample_gumbel<R: Rng>(rng: &mut R) -> f64 {
    // -ln(-ln(U)) with U in the open interval to keep both logs finite.
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_of_point_mass_is_zero() {
        assert_eq!(categorical_entropy(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_uniform_is_log_k() {
        let h = categorical_entropy(&[0.25; 4]).unwrap();
        assert_abs_diff_eq!(h, 4.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_of_half_half_is_log_two() {
        let h = categorical_entropy(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(h, 2.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_rejects_non_simplex() {
        assert!(categorical_entropy(&[0.7, 0.7]).is_err());
        assert!(categorical_entropy(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn relaxed_sample_rejects_nonpositive_temperature() {
        assert!(relaxed_categorical_sample(&[0.0, 0.0], 0.0, 0).is_err());
        assert!(relaxed_categorical_sample(&[0.0, 0.0], -1.0, 0).is_err());
    }

    #[test]
    fn relaxed_sample_sums_to_one() {
        for seed in 0..100 {
            let y = relaxed_categorical_sample(&[1.0, -2.0, 0.5], 0.7, seed).unwrap();
            let total: f64 = y.iter().sum();
            assert!((total - 1.0).abs() < SIMPLEX_TOLERANCE);
        }
    }

    #[test]
    fn low_temperature_concentrates_on_dominant_logit() {
        // Monte-Carlo check: with a 10-nat gap and temperature 0.1, the mass on
        // the first coordinate exceeds 0.99 in at least 99% of draws.
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|&seed| {
                let y = relaxed_categorical_sample(&[10.0, 0.0, 0.0], 0.1, seed).unwrap();
                y[0] > 0.99
            })
            .count();
        assert!(
            hits as f64 >= 0.99 * draws as f64,
            "only {hits}/{draws} draws concentrated"
        );
    }

    #[test]
    fn equal_logits_average_to_uniform() {
        let draws = 10_000;
        let mut mean = [0.0; 3];
        for seed in 0..draws {
            let y = relaxed_categorical_sample(&[0.0, 0.0, 0.0], 1.0, seed).unwrap();
            for (m, v) in mean.iter_mut().zip(&y) {
                *m += v / draws as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.02, "mean coordinate {m}");
        }
    }

    #[test]
    fn argmax_ties_break_to_smallest_index() {
        assert_eq!(argmax(&[0.5, 0.5, 0.0]), 0);
        assert_eq!(argmax(&[0.1, 0.6, 0.6]), 1);
    }
}
