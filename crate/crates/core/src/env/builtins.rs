//! Registry of builtin environments, selectable by name.
//!
//! - `quadrant4` — four contractive translations, uniform policy, full
//!   supports; every assumption holds.
//! - `affine8` — eight contractive rotation+offset maps with offsets at least
//!   0.1 apart in sup-norm, smooth-softmax policy; every assumption holds.
//! - `det-policy` — quadrant4 transitions driven by a deterministic
//!   region-indexed policy (the degenerate-decoder demonstration).
//! - `split-support` — quadrant4 transitions with a two-piece support for
//!   action 0, violating support connectedness.
//! - `disjoint-support` — quadrant4 transitions with disjoint supports for
//!   actions 0 and 1, violating pairwise support overlap.

use super::geometry::{BoxRegion, SupportSpec};
use super::policy::PolicySpec;
use super::transition::{AffineMap, TransitionSpec};
use super::Environment;
use crate::error::EnvError;

type EnvBuilder = fn(u64) -> Environment;

static BUILTINS: &[(&str, EnvBuilder)] = &[
    ("quadrant4", quadrant4),
    ("affine8", affine8),
    ("det-policy", det_policy),
    ("split-support", split_support),
    ("disjoint-support", disjoint_support),
];

/// Names accepted by [`make_builtin_env`].
pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(name, _)| *name).collect()
}

/// Construct a builtin environment by name.
pub fn make_builtin_env(name: &str, seed: u64) -> Result<Environment, EnvError> {
    let env = BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, builder)| builder(seed))
        .ok_or_else(|| EnvError::UnknownBuiltin {
            name: name.to_string(),
            valid: builtin_names(),
        })?;
    env.validate_spec().expect("builtin spec must be consistent");
    Ok(env)
}

fn quadrant_offsets() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0],
        vec![0.5, 0.0],
        vec![0.0, 0.5],
        vec![0.5, 0.5],
    ]
}

fn quadrant_transition() -> TransitionSpec {
    TransitionSpec::Affine {
        maps: quadrant_offsets()
            .into_iter()
            .map(|offset| AffineMap::scaling(2, 0.5, offset))
            .collect(),
    }
}

fn quadrant4(_seed: u64) -> Environment {
    Environment {
        name: "quadrant4".into(),
        state_dim: 2,
        next_dim: 2,
        action_count: 4,
        policy: PolicySpec::Uniform,
        transition: quadrant_transition(),
        support: SupportSpec::full(2, 4),
        assumption_flags: [true, true, true, true],
    }
}

fn affine8(seed: u64) -> Environment {
    // Offsets trace a ring; rotation angles grow with the ring position so
    // that for every action pair the state solving g(x,a1) = g(x,a2) lies
    // outside the unit box, keeping the action images pairwise distinct.
    let offsets = [
        [0.15, 0.05],
        [0.375, 0.05],
        [0.6, 0.05],
        [0.6, 0.25],
        [0.6, 0.45],
        [0.375, 0.45],
        [0.15, 0.45],
        [0.15, 0.25],
    ];
    let step = 2.5_f64.to_radians();
    let maps = offsets
        .iter()
        .enumerate()
        .map(|(a, offset)| AffineMap::scaled_rotation(0.4, a as f64 * step, offset.to_vec()))
        .collect();
    Environment {
        name: "affine8".into(),
        state_dim: 2,
        next_dim: 2,
        action_count: 8,
        policy: PolicySpec::smooth_softmax_seeded(8, 2, 1.0, seed.wrapping_add(0x5EED)),
        transition: TransitionSpec::Affine { maps },
        support: SupportSpec::full(2, 8),
        assumption_flags: [true, true, true, true],
    }
}

fn quadrant_boxes() -> Vec<BoxRegion> {
    vec![
        BoxRegion::new(vec![0.0, 0.0], vec![0.5, 0.5]),
        BoxRegion::new(vec![0.5, 0.0], vec![1.0, 0.5]),
        BoxRegion::new(vec![0.0, 0.5], vec![0.5, 1.0]),
        BoxRegion::new(vec![0.5, 0.5], vec![1.0, 1.0]),
    ]
}

fn det_policy(_seed: u64) -> Environment {
    let regions = quadrant_boxes()
        .into_iter()
        .enumerate()
        .map(|(action, region)| (region, action))
        .collect();
    // Per-action supports are the policy regions themselves: the closed
    // quadrants, which are connected and meet along shared edges.
    let support = SupportSpec {
        regions: quadrant_boxes().into_iter().map(|b| vec![b]).collect(),
    };
    Environment {
        name: "det-policy".into(),
        state_dim: 2,
        next_dim: 2,
        action_count: 4,
        policy: PolicySpec::DeterministicRegion { regions },
        transition: quadrant_transition(),
        support,
        assumption_flags: [true, true, true, true],
    }
}

fn split_support(_seed: u64) -> Environment {
    let mut support = SupportSpec::full(2, 4);
    support.regions[0] = vec![
        BoxRegion::new(vec![0.0, 0.0], vec![0.3, 1.0]),
        BoxRegion::new(vec![0.7, 0.0], vec![1.0, 1.0]),
    ];
    Environment {
        name: "split-support".into(),
        state_dim: 2,
        next_dim: 2,
        action_count: 4,
        policy: PolicySpec::Uniform,
        transition: quadrant_transition(),
        support,
        assumption_flags: [true, true, false, true],
    }
}

fn disjoint_support(_seed: u64) -> Environment {
    let mut support = SupportSpec::full(2, 4);
    support.regions[0] = vec![BoxRegion::new(vec![0.0, 0.0], vec![0.45, 1.0])];
    support.regions[1] = vec![BoxRegion::new(vec![0.55, 0.0], vec![1.0, 1.0])];
    Environment {
        name: "disjoint-support".into(),
        state_dim: 2,
        next_dim: 2,
        action_count: 4,
        policy: PolicySpec::Uniform,
        transition: quadrant_transition(),
        support,
        assumption_flags: [true, true, true, false],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_valid_names() {
        let err = make_builtin_env("nope", 0).unwrap_err();
        let msg = err.to_string();
        for name in builtin_names() {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn all_builtins_validate_and_stay_in_unit_box() {
        for name in builtin_names() {
            let env = make_builtin_env(name, 1).unwrap();
            env.validate_spec().unwrap();
            // Transition images on a coarse grid stay inside the unit box.
            for i in 0..=10 {
                for j in 0..=10 {
                    let x = [i as f64 / 10.0, j as f64 / 10.0];
                    for a in 0..env.action_count {
                        let y = env.transition(&x, a);
                        assert!(
                            y.iter().all(|&v| (0.0..=1.0).contains(&v)),
                            "{name}: g({x:?}, {a}) = {y:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn affine8_offsets_are_separated_in_sup_norm() {
        let env = make_builtin_env("affine8", 0).unwrap();
        let TransitionSpec::Affine { maps } = &env.transition;
        for i in 0..maps.len() {
            for j in (i + 1)..maps.len() {
                let gap = maps[i]
                    .offset
                    .iter()
                    .zip(&maps[j].offset)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                assert!(gap >= 0.1, "offsets {i} and {j} are {gap} apart");
            }
        }
    }

    #[test]
    fn builtin_assumption_flags_match_validation() {
        for name in builtin_names() {
            let env = make_builtin_env(name, 2).unwrap();
            let report = crate::env::validate_assumptions(&env, 32).unwrap();
            let verdicts = report.verdicts();
            for (i, verdict) in verdicts.iter().enumerate() {
                assert_eq!(
                    verdict.passed(),
                    env.assumption_flags[i],
                    "{name}: assumption {i} flag disagrees with check"
                );
            }
        }
    }
}
