//! Finite checks of the four regularity assumptions.
//!
//! Continuity cannot be decided pointwise, so the first check probes the
//! Lipschitz ratio of the transition map on a grid and reports a surrogate
//! pass. Injectivity is checked as a minimum action-image gap over the grid;
//! the topological conditions on supports are decided exactly on the box
//! representation.

use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::EnvError;

/// Minimum action-image gap below which the injectivity check fails.
pub const INJECTIVITY_TOLERANCE: f64 = 1e-9;

/// Lipschitz-ratio threshold for the continuity surrogate.
pub const LIPSCHITZ_THRESHOLD: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "witness", rename_all = "kebab-case")]
pub enum Witness {
    State { x: Vec<f64> },
    Action { action: usize },
    ActionPair { a1: usize, a2: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// Passed a finite surrogate of a property that cannot be checked exactly.
    PassSurrogate,
    Fail { witness: Witness },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        !matches!(self, Verdict::Fail { .. })
    }
}

/// Verdicts for the four assumptions plus the observed check statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Transition map continuous in the state (Lipschitz-ratio surrogate).
    pub continuity: Verdict,
    /// Distinct actions give distinct next states at every probed state.
    pub injectivity: Verdict,
    /// Each per-action support is connected.
    pub connected_supports: Verdict,
    /// Every pair of per-action supports intersects.
    pub overlapping_supports: Verdict,
    pub grid_resolution: usize,
    pub max_lipschitz_ratio: f64,
    pub min_action_gap: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.continuity.passed()
            && self.injectivity.passed()
            && self.connected_supports.passed()
            && self.overlapping_supports.passed()
    }

    pub fn verdicts(&self) -> [&Verdict; 4] {
        [
            &self.continuity,
            &self.injectivity,
            &self.connected_supports,
            &self.overlapping_supports,
        ]
    }
}

/// Run all four assumption checks on a `grid_resolution`-per-axis state grid.
pub fn validate_assumptions(
    env: &Environment,
    grid_resolution: usize,
) -> Result<AssumptionReport, EnvError> {
    if grid_resolution < 8 {
        return Err(EnvError::GridTooCoarse(grid_resolution));
    }
    let grid = state_grid(env.state_dim, grid_resolution);
    let spacing = 1.0 / (grid_resolution - 1) as f64;

    // Continuity surrogate: ratio of image displacement to state displacement
    // along every grid edge, for every action.
    let mut max_ratio: f64 = 0.0;
    let mut continuity = Verdict::PassSurrogate;
    'outer: for x in &grid {
        for dim in 0..env.state_dim {
            if x[dim] + spacing > 1.0 + 1e-12 {
                continue;
            }
            let mut x2 = x.clone();
            x2[dim] += spacing;
            for action in 0..env.action_count {
                let y1 = env.transition(x, action);
                let y2 = env.transition(&x2, action);
                let ratio = euclidean(&y1, &y2) / spacing;
                max_ratio = max_ratio.max(ratio);
                if ratio > LIPSCHITZ_THRESHOLD {
                    continuity = Verdict::Fail {
                        witness: Witness::State { x: x.clone() },
                    };
                    break 'outer;
                }
            }
        }
    }

    // Injectivity: minimum pairwise image gap over the grid.
    let mut min_gap = f64::INFINITY;
    let mut injectivity = Verdict::Pass;
    if env.action_count == 1 {
        min_gap = f64::INFINITY;
    } else {
        'inj: for x in &grid {
            let images: Vec<Vec<f64>> =
                (0..env.action_count).map(|a| env.transition(x, a)).collect();
            for a1 in 0..env.action_count {
                for a2 in (a1 + 1)..env.action_count {
                    let gap = euclidean(&images[a1], &images[a2]);
                    min_gap = min_gap.min(gap);
                    if gap < INJECTIVITY_TOLERANCE {
                        injectivity = Verdict::Fail {
                            witness: Witness::State { x: x.clone() },
                        };
                        break 'inj;
                    }
                }
            }
        }
    }

    // Support connectivity, decided exactly on the box representation.
    let mut connected_supports = Verdict::Pass;
    for action in 0..env.action_count {
        if !env.support.action_support_connected(action) {
            connected_supports = Verdict::Fail {
                witness: Witness::Action { action },
            };
            break;
        }
    }

    // Pairwise support intersection, decided exactly.
    let mut overlapping_supports = Verdict::Pass;
    'pairs: for a1 in 0..env.action_count {
        for a2 in (a1 + 1)..env.action_count {
            if !env.support.supports_intersect(a1, a2) {
                overlapping_supports = Verdict::Fail {
                    witness: Witness::ActionPair { a1, a2 },
                };
                break 'pairs;
            }
        }
    }

    Ok(AssumptionReport {
        continuity,
        injectivity,
        connected_supports,
        overlapping_supports,
        grid_resolution,
        max_lipschitz_ratio: max_ratio,
        min_action_gap: min_gap,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// All grid points of `[0,1]^dim` at `resolution` points per axis.
fn state_grid(dim: usize, resolution: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..resolution)
        .map(|i| i as f64 / (resolution - 1) as f64)
        .collect();
    let mut points = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(points.len() * resolution);
        for p in &points {
            for &v in &axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}
