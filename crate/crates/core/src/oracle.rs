//! Constructive zero-loss encoder/decoder pair.
//!
//! For each action `a`, the set of plausible transitions
//! `{(x, g(x, a)) : x in X}` is a closed graph in the joint space, and under
//! action-injectivity the graphs are pairwise disjoint. Normalized distances
//! to these graphs give a continuous encoder that is exactly one-hot on the
//! graphs:
//!
//! ```text
//! h_a(z)    = dist(z, union of other graphs) / (dist(z, graph_a) + dist(z, union of other graphs))
//! q(a | z)  = h_a(z) / sum_a' h_a'(z)
//! ```
//!
//! Distances are estimated by a dense grid scan over graph points followed by
//! parabolic coordinate descent on the underlying map. Together with a decoder
//! that replays the ground-truth transition on real actions (and returns zero
//! on surplus latents), the pair drives both objective terms to zero, which is
//! what [`certify_zero_loss`] checks sample by sample.

use serde::{Deserialize, Serialize};

use crate::env::{sample_transitions, Environment};
use crate::error::OracleError;
use crate::objective::{loss_term_rows, ActionEncoder, LatentDecoder};

/// Default per-axis grid resolution for graph-point tables.
pub const DEFAULT_GRID_RESOLUTION: usize = 256;

/// Passes of parabolic coordinate descent after the grid scan.
pub const REFINE_PASSES: usize = 20;

/// Mean-reconstruction certification tolerance.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-8;

/// Mean-entropy certification tolerance (looser: Urysohn values near graph
/// boundaries are only approximately 0/1 under estimated distances).
pub const ENTROPY_TOLERANCE: f64 = 1e-4;

/// Grid gap below which two graphs are considered to intersect.
pub const DISJOINTNESS_TOLERANCE: f64 = 1e-9;

/// Dense tables of graph points `(x_j, g(x_j, a))` for every action, stored as
/// structure-of-arrays for fast scans. Queries are read-only and thread-safe.
pub struct GraphDistanceField {
    env: Environment,
    resolution: usize,
    spacing: f64,
    /// Grid states, flattened: `point_count × d`.
    grid_states: Vec<f64>,
    /// Per action: graph images, flattened `point_count × d'`.
    graph_points: Vec<Vec<f64>>,
    /// Per action: `|x_j|² + |g(x_j,a)|²` per point, for the scan inner loop.
    point_norms: Vec<Vec<f64>>,
    point_count: usize,
}

impl GraphDistanceField {
    pub fn build(env: &Environment, resolution: usize) -> Self {
        let d = env.state_dim;
        let axis: Vec<f64> = (0..resolution)
            .map(|i| i as f64 / (resolution - 1) as f64)
            .collect();
        let mut grid_states: Vec<f64> = Vec::new();
        let mut index = vec![0usize; d];
        loop {
            for &i in &index {
                grid_states.push(axis[i]);
            }
            // Odometer increment over the d-dimensional index.
            let mut dim = 0;
            loop {
                if dim == d {
                    break;
                }
                index[dim] += 1;
                if index[dim] < resolution {
                    break;
                }
                index[dim] = 0;
                dim += 1;
            }
            if dim == d {
                break;
            }
        }
        let point_count = grid_states.len() / d;
        let mut graph_points = Vec::with_capacity(env.action_count);
        let mut point_norms = Vec::with_capacity(env.action_count);
        for action in 0..env.action_count {
            let mut ys = Vec::with_capacity(point_count * env.next_dim);
            let mut norms = Vec::with_capacity(point_count);
            for j in 0..point_count {
                let x = &grid_states[j * d..(j + 1) * d];
                let y = env.transition(x, action);
                let norm =
                    x.iter().map(|v| v * v).sum::<f64>() + y.iter().map(|v| v * v).sum::<f64>();
                ys.extend_from_slice(&y);
                norms.push(norm);
            }
            graph_points.push(ys);
            point_norms.push(norms);
        }
        GraphDistanceField {
            env: env.clone(),
            resolution,
            spacing: 1.0 / (resolution - 1) as f64,
            grid_states,
            graph_points,
            point_norms,
            point_count,
        }
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Verify on the grid that the transition graphs are pairwise disjoint.
    pub fn validate_disjoint(&self) -> Result<(), OracleError> {
        let dp = self.env.next_dim;
        for a1 in 0..self.env.action_count {
            for a2 in (a1 + 1)..self.env.action_count {
                let ys1 = &self.graph_points[a1];
                let ys2 = &self.graph_points[a2];
                for j in 0..self.point_count {
                    let gap: f64 = (0..dp)
                        .map(|c| {
                            let diff = ys1[j * dp + c] - ys2[j * dp + c];
                            diff * diff
                        })
                        .sum::<f64>()
                        .sqrt();
                    if gap < DISJOINTNESS_TOLERANCE {
                        let d = self.env.state_dim;
                        return Err(OracleError::GraphsNotDisjoint {
                            a1,
                            a2,
                            state: self.grid_states[j * d..(j + 1) * d].to_vec(),
                            distance: gap,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Squared joint-space objective `|x − x0|² + |x' − g(x0, a)|²` at `x0`.
    fn objective(&self, action: usize, x: &[f64], x_next: &[f64], x0: &[f64]) -> f64 {
        let y0 = self.env.transition(x0, action);
        let sx: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
        let sy: f64 = x_next.iter().zip(&y0).map(|(a, b)| (a - b) * (a - b)).sum();
        sx + sy
    }

    /// Best grid point for the query, by full scan.
    fn scan(&self, action: usize, x: &[f64], x_next: &[f64]) -> usize {
        let d = self.env.state_dim;
        let dp = self.env.next_dim;
        let xs = &self.grid_states;
        let ys = &self.graph_points[action];
        let norms = &self.point_norms[action];
        let mut best_j = 0usize;
        let mut best = f64::INFINITY;
        if d == 2 && dp == 2 {
            // Hot path for the planar builtins.
            let (x0, x1) = (x[0], x[1]);
            let (y0, y1) = (x_next[0], x_next[1]);
            for j in 0..self.point_count {
                let dot = x0 * xs[2 * j] + x1 * xs[2 * j + 1] + y0 * ys[2 * j] + y1 * ys[2 * j + 1];
                let s = norms[j] - 2.0 * dot;
                if s < best {
                    best = s;
                    best_j = j;
                }
            }
        } else {
            for j in 0..self.point_count {
                let mut dot = 0.0;
                for c in 0..d {
                    dot += x[c] * xs[j * d + c];
                }
                for c in 0..dp {
                    dot += x_next[c] * ys[j * dp + c];
                }
                let s = norms[j] - 2.0 * dot;
                if s < best {
                    best = s;
                    best_j = j;
                }
            }
        }
        best_j
    }

    /// Approximate Euclidean distance from `(x, x')` to the graph of action
    /// `a`: grid scan, then parabolic coordinate descent around the best cell.
    pub fn graph_distance(&self, action: usize, x: &[f64], x_next: &[f64]) -> f64 {
        let d = self.env.state_dim;
        let best_j = self.scan(action, x, x_next);
        let mut x0 = self.grid_states[best_j * d..(best_j + 1) * d].to_vec();
        let mut value = self.objective(action, x, x_next, &x0);
        let mut window = self.spacing;
        for _ in 0..REFINE_PASSES {
            for c in 0..d {
                let center = x0[c];
                let eval = |t: f64| {
                    let mut probe = x0.clone();
                    probe[c] = (center + t).clamp(0.0, 1.0);
                    self.objective(action, x, x_next, &probe)
                };
                let f_minus = eval(-window);
                let f_plus = eval(window);
                let denom = f_minus - 2.0 * value + f_plus;
                let step = if denom > 0.0 {
                    (window * (f_minus - f_plus) / (2.0 * denom)).clamp(-window, window)
                } else if f_minus < f_plus {
                    -window
                } else {
                    window
                };
                let candidate = (center + step).clamp(0.0, 1.0);
                let mut probe = x0.clone();
                probe[c] = candidate;
                let f_candidate = self.objective(action, x, x_next, &probe);
                if f_candidate < value {
                    value = f_candidate;
                    x0[c] = candidate;
                }
            }
            window *= 0.5;
        }
        value.max(0.0).sqrt()
    }
}

/// Constructive encoder over a distance field; latents above the true action
/// count receive exactly zero mass.
pub struct OracleIdm {
    field: GraphDistanceField,
    k_hat: usize,
}

impl OracleIdm {
    /// Builds the encoder, validating `k_hat >= k` and graph disjointness.
    pub fn new(field: GraphDistanceField, k_hat: usize) -> Result<Self, OracleError> {
        let k = field.env.action_count;
        if k_hat < k {
            return Err(OracleError::LatentSpaceTooSmall { k_hat, k });
        }
        field.validate_disjoint()?;
        Ok(OracleIdm { field, k_hat })
    }

    pub fn field(&self) -> &GraphDistanceField {
        &self.field
    }

    /// The normalized Urysohn construction over graph distances.
    pub fn encode(&self, x: &[f64], x_next: &[f64]) -> Result<Vec<f64>, OracleError> {
        let k = self.field.env.action_count;
        let mut probs = vec![0.0; self.k_hat];
        if k == 1 {
            probs[0] = 1.0;
            return Ok(probs);
        }
        let dists: Vec<f64> = (0..k)
            .map(|a| self.field.graph_distance(a, x, x_next))
            .collect();
        let mut total = 0.0;
        let mut h = vec![0.0; k];
        for a in 0..k {
            let other = dists
                .iter()
                .enumerate()
                .filter(|&(a2, _)| a2 != a)
                .map(|(_, &d)| d)
                .fold(f64::INFINITY, f64::min);
            let denom = dists[a] + other;
            if denom > 0.0 {
                h[a] = other / denom;
            }
            total += h[a];
        }
        if total <= 0.0 {
            let mut query = x.to_vec();
            query.extend_from_slice(x_next);
            return Err(OracleError::DegenerateField { query });
        }
        for a in 0..k {
            probs[a] = h[a] / total;
        }
        Ok(probs)
    }
}

impl ActionEncoder for OracleIdm {
    fn latent_count(&self) -> usize {
        self.k_hat
    }

    fn latent_probs(&self, x: &[f64], x_next: &[f64]) -> Vec<f64> {
        self.encode(x, x_next).expect("degenerate distance field")
    }
}

/// Constructive decoder: replay the ground-truth transition for real actions,
/// output the zero vector for surplus latents.
pub struct OracleFdm {
    env: Environment,
    k_hat: usize,
}

impl OracleFdm {
    pub fn new(env: &Environment, k_hat: usize) -> Result<Self, OracleError> {
        if k_hat < env.action_count {
            return Err(OracleError::LatentSpaceTooSmall {
                k_hat,
                k: env.action_count,
            });
        }
        Ok(OracleFdm {
            env: env.clone(),
            k_hat,
        })
    }
}

impl LatentDecoder for OracleFdm {
    fn latent_count(&self) -> usize {
        self.k_hat
    }

    fn predict(&self, x: &[f64], latent: usize) -> Vec<f64> {
        if latent < self.env.action_count {
            self.env.transition(x, latent)
        } else {
            vec![0.0; self.env.next_dim]
        }
    }
}

/// One offending sample in a certification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstSample {
    pub index: usize,
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reconstruction: f64,
    pub entropy: f64,
}

/// Certification outcome: per-term means and worst cases over the sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub env: String,
    pub k_hat: usize,
    pub n: usize,
    pub seed: u64,
    pub grid_resolution: usize,
    pub reconstruction_mean: f64,
    pub reconstruction_worst: f64,
    pub entropy_mean: f64,
    pub entropy_worst: f64,
    pub reconstruction_tolerance: f64,
    pub entropy_tolerance: f64,
    pub passed: bool,
    pub worst_samples: Vec<WorstSample>,
}

/// Evaluate the objective on the constructive pair over `n` fresh samples and
/// check both terms against the certification tolerances.
pub fn certify_zero_loss(
    env: &Environment,
    k_hat: usize,
    n: usize,
    seed: u64,
    grid_resolution: usize,
) -> Result<CertificationReport, OracleError> {
    let field = GraphDistanceField::build(env, grid_resolution);
    let idm = OracleIdm::new(field, k_hat)?;
    let fdm = OracleFdm::new(env, k_hat)?;
    let batch = sample_transitions(env, n, seed, false).expect("sampling valid env");
    let rows = loss_term_rows(&idm, &fdm, &batch).expect("dimensions consistent");

    let n_f = rows.len() as f64;
    let mut recon_mean = 0.0;
    let mut ent_mean = 0.0;
    let mut recon_worst = 0.0_f64;
    let mut ent_worst = 0.0_f64;
    for row in &rows {
        recon_mean += row.reconstruction / n_f;
        ent_mean += row.entropy / n_f;
        recon_worst = recon_worst.max(row.reconstruction);
        ent_worst = ent_worst.max(row.entropy);
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&i, &j| {
        rows[j]
            .reconstruction
            .partial_cmp(&rows[i].reconstruction)
            .expect("finite")
    });
    let worst_samples = order
        .into_iter()
        .take(3)
        .map(|i| WorstSample {
            index: i,
            state: batch.states.row(i).to_vec(),
            next_state: batch.next_states.row(i).to_vec(),
            reconstruction: rows[i].reconstruction,
            entropy: rows[i].entropy,
        })
        .collect();

    let passed = recon_mean <= RECONSTRUCTION_TOLERANCE && ent_mean <= ENTROPY_TOLERANCE;
    let report = CertificationReport {
        env: env.name.clone(),
        k_hat,
        n,
        seed,
        grid_resolution,
        reconstruction_mean: recon_mean,
        reconstruction_worst: recon_worst,
        entropy_mean: ent_mean,
        entropy_worst: ent_worst,
        reconstruction_tolerance: RECONSTRUCTION_TOLERANCE,
        entropy_tolerance: ENTROPY_TOLERANCE,
        passed,
        worst_samples,
    };
    if passed {
        Ok(report)
    } else {
        Err(OracleError::CertificationFailed(Box::new(report)))
    }
}
