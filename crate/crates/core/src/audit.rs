//! Entanglement-map estimation and desiderata scoring.
//!
//! For pairs `(x, a)` drawn from the joint state/action distribution, the
//! entanglement map is the encoder's latent distribution at the exact
//! transition: `v(· | x, a) = encode(x, g(x, a))`. The three scores ask, in
//! order: are the rows deterministic (mean entropy), does the latent depend on
//! the action only (argmax consistency per action), and do distinct actions
//! get distinct latents (modal-latent injectivity)?
//!
//! Scores are invariant under relabeling the latent space, which is all the
//! desiderata ask of an encoder.

use serde::{Deserialize, Serialize};

use crate::categorical::{argmax, entropy_unchecked};
use crate::env::{sample_transitions, Environment};
use crate::error::{AuditError, EnvError};
use crate::objective::ActionEncoder;

/// One evaluation row: a supported `(x, a)` pair and the encoder's latent
/// distribution at the corresponding exact transition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub state: Vec<f64>,
    pub action: usize,
    pub latent_probs: Vec<f64>,
}

/// Empirical estimate of the entanglement map over an evaluation sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntanglementTable {
    pub rows: Vec<TableRow>,
    pub action_count: usize,
    pub latent_count: usize,
    pub seed: u64,
}

impl EntanglementTable {
    /// Rows grouped by true action.
    pub fn rows_by_action(&self) -> Vec<Vec<&TableRow>> {
        let mut groups = vec![Vec::new(); self.action_count];
        for row in &self.rows {
            groups[row.action].push(row);
        }
        groups
    }
}

/// Sample `(x, a)` pairs, compute the exact transition, and record the
/// encoder's latent distribution for each pair.
pub fn build_table(
    env: &Environment,
    encoder: &dyn ActionEncoder,
    n: usize,
    seed: u64,
) -> Result<EntanglementTable, EnvError> {
    let sample = sample_transitions(env, n, seed, true)?;
    let actions = sample.actions.as_ref().expect("labeled sample");
    let rows = (0..sample.len())
        .map(|i| {
            let state = sample.states.row(i).to_vec();
            let next = sample.next_states.row(i);
            let latent_probs = encoder.latent_probs(&state, next.as_slice().expect("contiguous"));
            TableRow {
                state,
                action: actions[i] as usize,
                latent_probs,
            }
        })
        .collect();
    Ok(EntanglementTable {
        rows,
        action_count: env.action_count,
        latent_count: encoder.latent_count(),
        seed,
    })
}

/// Determinism score: mean entropy of the table rows, in nats. Zero iff every
/// row is a point mass.
pub fn score_determinism(table: &EntanglementTable) -> Result<f64, AuditError> {
    if table.rows.is_empty() {
        return Err(AuditError::EmptyTable);
    }
    Ok(table
        .rows
        .iter()
        .map(|row| entropy_unchecked(&row.latent_probs))
        .sum::<f64>()
        / table.rows.len() as f64)
}

/// Per-action argmax consistency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionConsistency {
    pub action: usize,
    pub rows: usize,
    /// Most frequent argmax latent for this action (ties toward smaller index).
    pub modal_latent: usize,
    /// Fraction of the action's rows whose argmax equals the modal latent.
    pub consistency: f64,
}

/// Disentanglement breakdown: the score is the minimum consistency over all
/// sufficiently sampled actions; undersampled actions are excluded and listed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisentanglementScore {
    pub score: f64,
    pub per_action: Vec<ActionConsistency>,
    pub excluded: Vec<usize>,
}

pub fn score_disentanglement(
    table: &EntanglementTable,
    min_rows_per_action: usize,
) -> Result<DisentanglementScore, AuditError> {
    if table.rows.is_empty() {
        return Err(AuditError::EmptyTable);
    }
    let mut per_action = Vec::new();
    let mut excluded = Vec::new();
    for (action, rows) in table.rows_by_action().into_iter().enumerate() {
        if rows.len() < min_rows_per_action {
            excluded.push(action);
            continue;
        }
        let mut counts = vec![0usize; table.latent_count];
        for row in &rows {
            counts[argmax(&row.latent_probs)] += 1;
        }
        let modal_latent = counts
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
            .map(|(i, _)| i)
            .expect("nonempty counts");
        per_action.push(ActionConsistency {
            action,
            rows: rows.len(),
            modal_latent,
            consistency: counts[modal_latent] as f64 / rows.len() as f64,
        });
    }
    if per_action.is_empty() {
        return Err(AuditError::AllActionsUndersampled {
            min_rows: min_rows_per_action,
        });
    }
    let score = per_action
        .iter()
        .map(|c| c.consistency)
        .fold(f64::INFINITY, f64::min);
    Ok(DisentanglementScore {
        score,
        per_action,
        excluded,
    })
}

/// Informativeness: are the modal latents pairwise distinct?
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InformativenessScore {
    pub injective: bool,
    /// Action pairs sharing a modal latent.
    pub collisions: Vec<(usize, usize)>,
}

pub fn score_informativeness(disentanglement: &DisentanglementScore) -> InformativenessScore {
    let mut collisions = Vec::new();
    let entries = &disentanglement.per_action;
    for i in 0..entries.len() {
        for j in (i + 1)..entries.len() {
            if entries[i].modal_latent == entries[j].modal_latent {
                collisions.push((entries[i].action, entries[j].action));
            }
        }
    }
    InformativenessScore {
        injective: collisions.is_empty(),
        collisions,
    }
}

/// Partial decoding head from latents to true actions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaMap {
    /// `map[latent]` is the majority true action among rows hard-labeled with
    /// that latent; `None` for latents never observed.
    pub map: Vec<Option<usize>>,
    /// Latents whose majority vote was tied (resolved toward the smaller action).
    pub tie_flagged: Vec<usize>,
}

impl SigmaMap {
    pub fn apply(&self, latent: usize) -> Option<usize> {
        self.map.get(latent).copied().flatten()
    }

    pub fn mapped_count(&self) -> usize {
        self.map.iter().filter(|m| m.is_some()).count()
    }
}

/// Fit the decoding head by majority vote: rows are hard-labeled by the
/// argmax latent, and each observed latent maps to the most common true
/// action among its rows.
pub fn extract_sigma(table: &EntanglementTable) -> Result<SigmaMap, AuditError> {
    if table.rows.is_empty() {
        return Err(AuditError::EmptyLabeledSet);
    }
    let mut counts = vec![vec![0usize; table.action_count]; table.latent_count];
    for row in &table.rows {
        counts[argmax(&row.latent_probs)][row.action] += 1;
    }
    let mut map = vec![None; table.latent_count];
    let mut tie_flagged = Vec::new();
    for (latent, action_counts) in counts.iter().enumerate() {
        let total: usize = action_counts.iter().sum();
        if total == 0 {
            continue;
        }
        let best = action_counts
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
            .map(|(i, _)| i)
            .expect("nonempty");
        if action_counts
            .iter()
            .enumerate()
            .any(|(a, &c)| a != best && c == action_counts[best])
        {
            tie_flagged.push(latent);
        }
        map[latent] = Some(best);
    }
    Ok(SigmaMap { map, tie_flagged })
}

/// Pass thresholds for the three desiderata verdicts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditThresholds {
    /// Determinism passes iff mean row entropy is at most this (nats).
    pub max_mean_entropy: f64,
    /// Disentanglement passes iff the minimum consistency is at least this.
    pub min_consistency: f64,
    /// Actions with fewer rows are excluded from the breakdown.
    pub min_rows_per_action: usize,
}

impl Default for AuditThresholds {
    fn default() -> Self {
        AuditThresholds {
            max_mean_entropy: 0.05,
            min_consistency: 0.99,
            min_rows_per_action: 30,
        }
    }
}

/// Full audit: scores, recovered maps, and pass/fail verdicts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub env: String,
    pub action_count: usize,
    pub latent_count: usize,
    pub rows: usize,
    pub seed: u64,
    pub determinism_score: f64,
    pub disentanglement: DisentanglementScore,
    pub informativeness: InformativenessScore,
    /// Recovered action-to-latent map (modal latent per action).
    pub v_map: Vec<Option<usize>>,
    pub sigma: SigmaMap,
    pub thresholds: AuditThresholds,
    pub determinism_pass: bool,
    pub disentanglement_pass: bool,
    pub informativeness_pass: bool,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.determinism_pass && self.disentanglement_pass && self.informativeness_pass
    }

    /// Number of distinct modal latents among scored actions.
    pub fn distinct_modal_latents(&self) -> usize {
        let mut latents: Vec<usize> = self
            .disentanglement
            .per_action
            .iter()
            .map(|c| c.modal_latent)
            .collect();
        latents.sort_unstable();
        latents.dedup();
        latents.len()
    }
}

/// Run every score on a table and apply the thresholds.
pub fn audit_table(
    table: &EntanglementTable,
    env_name: &str,
    thresholds: AuditThresholds,
) -> Result<AuditReport, AuditError> {
    let determinism_score = score_determinism(table)?;
    let disentanglement = score_disentanglement(table, thresholds.min_rows_per_action)?;
    let informativeness = score_informativeness(&disentanglement);
    let sigma = extract_sigma(table)?;
    let mut v_map = vec![None; table.action_count];
    for entry in &disentanglement.per_action {
        v_map[entry.action] = Some(entry.modal_latent);
    }
    Ok(AuditReport {
        env: env_name.to_string(),
        action_count: table.action_count,
        latent_count: table.latent_count,
        rows: table.rows.len(),
        seed: table.seed,
        determinism_score,
        determinism_pass: determinism_score <= thresholds.max_mean_entropy,
        disentanglement_pass: disentanglement.score >= thresholds.min_consistency,
        informativeness_pass: informativeness.injective,
        disentanglement,
        informativeness,
        v_map,
        sigma,
        thresholds,
    })
}

/// Header for the audit summary CSV.
pub const SUMMARY_CSV_HEADER: &str = "env,k_hat,beta,seed,d1,d2,d3,pass1,pass2,pass3";

/// One summary CSV row; `beta` and `seed` identify the training run audited.
pub fn summary_csv_row(report: &AuditReport, beta: f64, seed: u64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        report.env,
        report.latent_count,
        beta,
        seed,
        report.determinism_score,
        report.disentanglement.score,
        u8::from(report.informativeness.injective),
        u8::from(report.determinism_pass),
        u8::from(report.disentanglement_pass),
        u8::from(report.informativeness_pass),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_builtin_env;
    use crate::objective::IdmModel;

    fn one_hot(k: usize, idx: usize) -> Vec<f64> {
        let mut v = vec![0.0; k];
        v[idx] = 1.0;
        v
    }

    fn table_from_rows(rows: Vec<TableRow>, k: usize, k_hat: usize) -> EntanglementTable {
        EntanglementTable {
            rows,
            action_count: k,
            latent_count: k_hat,
            seed: 0,
        }
    }

    #[test]
    fn determinism_score_on_known_tables() {
        let one_hot_rows: Vec<TableRow> = (0..40)
            .map(|i| TableRow {
                state: vec![0.0, 0.0],
                action: i % 4,
                latent_probs: one_hot(4, i % 4),
            })
            .collect();
        let t = table_from_rows(one_hot_rows, 4, 4);
        assert_eq!(score_determinism(&t).unwrap(), 0.0);

        let uniform_rows: Vec<TableRow> = (0..40)
            .map(|i| TableRow {
                state: vec![0.0, 0.0],
                action: i % 4,
                latent_probs: vec![0.25; 4],
            })
            .collect();
        let t = table_from_rows(uniform_rows, 4, 4);
        approx::assert_abs_diff_eq!(score_determinism(&t).unwrap(), 4.0_f64.ln(), epsilon = 1e-12);

        // Half one-hot, half uniform: the mean of 0 and ln 4.
        let mixed: Vec<TableRow> = (0..80)
            .map(|i| TableRow {
                state: vec![0.0, 0.0],
                action: i % 4,
                latent_probs: if i < 40 { one_hot(4, i % 4) } else { vec![0.25; 4] },
            })
            .collect();
        let t = table_from_rows(mixed, 4, 4);
        approx::assert_abs_diff_eq!(
            score_determinism(&t).unwrap(),
            4.0_f64.ln() / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn swap_encoder_scores_one_half() {
        // Latents 0 and 1 swap meaning between the left and right halves of
        // the state space; on an exactly balanced sample the per-action
        // consistency is exactly one half.
        let mut rows = Vec::new();
        for i in 0..60 {
            let left = i % 2 == 0;
            let state = vec![if left { 0.25 } else { 0.75 }, 0.5];
            for action in 0..2 {
                let latent = if left { action } else { 1 - action };
                rows.push(TableRow {
                    state: state.clone(),
                    action,
                    latent_probs: one_hot(2, latent),
                });
            }
        }
        let t = table_from_rows(rows, 2, 2);
        let d = score_disentanglement(&t, 30).unwrap();
        assert_eq!(d.score, 0.5);
        assert_eq!(score_determinism(&t).unwrap(), 0.0);
    }

    #[test]
    fn uniform_rows_score_perfect_disentanglement_but_maximal_entropy() {
        // Argmax ties resolve to latent 0 everywhere, so the consistency score
        // is vacuously 1; the determinism score flags the degeneracy instead.
        let rows: Vec<TableRow> = (0..160)
            .map(|i| TableRow {
                state: vec![0.0, 0.0],
                action: i % 4,
                latent_probs: vec![0.25; 4],
            })
            .collect();
        let t = table_from_rows(rows, 4, 4);
        let d = score_disentanglement(&t, 30).unwrap();
        assert_eq!(d.score, 1.0);
        let info = score_informativeness(&d);
        assert!(!info.injective);
        assert_eq!(info.collisions.len(), 6);
        approx::assert_abs_diff_eq!(score_determinism(&t).unwrap(), 4.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn undersampled_actions_are_excluded_and_flagged() {
        let mut rows: Vec<TableRow> = (0..50)
            .map(|_| TableRow {
                state: vec![0.0, 0.0],
                action: 0,
                latent_probs: one_hot(3, 2),
            })
            .collect();
        rows.push(TableRow {
            state: vec![0.0, 0.0],
            action: 1,
            latent_probs: one_hot(3, 0),
        });
        let t = table_from_rows(rows, 3, 3);
        let d = score_disentanglement(&t, 30).unwrap();
        assert_eq!(d.excluded, vec![1, 2]);
        assert_eq!(d.per_action.len(), 1);
        assert_eq!(d.score, 1.0);
    }

    #[test]
    fn single_action_is_vacuously_injective() {
        let rows: Vec<TableRow> = (0..40)
            .map(|_| TableRow {
                state: vec![0.5],
                action: 0,
                latent_probs: one_hot(2, 1),
            })
            .collect();
        let t = table_from_rows(rows, 1, 2);
        let d = score_disentanglement(&t, 30).unwrap();
        let info = score_informativeness(&d);
        assert!(info.injective);
        assert!(info.collisions.is_empty());
    }

    #[test]
    fn constant_encoder_collides_every_pair() {
        let rows: Vec<TableRow> = (0..160)
            .map(|i| TableRow {
                state: vec![0.0, 0.0],
                action: i % 4,
                latent_probs: one_hot(4, 0),
            })
            .collect();
        let t = table_from_rows(rows, 4, 4);
        let d = score_disentanglement(&t, 30).unwrap();
        let info = score_informativeness(&d);
        assert!(!info.injective);
        assert_eq!(info.collisions.len(), 6);
    }

    #[test]
    fn sigma_majority_vote_and_tie_rule() {
        // Latent 0: action 1 twice, action 2 once. Latent 1: tie between
        // actions 0 and 2 (resolves to 0, flagged). Latent 2: unobserved.
        let mut rows = Vec::new();
        for action in [1, 1, 2] {
            rows.push(TableRow {
                state: vec![0.0],
                action,
                latent_probs: one_hot(3, 0),
            });
        }
        for action in [0, 2] {
            rows.push(TableRow {
                state: vec![0.0],
                action,
                latent_probs: one_hot(3, 1),
            });
        }
        let t = table_from_rows(rows, 3, 3);
        let sigma = extract_sigma(&t).unwrap();
        assert_eq!(sigma.map, vec![Some(1), Some(0), None]);
        assert_eq!(sigma.tie_flagged, vec![1]);
    }

    #[test]
    fn sigma_inverts_v_map_with_one_row_per_action() {
        // One one-hot row per action, each with a distinct latent.
        let rows: Vec<TableRow> = (0..4)
            .map(|action| TableRow {
                state: vec![0.0, 0.0],
                action,
                latent_probs: one_hot(8, 7 - action),
            })
            .collect();
        let t = table_from_rows(rows, 4, 8);
        let sigma = extract_sigma(&t).unwrap();
        for action in 0..4 {
            assert_eq!(sigma.apply(7 - action), Some(action));
        }
        assert_eq!(sigma.mapped_count(), 4);
    }

    #[test]
    fn scores_are_invariant_under_latent_relabeling() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let idm = IdmModel::seeded(2, 2, 4, &[16], 77).unwrap();
        let table = build_table(&env, &idm, 400, 5).unwrap();
        let permutation = [2usize, 0, 3, 1];
        let permuted_rows: Vec<TableRow> = table
            .rows
            .iter()
            .map(|row| {
                let mut probs = vec![0.0; 4];
                for (i, &p) in row.latent_probs.iter().enumerate() {
                    probs[permutation[i]] = p;
                }
                TableRow {
                    state: row.state.clone(),
                    action: row.action,
                    latent_probs: probs,
                }
            })
            .collect();
        let permuted = table_from_rows(permuted_rows, 4, 4);

        let d1 = score_determinism(&table).unwrap();
        let d1p = score_determinism(&permuted).unwrap();
        approx::assert_abs_diff_eq!(d1, d1p, epsilon = 1e-12);

        let d2 = score_disentanglement(&table, 30).unwrap();
        let d2p = score_disentanglement(&permuted, 30).unwrap();
        assert_eq!(d2.score, d2p.score);
        assert_eq!(
            score_informativeness(&d2).injective,
            score_informativeness(&d2p).injective
        );
    }

    #[test]
    fn same_seed_builds_identical_tables() {
        let env = make_builtin_env("quadrant4", 0).unwrap();
        let idm = IdmModel::seeded(2, 2, 4, &[16], 3).unwrap();
        let a = build_table(&env, &idm, 100, 9).unwrap();
        let b = build_table(&env, &idm, 100, 9).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.state, rb.state);
            assert_eq!(ra.action, rb.action);
            assert_eq!(ra.latent_probs, rb.latent_probs);
        }
    }

    #[test]
    fn audit_report_verdicts_follow_thresholds() {
        let rows: Vec<TableRow> = (0..200)
            .map(|i| TableRow {
                state: vec![0.0, 0.0],
                action: i % 4,
                latent_probs: one_hot(4, (i % 4 + 1) % 4),
            })
            .collect();
        let t = table_from_rows(rows, 4, 4);
        let report = audit_table(&t, "synthetic", AuditThresholds::default()).unwrap();
        assert!(report.all_pass());
        assert_eq!(report.distinct_modal_latents(), 4);
        // Sigma inverts the recovered action-to-latent map.
        for (action, latent) in report.v_map.iter().enumerate() {
            assert_eq!(report.sigma.apply(latent.unwrap()), Some(action));
        }
        let row = summary_csv_row(&report, 0.05, 3);
        assert!(row.starts_with("synthetic,4,0.05,3,"));
        assert!(row.ends_with(",1,1,1,1"));
    }
}
