// Scratch calibration harness (not part of the deliverable test suite).
use std::time::Instant;

use lapo_core::audit::{audit_table, build_table, AuditThresholds};
use lapo_core::env::{make_builtin_env, sample_transitions};
use lapo_core::objective::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("quadrant4");
    let k_hat: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let beta: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let seeds: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(3);
    let warmup: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.3);

    for seed in 0..seeds {
        let env = make_builtin_env(which, seed).unwrap();
        let data = sample_transitions(&env, 50_000, seed + 1000, false).unwrap();
        let cfg = TrainConfig {
            k_hat,
            beta,
            steps,
            seed,
            beta_warmup_frac: warmup,
            ..TrainConfig::default()
        };
        let t0 = Instant::now();
        match train(&data, &cfg) {
            Ok(out) => {
                let table = build_table(&env, &out.idm, 2000, seed + 7).unwrap();
                let report = audit_table(&table, &env.name, AuditThresholds::default()).unwrap();
                println!(
                    "{which} seed {seed}: total {:.3e} (recon {:.3e}, ent {:.3e}) d1 {:.3e} d2 {:.4} d3 {} modes {} revivals {} [{:.1}s]",
                    out.final_terms.total(beta),
                    out.final_terms.reconstruction,
                    out.final_terms.entropy,
                    report.determinism_score,
                    report.disentanglement.score,
                    report.informativeness.injective,
                    report.distinct_modal_latents(),
                    out.revivals.len(),
                    t0.elapsed().as_secs_f64()
                );
                if std::env::var("TUNE_DEBUG").is_ok() {
                    println!("  revivals: {:?}", out.revivals);
                    let mut counts = vec![0usize; k_hat];
                    for row in &table.rows {
                        let mut best = 0;
                        for (i, &p) in row.latent_probs.iter().enumerate() {
                            if p > row.latent_probs[best] {
                                best = i;
                            }
                        }
                        counts[best] += 1;
                    }
                    println!("  final hard-label counts: {counts:?}");
                    for c in &report.disentanglement.per_action {
                        println!(
                            "  action {} -> latent {} (consistency {:.3}, rows {})",
                            c.action, c.modal_latent, c.consistency, c.rows
                        );
                    }
                }
            }
            Err(e) => println!("{which} seed {seed}: FAILED {e}"),
        }
    }
}
