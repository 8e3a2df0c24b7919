//! Test bench for latent action policy learning on synthetic environments.
//!
//! The crate builds up from a small dense-network numeric core to:
//!
//! - [`env`] — synthetic ground-truth environments (policy, transition map,
//!   per-action supports) with machine-checkable assumption validation and
//!   seeded transition sampling;
//! - [`objective`] — the entropy-regularized reconstruction objective over an
//!   encoder/decoder pair and its trainer;
//! - [`oracle`] — a constructive zero-loss encoder/decoder pair built from
//!   distances to the per-action transition graphs, used to certify that the
//!   objective's infimum is zero;
//! - [`audit`] — estimation of the latent-vs-true action entanglement map and
//!   scoring of the determinism / disentanglement / informativeness desiderata;
//! - [`pipeline`] — the three-stage latent-action training procedure, a
//!   behavior-cloning baseline, and the documented degenerate-solution
//!   demonstrations.

pub mod audit;
pub mod categorical;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod net;
pub mod objective;
pub mod oracle;
pub mod pipeline;
pub mod storage;
