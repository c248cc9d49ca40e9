//! Phase-adaptive neural architecture search.
//!
//! - [`arch`]: the block-call template language, its catalog and validator.
//! - [`eval`]: forward passes over untrained networks and the perturbation scores.
//! - [`resource`]: analytic parameter/FLOP counts and budget checks.
//! - [`search`]: the explore-then-refine controller and its candidate pool.
//! - [`generate`]: architecture generators (seeded mocks and a chat-completions client).
//! - [`oracle`]: an exhaustively scored micro search space for ground-truth ranks.

pub mod arch;
pub mod eval;
pub mod generate;
pub mod oracle;
pub mod resource;
pub mod rng;
pub mod search;
