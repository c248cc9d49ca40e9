//! Architecture generators.
//!
//! The controller asks a [`Generator`] for one candidate per iteration. Two
//! seeded mocks stand in for language models in tests and benchmarks; the
//! [`llm`] client talks to any OpenAI-compatible chat-completions endpoint.

mod extract;
pub mod llm;
mod mock;
mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arch::Mode;
use crate::resource::{ConstraintSet, ResourceProfile};

pub use extract::{extract_architecture, ExtractionError};
pub use llm::{llm_generate, ChatMessage, EndpointConfig, HttpTransport, LlmGenerator, Transport, TransportError};
pub use mock::{mock_explore, mock_refine, MockExplorer, MockRefiner, MockSpace, OpenSpace};
pub use prompt::{build_prompt, CORRECTION_SUFFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Exploration,
    Refinement,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Exploration => "exploration",
            Phase::Refinement => "refinement",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMember {
    pub serialization: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseInfo {
    pub serialization: String,
    pub score: f64,
    pub profile: ResourceProfile,
}

/// Everything a generator may look at when proposing a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationContext {
    pub phase: Phase,
    pub mode: Mode,
    pub constraints: ConstraintSet,
    pub catalog: String,
    /// Pool contents, best first.
    pub pool: Vec<PoolMember>,
    /// Present exactly in the refinement phase.
    pub base: Option<BaseInfo>,
    /// Most recent rejection reasons, oldest first.
    pub feedback: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResult {
    pub raw_text: String,
    pub extracted: Result<String, String>,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneratorError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("generator precondition violated: {0}")]
    Precondition(String),
}

pub trait Generator {
    /// Short identity recorded in iteration logs.
    fn name(&self) -> String;

    fn generate(&mut self, ctx: &GenerationContext) -> Result<GeneratorResult, GeneratorError>;
}
