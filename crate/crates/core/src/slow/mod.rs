//! Slow system: scene text, memory retrieval, prompting, backends and
//! directive parsing.

mod backend;
mod directive;
mod embed;
mod memory;
mod parse;
mod pipeline;
mod prompt;
mod scene;

pub use backend::{best_overtaking_lane, stub_rule, BackendError, LlmBackend, StubBackend, StubRule};
pub use directive::Directive;
pub use embed::{cosine, embed_text, tokens, EMBED_DIM};
pub use memory::{outcome_score, Hit, MemoryBank, MemoryEntry, DEFAULT_MEMORY_CAP, DEFAULT_TOP_K};
pub use parse::{last_json_block, parse_directive, render_directive_block};
pub use pipeline::{Decision, DirectiveSource, IssuedDirective, SlowConfig, SlowDirector, SlowSystem, TranscriptEntry};
pub use prompt::{build_prompt, render_memory, Prompt, DEFAULT_PROMPT_BUDGET, NO_MEMORIES};
pub use scene::{encode_scene, render, NeighborDigest, RelPos, SceneDigest, SceneText, SCENE_NEIGHBORS};

use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SlowError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("no fenced json block in the response")]
    NoBlockFound,
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("range violation: {0}")]
    RangeViolation(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}
