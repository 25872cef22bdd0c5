use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::backend::LlmBackend;
use super::memory::{outcome_score, MemoryBank, MemoryEntry, DEFAULT_TOP_K};
use super::parse::parse_directive;
use super::prompt::{build_prompt, DEFAULT_PROMPT_BUDGET};
use super::scene::{encode_scene, SceneText};
use super::Directive;
use crate::control::ArbitrationEvent;
use crate::episode::DriveSession;
use crate::sim::WorldState;
use crate::trainer::Director;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlowConfig {
    pub top_k: usize,
    /// Prompt length bound, characters.
    pub prompt_budget: usize,
    /// Extra attempts after a failed query or parse.
    pub retries: usize,
    /// Re-query period while a non-neutral directive is active, seconds.
    pub cadence: f64,
}

impl Default for SlowConfig {
    fn default() -> Self {
        SlowConfig { top_k: DEFAULT_TOP_K, prompt_budget: DEFAULT_PROMPT_BUDGET, retries: 2, cadence: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectiveSource {
    Llm,
    Fallback,
}

/// One prompt/response exchange, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Simulation time of the query, seconds.
    pub time: f64,
    pub instruction: String,
    pub prompt: String,
    /// One item per attempt: the response text or the failure.
    pub attempts: Vec<Result<String, String>>,
    pub directive: Directive,
    pub source: DirectiveSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub directive: Directive,
    pub source: DirectiveSource,
    pub scene: SceneText,
    /// Failure messages of the attempts that did not yield a directive.
    pub failures: Vec<String>,
}

/// Scene encoding, retrieval, prompting, querying and parsing.
pub struct SlowSystem<B> {
    pub backend: B,
    pub bank: MemoryBank,
    pub config: SlowConfig,
    pub transcript: Vec<TranscriptEntry>,
}

impl<B: LlmBackend> SlowSystem<B> {
    pub fn new(backend: B, bank: MemoryBank, config: SlowConfig) -> Self {
        SlowSystem { backend, bank, config, transcript: Vec::new() }
    }

    /// Directive for `instruction` in `world`. Never fails: when every
    /// attempt fails the neutral directive for the current lane comes back.
    pub fn decide(&mut self, world: &WorldState, instruction: &str) -> Decision {
        let scene = encode_scene(world);
        let hits = self.bank.retrieve(&scene, self.config.top_k).unwrap_or_default();
        let memories: Vec<&MemoryEntry> = hits.iter().filter_map(|h| self.bank.get(h.index)).collect();
        let prompt = build_prompt(instruction, &scene, &memories, self.config.prompt_budget);
        let mut attempts = Vec::new();
        let mut failures = Vec::new();
        let mut result = None;
        if instruction.trim().is_empty() {
            failures.push("empty instruction".to_string());
        } else {
            for _ in 0..=self.config.retries {
                match self.backend.complete(&prompt) {
                    Ok(text) => {
                        let parsed = if text.trim().is_empty() {
                            Err(super::backend::BackendError::EmptyResponse.to_string())
                        } else {
                            parse_directive(&text, &world.config).map_err(|e| e.to_string())
                        };
                        attempts.push(Ok(text));
                        match parsed {
                            Ok(d) => {
                                result = Some(d);
                                break;
                            }
                            Err(e) => failures.push(e),
                        }
                    }
                    Err(e) => {
                        attempts.push(Err(e.to_string()));
                        failures.push(e.to_string());
                    }
                }
            }
        }
        let (directive, source) = match result {
            Some(d) => (d, DirectiveSource::Llm),
            None => (Directive::neutral(world.ego().lane), DirectiveSource::Fallback),
        };
        self.transcript.push(TranscriptEntry {
            time: world.time,
            instruction: instruction.to_string(),
            prompt: prompt.render(),
            attempts,
            directive: directive.clone(),
            source,
        });
        Decision { directive, source, scene, failures }
    }
}

/// A directive handed to the fast system during an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuedDirective {
    pub time: f64,
    pub scene: SceneText,
    pub directive: Directive,
    pub source: DirectiveSource,
}

/// Drives the directive slot from a user instruction through the slow system.
pub struct SlowDirector<B> {
    pub system: SlowSystem<B>,
    /// Instruction given at episode start.
    pub instruction: Option<String>,
    pub issued: Vec<IssuedDirective>,
    /// Arbitration outcome at the latest decision boundary.
    pub last_event: ArbitrationEvent,
    current: Option<String>,
    fresh: bool,
    last_query: f64,
}

impl<B: LlmBackend> SlowDirector<B> {
    pub fn new(system: SlowSystem<B>, instruction: Option<String>) -> Self {
        SlowDirector {
            system,
            instruction,
            issued: Vec::new(),
            last_event: ArbitrationEvent::Idle,
            current: None,
            fresh: false,
            last_query: 0.0,
        }
    }

    /// A new instruction, queried at the next decision boundary.
    pub fn instruct(&mut self, text: &str) {
        self.current = Some(text.to_string());
        self.fresh = true;
    }

    fn due(&self, session: &DriveSession) -> bool {
        if self.fresh {
            return true;
        }
        let active = self.issued.last().is_some_and(|i| !i.directive.is_neutral_for(session.world.ego().lane));
        active && session.world.time - self.last_query >= self.system.config.cadence - 1e-9
    }
}

impl<B: LlmBackend> Director for SlowDirector<B> {
    fn reset(&mut self, _: &mut DriveSession, _: u64) {
        self.issued.clear();
        self.current = self.instruction.clone();
        self.fresh = self.current.is_some();
        self.last_query = 0.0;
        self.last_event = ArbitrationEvent::Idle;
    }

    fn before_decision(&mut self, session: &mut DriveSession) {
        let new = match &self.current {
            Some(text) if self.due(session) => {
                let d = self.system.decide(&session.world, text);
                self.fresh = false;
                self.last_query = session.world.time;
                self.issued.push(IssuedDirective {
                    time: session.world.time,
                    scene: d.scene,
                    directive: d.directive.clone(),
                    source: d.source,
                });
                Some(d.directive)
            }
            _ => None,
        };
        self.last_event = session.apply_directive(new);
    }

    fn directed_lane(&self, _: &DriveSession) -> Option<usize> {
        self.issued.last().map(|i| i.directive.target_lane)
    }

    /// Stores every issued directive with the episode outcome.
    fn finish(&mut self, session: &DriveSession) {
        let lane = session.world.ego().lane;
        for i in self.issued.drain(..) {
            let score = outcome_score(session.world.collided, i.directive.target_lane == lane);
            // scene text is never empty, so this cannot fail
            let _ = self.system.bank.write(i.scene, i.directive, score, i.time);
        }
    }
}
