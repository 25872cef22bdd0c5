use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::memory::MemoryEntry;
use super::scene::{SceneDigest, SceneText};

pub const DEFAULT_PROMPT_BUDGET: usize = 4000;
pub const NO_MEMORIES: &str = "no similar past cases";

const SYSTEM: &str = "You are the planning layer of an automated vehicle. \
Turn the passenger's request into one driving directive for the vehicle's fast controller.\n\
Safety rules: only use lanes that exist on this road; choose the oncoming lane only to overtake and only with speed_intent 1; \
the safety executor may delay or refuse any directive.\n\
Output schema: finish with one fenced ```json block holding exactly these fields: \
target_lane (integer lane index), speed_intent (-1, 0 or 1), urgency (number in [0, 1]), rationale (string).";

const COT: &str = "Think step by step about the scene, the past cases and the request, then emit the schema block.";

/// Sections of a slow-system query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub scene: String,
    /// Structured scene the text was rendered from.
    pub digest: SceneDigest,
    /// Rendered exemplars, most similar first.
    pub memories: Vec<String>,
    pub instruction: String,
    pub cot: String,
}

impl Prompt {
    pub fn render(&self) -> String {
        let memory = if self.memories.is_empty() { NO_MEMORIES.to_string() } else { self.memories.join("\n") };
        format!(
            "{}\n\n## Scene\n{}\n## Similar past cases\n{}\n\n## Instruction\n{}\n\n{}",
            self.system, self.scene, memory, self.instruction, self.cot
        )
    }

    pub fn len(&self) -> usize {
        self.render().chars().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn outcome_word(score: f64) -> &'static str {
    if score < 0.0 {
        "collision"
    } else if score > 0.0 {
        "success"
    } else {
        "completed without adherence"
    }
}

/// One exemplar as a single line: scene -> directive -> outcome.
pub fn render_memory(e: &MemoryEntry) -> String {
    let scene = e.scene.text.trim_end().replace('\n', "; ");
    let d = &e.directive;
    format!(
        "- scene: {scene} -> directive: lane {}, speed_intent {}, urgency {} -> outcome: {} ({:+})",
        d.target_lane,
        d.speed_intent,
        d.urgency,
        outcome_word(e.outcome),
        e.outcome
    )
}

fn truncate_chars(s: &mut String, max: usize) {
    if let Some((i, _)) = s.char_indices().nth(max) {
        s.truncate(i);
    }
}

/// Assemble a prompt within `budget` characters. Memories (given most
/// similar first) are dropped oldest first; the instruction and then the
/// scene are shortened only if that is not enough. The fixed system and
/// reasoning sections always stay.
pub fn build_prompt(instruction: &str, scene: &SceneText, memories: &[&MemoryEntry], budget: usize) -> Prompt {
    let mut kept: Vec<&MemoryEntry> = memories.to_vec();
    let mut p = Prompt {
        system: SYSTEM.to_string(),
        scene: scene.text.clone(),
        digest: scene.digest.clone(),
        memories: kept.iter().map(|e| render_memory(e)).collect(),
        instruction: instruction.to_string(),
        cot: COT.to_string(),
    };
    while p.len() > budget && !kept.is_empty() {
        let oldest =
            (0..kept.len()).min_by(|&a, &b| kept[a].timestamp.total_cmp(&kept[b].timestamp)).expect("nonempty");
        kept.remove(oldest);
        p.memories.remove(oldest);
    }
    for shorten_scene in [false, true] {
        let over = p.len().saturating_sub(budget);
        if over == 0 {
            break;
        }
        let field = if shorten_scene { &mut p.scene } else { &mut p.instruction };
        let keep = field.chars().count().saturating_sub(over);
        truncate_chars(field, keep);
    }
    p
}
