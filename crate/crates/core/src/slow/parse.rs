use alloc::format;
use alloc::string::{String, ToString};

use serde_json::Value;

use super::{Directive, SlowError};
use crate::sim::ScenarioConfig;

const FIELDS: [&str; 4] = ["target_lane", "speed_intent", "urgency", "rationale"];

/// Body of the last fenced json block, if any.
pub fn last_json_block(text: &str) -> Option<&str> {
    let lower = text.to_ascii_lowercase();
    let mut search_end = text.len();
    while let Some(open) = lower[..search_end].rfind("```json") {
        let body_start = open + "```json".len();
        if let Some(close) = text[body_start..].find("```") {
            return Some(&text[body_start..body_start + close]);
        }
        search_end = open;
    }
    None
}

/// Fenced block for `d`; backticks inside strings are escaped so the fence
/// cannot be closed early.
pub fn render_directive_block(d: &Directive) -> String {
    let json = serde_json::to_string_pretty(d).expect("directive serializes").replace('`', "\\u0060");
    format!("```json\n{json}\n```")
}

fn integer(v: &Value, name: &str) -> Result<i64, SlowError> {
    match v {
        Value::Number(n) if n.is_i64() => Ok(n.as_i64().expect("checked")),
        Value::Number(n) if n.is_u64() => Err(SlowError::RangeViolation(format!("{name} is too large"))),
        _ => Err(SlowError::SchemaViolation(format!("{name} must be an integer"))),
    }
}

/// Extract and validate the directive in an LLM response.
pub fn parse_directive(text: &str, config: &ScenarioConfig) -> Result<Directive, SlowError> {
    let body = last_json_block(text).ok_or(SlowError::NoBlockFound)?;
    let value: Value = serde_json::from_str(body).map_err(|e| SlowError::SchemaViolation(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| SlowError::SchemaViolation("block is not an object".into()))?;
    for key in obj.keys() {
        if !FIELDS.contains(&key.as_str()) {
            return Err(SlowError::SchemaViolation(format!("unexpected field {key}")));
        }
    }
    let field = |name: &str| obj.get(name).ok_or_else(|| SlowError::SchemaViolation(format!("missing field {name}")));
    let lane = integer(field("target_lane")?, "target_lane")?;
    let intent = integer(field("speed_intent")?, "speed_intent")?;
    let urgency =
        field("urgency")?.as_f64().ok_or_else(|| SlowError::SchemaViolation("urgency must be a number".into()))?;
    let rationale =
        field("rationale")?.as_str().ok_or_else(|| SlowError::SchemaViolation("rationale must be a string".into()))?;
    if lane < 0 {
        return Err(SlowError::RangeViolation("target_lane is negative".into()));
    }
    if !(-1..=1).contains(&intent) {
        return Err(SlowError::RangeViolation("speed_intent must be -1, 0 or 1".into()));
    }
    let d = Directive {
        target_lane: usize::try_from(lane).map_err(|_| SlowError::RangeViolation("target_lane is too large".into()))?,
        speed_intent: intent as i8,
        urgency,
        rationale: rationale.to_string(),
    };
    match d.range_error(config) {
        Some(msg) => Err(SlowError::RangeViolation(msg.into())),
        None => Ok(d),
    }
}
