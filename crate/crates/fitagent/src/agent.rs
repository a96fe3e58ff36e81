//! The observe-think-act loop: run state, prompt assembly, response
//! parsing, and the driver with its halt policy.
//!
//! One iteration is one LLM round trip: the agent sees the tool list, a
//! state summary, and recent history; it answers with a `THOUGHT:` line and
//! an `ACTION:` JSON object; the chosen tool runs and its observation is
//! appended to history. Malformed responses are recorded and the run
//! continues, so a single bad reply never kills a session. Repeated failure
//! of a critical tool does: see [`run`].

use serde::{Deserialize, Serialize};

use crate::dataset;
use crate::eqgen::GeneratedFunction;
use crate::fit::{FitResult, ValidationMetrics};
use crate::llm::ChatRequest;
use crate::numfmt::sig4;
use crate::region::{RegionMethod, RegionSelection};
use crate::report::{metrics_line, params_line};
use crate::tools::{Criticality, RunContext, ToolRegistry};

pub const DEFAULT_MAX_ITERATIONS: usize = 20;
pub const DEFAULT_HISTORY_WINDOW: usize = 10;

/// The response-format contract, sent verbatim at the end of every prompt.
pub const RESPONSE_FORMAT: &str = "Respond in this EXACT format:\nTHOUGHT: <your reasoning>\nACTION: {\"tool\": \"<tool_name>\", \"input\": <json_input>}";

/// Terminal and non-terminal run states. `Done` is reachable only through
/// the finalize tool; everything else is a halt with a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Done,
    HaltedNoEquation,
    HaltedMaxIter,
    HaltedEssentialFailure,
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Done => "done",
            RunStatus::HaltedNoEquation => "halted_no_equation",
            RunStatus::HaltedMaxIter => "halted_max_iter",
            RunStatus::HaltedEssentialFailure => "halted_essential_failure",
        }
    }

    /// Process exit code for the CLI. `Running` never escapes [`run`]; it
    /// maps to the generic failure code defensively.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Done => 0,
            RunStatus::Running => 1,
            RunStatus::HaltedNoEquation => 2,
            RunStatus::HaltedEssentialFailure => 3,
            RunStatus::HaltedMaxIter => 4,
        }
    }
}

/// How an iteration ended: tool ran clean, tool ran and failed (or the
/// action was rejected), or the response never parsed into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    ToolError,
    ParseError,
}

/// A parsed tool invocation. `input` is always a JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub tool: String,
    pub input: serde_json::Value,
}

/// One iteration's record. `action` is `None` exactly when the response
/// failed to parse (`outcome == ParseError`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub thought: String,
    pub action: Option<ActionRequest>,
    pub observation: String,
    pub outcome: Outcome,
}

/// The agent's working memory. Invariants: `history` holds one entry per
/// iteration numbered 1..=k in order; a fitted `model` implies `function`
/// is present (fitting requires one, and replacing the function clears the
/// fit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub data: Option<dataset::Dataset>,
    pub function: Option<GeneratedFunction>,
    pub model: Option<FitResult>,
    pub validation: Option<ValidationMetrics>,
    pub region: Option<RegionSelection>,
    pub history: Vec<HistoryEntry>,
    pub status: RunStatus,
}

impl AgentState {
    pub fn new() -> AgentState {
        AgentState {
            data: None,
            function: None,
            model: None,
            validation: None,
            region: None,
            history: Vec::new(),
            status: RunStatus::Running,
        }
    }
}

impl Default for AgentState {
    fn default() -> AgentState {
        AgentState::new()
    }
}

/// Loop budget. `retries` for critical tools lives on [`RunContext`] so the
/// tool executors and the halt policy share one knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunPolicy {
    pub max_iterations: usize,
    pub history_window: usize,
}

impl Default for RunPolicy {
    fn default() -> RunPolicy {
        RunPolicy {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            history_window: DEFAULT_HISTORY_WINDOW,
        }
    }
}

/// A response that could not be turned into an action. `thought` keeps
/// whatever reasoning text was salvageable so the history stays readable.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseFailure {
    pub message: String,
    pub thought: String,
}

/// Extracts the first balanced JSON object from `text`, brace-counting
/// outside string literals so `{"a": "{x}"}` scans correctly.
fn balanced_json_slice(text: &str) -> Result<&str, String> {
    let start = match text.find('{') {
        Some(i) => i,
        None => return Err("no JSON object after ACTION:".to_owned()),
    };
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(&text[start..start + i + c.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    Err("unbalanced braces in action JSON".to_owned())
}

/// Parses one LLM response into (thought, action).
///
/// Code-fence lines are stripped first so a fully fenced reply still
/// parses. The `THOUGHT:` and `ACTION:` markers are case-sensitive and
/// line-anchored (leading indentation tolerated) because the prompt
/// mandates the exact format; lenient matching would mask prompt
/// regressions. Anything after the action's closing brace is ignored.
pub fn parse_response(text: &str) -> Result<(String, ActionRequest), ParseFailure> {
    let lines: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect();
    let after = |line: &str, marker: &str| line.trim_start()[marker.len()..].to_owned();

    let t_idx = match lines
        .iter()
        .position(|l| l.trim_start().starts_with("THOUGHT:"))
    {
        Some(i) => i,
        None => {
            return Err(ParseFailure {
                message: "missing THOUGHT: marker".to_owned(),
                thought: String::new(),
            })
        }
    };
    let a_idx = match lines[t_idx..]
        .iter()
        .position(|l| l.trim_start().starts_with("ACTION:"))
    {
        Some(rel) => t_idx + rel,
        None => {
            let mut parts = vec![after(lines[t_idx], "THOUGHT:")];
            parts.extend(lines[t_idx + 1..].iter().map(|s| s.to_string()));
            return Err(ParseFailure {
                message: "missing ACTION: marker".to_owned(),
                thought: parts.join("\n").trim().to_owned(),
            });
        }
    };

    let mut thought_parts = vec![after(lines[t_idx], "THOUGHT:")];
    thought_parts.extend(lines[t_idx + 1..a_idx].iter().map(|s| s.to_string()));
    let thought = thought_parts.join("\n").trim().to_owned();

    let mut action_text = after(lines[a_idx], "ACTION:");
    for line in &lines[a_idx + 1..] {
        action_text.push('\n');
        action_text.push_str(line);
    }

    let fail = |message: String, thought: &str| ParseFailure {
        message,
        thought: thought.to_owned(),
    };
    let slice = balanced_json_slice(&action_text).map_err(|m| fail(m, &thought))?;
    let value: serde_json::Value = serde_json::from_str(slice)
        .map_err(|e| fail(format!("malformed action JSON: {e}"), &thought))?;
    let obj = value
        .as_object()
        .ok_or_else(|| fail("action must be a JSON object".to_owned(), &thought))?;
    let tool = obj.get("tool").and_then(|v| v.as_str()).unwrap_or("");
    if tool.is_empty() {
        return Err(fail(
            "action \"tool\" must be a nonempty string".to_owned(),
            &thought,
        ));
    }
    let input = match obj.get("input") {
        None => serde_json::Value::Object(serde_json::Map::new()),
        Some(v) if v.is_object() => v.clone(),
        Some(_) => {
            return Err(fail(
                "action \"input\" must be a JSON object".to_owned(),
                &thought,
            ))
        }
    };
    Ok((
        thought,
        ActionRequest {
            tool: tool.to_owned(),
            input,
        },
    ))
}

/// Renders one history entry the way it appears in prompts. Actions are
/// re-serialized in canonical key order, so prompts are deterministic even
/// if the model's original JSON used odd spacing.
pub fn render_entry(entry: &HistoryEntry) -> String {
    let action = match &entry.action {
        Some(a) => serde_json::to_string(a).expect("action serializes"),
        None => "(unparseable)".to_owned(),
    };
    format!(
        "Iteration {}:\nTHOUGHT: {}\nACTION: {}\nOBSERVATION: {}",
        entry.iteration, entry.thought, action, entry.observation
    )
}

fn state_line_model(state: &AgentState) -> String {
    match (&state.model, &state.function) {
        (Some(m), Some(f)) => format!("fitted: {}", params_line(&f.params, m)),
        (Some(m), None) => {
            let order: Vec<String> = m.params.keys().cloned().collect();
            format!("fitted: {}", params_line(&order, m))
        }
        (None, _) => "not loaded".to_owned(),
    }
}

fn state_line_region(state: &AgentState) -> String {
    match &state.region {
        None => "not loaded".to_owned(),
        Some(r) => {
            let x_name = state
                .data
                .as_ref()
                .map(|d| d.x_name.clone())
                .unwrap_or_else(|| "x".to_owned());
            let method = match r.method {
                RegionMethod::Auto => "auto",
                RegionMethod::Manual => "manual",
            };
            format!(
                "{} of {} points, {} in [{}, {}], method {}",
                r.points_selected(),
                r.points_total,
                x_name,
                sig4(r.x_min),
                sig4(r.x_max),
                method
            )
        }
    }
}

/// Assembles the user message: tool list, state summary, recent history
/// (windowed, with an elision marker), and the response-format contract.
pub fn build_user_message(
    state: &AgentState,
    registry: &ToolRegistry,
    history_window: usize,
) -> String {
    let mut s = String::new();
    s.push_str("Available tools:\n");
    s.push_str(&registry.render_tool_list());
    s.push_str("\nCurrent state:\n");
    s.push_str(&format!(
        "- data: {}\n",
        state
            .data
            .as_ref()
            .map(dataset::summarize)
            .unwrap_or_else(|| "not loaded".to_owned())
    ));
    s.push_str(&format!(
        "- function: {}\n",
        state
            .function
            .as_ref()
            .map(|f| f.dsl_source.clone())
            .unwrap_or_else(|| "not loaded".to_owned())
    ));
    s.push_str(&format!("- model: {}\n", state_line_model(state)));
    s.push_str(&format!(
        "- validation: {}\n",
        state
            .validation
            .as_ref()
            .map(|v| metrics_line(v, ""))
            .unwrap_or_else(|| "not loaded".to_owned())
    ));
    s.push_str(&format!("- region: {}\n", state_line_region(state)));
    s.push_str("\nRecent history:\n");
    if state.history.is_empty() {
        s.push_str("(none yet)\n");
    } else {
        let total = state.history.len();
        let start = total.saturating_sub(history_window);
        if start > 0 {
            s.push_str(&format!("[{start} earlier iterations elided]\n\n"));
        }
        let rendered: Vec<String> = state.history[start..].iter().map(render_entry).collect();
        s.push_str(&rendered.join("\n\n"));
        s.push('\n');
    }
    s.push('\n');
    s.push_str(RESPONSE_FORMAT);
    s
}

/// Builds the full chat request for the next iteration: the task's role
/// text as the system message, [`build_user_message`] as the user message.
pub fn build_prompt(
    state: &AgentState,
    registry: &ToolRegistry,
    ctx: &RunContext,
    history_window: usize,
) -> Result<ChatRequest, crate::llm::LlmError> {
    ctx.chat.request(build_user_message(state, registry, history_window))
}

/// Runs one iteration: prompt, LLM call, parse, dispatch, record.
///
/// `consecutive` tracks per-tool runs of critical-tool failures; a tool's
/// own success resets its counter, other tools' turns leave it alone. The
/// (retries + 1)-th consecutive failure of one critical tool halts the run.
pub fn step(
    state: &mut AgentState,
    registry: &ToolRegistry,
    ctx: &mut RunContext,
    policy: &RunPolicy,
    consecutive: &mut std::collections::BTreeMap<String, usize>,
) {
    let iteration = state.history.len() + 1;
    let record = |state: &mut AgentState, thought: String, observation: String, outcome| {
        state.history.push(HistoryEntry {
            iteration,
            thought,
            action: None,
            observation,
            outcome,
        });
    };

    let request = match build_prompt(state, registry, ctx, policy.history_window) {
        Ok(r) => r,
        Err(e) => {
            // Request construction fails only on violated message invariants;
            // nothing the LLM does can repair that, so halt.
            record(
                state,
                String::new(),
                format!("internal prompt error: {e}"),
                Outcome::ToolError,
            );
            state.status = RunStatus::HaltedEssentialFailure;
            return;
        }
    };
    let response = match ctx.backend.complete(&request) {
        Ok(r) => r,
        Err(e) => {
            // No reply means no way to pick the next action: halt rather
            // than spin the loop against a dead backend.
            record(
                state,
                String::new(),
                format!("LLM backend error: {e}"),
                Outcome::ToolError,
            );
            state.status = RunStatus::HaltedEssentialFailure;
            return;
        }
    };

    match parse_response(&response.content) {
        Err(f) => {
            // Malformed replies are observations, never terminal: the next
            // prompt shows the parse error and the model gets another turn.
            record(
                state,
                f.thought,
                format!("Response parse error: {}", f.message),
                Outcome::ParseError,
            );
        }
        Ok((thought, action)) => {
            let result = registry.dispatch(&action, state, ctx);
            state.history.push(HistoryEntry {
                iteration,
                thought,
                action: Some(action.clone()),
                observation: result.observation,
                outcome: result.outcome,
            });
            if let Some(spec) = registry.get(&action.tool) {
                if spec.criticality == Criticality::Essential {
                    match result.outcome {
                        Outcome::Ok => {
                            consecutive.insert(action.tool.clone(), 0);
                        }
                        Outcome::ToolError => {
                            let c = consecutive.entry(action.tool.clone()).or_insert(0);
                            *c += 1;
                            if *c >= ctx.retries + 1 {
                                state.status = RunStatus::HaltedEssentialFailure;
                            }
                        }
                        Outcome::ParseError => unreachable!("dispatch never yields ParseError"),
                    }
                }
            }
            // A tool-directed halt (e.g. equation generation exhausting its
            // attempts) overrides the generic critical-failure status.
            if let Some(halt) = result.halt {
                state.status = halt;
            }
        }
    }
}

/// Drives the loop until a terminal status or the iteration budget runs
/// out; hitting the budget while still running becomes `HaltedMaxIter`.
pub fn run(
    state: &mut AgentState,
    registry: &ToolRegistry,
    ctx: &mut RunContext,
    policy: &RunPolicy,
) {
    let mut consecutive = std::collections::BTreeMap::new();
    while state.status == RunStatus::Running && state.history.len() < policy.max_iterations {
        step(state, registry, ctx, policy, &mut consecutive);
    }
    if state.status == RunStatus::Running {
        state.status = RunStatus::HaltedMaxIter;
    }
}
