//! Tool registry: specs, input validation, dispatch, and the executors
//! behind every tool the agent can call.
//!
//! Dispatch is strict: inputs are validated against the declared schema
//! before the executor runs, so a rejected action never mutates state.
//! Failures split by criticality. A critical tool's failure is reported
//! plainly and counted by the loop's halt policy; an auxiliary tool's
//! failure becomes a `Warning: ` observation and the run moves on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::agent::{ActionRequest, AgentState, Outcome, RunStatus};
use crate::arxiv;
use crate::dataset::{self, Dataset};
use crate::eqgen::{
    self, EqGenError, EquationCard, EquationSource, GeneratedFunction, GenerationOptions,
};
use crate::expr;
use crate::fit::{self, FitOptions, ParamModel};
use crate::llm::{ChatBackend, ChatConfig};
use crate::numfmt::sig4;
use crate::region::{self, RegionOptions, RegionSelection};
use crate::report::{self, metrics_line, params_line, unit_suffix};
use crate::task::{TaskConfig, TaskKind};

/// Fallback model id for freshly built contexts; override per run.
pub const DEFAULT_MODEL_ID: &str = "gpt-5";

/// Critical tools gate progress (no data, no equation, no fit means no
/// result); auxiliary tools only enrich it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Essential,
    Auxiliary,
}

/// JSON value kinds accepted in tool inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    String,
    Number,
    Integer,
    Boolean,
    Object,
    Array,
}

impl FieldType {
    pub fn name(&self) -> &'static str {
        match self {
            FieldType::String => "string",
            FieldType::Number => "number",
            FieldType::Integer => "integer",
            FieldType::Boolean => "boolean",
            FieldType::Object => "object",
            FieldType::Array => "array",
        }
    }

    pub fn matches(&self, v: &Value) -> bool {
        match self {
            FieldType::String => v.is_string(),
            FieldType::Number => v.is_number(),
            FieldType::Integer => v.is_i64() || v.is_u64(),
            FieldType::Boolean => v.is_boolean(),
            FieldType::Object => v.is_object(),
            FieldType::Array => v.is_array(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    pub field_type: FieldType,
    pub required: bool,
}

impl FieldSpec {
    pub fn required(field_type: FieldType) -> FieldSpec {
        FieldSpec {
            field_type,
            required: true,
        }
    }

    pub fn optional(field_type: FieldType) -> FieldSpec {
        FieldSpec {
            field_type,
            required: false,
        }
    }
}

/// An executor failure. `halt` lets a tool direct the loop to a specific
/// terminal status (equation generation exhausting its attempts); plain
/// failures leave halting to the loop's consecutive-failure policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolFailure {
    pub message: String,
    pub halt: Option<RunStatus>,
}

impl From<String> for ToolFailure {
    fn from(message: String) -> ToolFailure {
        ToolFailure {
            message,
            halt: None,
        }
    }
}

impl From<&str> for ToolFailure {
    fn from(message: &str) -> ToolFailure {
        ToolFailure {
            message: message.to_owned(),
            halt: None,
        }
    }
}

pub type Executor =
    fn(&Map<String, Value>, &mut AgentState, &mut RunContext) -> Result<String, ToolFailure>;

/// A registered tool: identity, prompt-facing description, input contract,
/// and behavior. `prefix_fields` admit families of numeric fields such as
/// `initial_<param>` whose exact names depend on the generated function.
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub input_schema: Vec<(&'static str, FieldSpec)>,
    pub prefix_fields: Vec<(&'static str, FieldType)>,
    pub criticality: Criticality,
    pub executor: Executor,
}

impl ToolSpec {
    /// Schema summary as shown in prompts, e.g.
    /// `{"filename": string (required)}` or `{"initial_*": number}`.
    pub fn schema_render(&self) -> String {
        let mut parts = Vec::new();
        for (name, fs) in &self.input_schema {
            let mut s = format!("\"{}\": {}", name, fs.field_type.name());
            if fs.required {
                s.push_str(" (required)");
            }
            parts.push(s);
        }
        for (prefix, ft) in &self.prefix_fields {
            parts.push(format!("\"{}*\": {}", prefix, ft.name()));
        }
        format!("{{{}}}", parts.join(", "))
    }

    /// Checks `input` against the schema, returning every violation:
    /// missing required fields, type mismatches, and unknown fields
    /// (anything not declared and not matching a declared prefix).
    pub fn validate_input(&self, input: &Map<String, Value>) -> Vec<String> {
        let mut violations = Vec::new();
        for (name, fs) in &self.input_schema {
            if fs.required && !input.contains_key(*name) {
                violations.push(format!("missing required field `{name}`"));
            }
        }
        for (key, value) in input {
            if let Some((_, fs)) = self.input_schema.iter().find(|(n, _)| n == key) {
                if !fs.field_type.matches(value) {
                    violations.push(format!(
                        "field `{key}` must be {}",
                        fs.field_type.name()
                    ));
                }
            } else if let Some((_, ft)) = self
                .prefix_fields
                .iter()
                .find(|(p, _)| key.starts_with(p) && key.len() > p.len())
            {
                if !ft.matches(value) {
                    violations.push(format!("field `{key}` must be {}", ft.name()));
                }
            } else {
                violations.push(format!("unknown field `{key}`"));
            }
        }
        violations
    }
}

/// Everything executors need beyond agent state: the task definition, the
/// LLM channel, filesystem targets, and fit/selection knobs.
pub struct RunContext {
    pub task: TaskConfig,
    pub chat: ChatConfig,
    pub backend: Box<dyn ChatBackend>,
    pub out_dir: PathBuf,
    /// Fallback data file when the agent's `filename` does not exist.
    pub data_path: Option<PathBuf>,
    pub x_column: Option<String>,
    pub y_column: Option<String>,
    /// Extra attempts for critical operations; total tries = retries + 1.
    pub retries: usize,
    pub band_factor: f64,
    pub region_options: RegionOptions,
    /// Manual override: auto region selection uses these bounds instead.
    pub region_bounds: Option<(f64, f64)>,
    pub fit_options: FitOptions,
}

impl RunContext {
    pub fn new(task: TaskConfig, backend: Box<dyn ChatBackend>, out_dir: PathBuf) -> RunContext {
        let chat = ChatConfig::new(DEFAULT_MODEL_ID, &task.system_prompt);
        let fit_options = FitOptions {
            fit_space: task.fit_space,
            ..FitOptions::default()
        };
        RunContext {
            task,
            chat,
            backend,
            out_dir,
            data_path: None,
            x_column: None,
            y_column: None,
            retries: eqgen::DEFAULT_RETRIES,
            band_factor: eqgen::DEFAULT_BAND_FACTOR,
            region_options: RegionOptions::default(),
            region_bounds: None,
            fit_options,
        }
    }
}

/// Outcome of dispatching one action.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub observation: String,
    pub outcome: Outcome,
    pub halt: Option<RunStatus>,
}

impl DispatchResult {
    fn error(observation: String) -> DispatchResult {
        DispatchResult {
            observation,
            outcome: Outcome::ToolError,
            halt: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("duplicate tool `{0}`")]
    Duplicate(String),
}

/// Ordered tool collection; registration order is prompt order.
#[derive(Default)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
}

impl ToolRegistry {
    pub fn new() -> ToolRegistry {
        ToolRegistry { tools: Vec::new() }
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), ToolError> {
        if self.tools.iter().any(|t| t.name == spec.name) {
            return Err(ToolError::Duplicate(spec.name.to_owned()));
        }
        self.tools.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.tools.iter().map(|t| t.name).collect()
    }

    /// One `- name: description Input schema: {...}` line per tool, in
    /// registration order, newline-terminated.
    pub fn render_tool_list(&self) -> String {
        let mut s = String::new();
        for t in &self.tools {
            s.push_str(&format!(
                "- {}: {} Input schema: {}\n",
                t.name,
                t.description,
                t.schema_render()
            ));
        }
        s
    }

    /// Validates and runs one action. State is untouched unless the input
    /// passes validation; auxiliary failures come back with a `Warning: `
    /// prefix so transcripts distinguish them from blocking errors.
    pub fn dispatch(
        &self,
        action: &ActionRequest,
        state: &mut AgentState,
        ctx: &mut RunContext,
    ) -> DispatchResult {
        let spec = match self.get(&action.tool) {
            Some(s) => s,
            None => return DispatchResult::error(format!("unknown tool: {}", action.tool)),
        };
        let input = match action.input.as_object() {
            Some(m) => m,
            None => {
                return DispatchResult::error(format!(
                    "invalid input for {}: input must be a JSON object",
                    action.tool
                ))
            }
        };
        let violations = spec.validate_input(input);
        if !violations.is_empty() {
            return DispatchResult::error(format!(
                "invalid input for {}: {}",
                action.tool,
                violations.join("; ")
            ));
        }
        match (spec.executor)(input, state, ctx) {
            Ok(observation) => DispatchResult {
                observation,
                outcome: Outcome::Ok,
                halt: None,
            },
            Err(failure) => {
                let observation = match spec.criticality {
                    Criticality::Essential => failure.message,
                    Criticality::Auxiliary => format!("Warning: {}", failure.message),
                };
                DispatchResult {
                    observation,
                    outcome: Outcome::ToolError,
                    halt: failure.halt,
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Shared executor helpers.

fn require_data(state: &AgentState) -> Result<&Dataset, ToolFailure> {
    state
        .data
        .as_ref()
        .ok_or_else(|| ToolFailure::from("no data loaded; call load_data first"))
}

fn require_function(state: &AgentState) -> Result<&GeneratedFunction, ToolFailure> {
    state
        .function
        .as_ref()
        .ok_or_else(|| ToolFailure::from("no function generated; call generate_function first"))
}

/// The dataset a fit or validation should see: the selected region when one
/// exists, otherwise everything.
fn fit_scope(state: &AgentState) -> Result<Dataset, ToolFailure> {
    let data = require_data(state)?;
    Ok(match &state.region {
        Some(r) => r.subset(data),
        None => data.clone(),
    })
}

fn opt_number(input: &Map<String, Value>, key: &str) -> Option<f64> {
    input.get(key).and_then(Value::as_f64)
}

fn generation_options(
    input: &Map<String, Value>,
    ctx: &RunContext,
) -> Result<GenerationOptions, ToolFailure> {
    let mut test_params = BTreeMap::new();
    if let Some(obj) = input.get("test_params").and_then(Value::as_object) {
        for (name, value) in obj {
            let v = value
                .as_f64()
                .ok_or_else(|| format!("test_params value `{name}` must be a number"))?;
            test_params.insert(name.clone(), v);
        }
    }
    Ok(GenerationOptions {
        retries: ctx.retries,
        band_factor: opt_number(input, "band_factor").unwrap_or(ctx.band_factor),
        test_params,
    })
}

fn map_generation_error(e: EqGenError) -> ToolFailure {
    let halt = matches!(e, EqGenError::NoEquation { .. }).then_some(RunStatus::HaltedNoEquation);
    ToolFailure {
        message: e.to_string(),
        halt,
    }
}

fn region_observation(
    sel: &RegionSelection,
    data: &Dataset,
    opts: &RegionOptions,
    label: &str,
    show_band: bool,
) -> String {
    let mut s = format!(
        "{label}: {} range [{}, {}]{}, {} points out of {}",
        data.x_name,
        sig4(sel.x_min),
        sig4(sel.x_max),
        unit_suffix(&data.x_unit),
        sel.points_selected(),
        sel.points_total
    );
    if let Some((lo, hi)) = sel.slope_range {
        s.push_str(&format!(
            "\nDetected slope range: [{}, {}]",
            sig4(lo),
            sig4(hi)
        ));
        if show_band {
            s.push_str(&format!(
                " (acceptable range: {}-{})",
                opts.band.0, opts.band.1
            ));
        }
    }
    s
}

/// Replaces parameter identifiers in a source string with fitted values at
/// token boundaries, so `k` never clobbers the `k` inside `dK`.
pub fn instantiate_source(dsl: &str, values: &BTreeMap<String, f64>) -> String {
    let chars: Vec<char> = dsl.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let ident: String = chars[start..i].iter().collect();
            match values.get(&ident) {
                Some(v) => out.push_str(&sig4(*v)),
                None => out.push_str(&ident),
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

/// The finalize observation: headline equation with fitted numbers, fit
/// quality, artifact notes, and equation provenance.
pub fn finalize_observation(state: &AgentState, ctx: &RunContext) -> String {
    let mut lines = Vec::new();
    match (&state.function, &state.model) {
        (Some(f), Some(m)) => {
            let phrase = match f.card.source {
                EquationSource::ParametricRecall => "from LLM knowledge",
                EquationSource::LiteratureExtraction => "from literature extraction",
                EquationSource::StrainModification => "from strain modification",
            };
            let y_name = state
                .data
                .as_ref()
                .map(|d| d.y_name.clone())
                .unwrap_or_else(|| "y".to_owned());
            lines.push(format!(
                "Task complete! Final model ({phrase}): {y_name} = {}",
                instantiate_source(&f.dsl_source, &m.params)
            ));
        }
        _ => lines.push("Task complete! No fitted model to report.".to_owned()),
    }
    if let Some(v) = &state.validation {
        let unit = state
            .data
            .as_ref()
            .map(|d| unit_suffix(&d.y_unit))
            .unwrap_or_default();
        let mut line = format!("R2 = {}, RMSE = {}{}", sig4(v.r2), sig4(v.rmse), unit);
        if let Some(rl) = v.r2_log {
            line.push_str(&format!(", R2(log) = {}", sig4(rl)));
        }
        lines.push(line);
    }
    if ctx.out_dir.join("fig_fit.svg").exists() {
        lines.push("3 plots created: original space, linearized space, and residuals".to_owned());
    }
    let source = match state.function.as_ref().map(|f| f.card.source) {
        Some(EquationSource::ParametricRecall) => "LLM knowledge",
        Some(EquationSource::LiteratureExtraction) => "literature extraction",
        Some(EquationSource::StrainModification) => "strain-modified base equation",
        None => "none",
    };
    lines.push(format!("Equation source: {source}"));
    lines.join("\n")
}

// ---------------------------------------------------------------------------
// Executors.

fn exec_load_data(
    input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let filename = input["filename"].as_str().expect("schema-checked string");
    let named = Path::new(filename);
    let path: PathBuf = if named.exists() {
        named.to_path_buf()
    } else if let Some(fallback) = &ctx.data_path {
        fallback.clone()
    } else {
        return Err(format!("cannot read `{filename}`: file not found").into());
    };
    let x_col = ctx.x_column.clone().unwrap_or_else(|| ctx.task.x_column.clone());
    let y_col = ctx.y_column.clone().unwrap_or_else(|| ctx.task.y_column.clone());
    let data = dataset::load_csv(&path, &x_col, &y_col).map_err(|e| e.to_string())?;
    let (xlo, xhi) = data.x_range();
    let (ylo, yhi) = data.y_range();
    let obs = format!(
        "Loaded {} data points. {} range: [{}, {}]{}, {} range: [{}, {}]{}",
        data.n,
        data.x_name,
        sig4(xlo),
        sig4(xhi),
        unit_suffix(&data.x_unit),
        data.y_name,
        sig4(ylo),
        sig4(yhi),
        unit_suffix(&data.y_unit)
    );
    // New data invalidates any selection or fit made against the old rows;
    // a recalled equation is knowledge, not data, so it survives.
    state.data = Some(data);
    state.region = None;
    state.model = None;
    state.validation = None;
    Ok(obs)
}

fn exec_generate_function(
    input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let data = require_data(state)?.clone();
    let opts = generation_options(input, ctx)?;
    let generated = eqgen::generate_function(
        &ctx.task.context,
        &ctx.task.variable,
        &data,
        &ctx.chat,
        ctx.backend.as_mut(),
        &opts,
    )
    .map_err(map_generation_error)?;
    let obs = format!(
        "LLM generated: {}\nBased on equation: {}",
        generated.function.dsl_source, generated.function.card.equation
    );
    state.function = Some(generated.function);
    state.model = None;
    state.validation = None;
    Ok(obs)
}

fn exec_generate_strain_function(
    input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let base = ctx
        .task
        .base_equation
        .clone()
        .ok_or_else(|| ToolFailure::from("task has no base equation to modify"))?;
    let data = require_data(state)?.clone();
    let opts = generation_options(input, ctx)?;
    let generated = eqgen::generate_strain_function(
        &base,
        &ctx.task.context,
        &data,
        &ctx.chat,
        ctx.backend.as_mut(),
        &opts,
    )
    .map_err(map_generation_error)?;
    let obs = format!(
        "LLM generated: {}\nBased on equation: {}",
        generated.function.dsl_source, generated.function.card.equation
    );
    state.function = Some(generated.function);
    state.model = None;
    state.validation = None;
    Ok(obs)
}

fn exec_fit_model(
    input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let f = require_function(state)?.clone();
    let data = fit_scope(state)?;
    let mut init = BTreeMap::new();
    for (key, value) in input {
        if let Some(name) = key.strip_prefix("initial_") {
            let v = value
                .as_f64()
                .ok_or_else(|| format!("field `{key}` must be number"))?;
            init.insert(name.to_owned(), v);
        }
    }
    for p in &f.params {
        if !init.contains_key(p) {
            return Err(format!(
                "missing initial value for parameter `{p}` (expected field `initial_{p}`)"
            )
            .into());
        }
    }
    for name in init.keys() {
        if !f.params.contains(name) {
            return Err(format!("unknown parameter `{name}` in initial values").into());
        }
    }
    let model = ParamModel::with_params(f.expr.clone(), &f.variable, f.params.clone())
        .map_err(|e| e.to_string())?;
    let result = fit::fit_lm(&model, &data, &init, &ctx.fit_options).map_err(|e| e.to_string())?;
    let obs = format!("Fit complete: {}", params_line(&f.params, &result));
    state.model = Some(result);
    state.validation = None;
    Ok(obs)
}

fn exec_test_function(
    input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let f = require_function(state)?;
    let data = require_data(state)?;
    let band_factor = opt_number(input, "band_factor").unwrap_or(ctx.band_factor);
    let mut test_params = BTreeMap::new();
    if let Some(values) = input.get("test_params").and_then(Value::as_array) {
        if values.len() > f.params.len() {
            return Err(format!(
                "expected at most {} test value(s), one per parameter, got {}",
                f.params.len(),
                values.len()
            )
            .into());
        }
        for (name, value) in f.params.iter().zip(values) {
            let v = value
                .as_f64()
                .ok_or_else(|| ToolFailure::from("test_params values must be numbers"))?;
            test_params.insert(name.clone(), v);
        }
    }
    let report = eqgen::test_function(
        &f.expr,
        &f.variable,
        &f.params,
        data,
        &test_params,
        band_factor,
    );
    if report.passed {
        Ok(format!(
            "Function test passed: {} probes within band [{}, {}]",
            report.probes.len(),
            sig4(report.band.0),
            sig4(report.band.1)
        ))
    } else {
        Err(format!("function test failed: {}", report.failures.join("; ")).into())
    }
}

fn exec_validate_fit(
    _input: &Map<String, Value>,
    state: &mut AgentState,
    _ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let f = require_function(state)?;
    let fit_result = state
        .model
        .as_ref()
        .ok_or_else(|| ToolFailure::from("no fitted model; call fit_model first"))?
        .clone();
    let model = ParamModel::with_params(f.expr.clone(), &f.variable, f.params.clone())
        .map_err(|e| e.to_string())?;
    let data = fit_scope(state)?;
    let metrics = fit::validate(&model, &fit_result, &data).map_err(|e| e.to_string())?;
    let obs = format!("Validation: {}", metrics_line(&metrics, &data.y_unit));
    state.validation = Some(metrics);
    Ok(obs)
}

fn exec_auto_select_region(
    _input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let data = require_data(state)?;
    let (sel, label, show_band) = match ctx.region_bounds {
        Some((lo, hi)) => (
            region::manual_region(data, lo, hi).map_err(|e| e.to_string())?,
            "Selected region",
            false,
        ),
        None => (
            region::auto_select_region(data, &ctx.region_options).map_err(|e| e.to_string())?,
            "Auto-selected Region II",
            true,
        ),
    };
    let obs = region_observation(&sel, data, &ctx.region_options, label, show_band);
    state.region = Some(sel);
    Ok(obs)
}

fn exec_select_region(
    input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let data = require_data(state)?;
    let lo = input["x_min"].as_f64().expect("schema-checked number");
    let hi = input["x_max"].as_f64().expect("schema-checked number");
    let sel = region::manual_region(data, lo, hi).map_err(|e| e.to_string())?;
    let obs = region_observation(&sel, data, &ctx.region_options, "Selected region", false);
    state.region = Some(sel);
    Ok(obs)
}

fn exec_calc_initial(
    _input: &Map<String, Value>,
    state: &mut AgentState,
    _ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let data = fit_scope(state)?;
    let (c, m) = fit::loglog_linearize(&data).map_err(|e| e.to_string())?;
    // Name the estimates after the function's parameters when there are
    // exactly two (amplitude first by construction of power-law sources);
    // otherwise fall back to the conventional C and m.
    let (n0, n1) = match &state.function {
        Some(f) if f.params.len() == 2 => (f.params[0].clone(), f.params[1].clone()),
        _ => ("C".to_owned(), "m".to_owned()),
    };
    Ok(format!(
        "Initial estimates: {n0} = {}, {n1} = {}",
        sig4(c),
        sig4(m)
    ))
}

fn exec_create_plots(
    _input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let data = require_data(state)?;
    let f = require_function(state)?;
    let fit_result = state
        .model
        .as_ref()
        .ok_or_else(|| ToolFailure::from("no fitted model; call fit_model first"))?;
    report::emit_plots(data, f, fit_result, state.region.as_ref(), &ctx.out_dir)
        .map_err(ToolFailure::from)?;
    Ok("Created 3 figures: fig_fit.svg, fig_linearized.svg, fig_residuals.svg".to_owned())
}

fn exec_export_results(
    input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let format_name = input["format"].as_str().expect("schema-checked string");
    let filename = input["filename"].as_str().expect("schema-checked string");
    if state.model.is_none() {
        return Err(ToolFailure::from("no fitted model to export"));
    }
    let with_ext = if Path::new(filename).extension().is_some() {
        filename.to_owned()
    } else {
        let ext = match format_name {
            "json" => "json",
            "csv" => "csv",
            "table" => "txt",
            other => {
                return Err(format!(
                    "unknown format `{other}` (expected json, csv, or table)"
                )
                .into())
            }
        };
        format!("{filename}.{ext}")
    };
    let path = ctx.out_dir.join(&with_ext);
    report::export_results(state, &ctx.task, format_name, &path).map_err(ToolFailure::from)?;
    Ok(format!("Results exported to {filename}"))
}

fn exec_extract_text(
    input: &Map<String, Value>,
    _state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let default_name = format!(
        "arXiv_{}.pdf",
        ctx.task.default_paper_id.as_deref().unwrap_or("paper")
    );
    let path = input
        .get("filename")
        .and_then(Value::as_str)
        .unwrap_or(&default_name);
    Ok(arxiv::extract_text_stub(path))
}

fn exec_extract_equation_html(
    input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let data = require_data(state)?.clone();
    let paper_id = input
        .get("paper_id")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .or_else(|| ctx.task.default_paper_id.clone())
        .ok_or_else(|| ToolFailure::from("no paper id given and the task has no default"))?;
    let keywords: Vec<&str> = ctx.task.keywords.iter().map(String::as_str).collect();
    let page = arxiv::fetch_arxiv_html(&ctx.task.mirror_base, &paper_id, &keywords)
        .map_err(|e| e.to_string())?;
    let extracted = arxiv::extract_equation_from_html(
        &page.window,
        &ctx.task.context,
        &page.url,
        &ctx.chat,
        ctx.backend.as_mut(),
    )
    .map_err(|e| e.to_string())?;

    // LaTeX to DSL, then specialize: pin physical constants, rewrite the
    // remaining symbols onto the task variable, and re-read the canonical
    // print so the stored expression round-trips from its source text.
    let variable = ctx.task.variable.clone();
    let dsl0 = arxiv::latex_to_dsl(&extracted.latex, &variable).map_err(|e| e.to_string())?;
    let raw = expr::parse(&dsl0, &[variable.as_str()]).map_err(|e| e.to_string())?;
    let pinned = raw.substitute_params(&ctx.task.constants);
    let mut rewrites = BTreeMap::new();
    for (name, source) in &ctx.task.substitutions {
        let body = expr::parse(source, &[variable.as_str()])
            .map_err(|e| format!("bad substitution for `{name}`: {e}"))?;
        rewrites.insert(name.clone(), body);
    }
    let rewritten = pinned.substitute_param_exprs(&rewrites);
    let (vars, _) = rewritten.free_names();
    if let Some(stray) = vars.iter().find(|v| **v != variable) {
        return Err(format!("extracted equation uses unexpected symbol `{stray}`").into());
    }
    let dsl_source = rewritten.print_canonical();
    let parsed = expr::parse(&dsl_source, &[variable.as_str()]).map_err(|e| e.to_string())?;
    let params = parsed.params_in_order();

    let test_report = eqgen::test_function(
        &parsed,
        &variable,
        &params,
        &data,
        &BTreeMap::new(),
        ctx.band_factor,
    );
    if !test_report.passed {
        return Err(format!(
            "extracted equation failed sanity testing: {}",
            test_report.failures.join("; ")
        )
        .into());
    }
    let units = if ctx.task.extraction_units.is_empty() {
        "as published".to_owned()
    } else {
        ctx.task.extraction_units.clone()
    };
    let card = EquationCard::new(
        dsl_source.clone(),
        params
            .iter()
            .map(|p| (p.clone(), "parameter extracted from the source equation".to_owned()))
            .collect(),
        units,
        EquationSource::LiteratureExtraction,
    )
    .map_err(|e| e.to_string())?;
    let obs = format!(
        "Extracted LaTeX from HTML (confidence {}/{}): {}",
        extracted.confidence.0, extracted.confidence.1, extracted.latex
    );
    state.function = Some(GeneratedFunction {
        card,
        dsl_source,
        expr: parsed,
        variable,
        params,
        test_report,
    });
    state.model = None;
    state.validation = None;
    Ok(obs)
}

fn exec_finalize(
    _input: &Map<String, Value>,
    state: &mut AgentState,
    ctx: &mut RunContext,
) -> Result<String, ToolFailure> {
    let obs = finalize_observation(state, ctx);
    state.status = RunStatus::Done;
    Ok(obs)
}

// ---------------------------------------------------------------------------
// Registry assembly.

fn core_specs() -> Vec<ToolSpec> {
    vec![
        ToolSpec {
            name: "load_data",
            description: "Load experimental data",
            input_schema: vec![("filename", FieldSpec::required(FieldType::String))],
            prefix_fields: vec![],
            criticality: Criticality::Essential,
            executor: exec_load_data,
        },
        ToolSpec {
            name: "generate_function",
            description: "Generate physical equation from LLM's knowledge",
            input_schema: vec![
                ("test_params", FieldSpec::optional(FieldType::Object)),
                ("band_factor", FieldSpec::optional(FieldType::Number)),
            ],
            prefix_fields: vec![],
            criticality: Criticality::Essential,
            executor: exec_generate_function,
        },
        ToolSpec {
            name: "fit_model",
            description: "Perform nonlinear least squares fitting",
            input_schema: vec![],
            prefix_fields: vec![("initial_", FieldType::Number)],
            criticality: Criticality::Essential,
            executor: exec_fit_model,
        },
        ToolSpec {
            name: "test_function",
            description: "Validate generated function with sample inputs",
            input_schema: vec![
                ("test_params", FieldSpec::optional(FieldType::Array)),
                ("band_factor", FieldSpec::optional(FieldType::Number)),
            ],
            prefix_fields: vec![],
            criticality: Criticality::Auxiliary,
            executor: exec_test_function,
        },
        ToolSpec {
            name: "validate_fit",
            description: "Calculate goodness-of-fit metrics",
            input_schema: vec![],
            prefix_fields: vec![],
            criticality: Criticality::Auxiliary,
            executor: exec_validate_fit,
        },
        ToolSpec {
            name: "create_plots",
            description: "Generate visualizations",
            input_schema: vec![],
            prefix_fields: vec![],
            criticality: Criticality::Auxiliary,
            executor: exec_create_plots,
        },
        ToolSpec {
            name: "export_results",
            description: "Save results to file",
            input_schema: vec![
                ("format", FieldSpec::required(FieldType::String)),
                ("filename", FieldSpec::required(FieldType::String)),
            ],
            prefix_fields: vec![],
            criticality: Criticality::Auxiliary,
            executor: exec_export_results,
        },
        ToolSpec {
            name: "finalize",
            description: "Complete the task and report results",
            input_schema: vec![],
            prefix_fields: vec![],
            criticality: Criticality::Essential,
            executor: exec_finalize,
        },
    ]
}

fn region_specs() -> Vec<ToolSpec> {
    vec![
        ToolSpec {
            name: "auto_select_region",
            description: "Automatically select the stable power-law region of the data",
            input_schema: vec![],
            prefix_fields: vec![],
            criticality: Criticality::Auxiliary,
            executor: exec_auto_select_region,
        },
        ToolSpec {
            name: "select_region",
            description: "Select a data region by x bounds",
            input_schema: vec![
                ("x_min", FieldSpec::required(FieldType::Number)),
                ("x_max", FieldSpec::required(FieldType::Number)),
            ],
            prefix_fields: vec![],
            criticality: Criticality::Auxiliary,
            executor: exec_select_region,
        },
        ToolSpec {
            name: "calc_initial",
            description: "Estimate initial parameters from a log-log linearization",
            input_schema: vec![],
            prefix_fields: vec![],
            criticality: Criticality::Auxiliary,
            executor: exec_calc_initial,
        },
    ]
}

/// Builds the tool set for a task: the shared core in fixed order, then the
/// task's extra tools.
pub fn registry_for(kind: TaskKind) -> ToolRegistry {
    let mut registry = ToolRegistry::new();
    for spec in core_specs() {
        registry.register(spec).expect("core names are unique");
    }
    let extras: Vec<ToolSpec> = match kind {
        TaskKind::Paris | TaskKind::Generic => region_specs(),
        TaskKind::KuhnExtract => vec![
            ToolSpec {
                name: "extract_text",
                description: "Extract text from a local PDF",
                input_schema: vec![("filename", FieldSpec::optional(FieldType::String))],
                prefix_fields: vec![],
                criticality: Criticality::Auxiliary,
                executor: exec_extract_text,
            },
            ToolSpec {
                name: "extract_equation_html",
                description: "Fetch the paper HTML and extract the target equation as LaTeX",
                input_schema: vec![("paper_id", FieldSpec::optional(FieldType::String))],
                prefix_fields: vec![],
                criticality: Criticality::Auxiliary,
                executor: exec_extract_equation_html,
            },
        ],
        TaskKind::StrainKuhn => vec![ToolSpec {
            name: "generate_strain_function",
            description: "Modify the base equation for strain effects",
            input_schema: vec![
                ("test_params", FieldSpec::optional(FieldType::Object)),
                ("band_factor", FieldSpec::optional(FieldType::Number)),
            ],
            prefix_fields: vec![],
            criticality: Criticality::Essential,
            executor: exec_generate_strain_function,
        }],
        TaskKind::HallPetch | TaskKind::KuhnRecall => vec![],
    };
    for spec in extras {
        registry.register(spec).expect("extra names are unique");
    }
    registry
}
