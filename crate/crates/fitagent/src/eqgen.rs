//! Symbolic function generation: recall an equation from the model's own
//! knowledge, convert it to the fitting DSL, and probe-test the result.
//!
//! The pipeline has no fallback. When every attempt fails, the caller gets
//! [`EqGenError::NoEquation`] and nothing else; no built-in equation ever
//! leaves this module. A failure at any step (recall, codegen, testing)
//! restarts the whole pipeline, up to a bounded number of attempts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::expr::{self, Bindings, Expr};
use crate::llm::{ChatBackend, ChatConfig, LlmError};

pub const RECALL_PROMPT: &str = include_str!("../prompts/recall.txt");
pub const CODEGEN_PROMPT: &str = include_str!("../prompts/codegen.txt");
pub const STRAIN_MODIFY_PROMPT: &str = include_str!("../prompts/strain_modify.txt");

/// Probe outputs must lie within [min y / factor, max y * factor].
pub const DEFAULT_BAND_FACTOR: f64 = 10.0;
/// Extra whole-pipeline attempts after the first failure.
pub const DEFAULT_RETRIES: usize = 2;
/// Probe points per test, endpoints included.
pub const PROBE_COUNT: usize = 5;
/// The strain task's independent variable.
pub const STRAIN_VARIABLE: &str = "eps";

/// Where an equation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationSource {
    ParametricRecall,
    LiteratureExtraction,
    StrainModification,
}

/// A recalled or extracted equation with its parameter documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationCard {
    /// Human-readable equation text, e.g. `sigma = sigma0 + k * d^(-1/2)`.
    pub equation: String,
    /// Fit parameter name and prose meaning, in declaration order.
    pub parameters: Vec<(String, String)>,
    /// Prose unit notes.
    pub units: String,
    pub source: EquationSource,
}

impl EquationCard {
    pub fn new(
        equation: impl Into<String>,
        parameters: Vec<(String, String)>,
        units: impl Into<String>,
        source: EquationSource,
    ) -> Result<EquationCard, EqGenError> {
        let equation = equation.into();
        if equation.trim().is_empty() {
            return Err(EqGenError::BadCard("equation text is empty".into()));
        }
        for (name, _) in &parameters {
            if name.is_empty() {
                return Err(EqGenError::BadCard("empty parameter name".into()));
            }
            if !equation.contains(name.as_str()) {
                return Err(EqGenError::BadCard(format!(
                    "parameter `{name}` is not named in the equation text"
                )));
            }
        }
        Ok(EquationCard { equation, parameters, units: units.into(), source })
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameters.iter().map(|(n, _)| n.clone()).collect()
    }
}

/// One evaluation of the candidate function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestProbe {
    pub x: f64,
    pub params: BTreeMap<String, f64>,
    /// NaN when evaluation itself failed.
    pub y: f64,
    pub within_band: bool,
}

/// Outcome of probe-testing a candidate function. Failures are data, not
/// errors: a failed report feeds the retry policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub passed: bool,
    pub probes: Vec<TestProbe>,
    /// Acceptance band in y-units: [min y / factor, max y * factor].
    pub band: (f64, f64),
    pub failures: Vec<String>,
}

/// A fully validated candidate model. Invariants: `expr` is exactly
/// `parse(dsl_source)` and `test_report.passed` is true.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedFunction {
    pub card: EquationCard,
    pub dsl_source: String,
    pub expr: Expr,
    pub variable: String,
    /// Parameter names in first-appearance order within `expr`.
    pub params: Vec<String>,
    pub test_report: TestReport,
}

/// Successful generation plus the per-attempt log (failed attempts followed
/// by one success line), so traces show how many tries it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub function: GeneratedFunction,
    pub attempt_log: Vec<String>,
}

#[derive(Debug, Error)]
pub enum EqGenError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("response missing mandated marker {0}")]
    MissingMarker(&'static str),
    #[error("equation card invalid: {0}")]
    BadCard(String),
    #[error("generated code does not parse: {0}")]
    CodeParse(String),
    #[error("generated code uses parameters {code:?} but the card declares {card:?}")]
    ParamSetMismatch { card: Vec<String>, code: Vec<String> },
    #[error("no equation after {attempts} attempts: {}", log.join("; "))]
    NoEquation { attempts: usize, log: Vec<String> },
}

/// Options for the whole-pipeline driver.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOptions {
    /// Extra attempts after the first; total attempts = retries + 1.
    pub retries: usize,
    pub band_factor: f64,
    /// Probe parameter values; names not listed default to 1.0.
    pub test_params: BTreeMap<String, f64>,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            retries: DEFAULT_RETRIES,
            band_factor: DEFAULT_BAND_FACTOR,
            test_params: BTreeMap::new(),
        }
    }
}

/// Parses a marker-structured response (`EQUATION:` / `PARAMETERS:` /
/// `UNITS:`) into a card. Parameter lines are `name: prose`; lines without a
/// colon are ignored.
pub fn parse_card_response(
    text: &str,
    source: EquationSource,
) -> Result<EquationCard, EqGenError> {
    let eq_pos = text.find("EQUATION:").ok_or(EqGenError::MissingMarker("EQUATION:"))?;
    let par_pos = text.find("PARAMETERS:").ok_or(EqGenError::MissingMarker("PARAMETERS:"))?;
    let unit_pos = text.find("UNITS:").ok_or(EqGenError::MissingMarker("UNITS:"))?;
    if !(eq_pos < par_pos && par_pos < unit_pos) {
        return Err(EqGenError::BadCard("markers out of order".into()));
    }
    let one_line = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    let equation = one_line(&text[eq_pos + "EQUATION:".len()..par_pos]);
    let mut parameters = Vec::new();
    for line in text[par_pos + "PARAMETERS:".len()..unit_pos].lines() {
        if let Some((name, desc)) = line.split_once(':') {
            let name = name.trim();
            if !name.is_empty() {
                parameters.push((name.to_string(), desc.trim().to_string()));
            }
        }
    }
    let units = one_line(&text[unit_pos + "UNITS:".len()..]);
    EquationCard::new(equation, parameters, units, source)
}

/// Step 1: one knowledge-only prompt, no data values, parsed by markers.
pub fn recall_equation(
    context: &str,
    cfg: &ChatConfig,
    backend: &mut dyn ChatBackend,
) -> Result<EquationCard, EqGenError> {
    let prompt = RECALL_PROMPT.replace("{context}", context);
    let response = backend.complete(&cfg.request(prompt)?)?;
    parse_card_response(&response.content, EquationSource::ParametricRecall)
}

/// Strain-task step 1: the base equation is supplied and the model is asked
/// for a strain modification instead of a recall.
pub fn modify_equation_for_strain(
    base_equation: &str,
    context: &str,
    cfg: &ChatConfig,
    backend: &mut dyn ChatBackend,
) -> Result<EquationCard, EqGenError> {
    let prompt = STRAIN_MODIFY_PROMPT
        .replace("{base_equation}", base_equation)
        .replace("{context}", context);
    let response = backend.complete(&cfg.request(prompt)?)?;
    parse_card_response(&response.content, EquationSource::StrainModification)
}

/// Pulls the expression text out of a codegen response: the contents of the
/// first code fence when fences are present, otherwise the whole text. A
/// purely alphabetic first fence line is dropped as a language tag.
pub fn extract_expression(text: &str) -> String {
    let t = text.trim();
    if let Some(start) = t.find("```") {
        let after = &t[start + 3..];
        if let Some(end) = after.find("```") {
            let mut inner = &after[..end];
            if let Some(nl) = inner.find('\n') {
                let first = inner[..nl].trim();
                if !first.is_empty() && first.chars().all(|c| c.is_ascii_alphabetic()) {
                    inner = &inner[nl + 1..];
                }
            }
            return inner.trim().to_string();
        }
    }
    t.to_string()
}

/// Step 2: one codegen prompt stating the DSL grammar, the single variable,
/// and the everything-else-is-a-parameter rule; the reply must parse and use
/// exactly the card's parameter set.
pub fn codegen(
    card: &EquationCard,
    variable: &str,
    cfg: &ChatConfig,
    backend: &mut dyn ChatBackend,
) -> Result<String, EqGenError> {
    let names = card.parameter_names();
    let listed = if names.is_empty() { "(none)".to_string() } else { names.join(", ") };
    let prompt = CODEGEN_PROMPT
        .replace("{equation}", &card.equation)
        .replace("{parameters}", &listed)
        .replace("{variable}", variable);
    let response = backend.complete(&cfg.request(prompt)?)?;
    let source = extract_expression(&response.content);
    let parsed = expr::parse(&source, &[variable])
        .map_err(|e| EqGenError::CodeParse(e.to_string()))?;
    let code_set: BTreeSet<String> = parsed.params_in_order().into_iter().collect();
    let card_set: BTreeSet<String> = names.iter().cloned().collect();
    if code_set != card_set {
        return Err(EqGenError::ParamSetMismatch {
            card: card_set.into_iter().collect(),
            code: code_set.into_iter().collect(),
        });
    }
    Ok(source)
}

/// Probe x values spanning the data range, endpoints included. Log spacing
/// applies only when all x are positive and the range spans more than one
/// decade.
fn probe_points(xmin: f64, xmax: f64) -> Vec<f64> {
    let k = PROBE_COUNT;
    let mut points = Vec::with_capacity(k);
    let log_spaced = xmin > 0.0 && xmax / xmin > 10.0;
    for i in 0..k {
        let t = i as f64 / (k - 1) as f64;
        let x = if log_spaced {
            10f64.powf(xmin.log10() + t * (xmax.log10() - xmin.log10()))
        } else {
            xmin + t * (xmax - xmin)
        };
        points.push(x);
    }
    // Pin the endpoints exactly; powf round-trips can drift in the last ulp.
    points[0] = xmin;
    points[k - 1] = xmax;
    points
}

/// Step 3: evaluates the candidate at 5 probe points and checks the outputs
/// against a plausibility band derived from the observed y range. This is a
/// plausibility gate, not a correctness gate: any finite, in-band output
/// passes. Never errors; failures are recorded in the report.
pub fn test_function(
    expr: &Expr,
    variable: &str,
    params: &[String],
    data: &Dataset,
    test_params: &BTreeMap<String, f64>,
    band_factor: f64,
) -> TestReport {
    let xmin = data.x.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = data.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = data.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let ymax = data.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let band = (ymin / band_factor, ymax * band_factor);

    let values: BTreeMap<String, f64> = params
        .iter()
        .map(|name| (name.clone(), test_params.get(name).copied().unwrap_or(1.0)))
        .collect();

    let mut probes = Vec::new();
    let mut failures = Vec::new();
    for x in probe_points(xmin, xmax) {
        let mut bindings = Bindings::default();
        let _ = bindings.insert_var(variable.to_string(), x);
        for (name, value) in &values {
            let _ = bindings.insert_param(name.clone(), *value);
        }
        let (y, within) = match expr::evaluate(expr, &bindings) {
            Ok(y) => {
                let within = y >= band.0 && y <= band.1;
                if !within {
                    failures.push(format!(
                        "probe x={x}: output {y} outside band [{}, {}]",
                        band.0, band.1
                    ));
                }
                (y, within)
            }
            Err(e) => {
                failures.push(format!("probe x={x}: {e}"));
                (f64::NAN, false)
            }
        };
        probes.push(TestProbe { x, params: values.clone(), y, within_band: within });
    }
    let passed = probes.iter().all(|p| p.y.is_finite() && p.within_band);
    TestReport { passed, probes, band, failures }
}

/// One recall → codegen → test pass.
fn attempt_once(
    step1: &mut dyn FnMut(&mut dyn ChatBackend) -> Result<EquationCard, EqGenError>,
    step1_name: &str,
    variable: &str,
    data: &Dataset,
    cfg: &ChatConfig,
    backend: &mut dyn ChatBackend,
    opts: &GenerationOptions,
) -> Result<GeneratedFunction, String> {
    let card = step1(backend).map_err(|e| format!("{step1_name}: {e}"))?;
    let dsl_source = codegen(&card, variable, cfg, backend).map_err(|e| format!("codegen: {e}"))?;
    // Cannot fail: codegen only returns sources it already parsed.
    let expr = expr::parse(&dsl_source, &[variable]).map_err(|e| format!("codegen: {e}"))?;
    let params = expr.params_in_order();
    let report = test_function(&expr, variable, &params, data, &opts.test_params, opts.band_factor);
    if !report.passed {
        return Err(format!("testing: {}", report.failures.join("; ")));
    }
    Ok(GeneratedFunction {
        card,
        dsl_source,
        expr,
        variable: variable.to_string(),
        params,
        test_report: report,
    })
}

fn drive(
    mut step1: impl FnMut(&mut dyn ChatBackend) -> Result<EquationCard, EqGenError>,
    step1_name: &str,
    variable: &str,
    data: &Dataset,
    cfg: &ChatConfig,
    backend: &mut dyn ChatBackend,
    opts: &GenerationOptions,
) -> Result<Generated, EqGenError> {
    let attempts = opts.retries + 1;
    let mut log = Vec::new();
    for attempt in 1..=attempts {
        match attempt_once(&mut step1, step1_name, variable, data, cfg, backend, opts) {
            Ok(function) => {
                log.push(format!("attempt {attempt}: success"));
                return Ok(Generated { function, attempt_log: log });
            }
            Err(cause) => log.push(format!("attempt {attempt}: {cause}")),
        }
    }
    Err(EqGenError::NoEquation { attempts, log })
}

/// Step 4 driver: retries the whole pipeline and halts with no fallback.
pub fn generate_function(
    context: &str,
    variable: &str,
    data: &Dataset,
    cfg: &ChatConfig,
    backend: &mut dyn ChatBackend,
    opts: &GenerationOptions,
) -> Result<Generated, EqGenError> {
    drive(
        |b| recall_equation(context, cfg, b),
        "recall",
        variable,
        data,
        cfg,
        backend,
        opts,
    )
}

/// Strain-task driver: the recall step is replaced by a modification prompt
/// embedding the supplied base equation; the variable is fixed to `eps`.
pub fn generate_strain_function(
    base_equation: &str,
    context: &str,
    data: &Dataset,
    cfg: &ChatConfig,
    backend: &mut dyn ChatBackend,
    opts: &GenerationOptions,
) -> Result<Generated, EqGenError> {
    drive(
        |b| modify_equation_for_strain(base_equation, context, cfg, b),
        "modify",
        STRAIN_VARIABLE,
        data,
        cfg,
        backend,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatRequest, ChatResponse};
    use crate::physics;
    use crate::synth;
    use std::collections::VecDeque;

    /// Serves canned response texts and keeps the requests it saw.
    struct Scripted {
        responses: VecDeque<String>,
        seen: Vec<ChatRequest>,
    }

    impl Scripted {
        fn new(responses: &[&str]) -> Self {
            Scripted {
                responses: responses.iter().map(|s| s.to_string()).collect(),
                seen: Vec::new(),
            }
        }
    }

    impl ChatBackend for Scripted {
        fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
            self.seen.push(request.clone());
            match self.responses.pop_front() {
                Some(text) => Ok(ChatResponse::text(text)),
                None => Err(LlmError::ReplayExhausted { position: self.seen.len() - 1 }),
            }
        }
        fn id(&self) -> String {
            "scripted".into()
        }
    }

    fn cfg() -> ChatConfig {
        ChatConfig::new("gpt-5", "You are a test agent.")
    }

    const HP_RECALL: &str = "EQUATION: sigma = sigma0 + k * d^(-1/2)\n\
                             PARAMETERS:\n\
                             sigma0: lattice friction stress\n\
                             k: strengthening coefficient\n\
                             UNITS: sigma0 in MPa, k in MPa um^(1/2)";

    #[test]
    fn card_parsing_reads_markers() {
        let card =
            parse_card_response(HP_RECALL, EquationSource::ParametricRecall).unwrap();
        assert_eq!(card.equation, "sigma = sigma0 + k * d^(-1/2)");
        assert_eq!(
            card.parameters,
            vec![
                ("sigma0".to_string(), "lattice friction stress".to_string()),
                ("k".to_string(), "strengthening coefficient".to_string()),
            ]
        );
        assert_eq!(card.units, "sigma0 in MPa, k in MPa um^(1/2)");
        assert_eq!(card.source, EquationSource::ParametricRecall);
    }

    #[test]
    fn card_parsing_requires_each_marker() {
        let missing_eq = "PARAMETERS:\na: x\nUNITS: none";
        let missing_par = "EQUATION: y = a\nUNITS: none";
        let missing_units = "EQUATION: y = a\nPARAMETERS:\na: x";
        assert!(matches!(
            parse_card_response(missing_eq, EquationSource::ParametricRecall),
            Err(EqGenError::MissingMarker("EQUATION:"))
        ));
        assert!(matches!(
            parse_card_response(missing_par, EquationSource::ParametricRecall),
            Err(EqGenError::MissingMarker("PARAMETERS:"))
        ));
        assert!(matches!(
            parse_card_response(missing_units, EquationSource::ParametricRecall),
            Err(EqGenError::MissingMarker("UNITS:"))
        ));
        assert!(matches!(
            parse_card_response("total gibberish", EquationSource::ParametricRecall),
            Err(EqGenError::MissingMarker("EQUATION:"))
        ));
    }

    #[test]
    fn card_rejects_undeclared_or_empty_fields() {
        let orphan = EquationCard::new(
            "y = a * x",
            vec![("b".into(), "not in the equation".into())],
            "none",
            EquationSource::ParametricRecall,
        );
        assert!(matches!(orphan, Err(EqGenError::BadCard(_))));
        let empty = EquationCard::new(
            "  ",
            vec![],
            "none",
            EquationSource::ParametricRecall,
        );
        assert!(matches!(empty, Err(EqGenError::BadCard(_))));
    }

    #[test]
    fn recall_prompt_is_knowledge_only_and_mandates_markers() {
        let mut backend = Scripted::new(&[HP_RECALL]);
        let card = recall_equation(
            "Fit grain size and yield strength data using the Hall-Petch equation.",
            &cfg(),
            &mut backend,
        )
        .unwrap();
        assert_eq!(card.parameter_names(), vec!["sigma0", "k"]);
        let prompt = &backend.seen[0].messages[1].content;
        assert!(prompt.contains("EQUATION:"));
        assert!(prompt.contains("PARAMETERS:"));
        assert!(prompt.contains("UNITS:"));
        assert!(prompt.contains("Hall-Petch"));
        // Knowledge-only: the template has no numeric payload beyond itself.
        assert!(!prompt.contains("38.45"));
    }

    #[test]
    fn expression_extraction_strips_fences() {
        assert_eq!(extract_expression("a + b"), "a + b");
        assert_eq!(extract_expression("```\na + b\n```"), "a + b");
        assert_eq!(extract_expression("```text\na + b\n```"), "a + b");
        assert_eq!(extract_expression("Here:\n```\na + b\n```\ndone"), "a + b");
        assert_eq!(extract_expression("```a + b```"), "a + b");
        // A leading identifier line that is not purely alphabetic is kept.
        assert_eq!(extract_expression("```\nv0\n```"), "v0");
    }

    #[test]
    fn codegen_accepts_matching_parameter_set() {
        let card = parse_card_response(HP_RECALL, EquationSource::ParametricRecall).unwrap();
        let mut backend = Scripted::new(&["```\nsigma0 + k * d^(-0.5)\n```"]);
        let source = codegen(&card, "d", &cfg(), &mut backend).unwrap();
        assert_eq!(source, "sigma0 + k * d^(-0.5)");
        let prompt = &backend.seen[0].messages[1].content;
        assert!(prompt.contains("piecewise"));
        assert!(prompt.contains("sigma0, k"));
        assert!(prompt.contains("Independent variable: d"));
    }

    #[test]
    fn codegen_rejects_wrong_identifiers() {
        let card = parse_card_response(HP_RECALL, EquationSource::ParametricRecall).unwrap();
        let mut backend = Scripted::new(&["a + b * d^(-0.5)"]);
        match codegen(&card, "d", &cfg(), &mut backend).unwrap_err() {
            EqGenError::ParamSetMismatch { card, code } => {
                assert_eq!(card, vec!["k", "sigma0"]);
                assert_eq!(code, vec!["a", "b"]);
            }
            other => panic!("expected ParamSetMismatch, got {other:?}"),
        }
    }

    #[test]
    fn codegen_rejects_prose() {
        let card = parse_card_response(HP_RECALL, EquationSource::ParametricRecall).unwrap();
        let mut backend = Scripted::new(&["The expression you want is sigma0 plus k."]);
        assert!(matches!(
            codegen(&card, "d", &cfg(), &mut backend),
            Err(EqGenError::CodeParse(_))
        ));
    }

    #[test]
    fn probes_span_range_inclusively_linear_below_one_decade() {
        let data = synth::hall_petch_noiseless();
        let expr = expr::parse("sigma0 + k * d^(-0.5)", &["d"]).unwrap();
        let report = test_function(
            &expr,
            "d",
            &["sigma0".into(), "k".into()],
            &data,
            &BTreeMap::from([("sigma0".to_string(), 40.0), ("k".to_string(), 9.0)]),
            DEFAULT_BAND_FACTOR,
        );
        assert!(report.passed, "failures: {:?}", report.failures);
        assert_eq!(report.probes.len(), PROBE_COUNT);
        assert_eq!(report.probes[0].x, 0.003);
        assert_eq!(report.probes[4].x, 0.023);
        // 0.023 / 0.003 < 10, so spacing is linear.
        let mid = report.probes[2].x;
        assert!((mid - 0.013).abs() < 1e-12, "expected linear midpoint, got {mid}");
    }

    #[test]
    fn probes_use_log_spacing_over_a_decade() {
        let data = synth::paris();
        let expr = expr::parse("C * dK^m", &["dK"]).unwrap();
        let report = test_function(
            &expr,
            "dK",
            &["C".into(), "m".into()],
            &data,
            &BTreeMap::from([("C".to_string(), 8.7e-12), ("m".to_string(), 3.26)]),
            DEFAULT_BAND_FACTOR,
        );
        assert_eq!(report.probes[0].x, 2.0);
        assert_eq!(report.probes[4].x, 60.0);
        let mid = report.probes[2].x;
        let geometric = (2.0f64 * 60.0).sqrt();
        assert!(
            (mid - geometric).abs() < 1e-9 * geometric,
            "expected geometric midpoint {geometric}, got {mid}"
        );
    }

    #[test]
    fn domain_violations_fail_every_probe() {
        let data = crate::dataset::Dataset::new(
            vec![3.0, 10.0, 23.0],
            vec![100.0, 110.0, 120.0],
            "d",
            "sigma",
            "um",
            "MPa",
        )
        .unwrap();
        let expr = expr::parse("log(d - 100)", &["d"]).unwrap();
        let report =
            test_function(&expr, "d", &[], &data, &BTreeMap::new(), DEFAULT_BAND_FACTOR);
        assert!(!report.passed);
        assert_eq!(report.failures.len(), PROBE_COUNT);
        assert!(report.probes.iter().all(|p| p.y.is_nan() && !p.within_band));
    }

    #[test]
    fn constant_at_mean_passes_the_plausibility_gate() {
        let data = synth::hall_petch_noiseless();
        let mean = data.y.iter().sum::<f64>() / data.n as f64;
        let expr = expr::parse(&format!("{mean}"), &["d"]).unwrap();
        let report =
            test_function(&expr, "d", &[], &data, &BTreeMap::new(), DEFAULT_BAND_FACTOR);
        assert!(report.passed);
    }

    #[test]
    fn test_reports_are_deterministic() {
        let data = synth::hall_petch_noiseless();
        let expr = expr::parse("sigma0 + k * d^(-0.5)", &["d"]).unwrap();
        let params = ["sigma0".to_string(), "k".to_string()];
        let supplied = BTreeMap::from([("sigma0".to_string(), 40.0)]);
        let a = test_function(&expr, "d", &params, &data, &supplied, DEFAULT_BAND_FACTOR);
        let b = test_function(&expr, "d", &params, &data, &supplied, DEFAULT_BAND_FACTOR);
        assert_eq!(a, b);
        // The unsupplied parameter defaulted to 1.0.
        assert_eq!(a.probes[0].params["k"], 1.0);
    }

    #[test]
    fn generation_succeeds_first_attempt() {
        let data = synth::hall_petch_noiseless();
        let mut backend = Scripted::new(&[HP_RECALL, "sigma0 + k * d^(-0.5)"]);
        let generated = generate_function(
            "Hall-Petch fitting",
            "d",
            &data,
            &cfg(),
            &mut backend,
            &GenerationOptions {
                test_params: BTreeMap::from([
                    ("sigma0".to_string(), 40.0),
                    ("k".to_string(), 9.0),
                ]),
                ..GenerationOptions::default()
            },
        )
        .unwrap();
        assert_eq!(generated.attempt_log, vec!["attempt 1: success"]);
        let f = &generated.function;
        assert_eq!(f.params, vec!["sigma0", "k"]);
        assert_eq!(f.expr, expr::parse(&f.dsl_source, &[&f.variable]).unwrap());
        assert!(f.test_report.passed);
        assert_eq!(backend.seen.len(), 2);
    }

    #[test]
    fn generation_retries_after_bad_codegen() {
        let data = synth::hall_petch_noiseless();
        let mut backend = Scripted::new(&[
            HP_RECALL,
            "sorry, no code today",
            HP_RECALL,
            "sigma0 + k * d^(-0.5)",
        ]);
        let generated = generate_function(
            "Hall-Petch fitting",
            "d",
            &data,
            &cfg(),
            &mut backend,
            &GenerationOptions {
                test_params: BTreeMap::from([
                    ("sigma0".to_string(), 40.0),
                    ("k".to_string(), 9.0),
                ]),
                ..GenerationOptions::default()
            },
        )
        .unwrap();
        assert_eq!(generated.attempt_log.len(), 2);
        assert!(generated.attempt_log[0].starts_with("attempt 1: codegen:"));
        assert_eq!(generated.attempt_log[1], "attempt 2: success");
    }

    #[test]
    fn generation_halts_with_no_fallback_after_retries() {
        let data = synth::hall_petch_noiseless();
        let mut backend = Scripted::new(&["nope", "still nope", "never"]);
        let err = generate_function(
            "Hall-Petch fitting",
            "d",
            &data,
            &cfg(),
            &mut backend,
            &GenerationOptions::default(),
        )
        .unwrap_err();
        match err {
            EqGenError::NoEquation { attempts, log } => {
                assert_eq!(attempts, 3);
                assert_eq!(log.len(), 3);
                assert!(log.iter().all(|l| l.contains("recall:")));
            }
            other => panic!("expected NoEquation, got {other:?}"),
        }
        assert_eq!(backend.seen.len(), 3);
    }

    #[test]
    fn strain_generation_matches_base_at_zero_strain() {
        let data = synth::strain_kuhn();
        let box_coeff = physics::BOX_COEFF;
        let hartree = physics::HARTREE_TO_EV;
        let recall = "EQUATION: gap(eps) = [h^2(s+1)/(8 m (l0(1+delta))^2) + v0(1+gamma)(1-1/s)] \
                      with delta = eps or eps^2 and gamma = 2.5 eps (1 - eps/0.25), in eV\n\
                      PARAMETERS:\n\
                      s: monomer count\n\
                      l0: unstrained box length\n\
                      v0: unstrained barrier height\n\
                      UNITS: l0 in bohr, v0 in hartree, output eV";
        let dsl = format!(
            "{hartree} * ({box_coeff} * (s + 1) / (l0 * (1 + piecewise(eps <= 0 : eps ; eps^2)))^2 \
             + v0 * (1 + 2.5 * eps * (1 - eps / 0.25)) * (1 - 1 / s))"
        );
        let mut backend = Scripted::new(&[recall, &dsl]);
        let opts = GenerationOptions {
            test_params: BTreeMap::from([
                ("s".to_string(), 42.0),
                ("l0".to_string(), 45.0),
                ("v0".to_string(), 0.06),
            ]),
            ..GenerationOptions::default()
        };
        let generated = generate_strain_function(
            "box_coeff * (s + 1) / l0^2 + v0 * (1 - 1/s)",
            "Model strain effects on helicene HOMO-LUMO gaps.",
            &data,
            &cfg(),
            &mut backend,
            &opts,
        )
        .unwrap();
        let f = &generated.function;
        assert_eq!(f.variable, "eps");
        assert_eq!(f.card.source, EquationSource::StrainModification);
        assert!(backend.seen[0].messages[1]
            .content
            .contains("The base Kuhn equation is provided to you."));

        // At eps = 0 the modified form must reduce to the unstrained gap.
        let mut bindings = Bindings::default();
        bindings.insert_var("eps".to_string(), 0.0).unwrap();
        bindings.insert_param("s".to_string(), 42.0).unwrap();
        bindings.insert_param("l0".to_string(), 45.0).unwrap();
        bindings.insert_param("v0".to_string(), 0.059506).unwrap();
        let at_zero = expr::evaluate(&f.expr, &bindings).unwrap();
        let base = physics::strain_kuhn(
            0.0,
            &physics::StrainKuhnParams::new(42.0, 45.0, 0.059506),
        )
        .unwrap();
        assert!((at_zero - base * hartree).abs() < 1e-12 * at_zero.abs());
    }

    #[test]
    fn strain_generation_accepts_a_linear_modification() {
        let data = synth::strain_kuhn();
        let recall = "EQUATION: gap(eps) = g0 * (1 + a * eps)\n\
                      PARAMETERS:\n\
                      g0: unstrained gap\n\
                      a: linear strain sensitivity\n\
                      UNITS: g0 in eV, a dimensionless";
        let mut backend = Scripted::new(&[recall, "g0 * (1 + a * eps)"]);
        let opts = GenerationOptions {
            test_params: BTreeMap::from([
                ("g0".to_string(), 1.6),
                ("a".to_string(), 1.0),
            ]),
            ..GenerationOptions::default()
        };
        let generated = generate_strain_function(
            "box_coeff * (s + 1) / l0^2 + v0 * (1 - 1/s)",
            "Model strain effects.",
            &data,
            &cfg(),
            &mut backend,
            &opts,
        )
        .unwrap();
        assert!(generated.function.test_report.passed);
    }
}
