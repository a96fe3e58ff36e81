//! Run artifacts: the trace log, result exports, figures, and the console
//! summary.
//!
//! The trace is JSONL with a header line (run configuration plus final
//! status) followed by one line per iteration. Entry timestamps can be
//! normalized to the epoch so identical runs produce byte-identical files;
//! that is what makes replayed runs diffable.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{ActionRequest, AgentState, HistoryEntry, Outcome, RunPolicy};
use crate::dataset::Dataset;
use crate::eqgen::{EquationSource, GeneratedFunction};
use crate::fit::{FitResult, FitSpace, ParamModel, ValidationMetrics};
use crate::numfmt::sig4;
use crate::region::{RegionMethod, RegionSelection};
use crate::task::TaskConfig;
use crate::tools::RunContext;

/// Timestamp written when normalization is on.
pub const EPOCH_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

// ---------------------------------------------------------------------------
// Small formatting helpers shared by prompts, observations, and reports.

/// ` MPa` for a known unit, empty for a missing or unknown one.
pub fn unit_suffix(unit: &str) -> String {
    if unit.is_empty() || unit == "unknown" {
        String::new()
    } else {
        format!(" {unit}")
    }
}

/// `sigma0=38.46, k=9.484, resnorm=0.0001103` with parameters in the given
/// order (the generated function's order, not alphabetical).
pub fn params_line(order: &[String], fit: &FitResult) -> String {
    let mut parts: Vec<String> = order
        .iter()
        .filter_map(|name| fit.params.get(name).map(|v| format!("{name}={}", sig4(*v))))
        .collect();
    parts.push(format!("resnorm={}", sig4(fit.resnorm)));
    parts.join(", ")
}

/// One-line metrics summary; log-space and adjusted figures appear only
/// when present.
pub fn metrics_line(m: &ValidationMetrics, y_unit: &str) -> String {
    let mut s = format!("R2={}, RMSE={}{}", sig4(m.r2), sig4(m.rmse), unit_suffix(y_unit));
    if let Some(v) = m.r2_log {
        s.push_str(&format!(", R2(log)={}", sig4(v)));
    }
    if let Some(v) = m.rmse_log {
        s.push_str(&format!(", RMSE(log)={}", sig4(v)));
    }
    if let Some(v) = m.adjusted_r2 {
        s.push_str(&format!(", Adjusted R2={}", sig4(v)));
    }
    s
}

// ---------------------------------------------------------------------------
// Trace.

/// First line of a trace file: what ran and how it ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub task: String,
    pub model_id: String,
    pub temperature: Option<f64>,
    pub backend: String,
    pub max_iterations: usize,
    pub history_window: usize,
    pub retries: usize,
    pub fit_space: FitSpace,
    pub status: String,
    pub iterations: usize,
}

impl TraceHeader {
    pub fn from_run(state: &AgentState, ctx: &RunContext, policy: &RunPolicy) -> TraceHeader {
        TraceHeader {
            task: ctx.task.kind.name().to_owned(),
            model_id: ctx.chat.model.clone(),
            temperature: ctx.chat.temperature,
            backend: ctx.backend.id(),
            max_iterations: policy.max_iterations,
            history_window: policy.history_window,
            retries: ctx.retries,
            fit_space: ctx.fit_options.fit_space,
            status: state.status.name().to_owned(),
            iterations: state.history.len(),
        }
    }
}

/// One iteration in the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub iteration: usize,
    pub thought: String,
    pub action: Option<ActionRequest>,
    pub observation: String,
    pub outcome: Outcome,
    pub timestamp: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] io::Error),
    #[error("trace line {line}: {cause}")]
    Parse { line: usize, cause: String },
    #[error("trace file is empty")]
    Empty,
}

/// Writes header plus one line per history entry. With
/// `normalize_timestamps` every line carries [`EPOCH_TIMESTAMP`], so two
/// identical runs produce byte-identical files.
pub fn write_trace(
    path: &Path,
    header: &TraceHeader,
    history: &[HistoryEntry],
    normalize_timestamps: bool,
) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = String::new();
    out.push_str(&serde_json::to_string(header).expect("header serializes"));
    out.push('\n');
    let stamp = if normalize_timestamps {
        EPOCH_TIMESTAMP.to_owned()
    } else {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    };
    for entry in history {
        let line = TraceLine {
            iteration: entry.iteration,
            thought: entry.thought.clone(),
            action: entry.action.clone(),
            observation: entry.observation.clone(),
            outcome: entry.outcome,
            timestamp: stamp.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("line serializes"));
        out.push('\n');
    }
    fs::write(path, out)
}

/// Reads a trace back; a header-only file yields an empty entry list.
pub fn load_trace(path: &Path) -> Result<(TraceHeader, Vec<TraceLine>), TraceError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(TraceError::Empty)?;
    let header: TraceHeader = serde_json::from_str(first).map_err(|e| TraceError::Parse {
        line: 1,
        cause: e.to_string(),
    })?;
    let mut entries = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let entry: TraceLine = serde_json::from_str(line).map_err(|e| TraceError::Parse {
            line: i + 1,
            cause: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok((header, entries))
}

/// Rewrites every timestamp in trace text to the epoch, preserving
/// everything else byte for byte; lets post-hoc tooling diff live traces.
pub fn normalize_trace_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        match serde_json::from_str::<TraceLine>(line) {
            Ok(mut entry) => {
                entry.timestamp = EPOCH_TIMESTAMP.to_owned();
                out.push_str(&serde_json::to_string(&entry).expect("line serializes"));
            }
            Err(_) => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Result exports.

fn source_phrase(source: EquationSource) -> &'static str {
    match source {
        EquationSource::ParametricRecall => "LLM knowledge",
        EquationSource::LiteratureExtraction => "literature extraction",
        EquationSource::StrainModification => "strain-modified base equation",
    }
}

/// Serializes the fitted result. Formats: `json`, `csv` (name,value rows),
/// or `table` (aligned plain text). Every format carries a provenance line
/// naming the task and where the equation came from. Values are written at
/// full precision; only observations round to four significant digits.
pub fn export_results(
    state: &AgentState,
    task: &TaskConfig,
    format: &str,
    path: &Path,
) -> Result<(), String> {
    let f = state
        .function
        .as_ref()
        .ok_or_else(|| "no function to export".to_owned())?;
    let m = state
        .model
        .as_ref()
        .ok_or_else(|| "no fitted model to export".to_owned())?;
    let provenance = format!(
        "fitagent {} task; equation source: {}",
        task.kind.name(),
        source_phrase(f.card.source)
    );
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| e.to_string())?;
    }
    let body = match format {
        "json" => {
            let mut doc = serde_json::Map::new();
            doc.insert("task".into(), task.kind.name().into());
            doc.insert("equation".into(), f.dsl_source.clone().into());
            doc.insert("variable".into(), f.variable.clone().into());
            let mut params = serde_json::Map::new();
            for name in &f.params {
                if let Some(v) = m.params.get(name) {
                    params.insert(name.clone(), (*v).into());
                }
            }
            doc.insert("parameters".into(), params.into());
            doc.insert("resnorm".into(), m.resnorm.into());
            doc.insert(
                "fit_space".into(),
                serde_json::to_value(m.fit_space).expect("fit space serializes"),
            );
            doc.insert(
                "metrics".into(),
                match &state.validation {
                    None => serde_json::Value::Null,
                    Some(v) => serde_json::json!({
                        "r2": v.r2,
                        "adjusted_r2": v.adjusted_r2,
                        "rmse": v.rmse,
                        "r2_log": v.r2_log,
                        "rmse_log": v.rmse_log,
                    }),
                },
            );
            doc.insert(
                "region".into(),
                match &state.region {
                    None => serde_json::Value::Null,
                    Some(r) => serde_json::json!({
                        "x_min": r.x_min,
                        "x_max": r.x_max,
                        "points_selected": r.points_selected(),
                        "points_total": r.points_total,
                        "method": match r.method { RegionMethod::Auto => "auto", RegionMethod::Manual => "manual" },
                    }),
                },
            );
            doc.insert("provenance".into(), provenance.into());
            let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
                .expect("document serializes");
            s.push('\n');
            s
        }
        "csv" => {
            let mut s = String::from("name,value\n");
            s.push_str(&format!("task,{}\n", task.kind.name()));
            s.push_str(&format!("equation,\"{}\"\n", f.dsl_source.replace('"', "\"\"")));
            for name in &f.params {
                if let Some(v) = m.params.get(name) {
                    s.push_str(&format!("{name},{v}\n"));
                }
            }
            s.push_str(&format!("resnorm,{}\n", m.resnorm));
            if let Some(v) = &state.validation {
                s.push_str(&format!("R2,{}\n", v.r2));
                s.push_str(&format!("RMSE,{}\n", v.rmse));
                if let Some(r) = v.r2_log {
                    s.push_str(&format!("R2_log,{r}\n"));
                }
                if let Some(r) = v.rmse_log {
                    s.push_str(&format!("RMSE_log,{r}\n"));
                }
            }
            s.push_str(&format!("provenance,\"{provenance}\"\n"));
            s
        }
        "table" => {
            let mut s = String::new();
            s.push_str(&format!("Fit results ({})\n", task.kind.name()));
            s.push_str(&"=".repeat(s.trim_end().len()));
            s.push('\n');
            s.push_str(&format!("Equation: {}\n", f.dsl_source));
            s.push_str("Parameters:\n");
            for name in &f.params {
                if let Some(v) = m.params.get(name) {
                    s.push_str(&format!("  {name} = {v}\n"));
                }
            }
            s.push_str(&format!("resnorm = {}\n", m.resnorm));
            if let Some(v) = &state.validation {
                s.push_str(&format!("R2 = {}\n", v.r2));
                s.push_str(&format!("RMSE = {}\n", v.rmse));
                if let Some(r) = v.r2_log {
                    s.push_str(&format!("R2(log) = {r}\n"));
                }
            }
            s.push_str(&format!("Provenance: {provenance}\n"));
            s
        }
        other => return Err(format!("unknown format `{other}` (expected json, csv, or table)")),
    };
    fs::write(path, body).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Figures.

struct PlotPoint {
    x: f64,
    y: f64,
    selected: bool,
}

/// Minimal deterministic SVG scatter/line plot. No external renderer: the
/// output is plain markup with fixed dimensions, so identical inputs yield
/// identical bytes.
fn write_svg_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[PlotPoint],
    curve: Option<&[(f64, f64)]>,
    reference: Option<((f64, f64), (f64, f64))>,
) -> io::Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 60.0;

    let mut xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    if let Some(c) = curve {
        xs.extend(c.iter().map(|p| p.0));
        ys.extend(c.iter().map(|p| p.1));
    }
    if let Some((a, b)) = reference {
        xs.extend([a.0, b.0]);
        ys.extend([a.1, b.1]);
    }
    let finite = |v: &&f64| v.is_finite();
    let xmin = xs.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = ys.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let ymax = ys.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = |lo: f64, hi: f64| {
        if !lo.is_finite() || !hi.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 1.0, hi + 1.0)
        } else {
            let p = (hi - lo) * 0.05;
            (lo - p, hi + p)
        }
    };
    let (x0, x1) = pad(xmin, xmax);
    let (y0, y1) = pad(ymin, ymax);
    let sx = |v: f64| M + (v - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |v: f64| H - M - (v - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        W / 2.0,
        title
    ));
    // Axes.
    s.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        H - M,
        W - M,
        H - M
    ));
    s.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        H - M
    ));
    // Range labels.
    s.push_str(&format!(
        "<text x=\"{M}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        H - M + 16.0,
        sig4(xmin)
    ));
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        W - M,
        H - M + 16.0,
        sig4(xmax)
    ));
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        M - 4.0,
        H - M,
        sig4(ymin)
    ));
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        M - 4.0,
        M + 4.0,
        sig4(ymax)
    ));
    // Axis names.
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        W / 2.0,
        H - 16.0,
        x_label
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
        H / 2.0,
        H / 2.0,
        y_label
    ));
    if let Some((a, b)) = reference {
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n",
            sx(a.0),
            sy(a.1),
            sx(b.0),
            sy(b.1)
        ));
    }
    if let Some(c) = curve {
        let pts: Vec<String> = c
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }
    for p in points {
        if !(p.x.is_finite() && p.y.is_finite()) {
            continue;
        }
        let fill = if p.selected { "#d62728" } else { "#444444" };
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
            sx(p.x),
            sy(p.y),
            fill
        ));
    }
    s.push_str("</svg>\n");
    fs::write(path, s)
}

fn write_sidecar(path: &Path, header: &str, rows: &[Vec<String>]) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes the three standard figures plus CSV sidecars with the exact
/// plotted values (full precision, so sidecar fits match model predictions
/// bit for bit):
///
/// - `fig_fit`: data and fitted curve in observation space (log-log axes
///   for log-space fits, when positivity allows);
/// - `fig_linearized`: observed versus predicted with the identity line;
/// - `fig_residuals`: prediction minus observation against x, zero line.
pub fn emit_plots(
    data: &Dataset,
    function: &GeneratedFunction,
    fit: &FitResult,
    region: Option<&RegionSelection>,
    out_dir: &Path,
) -> Result<(), String> {
    fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;
    let model = ParamModel::with_params(
        function.expr.clone(),
        &function.variable,
        function.params.clone(),
    )
    .map_err(|e| e.to_string())?;
    let pred: Vec<Option<f64>> = data
        .x
        .iter()
        .map(|&x| model.predict(x, &fit.params).ok().filter(|v| v.is_finite()))
        .collect();
    let selected: Vec<bool> = match region {
        None => vec![false; data.n],
        Some(r) => {
            let mut mask = vec![false; data.n];
            for &i in &r.indices {
                mask[i] = true;
            }
            mask
        }
    };

    // Log-log axes make sense only when every plotted value is positive.
    let log_axes = fit.fit_space == FitSpace::Log10
        && data.x.iter().all(|v| *v > 0.0)
        && data.y.iter().all(|v| *v > 0.0)
        && pred.iter().flatten().all(|v| *v > 0.0);
    let tx = |v: f64| if log_axes { v.log10() } else { v };

    // Dense fitted curve across the x range.
    let (xlo, xhi) = data.x_range();
    let mut curve = Vec::new();
    for i in 0..=200 {
        let x = xlo + (xhi - xlo) * i as f64 / 200.0;
        if let Ok(y) = model.predict(x, &fit.params) {
            if y.is_finite() && (!log_axes || (x > 0.0 && y > 0.0)) {
                curve.push((tx(x), tx(y)));
            }
        }
    }
    let fit_points: Vec<PlotPoint> = data
        .x
        .iter()
        .zip(&data.y)
        .zip(&selected)
        .map(|((&x, &y), &sel)| PlotPoint {
            x: tx(x),
            y: tx(y),
            selected: sel,
        })
        .collect();
    let label = |name: &str| {
        if log_axes {
            format!("log10({name})")
        } else {
            name.to_owned()
        }
    };
    write_svg_plot(
        &out_dir.join("fig_fit.svg"),
        "Data and fitted model",
        &label(&data.x_name),
        &label(&data.y_name),
        &fit_points,
        Some(&curve),
        None,
    )
    .map_err(|e| e.to_string())?;
    let rows: Vec<Vec<String>> = data
        .x
        .iter()
        .zip(&data.y)
        .zip(&pred)
        .map(|((x, y), p)| {
            vec![
                format!("{x}"),
                format!("{y}"),
                p.map(|v| format!("{v}")).unwrap_or_default(),
            ]
        })
        .collect();
    write_sidecar(
        &out_dir.join("fig_fit.csv"),
        &format!("{},{},{}_fit", data.x_name, data.y_name, data.y_name),
        &rows,
    )
    .map_err(|e| e.to_string())?;

    // Observed vs predicted: a perfect fit sits on the identity line.
    let lin_points: Vec<PlotPoint> = data
        .y
        .iter()
        .zip(&pred)
        .zip(&selected)
        .filter_map(|((&y, p), &sel)| {
            p.map(|v| PlotPoint {
                x: v,
                y,
                selected: sel,
            })
        })
        .collect();
    let lo = lin_points
        .iter()
        .flat_map(|p| [p.x, p.y])
        .fold(f64::INFINITY, f64::min);
    let hi = lin_points
        .iter()
        .flat_map(|p| [p.x, p.y])
        .fold(f64::NEG_INFINITY, f64::max);
    let reference = if lo.is_finite() && hi.is_finite() {
        Some(((lo, lo), (hi, hi)))
    } else {
        None
    };
    write_svg_plot(
        &out_dir.join("fig_linearized.svg"),
        "Observed vs predicted",
        &format!("predicted {}", data.y_name),
        &format!("observed {}", data.y_name),
        &lin_points,
        None,
        reference,
    )
    .map_err(|e| e.to_string())?;
    let rows: Vec<Vec<String>> = data
        .y
        .iter()
        .zip(&pred)
        .map(|(y, p)| {
            vec![
                p.map(|v| format!("{v}")).unwrap_or_default(),
                format!("{y}"),
            ]
        })
        .collect();
    write_sidecar(
        &out_dir.join("fig_linearized.csv"),
        &format!("{}_fit,{}", data.y_name, data.y_name),
        &rows,
    )
    .map_err(|e| e.to_string())?;

    // Residuals against x with a zero line.
    let res_points: Vec<PlotPoint> = data
        .x
        .iter()
        .zip(&data.y)
        .zip(&pred)
        .zip(&selected)
        .filter_map(|(((&x, &y), p), &sel)| {
            p.map(|v| PlotPoint {
                x,
                y: v - y,
                selected: sel,
            })
        })
        .collect();
    write_svg_plot(
        &out_dir.join("fig_residuals.svg"),
        "Residuals",
        &data.x_name,
        "prediction - observation",
        &res_points,
        None,
        Some(((xlo, 0.0), (xhi, 0.0))),
    )
    .map_err(|e| e.to_string())?;
    let rows: Vec<Vec<String>> = data
        .x
        .iter()
        .zip(&data.y)
        .zip(&pred)
        .map(|((x, y), p)| {
            vec![
                format!("{x}"),
                p.map(|v| format!("{}", v - y)).unwrap_or_default(),
            ]
        })
        .collect();
    write_sidecar(
        &out_dir.join("fig_residuals.csv"),
        &format!("{},residual", data.x_name),
        &rows,
    )
    .map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Console summary.

/// The end-of-run block the CLI prints: status banner, iteration count,
/// fitted numbers, and equation provenance.
pub fn summary_block(state: &AgentState) -> String {
    let rule = "=".repeat(60);
    let mut s = String::new();
    s.push_str(&rule);
    s.push('\n');
    if state.status == crate::agent::RunStatus::Done {
        s.push_str("AGENT COMPLETED\n");
    } else {
        s.push_str(&format!("AGENT HALTED: {}\n", state.status.name()));
    }
    s.push_str(&rule);
    s.push('\n');
    s.push_str(&format!("Total iterations: {}\n", state.history.len()));
    s.push('\n');
    s.push_str("=== FINAL RESULTS ===\n");
    match (&state.function, &state.model) {
        (Some(f), Some(m)) => {
            for name in &f.params {
                if let Some(v) = m.params.get(name) {
                    s.push_str(&format!("{name} = {}\n", sig4(*v)));
                }
            }
            if let Some(v) = &state.validation {
                let unit = state
                    .data
                    .as_ref()
                    .map(|d| unit_suffix(&d.y_unit))
                    .unwrap_or_default();
                s.push_str(&format!("R2 = {}, RMSE = {}{}\n", sig4(v.r2), sig4(v.rmse), unit));
                if let Some(r) = v.r2_log {
                    s.push_str(&format!("R2(log) = {}\n", sig4(r)));
                }
            }
            s.push_str(&format!("Equation source: {}\n", source_phrase(f.card.source)));
            s.push_str(&format!("Equation: {}\n", f.dsl_source));
        }
        _ => s.push_str("(no fitted model)\n"),
    }
    s
}

/// Convenience map of fitted parameters in function order, for tests and
/// examples that want ordered (name, value) pairs.
pub fn ordered_params(function: &GeneratedFunction, fit: &FitResult) -> Vec<(String, f64)> {
    function
        .params
        .iter()
        .filter_map(|n| fit.params.get(n).map(|v| (n.clone(), *v)))
        .collect()
}

/// Fitted values keyed by name, cloned out of the result.
pub fn params_map(fit: &FitResult) -> BTreeMap<String, f64> {
    fit.params.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::RunStatus;

    fn header() -> TraceHeader {
        TraceHeader {
            task: "hall-petch".to_owned(),
            model_id: "gpt-5".to_owned(),
            temperature: None,
            backend: "replay".to_owned(),
            max_iterations: 20,
            history_window: 10,
            retries: 2,
            fit_space: FitSpace::Linear,
            status: "done".to_owned(),
            iterations: 2,
        }
    }

    fn entries() -> Vec<HistoryEntry> {
        vec![
            HistoryEntry {
                iteration: 1,
                thought: "load".to_owned(),
                action: Some(ActionRequest {
                    tool: "load_data".to_owned(),
                    input: serde_json::json!({"filename": "a.csv"}),
                }),
                observation: "Loaded 13 data points.".to_owned(),
                outcome: Outcome::Ok,
            },
            HistoryEntry {
                iteration: 2,
                thought: String::new(),
                action: None,
                observation: "Response parse error: missing THOUGHT: marker".to_owned(),
                outcome: Outcome::ParseError,
            },
        ]
    }

    #[test]
    fn trace_round_trips_and_normalizes_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        write_trace(&path, &header(), &entries(), true).unwrap();
        let first = fs::read_to_string(&path).unwrap();
        write_trace(&path, &header(), &entries(), true).unwrap();
        let second = fs::read_to_string(&path).unwrap();
        assert_eq!(first, second, "normalized traces are byte-identical");
        assert!(first.contains(EPOCH_TIMESTAMP));

        let (h, lines) = load_trace(&path).unwrap();
        assert_eq!(h, header());
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].iteration, 1);
        assert_eq!(lines[1].outcome, Outcome::ParseError);
        assert!(lines[1].action.is_none());
    }

    #[test]
    fn live_timestamps_normalize_to_the_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        write_trace(&path, &header(), &entries(), false).unwrap();
        let live = fs::read_to_string(&path).unwrap();
        assert!(!live.contains(EPOCH_TIMESTAMP));
        write_trace(&path, &header(), &entries(), true).unwrap();
        let normalized = fs::read_to_string(&path).unwrap();
        assert_eq!(normalize_trace_text(&live), normalized);
    }

    #[test]
    fn header_only_trace_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        write_trace(&path, &header(), &[], true).unwrap();
        let (_, lines) = load_trace(&path).unwrap();
        assert!(lines.is_empty());
        assert!(matches!(
            load_trace(&dir.path().join("missing.jsonl")),
            Err(TraceError::Io(_))
        ));
    }

    #[test]
    fn status_names_survive_the_header() {
        // The header stores status by name; every status maps cleanly.
        for status in [
            RunStatus::Done,
            RunStatus::HaltedNoEquation,
            RunStatus::HaltedMaxIter,
            RunStatus::HaltedEssentialFailure,
        ] {
            let mut h = header();
            h.status = status.name().to_owned();
            let text = serde_json::to_string(&h).unwrap();
            let back: TraceHeader = serde_json::from_str(&text).unwrap();
            assert_eq!(back.status, status.name());
        }
    }

    #[test]
    fn metrics_and_params_lines_render_sig4() {
        let fit = FitResult {
            params: [("sigma0".to_owned(), 38.4577), ("k".to_owned(), 9.4836)]
                .into_iter()
                .collect(),
            resnorm: 1.2345e-7,
            iterations: 5,
            converged: true,
            residuals: vec![],
            fit_space: FitSpace::Linear,
            resnorm_trace: vec![],
        };
        let order = vec!["sigma0".to_owned(), "k".to_owned()];
        assert_eq!(
            params_line(&order, &fit),
            "sigma0=38.46, k=9.484, resnorm=1.235e-7"
        );
        let metrics = ValidationMetrics {
            r2: 0.94991,
            adjusted_r2: Some(0.94536),
            rmse: 7.3572,
            r2_log: None,
            rmse_log: None,
            residuals: vec![],
        };
        assert_eq!(
            metrics_line(&metrics, "MPa"),
            "R2=0.9499, RMSE=7.357 MPa, Adjusted R2=0.9454"
        );
        assert_eq!(unit_suffix("unknown"), "");
        assert_eq!(unit_suffix("MPa"), " MPa");
    }
}
