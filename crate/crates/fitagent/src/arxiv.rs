//! Literature extraction: fetch an HTML rendering of a paper, have the
//! backend pull out a target equation as LaTeX, and translate a small LaTeX
//! subset into the fitting DSL.
//!
//! The `file:` scheme serves local fixture pages so the whole path runs
//! offline. PDF text extraction is deliberately a stub that reports a
//! degraded result; its only job is to let an agent observe the failure and
//! pivot to the HTML route.


use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatBackend, ChatConfig, LlmError};

pub const EXTRACT_PROMPT: &str = include_str!("../prompts/extract.txt");

/// Default HTML mirror; tests override it with a `file:` URL.
pub const DEFAULT_MIRROR_BASE: &str = "https://ar5iv.org/html";

/// Fixed size of the confidence checklist the extraction prompt mandates.
pub const CHECKLIST_ITEMS: u32 = 11;

/// Characters kept in the context window shown to the backend.
pub const WINDOW_CHARS: usize = 3000;

#[derive(Debug, Error)]
pub enum ArxivError {
    #[error("`{0}` is not an arXiv id (expected NNNN.NNNNN with optional vN)")]
    BadId(String),
    #[error("fetch of `{url}` failed: {cause}")]
    Fetch { url: String, cause: String },
    #[error("HTTP {status} from `{url}`")]
    Http { status: u16, url: String },
    #[error("`{url}` returned an empty body")]
    EmptyBody { url: String },
    #[error("page window is empty")]
    EmptyWindow,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("response missing mandated marker {0}")]
    MissingMarker(&'static str),
    #[error("extracted LaTeX is empty")]
    EmptyLatex,
    #[error("unsupported LaTeX construct: {0}")]
    Unsupported(String),
    #[error("unbalanced group in LaTeX: {0}")]
    UnbalancedGroup(String),
}

/// A fetched page reduced to visible text.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchedHtml {
    pub url: String,
    /// Visible text, at most [`WINDOW_CHARS`] characters, centered on the
    /// first keyword hit when one exists.
    pub window: String,
    pub truncated: bool,
}

/// The backend's answer to an extraction prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedEquation {
    pub latex: String,
    /// (items satisfied, items total); the total is always 11.
    pub confidence: (u32, u32),
    pub source_url: String,
    pub context_window: String,
}

/// Accepts `NNNN.NNNN`, `NNNN.NNNNN`, and an optional `vN` suffix.
pub fn is_arxiv_id(id: &str) -> bool {
    let (body, version) = match id.find('v') {
        Some(pos) => (&id[..pos], Some(&id[pos + 1..])),
        None => (id, None),
    };
    if let Some(v) = version {
        if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
    }
    let Some((prefix, suffix)) = body.split_once('.') else {
        return false;
    };
    prefix.len() == 4
        && prefix.bytes().all(|b| b.is_ascii_digit())
        && (4..=5).contains(&suffix.len())
        && suffix.bytes().all(|b| b.is_ascii_digit())
}

fn decode_entities(text: &str) -> String {
    text.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&nbsp;", " ")
        .replace("&ndash;", "-")
        .replace("&#916;", "\u{394}")
        .replace("&amp;", "&")
}

fn tag_name(tag: &str) -> String {
    tag.trim_start_matches('<')
        .trim_start_matches('/')
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Pulls `name="value"` out of a tag, tolerating single quotes.
fn attr_value(tag: &str, name: &str) -> Option<String> {
    let lower = tag.to_ascii_lowercase();
    let key = format!("{name}=");
    let start = lower.find(&key)? + key.len();
    let rest = &tag[start..];
    let quote = rest.chars().next()?;
    if quote != '"' && quote != '\'' {
        return None;
    }
    let inner = &rest[1..];
    let end = inner.find(quote)?;
    Some(decode_entities(&inner[..end]))
}

/// Skips past the closing tag of `name`, returning the remainder.
fn skip_element<'a>(rest: &'a str, name: &str) -> &'a str {
    let close = format!("</{name}");
    let lower = rest.to_ascii_lowercase();
    match lower.find(&close) {
        Some(pos) => {
            let after = &rest[pos..];
            match after.find('>') {
                Some(gt) => &after[gt + 1..],
                None => "",
            }
        }
        None => "",
    }
}

/// Strips markup to visible text. Scripts and styles vanish entirely; math
/// elements contribute their LaTeX `alttext` and images their `alt`, so
/// equations survive the flattening.
pub fn html_to_text(html: &str) -> String {
    let mut out = String::new();
    let mut rest = html;
    loop {
        match rest.find('<') {
            None => {
                out.push_str(rest);
                break;
            }
            Some(i) => {
                out.push_str(&rest[..i]);
                rest = &rest[i..];
                let Some(end) = rest.find('>') else { break };
                let tag = &rest[..=end];
                let name = tag_name(tag);
                match name.as_str() {
                    "script" | "style" => {
                        rest = skip_element(&rest[end + 1..], &name);
                    }
                    "math" => {
                        if let Some(alt) = attr_value(tag, "alttext") {
                            out.push(' ');
                            out.push_str(&alt);
                            out.push(' ');
                        }
                        rest = skip_element(&rest[end + 1..], "math");
                    }
                    "img" => {
                        if let Some(alt) = attr_value(tag, "alt") {
                            out.push(' ');
                            out.push_str(&alt);
                            out.push(' ');
                        }
                        rest = &rest[end + 1..];
                    }
                    _ => {
                        out.push(' ');
                        rest = &rest[end + 1..];
                    }
                }
            }
        }
    }
    decode_entities(&out).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Cuts a [`WINDOW_CHARS`]-character window around the first
/// (case-insensitive) hit of any keyword, or the head of the text when no
/// keyword matches.
fn window_around(text: &str, keywords: &[&str]) -> (String, bool) {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= WINDOW_CHARS {
        return (text.to_string(), false);
    }
    let lower = text.to_lowercase();
    let lower_chars: Vec<char> = lower.chars().collect();
    let mut hit: Option<usize> = None;
    for keyword in keywords {
        let needle: Vec<char> = keyword.to_lowercase().chars().collect();
        if needle.is_empty() {
            continue;
        }
        let found = lower_chars
            .windows(needle.len())
            .position(|w| w == needle.as_slice());
        if let Some(pos) = found {
            hit = Some(match hit {
                Some(best) => best.min(pos),
                None => pos,
            });
        }
    }
    let center = hit.unwrap_or(0);
    let start = center
        .saturating_sub(WINDOW_CHARS / 2)
        .min(chars.len() - WINDOW_CHARS);
    let window: String = chars[start..start + WINDOW_CHARS].iter().collect();
    (window, true)
}

/// Fetches `{mirror_base}/{id minus version}` and reduces it to a keyword
/// window. `file:` URLs read from disk, everything else goes over HTTP.
pub fn fetch_arxiv_html(
    mirror_base: &str,
    paper_id: &str,
    keywords: &[&str],
) -> Result<FetchedHtml, ArxivError> {
    if !is_arxiv_id(paper_id) {
        return Err(ArxivError::BadId(paper_id.to_string()));
    }
    // Mirrors serve the latest revision at the unversioned path.
    let bare_id = match paper_id.find('v') {
        Some(pos) => &paper_id[..pos],
        None => paper_id,
    };
    let url = format!("{}/{}", mirror_base.trim_end_matches('/'), bare_id);
    let body = if let Some(path) = url.strip_prefix("file://") {
        std::fs::read_to_string(path).map_err(|e| ArxivError::Fetch {
            url: url.clone(),
            cause: e.to_string(),
        })?
    } else {
        let agent = ureq::AgentBuilder::new()
            .timeout(std::time::Duration::from_secs(30))
            .build();
        match agent.get(&url).call() {
            Ok(response) => response.into_string().map_err(|e| ArxivError::Fetch {
                url: url.clone(),
                cause: e.to_string(),
            })?,
            Err(ureq::Error::Status(status, _)) => {
                return Err(ArxivError::Http { status, url });
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(ArxivError::Fetch { url, cause: t.to_string() });
            }
        }
    };
    if body.trim().is_empty() {
        return Err(ArxivError::EmptyBody { url });
    }
    let text = html_to_text(&body);
    let (window, truncated) = window_around(&text, keywords);
    Ok(FetchedHtml { url, window, truncated })
}

/// Asks the backend for the target equation plus a self-scored checklist.
/// The confidence is the locally counted number of `yes` answers out of the
/// 11 fixed items; the rubric is a documented reconstruction, the source
/// material never defines one.
pub fn extract_equation_from_html(
    window: &str,
    target: &str,
    source_url: &str,
    cfg: &ChatConfig,
    backend: &mut dyn ChatBackend,
) -> Result<ExtractedEquation, ArxivError> {
    if window.trim().is_empty() {
        return Err(ArxivError::EmptyWindow);
    }
    let prompt = EXTRACT_PROMPT
        .replace("{target}", target)
        .replace("{window}", window);
    let response = backend.complete(&cfg.request(prompt).map_err(ArxivError::Llm)?)?;
    let text = &response.content;
    let latex_pos = text.find("LATEX:").ok_or(ArxivError::MissingMarker("LATEX:"))?;
    let check_pos = text
        .find("CHECKLIST:")
        .ok_or(ArxivError::MissingMarker("CHECKLIST:"))?;
    if check_pos < latex_pos {
        return Err(ArxivError::MissingMarker("LATEX:"));
    }
    let latex = text[latex_pos + "LATEX:".len()..check_pos]
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    if latex.is_empty() {
        return Err(ArxivError::EmptyLatex);
    }
    let mut score = 0u32;
    for line in text[check_pos + "CHECKLIST:".len()..].lines() {
        let line = line.trim();
        let Some((label, answer)) = line.split_once('.') else { continue };
        if label.bytes().all(|b| b.is_ascii_digit()) && !label.is_empty() {
            if answer.trim().eq_ignore_ascii_case("yes") {
                score += 1;
            }
        }
    }
    Ok(ExtractedEquation {
        latex,
        confidence: (score.min(CHECKLIST_ITEMS), CHECKLIST_ITEMS),
        source_url: source_url.to_string(),
        context_window: window.to_string(),
    })
}

/// Deliberately degraded PDF path: reports a one-character extraction so an
/// agent can notice the failure and pivot to the HTML route. Never errors.
pub fn extract_text_stub(path: &str) -> String {
    format!("Extracted 1 characters from PDF: {path}")
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Sym(String),
    Open,
    Close,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

/// Reads a `{...}` group, returning (content, remainder after `}`).
fn brace_group(latex: &str) -> Result<(&str, &str), ArxivError> {
    let rest = latex.trim_start();
    let mut chars = rest.char_indices();
    match chars.next() {
        Some((_, '{')) => {}
        _ => {
            return Err(ArxivError::UnbalancedGroup(format!(
                "expected `{{` at `{}`",
                rest.chars().take(20).collect::<String>()
            )))
        }
    }
    let mut depth = 1usize;
    for (i, c) in chars {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((&rest[1..i], &rest[i + 1..]));
                }
            }
            _ => {}
        }
    }
    Err(ArxivError::UnbalancedGroup(format!("unclosed `{{` in `{rest}`")))
}

fn lex_latex(mut rest: &str, out: &mut Vec<Tok>) -> Result<(), ArxivError> {
    let mut depth = 0isize;
    while let Some(c) = rest.chars().next() {
        match c {
            c if c.is_whitespace() => rest = &rest[c.len_utf8()..],
            '\\' => {
                let body = &rest[1..];
                let name: String =
                    body.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
                if name.is_empty() {
                    // Spacing controls like `\,` and `\;`.
                    let skip = body.chars().next().map_or(0, |c| c.len_utf8());
                    rest = &body[skip..];
                    continue;
                }
                rest = &body[name.len()..];
                match name.as_str() {
                    "frac" => {
                        let (num, after_num) = brace_group(rest)?;
                        let (den, after_den) = brace_group(after_num)?;
                        out.push(Tok::Open);
                        lex_latex(num, out)?;
                        out.push(Tok::Close);
                        out.push(Tok::Slash);
                        out.push(Tok::Open);
                        lex_latex(den, out)?;
                        out.push(Tok::Close);
                        rest = after_den;
                    }
                    "left" | "right" => {}
                    "cdot" | "times" => out.push(Tok::Star),
                    "quad" | "qquad" => {}
                    other => return Err(ArxivError::Unsupported(format!("\\{other}"))),
                }
            }
            '{' => {
                depth += 1;
                out.push(Tok::Open);
                rest = &rest[1..];
            }
            '}' => {
                depth -= 1;
                if depth < 0 {
                    return Err(ArxivError::UnbalancedGroup("stray `}`".into()));
                }
                out.push(Tok::Close);
                rest = &rest[1..];
            }
            '(' => {
                out.push(Tok::Open);
                rest = &rest[1..];
            }
            ')' => {
                out.push(Tok::Close);
                rest = &rest[1..];
            }
            '+' => {
                out.push(Tok::Plus);
                rest = &rest[1..];
            }
            '-' | '\u{2212}' => {
                out.push(Tok::Minus);
                rest = &rest[c.len_utf8()..];
            }
            '*' | '\u{b7}' => {
                out.push(Tok::Star);
                rest = &rest[c.len_utf8()..];
            }
            '/' => {
                out.push(Tok::Slash);
                rest = &rest[1..];
            }
            '^' => {
                out.push(Tok::Caret);
                rest = &rest[1..];
            }
            '_' => {
                // Subscripts fuse into the symbol name: V_0 and V_{0} -> V0.
                let Some(Tok::Sym(name)) = out.last_mut() else {
                    return Err(ArxivError::Unsupported("`_` without a symbol".into()));
                };
                let body = &rest[1..];
                if body.starts_with('{') {
                    let (sub, after) = brace_group(body)?;
                    let sub = sub.trim();
                    if sub.is_empty() || !sub.chars().all(|c| c.is_ascii_alphanumeric()) {
                        return Err(ArxivError::Unsupported(format!(
                            "subscript `{{{sub}}}`"
                        )));
                    }
                    name.push_str(sub);
                    rest = after;
                } else {
                    let Some(sc) = body.chars().next() else {
                        return Err(ArxivError::Unsupported("dangling `_`".into()));
                    };
                    if !sc.is_ascii_alphanumeric() {
                        return Err(ArxivError::Unsupported(format!("subscript `{sc}`")));
                    }
                    name.push(sc);
                    rest = &body[sc.len_utf8()..];
                }
            }
            c if c.is_ascii_digit() || c == '.' => {
                let len = rest
                    .chars()
                    .take_while(|c| c.is_ascii_digit() || *c == '.')
                    .map(|c| c.len_utf8())
                    .sum();
                out.push(Tok::Num(rest[..len].to_string()));
                rest = &rest[len..];
            }
            // TeX reads letters one at a time; `8mL` is three factors, and
            // multi-character names only arise through subscript fusion.
            c if c.is_ascii_alphabetic() => {
                out.push(Tok::Sym(c.to_string()));
                rest = &rest[1..];
            }
            other => {
                return Err(ArxivError::Unsupported(format!("character `{other}`")));
            }
        }
    }
    if depth != 0 {
        return Err(ArxivError::UnbalancedGroup("unclosed `{`".into()));
    }
    Ok(())
}

/// Deterministic LaTeX-to-DSL translation for the supported subset:
/// `\frac{a}{b}` becomes `(a) / (b)`, subscripts fuse (`V_0` to `V0`),
/// adjacency becomes multiplication, and anything left of `=` is dropped.
/// Unknown macros are errors; there is no best-effort fallback.
pub fn latex_to_dsl(latex: &str, _variable: &str) -> Result<String, ArxivError> {
    let rhs = match latex.split_once('=') {
        Some((_, rhs)) => rhs,
        None => latex,
    };
    let mut tokens = Vec::new();
    lex_latex(rhs, &mut tokens)?;
    if tokens.is_empty() {
        return Err(ArxivError::EmptyLatex);
    }

    // Adjacent values multiply: `8 m L^2` -> `8 * m * L^2`, `)(` -> `)*(`.
    let mut spliced: Vec<Tok> = Vec::with_capacity(tokens.len() * 2);
    for token in tokens {
        if let Some(prev) = spliced.last() {
            let ends_value = matches!(prev, Tok::Num(_) | Tok::Sym(_) | Tok::Close);
            let starts_value = matches!(token, Tok::Num(_) | Tok::Sym(_) | Tok::Open);
            if ends_value && starts_value {
                spliced.push(Tok::Star);
            }
        }
        spliced.push(token);
    }

    let mut out = String::new();
    for token in &spliced {
        match token {
            Tok::Num(s) => out.push_str(s),
            Tok::Sym(s) => out.push_str(s),
            Tok::Open => out.push('('),
            Tok::Close => out.push(')'),
            Tok::Plus => out.push_str(" + "),
            Tok::Minus => out.push_str(" - "),
            Tok::Star => out.push_str(" * "),
            Tok::Slash => out.push_str(" / "),
            Tok::Caret => out.push('^'),
        }
    }
    Ok(out)
}
