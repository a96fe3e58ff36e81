//! Task catalogue: per-case-study role prompts, recall context, column
//! defaults, and extraction wiring.
//!
//! A [`TaskConfig`] is pure data. Everything the agent loop and the tool
//! executors need to specialize for a case study lives here, so adding a
//! task means adding one constructor arm and (if it needs extra tools)
//! one arm in the registry builder.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::arxiv::DEFAULT_MIRROR_BASE;
use crate::fit::FitSpace;
use crate::physics;

/// The built-in case studies plus a generic power-law fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    HallPetch,
    Paris,
    KuhnRecall,
    KuhnExtract,
    StrainKuhn,
    Generic,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::HallPetch,
        TaskKind::Paris,
        TaskKind::KuhnRecall,
        TaskKind::KuhnExtract,
        TaskKind::StrainKuhn,
        TaskKind::Generic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::HallPetch => "hall-petch",
            TaskKind::Paris => "paris",
            TaskKind::KuhnRecall => "kuhn-recall",
            TaskKind::KuhnExtract => "kuhn-extract",
            TaskKind::StrainKuhn => "strain-kuhn",
            TaskKind::Generic => "generic",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<TaskKind, String> {
        TaskKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = TaskKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown task `{}` (expected one of: {})", s, names.join(", "))
            })
    }
}

/// Everything that varies between case studies. Field semantics:
///
/// - `system_prompt` is the agent's role text, sent verbatim as the system
///   message of every reasoning call.
/// - `context` seeds equation recall (or names the extraction target); it
///   describes the task without quoting any data values.
/// - `variable` is the independent-variable identifier used in generated
///   expressions; `x_column`/`y_column` are the CSV header defaults.
/// - `constants` and `substitutions` post-process extracted equations:
///   constants pin named symbols to numbers, substitutions rewrite the
///   remaining symbols as expressions over `variable` (applied in order).
#[derive(Debug, Clone)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub system_prompt: String,
    pub context: String,
    pub variable: String,
    pub x_column: String,
    pub y_column: String,
    pub fit_space: FitSpace,
    /// Starting equation for strain-style modification tasks.
    pub base_equation: Option<String>,
    /// HTML mirror base for literature extraction.
    pub mirror_base: String,
    /// Keywords that center the extraction context window.
    pub keywords: Vec<String>,
    /// Paper to fetch when the extraction tool is given no explicit id.
    pub default_paper_id: Option<String>,
    /// Unit note attached to extracted equations.
    pub extraction_units: String,
    /// Physical constants substituted into extracted equations.
    pub constants: BTreeMap<String, f64>,
    /// Geometry rewrites mapping leftover symbols to expressions in
    /// `variable`, e.g. electron count and box length in terms of ring count.
    pub substitutions: Vec<(String, String)>,
}

/// Shared tail of every role prompt: the think/act/observe cadence.
const CADENCE: &str = "At each step: 1) Think about what to do next, 2) Choose an action, 3) Observe results. Be concise and specific.";

impl TaskConfig {
    pub fn new(kind: TaskKind) -> TaskConfig {
        let mut cfg = TaskConfig {
            kind,
            system_prompt: String::new(),
            context: String::new(),
            variable: "x".to_owned(),
            x_column: "x".to_owned(),
            y_column: "y".to_owned(),
            fit_space: FitSpace::Linear,
            base_equation: None,
            mirror_base: DEFAULT_MIRROR_BASE.to_owned(),
            keywords: Vec::new(),
            default_paper_id: None,
            extraction_units: String::new(),
            constants: BTreeMap::new(),
            substitutions: Vec::new(),
        };
        match kind {
            TaskKind::HallPetch => {
                cfg.system_prompt = format!(
                    "You are an agent helping fit grain size and yield strength data using the Hall-Petch equation. {CADENCE}"
                );
                cfg.context = "Fit yield strength versus grain size data for a polycrystalline \
                               metal using the Hall-Petch relationship. The independent variable \
                               is the grain size d (micrometers) and the dependent variable is \
                               the yield strength sigma (MPa)."
                    .to_owned();
                cfg.variable = "d".to_owned();
                cfg.x_column = "d".to_owned();
                cfg.y_column = "sigma".to_owned();
            }
            TaskKind::Paris => {
                cfg.system_prompt = format!(
                    "You are an agent helping fit fatigue crack growth data using the Paris law. {CADENCE}"
                );
                cfg.context = "Fit fatigue crack growth rate versus stress intensity factor \
                               range data using the Paris law over the stable Region II. The \
                               independent variable is the stress intensity factor range dK \
                               (MPa*sqrt(m)) and the dependent variable is the growth rate \
                               dadN (m/cycle)."
                    .to_owned();
                cfg.variable = "dK".to_owned();
                cfg.x_column = "dK".to_owned();
                cfg.y_column = "dadN".to_owned();
                cfg.fit_space = FitSpace::Log10;
            }
            TaskKind::KuhnRecall => {
                cfg.system_prompt = format!(
                    "You are an agent helping fit helicene HOMO-LUMO gap data using the Kuhn equation. {CADENCE}"
                );
                cfg.context = "Fit HOMO-LUMO gap versus ring count data for [n]helicenes using \
                               the Kuhn free-electron relationship for conjugated chains. The \
                               independent variable is the ring count n and the dependent \
                               variable is the gap in hartree. For [n]helicenes the conjugated \
                               electron count is N = 4*n + 2 and the effective box length is \
                               L = 4.5*n bohr; express the equation directly in n using atomic \
                               units (h^2/8m = pi^2/2)."
                    .to_owned();
                cfg.variable = "n".to_owned();
                cfg.x_column = "n".to_owned();
                cfg.y_column = "gap".to_owned();
            }
            TaskKind::KuhnExtract => {
                cfg.system_prompt = format!(
                    "You are an agent helping extract the Kuhn equation from the literature and fit helicene HOMO-LUMO gap data with it. {CADENCE}"
                );
                cfg.context =
                    "the Kuhn equation for the HOMO-LUMO gap of a conjugated chain".to_owned();
                cfg.variable = "n".to_owned();
                cfg.x_column = "n".to_owned();
                cfg.y_column = "gap".to_owned();
                cfg.keywords = vec!["Kuhn".to_owned()];
                cfg.default_paper_id = Some("2303.03490v1".to_owned());
                cfg.extraction_units = "hartree (atomic units)".to_owned();
                cfg.constants.insert("h".to_owned(), physics::H);
                cfg.constants.insert("m".to_owned(), physics::M_E);
                // Helicene geometry: N pi electrons and box length L in bohr,
                // both as functions of ring count n.
                cfg.substitutions = vec![
                    ("N".to_owned(), "4 * n + 2".to_owned()),
                    ("L".to_owned(), "4.5 * n".to_owned()),
                ];
            }
            TaskKind::StrainKuhn => {
                cfg.system_prompt = "You are an agent that models strain effects on helicene \
                                     HOMO-LUMO gaps. The base Kuhn equation is provided to you. \
                                     Your task is to modify it for strain effects. At each step: \
                                     1) THINK about what to do next, 2) Choose an ACTION, 3) \
                                     OBSERVE the result."
                    .to_owned();
                cfg.context = "Model the HOMO-LUMO gap of a helicene under applied strain. The \
                               independent variable is the dimensionless strain eps (negative \
                               is compression) and the dependent variable is the gap in eV \
                               (1 hartree = 27.2114 eV). Keep the chain size s, the reference \
                               length l0, and the barrier v0 as fit parameters. Compression \
                               shortens the box roughly linearly while tension is blunted, and \
                               moderate tension raises the barrier before it falls off."
                    .to_owned();
                cfg.variable = "eps".to_owned();
                cfg.x_column = "epsilon".to_owned();
                cfg.y_column = "gap".to_owned();
                cfg.base_equation = Some(format!(
                    "gap = box_coeff * (s + 1) / l0^2 + v0 * (1 - 1/s), with box_coeff = \
                     h^2/(8m) = {} in atomic units (gap in hartree, l0 in bohr, s monomer \
                     units, v0 in hartree)",
                    physics::BOX_COEFF
                ));
            }
            TaskKind::Generic => {
                cfg.system_prompt = format!(
                    "You are an agent helping fit experimental data with a physically motivated equation. {CADENCE}"
                );
                cfg.context = "Fit the loaded experimental dataset with a physically motivated \
                               equation. The independent variable is x and the dependent \
                               variable is y; a power law y = C * x^m is a reasonable default \
                               when nothing more specific applies."
                    .to_owned();
            }
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for kind in TaskKind::ALL {
            assert_eq!(kind.name().parse::<TaskKind>().unwrap(), kind);
        }
        let err = "hall_petch".parse::<TaskKind>().unwrap_err();
        assert!(err.contains("unknown task"), "{err}");
        assert!(err.contains("hall-petch"), "{err}");
    }

    #[test]
    fn role_prompts_follow_the_cadence() {
        for kind in TaskKind::ALL {
            let cfg = TaskConfig::new(kind);
            assert!(cfg.system_prompt.starts_with("You are an agent"), "{kind}");
            assert!(cfg.system_prompt.contains("1)"), "{kind}");
            assert!(cfg.system_prompt.contains("2)"), "{kind}");
            assert!(cfg.system_prompt.contains("3)"), "{kind}");
        }
    }

    #[test]
    fn hall_petch_role_text_is_fixed() {
        let cfg = TaskConfig::new(TaskKind::HallPetch);
        assert_eq!(
            cfg.system_prompt,
            "You are an agent helping fit grain size and yield strength data using the \
             Hall-Petch equation. At each step: 1) Think about what to do next, 2) Choose an \
             action, 3) Observe results. Be concise and specific."
        );
    }

    #[test]
    fn strain_role_mentions_the_base_equation() {
        let cfg = TaskConfig::new(TaskKind::StrainKuhn);
        assert!(cfg.system_prompt.contains("base Kuhn equation is provided"));
        let base = cfg.base_equation.unwrap();
        assert!(base.contains("4.934802200544679"), "{base}");
        assert!(base.contains("(s + 1) / l0^2"), "{base}");
    }

    #[test]
    fn column_defaults_match_the_synthetic_generators() {
        let hp = TaskConfig::new(TaskKind::HallPetch);
        assert_eq!((hp.x_column.as_str(), hp.y_column.as_str()), ("d", "sigma"));
        let paris = TaskConfig::new(TaskKind::Paris);
        assert_eq!(
            (paris.x_column.as_str(), paris.y_column.as_str()),
            ("dK", "dadN")
        );
        assert_eq!(paris.fit_space, FitSpace::Log10);
        let kuhn = TaskConfig::new(TaskKind::KuhnRecall);
        assert_eq!((kuhn.x_column.as_str(), kuhn.y_column.as_str()), ("n", "gap"));
        assert_eq!(kuhn.fit_space, FitSpace::Linear);
        let strain = TaskConfig::new(TaskKind::StrainKuhn);
        assert_eq!(strain.x_column.as_str(), "epsilon");
        assert_eq!(strain.variable, "eps");
    }

    #[test]
    fn extraction_wiring_is_complete() {
        let cfg = TaskConfig::new(TaskKind::KuhnExtract);
        assert_eq!(cfg.default_paper_id.as_deref(), Some("2303.03490v1"));
        assert_eq!(cfg.keywords, vec!["Kuhn".to_owned()]);
        assert_eq!(cfg.constants.get("h"), Some(&physics::H));
        assert_eq!(cfg.constants.get("m"), Some(&physics::M_E));
        assert_eq!(cfg.substitutions.len(), 2);
        assert_eq!(cfg.substitutions[0].0, "N");
        assert!(cfg.mirror_base.starts_with("https://"));
    }

    #[test]
    fn recall_contexts_quote_no_data_values() {
        // Contexts may name units and geometry, never observed data points.
        for kind in TaskKind::ALL {
            let cfg = TaskConfig::new(kind);
            assert!(!cfg.context.is_empty(), "{kind}");
            assert!(!cfg.context.contains(".csv"), "{kind}");
        }
    }
}
