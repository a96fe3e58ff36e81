//! fitagent: an autonomous equation-fitting agent.
//!
//! The crate wires an LLM-driven ReAct loop to a deterministic numerical
//! core. The model proposes a governing equation from its own knowledge (or
//! from a fetched paper), the equation is compiled into a closed expression
//! DSL, and Levenberg-Marquardt fits it to tabular data. Every LLM exchange
//! can be recorded to a transcript and replayed bit-for-bit, so whole agent
//! runs are reproducible offline.
//!
//! Start with the runnable examples:
//!
//! - `expr_dsl_tour`: parse, print, evaluate and differentiate-by-eye the DSL
//! - `fit_hall_petch`: nonlinear fit of yield strength vs grain size
//! - `paris_region_pipeline`: Region II auto-selection and log-space fitting
//! - `kuhn_variants`: the HOMO-LUMO gap model and its recalled variants
//! - `strain_response`: piecewise strain coupling on the gap model
//! - `latex_to_expression`: LaTeX-to-DSL translation path
//! - `replay_agent_run`: a full agent episode from a canned transcript
//! - `record_and_replay`: transcript round-trip semantics
//!
//! The same functionality is exposed by the `fitagent` binary (`fitagent
//! run`, `fitagent synth`).

pub mod agent;
pub mod arxiv;
pub mod cli;
pub mod dataset;
pub mod eqgen;
pub mod expr;
pub mod fit;
pub mod llm;
pub mod numfmt;
pub mod physics;
pub mod region;
pub mod report;
pub mod synth;
pub mod task;
pub mod tools;
