//! Replays the recorded Hall-Petch agent session fully offline and prints
//! the iteration-by-iteration trace plus the final summary. The transcript
//! under fixtures/replays/ holds every chat exchange of the original run;
//! strict mode verifies the rebuilt prompts still digest-match it.

use std::path::Path;

use fitagent::agent::{self, AgentState, RunPolicy};
use fitagent::llm::{ReplayBackend, ReplayMode};
use fitagent::report;
use fitagent::synth;
use fitagent::task::{TaskConfig, TaskKind};
use fitagent::tools::{registry_for, RunContext};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("hall_petch.csv");
    synth::write_csv(&synth::hall_petch_noiseless(), &data).unwrap();

    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/replays/hall_petch.jsonl");
    let backend = ReplayBackend::from_file(&fixture, ReplayMode::Strict).unwrap();

    let task = TaskConfig::new(TaskKind::HallPetch);
    let registry = registry_for(task.kind);
    let mut ctx = RunContext::new(task, Box::new(backend), dir.path().join("out"));
    ctx.data_path = Some(data);

    let mut state = AgentState::new();
    agent::run(&mut state, &registry, &mut ctx, &RunPolicy::default());

    for entry in &state.history {
        println!("--- iteration {} [{:?}] ---", entry.iteration, entry.outcome);
        println!("THOUGHT: {}", entry.thought);
        println!("OBSERVATION: {}\n", entry.observation);
    }
    println!("{}", report::summary_block(&state));
}
