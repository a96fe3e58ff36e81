//! Record/replay round trip for the chat backend. A recording wraps any
//! backend and appends each exchange to a JSONL transcript; replaying that
//! file serves the same responses offline, and strict mode refuses to
//! answer if the request no longer hashes to what was recorded.

use fitagent::llm::{
    ChatBackend, ChatConfig, ChatResponse, ChatTranscript, RecordBackend, ReplayBackend,
    ReplayMode, TranscriptEntry,
};

fn canned(texts: &[&str]) -> ChatTranscript {
    let probe = ChatConfig::new("gpt-5", "demo").request("demo").unwrap();
    ChatTranscript {
        entries: texts
            .iter()
            .map(|t| TranscriptEntry {
                digest: "unchecked".to_owned(),
                request: probe.clone(),
                response: ChatResponse::text(*t),
            })
            .collect(),
        ..ChatTranscript::default()
    }
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.jsonl");
    let cfg = ChatConfig::new("gpt-5", "You answer with one word.");

    // Stand-in for a live endpoint: a lenient replayer with canned answers.
    let upstream = ReplayBackend::new(canned(&["blue", "today"]), ReplayMode::Lenient);
    let mut recorder = RecordBackend::new(Box::new(upstream), &path).unwrap();
    for q in ["What color is the sky?", "When is now?"] {
        let a = recorder.complete(&cfg.request(q).unwrap()).unwrap();
        println!("live : {q} -> {}", a.content);
    }
    drop(recorder);

    // Same questions, no upstream: strict replay verifies each request
    // digest before answering.
    let mut replay = ReplayBackend::from_file(&path, ReplayMode::Strict).unwrap();
    for q in ["What color is the sky?", "When is now?"] {
        let a = replay.complete(&cfg.request(q).unwrap()).unwrap();
        println!("replay: {q} -> {}", a.content);
    }

    // A drifted prompt is an error, not a wrong answer.
    let mut replay = ReplayBackend::from_file(&path, ReplayMode::Strict).unwrap();
    let err = replay.complete(&cfg.request("What color is grass?").unwrap());
    println!("drift : {}", err.unwrap_err());
}
