use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use tempqa_core::gateway::{ChatRequest, EndpointConfig, FnBackend, Gateway, ResponseCache, TransportError};
use tempqa_core::pipeline::{self, AskOptions, Book, Llm};
use tempqa_core::prompts::PromptBundle;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn tempqa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempqa"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = tempqa(&["validate", "--manifest", s(&fixture("three_leaders/manifest.json"))], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("1 TFD verified"));

    let gore = tempqa(&["validate", "--manifest", s(&fixture("three_leaders/manifest_gore.json"))], dir.path());
    assert_eq!(gore.status.code(), Some(1));
    let text = stdout(&gore);
    assert!(text.contains("violated by 2 pair(s)"), "{text}");
    assert!(text.contains("Gore") && text.contains("Bush") && text.contains("Obama"));

    let manifest = std::fs::read_to_string(fixture("three_leaders/manifest.json")).unwrap();
    let moved = dir.path().join("manifest.json");
    std::fs::write(&moved, manifest).unwrap();
    let missing = tempqa(&["validate", "--manifest", s(&moved)], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("leader.csv"));

    let no_manifest = tempqa(&["validate"], dir.path());
    assert_eq!(no_manifest.status.code(), Some(2));
}

#[test]
fn generate_subset_then_score_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let qa = dir.path().join("qa.jsonl");
    let gen = tempqa(
        &[
            "generate",
            "--manifest",
            s(&fixture("leaders/manifest.json")),
            "--relations",
            "overlap-current,meet",
            "--out",
            s(&qa),
        ],
        dir.path(),
    );
    assert_eq!(gen.status.code(), Some(0), "{}", stderr(&gen));
    assert!(stdout(&gen).contains("overlap-current"));
    let items = pipeline::read_items(&qa).unwrap();
    assert!(!items.is_empty());
    assert!(items
        .iter()
        .filter(|qa| qa.hops.is_none())
        .all(|qa| ["overlap-current", "meet"].contains(&qa.relation.to_string().as_str())));

    let bad = tempqa(
        &["generate", "--manifest", s(&fixture("leaders/manifest.json")), "--relations", "sideways"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let scored = tempqa(
        &[
            "score",
            "--manifest",
            s(&fixture("leaders/manifest.json")),
            "--qa",
            s(&qa),
            "--responses",
            s(&empty),
        ],
        dir.path(),
    );
    assert_eq!(scored.status.code(), Some(1));

    let responses: Vec<pipeline::ResponseRecord> = items
        .iter()
        .map(|qa| pipeline::ResponseRecord {
            id: qa.id.clone(),
            model: "echo".into(),
            prompt: "reasoning".into(),
            book: Book::Closed,
            response: Some(qa.answers.first().map(|a| a.values.join(" ")).unwrap_or_default()),
            error: None,
        })
        .collect();
    let rpath = dir.path().join("responses.jsonl");
    pipeline::write_jsonl(&rpath, &responses).unwrap();
    let scores = dir.path().join("out/scores.jsonl");
    let scored = tempqa(
        &[
            "score",
            "--manifest",
            s(&fixture("leaders/manifest.json")),
            "--qa",
            s(&qa),
            "--responses",
            s(&rpath),
            "--slices",
            "overall,relation",
            "--out",
            s(&scores),
        ],
        dir.path(),
    );
    assert_eq!(scored.status.code(), Some(0), "{}", stderr(&scored));
    let csv = std::fs::read_to_string(scores.with_extension("csv")).unwrap();
    assert!(csv.starts_with("model,slice,key,n,A,T,AT,delta"));
    assert!(csv.contains("echo,overall,all,"));
    assert!(scores.with_extension("txt").is_file());

    let report = tempqa(&["report", "--qa", s(&qa), "--scores", s(&scores), "--slices", "overall"], dir.path());
    assert_eq!(report.status.code(), Some(0), "{}", stderr(&report));
    assert!(stdout(&report).contains("overall"));
    assert!(!stdout(&report).contains("relation"));
}

#[test]
fn ask_replays_a_warm_cache_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let base: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("three_leaders/manifest.json")).unwrap()).unwrap();
    let mut m = base.clone();
    m["datasets"][0]["csv"] = serde_json::Value::String(s(&fixture("three_leaders/leader.csv")).into());
    m["providers"] = serde_json::json!([{
        "name": "offline", "base_url": "http://127.0.0.1:1/v1", "model": "small-1", "max_concurrency": 2
    }]);
    let manifest = dir.path().join("manifest.json");
    std::fs::write(&manifest, serde_json::to_string_pretty(&m).unwrap()).unwrap();

    let qa = dir.path().join("qa.jsonl");
    let gen = tempqa(&["generate", "--manifest", s(&manifest), "--out", s(&qa)], dir.path());
    assert_eq!(gen.status.code(), Some(0), "{}", stderr(&gen));
    let items = pipeline::read_items(&qa).unwrap();

    let endpoint: EndpointConfig = serde_json::from_value(m["providers"][0].clone()).unwrap();
    let backend = FnBackend(|_: &EndpointConfig, r: &ChatRequest| -> Result<String, TransportError> {
        Ok(format!("cached: {}", r.user))
    });
    let gateway = Gateway::new(endpoint, Arc::new(backend));
    let cache_dir = dir.path().join("cache");
    let cache = ResponseCache::new(&cache_dir).unwrap();
    let prompts = PromptBundle::builtin();
    let llm = Llm {
        gateway: &gateway,
        cache: Some(&cache),
        prompts: &prompts,
    };
    let warm = pipeline::ask(
        &items,
        &llm,
        &AskOptions {
            prompt: "reasoning".into(),
            book: Book::Closed,
        },
    )
    .unwrap();

    let out = dir.path().join("responses.jsonl");
    let ask = tempqa(
        &[
            "ask",
            "--manifest",
            s(&manifest),
            "--qa",
            s(&qa),
            "--provider",
            "offline",
            "--cache-dir",
            s(&cache_dir),
            "--out",
            s(&out),
        ],
        dir.path(),
    );
    assert_eq!(ask.status.code(), Some(0), "{}", stderr(&ask));
    assert!(stdout(&ask).contains(&format!("{} responses, 0 failed, 0 network calls", items.len())));
    let replayed: Vec<pipeline::ResponseRecord> = pipeline::read_jsonl(&out).unwrap();
    assert_eq!(replayed, warm);

    let unknown = tempqa(
        &["ask", "--manifest", s(&manifest), "--qa", s(&qa), "--provider", "nobody"],
        dir.path(),
    );
    assert_eq!(unknown.status.code(), Some(2));
}
