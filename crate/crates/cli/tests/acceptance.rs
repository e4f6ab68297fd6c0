//! One PASS/FAIL line per acceptance criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration as StdDuration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempqa_core::eval::{extract_dates, score_item, EvalConfig, Slice};
use tempqa_core::interval::{
    classify, condition_for, holds, sample_reference, AllenRelation, ConditionStyle, QueryRelation, ReferenceInterval,
    SampleMode, SamplerConfig, TimeRole,
};
use tempqa_core::manifest::RunManifest;
use tempqa_core::pipeline::{self, Book, GenerateOptions, ResponseRecord};
use tempqa_core::qagen::{base_query, classify_cardinality, genqueries, Cardinality, GenConfig, QAItem, TimeRefs};
use tempqa_core::sql::{execute, QueryAst};
use tempqa_core::store::{check_tfd, temporal_natural_join, AttributeSchema, Interval, TFDecl, TemporalRelation, Value};
use tempqa_core::{Duration, Granularity, TimePoint};

const DAY: Granularity = Granularity::Day;
const ALLEN_PAIRS: usize = 10_000;
const ALLEN_BUDGET: StdDuration = StdDuration::from_secs(5);
const PAIRS_PER_RELATION: usize = 1_000;
const ORACLE_CASES: usize = 200;
const SUITE_BUDGET: StdDuration = StdDuration::from_secs(60);

type Outcome = Result<String, String>;
type Check = Box<dyn Fn() -> Outcome>;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn tp(s: &str) -> TimePoint {
    s.parse().unwrap()
}

fn base() -> i64 {
    TimePoint::day(1990, 1, 1).unwrap().ordinal()
}

fn day(offset: i64) -> TimePoint {
    TimePoint::from_ordinal(DAY, base() + offset).unwrap()
}

fn reference(start: i64, len: i64) -> ReferenceInterval {
    ReferenceInterval::new(day(start), day(start + len), Duration::days(len)).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn allen_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    for _ in 0..ALLEN_PAIRS {
        let (s1, l1) = (rng.random_range(0..5000), rng.random_range(1..1500));
        let (s2, l2) = (rng.random_range(0..5000), rng.random_range(1..1500));
        let a = Interval::closed(day(s1), day(s1 + l1));
        let b = reference(s2, l2);
        let holding: Vec<AllenRelation> = AllenRelation::ALL
            .into_iter()
            .filter(|&r| holds(r.into(), &a, &b, DAY))
            .collect();
        ensure(holding.len() == 1, || format!("{a} vs {b:?}: {holding:?}"))?;
        let c = classify(&a, &b.as_interval(), DAY).map_err(|e| e.to_string())?;
        ensure(c == holding[0], || format!("{a} vs {b:?}: classify {c:?}, holds {:?}", holding[0]))?;
    }
    let took = started.elapsed();
    ensure(took < ALLEN_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{ALLEN_PAIRS} pairs, one relation each, {:.0} ms", took.as_secs_f64() * 1e3))
}

fn single_row(start: i64, end: Option<i64>) -> TemporalRelation {
    keyed("R", "k", "v", &[("a".into(), "x".into(), start, end)])
}

type Row = (String, String, i64, Option<i64>);

fn keyed(name: &str, key: &str, val: &str, rows: &[Row]) -> TemporalRelation {
    let schema = vec![
        AttributeSchema::text(key),
        AttributeSchema::text(val),
        AttributeSchema::date("start"),
        AttributeSchema::date("end"),
    ];
    let mut r = TemporalRelation::new(name, schema, "start", "end", DAY, vec![]).unwrap();
    for (k, v, s, e) in rows {
        let interval = Interval {
            start: day(*s),
            end: e.map(day),
        };
        r.push(vec![Value::text(k), Value::text(v)], interval).unwrap();
    }
    r
}

fn condition_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut relations = QueryRelation::all_base();
    relations.push(QueryRelation::CURRENT);
    let sampler = SamplerConfig::default();
    let mut hits = 0usize;
    for rel in &relations {
        for _ in 0..PAIRS_PER_RELATION {
            let s1 = rng.random_range(0..3000);
            let e1 = rng.random_bool(0.75).then(|| s1 + rng.random_range(1..900));
            let r = single_row(s1, e1);
            let a = r.tuples[0].interval;
            let sampled = rng
                .random_bool(0.5)
                .then(|| sample_reference(&mut rng, &a, *rel, &sampler, DAY, SampleMode::Satisfying).ok())
                .flatten();
            let b = sampled.unwrap_or_else(|| reference(rng.random_range(0..3000), rng.random_range(1..900)));
            let ast = QueryAst {
                relation_name: "R".into(),
                start_attr: "start".into(),
                end_attr: "end".into(),
                select_attrs: vec!["v".into()],
                key_predicates: vec![],
                condition: condition_for(*rel, &b, ConditionStyle::Allen),
                provenance: None,
            };
            let hit = !execute(&ast, &r).map_err(|e| e.to_string())?.is_empty();
            let expected = holds(*rel, &r.tuples[0].interval, &b, DAY);
            ensure(hit == expected, || format!("{rel}: a={} b={b:?}", r.tuples[0].interval))?;
            hits += usize::from(hit);
        }
    }
    Ok(format!(
        "{} relations x {PAIRS_PER_RELATION} pairs agree ({hits} satisfied)",
        relations.len()
    ))
}

fn random_rows(rng: &mut ChaCha8Rng, max: usize, span: i64) -> Vec<Row> {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| {
            let k = ["a", "b", "c"][rng.random_range(0..3)];
            let v = ["x", "y"][rng.random_range(0..2)];
            let s = rng.random_range(0..span);
            let e = rng.random_bool(0.8).then(|| s + rng.random_range(0..span / 3));
            (k.to_string(), v.to_string(), s, e)
        })
        .collect()
}

/// Occupied days `[lo, hi)`; a degenerate row covers its start day.
fn occupied(s: i64, e: Option<i64>, horizon: i64) -> (i64, i64) {
    (s, e.map_or(horizon, |e| e.max(s + 1)))
}

fn tfd_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let span = 30 * 365;
    let horizon = span + 1;
    let tfd = TFDecl::temporal(&["k"], &["v"]);
    let mut violated = 0;
    for _ in 0..ORACLE_CASES {
        let rows = random_rows(&mut rng, 8, span);
        let r = keyed("R", "k", "v", &rows);
        let mut oracle = false;
        'days: for t in 0..horizon {
            let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
            for (k, v, s, e) in &rows {
                let (lo, hi) = occupied(*s, *e, horizon);
                if lo <= t && t < hi {
                    if let Some(prev) = seen.insert(k, v) {
                        if prev != v {
                            oracle = true;
                            break 'days;
                        }
                    }
                }
            }
        }
        let verdict = !check_tfd(&r, &tfd).map_err(|e| e.to_string())?.holds();
        ensure(verdict == oracle, || format!("disagree on {rows:?}"))?;
        violated += usize::from(oracle);
    }
    Ok(format!("{ORACLE_CASES} relations agree ({violated} violating)"))
}

fn join_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let horizon = 1_000_000;
    let mut total = 0;
    for _ in 0..ORACLE_CASES {
        let left = random_rows(&mut rng, 6, 3000);
        let right = random_rows(&mut rng, 6, 3000);
        let joined = temporal_natural_join(&keyed("R", "k", "x", &left), &keyed("S", "k", "y", &right))
            .map_err(|e| e.to_string())?;
        let mut expected = BTreeSet::new();
        for (k1, x, s1, e1) in &left {
            for (k2, y, s2, e2) in &right {
                if k1 != k2 {
                    continue;
                }
                let (a, b) = (occupied(*s1, *e1, horizon), occupied(*s2, *e2, horizon));
                let (lo, hi) = (a.0.max(b.0), a.1.min(b.1));
                if lo < hi {
                    expected.insert((k1.clone(), x.clone(), y.clone(), lo, (hi != horizon).then_some(hi)));
                }
            }
        }
        let got: BTreeSet<_> = joined
            .tuples
            .iter()
            .map(|u| {
                let occ = u.interval.occupancy(DAY);
                let v: Vec<String> = u.values.iter().map(|v| v.to_string()).collect();
                (v[0].clone(), v[1].clone(), v[2].clone(), occ.lo - base(), occ.hi.map(|h| h - base()))
            })
            .collect();
        ensure(got == expected, || format!("left {left:?} right {right:?}"))?;
        total += got.len();
    }
    Ok(format!("{ORACLE_CASES} pairs agree ({total} joined tuples)"))
}

fn count_law() -> Outcome {
    let m = RunManifest::load(&fixture("three_leaders/manifest.json")).map_err(|e| e.to_string())?;
    let relations = pipeline::load_relations(&m).map_err(|e| e.to_string())?;
    let leader = &relations["Leader"];
    let tfds = &m.datasets[0].relation.tfds;
    let config = GenConfig {
        seed: m.seed,
        sampler: m.sampler.clone(),
        ..GenConfig::default()
    };
    let out = genqueries("Leader", leader, tfds, &QueryRelation::all_base(), &config).map_err(|e| e.to_string())?;
    let expected = leader.tuples.len() * tfds.len() * 13;
    ensure(leader.tuples.len() == 3 && tfds.len() == 1, || "fixture shape".into())?;
    ensure(out.queries.len() + out.skipped.len() == expected, || {
        format!("{} queries + {} skips", out.queries.len(), out.skipped.len())
    })?;
    ensure(out.skipped.iter().all(|s| !s.reason.is_empty()), || "unexplained skip".into())?;
    Ok(format!("{} queries, {} reported skips", out.queries.len(), out.skipped.len()))
}

fn leaders() -> (RunManifest, BTreeMap<String, TemporalRelation>) {
    let m = RunManifest::load(&fixture("leaders/manifest.json")).unwrap();
    let r = pipeline::load_relations(&m).unwrap();
    (m, r)
}

/// Gold for the tuple keyed by `country`/`name`, queried with `qrel` against `b`.
fn gold_item(country: &str, name: &str, qrel: QueryRelation, b: &ReferenceInterval) -> Result<QAItem, String> {
    let (m, relations) = leaders();
    let r = &relations["Leader"];
    let tfd = &m.dataset("Leader").unwrap().relation.tfds[0];
    let attrs = ["country".to_string(), "name".to_string()];
    let u = r
        .tuples
        .iter()
        .find(|u| r.project(u, &attrs) == [&Value::text(country), &Value::text(name)])
        .ok_or("tuple missing from fixture")?;
    let mut ast = base_query(r, tfd, u, &[], qrel);
    ast.condition = condition_for(qrel, b, ConditionStyle::Allen);
    let (cardinality, answers, time_refs) = classify_cardinality(&ast, r, qrel)
        .map_err(|e| e.to_string())?
        .ok_or("answer lacks a time reference")?;
    Ok(QAItem {
        id: "gold".into(),
        dataset: "Leader".into(),
        questions: vec!["?".into()],
        sql: String::new(),
        relation: qrel,
        cardinality,
        answers,
        time_refs,
        hops: None,
        context: None,
        granularity: DAY,
        provenance: None,
        answer_domain: vec![],
    })
}

fn refs(pairs: &[(TimeRole, &str)]) -> TimeRefs {
    pairs.iter().map(|(r, t)| (*r, tp(t))).collect()
}

fn temer() -> Outcome {
    let b = ReferenceInterval::from_end(tp("2019-05-01"), Duration::months(4)).map_err(|e| e.to_string())?;
    let qa = gold_item("Brazil", "Michel Temer", AllenRelation::Meet.into(), &b)?;
    ensure(qa.cardinality == Cardinality::Unique, || format!("{:?}", qa.cardinality))?;
    ensure(qa.answers[0].values == ["Michel Temer"], || format!("{:?}", qa.answers))?;
    ensure(qa.time_refs[0] == refs(&[(TimeRole::End, "2019-01-01")]), || format!("{:?}", qa.time_refs))?;
    let response = "The answer is Michel Temer, whose term ended in January 1, 2019.";
    let r = score_item(&qa, "m", response, &EvalConfig::default(), None).map_err(|e| e.to_string())?;
    ensure(r.answer_correct && r.time_score == Some(100) && r.at_correct, || format!("{r:?}"))?;
    Ok("Michel Temer, end 2019-01-01, A=true T=100 AT=true".into())
}

fn akihito() -> Outcome {
    let b = ReferenceInterval::new(tp("1995-03-01"), tp("2004-03-01"), Duration::years(9)).map_err(|e| e.to_string())?;
    let qa = gold_item("Japan", "Akihito", AllenRelation::Contain.into(), &b)?;
    ensure(qa.answers.len() == 1 && qa.answers[0].values == ["Akihito"], || format!("{:?}", qa.answers))?;
    let gold = refs(&[(TimeRole::Start, "1989-01-07"), (TimeRole::End, "2019-05-01")]);
    ensure(qa.time_refs[0] == gold, || format!("{:?}", qa.time_refs))?;
    let c = EvalConfig::default();
    let full = score_item(&qa, "gemma", "Akihito. He reigned from 1989-01-07 to 2019-05-01.", &c, None)
        .map_err(|e| e.to_string())?;
    let cut = score_item(&qa, "gemma", "Akihito. He reigned from 1989-01-07.", &c, None).map_err(|e| e.to_string())?;
    ensure(full.time_score == Some(100) && full.at_correct, || format!("full {full:?}"))?;
    ensure(cut.time_score == Some(50) && !cut.at_correct, || format!("truncated {cut:?}"))?;
    Ok("full T=100, truncated T=50 with AT=false".into())
}

fn gronchi() -> Outcome {
    let (m, _) = leaders();
    let items = pipeline::generate(&m, &GenerateOptions::default(), None)
        .map_err(|e| e.to_string())?
        .items;
    let qa = items
        .iter()
        .find(|qa| qa.hops.as_ref().is_some_and(|h| h.len() == 2) && qa.questions[0].contains("7th Winter"))
        .filter(|qa| qa.questions[0].contains("president"))
        .ok_or("no two-hop item for the 7th Winter Games")?;
    ensure(qa.answers.len() == 1 && qa.answers[0].values == ["Giovanni Gronchi"], || format!("{:?}", qa.answers))?;
    ensure(
        qa.answers[0].interval == Interval::closed(tp("1956-01-26"), tp("1956-02-05")),
        || format!("{}", qa.answers[0].interval),
    )?;
    let gold = refs(&[(TimeRole::Start, "1955-05-11"), (TimeRole::End, "1962-05-11")]);
    ensure(qa.time_refs[0] == gold, || format!("{:?}", qa.time_refs))?;

    let gpt4o = "The 7th Winter Olympic Games were held in Cortina d'Ampezzo, Italy in February 1956. The President of Italy at that time was Giovanni Gronchi, who served from May 1955 to May 1962.";
    let country_only = "The 7th Winter Olympic Games were held in Italy in 1956; its president was Luigi Einaudi.";
    let records: Vec<ResponseRecord> = [("gpt-4o", gpt4o), ("partial", country_only)]
        .into_iter()
        .map(|(model, text)| ResponseRecord {
            id: qa.id.clone(),
            model: model.into(),
            prompt: "reasoning".into(),
            book: Book::Closed,
            response: Some(text.into()),
            error: None,
        })
        .collect();
    let scored = pipeline::score(std::slice::from_ref(qa), &records, &m.evaluation, None).map_err(|e| e.to_string())?;
    let hops: Vec<_> = scored.records.iter().map(|r| r.hop_correct.clone()).collect();
    ensure(hops == [Some(vec![true, true]), Some(vec![true, false])], || format!("{hops:?}"))?;
    let report = pipeline::report(std::slice::from_ref(qa), &scored.records[1..], &[Slice::Overall])
        .map_err(|e| e.to_string())?;
    let h1 = report.rows[0].h.first().copied().flatten();
    ensure(h1 == Some(100.0), || format!("H_1 = {h1:?}"))?;
    Ok("Gronchi clipped to 1956-01-26..1956-02-05, hops [t,t] and [t,f], H_1 = 100".into())
}

fn date_formats() -> Outcome {
    let want = TimePoint::day(2025, 1, 26).map_err(|e| e.to_string())?;
    for s in ["26 Jan 2025", "January 26, 2025", "2025/01/26"] {
        let found = extract_dates(s);
        ensure(found.len() == 1 && found[0].value == want, || format!("{s}: {found:?}"))?;
    }
    Ok("three spellings give 2025-01-26".into())
}

fn tempqa(args: &[&str], cwd: &Path) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tempqa"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!("tempqa {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn heritage() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scores = dir.path().join("scores.jsonl");
    let a = fixture("alignment");
    tempqa(
        &[
            "score",
            "--manifest",
            a.join("manifest.json").to_str().unwrap(),
            "--qa",
            a.join("qa.jsonl").to_str().unwrap(),
            "--responses",
            a.join("responses.jsonl").to_str().unwrap(),
            "--out",
            scores.to_str().unwrap(),
        ],
        dir.path(),
    )?;
    let items = pipeline::read_items(&a.join("qa.jsonl")).map_err(|e| e.to_string())?;
    let heritage: BTreeSet<&str> = items
        .iter()
        .filter(|qa| qa.dataset == "Heritage" && qa.questions[0].contains("Cheoyongmu"))
        .map(|qa| qa.id.as_str())
        .collect();
    let records: Vec<tempqa_core::eval::ScoreRecord> = pipeline::read_jsonl(&scores).map_err(|e| e.to_string())?;
    let rows: Vec<_> = records.iter().filter(|r| heritage.contains(r.qa_id.as_str())).collect();
    ensure(rows.len() == 8, || format!("{} Heritage rows", rows.len()))?;
    let at: BTreeSet<&str> = rows.iter().filter(|r| r.at_correct).map(|r| r.model.as_str()).collect();
    let want = BTreeSet::from(["gpt-4", "gpt-4o", "llama3.1-70b"]);
    ensure(at == want, || format!("AT true for {at:?}"))?;
    Ok("AT=true exactly for gpt-4, gpt-4o, llama3.1-70b".into())
}

/// validate, generate and score in `dir`; returns the produced files.
fn pipeline_run(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let manifest = fixture("leaders/manifest.json");
    let m = manifest.to_str().unwrap();
    tempqa(&["validate", "--manifest", m], dir)?;
    tempqa(&["generate", "--manifest", m, "--mode", "template", "--seed", "7", "--out", "qa.jsonl"], dir)?;
    let items = pipeline::read_items(&dir.join("qa.jsonl")).map_err(|e| e.to_string())?;
    let responses: Vec<ResponseRecord> = items
        .iter()
        .enumerate()
        .map(|(i, qa)| ResponseRecord {
            id: qa.id.clone(),
            model: "replay".into(),
            prompt: "reasoning".into(),
            book: Book::Closed,
            response: Some(match qa.answers.first() {
                Some(a) if i % 3 != 0 => format!("{} from {}", a.values.join(", "), a.interval),
                _ => "No answer".into(),
            }),
            error: None,
        })
        .collect();
    pipeline::write_jsonl(&dir.join("responses.jsonl"), &responses).map_err(|e| e.to_string())?;
    tempqa(
        &["score", "--manifest", m, "--qa", "qa.jsonl", "--responses", "responses.jsonl", "--out", "scores.jsonl"],
        dir,
    )?;
    let mut files = BTreeMap::new();
    for name in ["qa.jsonl", "scores.jsonl", "scores.csv", "scores.txt"] {
        files.insert(name.to_string(), std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?);
    }
    Ok(files)
}

fn determinism(suite_start: Instant) -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline_run(a.path())?;
    let second = pipeline_run(b.path())?;
    for (name, bytes) in &first {
        ensure(second.get(name) == Some(bytes), || format!("{name} differs between runs"))?;
    }
    let took = suite_start.elapsed();
    ensure(took < SUITE_BUDGET, || format!("suite took {took:?}"))?;
    let n = first["qa.jsonl"].iter().filter(|&&c| c == b'\n').count();
    Ok(format!("{} files identical over {n} items, suite {:.1} s", first.len(), took.as_secs_f64()))
}

fn main() {
    let start = Instant::now();
    let criteria: Vec<(&str, Check)> = vec![
        ("Allen partition", Box::new(allen_partition)),
        ("condition/predicate equivalence", Box::new(condition_equivalence)),
        ("TFD checker vs enumeration oracle", Box::new(tfd_oracle)),
        ("temporal join vs nested loop", Box::new(join_oracle)),
        ("genqueries count law", Box::new(count_law)),
        ("Brazil meet question end to end", Box::new(temer)),
        ("partial time credit", Box::new(akihito)),
        ("multi-hop Olympic question", Box::new(gronchi)),
        ("date-format equivalence", Box::new(date_formats)),
        ("heritage scoring fixture", Box::new(heritage)),
        ("determinism", Box::new(move || determinism(start))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
