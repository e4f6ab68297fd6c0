//! File-to-file stages behind the command line: validate, generate, ask,
//! score and report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{aggregate, score_item, AggregateReport, EvalConfig, EvalError, Judge, ScoreRecord, Slice};
use crate::gateway::{ChatRequest, Gateway, GatewayError, ResponseCache, EVAL_TEMPERATURE};
use crate::interval::QueryRelation;
use crate::manifest::{ManifestError, RunManifest};
use crate::prompts::PromptBundle;
use crate::qagen::{
    answer_domain, assemble_item, build_context, gen_multihop, genqueries, render_template, seeded_rng, sub_seed,
    to_natural_language, Draft, GenConfig, GeneratorMode, QAItem, QaGenError, QuestionGenerator, Skip, TemplateConfig,
};
use crate::store::{
    check_tfd, infer_joined_tfd, load_relation_from_path, temporal_natural_join, StoreError, TFDecl, TemporalRelation,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    QaGen(#[from] QaGenError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("no responses to score")]
    NoResponses,
    #[error("responses refer to unknown QA ids: {}", .0.join(", "))]
    Orphans(Vec<String>),
}

impl PipelineError {
    /// 1 for validation or scoring failures, 2 for I/O and configuration
    /// errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::QaGen(QaGenError::TfdViolated { .. })
            | PipelineError::Store(StoreError::InferredTfdViolated { .. })
            | PipelineError::Eval(EvalError::UnknownQa(_) | EvalError::BadVerdict(_))
            | PipelineError::NoResponses
            | PipelineError::Orphans(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| PipelineError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| PipelineError::Json {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// QA items from JSONL, each checked against the record invariants.
pub fn read_items(path: &Path) -> Result<Vec<QAItem>, PipelineError> {
    let items: Vec<QAItem> = read_jsonl(path)?;
    for qa in &items {
        qa.check()
            .map_err(|e| PipelineError::Invalid(format!("{}: item {}: {e}", path.display(), qa.id)))?;
    }
    Ok(items)
}

pub fn prompts_for(manifest: &RunManifest) -> Result<PromptBundle, PipelineError> {
    match &manifest.prompts_dir {
        Some(dir) => {
            let dir = manifest.resolve(dir);
            PromptBundle::with_overrides(&dir).map_err(io_err(&dir))
        }
        None => Ok(PromptBundle::builtin()),
    }
}

pub fn load_relations(manifest: &RunManifest) -> Result<BTreeMap<String, TemporalRelation>, PipelineError> {
    let mut out = BTreeMap::new();
    for d in &manifest.datasets {
        let r = load_relation_from_path(&d.relation, &manifest.base_dir)?;
        out.insert(d.relation.name.clone(), r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependencyCheck {
    pub relation: String,
    pub tfd: TFDecl,
    /// Violating tuple pairs as rows.
    pub witnesses: Vec<(Vec<String>, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinCheck {
    pub name: String,
    pub inferred: Result<TFDecl, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub dependencies: Vec<DependencyCheck>,
    pub joins: Vec<JoinCheck>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.dependencies.iter().all(|d| d.witnesses.is_empty()) && self.joins.iter().all(|j| j.inferred.is_ok())
    }

    pub fn verified(&self) -> usize {
        self.dependencies.iter().filter(|d| d.witnesses.is_empty()).count()
            + self.joins.iter().filter(|j| j.inferred.is_ok()).count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for d in &self.dependencies {
            if d.witnesses.is_empty() {
                let _ = writeln!(out, "{}: {} holds", d.relation, d.tfd);
                continue;
            }
            let _ = writeln!(out, "{}: {} violated by {} pair(s)", d.relation, d.tfd, d.witnesses.len());
            for (a, b) in &d.witnesses {
                let _ = writeln!(out, "  ({}) vs ({})", a.join(", "), b.join(", "));
            }
        }
        for j in &self.joins {
            match &j.inferred {
                Ok(tfd) => {
                    let _ = writeln!(out, "{}: inferred {} holds", j.name, tfd);
                }
                Err(e) => {
                    let _ = writeln!(out, "{}: {e}", j.name);
                }
            }
        }
        let n = self.verified();
        let failed = self.dependencies.len() + self.joins.len() - n;
        let _ = write!(out, "{n} TFD{} verified", if n == 1 { "" } else { "s" });
        if failed > 0 {
            let _ = write!(out, ", {failed} violated");
        }
        out.push('\n');
        out
    }
}

fn dependency_check(relation: &TemporalRelation, tfd: &TFDecl) -> Result<DependencyCheck, StoreError> {
    let report = check_tfd(relation, tfd)?;
    let row = |i: usize| relation.row_strings(&relation.tuples[i]);
    Ok(DependencyCheck {
        relation: relation.name.clone(),
        tfd: tfd.clone(),
        witnesses: report.violations.iter().map(|v| (row(v.first), row(v.second))).collect(),
    })
}

/// Checks every declared dependency and every join inference. Load and
/// declaration errors are returned as errors; violations are reported.
pub fn validate(manifest: &RunManifest) -> Result<ValidationReport, PipelineError> {
    let relations = load_relations(manifest)?;
    let mut report = ValidationReport::default();
    for d in &manifest.datasets {
        let r = &relations[&d.relation.name];
        for tfd in &r.tfds {
            report.dependencies.push(dependency_check(r, tfd)?);
        }
    }
    for j in &manifest.joins {
        let (left, right) = (&relations[&j.left], &relations[&j.right]);
        let mut sides_hold = true;
        for (r, dep) in [(left, &j.tfd), (right, &j.fd)] {
            if r.tfds.contains(dep) {
                sides_hold &= report
                    .dependencies
                    .iter()
                    .any(|d| d.relation == r.name && &d.tfd == dep && d.witnesses.is_empty());
                continue;
            }
            let check = dependency_check(r, dep)?;
            sides_hold &= check.witnesses.is_empty();
            report.dependencies.push(check);
        }
        let inferred = if sides_hold {
            temporal_natural_join(left, right)
                .and_then(|joined| infer_joined_tfd(&j.fd, &j.tfd, &joined))
                .map_err(|e| e.to_string())
        } else {
            Err("join sides violate their dependencies".into())
        };
        report.joins.push(JoinCheck {
            name: j.name.clone(),
            inferred,
        });
    }
    Ok(report)
}

/// Model access for llm question generation, asking and judging.
#[derive(Clone, Copy)]
pub struct Llm<'a> {
    pub gateway: &'a Gateway,
    pub cache: Option<&'a ResponseCache>,
    pub prompts: &'a PromptBundle,
}

impl<'a> Llm<'a> {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        match self.cache {
            Some(c) => self.gateway.cached_complete(request, c),
            None => self.gateway.complete(request),
        }
    }

    pub fn judge(&self) -> Judge<'a> {
        Judge {
            gateway: self.gateway,
            cache: self.cache,
            prompts: self.prompts,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerateOptions {
    /// Restricts single-hop relations; joins keep their own.
    pub relations: Option<Vec<QueryRelation>>,
    pub paraphrases: Option<usize>,
    pub mode: Option<GeneratorMode>,
}

#[derive(Debug, Clone, Default)]
pub struct GenerateOutcome {
    pub items: Vec<QAItem>,
    /// Combinations without a possible reference interval, per dataset.
    pub skipped: Vec<(String, Skip)>,
    /// Queries whose answers lack a required time reference.
    pub unanswerable: usize,
    /// Question generation failures (llm mode); the item is dropped.
    pub failures: Vec<String>,
}

impl GenerateOutcome {
    pub fn summary(&self) -> String {
        let mut by: BTreeMap<(String, &str), usize> = BTreeMap::new();
        for qa in &self.items {
            let kind = if qa.hops.is_some() { "multi-hop" } else { "single-hop" };
            *by.entry((format!("{} {}", kind, qa.relation), qa.cardinality.name())).or_default() += 1;
        }
        let mut out = String::new();
        for ((rel, card), n) in &by {
            let _ = writeln!(out, "{rel:<28} {card:<9} {n}");
        }
        let _ = writeln!(
            out,
            "{} items, {} skipped combinations, {} without time references, {} generation failures",
            self.items.len(),
            self.skipped.len(),
            self.unanswerable,
            self.failures.len()
        );
        out
    }
}

struct ItemSource<'a> {
    relation: &'a TemporalRelation,
    template: &'a TemplateConfig,
    context_rows: usize,
    domain: Vec<String>,
}

fn questions_for(
    draft: &Draft,
    src: &ItemSource<'_>,
    gen: &QuestionGenerator,
    llm: Option<&Llm<'_>>,
) -> Result<Vec<String>, QaGenError> {
    match gen.mode {
        GeneratorMode::Template => Ok(vec![render_template(&draft.ast, draft.relation, src.template)]),
        GeneratorMode::Llm => {
            let llm = llm.ok_or_else(|| QaGenError::Invalid("llm mode needs a provider".into()))?;
            to_natural_language(&draft.ast, src.relation, gen, llm.prompts, llm.gateway, llm.cache)
        }
    }
}

fn emit(
    draft: &Draft,
    src: &ItemSource<'_>,
    gen: &QuestionGenerator,
    llm: Option<&Llm<'_>>,
    seed: u64,
    out: &mut GenerateOutcome,
) -> Result<(), PipelineError> {
    let questions = match questions_for(draft, src, gen, llm) {
        Ok(q) => q,
        Err(e @ (QaGenError::Gateway(_) | QaGenError::NoQuestions { .. })) => {
            log::warn!("{}: {e}", draft.dataset);
            out.failures.push(format!("{}: {e}", draft.dataset));
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let mut rng = seeded_rng(sub_seed(&[
        &seed.to_string(),
        "context",
        &draft.dataset,
        &draft.seed().to_string(),
    ]));
    let context = build_context(&draft.ast, src.relation, &mut rng, src.context_rows).map_err(QaGenError::from)?;
    match assemble_item(draft, src.relation, questions, Some(context), src.domain.clone())? {
        Some(item) => out.items.push(item),
        None => out.unanswerable += 1,
    }
    Ok(())
}

/// Single-hop items for every dataset, then multi-hop items for every join.
pub fn generate(
    manifest: &RunManifest,
    options: &GenerateOptions,
    llm: Option<&Llm<'_>>,
) -> Result<GenerateOutcome, PipelineError> {
    let relations = load_relations(manifest)?;
    let mut gen = manifest.generator.clone();
    if let Some(m) = options.mode {
        gen.mode = m;
    }
    if let Some(n) = options.paraphrases {
        gen.paraphrases = n;
    }
    if gen.mode == GeneratorMode::Llm && llm.is_none() {
        return Err(PipelineError::Invalid("llm question generation needs a provider".into()));
    }
    let qrels = options.relations.clone().unwrap_or_else(|| manifest.sampler.relations());
    let style = manifest.sampler.finished_by;
    let mut out = GenerateOutcome::default();

    for d in &manifest.datasets {
        let relation = &relations[&d.relation.name];
        let config = GenConfig {
            sampler: manifest.sampler.clone(),
            answer_extensions: d.answer_extensions.clone(),
            seed: manifest.seed,
        };
        let generated = genqueries(&relation.name, relation, &relation.tfds, &qrels, &config)?;
        out.skipped
            .extend(generated.skipped.into_iter().map(|s| (relation.name.clone(), s)));
        let mut domains: HashMap<Vec<String>, Vec<String>> = HashMap::new();
        for ast in generated.queries {
            let attrs = ast.answer_attrs();
            let domain = domains
                .entry(attrs.clone())
                .or_insert_with(|| answer_domain(relation, &attrs))
                .clone();
            let draft = Draft::single(&relation.name, ast, style)?;
            let src = ItemSource {
                relation,
                template: &d.questions,
                context_rows: d.context_rows,
                domain,
            };
            emit(&draft, &src, &gen, llm, manifest.seed, &mut out)?;
        }
    }

    for j in &manifest.joins {
        let (left, right) = (&relations[&j.left], &relations[&j.right]);
        let multi = gen_multihop(j, left, right, &manifest.sampler, manifest.seed, &manifest.evaluation.aliases)?;
        out.skipped.extend(multi.skipped.into_iter().map(|s| (j.name.clone(), s)));
        let domain = answer_domain(&multi.joined, &multi.tfd.rhs);
        for draft in &multi.drafts {
            let src = ItemSource {
                relation: &multi.joined,
                template: &j.questions,
                context_rows: j.context_rows.unwrap_or(2),
                domain: domain.clone(),
            };
            emit(draft, &src, &gen, llm, manifest.seed, &mut out)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Book {
    Open,
    Closed,
}

impl std::str::FromStr for Book {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Book::Open),
            "closed" => Ok(Book::Closed),
            _ => Err(format!("expected `open` or `closed`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AskOptions {
    /// `alignment`, `reasoning`, `cot` or `time_cot`.
    pub prompt: String,
    pub book: Book,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: String,
    pub model: String,
    pub prompt: String,
    pub book: Book,
    pub response: Option<String>,
    pub error: Option<String>,
}

fn context_block(qa: &QAItem) -> Option<String> {
    let ctx = qa.context.as_ref()?;
    let mut rows: Vec<&Vec<String>> = ctx.relevant.iter().chain(&ctx.irrelevant).collect();
    rows.sort();
    let mut out = String::from("Context:\n");
    out.push_str(&ctx.header.join(" | "));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(" | "));
        out.push('\n');
    }
    Some(out)
}

/// System prompt and user message for one item. Few-shot prompts are put
/// in front of the question under the reasoning system prompt.
pub fn build_messages(qa: &QAItem, prompts: &PromptBundle, options: &AskOptions) -> Result<(String, String), PipelineError> {
    let question = qa
        .questions
        .first()
        .ok_or_else(|| PipelineError::Invalid(format!("item {} has no question", qa.id)))?;
    let text = |name: &str| {
        prompts
            .get(name)
            .map(str::to_string)
            .ok_or_else(|| PipelineError::Invalid(format!("unknown prompt `{name}`")))
    };
    let mut user = String::new();
    if options.book == Book::Open {
        if let Some(block) = context_block(qa) {
            user.push_str(&block);
            user.push('\n');
        }
    }
    let system = match options.prompt.replace('-', "_").as_str() {
        p @ ("alignment" | "reasoning") => {
            user.push_str(question);
            text(p)?
        }
        p @ ("cot" | "time_cot") => {
            user.push_str(text(p)?.trim_end());
            let _ = write!(user, "\n\nQ: {question}\nA:");
            text("reasoning")?
        }
        other => return Err(PipelineError::Invalid(format!("`{other}` is not an answering prompt"))),
    };
    Ok((system, user))
}

/// Queries the model once per item, up to the endpoint's concurrency
/// limit. Per-item failures are recorded, not raised.
pub fn ask(items: &[QAItem], llm: &Llm<'_>, options: &AskOptions) -> Result<Vec<ResponseRecord>, PipelineError> {
    let requests = items
        .iter()
        .map(|qa| {
            let (system, user) = build_messages(qa, llm.prompts, options)?;
            Ok(ChatRequest::new(&llm.gateway.endpoint().model, &system, &user, EVAL_TEMPERATURE))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let slots: Mutex<Vec<Option<Result<String, GatewayError>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = llm.gateway.endpoint().max_concurrency.clamp(1, items.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= requests.len() {
                    break;
                }
                let r = llm.complete(&requests[i]);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    let results = slots.into_inner().expect("result slots");
    Ok(items
        .iter()
        .zip(results)
        .map(|(qa, r)| {
            let (response, error) = match r.expect("every request ran") {
                Ok(text) => (Some(text), None),
                Err(e) => {
                    log::warn!("{}: {e}", qa.id);
                    (None, Some(e.to_string()))
                }
            };
            ResponseRecord {
                id: qa.id.clone(),
                model: llm.gateway.endpoint().model.clone(),
                prompt: options.prompt.clone(),
                book: options.book,
                response,
                error,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct ScoreOutcome {
    pub records: Vec<ScoreRecord>,
    /// Ids of responses that carried an error instead of text.
    pub failed: Vec<String>,
}

/// Scores every response with text. Errors when there is nothing to score
/// or a response refers to an unknown item.
pub fn score(
    items: &[QAItem],
    responses: &[ResponseRecord],
    config: &EvalConfig,
    judge: Option<&Judge<'_>>,
) -> Result<ScoreOutcome, PipelineError> {
    if responses.is_empty() {
        return Err(PipelineError::NoResponses);
    }
    let index: HashMap<&str, &QAItem> = items.iter().map(|qa| (qa.id.as_str(), qa)).collect();
    let mut orphans: Vec<String> = responses
        .iter()
        .filter(|r| !index.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !orphans.is_empty() {
        orphans.sort();
        orphans.dedup();
        return Err(PipelineError::Orphans(orphans));
    }
    let mut out = ScoreOutcome::default();
    for r in responses {
        match &r.response {
            Some(text) => out.records.push(score_item(index[r.id.as_str()], &r.model, text, config, judge)?),
            None => {
                log::warn!("{}: no response to score ({})", r.id, r.error.as_deref().unwrap_or("empty"));
                out.failed.push(r.id.clone());
            }
        }
    }
    if out.records.is_empty() {
        return Err(PipelineError::NoResponses);
    }
    Ok(out)
}

pub fn report(items: &[QAItem], records: &[ScoreRecord], slices: &[Slice]) -> Result<AggregateReport, PipelineError> {
    let index: HashMap<String, &QAItem> = items.iter().map(|qa| (qa.id.clone(), qa)).collect();
    Ok(aggregate(records, &index, slices)?)
}

/// Writes `<stem>.csv` and `<stem>.txt` next to `scores_path`.
pub fn write_reports(scores_path: &Path, report: &AggregateReport) -> Result<(), PipelineError> {
    write_text(&scores_path.with_extension("csv"), &report.to_csv())?;
    write_text(&scores_path.with_extension("txt"), &report.to_text())
}
