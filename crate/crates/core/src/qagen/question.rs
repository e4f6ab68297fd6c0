use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::QaGenError;
use crate::gateway::{ChatRequest, Gateway, ResponseCache, SQL_TO_TEXT_TEMPERATURE};
use crate::interval::{AllenRelation, QueryRelation};
use crate::prompts::{number_word, PromptBundle};
use crate::sql::{print_sql, QueryAst};
use crate::store::TemporalRelation;
use crate::time::{Duration, DurationUnit, Granularity, TimePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorMode {
    Llm,
    #[default]
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuestionGenerator {
    pub mode: GeneratorMode,
    /// Paraphrases requested per query in llm mode.
    pub paraphrases: usize,
    /// Provider used in llm mode.
    pub provider: Option<String>,
    pub model: Option<String>,
}

impl Default for QuestionGenerator {
    fn default() -> Self {
        QuestionGenerator {
            mode: GeneratorMode::Template,
            paraphrases: 3,
            provider: None,
            model: None,
        }
    }
}

/// Per-dataset question templates.
///
/// Slots: `{<attr>}` for key values, `{wh}`, `{subject}`, `{period}`,
/// `{bs}`/`{be}` for the reference endpoints, `{len}` for its length and
/// `{on}` for the matching preposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateConfig {
    pub wh: String,
    pub subject: Option<String>,
    pub period: String,
    /// Full templates keyed by relation name; `join` covers multi-hop
    /// queries without a temporal condition.
    pub relations: BTreeMap<String, String>,
    /// Display forms of key values, per attribute.
    pub display: BTreeMap<String, BTreeMap<String, String>>,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            wh: "Who".into(),
            subject: None,
            period: "term".into(),
            relations: BTreeMap::new(),
            display: BTreeMap::new(),
        }
    }
}

fn builtin_template(rel: QueryRelation) -> &'static str {
    use AllenRelation::*;
    if rel.is_current() {
        return "{wh} is currently serving as {subject}?";
    }
    match rel.base() {
        Before => "{wh} was {subject} whose {period} ended before {bs}?",
        After => "{wh} was {subject} whose {period} started after {be}?",
        Meet => "{wh} was {subject} whose {period} ended exactly {len} before {be}?",
        MetBy => "{wh} was {subject} whose {period} started exactly {len} after {bs}?",
        Overlap => "{wh} was {subject} whose {period} started before {bs} and ended between {bs} and {be}?",
        OverlappedBy => "{wh} was {subject} whose {period} started between {bs} and {be} and ended after {be}?",
        Start => "{wh} was {subject} whose {period} started {on} {bs} and ended before {be}?",
        StartedBy => "{wh} was {subject} whose {period} started {on} {bs} and ended after {be}?",
        During => "{wh} was {subject} whose {period} started after {bs} and ended before {be}?",
        Contain => "{wh} was {subject} whose {period} started before {bs} and ended after {be}?",
        Finish => "{wh} was {subject} whose {period} started after {bs} and ended {on} {be}?",
        FinishedBy => "{wh} was {subject} whose {period} started before {bs} and ended {on} {be}?",
        Equal => "{wh} was {subject} whose {period} started {on} {bs} and ended {on} {be}?",
    }
}

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// `May 1, 2019`, `May 2019` or `2019`.
pub fn human_date(t: &TimePoint) -> String {
    match (t.month_value(), t.day_value()) {
        (Some(m), Some(d)) => format!("{} {d}, {}", MONTHS[m as usize - 1], t.year_value()),
        (Some(m), None) => format!("{} {}", MONTHS[m as usize - 1], t.year_value()),
        _ => t.year_value().to_string(),
    }
}

fn human_length(d: &Duration) -> String {
    let unit = match d.unit {
        DurationUnit::Day => "day",
        DurationUnit::Month => "month",
        DurationUnit::Year => "year",
    };
    let n = d.count.unsigned_abs() as usize;
    format!("{} {unit}{}", number_word(n), if n == 1 { "" } else { "s" })
}

/// Relation schema as `Name(a, b, ...)`.
pub fn schema_line(relation: &TemporalRelation) -> String {
    let names: Vec<&str> = relation.schema.iter().map(|a| a.name.as_str()).collect();
    format!("{}({})", relation.name, names.join(", "))
}

fn capitalize_first(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn reference_slots(ast: &QueryAst) -> BTreeMap<&'static str, String> {
    let mut slots = BTreeMap::new();
    if let Some(p) = &ast.provenance {
        let b = &p.reference;
        slots.insert("bs", human_date(&b.start));
        slots.insert("be", human_date(&b.end));
        slots.insert("len", human_length(&b.length));
        let on = if b.start.granularity() == Granularity::Day { "on" } else { "in" };
        slots.insert("on", on.to_string());
    }
    slots
}

pub(super) fn fill(template: &str, slots: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match slots.get(key) {
                    Some(v) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Renders the deterministic template question for a query.
pub fn render_template(ast: &QueryAst, relation: QueryRelation, config: &TemplateConfig) -> String {
    let mut slots: BTreeMap<String, String> = BTreeMap::new();
    for p in &ast.key_predicates {
        let raw = p.value.to_string();
        let shown = config
            .display
            .get(&p.attr)
            .and_then(|m| m.get(&raw))
            .cloned()
            .unwrap_or(raw);
        slots.insert(p.attr.clone(), shown);
    }
    for (k, v) in reference_slots(ast) {
        slots.insert(k.to_string(), v);
    }
    let subject = match &config.subject {
        Some(s) => fill(s, &slots),
        None => {
            let answer = ast.answer_attrs().join(" and ");
            let keys: Vec<String> = ast
                .key_predicates
                .iter()
                .map(|p| format!("{} {}", p.attr, slots.get(&p.attr).cloned().unwrap_or_default()))
                .collect();
            format!("the {answer} for {}", keys.join(" and "))
        }
    };
    slots.insert("subject".into(), subject);
    slots.insert("wh".into(), config.wh.clone());
    slots.insert("period".into(), config.period.clone());
    let key = if ast.condition.is_empty() { "join" } else { relation.name() };
    let template = match config.relations.get(key) {
        Some(t) => t.as_str(),
        None if ast.condition.is_empty() => "{wh} was {subject}?",
        None => builtin_template(relation),
    };
    capitalize_first(fill(template, &slots).trim())
}

/// Questions in lines starting with `Q:` (optionally numbered or bulleted).
pub fn parse_questions(raw: &str) -> Vec<String> {
    raw.lines()
        .filter_map(|line| {
            let line = line.trim().trim_start_matches(|c: char| c.is_ascii_digit() || "-*.) ".contains(c));
            let line = line.trim_start_matches("**");
            line.strip_prefix("Q:")
                .or_else(|| line.strip_prefix("Q :"))
                .map(|q| q.trim().trim_end_matches("**").trim().to_string())
        })
        .filter(|q| !q.is_empty())
        .collect()
}

/// Asks a model to paraphrase the printed SQL into `gen.paraphrases`
/// questions.
pub fn to_natural_language(
    ast: &QueryAst,
    relation: &TemporalRelation,
    gen: &QuestionGenerator,
    prompts: &PromptBundle,
    gateway: &Gateway,
    cache: Option<&ResponseCache>,
) -> Result<Vec<String>, QaGenError> {
    let system = prompts.sql_to_text(
        &schema_line(relation),
        &relation.start_attr,
        &relation.end_attr,
        gen.paraphrases.max(1),
    );
    let model = gen.model.clone().unwrap_or_else(|| gateway.endpoint().model.clone());
    let request = ChatRequest::new(&model, &system, &print_sql(ast), SQL_TO_TEXT_TEMPERATURE);
    let raw = match cache {
        Some(c) => gateway.cached_complete(&request, c)?,
        None => gateway.complete(&request)?,
    };
    let questions = parse_questions(&raw);
    if questions.is_empty() {
        return Err(QaGenError::NoQuestions { raw });
    }
    Ok(questions)
}
