//! Scoring of model responses: answer accuracy (A), time accuracy (T),
//! answer-time accuracy (AT) and per-hop correctness.

mod dates;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::gateway::{ChatRequest, Gateway, GatewayError, ResponseCache, EVAL_TEMPERATURE};
use crate::interval::TimeRole;
use crate::prompts::PromptBundle;
use crate::qagen::{Cardinality, QAItem, TimeRefs};
use crate::time::Granularity;

pub use dates::{extract_dates, mention_matches, DateMention};
pub use report::{aggregate, span_bucket, AggregateReport, Slice, SliceStats};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("judge answered {0:?}, expected Yes, Half or No")]
    BadVerdict(String),
    #[error("judge mode needs a judge endpoint")]
    NoJudge,
    #[error("score record refers to unknown QA item `{0}`")]
    UnknownQa(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    #[default]
    Deterministic,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    Half,
    No,
}

impl Verdict {
    pub fn score(self) -> u8 {
        match self {
            Verdict::Yes => 100,
            Verdict::Half => 50,
            Verdict::No => 0,
        }
    }

    /// Reads the first word of a judge reply.
    pub fn parse(reply: &str) -> Option<Verdict> {
        let word: String = reply
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .chars()
            .take_while(|c| c.is_alphanumeric())
            .collect();
        match word.to_ascii_lowercase().as_str() {
            "yes" => Some(Verdict::Yes),
            "half" => Some(Verdict::Half),
            "no" => Some(Verdict::No),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Scoring granularity per dataset, overriding the item's own.
    pub granularity: BTreeMap<String, Granularity>,
    /// Accepted surface forms per gold value.
    pub aliases: BTreeMap<String, Vec<String>>,
    pub no_answer_markers: Vec<String>,
    pub mode: TimeMode,
    /// Require start/end cue words next to date mentions.
    pub strict_roles: bool,
    /// Provider used as the judge.
    pub judge: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            granularity: BTreeMap::new(),
            aliases: BTreeMap::new(),
            no_answer_markers: vec![
                "no answer".into(),
                "there is no".into(),
                "there was no".into(),
                "no one".into(),
                "nobody".into(),
            ],
            mode: TimeMode::Deterministic,
            strict_roles: false,
            judge: None,
        }
    }
}

impl EvalConfig {
    pub fn granularity_for(&self, qa: &QAItem) -> Granularity {
        self.granularity.get(&qa.dataset).copied().unwrap_or(qa.granularity)
    }

    fn forms<'a>(&'a self, value: &'a str) -> impl Iterator<Item = &'a str> {
        std::iter::once(value).chain(self.aliases.get(value).into_iter().flatten().map(String::as_str))
    }
}

/// Compatibility-decomposed, diacritic-free, lowercased text with
/// punctuation as single spaces, padded by one space on each side.
pub fn fold(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push(' ');
    let mut gap = true;
    for c in text.nfkd().filter(|c| !is_combining_mark(*c)).flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
            gap = false;
        } else if !gap {
            out.push(' ');
            gap = true;
        }
    }
    if !gap {
        out.push(' ');
    }
    out
}

fn mentions(folded_response: &str, phrase: &str) -> bool {
    let p = fold(phrase);
    p.trim() != "" && folded_response.contains(&p)
}

/// A: every gold value (or an alias) appears; for no-answer items, a
/// no-answer marker appears and no value from the answer domain does.
pub fn score_answer(qa: &QAItem, response: &str, config: &EvalConfig) -> bool {
    let r = fold(response);
    if qa.cardinality == Cardinality::None {
        let marked = config.no_answer_markers.iter().any(|m| mentions(&r, m));
        let spurious = qa.answer_domain.iter().any(|v| config.forms(v).any(|f| mentions(&r, f)));
        return marked && !spurious;
    }
    qa.answers
        .iter()
        .flat_map(|a| a.values.iter())
        .all(|v| config.forms(v).any(|f| mentions(&r, f)))
}

const START_CUES: [&str; 10] = [
    "since", "from", "start", "started", "starting", "began", "begun", "beginning", "took office", "assumed",
];
const END_CUES: [&str; 9] = ["until", "till", "to", "ended", "end", "ending", "through", "left", "stepped down"];

/// Role suggested by the nearest cue word before a mention, if any.
fn cue_before(response: &str, char_start: usize) -> Option<TimeRole> {
    let prefix: String = response.chars().take(char_start).collect();
    let window: String = prefix.chars().rev().take(40).collect::<Vec<_>>().into_iter().rev().collect();
    let w = fold(&window);
    let last = |cues: &[&str]| cues.iter().filter_map(|c| w.rfind(&format!(" {c} "))).max();
    match (last(&START_CUES), last(&END_CUES)) {
        (Some(s), Some(e)) => Some(if s > e { TimeRole::Start } else { TimeRole::End }),
        (Some(_), None) => Some(TimeRole::Start),
        (None, Some(_)) => Some(TimeRole::End),
        (None, None) => None,
    }
}

fn snap(score: f64) -> u8 {
    if score > 75.0 {
        100
    } else if score > 25.0 {
        50
    } else {
        0
    }
}

fn deterministic_refs(refs: &TimeRefs, found: &[DateMention], response: &str, g: Granularity, strict: bool) -> u8 {
    if refs.is_empty() {
        return 100;
    }
    let hits = refs
        .iter()
        .filter(|(role, gold)| {
            found.iter().any(|m| {
                mention_matches(m, gold, g) && (!strict || cue_before(response, m.span.0) == Some(**role))
            })
        })
        .count();
    snap(100.0 * hits as f64 / refs.len() as f64)
}

/// Judge endpoint and the pieces needed to prompt it.
pub struct Judge<'a> {
    pub gateway: &'a Gateway,
    pub cache: Option<&'a ResponseCache>,
    pub prompts: &'a PromptBundle,
}

impl Judge<'_> {
    fn verdict(&self, refs: &TimeRefs, response: &str) -> Result<Verdict, EvalError> {
        let pairs: Vec<(TimeRole, _)> = refs.iter().map(|(r, t)| (*r, *t)).collect();
        let prompt = self.prompts.judge(&pairs, response);
        let model = self.gateway.endpoint().model.clone();
        let request = ChatRequest::new(&model, "", &prompt, EVAL_TEMPERATURE);
        let reply = match self.cache {
            Some(c) => self.gateway.cached_complete(&request, c)?,
            None => self.gateway.complete(&request)?,
        };
        if let Some(v) = Verdict::parse(&reply) {
            return Ok(v);
        }
        let retry = self.gateway.complete(&request)?;
        let v = Verdict::parse(&retry).ok_or_else(|| EvalError::BadVerdict(retry.clone()))?;
        if let Some(c) = self.cache {
            c.put(&ResponseCache::key(self.gateway.endpoint(), &request), &retry)?;
        }
        Ok(v)
    }
}

/// T in {0, 50, 100}; `None` for no-answer items. Multiple answers are
/// scored one by one, averaged and snapped (ties round down).
pub fn score_time(
    qa: &QAItem,
    response: &str,
    config: &EvalConfig,
    judge: Option<&Judge<'_>>,
) -> Result<(Option<u8>, Option<Vec<Verdict>>), EvalError> {
    if qa.cardinality == Cardinality::None || qa.time_refs.is_empty() {
        return Ok((None, None));
    }
    let scores: Vec<u8>;
    let mut verdicts = None;
    match config.mode {
        TimeMode::Deterministic => {
            let g = config.granularity_for(qa);
            let found = extract_dates(response);
            scores = qa
                .time_refs
                .iter()
                .map(|refs| deterministic_refs(refs, &found, response, g, config.strict_roles))
                .collect();
        }
        TimeMode::Judge => {
            let judge = judge.ok_or(EvalError::NoJudge)?;
            let vs = qa
                .time_refs
                .iter()
                .map(|refs| judge.verdict(refs, response))
                .collect::<Result<Vec<_>, _>>()?;
            scores = vs.iter().map(|v| v.score()).collect();
            verdicts = Some(vs);
        }
    }
    let mean = scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64;
    Ok((Some(snap(mean)), verdicts))
}

/// AT: correct answer and T = 100; for no-answer items, A alone.
pub fn score_at(answer_correct: bool, time_score: Option<u8>, cardinality: Cardinality) -> bool {
    match cardinality {
        Cardinality::None => answer_correct,
        _ => answer_correct && time_score == Some(100),
    }
}

/// Per-hop correctness; the final hop also requires A.
pub fn score_hops(qa: &QAItem, response: &str, config: &EvalConfig) -> Option<Vec<bool>> {
    let hops = qa.hops.as_ref()?;
    let r = fold(response);
    let last = hops.len().saturating_sub(1);
    Some(
        hops.iter()
            .enumerate()
            .map(|(i, h)| {
                if i == last {
                    score_answer(qa, response, config)
                } else {
                    h.gold.iter().any(|v| config.forms(v).any(|f| mentions(&r, f)))
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub qa_id: String,
    pub model: String,
    pub answer_correct: bool,
    /// Absent for no-answer items.
    pub time_score: Option<u8>,
    pub at_correct: bool,
    pub hop_correct: Option<Vec<bool>>,
    pub judge_verdict: Option<Vec<Verdict>>,
    /// SHA-256 of the scored response text.
    pub response_sha256: String,
}

pub fn score_item(
    qa: &QAItem,
    model: &str,
    response: &str,
    config: &EvalConfig,
    judge: Option<&Judge<'_>>,
) -> Result<ScoreRecord, EvalError> {
    let answer_correct = score_answer(qa, response, config);
    let (time_score, judge_verdict) = score_time(qa, response, config, judge)?;
    Ok(ScoreRecord {
        qa_id: qa.id.clone(),
        model: model.to_string(),
        answer_correct,
        time_score,
        at_correct: score_at(answer_correct, time_score, qa.cardinality),
        hop_correct: score_hops(qa, response, config),
        judge_verdict,
        response_sha256: hex::encode(Sha256::digest(response.as_bytes())),
    })
}
