//! QA generation: Genqueries, answer cardinality, question text, open-book
//! context and multi-hop items.

mod context;
mod multihop;
mod question;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::interval::{
    condition_for, criteria_for, holds_with, sample_reference, ConditionStyle, IntervalError, QueryRelation, SampleMode,
    SamplerConfig, TimeRole,
};
use crate::sql::{execute, print_sql, KeyPredicate, Provenance, QueryAst, SqlError};
use crate::store::{check_tfd, Interval, StoreError, TFDecl, TemporalRelation, Tuple};
use crate::time::{Granularity, TimePoint};

pub use context::{build_context, Context};
pub use multihop::{gen_multihop, HopSpec, JoinSpec, MultiHop};
pub use question::{
    human_date, parse_questions, render_template, schema_line, to_natural_language, GeneratorMode, QuestionGenerator,
    TemplateConfig,
};

#[derive(Debug, Error)]
pub enum QaGenError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("`{tfd}` does not hold on `{relation}` ({violations} violating pairs)")]
    TfdViolated {
        relation: String,
        tfd: String,
        violations: usize,
    },
    #[error("model output has no `Q:` lines: {raw:?}")]
    NoQuestions { raw: String },
    #[error("{0}")]
    Invalid(String),
    #[error("answer {answer} of `{sql}` does not satisfy {relation}")]
    Inconsistent {
        sql: String,
        relation: QueryRelation,
        answer: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cardinality {
    Multiple,
    Unique,
    None,
}

impl Cardinality {
    pub fn of(count: usize) -> Cardinality {
        match count {
            0 => Cardinality::None,
            1 => Cardinality::Unique,
            _ => Cardinality::Multiple,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Cardinality::Multiple => "multiple",
            Cardinality::Unique => "unique",
            Cardinality::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub values: Vec<String>,
    pub interval: Interval,
}

/// Gold time references of one answer, keyed by role.
pub type TimeRefs = BTreeMap<TimeRole, TimePoint>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopGold {
    pub hop: usize,
    pub description: String,
    /// Accepted surface forms.
    pub gold: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub dataset: String,
    pub questions: Vec<String>,
    pub sql: String,
    pub relation: QueryRelation,
    pub cardinality: Cardinality,
    pub answers: Vec<Answer>,
    /// One map per answer.
    pub time_refs: Vec<TimeRefs>,
    #[serde(default)]
    pub hops: Option<Vec<HopGold>>,
    #[serde(default)]
    pub context: Option<Context>,
    pub granularity: Granularity,
    #[serde(default)]
    pub provenance: Option<Provenance>,
    /// Answer-attribute values of the relation, for spurious-answer checks.
    #[serde(default)]
    pub answer_domain: Vec<String>,
}

impl QAItem {
    /// Checks the record-level invariants.
    pub fn check(&self) -> Result<(), String> {
        if self.questions.is_empty() {
            return Err(format!("{}: no questions", self.id));
        }
        if Cardinality::of(self.answers.len()) != self.cardinality {
            return Err(format!("{}: cardinality disagrees with {} answers", self.id, self.answers.len()));
        }
        if self.cardinality == Cardinality::None {
            if !self.time_refs.is_empty() {
                return Err(format!("{}: no-answer item carries time references", self.id));
            }
        } else {
            let roles = criteria_for(self.relation).roles();
            if self.time_refs.len() != self.answers.len()
                || self.time_refs.iter().any(|r| r.keys().copied().collect::<Vec<_>>() != roles)
            {
                return Err(format!("{}: time references do not match the criteria", self.id));
            }
        }
        if let Some(hops) = &self.hops {
            if hops.iter().enumerate().any(|(i, h)| h.hop != i + 1) {
                return Err(format!("{}: hop indices are not contiguous", self.id));
            }
        }
        Ok(())
    }
}

/// 64-bit seed derived from labelled parts.
pub fn sub_seed(parts: &[&str]) -> u64 {
    let digest = Sha256::digest(parts.join("\u{1f}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn item_id(dataset: &str, sql: &str, seed: u64) -> String {
    let digest = Sha256::digest(format!("{dataset}\u{1f}{sql}\u{1f}{seed}").as_bytes());
    hex::encode(&digest[..8])
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenConfig {
    pub sampler: SamplerConfig,
    /// Extra answer attributes selected alongside the TFD right-hand side.
    pub answer_extensions: Vec<String>,
    pub seed: u64,
}

/// A combination for which no reference interval could be sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct Skip {
    pub tuple: usize,
    pub tfd: TFDecl,
    pub relation: QueryRelation,
    pub mode: SampleMode,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Generated {
    pub queries: Vec<QueryAst>,
    pub skipped: Vec<Skip>,
}

pub(super) fn tuple_key(u: &Tuple) -> String {
    let mut parts: Vec<String> = u.values.iter().map(|v| v.to_string()).collect();
    parts.push(u.interval.to_string());
    parts.join("\u{1e}")
}

/// Base query of a TFD for one tuple: key predicates from the left-hand
/// side, the right-hand side (plus extensions) and required timestamps
/// selected.
pub fn base_query(
    relation: &TemporalRelation,
    tfd: &TFDecl,
    u: &Tuple,
    extensions: &[String],
    qrel: QueryRelation,
) -> QueryAst {
    let mut select_attrs: Vec<String> = Vec::new();
    for a in tfd.rhs.iter().chain(extensions) {
        if !select_attrs.contains(a) && !tfd.lhs.contains(a) {
            select_attrs.push(a.clone());
        }
    }
    for role in criteria_for(qrel).roles() {
        select_attrs.push(match role {
            TimeRole::Start => relation.start_attr.clone(),
            TimeRole::End => relation.end_attr.clone(),
        });
    }
    let key_predicates = tfd
        .lhs
        .iter()
        .zip(relation.project(u, &tfd.lhs))
        .map(|(attr, value)| KeyPredicate {
            attr: attr.clone(),
            value: value.clone(),
        })
        .collect();
    QueryAst {
        relation_name: relation.name.clone(),
        start_attr: relation.start_attr.clone(),
        end_attr: relation.end_attr.clone(),
        select_attrs,
        key_predicates,
        condition: Default::default(),
        provenance: None,
    }
}

fn verified(relation: &TemporalRelation, tfds: &[TFDecl]) -> Result<(), QaGenError> {
    for tfd in tfds {
        let report = check_tfd(relation, tfd)?;
        if !report.holds() {
            return Err(QaGenError::TfdViolated {
                relation: relation.name.clone(),
                tfd: tfd.to_string(),
                violations: report.violations.len(),
            });
        }
    }
    Ok(())
}

/// One query per tuple × TFD × relation. Every combination draws from its
/// own seed, derived from the global seed and the combination's content.
pub fn genqueries(
    dataset: &str,
    relation: &TemporalRelation,
    tfds: &[TFDecl],
    relations: &[QueryRelation],
    config: &GenConfig,
) -> Result<Generated, QaGenError> {
    if relations.is_empty() {
        return Err(QaGenError::Invalid("no query relations selected".into()));
    }
    config.sampler.validate().map_err(QaGenError::Invalid)?;
    verified(relation, tfds)?;
    for a in &config.answer_extensions {
        if relation.value_index(a).is_none() {
            return Err(QaGenError::Invalid(format!("unknown answer extension `{a}`")));
        }
    }
    let g = relation.granularity;
    let global = config.seed.to_string();
    let mut out = Generated::default();
    for (i, u) in relation.tuples.iter().enumerate() {
        let key = tuple_key(u);
        for tfd in tfds {
            let tfd_text = tfd.to_string();
            for &qrel in relations {
                let seed = sub_seed(&[&global, "genqueries", dataset, &key, &tfd_text, qrel.name()]);
                let mut rng = seeded_rng(seed);
                let miss = rand::Rng::random_bool(&mut rng, config.sampler.miss_probability);
                let mode = if miss { SampleMode::Miss } else { SampleMode::Satisfying };
                let b = match sample_reference(&mut rng, &u.interval, qrel, &config.sampler, g, mode) {
                    Ok(b) => b,
                    Err(e) => {
                        log::debug!("{dataset}: tuple {i}, {qrel}: {e}");
                        out.skipped.push(Skip {
                            tuple: i,
                            tfd: tfd.clone(),
                            relation: qrel,
                            mode,
                            reason: e.to_string(),
                        });
                        continue;
                    }
                };
                let mut ast = base_query(relation, tfd, u, &config.answer_extensions, qrel);
                ast.condition = condition_for(qrel, &b, config.sampler.finished_by);
                ast.provenance = Some(Provenance {
                    source_tuple: i,
                    tfd: tfd.clone(),
                    relation: qrel,
                    reference: b,
                    mode,
                    seed,
                });
                out.queries.push(ast);
            }
        }
    }
    Ok(out)
}

/// Cardinality, answers and their time references.
pub type Classified = (Cardinality, Vec<Answer>, Vec<TimeRefs>);

/// Runs the query and maps its result to a cardinality, the answers and
/// their time references. Joined rows take their references from the
/// left source interval. Answers lacking a required reference (an open
/// end where the end is asked for) yield `None`.
pub fn classify_cardinality(
    ast: &QueryAst,
    relation: &TemporalRelation,
    qrel: QueryRelation,
) -> Result<Option<Classified>, SqlError> {
    let rows = execute(ast, relation)?;
    let roles = criteria_for(qrel).roles();
    let mut answers = Vec::with_capacity(rows.len());
    let mut refs = Vec::with_capacity(rows.len());
    for row in rows {
        let source = row.lineage.map(|l| l.left).unwrap_or(row.interval);
        let mut map = TimeRefs::new();
        for &role in &roles {
            let t = match role {
                TimeRole::Start => Some(source.start),
                TimeRole::End => source.end,
            };
            match t {
                Some(t) => map.insert(role, t),
                None => return Ok(None),
            };
        }
        answers.push(Answer {
            values: row.values.iter().map(|v| v.to_string()).collect(),
            interval: row.interval,
        });
        refs.push(map);
    }
    Ok(Some((Cardinality::of(answers.len()), answers, refs)))
}

/// Distinct values of the query's answer attributes across the relation.
pub fn answer_domain(relation: &TemporalRelation, attrs: &[String]) -> Vec<String> {
    let attrs: Vec<String> = attrs.iter().filter(|a| relation.value_index(a).is_some()).cloned().collect();
    let set: BTreeSet<String> = relation
        .tuples
        .iter()
        .flat_map(|u| relation.project(u, &attrs).into_iter().map(|v| v.to_string()))
        .collect();
    set.into_iter().collect()
}

/// Everything needed to turn a query into a QA record.
#[derive(Debug, Clone)]
pub struct Draft {
    pub dataset: String,
    pub ast: QueryAst,
    pub relation: QueryRelation,
    /// Intermediate hops of a multi-hop query; the final hop is added from
    /// the answers.
    pub hops: Option<Vec<HopGold>>,
    pub final_hop: Option<String>,
    pub style: ConditionStyle,
}

impl Draft {
    pub fn single(dataset: &str, ast: QueryAst, style: ConditionStyle) -> Result<Draft, QaGenError> {
        let relation = ast
            .provenance
            .as_ref()
            .map(|p| p.relation)
            .ok_or_else(|| QaGenError::Invalid("query has no provenance".into()))?;
        Ok(Draft {
            dataset: dataset.to_string(),
            ast,
            relation,
            hops: None,
            final_hop: None,
            style,
        })
    }

    pub fn seed(&self) -> u64 {
        self.ast.provenance.as_ref().map(|p| p.seed).unwrap_or(0)
    }
}

/// Executes a draft and assembles the record. Returns `None` when an
/// answer lacks a required time reference.
pub fn assemble_item(
    draft: &Draft,
    relation: &TemporalRelation,
    questions: Vec<String>,
    context: Option<Context>,
    domain: Vec<String>,
) -> Result<Option<QAItem>, QaGenError> {
    let Some((cardinality, answers, time_refs)) = classify_cardinality(&draft.ast, relation, draft.relation)? else {
        return Ok(None);
    };
    let sql = print_sql(&draft.ast);
    if !draft.ast.condition.is_empty() {
        if let Some(p) = &draft.ast.provenance {
            for a in &answers {
                if !holds_with(draft.relation, &a.interval, &p.reference, relation.granularity, draft.style) {
                    return Err(QaGenError::Inconsistent {
                        sql,
                        relation: draft.relation,
                        answer: a.values.join(", "),
                    });
                }
            }
        }
    }
    let hops = draft.hops.as_ref().map(|inner| {
        let mut hops = inner.clone();
        let mut gold: Vec<String> = Vec::new();
        for a in &answers {
            for v in &a.values {
                if !gold.contains(v) {
                    gold.push(v.clone());
                }
            }
        }
        hops.push(HopGold {
            hop: hops.len() + 1,
            description: draft.final_hop.clone().unwrap_or_else(|| "answer".into()),
            gold,
        });
        hops
    });
    let item = QAItem {
        id: item_id(&draft.dataset, &sql, draft.seed()),
        dataset: draft.dataset.clone(),
        questions,
        sql,
        relation: draft.relation,
        cardinality,
        answers,
        time_refs,
        hops,
        context,
        granularity: relation.granularity,
        provenance: draft.ast.provenance.clone(),
        answer_domain: domain,
    };
    item.check().map_err(QaGenError::Invalid)?;
    Ok(Some(item))
}

#[cfg(test)]
mod tests;
