//! Temporal SQL: the query AST emitted by generation, its printed dialect,
//! a parser for that dialect, and a direct evaluator over a relation.

mod exec;
mod parse;
mod print;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{QueryRelation, ReferenceInterval, SampleMode, TemporalCondition};
use crate::store::{Interval, Lineage, TFDecl, Value};
use crate::time::TimeError;

pub use exec::{execute, normalize_text};
pub use parse::parse_sql;
pub use print::print_sql;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SqlError {
    #[error("query targets `{query}` but the relation is `{relation}`")]
    RelationMismatch { query: String, relation: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("type mismatch: `{attr}` is {expected} but the literal is `{literal}`")]
    TypeMismatch {
        attr: String,
        expected: &'static str,
        literal: String,
    },
    #[error("syntax error at offset {offset}: {detail}")]
    Syntax { offset: usize, detail: String },
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPredicate {
    pub attr: String,
    pub value: Value,
}

/// Where a generated query came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_tuple: usize,
    pub tfd: TFDecl,
    pub relation: QueryRelation,
    pub reference: ReferenceInterval,
    pub mode: SampleMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pub relation_name: String,
    pub start_attr: String,
    pub end_attr: String,
    /// Answer attributes followed by the timestamps the criteria demand.
    pub select_attrs: Vec<String>,
    pub key_predicates: Vec<KeyPredicate>,
    pub condition: TemporalCondition,
    pub provenance: Option<Provenance>,
}

impl QueryAst {
    /// Selected attributes other than the timestamps.
    pub fn answer_attrs(&self) -> Vec<String> {
        self.select_attrs
            .iter()
            .filter(|a| **a != self.start_attr && **a != self.end_attr)
            .cloned()
            .collect()
    }
}

/// The same query with its temporal condition removed.
pub fn strip_temporal(ast: &QueryAst) -> QueryAst {
    QueryAst {
        condition: TemporalCondition::default(),
        ..ast.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultRow {
    pub tuple_index: usize,
    /// One value per answer attribute.
    pub values: Vec<Value>,
    pub interval: Interval,
    pub lineage: Option<Lineage>,
}
