//! Uni-temporal relations: tuples with a valid-time interval, declared
//! (temporal) functional dependencies, time slicing, TFD verification and
//! temporal natural join.

mod join;
mod load;
mod tfd;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{compare_at, Granularity, TimeError, TimePoint};

pub use join::{infer_joined_tfd, temporal_natural_join};
pub use load::{load_relation, load_relation_from_path, RelationDecl};
pub use tfd::{check_tfd, TfdReport, Violation};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("schema mismatch in `{relation}`: {detail}")]
    SchemaMismatch { relation: String, detail: String },
    #[error("`{relation}` row {row}, column `{column}`: {source}")]
    BadCell {
        relation: String,
        row: usize,
        column: String,
        source: TimeError,
    },
    #[error("`{relation}` row {row}: start {start} is after end {end}")]
    InvertedInterval {
        relation: String,
        row: usize,
        start: TimePoint,
        end: TimePoint,
    },
    #[error("`{relation}`: csv error: {source}")]
    Csv {
        relation: String,
        #[source]
        source: csv::Error,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dependency {tfd} on `{relation}`: {detail}")]
    BadDependency {
        relation: String,
        tfd: String,
        detail: String,
    },
    #[error("`{left}` and `{right}` share no non-timestamp attribute")]
    NoSharedAttributes { left: String, right: String },
    #[error("cannot chain {fd} with {tfd}: {detail}")]
    Chaining {
        fd: String,
        tfd: String,
        detail: String,
    },
    #[error("inferred {tfd} does not hold on `{relation}` ({violations} violating pairs)")]
    InferredTfdViolated {
        relation: String,
        tfd: String,
        violations: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Text,
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeSchema {
    pub fn text(name: &str) -> Self {
        AttributeSchema {
            name: name.to_string(),
            kind: AttributeKind::Text,
        }
    }

    pub fn date(name: &str) -> Self {
        AttributeSchema {
            name: name.to_string(),
            kind: AttributeKind::Date,
        }
    }
}

/// Non-timestamp cell value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Text(String),
    Date(TimePoint),
}

impl Value {
    pub fn text(s: &str) -> Value {
        Value::Text(s.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Date(d) => write!(f, "{d}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Valid-time interval. `end == None` means the fact still holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: TimePoint,
    pub end: Option<TimePoint>,
}

impl Interval {
    pub fn closed(start: TimePoint, end: TimePoint) -> Interval {
        Interval {
            start,
            end: Some(end),
        }
    }

    pub fn open(start: TimePoint) -> Interval {
        Interval { start, end: None }
    }

    pub fn is_open(&self) -> bool {
        self.end.is_none()
    }

    pub fn is_valid(&self, g: Granularity) -> bool {
        match &self.end {
            Some(end) => compare_at(&self.start, end, g).is_le(),
            None => true,
        }
    }

    pub fn is_degenerate(&self, g: Granularity) -> bool {
        match &self.end {
            Some(end) => self.start.ordinal_at(g) == end.ordinal_at(g),
            None => false,
        }
    }

    pub fn truncate(&self, g: Granularity) -> Interval {
        Interval {
            start: self.start.truncate(g),
            end: self.end.map(|e| e.truncate(g)),
        }
    }

    /// Ticks at granularity `g` during which the interval is valid, as a
    /// half-open range `[lo, hi)`; `hi == None` is unbounded. A degenerate
    /// interval occupies its single tick.
    pub fn occupancy(&self, g: Granularity) -> Occupancy {
        let lo = self.start.ordinal_at(g);
        let hi = self.end.map(|e| {
            let e = e.ordinal_at(g);
            if e <= lo {
                lo + 1
            } else {
                e
            }
        });
        Occupancy { lo, hi }
    }

    pub fn contains_tick(&self, g: Granularity, tick: i64) -> bool {
        self.occupancy(g).contains(tick)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.end {
            Some(e) => write!(f, "[{}, {}]", self.start, e),
            None => write!(f, "[{}, NULL]", self.start),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occupancy {
    pub lo: i64,
    pub hi: Option<i64>,
}

impl Occupancy {
    pub fn contains(&self, tick: i64) -> bool {
        tick >= self.lo && self.hi.is_none_or(|hi| tick < hi)
    }

    pub fn intersect(&self, other: &Occupancy) -> Option<Occupancy> {
        let lo = self.lo.max(other.lo);
        let hi = match (self.hi, other.hi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, None) => a,
            (None, b) => b,
        };
        match hi {
            Some(hi) if hi <= lo => None,
            _ => Some(Occupancy { lo, hi }),
        }
    }
}

/// Source intervals of a joined tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub left: Interval,
    pub right: Interval,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tuple {
    /// Values of the non-timestamp attributes, in schema order.
    pub values: Vec<Value>,
    pub interval: Interval,
    pub lineage: Option<Lineage>,
}

/// `lhs -> rhs`, temporal (`->T`) unless `temporal` is false.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TFDecl {
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
    #[serde(default = "default_true")]
    pub temporal: bool,
}

fn default_true() -> bool {
    true
}

impl TFDecl {
    pub fn temporal(lhs: &[&str], rhs: &[&str]) -> TFDecl {
        TFDecl {
            lhs: lhs.iter().map(|s| s.to_string()).collect(),
            rhs: rhs.iter().map(|s| s.to_string()).collect(),
            temporal: true,
        }
    }

    pub fn plain(lhs: &[&str], rhs: &[&str]) -> TFDecl {
        TFDecl {
            temporal: false,
            ..TFDecl::temporal(lhs, rhs)
        }
    }
}

impl fmt::Display for TFDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arrow = if self.temporal { "->T" } else { "->" };
        write!(f, "{} {} {}", self.lhs.join(", "), arrow, self.rhs.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalRelation {
    pub name: String,
    /// All attributes, timestamps included, in declaration order.
    pub schema: Vec<AttributeSchema>,
    pub start_attr: String,
    pub end_attr: String,
    pub granularity: Granularity,
    pub tuples: Vec<Tuple>,
    pub tfds: Vec<TFDecl>,
}

impl TemporalRelation {
    /// Builds a relation, checking schema and tuple shape.
    pub fn new(
        name: &str,
        schema: Vec<AttributeSchema>,
        start_attr: &str,
        end_attr: &str,
        granularity: Granularity,
        tfds: Vec<TFDecl>,
    ) -> Result<TemporalRelation, StoreError> {
        let mismatch = |detail: String| StoreError::SchemaMismatch {
            relation: name.to_string(),
            detail,
        };
        for (i, a) in schema.iter().enumerate() {
            if schema[..i].iter().any(|b| b.name == a.name) {
                return Err(mismatch(format!("duplicate attribute `{}`", a.name)));
            }
        }
        for ts in [start_attr, end_attr] {
            match schema.iter().find(|a| a.name == ts) {
                Some(a) if a.kind == AttributeKind::Date => {}
                Some(_) => return Err(mismatch(format!("timestamp `{ts}` must have kind date"))),
                None => return Err(mismatch(format!("timestamp `{ts}` not in schema"))),
            }
        }
        if start_attr == end_attr {
            return Err(mismatch("start and end attributes must differ".into()));
        }
        let rel = TemporalRelation {
            name: name.to_string(),
            schema,
            start_attr: start_attr.to_string(),
            end_attr: end_attr.to_string(),
            granularity,
            tuples: Vec::new(),
            tfds: Vec::new(),
        };
        for tfd in &tfds {
            rel.validate_dependency(tfd)?;
        }
        Ok(TemporalRelation { tfds, ..rel })
    }

    pub fn push(&mut self, values: Vec<Value>, interval: Interval) -> Result<(), StoreError> {
        let row = self.tuples.len() + 1;
        if values.len() != self.value_attrs().count() {
            return Err(StoreError::SchemaMismatch {
                relation: self.name.clone(),
                detail: format!("row {row} has {} values", values.len()),
            });
        }
        if let Some(end) = interval.end {
            if !interval.is_valid(self.granularity) {
                return Err(StoreError::InvertedInterval {
                    relation: self.name.clone(),
                    row,
                    start: interval.start,
                    end,
                });
            }
        }
        self.tuples.push(Tuple {
            values,
            interval,
            lineage: None,
        });
        Ok(())
    }

    pub fn is_timestamp(&self, attr: &str) -> bool {
        attr == self.start_attr || attr == self.end_attr
    }

    /// Non-timestamp attributes in schema order.
    pub fn value_attrs(&self) -> impl Iterator<Item = &AttributeSchema> {
        self.schema.iter().filter(|a| !self.is_timestamp(&a.name))
    }

    pub fn value_attr_names(&self) -> Vec<String> {
        self.value_attrs().map(|a| a.name.clone()).collect()
    }

    /// Position of a non-timestamp attribute within `Tuple::values`.
    pub fn value_index(&self, attr: &str) -> Option<usize> {
        self.value_attrs().position(|a| a.name == attr)
    }

    pub fn attribute(&self, attr: &str) -> Option<&AttributeSchema> {
        self.schema.iter().find(|a| a.name == attr)
    }

    /// Case-insensitive attribute lookup returning the schema spelling.
    pub fn resolve_attr(&self, attr: &str) -> Option<&str> {
        self.schema
            .iter()
            .find(|a| a.name == attr)
            .or_else(|| self.schema.iter().find(|a| a.name.eq_ignore_ascii_case(attr)))
            .map(|a| a.name.as_str())
    }

    pub fn project<'a>(&self, tuple: &'a Tuple, attrs: &[String]) -> Vec<&'a Value> {
        attrs
            .iter()
            .map(|a| &tuple.values[self.value_index(a).expect("attribute checked")])
            .collect()
    }

    /// Renders a tuple as strings in full schema order (open end is `NULL`).
    pub fn row_strings(&self, tuple: &Tuple) -> Vec<String> {
        let mut values = tuple.values.iter();
        self.schema
            .iter()
            .map(|a| {
                if a.name == self.start_attr {
                    tuple.interval.start.to_string()
                } else if a.name == self.end_attr {
                    tuple
                        .interval
                        .end
                        .map(|e| e.to_string())
                        .unwrap_or_else(|| "NULL".to_string())
                } else {
                    values.next().map(|v| v.to_string()).unwrap_or_default()
                }
            })
            .collect()
    }

    pub fn validate_dependency(&self, tfd: &TFDecl) -> Result<(), StoreError> {
        let bad = |detail: String| StoreError::BadDependency {
            relation: self.name.clone(),
            tfd: tfd.to_string(),
            detail,
        };
        if tfd.lhs.is_empty() || tfd.rhs.is_empty() {
            return Err(bad("both sides must be non-empty".into()));
        }
        for a in tfd.lhs.iter().chain(&tfd.rhs) {
            if self.is_timestamp(a) {
                return Err(bad(format!("timestamp attribute `{a}` not allowed")));
            }
            if self.value_index(a).is_none() {
                return Err(bad(format!("unknown attribute `{a}`")));
            }
        }
        if let Some(a) = tfd.lhs.iter().find(|a| tfd.rhs.contains(a)) {
            return Err(bad(format!("`{a}` on both sides")));
        }
        Ok(())
    }
}

/// Tuples valid at `t`. A `t` finer than the relation is truncated; a
/// coarser `t` selects tuples valid at any point it covers.
pub fn timeslice<'a>(relation: &'a TemporalRelation, t: &TimePoint) -> Vec<&'a Tuple> {
    let g = relation.granularity;
    let lo = t.lo_at(g).ordinal();
    let hi = t.hi_at(g).ordinal() + 1;
    let window = Occupancy { lo, hi: Some(hi) };
    relation
        .tuples
        .iter()
        .filter(|u| u.interval.occupancy(g).intersect(&window).is_some())
        .collect()
}
