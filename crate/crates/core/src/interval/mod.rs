//! Allen's thirteen interval relations, their symbolic temporal conditions,
//! time-accuracy criteria and reference-interval sampling.

mod condition;
mod reference;
mod sampler;


use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::store::Interval;
use crate::time::{compare_at, Granularity, TimeError, TimePoint};

pub use condition::{condition_for, Atom, CompareOp, Endpoint, Operand, TemporalCondition};
pub use reference::ReferenceInterval;
pub use sampler::{sample_reference, CountRange, SampleMode, SamplerConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntervalError {
    #[error("interval {0} has no end")]
    OpenInterval(Interval),
    #[error("degenerate interval {0} cannot be classified")]
    Degenerate(Interval),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("the current flag is only valid with overlap")]
    CurrentWithoutOverlap,
    #[error("invalid reference interval: {0}")]
    BadReference(String),
    #[error("no {mode} reference for {relation} on {interval}: {reason}")]
    Unsatisfiable {
        relation: QueryRelation,
        interval: Interval,
        mode: SampleMode,
        reason: String,
    },
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AllenRelation {
    Before,
    After,
    Meet,
    MetBy,
    Overlap,
    OverlappedBy,
    Equal,
    Start,
    StartedBy,
    Finish,
    FinishedBy,
    During,
    Contain,
}

impl AllenRelation {
    pub const ALL: [AllenRelation; 13] = [
        AllenRelation::Before,
        AllenRelation::After,
        AllenRelation::Meet,
        AllenRelation::MetBy,
        AllenRelation::Overlap,
        AllenRelation::OverlappedBy,
        AllenRelation::Equal,
        AllenRelation::Start,
        AllenRelation::StartedBy,
        AllenRelation::Finish,
        AllenRelation::FinishedBy,
        AllenRelation::During,
        AllenRelation::Contain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AllenRelation::Before => "before",
            AllenRelation::After => "after",
            AllenRelation::Meet => "meet",
            AllenRelation::MetBy => "met-by",
            AllenRelation::Overlap => "overlap",
            AllenRelation::OverlappedBy => "overlapped-by",
            AllenRelation::Equal => "equal",
            AllenRelation::Start => "start",
            AllenRelation::StartedBy => "started-by",
            AllenRelation::Finish => "finish",
            AllenRelation::FinishedBy => "finished-by",
            AllenRelation::During => "during",
            AllenRelation::Contain => "contain",
        }
    }

    pub fn converse(self) -> AllenRelation {
        use AllenRelation::*;
        match self {
            Before => After,
            After => Before,
            Meet => MetBy,
            MetBy => Meet,
            Overlap => OverlappedBy,
            OverlappedBy => Overlap,
            Equal => Equal,
            Start => StartedBy,
            StartedBy => Start,
            Finish => FinishedBy,
            FinishedBy => Finish,
            During => Contain,
            Contain => During,
        }
    }
}

impl fmt::Display for AllenRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A query relation: one of the thirteen base relations, or the
/// overlap-current variant (`a.start < b.start AND a.end IS NULL`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryRelation {
    base: AllenRelation,
    current: bool,
}

impl QueryRelation {
    pub const CURRENT: QueryRelation = QueryRelation {
        base: AllenRelation::Overlap,
        current: true,
    };

    pub fn new(base: AllenRelation, current: bool) -> Result<QueryRelation, IntervalError> {
        if current && base != AllenRelation::Overlap {
            return Err(IntervalError::CurrentWithoutOverlap);
        }
        Ok(QueryRelation { base, current })
    }

    pub fn base(&self) -> AllenRelation {
        self.base
    }

    pub fn is_current(&self) -> bool {
        self.current
    }

    /// The thirteen base relations (without the current variant).
    pub fn all_base() -> Vec<QueryRelation> {
        AllenRelation::ALL.iter().map(|&r| r.into()).collect()
    }

    pub fn name(&self) -> &'static str {
        if self.current {
            "overlap-current"
        } else {
            self.base.name()
        }
    }
}

impl From<AllenRelation> for QueryRelation {
    fn from(base: AllenRelation) -> Self {
        QueryRelation { base, current: false }
    }
}

impl fmt::Display for QueryRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryRelation {
    type Err = IntervalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        if norm == "overlap-current" || norm == "current" {
            return Ok(QueryRelation::CURRENT);
        }
        AllenRelation::ALL
            .iter()
            .find(|r| r.name() == norm)
            .map(|&r| r.into())
            .ok_or_else(|| IntervalError::UnknownRelation(s.to_string()))
    }
}

impl Serialize for QueryRelation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for QueryRelation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the finished-by condition is rendered and tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStyle {
    /// `a.start < b.start AND a.end = b.end`
    #[default]
    Allen,
    /// `a.start < b.start AND a.end < b.end`
    Loose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeRole {
    Start,
    End,
}

impl TimeRole {
    pub fn name(self) -> &'static str {
        match self {
            TimeRole::Start => "start",
            TimeRole::End => "end",
        }
    }
}

impl fmt::Display for TimeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which of an answer's time references a response must state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriteriaSet {
    pub start: bool,
    pub end: bool,
}

impl CriteriaSet {
    pub fn roles(&self) -> Vec<TimeRole> {
        let mut out = Vec::with_capacity(2);
        if self.start {
            out.push(TimeRole::Start);
        }
        if self.end {
            out.push(TimeRole::End);
        }
        out
    }

    pub fn len(&self) -> usize {
        usize::from(self.start) + usize::from(self.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn criteria_for(relation: QueryRelation) -> CriteriaSet {
    use AllenRelation::*;
    if relation.current {
        return CriteriaSet { start: true, end: false };
    }
    match relation.base {
        Before | Meet | FinishedBy => CriteriaSet { start: false, end: true },
        After | MetBy | StartedBy => CriteriaSet { start: true, end: false },
        _ => CriteriaSet { start: true, end: true },
    }
}

/// The unique base relation between two closed, non-degenerate intervals.
pub fn classify(a: &Interval, b: &Interval, g: Granularity) -> Result<AllenRelation, IntervalError> {
    let (a_end, b_end) = match (a.end, b.end) {
        (Some(x), Some(y)) => (x, y),
        (None, _) => return Err(IntervalError::OpenInterval(*a)),
        (_, None) => return Err(IntervalError::OpenInterval(*b)),
    };
    for i in [a, b] {
        if i.is_degenerate(g) {
            return Err(IntervalError::Degenerate(*i));
        }
    }
    let c = |x: &TimePoint, y: &TimePoint| compare_at(x, y, g);
    use std::cmp::Ordering as O;
    Ok(match (c(&a_end, &b.start), c(&a.start, &b_end)) {
        (O::Less, _) => AllenRelation::Before,
        (O::Equal, _) => AllenRelation::Meet,
        (_, O::Greater) => AllenRelation::After,
        (_, O::Equal) => AllenRelation::MetBy,
        _ => match (c(&a.start, &b.start), c(&a_end, &b_end)) {
            (O::Equal, O::Equal) => AllenRelation::Equal,
            (O::Equal, O::Less) => AllenRelation::Start,
            (O::Equal, O::Greater) => AllenRelation::StartedBy,
            (O::Greater, O::Equal) => AllenRelation::Finish,
            (O::Less, O::Equal) => AllenRelation::FinishedBy,
            (O::Greater, O::Less) => AllenRelation::During,
            (O::Less, O::Greater) => AllenRelation::Contain,
            (O::Less, O::Less) => AllenRelation::Overlap,
            (O::Greater, O::Greater) => AllenRelation::OverlappedBy,
        },
    })
}

/// Whether `a` stands in `relation` to `b`. Comparisons with a missing end
/// are false, except the current variant's null test.
pub fn holds(relation: QueryRelation, a: &Interval, b: &ReferenceInterval, g: Granularity) -> bool {
    holds_with(relation, a, b, g, ConditionStyle::Allen)
}

pub fn holds_with(
    relation: QueryRelation,
    a: &Interval,
    b: &ReferenceInterval,
    g: Granularity,
    style: ConditionStyle,
) -> bool {
    let c = |x: &TimePoint, y: &TimePoint| compare_at(x, y, g);
    let (bs, be) = (&b.start, &b.end);
    if relation.current {
        return a.end.is_none() && c(&a.start, bs).is_lt();
    }
    let s = |o: std::cmp::Ordering| move |x: &TimePoint| c(&a.start, x) == o;
    let e = |o: std::cmp::Ordering, x: &TimePoint| a.end.is_some_and(|ae| c(&ae, x) == o);
    use std::cmp::Ordering as O;
    match relation.base {
        AllenRelation::Before => e(O::Less, bs),
        AllenRelation::After => s(O::Greater)(be),
        AllenRelation::Meet => e(O::Equal, bs),
        AllenRelation::MetBy => s(O::Equal)(be),
        AllenRelation::Overlap => s(O::Less)(bs) && e(O::Greater, bs) && e(O::Less, be),
        AllenRelation::OverlappedBy => e(O::Greater, be) && s(O::Greater)(bs) && s(O::Less)(be),
        AllenRelation::Equal => s(O::Equal)(bs) && e(O::Equal, be),
        AllenRelation::Start => s(O::Equal)(bs) && e(O::Less, be),
        AllenRelation::StartedBy => s(O::Equal)(bs) && e(O::Greater, be),
        AllenRelation::Finish => s(O::Greater)(bs) && e(O::Equal, be),
        AllenRelation::FinishedBy => match style {
            ConditionStyle::Allen => s(O::Less)(bs) && e(O::Equal, be),
            ConditionStyle::Loose => s(O::Less)(bs) && e(O::Less, be),
        },
        AllenRelation::During => s(O::Greater)(bs) && e(O::Less, be),
        AllenRelation::Contain => s(O::Less)(bs) && e(O::Greater, be),
    }
}
