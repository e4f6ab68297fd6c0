use std::cmp::Ordering;

use super::{AllenRelation, ConditionStyle, QueryRelation, ReferenceInterval};
use crate::store::Interval;
use crate::time::{compare_at, Duration, Granularity, TimeError, TimePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Start,
    End,
}

impl Endpoint {
    fn of(self, a: &Interval) -> Option<TimePoint> {
        match self {
            Endpoint::Start => Some(a.start),
            Endpoint::End => a.end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Lt,
    Gt,
    Eq,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Gt => ">",
            CompareOp::Eq => "=",
        }
    }

    fn accepts(self, o: Ordering) -> bool {
        matches!(
            (self, o),
            (CompareOp::Lt, Ordering::Less) | (CompareOp::Gt, Ordering::Greater) | (CompareOp::Eq, Ordering::Equal)
        )
    }
}

/// Right-hand side of a comparison: a literal or `literal ± duration`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    Literal(TimePoint),
    Shifted { base: TimePoint, by: Duration },
}

impl Operand {
    pub fn resolve(&self) -> Result<TimePoint, TimeError> {
        match self {
            Operand::Literal(t) => Ok(*t),
            Operand::Shifted { base, by } => base.shift(*by),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Atom {
    Compare {
        endpoint: Endpoint,
        op: CompareOp,
        rhs: Operand,
    },
    /// `lower < endpoint < upper`
    Between {
        endpoint: Endpoint,
        lower: TimePoint,
        upper: TimePoint,
    },
    IsNull(Endpoint),
}

impl Atom {
    fn evaluate(&self, a: &Interval, g: Granularity) -> Result<bool, TimeError> {
        Ok(match self {
            Atom::Compare { endpoint, op, rhs } => {
                let rhs = rhs.resolve()?;
                endpoint.of(a).is_some_and(|x| op.accepts(compare_at(&x, &rhs, g)))
            }
            Atom::Between { endpoint, lower, upper } => endpoint
                .of(a)
                .is_some_and(|x| compare_at(&x, lower, g).is_gt() && compare_at(&x, upper, g).is_lt()),
            Atom::IsNull(endpoint) => endpoint.of(a).is_none(),
        })
    }
}

/// Conjunction of atoms over the candidate interval's start and end.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TemporalCondition {
    pub atoms: Vec<Atom>,
}

impl TemporalCondition {
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Just `End IS NULL`.
    pub fn currently_open() -> TemporalCondition {
        TemporalCondition {
            atoms: vec![Atom::IsNull(Endpoint::End)],
        }
    }

    pub fn evaluate(&self, a: &Interval, g: Granularity) -> Result<bool, TimeError> {
        for atom in &self.atoms {
            if !atom.evaluate(a, g)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn condition_for(relation: QueryRelation, b: &ReferenceInterval, style: ConditionStyle) -> TemporalCondition {
    use AllenRelation::*;
    use CompareOp::*;
    use Endpoint::{End as E, Start as S};
    let cmp = |endpoint, op, t: TimePoint| Atom::Compare {
        endpoint,
        op,
        rhs: Operand::Literal(t),
    };
    let atoms = if relation.is_current() {
        vec![cmp(S, Lt, b.start), Atom::IsNull(E)]
    } else {
        match relation.base() {
            Before => vec![cmp(E, Lt, b.start)],
            After => vec![cmp(S, Gt, b.end)],
            Meet => vec![Atom::Compare {
                endpoint: E,
                op: Eq,
                rhs: Operand::Shifted {
                    base: b.end,
                    by: b.length.negate(),
                },
            }],
            MetBy => vec![Atom::Compare {
                endpoint: S,
                op: Eq,
                rhs: Operand::Shifted {
                    base: b.start,
                    by: b.length,
                },
            }],
            Overlap => vec![
                cmp(S, Lt, b.start),
                Atom::Between {
                    endpoint: E,
                    lower: b.start,
                    upper: b.end,
                },
            ],
            OverlappedBy => vec![
                cmp(E, Gt, b.end),
                Atom::Between {
                    endpoint: S,
                    lower: b.start,
                    upper: b.end,
                },
            ],
            Equal => vec![cmp(S, Eq, b.start), cmp(E, Eq, b.end)],
            Start => vec![cmp(S, Eq, b.start), cmp(E, Lt, b.end)],
            StartedBy => vec![cmp(S, Eq, b.start), cmp(E, Gt, b.end)],
            Finish => vec![cmp(S, Gt, b.start), cmp(E, Eq, b.end)],
            FinishedBy => match style {
                ConditionStyle::Allen => vec![cmp(S, Lt, b.start), cmp(E, Eq, b.end)],
                ConditionStyle::Loose => vec![cmp(S, Lt, b.start), cmp(E, Lt, b.end)],
            },
            During => vec![cmp(S, Gt, b.start), cmp(E, Lt, b.end)],
            Contain => vec![cmp(S, Lt, b.start), cmp(E, Gt, b.end)],
        }
    };
    TemporalCondition { atoms }
}
