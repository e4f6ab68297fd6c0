use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{holds_with, AllenRelation, ConditionStyle, IntervalError, QueryRelation, ReferenceInterval};
use crate::store::Interval;
use crate::time::{Duration, DurationUnit, Granularity, TimePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// `b` such that the relation holds for `a`.
    Satisfying,
    /// `b` such that the relation does not hold for `a`.
    Miss,
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Satisfying => "satisfying",
            SampleMode::Miss => "miss",
        })
    }
}

/// Inclusive count range, written `[min, max]` in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(i64, i64)", into = "(i64, i64)")]
pub struct CountRange {
    pub min: i64,
    pub max: i64,
}

impl From<(i64, i64)> for CountRange {
    fn from((min, max): (i64, i64)) -> Self {
        CountRange { min, max }
    }
}

impl From<CountRange> for (i64, i64) {
    fn from(r: CountRange) -> Self {
        (r.min, r.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Distance between an anchor endpoint of `a` and the nearest endpoint of `b`.
    pub offsets: BTreeMap<DurationUnit, CountRange>,
    /// Length of `b` where it is not fixed by `a`.
    pub lengths: BTreeMap<DurationUnit, CountRange>,
    /// Probability that a query is built in miss mode.
    pub miss_probability: f64,
    /// Relations to generate; `None` means the thirteen base relations.
    pub relations: Option<Vec<QueryRelation>>,
    pub finished_by: ConditionStyle,
    pub max_attempts: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        let ranges = |y, m, d| {
            BTreeMap::from([
                (DurationUnit::Year, CountRange::from(y)),
                (DurationUnit::Month, CountRange::from(m)),
                (DurationUnit::Day, CountRange::from(d)),
            ])
        };
        SamplerConfig {
            offsets: ranges((1, 5), (1, 18), (1, 400)),
            lengths: ranges((1, 10), (1, 24), (1, 730)),
            miss_probability: 0.2,
            relations: None,
            finished_by: ConditionStyle::Allen,
            max_attempts: 64,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (what, map) in [("offsets", &self.offsets), ("lengths", &self.lengths)] {
            if map.is_empty() {
                return Err(format!("{what} must name at least one unit"));
            }
            for (unit, r) in map {
                if r.min < 1 || r.max < r.min {
                    return Err(format!("{what}.{unit}: range [{}, {}] must satisfy 1 <= min <= max", r.min, r.max));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.miss_probability) {
            return Err("miss_probability must lie in [0, 1]".into());
        }
        if self.max_attempts == 0 {
            return Err("max_attempts must be positive".into());
        }
        Ok(())
    }

    pub fn relations(&self) -> Vec<QueryRelation> {
        self.relations.clone().unwrap_or_else(QueryRelation::all_base)
    }
}

enum Failure {
    Impossible(String),
    Retry,
}

type Attempt<T> = Result<T, Failure>;

fn retry<T, E>(r: Result<T, E>) -> Attempt<T> {
    r.map_err(|_| Failure::Retry)
}

/// Samples a reference interval `b` for candidate interval `a` at working
/// granularity `g`. The result is always checked with `holds_with`.
pub fn sample_reference<R: Rng + ?Sized>(
    rng: &mut R,
    a: &Interval,
    relation: QueryRelation,
    config: &SamplerConfig,
    g: Granularity,
    mode: SampleMode,
) -> Result<ReferenceInterval, IntervalError> {
    let a = a.truncate(g);
    let unsatisfiable = |reason: String| IntervalError::Unsatisfiable {
        relation,
        interval: a,
        mode,
        reason,
    };
    let style = config.finished_by;
    for _ in 0..config.max_attempts.max(1) {
        let b = match construct(rng, &a, relation, config, g) {
            Ok(b) => b,
            Err(Failure::Impossible(reason)) => return Err(unsatisfiable(reason)),
            Err(Failure::Retry) => continue,
        };
        if !holds_with(relation, &a, &b, g, style) {
            continue;
        }
        match mode {
            SampleMode::Satisfying => return Ok(b),
            SampleMode::Miss => {
                if let Ok(missed) = displace(rng, &a, &b, relation, config, g) {
                    return Ok(missed);
                }
            }
        }
    }
    Err(unsatisfiable(format!("no reference found in {} attempts", config.max_attempts)))
}

fn draw<R: Rng + ?Sized>(rng: &mut R, ranges: &BTreeMap<DurationUnit, CountRange>, g: Granularity) -> Attempt<Duration> {
    let usable: Vec<(&DurationUnit, &CountRange)> = ranges.iter().filter(|(u, _)| u.granularity() <= g).collect();
    if usable.is_empty() {
        return Err(Failure::Impossible(format!("no configured unit usable at {g} granularity")));
    }
    let (unit, range) = usable[rng.random_range(0..usable.len())];
    let count = rng.random_range(range.min.max(1)..=range.max.max(range.min.max(1)));
    Ok(Duration::new(count, *unit))
}

/// A tick strictly between `lo` and `hi`.
fn inner<R: Rng + ?Sized>(rng: &mut R, lo: &TimePoint, hi: &TimePoint, g: Granularity) -> Attempt<TimePoint> {
    let (l, h) = (lo.ordinal_at(g), hi.ordinal_at(g));
    if h - l < 2 {
        return Err(Failure::Impossible("interval has no interior point".into()));
    }
    retry(TimePoint::from_ordinal(g, rng.random_range(l + 1..h)))
}

fn span(bs: TimePoint, be: TimePoint, unit: Option<DurationUnit>) -> Attempt<ReferenceInterval> {
    retry(ReferenceInterval::spanning(bs, be, unit))
}

fn construct<R: Rng + ?Sized>(
    rng: &mut R,
    a: &Interval,
    relation: QueryRelation,
    config: &SamplerConfig,
    g: Granularity,
) -> Attempt<ReferenceInterval> {
    let off = |rng: &mut R| draw(rng, &config.offsets, g);
    let len = |rng: &mut R| draw(rng, &config.lengths, g);
    let shift = |p: &TimePoint, d: Duration| retry(p.shift(d));
    let after_start = |rng: &mut R, p: &TimePoint| -> Attempt<ReferenceInterval> {
        let l = len(rng)?;
        span(*p, shift(p, l)?, Some(l.unit))
    };
    let before_end = |rng: &mut R, p: &TimePoint| -> Attempt<ReferenceInterval> {
        let l = len(rng)?;
        span(shift(p, l.negate())?, *p, Some(l.unit))
    };

    if relation.is_current() {
        if a.end.is_some() {
            return Err(Failure::Impossible("current requires an open-ended tuple".into()));
        }
        let bs = shift(&a.start, off(rng)?)?;
        return after_start(rng, &bs);
    }
    let s = a.start;
    if relation.base() == AllenRelation::After {
        let be = shift(&s, off(rng)?.negate())?;
        return before_end(rng, &be);
    }
    let Some(e) = a.end else {
        return Err(Failure::Impossible(format!("{relation} needs a closed interval")));
    };
    use AllenRelation::*;
    match relation.base() {
        Before => {
            let bs = shift(&e, off(rng)?)?;
            after_start(rng, &bs)
        }
        Meet => after_start(rng, &e),
        MetBy => before_end(rng, &s),
        Overlap => {
            let bs = inner(rng, &s, &e, g)?;
            span(bs, shift(&e, off(rng)?)?, None)
        }
        OverlappedBy => {
            let be = inner(rng, &s, &e, g)?;
            span(shift(&s, off(rng)?.negate())?, be, None)
        }
        Equal => span(s, e, None),
        Start => span(s, shift(&e, off(rng)?)?, None),
        StartedBy => span(s, inner(rng, &s, &e, g)?, None),
        Finish => span(shift(&s, off(rng)?.negate())?, e, None),
        FinishedBy => match config.finished_by {
            ConditionStyle::Allen => span(inner(rng, &s, &e, g)?, e, None),
            ConditionStyle::Loose => {
                let bs = shift(&s, off(rng)?)?;
                let later = if bs.ordinal_at(g) > e.ordinal_at(g) { bs } else { e };
                span(bs, shift(&later, off(rng)?)?, None)
            }
        },
        During => span(shift(&s, off(rng)?.negate())?, shift(&e, off(rng)?)?, None),
        Contain => {
            let (l, h) = (s.ordinal_at(g), e.ordinal_at(g));
            if h - l < 3 {
                return Err(Failure::Impossible("interval too short to contain another".into()));
            }
            let x = rng.random_range(l + 1..h - 1);
            let y = rng.random_range(x + 1..h);
            span(
                retry(TimePoint::from_ordinal(g, x))?,
                retry(TimePoint::from_ordinal(g, y))?,
                None,
            )
        }
        After => unreachable!("handled above"),
    }
}

/// Moves a satisfying `b` by a random signed offset until the relation
/// no longer holds.
fn displace<R: Rng + ?Sized>(
    rng: &mut R,
    a: &Interval,
    b: &ReferenceInterval,
    relation: QueryRelation,
    config: &SamplerConfig,
    g: Granularity,
) -> Attempt<ReferenceInterval> {
    for _ in 0..config.max_attempts.max(1) {
        let mut d = draw(rng, &config.offsets, g)?;
        if rng.random_bool(0.5) {
            d = d.negate();
        }
        let (Ok(bs), Ok(be)) = (b.start.shift(d), b.end.shift(d)) else {
            continue;
        };
        let Ok(moved) = ReferenceInterval::spanning(bs, be, Some(b.length.unit)) else {
            continue;
        };
        if !holds_with(relation, a, &moved, g, config.finished_by) {
            return Ok(moved);
        }
    }
    Err(Failure::Retry)
}
