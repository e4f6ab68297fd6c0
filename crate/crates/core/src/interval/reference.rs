use serde::{Deserialize, Serialize};

use super::IntervalError;
use crate::store::Interval;
use crate::time::{Duration, DurationUnit, TimePoint};

/// The constraint interval `b` of a query. `start + length = end` and
/// `end - length = start` both hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReferenceInterval {
    pub start: TimePoint,
    pub end: TimePoint,
    pub length: Duration,
}

impl ReferenceInterval {
    pub fn new(start: TimePoint, end: TimePoint, length: Duration) -> Result<Self, IntervalError> {
        let bad = |why: &str| IntervalError::BadReference(format!("[{start}, {end}] length {length}: {why}"));
        if start.granularity() != end.granularity() {
            return Err(bad("endpoints differ in granularity"));
        }
        if start.ordinal() > end.ordinal() {
            return Err(bad("start after end"));
        }
        if start.shift(length)? != end || end.shift(length.negate())? != start {
            return Err(bad("length is not the exact calendar difference"));
        }
        Ok(ReferenceInterval { start, end, length })
    }

    pub fn from_start(start: TimePoint, length: Duration) -> Result<Self, IntervalError> {
        ReferenceInterval::new(start, start.shift(length)?, length)
    }

    pub fn from_end(end: TimePoint, length: Duration) -> Result<Self, IntervalError> {
        ReferenceInterval::new(end.shift(length.negate())?, end, length)
    }

    /// `[start, end]` with its length expressed in `preferred` when exact,
    /// otherwise in the coarsest exact unit.
    pub fn spanning(start: TimePoint, end: TimePoint, preferred: Option<DurationUnit>) -> Result<Self, IntervalError> {
        let candidates = preferred
            .into_iter()
            .chain([DurationUnit::Year, DurationUnit::Month, DurationUnit::Day]);
        for unit in candidates {
            if let Some(length) = Duration::exact_between(&start, &end, unit) {
                return ReferenceInterval::new(start, end, length);
            }
        }
        Err(IntervalError::BadReference(format!("no exact length for [{start}, {end}]")))
    }

    pub fn as_interval(&self) -> Interval {
        Interval::closed(self.start, self.end)
    }
}
