//! Calendar points at year/month/day granularity and calendar-aware durations.
//!
//! A [`TimePoint`] carries its own granularity: `2009` is a year point,
//! `2009-11` a month point, `2009-11-01` a day point. Points of different
//! granularity are compared either by truncating the finer one or by treating
//! the coarser one as the range of finer points it covers (see
//! [`compare_at`]).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimeError {
    #[error("unparsable date `{0}`")]
    Unparsable(String),
    #[error("invalid calendar date {0}")]
    InvalidDate(String),
    #[error("cannot shift {point} (granularity {granularity}) by a {unit} duration")]
    UnitTooFine {
        point: TimePoint,
        granularity: Granularity,
        unit: DurationUnit,
    },
    #[error("date arithmetic out of range for {0}")]
    OutOfRange(TimePoint),
}

/// Precision of a time point, ordered from coarse to fine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Year,
    Month,
    Day,
}

impl Granularity {
    pub fn coarser(self, other: Granularity) -> Granularity {
        self.min(other)
    }

    pub fn finer(self, other: Granularity) -> Granularity {
        self.max(other)
    }

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Year => "year",
            Granularity::Month => "month",
            Granularity::Day => "day",
        }
    }

    /// The duration unit whose arithmetic is exact at this granularity.
    pub fn base_unit(self) -> DurationUnit {
        match self {
            Granularity::Year => DurationUnit::Year,
            Granularity::Month => DurationUnit::Month,
            Granularity::Day => DurationUnit::Day,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Granularity {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "year" => Ok(Granularity::Year),
            "month" => Ok(Granularity::Month),
            "day" => Ok(Granularity::Day),
            other => Err(TimeError::Unparsable(other.to_string())),
        }
    }
}

/// A calendar point. `day` present implies `month` present. The derived
/// ordering is structural; use [`compare_at`] for temporal comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimePoint {
    year: i32,
    month: Option<u8>,
    day: Option<u8>,
}

impl TimePoint {
    pub fn year(year: i32) -> TimePoint {
        TimePoint {
            year,
            month: None,
            day: None,
        }
    }

    pub fn month(year: i32, month: u32) -> Result<TimePoint, TimeError> {
        if !(1..=12).contains(&month) {
            return Err(TimeError::InvalidDate(format!("{year:04}-{month:02}")));
        }
        Ok(TimePoint {
            year,
            month: Some(month as u8),
            day: None,
        })
    }

    pub fn day(year: i32, month: u32, day: u32) -> Result<TimePoint, TimeError> {
        NaiveDate::from_ymd_opt(year, month, day)
            .map(TimePoint::from_date)
            .ok_or_else(|| TimeError::InvalidDate(format!("{year:04}-{month:02}-{day:02}")))
    }

    pub fn from_date(date: NaiveDate) -> TimePoint {
        TimePoint {
            year: date.year(),
            month: Some(date.month() as u8),
            day: Some(date.day() as u8),
        }
    }

    pub fn year_value(&self) -> i32 {
        self.year
    }

    pub fn month_value(&self) -> Option<u32> {
        self.month.map(u32::from)
    }

    pub fn day_value(&self) -> Option<u32> {
        self.day.map(u32::from)
    }

    pub fn granularity(&self) -> Granularity {
        match (self.month, self.day) {
            (_, Some(_)) => Granularity::Day,
            (Some(_), None) => Granularity::Month,
            _ => Granularity::Year,
        }
    }

    /// Drops components finer than `g`. Points already at or coarser than
    /// `g` are returned unchanged.
    pub fn truncate(&self, g: Granularity) -> TimePoint {
        match g {
            Granularity::Year => TimePoint::year(self.year),
            Granularity::Month => TimePoint {
                year: self.year,
                month: self.month,
                day: None,
            },
            Granularity::Day => *self,
        }
    }

    pub fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(
            self.year,
            self.month_value().unwrap_or(1),
            self.day_value().unwrap_or(1),
        )
        .expect("validated on construction")
    }

    pub fn last_day(&self) -> NaiveDate {
        match self.granularity() {
            Granularity::Day => self.first_day(),
            Granularity::Month => {
                let first = self.first_day();
                first
                    .checked_add_months(Months::new(1))
                    .and_then(|d| d.pred_opt())
                    .expect("in range")
            }
            Granularity::Year => NaiveDate::from_ymd_opt(self.year, 12, 31).expect("in range"),
        }
    }

    /// Position on the tick line of this point's own granularity: years,
    /// months since year 0, or days since the common era.
    pub fn ordinal(&self) -> i64 {
        match self.granularity() {
            Granularity::Year => i64::from(self.year),
            Granularity::Month => i64::from(self.year) * 12 + i64::from(self.month.unwrap()) - 1,
            Granularity::Day => i64::from(self.first_day().num_days_from_ce()),
        }
    }

    pub fn from_ordinal(g: Granularity, ordinal: i64) -> Result<TimePoint, TimeError> {
        let out_of_range = || TimeError::InvalidDate(format!("ordinal {ordinal} at {g}"));
        match g {
            Granularity::Year => i32::try_from(ordinal)
                .map(TimePoint::year)
                .map_err(|_| out_of_range()),
            Granularity::Month => {
                let year = i32::try_from(ordinal.div_euclid(12)).map_err(|_| out_of_range())?;
                TimePoint::month(year, ordinal.rem_euclid(12) as u32 + 1)
            }
            Granularity::Day => i32::try_from(ordinal)
                .ok()
                .and_then(NaiveDate::from_num_days_from_ce_opt)
                .map(TimePoint::from_date)
                .ok_or_else(out_of_range),
        }
    }

    /// Ordinal at granularity `g`. For points finer than `g` this truncates;
    /// for coarser points it is the ordinal of the first covered `g` point.
    pub fn ordinal_at(&self, g: Granularity) -> i64 {
        self.lo_at(g).ordinal()
    }

    /// First point at granularity `g` covered by this point.
    pub fn lo_at(&self, g: Granularity) -> TimePoint {
        if self.granularity() >= g {
            self.truncate(g)
        } else {
            TimePoint::from_date(self.first_day()).truncate(g)
        }
    }

    /// Last point at granularity `g` covered by this point.
    pub fn hi_at(&self, g: Granularity) -> TimePoint {
        if self.granularity() >= g {
            self.truncate(g)
        } else {
            TimePoint::from_date(self.last_day()).truncate(g)
        }
    }

    pub fn shift(&self, by: Duration) -> Result<TimePoint, TimeError> {
        let g = self.granularity();
        if by.unit.granularity() > g {
            return Err(TimeError::UnitTooFine {
                point: *self,
                granularity: g,
                unit: by.unit,
            });
        }
        let overflow = || TimeError::OutOfRange(*self);
        match (g, by.unit) {
            (Granularity::Year, _) => {
                let y = i64::from(self.year) + by.count;
                i32::try_from(y).map(TimePoint::year).map_err(|_| overflow())
            }
            (Granularity::Month, DurationUnit::Year) => {
                TimePoint::from_ordinal(g, self.ordinal() + 12 * by.count)
            }
            (Granularity::Month, _) => TimePoint::from_ordinal(g, self.ordinal() + by.count),
            (Granularity::Day, unit) => {
                let date = self.first_day();
                let magnitude = by.count.unsigned_abs();
                let shifted = match unit {
                    DurationUnit::Day => {
                        if by.count >= 0 {
                            date.checked_add_days(Days::new(magnitude))
                        } else {
                            date.checked_sub_days(Days::new(magnitude))
                        }
                    }
                    DurationUnit::Month | DurationUnit::Year => {
                        let months = if unit == DurationUnit::Year {
                            magnitude.checked_mul(12)
                        } else {
                            Some(magnitude)
                        };
                        let months = months
                            .and_then(|m| u32::try_from(m).ok())
                            .ok_or_else(overflow)?;
                        if by.count >= 0 {
                            date.checked_add_months(Months::new(months))
                        } else {
                            date.checked_sub_months(Months::new(months))
                        }
                    }
                };
                shifted.map(TimePoint::from_date).ok_or_else(overflow)
            }
        }
    }

    pub fn parse_iso(s: &str) -> Result<TimePoint, TimeError> {
        let s = s.trim();
        let bad = || TimeError::Unparsable(s.to_string());
        let parts: Vec<&str> = s.split('-').collect();
        let num = |p: &str, len: usize| -> Result<u32, TimeError> {
            if p.len() != len || !p.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            p.parse::<u32>().map_err(|_| bad())
        };
        match parts.as_slice() {
            [y] => Ok(TimePoint::year(num(y, 4)? as i32)),
            [y, m] => TimePoint::month(num(y, 4)? as i32, num(m, 2)?),
            [y, m, d] => TimePoint::day(num(y, 4)? as i32, num(m, 2)?, num(d, 2)?),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.month, self.day) {
            (Some(m), Some(d)) => write!(f, "{:04}-{:02}-{:02}", self.year, m, d),
            (Some(m), None) => write!(f, "{:04}-{:02}", self.year, m),
            _ => write!(f, "{:04}", self.year),
        }
    }
}

impl FromStr for TimePoint {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TimePoint::parse_iso(s)
    }
}

impl Serialize for TimePoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimePoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        TimePoint::parse_iso(&s).map_err(serde::de::Error::custom)
    }
}

/// Compares `x` against `y` at working granularity `g`.
///
/// Both points are first truncated to `g` if they are finer. If they then
/// share a granularity the comparison is ordinal. Otherwise the coarser point
/// stands for the range of finer points it covers: the finer point is `Less`
/// when it precedes the whole range, `Greater` when it follows it, and
/// `Equal` when it falls inside it.
pub fn compare_at(x: &TimePoint, y: &TimePoint, g: Granularity) -> Ordering {
    let x = x.truncate(g);
    let y = y.truncate(g);
    let gx = x.granularity();
    let gy = y.granularity();
    if gx == gy {
        return x.ordinal().cmp(&y.ordinal());
    }
    if gx > gy {
        range_cmp(&x, &y)
    } else {
        range_cmp(&y, &x).reverse()
    }
}

fn range_cmp(fine: &TimePoint, coarse: &TimePoint) -> Ordering {
    let g = fine.granularity();
    let v = fine.ordinal();
    if v < coarse.lo_at(g).ordinal() {
        Ordering::Less
    } else if v > coarse.hi_at(g).ordinal() {
        Ordering::Greater
    } else {
        Ordering::Equal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationUnit {
    Day,
    Month,
    Year,
}

impl DurationUnit {
    /// Finest granularity at which this unit's arithmetic is defined.
    pub fn granularity(self) -> Granularity {
        match self {
            DurationUnit::Day => Granularity::Day,
            DurationUnit::Month => Granularity::Month,
            DurationUnit::Year => Granularity::Year,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DurationUnit::Day => "day",
            DurationUnit::Month => "month",
            DurationUnit::Year => "year",
        }
    }

    pub const ALL: [DurationUnit; 3] = [DurationUnit::Day, DurationUnit::Month, DurationUnit::Year];
}

impl fmt::Display for DurationUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DurationUnit {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().trim_end_matches('s') {
            "day" => Ok(DurationUnit::Day),
            "month" => Ok(DurationUnit::Month),
            "year" => Ok(DurationUnit::Year),
            _ => Err(TimeError::Unparsable(s.to_string())),
        }
    }
}

/// Signed calendar duration: a count of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Duration {
    pub count: i64,
    pub unit: DurationUnit,
}

impl Duration {
    pub fn new(count: i64, unit: DurationUnit) -> Duration {
        Duration { count, unit }
    }

    pub fn days(count: i64) -> Duration {
        Duration::new(count, DurationUnit::Day)
    }

    pub fn months(count: i64) -> Duration {
        Duration::new(count, DurationUnit::Month)
    }

    pub fn years(count: i64) -> Duration {
        Duration::new(count, DurationUnit::Year)
    }

    pub fn negate(self) -> Duration {
        Duration::new(-self.count, self.unit)
    }

    /// SQLite-style modifier, e.g. `-4 month`.
    pub fn sql_modifier(&self) -> String {
        format!("{:+} {}", self.count, self.unit)
    }

    /// Parses the modifier form produced by [`Duration::sql_modifier`].
    pub fn parse_modifier(s: &str) -> Result<Duration, TimeError> {
        let mut it = s.split_whitespace();
        let (Some(count), Some(unit), None) = (it.next(), it.next(), it.next()) else {
            return Err(TimeError::Unparsable(s.to_string()));
        };
        let count: i64 = count
            .trim_start_matches('+')
            .parse()
            .map_err(|_| TimeError::Unparsable(s.to_string()))?;
        Ok(Duration::new(count, unit.parse()?))
    }

    /// The duration `start -> end` counted in `unit`, if that count is exact
    /// in both directions (`start + d = end` and `end - d = start`).
    pub fn exact_between(start: &TimePoint, end: &TimePoint, unit: DurationUnit) -> Option<Duration> {
        let g = start.granularity();
        if end.granularity() != g || unit.granularity() > g {
            return None;
        }
        let count = match unit {
            DurationUnit::Year => i64::from(end.year_value()) - i64::from(start.year_value()),
            DurationUnit::Month => end.truncate(Granularity::Month).ordinal()
                - start.truncate(Granularity::Month).ordinal(),
            DurationUnit::Day => end.ordinal() - start.ordinal(),
        };
        let d = Duration::new(count, unit);
        let forward = start.shift(d).ok()?;
        let backward = end.shift(d.negate()).ok()?;
        (forward == *end && backward == *start).then_some(d)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plural = if self.count.abs() == 1 { "" } else { "s" };
        write!(f, "{} {}{}", self.count, self.unit, plural)
    }
}
