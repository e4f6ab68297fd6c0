use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::time::{Granularity, TimePoint};

/// A date found in free text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateMention {
    pub value: TimePoint,
    pub granularity: Granularity,
    /// Character offsets `[start, end)` in the source text.
    pub span: (usize, usize),
}

const MON: &str = "(january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sept|sep|oct|nov|dec)";

#[derive(Clone, Copy)]
enum Shape {
    YearMonthDay,
    DayMonYear,
    MonDayYear,
    MonYear,
    YearMonth,
    Year,
}

fn patterns() -> &'static [(Regex, Shape)] {
    static P: OnceLock<Vec<(Regex, Shape)>> = OnceLock::new();
    P.get_or_init(|| {
        let r = |s: String| Regex::new(&format!("(?i){s}")).expect("static pattern");
        vec![
            (r(r"\b(\d{4})[-/.](\d{1,2})[-/.](\d{1,2})\b".into()), Shape::YearMonthDay),
            (
                r(format!(r"\b(\d{{1,2}})(?:st|nd|rd|th)?(?:\s+of)?\s+{MON}\b\.?,?\s+(\d{{4}})\b")),
                Shape::DayMonYear,
            ),
            (
                r(format!(r"\b{MON}\b\.?\s+(\d{{1,2}})(?:st|nd|rd|th)?\b,?\s+(\d{{4}})\b")),
                Shape::MonDayYear,
            ),
            (r(format!(r"\b{MON}\b\.?,?\s+(?:of\s+)?(\d{{4}})\b")), Shape::MonYear),
            (r(r"\b(\d{4})-(\d{2})\b".into()), Shape::YearMonth),
            (r(r"\b([12]\d{3})\b".into()), Shape::Year),
        ]
    })
}

fn month_number(name: &str) -> u32 {
    let n = name.to_ascii_lowercase();
    const PREFIXES: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];
    PREFIXES.iter().position(|p| n.starts_with(p)).map(|i| i as u32 + 1).unwrap_or(0)
}

fn build(shape: Shape, caps: &regex::Captures<'_>) -> Option<TimePoint> {
    let num = |i: usize| caps.get(i).and_then(|m| m.as_str().parse::<i64>().ok());
    let year = |i: usize| num(i).and_then(|y| i32::try_from(y).ok());
    let small = |i: usize| num(i).and_then(|v| u32::try_from(v).ok());
    match shape {
        Shape::YearMonthDay => TimePoint::day(year(1)?, small(2)?, small(3)?).ok(),
        Shape::DayMonYear => TimePoint::day(year(3)?, month_number(caps.get(2)?.as_str()), small(1)?).ok(),
        Shape::MonDayYear => TimePoint::day(year(3)?, month_number(caps.get(1)?.as_str()), small(2)?).ok(),
        Shape::MonYear => TimePoint::month(year(2)?, month_number(caps.get(1)?.as_str())).ok(),
        Shape::YearMonth => TimePoint::month(year(1)?, small(2)?).ok(),
        Shape::Year => {
            let y = year(1)?;
            (1000..=2999).contains(&y).then(|| TimePoint::year(y))
        }
    }
}

/// All date mentions in `text`, left to right. Overlapping candidates are
/// resolved longest first.
pub fn extract_dates(text: &str) -> Vec<DateMention> {
    let mut candidates: Vec<(usize, usize, TimePoint)> = Vec::new();
    for (re, shape) in patterns() {
        for caps in re.captures_iter(text) {
            let m = caps.get(0).expect("whole match");
            if let Some(t) = build(*shape, &caps) {
                candidates.push((m.start(), m.end(), t));
            }
        }
    }
    candidates.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut taken: Vec<(usize, usize, TimePoint)> = Vec::new();
    for c in candidates {
        if taken.iter().all(|t| c.1 <= t.0 || c.0 >= t.1) {
            taken.push(c);
        }
    }
    taken.sort_by_key(|c| c.0);
    taken
        .into_iter()
        .map(|(s, e, value)| DateMention {
            value,
            granularity: value.granularity(),
            span: (text[..s].chars().count(), text[..e].chars().count()),
        })
        .collect()
}

/// True when the mention names `gold` at granularity `g`. Mentions coarser
/// than `g` never match.
pub fn mention_matches(m: &DateMention, gold: &TimePoint, g: Granularity) -> bool {
    m.granularity >= g && gold.granularity() >= g && m.value.truncate(g) == gold.truncate(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(text: &str) -> Vec<String> {
        extract_dates(text).iter().map(|m| m.value.to_string()).collect()
    }

    #[test]
    fn listed_formats_agree() {
        for s in ["26 Jan 2025", "January 26, 2025", "2025/01/26", "2025-01-26", "26th of January 2025"] {
            assert_eq!(values(s), vec!["2025-01-26"], "{s}");
        }
    }

    #[test]
    fn coarse_mentions() {
        assert_eq!(values("King Willem-Alexander, since April 2013."), vec!["2013-04"]);
        assert_eq!(values("Inscribed since 2019"), vec!["2019"]);
        assert_eq!(values("in 2015-03 it changed"), vec!["2015-03"]);
        assert!(values("no dates here").is_empty());
        assert!(values("room 404 and 12345 and 0999").is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let text = "He reigned from 1989-01-07 to 2019-05-01.";
        let ms = extract_dates(text);
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].value.to_string(), "1989-01-07");
        assert_eq!(ms[0].span, (16, 26));
        assert_eq!(values("who served from May 1955 to May 1962"), vec!["1955-05", "1962-05"]);
        assert_eq!(values("term ended in January 1, 2019."), vec!["2019-01-01"]);
    }

    #[test]
    fn invalid_calendar_dates_are_dropped() {
        assert_eq!(values("2023-02-30"), vec!["2023-02"]);
    }

    #[test]
    fn matching_respects_granularity() {
        let day = extract_dates("2009-11-03")[0];
        let month = extract_dates("November 2009")[0];
        let gold: TimePoint = "2009-11".parse().unwrap();
        assert!(mention_matches(&day, &gold, Granularity::Month));
        assert!(mention_matches(&month, &gold, Granularity::Year));
        let gold_day: TimePoint = "2009-11-03".parse().unwrap();
        assert!(!mention_matches(&month, &gold_day, Granularity::Day));
        assert!(mention_matches(&month, &gold_day, Granularity::Month));
    }
}
