use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalError, ScoreRecord};
use crate::qagen::QAItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slice {
    Overall,
    Relation,
    Cardinality,
    Domain,
    Span,
    Hops,
}

impl Slice {
    pub const ALL: [Slice; 6] = [
        Slice::Overall,
        Slice::Relation,
        Slice::Cardinality,
        Slice::Domain,
        Slice::Span,
        Slice::Hops,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slice::Overall => "overall",
            Slice::Relation => "relation",
            Slice::Cardinality => "cardinality",
            Slice::Domain => "domain",
            Slice::Span => "span",
            Slice::Hops => "hops",
        }
    }

    fn key(self, qa: &QAItem) -> String {
        match self {
            Slice::Overall => "all".into(),
            Slice::Relation => qa.relation.name().into(),
            Slice::Cardinality => qa.cardinality.name().into(),
            Slice::Domain => qa.dataset.clone(),
            Slice::Span => span_bucket(qa),
            Slice::Hops => qa.hops.as_ref().map_or(1, |h| h.len()).to_string(),
        }
    }
}

impl FromStr for Slice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Slice::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| format!("unknown slice `{s}`"))
    }
}

/// Five-year bucket of the earliest gold answer start, 1985 to 2025.
pub fn span_bucket(qa: &QAItem) -> String {
    let Some(year) = qa.answers.iter().map(|a| a.interval.start.year_value()).min() else {
        return "n/a".into();
    };
    if year < 1985 {
        "<1985".into()
    } else if year >= 2025 {
        "2025+".into()
    } else {
        let lo = 1985 + 5 * ((year - 1985) / 5);
        format!("{lo}-{}", lo + 4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub model: String,
    pub slice: String,
    pub key: String,
    pub n: usize,
    pub a: f64,
    /// Mean over records with a time score.
    pub t: Option<f64>,
    pub at: f64,
    pub delta: f64,
    /// `h[i]` is H_(i+1); absent when nobody got hops 1..=i+1 right.
    pub h: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub hop_columns: usize,
    pub rows: Vec<SliceStats>,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn stats(model: &str, slice: Slice, key: String, records: &[&ScoreRecord], hop_columns: usize) -> SliceStats {
    let n = records.len();
    let a = pct(records.iter().filter(|r| r.answer_correct).count(), n);
    let at = pct(records.iter().filter(|r| r.at_correct).count(), n);
    let timed: Vec<u8> = records.iter().filter_map(|r| r.time_score).collect();
    let t = (!timed.is_empty()).then(|| timed.iter().map(|&s| s as f64).sum::<f64>() / timed.len() as f64);
    let h = (1..=hop_columns)
        .map(|i| {
            let through: Vec<&Vec<bool>> = records
                .iter()
                .filter_map(|r| r.hop_correct.as_ref())
                .filter(|hops| hops.len() > i && hops[..i].iter().all(|&c| c))
                .collect();
            let wrong_next = through.iter().filter(|hops| !hops[i]).count();
            (!through.is_empty()).then(|| pct(wrong_next, through.len()))
        })
        .collect();
    SliceStats {
        model: model.to_string(),
        slice: slice.name().into(),
        key,
        n,
        a,
        t,
        at,
        delta: a - at,
        h,
    }
}

/// Means of A, T, AT and Δ = A − AT per model and slice, with H_i for
/// multi-hop records.
pub fn aggregate(
    records: &[ScoreRecord],
    index: &HashMap<String, &QAItem>,
    slices: &[Slice],
) -> Result<AggregateReport, EvalError> {
    let mut by_model: BTreeMap<&str, Vec<(&ScoreRecord, &QAItem)>> = BTreeMap::new();
    for r in records {
        let qa = index.get(&r.qa_id).ok_or_else(|| EvalError::UnknownQa(r.qa_id.clone()))?;
        by_model.entry(r.model.as_str()).or_default().push((r, *qa));
    }
    let hop_columns = records
        .iter()
        .filter_map(|r| r.hop_correct.as_ref().map(|h| h.len().saturating_sub(1)))
        .max()
        .unwrap_or(0);
    let mut rows = Vec::new();
    for (model, items) in &by_model {
        for &slice in slices {
            let mut groups: BTreeMap<String, Vec<&ScoreRecord>> = BTreeMap::new();
            for (r, qa) in items {
                groups.entry(slice.key(qa)).or_default().push(r);
            }
            for (key, group) in groups {
                rows.push(stats(model, slice, key, &group, hop_columns));
            }
        }
    }
    Ok(AggregateReport { hop_columns, rows })
}

fn num(x: f64) -> String {
    format!("{x:.1}")
}

impl AggregateReport {
    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["model", "slice", "key", "n", "A", "T", "AT", "delta"].iter().map(|s| s.to_string()).collect();
        h.extend((1..=self.hop_columns).map(|i| format!("H{i}")));
        h
    }

    fn cells(&self, r: &SliceStats, absent: &str) -> Vec<String> {
        let mut c = vec![
            r.model.clone(),
            r.slice.clone(),
            r.key.clone(),
            r.n.to_string(),
            num(r.a),
            r.t.map(num).unwrap_or_else(|| absent.to_string()),
            num(r.at),
            num(r.delta),
        ];
        c.extend(r.h.iter().map(|h| h.map(num).unwrap_or_else(|| absent.to_string())));
        c
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for r in &self.rows {
            w.write_record(self.cells(r, "")).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    pub fn to_text(&self) -> String {
        let mut table = vec![self.header()];
        table.extend(self.rows.iter().map(|r| self.cells(r, "-")));
        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| table.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in table.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (cell, w))| {
                    if j < 3 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }
}
