use std::collections::BTreeMap;

use serde::Serialize;

use super::{StoreError, TFDecl, TemporalRelation, Value};

/// Two tuples (by storage index) that agree on the lhs, differ on the rhs
/// and, for a temporal dependency, are valid at a common time point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub first: usize,
    pub second: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TfdReport {
    pub tfd: TFDecl,
    pub violations: Vec<Violation>,
}

impl TfdReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_tfd(relation: &TemporalRelation, tfd: &TFDecl) -> Result<TfdReport, StoreError> {
    relation.validate_dependency(tfd)?;
    let g = relation.granularity;
    let mut groups: BTreeMap<Vec<&Value>, Vec<usize>> = BTreeMap::new();
    for (i, u) in relation.tuples.iter().enumerate() {
        groups.entry(relation.project(u, &tfd.lhs)).or_default().push(i);
    }
    let mut violations = Vec::new();
    for members in groups.values() {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                let (u1, u2) = (&relation.tuples[i], &relation.tuples[j]);
                if relation.project(u1, &tfd.rhs) == relation.project(u2, &tfd.rhs) {
                    continue;
                }
                let overlapping = !tfd.temporal
                    || u1
                        .interval
                        .occupancy(g)
                        .intersect(&u2.interval.occupancy(g))
                        .is_some();
                if overlapping {
                    violations.push(Violation { first: i, second: j });
                }
            }
        }
    }
    violations.sort_by_key(|v| (v.first, v.second));
    Ok(TfdReport {
        tfd: tfd.clone(),
        violations,
    })
}
