use super::{
    check_tfd, AttributeSchema, Interval, Lineage, StoreError, TFDecl, TemporalRelation, Tuple,
};
use crate::time::Granularity;

/// Temporal natural join `r ⋈T s`.
///
/// Output attributes are r's non-timestamp attributes, then s's attributes
/// not in r, then r's start/end names. The result granularity is the coarser
/// of the two inputs. Tuples are emitted in nested-loop order (r outer).
pub fn temporal_natural_join(r: &TemporalRelation, s: &TemporalRelation) -> Result<TemporalRelation, StoreError> {
    let r_attrs = r.value_attr_names();
    let s_attrs = s.value_attr_names();
    let shared: Vec<String> = r_attrs.iter().filter(|a| s_attrs.contains(a)).cloned().collect();
    if shared.is_empty() {
        return Err(StoreError::NoSharedAttributes {
            left: r.name.clone(),
            right: s.name.clone(),
        });
    }
    let s_only: Vec<String> = s_attrs.iter().filter(|a| !r_attrs.contains(a)).cloned().collect();
    let g = r.granularity.coarser(s.granularity);

    let mut schema: Vec<AttributeSchema> = r.value_attrs().cloned().collect();
    schema.extend(s.value_attrs().filter(|a| s_only.contains(&a.name)).cloned());
    schema.push(AttributeSchema::date(&r.start_attr));
    schema.push(AttributeSchema::date(&r.end_attr));
    let mut out = TemporalRelation::new(
        &format!("{} ⋈T {}", r.name, s.name),
        schema,
        &r.start_attr,
        &r.end_attr,
        g,
        Vec::new(),
    )?;

    for u in &r.tuples {
        let key = r.project(u, &shared);
        for v in &s.tuples {
            if s.project(v, &shared) != key {
                continue;
            }
            let Some(interval) = intersect(&u.interval.truncate(g), &v.interval.truncate(g), g) else {
                continue;
            };
            let mut values = u.values.clone();
            values.extend(s.project(v, &s_only).into_iter().cloned());
            out.tuples.push(Tuple {
                values,
                interval,
                lineage: Some(Lineage {
                    left: u.interval,
                    right: v.interval,
                }),
            });
        }
    }
    Ok(out)
}

/// Intersection of two intervals at `g`, or `None` when they share no tick.
pub(crate) fn intersect(a: &Interval, b: &Interval, g: Granularity) -> Option<Interval> {
    let (oa, ob) = (a.occupancy(g), b.occupancy(g));
    let o = oa.intersect(&ob)?;
    let start = if oa.lo >= ob.lo { a.start } else { b.start };
    let end = o.hi.map(|hi| {
        let from = if oa.hi == Some(hi) { a } else { b };
        if from.is_degenerate(g) {
            from.start
        } else {
            from.end.expect("bounded occupancy has an end")
        }
    });
    Some(Interval { start, end })
}

/// Chains a plain FD on the joined-in relation with a TFD on the other:
/// from `A -> B` and `B, C ->T D` infer `A, C ->T D`, then verifies it on
/// the joined instance.
pub fn infer_joined_tfd(fd: &TFDecl, tfd: &TFDecl, joined: &TemporalRelation) -> Result<TFDecl, StoreError> {
    let chaining = |detail: &str| StoreError::Chaining {
        fd: fd.to_string(),
        tfd: tfd.to_string(),
        detail: detail.to_string(),
    };
    if fd.rhs.is_empty() {
        return Err(chaining("fd has an empty right-hand side"));
    }
    if !fd.rhs.iter().all(|a| tfd.lhs.contains(a)) {
        return Err(chaining("fd right-hand side is not contained in the tfd left-hand side"));
    }
    let mut lhs: Vec<String> = Vec::new();
    for a in fd.lhs.iter().chain(tfd.lhs.iter().filter(|a| !fd.rhs.contains(a))) {
        if !lhs.contains(a) {
            lhs.push(a.clone());
        }
    }
    let candidate = TFDecl {
        lhs,
        rhs: tfd.rhs.clone(),
        temporal: true,
    };
    let report = check_tfd(joined, &candidate)?;
    if !report.holds() {
        return Err(StoreError::InferredTfdViolated {
            relation: joined.name.clone(),
            tfd: candidate.to_string(),
            violations: report.violations.len(),
        });
    }
    Ok(candidate)
}
