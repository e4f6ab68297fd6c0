use unicode_normalization::UnicodeNormalization;

use super::{QueryAst, ResultRow, SqlError};
use crate::store::{AttributeKind, TemporalRelation, Value};

/// NFC-normalized, trimmed form used for key equality.
pub fn normalize_text(s: &str) -> String {
    s.trim().nfc().collect()
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => normalize_text(x) == normalize_text(y),
        _ => a == b,
    }
}

/// Evaluates the query against `relation`, returning matches in storage order.
pub fn execute(ast: &QueryAst, relation: &TemporalRelation) -> Result<Vec<ResultRow>, SqlError> {
    if ast.relation_name != relation.name {
        return Err(SqlError::RelationMismatch {
            query: ast.relation_name.clone(),
            relation: relation.name.clone(),
        });
    }
    for a in &ast.select_attrs {
        if relation.attribute(a).is_none() {
            return Err(SqlError::UnknownAttribute(a.clone()));
        }
    }
    let answer_attrs = ast.answer_attrs();
    let mut keys = Vec::with_capacity(ast.key_predicates.len());
    for p in &ast.key_predicates {
        let idx = relation
            .value_index(&p.attr)
            .ok_or_else(|| SqlError::UnknownAttribute(p.attr.clone()))?;
        let kind = relation.attribute(&p.attr).map(|a| a.kind);
        let (ok, expected) = match (kind, &p.value) {
            (Some(AttributeKind::Text), Value::Text(_)) => (true, "text"),
            (Some(AttributeKind::Date), Value::Date(_)) => (true, "date"),
            (Some(AttributeKind::Text), _) => (false, "text"),
            _ => (false, "date"),
        };
        if !ok {
            return Err(SqlError::TypeMismatch {
                attr: p.attr.clone(),
                expected,
                literal: p.value.to_string(),
            });
        }
        keys.push((idx, &p.value));
    }
    let g = relation.granularity;
    let mut rows = Vec::new();
    for (i, u) in relation.tuples.iter().enumerate() {
        if !keys.iter().all(|(idx, v)| values_equal(&u.values[*idx], v)) {
            continue;
        }
        if !ast.condition.evaluate(&u.interval, g)? {
            continue;
        }
        rows.push(ResultRow {
            tuple_index: i,
            values: relation.project(u, &answer_attrs).into_iter().cloned().collect(),
            interval: u.interval,
            lineage: u.lineage,
        });
    }
    Ok(rows)
}
