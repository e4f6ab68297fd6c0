use super::QueryAst;
use crate::interval::{Atom, Endpoint, Operand};
use crate::store::Value;

/// Renders the query in the benchmark's SQL dialect, e.g.
/// `SELECT name, end FROM Leader WHERE Country='Brazil' AND Role='President' AND date(end) = date('2019-05-01', '-4 month')`.
pub fn print_sql(ast: &QueryAst) -> String {
    let mut out = format!("SELECT {} FROM {}", ast.select_attrs.join(", "), ast.relation_name);
    let mut clauses: Vec<String> = ast
        .key_predicates
        .iter()
        .map(|p| format!("{}={}", column(&p.attr), literal(&p.value)))
        .collect();
    let attr = |e: &Endpoint| match e {
        Endpoint::Start => &ast.start_attr,
        Endpoint::End => &ast.end_attr,
    };
    for atom in &ast.condition.atoms {
        clauses.push(match atom {
            Atom::Compare {
                endpoint,
                op,
                rhs: Operand::Literal(t),
            } => format!("{} {} {}", column(attr(endpoint)), op.symbol(), quote(&t.to_string())),
            Atom::Compare {
                endpoint,
                op,
                rhs: Operand::Shifted { base, by },
            } => format!(
                "date({}) {} date({}, {})",
                attr(endpoint),
                op.symbol(),
                quote(&base.to_string()),
                quote(&by.sql_modifier())
            ),
            Atom::Between { endpoint, lower, upper } => {
                let c = column(attr(endpoint));
                format!("{c} > {} AND {c} < {}", quote(&lower.to_string()), quote(&upper.to_string()))
            }
            Atom::IsNull(endpoint) => format!("{} IS NULL", column(attr(endpoint))),
        });
    }
    if !clauses.is_empty() {
        out.push_str(" WHERE ");
        out.push_str(&clauses.join(" AND "));
    }
    out
}

/// Column reference inside WHERE: initial capital, except for
/// underscore-joined identifiers which keep their spelling.
fn column(name: &str) -> String {
    if name.contains('_') {
        return name.to_string();
    }
    let mut chars = name.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn literal(v: &Value) -> String {
    quote(&v.to_string())
}

pub(super) fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}
