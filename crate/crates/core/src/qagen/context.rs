use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sql::{execute, strip_temporal, QueryAst, SqlError};
use crate::store::TemporalRelation;

/// Open-book rows, each in full schema order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub header: Vec<String>,
    pub relevant: Vec<Vec<String>>,
    pub irrelevant: Vec<Vec<String>>,
    /// Fewer irrelevant rows were available than requested.
    #[serde(default)]
    pub short: bool,
}

/// Relevant rows are the entity's full history (the query without its
/// temporal condition); `k` further rows are drawn uniformly from the rest.
pub fn build_context<R: Rng + ?Sized>(
    ast: &QueryAst,
    relation: &TemporalRelation,
    rng: &mut R,
    k: usize,
) -> Result<Context, SqlError> {
    let rows = execute(&strip_temporal(ast), relation)?;
    let taken: BTreeSet<usize> = rows.iter().map(|r| r.tuple_index).collect();
    let relevant = rows
        .iter()
        .map(|r| relation.row_strings(&relation.tuples[r.tuple_index]))
        .collect();
    let pool: Vec<usize> = (0..relation.tuples.len()).filter(|i| !taken.contains(i)).collect();
    let n = k.min(pool.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|j| pool[j])
        .collect();
    picked.sort_unstable();
    Ok(Context {
        header: relation.schema.iter().map(|a| a.name.clone()).collect(),
        relevant,
        irrelevant: picked.iter().map(|&i| relation.row_strings(&relation.tuples[i])).collect(),
        short: n < k,
    })
}
