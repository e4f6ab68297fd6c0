use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AttributeKind, AttributeSchema, Interval, StoreError, TFDecl, TemporalRelation, Value};
use crate::time::{Granularity, TimeError, TimePoint};

/// Relation declaration as it appears in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDecl {
    pub name: String,
    pub csv: PathBuf,
    pub attributes: Vec<AttributeSchema>,
    pub start_attr: String,
    pub end_attr: String,
    pub granularity: Granularity,
    #[serde(default)]
    pub tfds: Vec<TFDecl>,
}

pub fn load_relation_from_path(decl: &RelationDecl, base_dir: &Path) -> Result<TemporalRelation, StoreError> {
    let path = base_dir.join(&decl.csv);
    let file = std::fs::File::open(&path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_relation(decl, file)
}

pub fn load_relation<R: Read>(decl: &RelationDecl, rows: R) -> Result<TemporalRelation, StoreError> {
    let mut relation = TemporalRelation::new(
        &decl.name,
        decl.attributes.clone(),
        &decl.start_attr,
        &decl.end_attr,
        decl.granularity,
        decl.tfds.clone(),
    )?;
    let csv_err = |source| StoreError::Csv {
        relation: decl.name.clone(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rows);
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let column_of = |name: &str| header.iter().position(|h| h == name);
    let mismatch = |detail: String| StoreError::SchemaMismatch {
        relation: decl.name.clone(),
        detail,
    };
    if header.len() != decl.attributes.len() {
        return Err(mismatch(format!(
            "header has {} columns, schema declares {}",
            header.len(),
            decl.attributes.len()
        )));
    }
    let mut columns = Vec::with_capacity(decl.attributes.len());
    for a in &decl.attributes {
        columns.push(column_of(&a.name).ok_or_else(|| mismatch(format!("header lacks `{}`", a.name)))?);
    }

    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        let cell_err = |column: &str, source: TimeError| StoreError::BadCell {
            relation: decl.name.clone(),
            row,
            column: column.to_string(),
            source,
        };
        let mut values = Vec::new();
        let mut start = None;
        let mut end = None;
        for (a, &col) in decl.attributes.iter().zip(&columns) {
            let cell = record.get(col).unwrap_or("");
            if a.name == decl.start_attr {
                start = Some(parse_stamp(cell, decl.granularity).map_err(|e| cell_err(&a.name, e))?);
            } else if a.name == decl.end_attr {
                if !is_null(cell) {
                    end = Some(parse_stamp(cell, decl.granularity).map_err(|e| cell_err(&a.name, e))?);
                }
            } else {
                values.push(parse_value(a, cell).map_err(|e| cell_err(&a.name, e))?);
            }
        }
        let start = start.expect("start attribute present in schema");
        let interval = Interval { start, end };
        relation.push(values, interval).map_err(|e| match e {
            StoreError::InvertedInterval {
                relation, start, end, ..
            } => StoreError::InvertedInterval {
                relation,
                row,
                start,
                end,
            },
            other => other,
        })?;
    }
    Ok(relation)
}

fn is_null(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("null")
}

fn parse_stamp(cell: &str, g: Granularity) -> Result<TimePoint, TimeError> {
    let p = TimePoint::parse_iso(cell)?;
    if p.granularity() != g {
        return Err(TimeError::Unparsable(format!("{cell} (expected {g} granularity)")));
    }
    Ok(p)
}

fn parse_value(a: &AttributeSchema, cell: &str) -> Result<Value, TimeError> {
    match a.kind {
        AttributeKind::Text => Ok(Value::Text(cell.to_string())),
        AttributeKind::Date => TimePoint::parse_iso(cell).map(Value::Date),
    }
}
