use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use super::{load_coco_file, AnnotationStore, CorpusSpec, LoadReport};
use crate::error::{Error, Result};
use crate::types::{PhysicalConcept, PhysicalProperty};

/// One row of the property table: annotation id plus raw cells keyed by
/// normalized column name.
struct PropertyRow {
    line: usize,
    id: String,
    cells: BTreeMap<String, String>,
}

/// Loads a corpus made of an object detection file (`annotations.json`)
/// and a property table (`properties.csv` or `properties.json`) keyed by
/// annotation id. Only transparency, liquid storage and sealability are
/// read; other columns are ignored.
pub fn load_physical_properties(spec: &CorpusSpec) -> Result<(AnnotationStore, LoadReport)> {
    let mut store = AnnotationStore::new(Some(spec.tag.clone()));
    let mut report = LoadReport::default();
    load_coco_file(&spec.root.join("annotations.json"), &spec.tag, &mut store, &mut report)?;

    let csv_path = spec.root.join("properties.csv");
    let json_path = spec.root.join("properties.json");
    let rows = if csv_path.is_file() {
        read_csv(&csv_path)?
    } else if json_path.is_file() {
        read_json(&json_path)?
    } else {
        return Err(Error::parse(&spec.root, "no properties.csv or properties.json"));
    };

    for row in rows {
        let Some(record) = store.annotations.get_mut(&row.id) else {
            report.error(
                &spec.tag,
                row.id.clone(),
                format!("property row {} has no matching annotation", row.line),
            );
            continue;
        };
        match parse_row(&row) {
            Ok(props) => {
                for p in props {
                    record.physical.retain(|q| q.concept() != p.concept());
                    record.physical.push(p);
                }
                record.physical.sort_by_key(|p| p.concept());
            }
            Err(message) => report.error(&spec.tag, row.id.clone(), format!("row {}: {message}", row.line)),
        }
    }
    Ok((store, report))
}

fn normalize_column(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

fn concept_for_column(col: &str) -> Option<PhysicalConcept> {
    match col {
        "transparency" => Some(PhysicalConcept::Transparency),
        "liquidstorage" => Some(PhysicalConcept::LiquidStorage),
        "sealability" => Some(PhysicalConcept::Sealability),
        _ => None,
    }
}

/// All-or-nothing: any bad cell rejects the whole row.
fn parse_row(row: &PropertyRow) -> std::result::Result<Vec<PhysicalProperty>, String> {
    let mut out = Vec::new();
    for (col, cell) in &row.cells {
        let Some(concept) = concept_for_column(col) else {
            continue;
        };
        if cell.trim().is_empty() {
            continue;
        }
        out.push(PhysicalProperty::parse(concept, cell).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn read_csv(path: &Path) -> Result<Vec<PropertyRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, e))?
        .iter()
        .map(normalize_column)
        .collect();
    let id_col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| Error::parse(path, "missing id column"))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let cells = headers
            .iter()
            .zip(rec.iter())
            .filter(|(h, _)| h.as_str() != "id")
            .map(|(h, v)| (h.clone(), v.to_string()))
            .collect();
        rows.push(PropertyRow {
            line: i + 2,
            id: rec.get(id_col).unwrap_or_default().to_string(),
            cells,
        });
    }
    Ok(rows)
}

fn read_json(path: &Path) -> Result<Vec<PropertyRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file_io(path, e))?;
    let items: Vec<serde_json::Map<String, Value>> = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    let cell = |v: &Value| match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(i, obj)| {
            let mut id = String::new();
            let mut cells = BTreeMap::new();
            for (k, v) in &obj {
                let col = normalize_column(k);
                if col == "id" {
                    id = cell(v);
                } else {
                    cells.insert(col, cell(v));
                }
            }
            PropertyRow { line: i + 1, id, cells }
        })
        .collect())
}
