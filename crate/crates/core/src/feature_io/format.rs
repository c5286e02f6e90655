//! Line-record dataset files.
//!
//! One JSON object per line. An optional first line `{"_meta": {...}}`
//! carries `modality_dims` and `role`; every other line is a record with
//! `id`, `event_id`, optional `arrival_index`, optional `label` and the
//! three feature arrays `v`, `t`, `a`. Numbers are written with 17
//! significant digits so a save/load cycle is exact.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{Class, Dataset, ModalityDims, Role, VideoRecord};
use crate::error::{RadarError, Result};

const META_KEY: &str = "_meta";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    modality_dims: [usize; 3],
    // informational only
    #[serde(default, rename = "role")]
    _role: Option<Role>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    event_id: String,
    #[serde(default)]
    arrival_index: Option<u64>,
    #[serde(default)]
    label: Option<i64>,
    v: Vec<f64>,
    t: Vec<f64>,
    a: Vec<f64>,
}

pub fn load_dataset(path: impl AsRef<Path>, role: Role) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| RadarError::io(path, e))?;
    read_dataset(BufReader::new(file), role).map_err(|e| match e {
        RadarError::Io { source, .. } => RadarError::io(path, source),
        other => other,
    })
}

/// Parses a dataset from any line source. `role` decides label handling; a
/// role stored in the header is informational only.
pub fn read_dataset(reader: impl BufRead, role: Role) -> Result<Dataset> {
    let mut dims: Option<ModalityDims> = None;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut last_arrival: Option<u64> = None;

    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| RadarError::io("<input>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }

        if n == 0 && trimmed.contains(&format!("\"{META_KEY}\"")) {
            let value: serde_json::Value = serde_json::from_str(trimmed)
                .map_err(|e| RadarError::format(lineno, None, e.to_string()))?;
            if let Some(meta) = value.get(META_KEY) {
                let meta: Meta = serde_json::from_value(meta.clone())
                    .map_err(|e| RadarError::format(lineno, Some(META_KEY), e.to_string()))?;
                dims = Some(ModalityDims(meta.modality_dims));
                continue;
            }
        }

        let raw: RawRecord = serde_json::from_str(trimmed)
            .map_err(|e| RadarError::format(lineno, None, e.to_string()))?;
        let label = match raw.label {
            None => None,
            Some(y @ 0..=1) => Some(y as Class),
            Some(y) => {
                return Err(RadarError::format(
                    lineno,
                    Some("label"),
                    format!("label {y} is not 0 or 1"),
                ))
            }
        };
        if role == Role::Source && label.is_none() {
            return Err(RadarError::format(
                lineno,
                Some("label"),
                format!("source record {:?} has no label", raw.id),
            ));
        }
        let arrival_index = raw.arrival_index.unwrap_or(records.len() as u64);
        if last_arrival.is_some_and(|p| arrival_index <= p) {
            return Err(RadarError::format(
                lineno,
                Some("arrival_index"),
                format!("arrival_index {arrival_index} is not strictly increasing"),
            ));
        }
        if !ids.insert(raw.id.clone()) {
            return Err(RadarError::format(
                lineno,
                Some("id"),
                format!("duplicate id {:?}", raw.id),
            ));
        }
        let record = VideoRecord::new(
            raw.id,
            raw.event_id,
            arrival_index,
            raw.v,
            raw.t,
            raw.a,
            label,
        );
        let expected = *dims.get_or_insert_with(|| record.dims());
        record
            .validate(expected)
            .map_err(|(field, msg)| RadarError::format(lineno, field, msg))?;
        last_arrival = Some(arrival_index);
        records.push(record);
    }

    let dims =
        dims.ok_or_else(|| RadarError::format(1, None, "empty dataset file without header"))?;
    // Everything was checked line by line above.
    Ok(Dataset::assemble(records, role, dims))
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| RadarError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(dataset, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| RadarError::io(path, e))
}

pub fn write_dataset(dataset: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    let d = dataset.dims().0;
    writeln!(
        w,
        "{{\"{META_KEY}\":{{\"modality_dims\":[{},{},{}],\"role\":\"{}\"}}}}",
        d[0],
        d[1],
        d[2],
        dataset.role()
    )?;
    let mut line = String::new();
    for (r, label) in dataset.records_with_labels() {
        line.clear();
        line.push_str("{\"id\":");
        line.push_str(&json_string(&r.id));
        line.push_str(",\"event_id\":");
        line.push_str(&json_string(&r.event_id));
        let _ = write!(line, ",\"arrival_index\":{}", r.arrival_index);
        if let Some(y) = label {
            let _ = write!(line, ",\"label\":{y}");
        }
        for (key, values) in ["v", "t", "a"].iter().zip(&r.features) {
            let _ = write!(line, ",\"{key}\":[");
            for (i, x) in values.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{x:.16e}");
            }
            line.push(']');
        }
        line.push('}');
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}
