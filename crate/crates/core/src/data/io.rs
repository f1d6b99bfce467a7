//! CSV ingestion.
//!
//! Data file: header `record_id,time_index,f1,...,fN`, one row per time step,
//! an empty cell marks a missing value. Labels file: `record_id,label`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{Dataset, Provenance, Task, TimeSeriesRecord};
use crate::error::{Error, Result};

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
        })
}

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn rows(path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for row in reader(path)?.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        out.push((line, row));
    }
    Ok(out)
}

struct Partial {
    rows: BTreeMap<usize, (Vec<f64>, Vec<bool>)>,
}

/// Reads a data/labels CSV pair into a dataset, records in first-seen order.
pub fn load_dataset(data_path: &Path, labels_path: &Path, task: Task) -> Result<Dataset> {
    let data = rows(data_path)?;
    let provenance = Provenance::File {
        data: data_path.to_path_buf(),
        labels: labels_path.to_path_buf(),
    };
    let Some(((header_line, header), body)) = data.split_first() else {
        let labels = rows(labels_path)?;
        if labels.len() > 1 {
            return Err(Error::InvalidInput(format!(
                "labels file references records absent from the empty data file {}",
                data_path.display()
            )));
        }
        return Dataset::new(Vec::new(), 0, task, provenance);
    };
    if header.len() < 2 || &header[0] != "record_id" || &header[1] != "time_index" {
        return Err(parse_err(
            *header_line,
            "header must start with record_id,time_index",
        ));
    }
    let n = header.len() - 2;

    let mut order: Vec<String> = Vec::new();
    let mut partial: HashMap<String, Partial> = HashMap::new();
    for (line, row) in body {
        let line = *line;
        if row.len() != n + 2 {
            return Err(parse_err(line, format!("expected {} fields, got {}", n + 2, row.len())));
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty record_id"));
        }
        let t: usize = row[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad time_index {:?}", &row[1])))?;
        let mut values = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for cell in row.iter().skip(2) {
            if cell.is_empty() {
                values.push(0.0);
                mask.push(false);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad value {cell:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("non-finite value {cell:?}")));
                }
                values.push(v);
                mask.push(true);
            }
        }
        let entry = partial.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Partial {
                rows: BTreeMap::new(),
            }
        });
        if entry.rows.insert(t, (values, mask)).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate row for record {id} at time_index {t} (line {line})"
            )));
        }
    }

    let mut labels: HashMap<String, f64> = HashMap::new();
    let label_rows = rows(labels_path)?;
    for (i, (line, row)) in label_rows.iter().enumerate() {
        if i == 0 {
            if row.len() != 2 || &row[0] != "record_id" || &row[1] != "label" {
                return Err(parse_err(*line, "labels header must be record_id,label"));
            }
            continue;
        }
        if row.len() != 2 {
            return Err(parse_err(*line, format!("expected 2 fields, got {}", row.len())));
        }
        let y: f64 = row[1]
            .parse()
            .map_err(|_| parse_err(*line, format!("bad label {:?}", &row[1])))?;
        if !partial.contains_key(&row[0]) {
            return Err(Error::InvalidInput(format!(
                "label for unknown record {} (line {line})",
                &row[0]
            )));
        }
        if labels.insert(row[0].to_string(), y).is_some() {
            return Err(Error::InvalidInput(format!("duplicate label for record {}", &row[0])));
        }
    }

    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let p = partial.remove(&id).expect("id recorded on first sight");
        let label = *labels
            .get(&id)
            .ok_or_else(|| Error::InvalidInput(format!("record {id} has no label")))?;
        let length = p.rows.keys().next_back().map_or(0, |t| t + 1);
        if p.rows.len() != length {
            return Err(Error::InvalidInput(format!(
                "record {id}: time_index values are not contiguous from 0"
            )));
        }
        let mut values = Vec::with_capacity(length * n);
        let mut mask = Vec::with_capacity(length * n);
        for (_, (v, m)) in p.rows {
            values.extend(v);
            mask.extend(m);
        }
        records.push(TimeSeriesRecord::new(id, length, n, values, mask, label)?);
    }
    Dataset::new(records, n, task, provenance)
}

/// Writes a dataset in the data/labels CSV format read by [`load_dataset`].
pub fn write_csv(ds: &Dataset, data_path: &Path, labels_path: &Path) -> Result<()> {
    let n = ds.feature_count();
    let mut w = csv::Writer::from_path(data_path).map_err(|e| csv_io(data_path, e))?;
    let mut header = vec!["record_id".to_string(), "time_index".to_string()];
    header.extend((1..=n).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| csv_io(data_path, e))?;
    for r in ds.records() {
        for t in 0..r.length() {
            let mut row = vec![r.id().to_string(), t.to_string()];
            row.extend((0..n).map(|j| r.value(t, j).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&row).map_err(|e| csv_io(data_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(data_path, e))?;

    let mut w = csv::Writer::from_path(labels_path).map_err(|e| csv_io(labels_path, e))?;
    w.write_record(["record_id", "label"]).map_err(|e| csv_io(labels_path, e))?;
    for r in ds.records() {
        w.write_record([r.id().to_string(), r.label().to_string()])
            .map_err(|e| csv_io(labels_path, e))?;
    }
    w.flush().map_err(|e| Error::io(labels_path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_one_record_with_a_gap() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(
            dir.path(),
            "d.csv",
            "record_id,time_index,f1,f2\na,0,1.5,2\na,1,,3\na,2,4,5\n",
        );
        let l = write(dir.path(), "l.csv", "record_id,label\na,1\n");
        let ds = load_dataset(&d, &l, Task::Classification).unwrap();
        assert_eq!(ds.len(), 1);
        let r = &ds.records()[0];
        assert_eq!(r.length(), 3);
        assert_eq!(r.missing_count(), 1);
        assert_eq!(r.value(1, 0), None);
        assert_eq!(r.value(2, 1), Some(5.0));
    }

    #[test]
    fn rows_may_arrive_out_of_order() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.csv", "record_id,time_index,f1\nb,1,2\na,0,9\nb,0,1\n");
        let l = write(dir.path(), "l.csv", "record_id,label\na,0\nb,1\n");
        let ds = load_dataset(&d, &l, Task::Classification).unwrap();
        assert_eq!(ds.records()[0].id(), "b");
        assert_eq!(ds.records()[0].value(0, 0), Some(1.0));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.csv", "");
        let l = write(dir.path(), "l.csv", "record_id,label\n");
        assert!(load_dataset(&d, &l, Task::Classification).unwrap().is_empty());
        let d = write(dir.path(), "d2.csv", "record_id,time_index,f1\n");
        let ds = load_dataset(&d, &l, Task::Regression).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.feature_count(), 1);
    }

    #[test]
    fn unknown_label_id() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.csv", "record_id,time_index,f1\na,0,1\n");
        let l = write(dir.path(), "l.csv", "record_id,label\na,1\nzz,0\n");
        assert!(matches!(
            load_dataset(&d, &l, Task::Classification),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn missing_label() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.csv", "record_id,time_index,f1\na,0,1\nb,0,1\n");
        let l = write(dir.path(), "l.csv", "record_id,label\na,1\n");
        assert!(matches!(
            load_dataset(&d, &l, Task::Classification),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn duplicate_time_index() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.csv", "record_id,time_index,f1\na,0,1\na,0,2\n");
        let l = write(dir.path(), "l.csv", "record_id,label\na,1\n");
        assert!(matches!(
            load_dataset(&d, &l, Task::Classification),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.csv", "record_id,time_index,f1\na,0,1\na,1\n");
        let l = write(dir.path(), "l.csv", "record_id,label\na,1\n");
        match load_dataset(&d, &l, Task::Classification) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let d = write(dir.path(), "d2.csv", "record_id,time_index,f1\na,0,abc\n");
        assert!(matches!(
            load_dataset(&d, &l, Task::Classification),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn non_contiguous_time_index() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.csv", "record_id,time_index,f1\na,0,1\na,2,2\n");
        let l = write(dir.path(), "l.csv", "record_id,label\na,1\n");
        assert!(load_dataset(&d, &l, Task::Classification).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r1 = TimeSeriesRecord::new("x", 2, 2, vec![0.1, 1e-300, -3.25, 0.0], vec![true, true, false, true], 0.0)
            .unwrap();
        let r2 = TimeSeriesRecord::new("y", 1, 2, vec![std::f64::consts::PI, 2.0], vec![true, false], 1.0).unwrap();
        let ds = Dataset::new(
            vec![r1, r2],
            2,
            Task::Classification,
            Provenance::File {
                data: "a".into(),
                labels: "b".into(),
            },
        )
        .unwrap();
        let d = dir.path().join("d.csv");
        let l = dir.path().join("l.csv");
        write_csv(&ds, &d, &l).unwrap();
        let back = load_dataset(&d, &l, Task::Classification).unwrap();
        assert_eq!(back.content_hash(), ds.content_hash());
    }
}
