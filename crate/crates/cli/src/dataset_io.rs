//! Dataset CSV files: header `x0,...,x{n-1},label`, one row per point,
//! floats with 17 significant digits so a round-trip is exact.
//!
//! The format does not carry the input domain; the loader infers the unit
//! box when every coordinate lies in [0,1] (which holds for everything the
//! generators emit) and leaves the domain unbounded otherwise.

use std::fs;
use std::path::Path;

use robnet_core::data::{Dataset, InputDomain};
use thiserror::Error;

use crate::fmt_f64;

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
}

fn parse_err(path: &Path, line: usize, reason: String) -> DatasetIoError {
    DatasetIoError::Parse { path: path.display().to_string(), line, reason }
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<(), DatasetIoError> {
    assert!(!data.inputs.is_empty(), "refusing to write an empty dataset");
    let dim = data.inputs[0].len();
    let mut out = String::new();
    for i in 0..dim {
        out.push_str(&format!("x{i},"));
    }
    out.push_str("label\n");
    for (x, y) in data.inputs.iter().zip(&data.labels) {
        for v in x {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        out.push_str(&format!("{y}\n"));
    }
    fs::write(path, out).map_err(|e| DatasetIoError::Io { path: path.display().to_string(), source: e })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetIoError> {
    let text = fs::read_to_string(path)
        .map_err(|e| DatasetIoError::Io { path: path.display().to_string(), source: e })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, String::from("empty file")))?;
    let cols: Vec<&str> = header.split(',').collect();
    let dim = cols.len().saturating_sub(1);
    let expected: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    if dim == 0
        || cols[dim] != "label"
        || cols[..dim].iter().zip(&expected).any(|(a, b)| a != b)
    {
        return Err(parse_err(
            path,
            1,
            format!("header must be x0,...,x{{n-1}},label; got \"{header}\""),
        ));
    }

    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {} fields, got {}", dim + 1, fields.len()),
            ));
        }
        let mut x = Vec::with_capacity(dim);
        for (c, field) in fields[..dim].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(path, idx + 1, format!("column x{c}: \"{field}\" is not a float"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, idx + 1, format!("column x{c}: non-finite value")));
            }
            x.push(v);
        }
        let label: usize = fields[dim].parse().map_err(|_| {
            parse_err(path, idx + 1, format!("label \"{}\" is not an unsigned integer", fields[dim]))
        })?;
        inputs.push(x);
        labels.push(label);
    }
    if inputs.is_empty() {
        return Err(parse_err(path, 1, String::from("no data rows")));
    }
    let n_classes = labels.iter().copied().max().expect("nonempty") + 1;
    let in_unit =
        inputs.iter().all(|x| x.iter().all(|&v| (0.0..=1.0).contains(&v)));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| String::from("dataset"));
    Ok(Dataset {
        name,
        inputs,
        labels,
        n_classes,
        domain: if in_unit { InputDomain::Unit } else { InputDomain::Unbounded },
    })
}
