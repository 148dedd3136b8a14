//! Dataset CSV format.
//!
//! Header `x1,...,xk,y1,...,yq,n` in that order, one design point per row.
//! Lines starting with `#` are comments.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dataset, Observation};

fn parse_header(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let bad = |message: String| Error::Parse {
        row: 1,
        column: 0,
        message,
    };
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    if fields.last() != Some(&"n") {
        return Err(bad(format!("last column must be `n`, header is {fields:?}")));
    }
    let k = fields.iter().take_while(|f| f.starts_with('x')).count();
    let q = fields.len() - 1 - k;
    for (i, f) in fields[..k].iter().enumerate() {
        if *f != format!("x{}", i + 1) {
            return Err(bad(format!("expected `x{}`, found `{f}`", i + 1)));
        }
    }
    for (i, f) in fields[k..k + q].iter().enumerate() {
        if *f != format!("y{}", i + 1) {
            return Err(Error::Parse {
                row: 1,
                column: k + i + 1,
                message: format!("expected `y{}`, found `{f}`", i + 1),
            });
        }
    }
    if q == 0 {
        return Err(bad("at least one `y` column is required".into()));
    }
    Ok((k, q))
}

/// Read a dataset from any reader.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        row: 1,
        column: 0,
        message: e.to_string(),
    })?;
    let (k, q) = parse_header(header)?;
    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() != k + q + 1 {
            return Err(Error::Parse {
                row,
                column: record.len(),
                message: format!("expected {} fields, found {}", k + q + 1, record.len()),
            });
        }
        let field = |c: usize| &record[c];
        let mut x = Vec::with_capacity(k);
        for c in 0..k {
            let v: f64 = field(c).parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("`{}` is not a number", field(c)),
            })?;
            x.push(v);
        }
        let count = |c: usize| -> Result<u32> {
            let text = field(c);
            if let Ok(v) = text.parse::<u32>() {
                return Ok(v);
            }
            match text.parse::<f64>() {
                Ok(v) if v < 0.0 => Err(Error::Validation(format!(
                    "row {row}, column {}: negative count {text}",
                    c + 1
                ))),
                Ok(v) if v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as u32),
                _ => Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("`{text}` is not a non-negative integer"),
                }),
            }
        };
        let y = (k..k + q).map(count).collect::<Result<Vec<_>>>()?;
        let n = count(k + q)?;
        let total: u64 = y.iter().map(|&v| v as u64).sum();
        if total > n as u64 {
            return Err(Error::Validation(format!(
                "row {row}: counts sum to {total}, exceeding n = {n}"
            )));
        }
        observations.push(Observation { x, y, n });
    }
    if observations.is_empty() {
        return Err(Error::Validation("dataset has no observations".into()));
    }
    Dataset::new(observations)
}

/// Load and validate a dataset file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_dataset(file)
}

pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=data.k())
        .map(|i| format!("x{i}"))
        .chain((1..=data.q()).map(|i| format!("y{i}")))
        .chain(std::iter::once("n".to_string()))
        .collect();
    w.write_record(&header)?;
    for obs in data.observations() {
        let row: Vec<String> = obs
            .x
            .iter()
            .map(|v| format!("{v:?}"))
            .chain(obs.y.iter().map(u32::to_string))
            .chain(std::iter::once(obs.n.to_string()))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()
}
