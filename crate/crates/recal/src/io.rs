//! CSV input and output, and atomic file writes.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use recal_core::{LabeledSample, Recalibrator};
use sha2::{Digest, Sha256};

use crate::error::{RecalError, Result};

/// Writes a file by filling a temporary file in the same directory and
/// renaming it over `path`.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RecalError::io(path, e))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        fill(&mut out).map_err(|e| RecalError::io(path, e))?;
        out.flush().map_err(|e| RecalError::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| RecalError::io(path, e))?;
    tmp.persist(path).map_err(|e| RecalError::io(path, e.error))?;
    Ok(())
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| RecalError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let read = file.read(&mut buf).map_err(|e| RecalError::io(path, e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| RecalError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_error(path: &Path, row: usize, column: &str, message: impl Into<String>) -> RecalError {
    RecalError::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn column(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_error(path, 0, name, format!("header has no `{name}` column")))
}

fn record(path: &Path, row: usize, r: std::result::Result<csv::StringRecord, csv::Error>) -> Result<csv::StringRecord> {
    r.map_err(|e| parse_error(path, row, "*", e.to_string()))
}

fn parse_score(path: &Path, row: usize, text: &str) -> Result<f64> {
    let z: f64 = text
        .parse()
        .map_err(|_| parse_error(path, row, "z", format!("`{text}` is not a number")))?;
    if !(0.0..=1.0).contains(&z) {
        return Err(parse_error(path, row, "z", format!("score {z} is outside [0, 1]")));
    }
    Ok(z)
}

fn parse_label(path: &Path, row: usize, text: &str) -> Result<bool> {
    match text {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(parse_error(path, row, "y", format!("label `{text}` is not 0 or 1"))),
    }
}

/// Reads a `z,y` file with a header row.
pub fn read_labeled(path: &Path) -> Result<LabeledSample> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| parse_error(path, 0, "*", e.to_string()))?.clone();
    let (zc, yc) = (column(path, &headers, "z")?, column(path, &headers, "y")?);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, r) in rdr.records().enumerate() {
        let row = i + 1;
        let r = record(path, row, r)?;
        scores.push(parse_score(path, row, &r[zc])?);
        labels.push(parse_label(path, row, &r[yc])?);
    }
    if scores.is_empty() {
        return Err(parse_error(path, 1, "*", "file has no data rows"));
    }
    Ok(LabeledSample::new(scores, labels)?)
}

/// Reads the `y` column of a labels file with a header row.
pub fn read_labels(path: &Path) -> Result<Vec<bool>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| parse_error(path, 0, "*", e.to_string()))?.clone();
    let yc = column(path, &headers, "y")?;
    let mut labels = Vec::new();
    for (i, r) in rdr.records().enumerate() {
        let r = record(path, i + 1, r)?;
        labels.push(parse_label(path, i + 1, &r[yc])?);
    }
    if labels.is_empty() {
        return Err(parse_error(path, 1, "y", "file has no data rows"));
    }
    Ok(labels)
}

/// Streams `input` (column `z`) through `h` into a `z,z_cal` file. Returns
/// the number of rows written.
pub fn apply_file(h: &Recalibrator, input: &Path, output: &Path) -> Result<usize> {
    let mut rdr = reader(input)?;
    let headers = rdr.headers().map_err(|e| parse_error(input, 0, "*", e.to_string()))?.clone();
    let zc = column(input, &headers, "z")?;
    let mut rows = 0;
    let mut failure = None;
    write_atomic(output, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z", "z_cal"])?;
        for (i, r) in rdr.records().enumerate() {
            let row = i + 1;
            let parsed = record(input, row, r).and_then(|r| {
                let z = parse_score(input, row, &r[zc])?;
                Ok((r[zc].to_string(), z))
            });
            match parsed {
                Ok((text, z)) => {
                    w.write_record([text, h.apply(z).to_string()])?;
                    rows += 1;
                }
                Err(e) => {
                    failure = Some(e);
                    return Err(std::io::Error::other("input rejected"));
                }
            }
        }
        w.flush()
    })
    .map_err(|e| failure.take().unwrap_or(e))?;
    Ok(rows)
}

/// Writes `header` and `rows` as CSV, atomically.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()
    })
}
