//! Header-checked CSV plumbing shared by the file formats of each stage.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn reader<R: Read>(input: R, file: &str, expected: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if found.len() != expected.len() || found.iter().zip(expected).any(|(f, e)| f != e) {
        return Err(Error::Schema {
            file: file.to_owned(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    Ok(rdr)
}

pub(crate) fn writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub(crate) fn create(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    writer(File::create(path)?, header)
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    name: &str,
) -> Result<T> {
    let raw = record.get(index).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        line: record.position().map_or(0, |p| p.line() as usize),
        field: name.to_owned(),
        message: format!("cannot parse `{raw}`"),
    })
}

pub(crate) fn opt_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    name: &str,
) -> Result<Option<T>> {
    match record.get(index) {
        None | Some("") => Ok(None),
        Some(_) => parse_field(record, index, name).map(Some),
    }
}
