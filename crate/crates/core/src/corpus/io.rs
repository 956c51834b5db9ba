//! Line-delimited JSON corpus files.
//!
//! ```text
//! {"format":"wal-corpus","version":1,"d":32}
//! {"id":"train-000000","tag":"clean","sentence":[...],"frames":[[...],...],"grounded":[true,...]}
//! ```
//!
//! Floats are written with shortest round-trip decimal encoding, so a
//! save/load cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClipRecord;
use crate::error::{Result, WalError};

pub const FORMAT_NAME: &str = "wal-corpus";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    d: usize,
}

/// A loaded corpus. `d` is zero for an empty file.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub d: usize,
    pub records: Vec<ClipRecord>,
}

pub fn save_corpus(records: &[ClipRecord], d: usize, path: &Path) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        check_record(r, d).map_err(|(field, reason)| WalError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            field,
            reason,
        })?;
    }
    let io_err = |e| WalError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let header = Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        d,
    };
    let line = serde_json::to_string(&header).expect("header serializes");
    writeln!(w, "{line}").map_err(io_err)?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| WalError::io(path, e))?;
    let parse_err = |line: usize, field: &str, reason: String| WalError::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_string(),
        reason,
    };

    let mut lines = BufReader::new(file).lines().enumerate();
    let d = loop {
        match lines.next() {
            None => {
                return Ok(Corpus {
                    d: 0,
                    records: Vec::new(),
                })
            }
            Some((i, line)) => {
                let line = line.map_err(|e| WalError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let h: Header = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, "header", e.to_string()))?;
                if h.format != FORMAT_NAME {
                    return Err(parse_err(
                        i + 1,
                        "format",
                        format!("expected {FORMAT_NAME}, got {}", h.format),
                    ));
                }
                if h.version != FORMAT_VERSION {
                    return Err(parse_err(
                        i + 1,
                        "version",
                        format!("unsupported version {}", h.version),
                    ));
                }
                break h.d;
            }
        }
    };

    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| WalError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ClipRecord = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, "record", e.to_string()))?;
        if let Err((field, reason)) = check_record(&r, d) {
            if field == "dimension" {
                return Err(WalError::dim(
                    format!("{} line {} ({})", path.display(), i + 1, r.id),
                    d,
                    first_bad_dim(&r, d),
                ));
            }
            return Err(parse_err(i + 1, &field, reason));
        }
        records.push(r);
    }
    Ok(Corpus { d, records })
}

fn first_bad_dim(r: &ClipRecord, d: usize) -> usize {
    std::iter::once(&r.sentence)
        .chain(&r.frames)
        .map(Vec::len)
        .find(|&n| n != d)
        .unwrap_or(d)
}

fn check_record(r: &ClipRecord, d: usize) -> std::result::Result<(), (String, String)> {
    if r.frames.is_empty() {
        return Err(("frames".into(), "record has no frames".into()));
    }
    if r.grounded.len() != r.frames.len() {
        return Err((
            "grounded".into(),
            format!("mask length {} != frame count {}", r.grounded.len(), r.frames.len()),
        ));
    }
    if first_bad_dim(r, d) != d {
        return Err(("dimension".into(), format!("expected vectors of length {d}")));
    }
    if !std::iter::once(&r.sentence)
        .chain(&r.frames)
        .flatten()
        .all(|x| x.is_finite())
    {
        return Err(("values".into(), "non-finite feature value".into()));
    }
    Ok(())
}
