//! CSV formats: the per-frame R-D log / ledger and two-column R-D curves.
//!
//! The log header is exactly `sequence,stream,frame_index,frame_type,qp,bits,psnr`.
//! `stream` is one of `geometry`, `color`, `occ`, `patch`; `frame_type` is
//! `I`, `P` or `-` (aggregate or non-video rows; required for occ/patch).
//! `psnr` may be empty. Files are UTF-8 with LF line endings.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RateCurve;
use crate::models::{RdSample, QP_MAX};
use crate::stream::{FrameType, Substream};

pub const RD_LOG_HEADER: [&str; 7] = ["sequence", "stream", "frame_index", "frame_type", "qp", "bits", "psnr"];

pub const CURVE_HEADER: [&str; 2] = ["rate", "psnr"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdLogRow {
    pub sequence: String,
    pub stream: Substream,
    pub frame_index: usize,
    /// `None` is written as `-`.
    pub frame_type: Option<FrameType>,
    pub qp: u8,
    pub bits: f64,
    pub psnr: Option<f64>,
}

/// A validated row with the line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSample {
    pub line: u64,
    pub frame_index: usize,
    pub frame_type: Option<FrameType>,
    pub sample: RdSample,
}

/// Samples grouped by `(sequence, stream)`, in file order within a group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RdLog {
    pub groups: BTreeMap<(String, Substream), Vec<LoggedSample>>,
}

impl RdLog {
    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, sequence: &str, stream: Substream) -> &[LoggedSample] {
        self.groups
            .get(&(sequence.to_string(), stream))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Rebuild rows in group order.
    pub fn rows(&self) -> Vec<RdLogRow> {
        self.groups
            .iter()
            .flat_map(|((sequence, stream), samples)| {
                samples.iter().map(move |s| RdLogRow {
                    sequence: sequence.clone(),
                    stream: *stream,
                    frame_index: s.frame_index,
                    frame_type: s.frame_type,
                    qp: s.sample.qp,
                    bits: s.sample.bits,
                    psnr: s.sample.psnr,
                })
            })
            .collect()
    }
}

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reject CR bytes and invalid UTF-8 up front, with the offending line.
fn check_text(data: &[u8]) -> Result<&str> {
    if let Some(pos) = data.iter().position(|&b| b == b'\r') {
        let line = data[..pos].iter().filter(|&&b| b == b'\n').count() as u64 + 1;
        return Err(parse_err(line, "CR line endings are not accepted"));
    }
    std::str::from_utf8(data).map_err(|e| {
        let line = data[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() as u64 + 1;
        parse_err(line, "invalid UTF-8")
    })
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn read_records(text: &str, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = reader(text);
    let mut records = rdr.records();
    match records.next() {
        None => return Err(parse_err(1, "missing header")),
        Some(Err(e)) => return Err(parse_err(1, e.to_string())),
        Some(Ok(h)) => {
            if h.iter().ne(header.iter().copied()) {
                return Err(parse_err(1, format!("expected header `{}`", header.join(","))));
            }
        }
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", header.len(), rec.len()),
            ));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_real(line: u64, field: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| parse_err(line, format!("{field}: `{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{field}: `{value}` is not finite")));
    }
    Ok(v)
}

fn parse_row(line: u64, rec: &csv::StringRecord) -> Result<RdLogRow> {
    let sequence = rec[0].to_string();
    if sequence.is_empty() {
        return Err(parse_err(line, "sequence is empty"));
    }
    let stream: Substream = rec[1].parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
    let frame_index: usize = rec[2].parse().map_err(|_| {
        parse_err(
            line,
            format!("frame_index: `{}` is not a non-negative integer", &rec[2]),
        )
    })?;
    let frame_type = match &rec[3] {
        "I" => Some(FrameType::I),
        "P" => Some(FrameType::P),
        "-" => None,
        other => return Err(parse_err(line, format!("frame_type: `{other}` is not I, P or -"))),
    };
    if stream.video().is_none() && frame_type.is_some() {
        return Err(parse_err(line, format!("{stream} rows must use frame_type `-`")));
    }
    let qp: u8 = rec[4]
        .parse()
        .ok()
        .filter(|q| *q <= QP_MAX)
        .ok_or_else(|| parse_err(line, format!("qp: `{}` is not an integer in [0, {QP_MAX}]", &rec[4])))?;
    let bits = parse_real(line, "bits", &rec[5])?;
    if bits <= 0.0 {
        return Err(parse_err(line, format!("bits must be positive, got {bits}")));
    }
    let psnr = match &rec[6] {
        "" => None,
        s => {
            let p = parse_real(line, "psnr", s)?;
            if p <= 0.0 {
                return Err(parse_err(line, format!("psnr must be positive, got {p}")));
            }
            Some(p)
        }
    };
    Ok(RdLogRow {
        sequence,
        stream,
        frame_index,
        frame_type,
        qp,
        bits,
        psnr,
    })
}

/// Parse and validate an R-D log held in memory.
pub fn parse_rd_log_bytes(data: &[u8]) -> Result<RdLog> {
    let text = check_text(data)?;
    let mut log = RdLog::default();
    for (line, rec) in read_records(text, &RD_LOG_HEADER)? {
        let row = parse_row(line, &rec)?;
        let sample = RdSample::new(row.qp, row.bits, row.psnr).map_err(|e| parse_err(line, e.to_string()))?;
        log.groups
            .entry((row.sequence, row.stream))
            .or_default()
            .push(LoggedSample {
                line,
                frame_index: row.frame_index,
                frame_type: row.frame_type,
                sample,
            });
    }
    Ok(log)
}

pub fn parse_rd_log(path: impl AsRef<Path>) -> Result<RdLog> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(Error::io(path))?;
    parse_rd_log_bytes(&data)
}

pub fn write_rd_log<W: Write>(out: W, rows: &[RdLogRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Invalid(format!("writing CSV: {e}"));
    w.write_record(RD_LOG_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.sequence.clone(),
            r.stream.as_str().to_string(),
            r.frame_index.to_string(),
            r.frame_type.map(|t| t.as_str()).unwrap_or("-").to_string(),
            r.qp.to_string(),
            r.bits.to_string(),
            r.psnr.map(|p| p.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("writing CSV: {e}")))?;
    Ok(())
}

/// Parse a `rate,psnr` curve.
pub fn parse_rate_curve_bytes(data: &[u8]) -> Result<RateCurve> {
    let text = check_text(data)?;
    let mut points = Vec::new();
    let mut last_line = 1;
    for (line, rec) in read_records(text, &CURVE_HEADER)? {
        points.push((parse_real(line, "rate", &rec[0])?, parse_real(line, "psnr", &rec[1])?));
        last_line = line;
    }
    RateCurve::new(points).map_err(|e| parse_err(last_line, e.to_string()))
}

pub fn parse_rate_curve(path: impl AsRef<Path>) -> Result<RateCurve> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(Error::io(path))?;
    parse_rate_curve_bytes(&data)
}

pub fn write_rate_curve<W: Write>(mut out: W, curve: &RateCurve) -> std::io::Result<()> {
    writeln!(out, "{}", CURVE_HEADER.join(","))?;
    for (r, p) in curve.points() {
        writeln!(out, "{r},{p}")?;
    }
    Ok(())
}
