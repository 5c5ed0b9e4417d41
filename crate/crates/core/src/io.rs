//! Flat file formats: edge arrays, sample vectors, limit-moment tables and
//! schedule dumps.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a CSV
//! write followed by a read reproduces every value bit for bit. Binary
//! layouts are little-endian with a 4-byte magic and a version byte.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::arrays::{array_len, EdgeArray};
use crate::error::{Error, Result};
use crate::recursion::{LimitMomentTable, LimitRow};
use crate::scaling::ScheduleRow;
use crate::stats::{EmpiricalSample, MIN_MOMENT_SAMPLE};

const EDGE_MAGIC: &[u8; 4] = b"DHEA";
const SAMPLE_MAGIC: &[u8; 4] = b"DHSV";
const VERSION: u8 = 1;

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn io_err(e: std::io::Error) -> Error {
    Error::Parse(format!("io: {e}"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| parse_err(format!("missing {what}")))?;
    raw.trim().parse().map_err(|_| parse_err(format!("bad {what}: {raw:?}")))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(w)
}

fn expect_header(rec: Option<std::result::Result<csv::StringRecord, csv::Error>>, want: &[&str]) -> Result<()> {
    let rec = rec.ok_or_else(|| parse_err("empty input"))?.map_err(csv_err)?;
    let got: Vec<&str> = rec.iter().map(str::trim).collect();
    if got != want {
        return Err(parse_err(format!("header {got:?}, expected {want:?}")));
    }
    Ok(())
}

// ---------- edge arrays ----------

/// `b,k` header row, the two integers, then `x` and one value per row.
pub fn write_edge_array_csv<W: Write>(a: &EdgeArray, w: W) -> Result<()> {
    let mut out = writer(w);
    let err = csv_err;
    out.write_record(["b", "k"]).map_err(err)?;
    out.write_record([a.b.to_string(), a.level.to_string()]).map_err(err)?;
    out.write_record(["x"]).map_err(err)?;
    for v in &a.values {
        out.write_record([v.to_string()]).map_err(err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_edge_array_csv<R: Read>(r: R) -> Result<EdgeArray> {
    let mut rd = reader(r);
    let mut recs = rd.records();
    expect_header(recs.next(), &["b", "k"])?;
    let dims = recs.next().ok_or_else(|| parse_err("missing dimensions"))?.map_err(csv_err)?;
    let b: usize = field(&dims, 0, "b")?;
    let k: u32 = field(&dims, 1, "k")?;
    if b < 2 {
        return Err(parse_err(format!("b must be >= 2, got {b}")));
    }
    let len = array_len(b, k).map_err(|_| parse_err("array too large"))?;
    expect_header(recs.next(), &["x"])?;
    let mut values = Vec::new();
    for rec in recs {
        let rec = rec.map_err(csv_err)?;
        if values.len() == len {
            return Err(parse_err(format!("more than {len} values")));
        }
        values.push(field(&rec, 0, "value")?);
    }
    EdgeArray::new(b, k, values).map_err(|e| parse_err(e.to_string()))
}

/// Magic, version, `b: u32`, `k: u32`, then `b^{2k}` values.
pub fn write_edge_array_bin<W: Write>(a: &EdgeArray, mut w: W) -> Result<()> {
    let b = u32::try_from(a.b).map_err(|_| Error::Overflow("b"))?;
    w.write_all(EDGE_MAGIC).map_err(io_err)?;
    w.write_all(&[VERSION]).map_err(io_err)?;
    w.write_all(&b.to_le_bytes()).map_err(io_err)?;
    w.write_all(&a.level.to_le_bytes()).map_err(io_err)?;
    for v in &a.values {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| parse_err("truncated input"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.at
    }

    /// Exactly `count` trailing f64 values, checked before allocating.
    fn f64s(&mut self, count: u64) -> Result<Vec<f64>> {
        if (self.remaining() as u64) != count.saturating_mul(8) {
            return Err(parse_err(format!(
                "payload holds {} bytes, expected {count} values",
                self.remaining()
            )));
        }
        Ok(self
            .take(self.remaining())?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn check_magic(c: &mut Cursor, magic: &[u8; 4]) -> Result<()> {
    if c.take(4)? != magic {
        return Err(parse_err("bad magic"));
    }
    let v = c.take(1)?[0];
    if v != VERSION {
        return Err(parse_err(format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn decode_edge_array_bin(buf: &[u8]) -> Result<EdgeArray> {
    let mut c = Cursor { buf, at: 0 };
    check_magic(&mut c, EDGE_MAGIC)?;
    let b = c.u32()? as usize;
    let k = c.u32()?;
    if b < 2 {
        return Err(parse_err(format!("b must be >= 2, got {b}")));
    }
    let len = array_len(b, k).map_err(|_| parse_err("array too large"))?;
    let values = c.f64s(len as u64)?;
    EdgeArray::new(b, k, values).map_err(|e| parse_err(e.to_string()))
}

pub fn read_edge_array_bin<R: Read>(mut r: R) -> Result<EdgeArray> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(io_err)?;
    decode_edge_array_bin(&buf)
}

// ---------- samples ----------

/// `value` header, then one value per line.
pub fn write_samples_csv<W: Write>(xs: &[f64], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["value"]).map_err(csv_err)?;
    for v in xs {
        out.write_record([v.to_string()]).map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

/// Accepts the file with or without its `value` header.
pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, rec) in reader(r).records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if i == 0 && rec.get(0).map(str::trim) == Some("value") && rec.len() == 1 {
            continue;
        }
        if rec.len() != 1 {
            return Err(parse_err(format!("line {}: expected one value", i + 1)));
        }
        out.push(field(&rec, 0, "value")?);
    }
    Ok(out)
}

/// Magic, version, `count: u64`, then the values.
pub fn write_samples_bin<W: Write>(xs: &[f64], mut w: W) -> Result<()> {
    w.write_all(SAMPLE_MAGIC).map_err(io_err)?;
    w.write_all(&[VERSION]).map_err(io_err)?;
    w.write_all(&(xs.len() as u64).to_le_bytes()).map_err(io_err)?;
    for v in xs {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn decode_samples_bin(buf: &[u8]) -> Result<Vec<f64>> {
    let mut c = Cursor { buf, at: 0 };
    check_magic(&mut c, SAMPLE_MAGIC)?;
    let count = c.u64()?;
    c.f64s(count)
}

pub fn read_samples_bin<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(io_err)?;
    decode_samples_bin(&buf)
}

/// Sample by file extension: `.bin` is the binary layout, anything else CSV.
pub fn read_samples_path(path: &std::path::Path) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
    let f = std::io::BufReader::new(f);
    if path.extension().is_some_and(|e| e == "bin") {
        read_samples_bin(f)
    } else {
        read_samples_csv(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// Centered `m_2..m_4`, present once `N ≥ 10⁴`.
    pub centered: Option<Vec<f64>>,
}

impl SampleSummary {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self {
                count: 0,
                mean: None,
                variance: None,
                centered: None,
            };
        }
        let s = EmpiricalSample::new(xs.iter().copied().filter(|v| v.is_finite()).collect()).unwrap();
        Self {
            count: xs.len(),
            mean: Some(s.mean()),
            variance: Some(s.variance()),
            centered: (s.len() >= MIN_MOMENT_SAMPLE).then(|| s.centered_moments(4).unwrap()),
        }
    }
}

/// JSON companion of a binary sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub format: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub summary: SampleSummary,
}

impl SampleSidecar {
    pub fn new(seed: u64, config: serde_json::Value, xs: &[f64]) -> Self {
        Self {
            format: "DHSV v1: magic, version byte, u64 count, f64 little-endian values".into(),
            seed,
            config,
            summary: SampleSummary::of(xs),
        }
    }
}

// ---------- tables ----------

pub fn limit_table_header(m_max: usize) -> Vec<String> {
    let mut h: Vec<String> = ["r", "R", "R_prime"].iter().map(|s| s.to_string()).collect();
    h.extend((3..=m_max).map(|m| format!("R{m}")));
    h
}

pub fn write_limit_rows<W: Write>(m_max: usize, rows: &[LimitRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(limit_table_header(m_max)).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.r.to_string(), row.big_r.to_string(), row.r_prime.to_string()];
        rec.extend(row.higher.iter().map(f64::to_string));
        if rec.len() != m_max + 1 {
            return Err(Error::InvalidParameter(format!("row at r={} has {} columns", row.r, rec.len())));
        }
        out.write_record(rec).map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn write_limit_table<W: Write>(t: &LimitMomentTable, w: W) -> Result<()> {
    write_limit_rows(t.m_max, &t.rows, w)
}

/// Rows and `m_max` of a limit table; `b` is not part of the layout.
pub fn read_limit_table<R: Read>(r: R) -> Result<(usize, Vec<LimitRow>)> {
    let mut rd = reader(r);
    let mut recs = rd.records();
    let head = recs.next().ok_or_else(|| parse_err("empty input"))?.map_err(csv_err)?;
    let m_max = head.len() - 1;
    if m_max < 2 || m_max > crate::recursion::M_MAX_CAP {
        return Err(parse_err(format!("{} columns is not a limit table", head.len())));
    }
    let want = limit_table_header(m_max);
    if head.iter().map(str::trim).ne(want.iter().map(String::as_str)) {
        return Err(parse_err(format!("unexpected header {head:?}")));
    }
    let mut rows = Vec::new();
    for rec in recs {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != m_max + 1 {
            return Err(parse_err(format!("row has {} columns, expected {}", rec.len(), m_max + 1)));
        }
        let vals = (0..rec.len()).map(|i| field::<f64>(&rec, i, "value")).collect::<Result<Vec<_>>>()?;
        rows.push(LimitRow {
            r: vals[0],
            big_r: vals[1],
            r_prime: vals[2],
            higher: vals[3..].to_vec(),
        });
    }
    Ok((m_max, rows))
}

const SCHEDULE_HEADER: [&str; 5] = ["n", "V_target", "beta_exact", "beta_series", "diff"];

pub fn write_schedule<W: Write>(rows: &[ScheduleRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SCHEDULE_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.n.to_string(),
            r.v_target.to_string(),
            r.beta_exact.to_string(),
            r.beta_series.to_string(),
            r.diff.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_schedule<R: Read>(r: R) -> Result<Vec<ScheduleRow>> {
    let mut rd = reader(r);
    let mut recs = rd.records();
    expect_header(recs.next(), &SCHEDULE_HEADER)?;
    recs.map(|rec| {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != SCHEDULE_HEADER.len() {
            return Err(parse_err(format!("row has {} columns", rec.len())));
        }
        Ok(ScheduleRow {
            n: field(&rec, 0, "n")?,
            v_target: field(&rec, 1, "V_target")?,
            beta_exact: field(&rec, 2, "beta_exact")?,
            beta_series: field(&rec, 3, "beta_series")?,
            diff: field(&rec, 4, "diff")?,
        })
    })
    .collect()
}
