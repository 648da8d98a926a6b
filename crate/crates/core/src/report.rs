//! CSV/JSON emission shared by every result type.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Format like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    fmt_sig(x, 9)
}

pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A result that can be laid out as CSV lines.
pub trait Tabular {
    fn header(&self) -> Option<String>;
    fn rows(&self) -> Vec<String>;

    fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(h) = self.header() {
            out.push_str(&h);
            out.push('\n');
        }
        for r in self.rows() {
            out.push_str(&r);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// JSON envelope: `{"manifest": ..., "result": ...}`.
pub fn to_json_with_manifest<T: Serialize, M: Serialize>(result: &T, manifest: Option<&M>) -> Result<String> {
    #[derive(Serialize)]
    struct Envelope<'a, T, M> {
        #[serde(skip_serializing_if = "Option::is_none")]
        manifest: Option<&'a M>,
        result: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Envelope { manifest, result })?;
    s.push('\n');
    Ok(s)
}

pub fn emit_report<T, M>(result: &T, format: ReportFormat, path: &Path, manifest: Option<&M>) -> Result<()>
where
    T: Tabular + Serialize,
    M: Serialize,
{
    let body = match format {
        ReportFormat::Csv => result.to_csv(),
        ReportFormat::Json => to_json_with_manifest(result, manifest)?,
    };
    write_file(path, body.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
