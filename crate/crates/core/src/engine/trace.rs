//! Trace format: one request per line, `<time_ns> <R|W> <hex_address> [<size_bytes>]`.
//! `#` starts a comment; blank lines are skipped.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Op {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRequest {
    pub time_ns: f64,
    pub op: Op,
    /// Byte address.
    pub addr: u64,
    /// `None` means one cache line.
    pub size_bytes: Option<u32>,
}

impl TraceRequest {
    pub fn new(time_ns: f64, op: Op, addr: u64) -> Self {
        Self {
            time_ns,
            op,
            addr,
            size_bytes: None,
        }
    }

    pub fn size_or(&self, line_bytes: u32) -> u32 {
        self.size_bytes.unwrap_or(line_bytes)
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::TraceSyntax {
        line,
        column,
        message: message.into(),
    }
}

/// Splits on whitespace, keeping the 1-based column of each token.
fn tokens(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(st)) => {
                out.push((st + 1, &s[st..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(st) = start {
        out.push((st + 1, &s[st..]));
    }
    out
}

/// Parses one non-comment line. `line` is 1-based and only used in errors.
pub fn parse_line(text: &str, line: usize) -> Result<Option<TraceRequest>> {
    let body = text.split('#').next().unwrap_or("");
    let toks = tokens(body);
    if toks.is_empty() {
        return Ok(None);
    }
    if toks.len() < 3 {
        let col = body.trim_end().len() + 1;
        return Err(syntax(line, col, "expected `<time_ns> <R|W> <hex_address> [<size_bytes>]`"));
    }
    if toks.len() > 4 {
        return Err(syntax(line, toks[4].0, "unexpected trailing field"));
    }

    let (c, t) = toks[0];
    let time_ns: f64 = t
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite() && *v >= 0.0)
        .ok_or_else(|| syntax(line, c, format!("invalid time `{t}`")))?;

    let (c, o) = toks[1];
    let op = match o {
        "R" | "r" => Op::Read,
        "W" | "w" => Op::Write,
        _ => return Err(syntax(line, c, format!("invalid op `{o}`, expected R or W"))),
    };

    let (c, a) = toks[2];
    let digits = a.strip_prefix("0x").or_else(|| a.strip_prefix("0X")).unwrap_or(a);
    let addr = u64::from_str_radix(digits, 16).map_err(|_| syntax(line, c, format!("invalid hex address `{a}`")))?;

    let size_bytes = match toks.get(3) {
        None => None,
        Some(&(c, s)) => Some(
            s.parse::<u32>()
                .ok()
                .filter(|v| *v > 0)
                .ok_or_else(|| syntax(line, c, format!("invalid size `{s}`")))?,
        ),
    };

    Ok(Some(TraceRequest {
        time_ns,
        op,
        addr,
        size_bytes,
    }))
}

/// Parses a whole trace, rejecting arrival times that go backwards.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRequest>> {
    let mut out: Vec<TraceRequest> = Vec::new();
    for (i, l) in reader.lines().enumerate() {
        let line = i + 1;
        let text = l.map_err(|e| syntax(line, 1, format!("read failed: {e}")))?;
        if let Some(req) = parse_line(&text, line)? {
            if let Some(prev) = out.last() {
                if req.time_ns < prev.time_ns {
                    return Err(Error::TimeRegression {
                        line,
                        time_ns: req.time_ns,
                        previous_ns: prev.time_ns,
                    });
                }
            }
            out.push(req);
        }
    }
    Ok(out)
}

pub fn parse_trace_str(s: &str) -> Result<Vec<TraceRequest>> {
    parse_trace(s.as_bytes())
}

/// Renders requests in the trace grammar, one per line.
pub fn format_trace(reqs: &[TraceRequest]) -> String {
    let mut out = String::new();
    for r in reqs {
        let op = match r.op {
            Op::Read => 'R',
            Op::Write => 'W',
        };
        let _ = write!(out, "{} {op} {:#x}", r.time_ns, r.addr);
        if let Some(s) = r.size_bytes {
            let _ = write!(out, " {s}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_examples() {
        assert_eq!(parse_line("0 R 0x0", 1).unwrap(), Some(TraceRequest::new(0.0, Op::Read, 0)));
        assert_eq!(
            parse_line("100 W 0x1F40", 1).unwrap(),
            Some(TraceRequest::new(100.0, Op::Write, 8000))
        );
        let r = parse_line("  7.5 r 1f40 64 # tail", 1).unwrap().unwrap();
        assert_eq!((r.time_ns, r.op, r.addr, r.size_bytes), (7.5, Op::Read, 0x1f40, Some(64)));
    }

    #[test]
    fn reports_error_positions() {
        assert_eq!(
            parse_line("50 X 0x0", 3).unwrap_err(),
            syntax(3, 4, "invalid op `X`, expected R or W")
        );
        assert!(matches!(parse_line("-1 R 0x0", 1), Err(Error::TraceSyntax { column: 1, .. })));
        assert!(matches!(parse_line("1 R 0xZZ", 1), Err(Error::TraceSyntax { column: 5, .. })));
        assert!(matches!(parse_line("1 R 0x0 0", 1), Err(Error::TraceSyntax { column: 9, .. })));
        assert!(matches!(parse_line("1 R 0x0 8 9", 1), Err(Error::TraceSyntax { column: 11, .. })));
        assert!(matches!(parse_line("1 R", 1), Err(Error::TraceSyntax { .. })));
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let t = parse_trace_str("# header\n\n0 R 0x0\n   \n5 W 0x80 # write\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].op, Op::Write);
    }

    #[test]
    fn rejects_time_regression_with_line_number() {
        let err = parse_trace_str("10 R 0x0\n# c\n5 R 0x80\n").unwrap_err();
        assert_eq!(
            err,
            Error::TimeRegression {
                line: 3,
                time_ns: 5.0,
                previous_ns: 10.0
            }
        );
    }

    #[test]
    fn format_round_trips() {
        let reqs = vec![
            TraceRequest::new(0.0, Op::Read, 0),
            TraceRequest {
                time_ns: 2.5,
                op: Op::Write,
                addr: 0x1f40,
                size_bytes: Some(256),
            },
        ];
        let text = format_trace(&reqs);
        assert_eq!(text, "0 R 0x0\n2.5 W 0x1f40 256\n");
        assert_eq!(parse_trace_str(&text).unwrap(), reqs);
    }
}
