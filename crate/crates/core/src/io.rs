//! Plain-text formats: the `rows,cols` CSV matrix format, per-coordinate
//! tables, curve files and JSON with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::oracle::SparsityCurve;
use crate::simharness::CoordinateRow;

/// `%.17g`: shortest fixed or exponent notation carrying 17 significant
/// digits, trailing zeros removed. Round-trips every finite `f64`.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Pretty JSON whose floats use [`format_f64`]; non-finite values become `null`.
struct DigitsFormatter(PrettyFormatter<'static>);

impl Formatter for DigitsFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(format_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, DigitsFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}

/// Writes through a temporary file in the target directory, then renames,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        message: message.into(),
    }
}

/// Parses the `rows,cols` matrix format. Blank lines and lines starting
/// with `#` are skipped; `origin` names the source in error messages.
pub fn parse_matrix(text: &str, origin: &str) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(origin, 1, "empty file; expected `rows,cols` header"))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    let (rows, cols) = match dims.as_slice() {
        [r, c] => match (r.parse::<usize>(), c.parse::<usize>()) {
            (Ok(r), Ok(c)) => (r, c),
            _ => return Err(parse_err(origin, hline, format!("bad header `{header}`; expected `rows,cols`"))),
        },
        _ => return Err(parse_err(origin, hline, format!("bad header `{header}`; expected `rows,cols`"))),
    };
    let mut entries = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (ln, line) in lines {
        if seen == rows {
            return Err(parse_err(origin, ln, format!("more than the declared {rows} rows")));
        }
        let before = entries.len();
        for field in line.split(',') {
            let field = field.trim();
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(origin, ln, format!("not a number: `{field}`")))?;
            entries.push(v);
        }
        let got = entries.len() - before;
        if got != cols {
            return Err(parse_err(origin, ln, format!("expected {cols} values, found {got}")));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(parse_err(
            origin,
            text.lines().count(),
            format!("expected {rows} rows, found {seen}"),
        ));
    }
    Matrix::from_row_major(rows, cols, &entries)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| parse_err(&path.display().to_string(), 0, e.to_string()))?;
    parse_matrix(&text, &path.display().to_string())
}

/// A vector is an `n×1` or `1×n` matrix.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    match (m.rows(), m.cols()) {
        (_, 1) => Ok(m.col(0).to_vec()),
        (1, _) => Ok(m.row(0)),
        (r, c) => Err(parse_err(
            &path.display().to_string(),
            1,
            format!("expected a vector (n,1 or 1,n), found {r},{c}"),
        )),
    }
}

pub fn format_matrix(m: &Matrix, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for l in c.lines() {
            let _ = writeln!(out, "# {l}");
        }
    }
    let _ = writeln!(out, "{},{}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).into_iter().map(format_f64).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn write_matrix(path: &Path, m: &Matrix, comment: Option<&str>) -> Result<()> {
    write_atomic(path, format_matrix(m, comment).as_bytes())
}

pub fn format_vector(v: &[f64], comment: Option<&str>) -> String {
    let m = Matrix::from_row_major(v.len(), 1, v).expect("consistent shape");
    format_matrix(&m, comment)
}

pub fn write_vector(path: &Path, v: &[f64], comment: Option<&str>) -> Result<()> {
    write_atomic(path, format_vector(v, comment).as_bytes())
}

/// Per-coordinate coverage table: `j,beta0,coverage,mean_length`.
pub fn format_coordinate_table(rows: &[CoordinateRow]) -> String {
    let mut out = String::from("j,beta0,coverage,mean_length\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.j,
            format_f64(r.beta0),
            format_f64(r.coverage),
            format_f64(r.mean_length)
        );
    }
    out
}

/// Curve table: `r,norm_r`.
pub fn format_curve(curve: &SparsityCurve) -> String {
    let mut out = String::from("r,norm_r\n");
    for (r, v) in curve.r_grid.iter().zip(&curve.norms) {
        let _ = writeln!(out, "{},{}", format_f64(*r), format_f64(*v));
    }
    out
}

/// Figure data over several runs: `run,r,norm_r` with one-based runs.
pub fn format_figure_data(curves: &[SparsityCurve]) -> String {
    let mut out = String::from("run,r,norm_r\n");
    for (run, c) in curves.iter().enumerate() {
        for (r, v) in c.r_grid.iter().zip(&c.norms) {
            let _ = writeln!(out, "{},{},{}", run + 1, format_f64(*r), format_f64(*v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_f64(0.1), "0.10000000000000001");
        assert_eq!(format_f64(1.0), "1");
        assert_eq!(format_f64(-4.0), "-4");
        assert_eq!(format_f64(1e-7), "9.9999999999999995e-08");
        assert_eq!(format_f64(1.5e300), "1.5000000000000001e+300");
        assert_eq!(format_f64(2e20), "2e+20");
        assert_eq!(format_f64(123456.0), "123456");
        for x in [std::f64::consts::PI, -1.0 / 3.0, 6.02e23, 5e-324, f64::MAX] {
            assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_numbers() {
        let s = to_json_string(&vec![0.1, f64::NAN, 2.0]).unwrap();
        assert_eq!(s, "[\n  0.10000000000000001,\n  null,\n  2\n]\n");
    }

    #[test]
    fn matrix_round_trip() {
        let m = Matrix::from_rows(&[vec![1.0, -0.5], vec![1e-20, 3.25]]).unwrap();
        let text = format_matrix(&m, Some("two by two"));
        assert!(text.starts_with("# two by two\n2,2\n"));
        assert_eq!(parse_matrix(&text, "mem").unwrap(), m);
    }

    #[test]
    fn row_length_mismatch_names_line() {
        let err = parse_matrix("2,2\n1,2\n3\n", "x.csv").unwrap_err();
        match err {
            Error::Parse { line, ref path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "x.csv");
            }
            e => panic!("{e}"),
        }
        assert!(parse_matrix("2,x\n", "h").is_err());
        assert!(parse_matrix("1,1\n1\n2\n", "h").is_err());
        assert!(parse_matrix("2,1\n1\n", "h").is_err());
        assert!(parse_matrix("1,1\nabc\n", "h").is_err());
    }
}
