use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Bumped whenever a column is appended.
pub const SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: [&str; 6] = ["schema", "experiment", "coordinates", "observable", "value", "tolerance"];

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    /// `name=value` pairs joined by `;`, empty outside sweeps.
    pub coordinates: String,
    pub observable: String,
    pub value: f64,
    pub tolerance: Option<f64>,
}

impl ResultRow {
    pub fn new(experiment: &str, coordinates: &str, observable: &str, value: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            coordinates: coordinates.to_string(),
            observable: observable.to_string(),
            value,
            tolerance: None,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self
    }
}

/// Integral values print as integers, everything else as [`format_float`].
pub fn coordinate(name: &str, value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{name}={}", value as i64)
    } else {
        format!("{name}={}", format_float(value))
    }
}

pub fn join_coordinates(parts: &[String]) -> String {
    parts.join(";")
}

/// 17 significant digits, so parsing the text gives back the same `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn parse_float(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::InvalidArgument(format!("not a number in results file: '{s}'")))
}

pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    let schema = SCHEMA_VERSION.to_string();
    for r in rows {
        let tol = r.tolerance.map(format_float).unwrap_or_default();
        w.write_record([
            schema.as_str(),
            &r.experiment,
            &r.coordinates,
            &r.observable,
            &format_float(r.value),
            &tol,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn rows_to_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < COLUMNS.len() || header[..COLUMNS.len()] != COLUMNS {
        return Err(Error::InvalidArgument(format!("unexpected results header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(ResultRow {
            experiment: rec[1].to_string(),
            coordinates: rec[2].to_string(),
            observable: rec[3].to_string(),
            value: parse_float(&rec[4])?,
            tolerance: if rec[5].is_empty() { None } else { Some(parse_float(&rec[5])?) },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(parse_float(&format_float(x)).unwrap(), x);
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert_eq!(coordinate("n", 8.0), "n=8");
        assert_eq!(coordinate("s", 0.1), "s=1.0000000000000001e-1");
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![
            ResultRow::new("bound", "", "delta_f_irrev", -0.125),
            ResultRow::new("optimal-sweep", &join_coordinates(&[coordinate("n", 8.0)]), "work, total", 0.3)
                .with_tolerance(1e-9),
        ];
        let text = rows_to_string(&rows).unwrap();
        assert!(text.starts_with("schema,experiment,coordinates,observable,value,tolerance\n"));
        assert_eq!(read_rows(text.as_bytes()).unwrap(), rows);
    }
}
