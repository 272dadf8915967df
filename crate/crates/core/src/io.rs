//! CSV ingestion and emission on the regular time grid.
//!
//! Data files have a header row, a `timestamp` column in ISO-8601 UTC and
//! numeric columns; an empty cell or `NA` is missing. Flag files have the
//! columns `timestamp,variable,flag`.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::series::{CovariateSet, QualityFlag, TimeSeries};

const TIMESTAMP: &str = "timestamp";

fn input_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Input {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses an ISO-8601 UTC instant into epoch seconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s.trim_end_matches('Z'), f).ok())
    .map(|t| t.and_utc().timestamp())
}

/// Formats epoch seconds as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_timestamp(t: i64) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

/// Shortest round-trip decimal form; `NA` for non-finite values.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

fn parse_cell(cell: &str) -> std::result::Result<Option<f64>, String> {
    let c = cell.trim();
    if c.is_empty() || c.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    match c.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(format!("`{c}` is not a number")),
    }
}

/// Reads a data file onto its regular grid.
///
/// The spacing is `step` when given, otherwise the smallest gap between
/// consecutive timestamps. Every timestamp must sit on the grid; grid
/// positions absent from the file are masked.
pub fn read_csv(path: impl AsRef<Path>, step: Option<i64>) -> Result<CovariateSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let header = reader
        .headers()
        .map_err(|e| input_error(path, format!("cannot read header: {e}")))?
        .clone();
    let ts_col = header
        .iter()
        .position(|h| h == TIMESTAMP)
        .ok_or_else(|| input_error(path, format!("missing `{TIMESTAMP}` column")))?;
    let names: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ts_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if names.is_empty() {
        return Err(input_error(path, "no value columns"));
    }

    let mut times: Vec<i64> = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (r, record) in reader.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| input_error(path, format!("row {row}: {e}")))?;
        let raw = record.get(ts_col).unwrap_or("");
        let t =
            parse_timestamp(raw).ok_or_else(|| input_error(path, format!("row {row}: invalid timestamp `{raw}`")))?;
        if times.last().is_some_and(|p| t <= *p) {
            return Err(input_error(
                path,
                format!("row {row}: timestamps must be strictly increasing"),
            ));
        }
        times.push(t);
        for (j, (i, name)) in names.iter().enumerate() {
            let v = parse_cell(record.get(*i).unwrap_or(""))
                .map_err(|m| input_error(path, format!("row {row}, column `{name}`: {m}")))?;
            cells[j].push(v);
        }
    }
    if times.is_empty() {
        return Err(input_error(path, "no data rows"));
    }

    let step = match step {
        Some(s) if s > 0 => s,
        Some(s) => return Err(input_error(path, format!("declared spacing {s}s is not positive"))),
        None => times.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(1),
    };
    let start = times[0];
    let mut index = Vec::with_capacity(times.len());
    for (r, t) in times.iter().enumerate() {
        if (t - start) % step != 0 {
            return Err(input_error(
                path,
                format!(
                    "row {}: timestamp {} is off the {step}s grid",
                    r + 2,
                    format_timestamp(*t)
                ),
            ));
        }
        index.push(((t - start) / step) as usize);
    }
    let len = index.last().map_or(0, |i| i + 1);
    let columns = names
        .iter()
        .zip(cells)
        .map(|((_, name), col)| {
            let mut values = vec![None; len];
            for (i, v) in index.iter().zip(col) {
                values[*i] = v;
            }
            TimeSeries::from_options(name.clone(), start, step, &values)
        })
        .collect::<Result<Vec<_>>>()?;
    CovariateSet::new(columns)
}

/// Reads a flag file and returns, for each listed variable, one flag per
/// grid position of `grid` (unlisted positions are clean).
pub fn read_flags(path: impl AsRef<Path>, grid: &CovariateSet) -> Result<HashMap<String, Vec<QualityFlag>>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let header = reader
        .headers()
        .map_err(|e| input_error(path, format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| input_error(path, format!("missing `{name}` column")))
    };
    let (ct, cv, cf) = (col(TIMESTAMP)?, col("variable")?, col("flag")?);
    let mut out: HashMap<String, Vec<QualityFlag>> = HashMap::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| input_error(path, format!("row {row}: {e}")))?;
        let raw = record.get(ct).unwrap_or("");
        let t =
            parse_timestamp(raw).ok_or_else(|| input_error(path, format!("row {row}: invalid timestamp `{raw}`")))?;
        let variable = record.get(cv).unwrap_or("").to_string();
        if grid.column(&variable).is_none() {
            return Err(input_error(path, format!("row {row}: unknown variable `{variable}`")));
        }
        let flag: QualityFlag = record
            .get(cf)
            .unwrap_or("")
            .parse()
            .map_err(|e: Error| input_error(path, format!("row {row}: {e}")))?;
        let offset = t - grid.start();
        if offset < 0 || offset % grid.step() != 0 || (offset / grid.step()) as usize >= grid.len() {
            return Err(input_error(
                path,
                format!("row {row}: timestamp `{raw}` is not on the data grid"),
            ));
        }
        let flags = out
            .entry(variable)
            .or_insert_with(|| vec![QualityFlag::Clean; grid.len()]);
        flags[(offset / grid.step()) as usize] = flag;
    }
    Ok(out)
}

/// Writes a table whose first column is `timestamp`.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::WriterBuilder::new().from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(&r).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes series sharing one grid as a data file.
pub fn write_series(path: impl AsRef<Path>, columns: &[&TimeSeries]) -> Result<()> {
    let first = columns
        .first()
        .ok_or_else(|| Error::Schema("nothing to write".into()))?;
    if columns.iter().any(|c| !c.same_grid(first)) {
        return Err(Error::Alignment("series written together must share a grid".into()));
    }
    let mut header = vec![TIMESTAMP];
    header.extend(columns.iter().map(|c| c.name()));
    let rows = (0..first.len()).map(|i| {
        let mut r = vec![format_timestamp(first.timestamp(i))];
        r.extend(
            columns
                .iter()
                .map(|c| c.get(i).map_or_else(|| "NA".to_string(), format_value)),
        );
        r
    });
    write_table(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn timestamps_roundtrip() {
        let t = parse_timestamp("2020-09-13T12:26:40Z").unwrap();
        assert_eq!(t, 1_600_000_000);
        assert_eq!(format_timestamp(t), "2020-09-13T12:26:40Z");
        assert_eq!(parse_timestamp("2020-09-13 12:26:40"), Some(t));
        assert_eq!(parse_timestamp("2020-09-13T12:26:40+00:00"), Some(t));
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn gaps_and_missing_cells_are_masked() {
        let f = file(
            "timestamp,a,b\n\
             2020-01-01T00:00:00Z,1,NA\n\
             2020-01-01T00:05:00Z,,2\n\
             2020-01-01T00:15:00Z,3,4\n",
        );
        let z = read_csv(f.path(), None).unwrap();
        assert_eq!(z.step(), 300);
        assert_eq!(z.len(), 4);
        let a = z.column("a").unwrap();
        assert_eq!(a.to_options(), vec![Some(1.0), None, None, Some(3.0)]);
        assert_eq!(
            z.column("b").unwrap().to_options(),
            vec![None, Some(2.0), None, Some(4.0)]
        );
    }

    #[test]
    fn schema_errors_name_the_file() {
        let f = file("time,a\n2020-01-01T00:00:00Z,1\n");
        let e = read_csv(f.path(), None).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains(&f.path().display().to_string()));
        assert!(e.to_string().contains("timestamp"));

        let f = file("timestamp,a\n2020-01-01T00:00:00Z,1\n2020-01-01T00:00:00Z,2\n");
        assert!(read_csv(f.path(), None).unwrap_err().to_string().contains("row 3"));

        let f = file("timestamp,a\n2020-01-01T00:00:00Z,x\n");
        assert!(read_csv(f.path(), None).unwrap_err().to_string().contains("row 2"));

        let f = file("timestamp,a\n2020-01-01T00:00:00Z,1\n2020-01-01T00:07:00Z,1\n");
        assert!(read_csv(f.path(), Some(300)).is_err());
    }

    #[test]
    fn flags_are_placed_on_the_grid() {
        let data = file("timestamp,a\n2020-01-01T00:00:00Z,1\n2020-01-01T00:05:00Z,2\n2020-01-01T00:10:00Z,3\n");
        let z = read_csv(data.path(), None).unwrap();
        let flags = file("timestamp,variable,flag\n2020-01-01T00:05:00Z,a,range_flag\n");
        let f = read_flags(flags.path(), &z).unwrap();
        assert_eq!(
            f["a"],
            vec![QualityFlag::Clean, QualityFlag::RangeFlag, QualityFlag::Clean]
        );
        let bad = file("timestamp,variable,flag\n2020-01-01T00:05:00Z,q,wiper\n");
        assert!(read_flags(bad.path(), &z).is_err());
    }

    #[test]
    fn written_series_read_back() {
        let s = TimeSeries::from_options("v", 1_600_000_200, 300, &[Some(0.1), None, Some(-2.5e-7)]).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_series(out.path(), &[&s]).unwrap();
        let back = read_csv(out.path(), Some(300)).unwrap();
        assert_eq!(back.column("v").unwrap(), &s);
    }
}
