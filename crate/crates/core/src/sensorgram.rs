//! Binned transmission time series and its CSV form
//! (`time_s,T_mean,T_std`, one row per bin).

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const SENSORGRAM_HEADER: [&str; 3] = ["time_s", "T_mean", "T_std"];

/// Mean transmission per time bin with its per-set spread.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sensorgram {
    pub time: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Sensorgram {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SENSORGRAM_HEADER).map_err(csv_err)?;
        for i in 0..self.len() {
            w.write_record(&[
                self.time[i].to_string(),
                self.mean[i].to_string(),
                self.std[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let cols = column_indices(&headers, &SENSORGRAM_HEADER)?;
        let mut s = Sensorgram::default();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            s.time.push(parse_field(&rec, cols[0], line)?);
            s.mean.push(parse_field(&rec, cols[1], line)?);
            s.std.push(parse_field(&rec, cols[2], line)?);
        }
        Ok(s)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

/// Locates each required column by name; missing columns are a parse error
/// at the header line.
pub(crate) fn column_indices(headers: &csv::StringRecord, wanted: &[&str]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|name| {
            headers.iter().position(|h| h.trim() == *name).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column `{name}`"),
            })
        })
        .collect()
}

pub(crate) fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(idx).ok_or_else(|| Error::Parse {
        line,
        message: format!("row has no column {}", idx + 1),
    })?;
    raw.trim().parse().map_err(|e| Error::Parse {
        line,
        message: format!("cannot parse `{raw}`: {e}"),
    })
}
