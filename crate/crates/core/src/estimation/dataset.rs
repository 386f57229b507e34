//! Per-bin raw set transmissions, the input to every bootstrap.
//!
//! On disk a dataset is long-format CSV, one row per set:
//! `time_s,set_index,T_i,L0_M`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::photon_stats::set_statistics;
use crate::sensorgram::{column_indices, csv_err, parse_field, Sensorgram};

pub const DATASET_HEADER: [&str; 4] = ["time_s", "set_index", "T_i", "L0_M"];

/// Relative tolerance on bin spacing.
const SPACING_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    /// Cavity ligand concentration, mol/L.
    pub l0: f64,
    /// Probes per set the `T_i` were estimated from.
    pub nu: u64,
    /// Bin times, s.
    pub time: Vec<f64>,
    /// All per-set transmissions `T_i` of each bin.
    pub bins: Vec<Vec<f64>>,
}

/// Offsets applied by [`ExperimentDataset::align`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// Subtracted from every bin time.
    pub time_shift: f64,
    /// Added to every `T_i`.
    pub baseline_shift: f64,
    pub dropped_bins: usize,
}

impl ExperimentDataset {
    pub fn validate(&self) -> Result<()> {
        if self.time.len() != self.bins.len() {
            return Err(Error::domain("time and bin counts differ"));
        }
        if self.nu == 0 {
            return Err(Error::domain("nu must be >= 1"));
        }
        if !(self.l0 >= 0.0) {
            return Err(Error::domain("L0 must be >= 0"));
        }
        if self.bins.iter().any(|b| b.is_empty()) {
            return Err(Error::domain("every bin needs at least one set"));
        }
        if self.bins.iter().flatten().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::domain("set transmissions must be finite and >= 0"));
        }
        if let [t0, t1, ..] = self.time[..] {
            let dt = t1 - t0;
            if !(dt > 0.0) {
                return Err(Error::domain("bin times must increase"));
            }
            for w in self.time.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > SPACING_RTOL * dt {
                    return Err(Error::domain("bins are not uniformly spaced"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn bin_means(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.iter().sum::<f64>() / b.len() as f64).collect()
    }

    /// Mean and population spread per bin.
    pub fn sensorgram(&self) -> Result<Sensorgram> {
        let mut s = Sensorgram { time: self.time.clone(), ..Default::default() };
        for b in &self.bins {
            let st = set_statistics(b)?;
            s.mean.push(st.mean_t);
            s.std.push(st.std_t);
        }
        Ok(s)
    }

    /// Moves the injection to `t = 0` and the first-bin mean to
    /// `baseline`. Bins before the injection are dropped.
    pub fn align(&self, injection_time: f64, baseline: f64) -> Result<(ExperimentDataset, Alignment)> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.time[i] >= injection_time).collect();
        let Some(&first) = keep.first() else {
            return Err(Error::domain("no bins at or after the injection time"));
        };
        let first_mean = self.bins[first].iter().sum::<f64>() / self.bins[first].len() as f64;
        let baseline_shift = baseline - first_mean;
        let out = ExperimentDataset {
            l0: self.l0,
            nu: self.nu,
            time: keep.iter().map(|&i| self.time[i] - injection_time).collect(),
            bins: keep
                .iter()
                .map(|&i| self.bins[i].iter().map(|t| (t + baseline_shift).max(0.0)).collect())
                .collect(),
        };
        let alignment = Alignment {
            time_shift: injection_time,
            baseline_shift,
            dropped_bins: self.len() - keep.len(),
        };
        log::info!(
            "aligned dataset L0={:.4e}: time shift {:.3} s, baseline shift {:+.5}, {} bins dropped",
            self.l0,
            alignment.time_shift,
            alignment.baseline_shift,
            alignment.dropped_bins
        );
        Ok((out, alignment))
    }

    /// Indices of the bins whose time lies within `width / 2` of `center`.
    pub fn bins_near(&self, center: f64, width: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| (self.time[i] - center).abs() <= 0.5 * width).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DATASET_HEADER).map_err(csv_err)?;
        let l0 = self.l0.to_string();
        for (t, bin) in self.time.iter().zip(&self.bins) {
            let t = t.to_string();
            for (k, v) in bin.iter().enumerate() {
                w.write_record([t.as_str(), &k.to_string(), &v.to_string(), &l0]).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a long-format dataset. Rows of one bin must be contiguous and
    /// bins must appear in increasing time order.
    pub fn read_csv<R: Read>(input: R, nu: u64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let cols = column_indices(&headers, &DATASET_HEADER)?;
        let mut ds = ExperimentDataset { l0: f64::NAN, nu, time: Vec::new(), bins: Vec::new() };
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let t: f64 = parse_field(&rec, cols[0], line)?;
            let _set: u64 = parse_field(&rec, cols[1], line)?;
            let value: f64 = parse_field(&rec, cols[2], line)?;
            let l0: f64 = parse_field(&rec, cols[3], line)?;
            if ds.l0.is_nan() {
                ds.l0 = l0;
            } else if l0 != ds.l0 {
                return Err(Error::Parse { line, message: format!("L0 changes from {} to {l0}", ds.l0) });
            }
            match ds.time.last() {
                Some(&last) if last == t => ds.bins.last_mut().expect("bin exists").push(value),
                Some(&last) if t < last => {
                    return Err(Error::Parse { line, message: format!("time {t} precedes {last}") });
                }
                _ => {
                    ds.time.push(t);
                    ds.bins.push(vec![value]);
                }
            }
        }
        if ds.l0.is_nan() {
            ds.l0 = 0.0;
        }
        ds.validate().map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ExperimentDataset {
        ExperimentDataset {
            l0: 4.659e-5,
            nu: 150,
            time: vec![0.0, 6.0, 12.0],
            bins: vec![vec![0.06, 0.0533], vec![0.07, 0.08], vec![0.1, 0.1]],
        }
    }

    #[test]
    fn csv_round_trip() {
        let ds = toy();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"time_s,set_index,T_i,L0_M\n"));
        assert_eq!(ExperimentDataset::read_csv(&buf[..], 150).unwrap(), ds);
    }

    #[test]
    fn header_only_file_is_an_empty_dataset() {
        let ds = ExperimentDataset::read_csv("time_s,set_index,T_i,L0_M\n".as_bytes(), 150).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn parse_errors() {
        let missing = "time_s,set_index,T_i\n0,0,0.06\n";
        assert!(matches!(
            ExperimentDataset::read_csv(missing.as_bytes(), 150),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad = "time_s,set_index,T_i,L0_M\n0,0,0.06,1e-5\n0,1,x,1e-5\n";
        assert!(matches!(ExperimentDataset::read_csv(bad.as_bytes(), 150), Err(Error::Parse { line: 3, .. })));
        let mixed = "time_s,set_index,T_i,L0_M\n0,0,0.06,1e-5\n6,0,0.06,2e-5\n";
        assert!(matches!(ExperimentDataset::read_csv(mixed.as_bytes(), 150), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn non_uniform_bins_rejected() {
        let mut ds = toy();
        ds.time[2] = 13.0;
        assert!(ds.validate().is_err());
    }

    #[test]
    fn alignment_shifts_time_and_baseline() {
        let (al, off) = toy().align(6.0, 0.06).unwrap();
        assert_eq!(al.time, vec![0.0, 6.0]);
        assert_eq!(off.dropped_bins, 1);
        assert!((off.baseline_shift - (0.06 - 0.075)).abs() < 1e-15);
        let first = al.bin_means()[0];
        assert!((first - 0.06).abs() < 1e-15);
        assert!(toy().align(100.0, 0.06).is_err());
    }

    #[test]
    fn steady_state_window_selection() {
        let ds = ExperimentDataset {
            time: (0..17).map(|k| 6.0 * k as f64).collect(),
            bins: vec![vec![0.1]; 17],
            ..toy()
        };
        assert_eq!(ds.bins_near(94.0, 6.0), vec![16]);
        assert_eq!(ds.bins_near(90.0, 12.0), vec![14, 15, 16]);
    }
}
