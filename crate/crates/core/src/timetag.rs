//! Two-channel time-tag processing.
//!
//! Detector A heralds a photon whose partner probes the sensor on its way to
//! detector B. A herald counts as transmitted when a B event follows it
//! within the coincidence window. Heralds are grouped into consecutive
//! blocks of `nu`, giving one transmitted count `Nt` per block.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensorgram::{column_indices, csv_err, parse_field};

/// Timestamp granularity of the time tagger, ps.
pub const RESOLUTION_PS: u64 = 25;
pub const DEFAULT_WINDOW_PS: u64 = 4000;
pub const TIMETAG_HEADER: [&str; 2] = ["channel", "timestamp_ps"];

const PS_PER_S: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    A,
    B,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Channel::A => "A",
            Channel::B => "B",
        })
    }
}

impl std::str::FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(Channel::A),
            "B" | "b" => Ok(Channel::B),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagEvent {
    pub channel: Channel,
    pub timestamp_ps: u64,
}

/// Which B events may pair with a herald at `t_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// `t_a <= t_b <= t_a + window`.
    #[default]
    After,
    /// `|t_b - t_a| <= window`.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceConfig {
    pub window_ps: u64,
    pub nu: u64,
    #[serde(default)]
    pub kind: WindowKind,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        CoincidenceConfig { window_ps: DEFAULT_WINDOW_PS, nu: 150, kind: WindowKind::After }
    }
}

fn check_sorted(stream: &[u64], name: &str) -> Result<()> {
    match stream.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::Contract(format!(
            "stream {name} is not sorted at index {}",
            i + 1
        ))),
        None => Ok(()),
    }
}

/// Greedy one-sided matching: each A event, in time order, takes the
/// earliest still-unmatched B event with `0 <= t_b - t_a <= window`.
pub fn match_coincidences(stream_a: &[u64], stream_b: &[u64], window_ps: u64) -> Result<Vec<(usize, usize)>> {
    match_coincidences_with(stream_a, stream_b, window_ps, WindowKind::After)
}

/// [`match_coincidences`] with a selectable window shape.
pub fn match_coincidences_with(
    stream_a: &[u64],
    stream_b: &[u64],
    window_ps: u64,
    kind: WindowKind,
) -> Result<Vec<(usize, usize)>> {
    if window_ps == 0 {
        return Err(Error::Contract("coincidence window must be > 0".into()));
    }
    check_sorted(stream_a, "A")?;
    check_sorted(stream_b, "B")?;

    // Every B index below `next` is either matched or too early for all
    // remaining heralds, so the first candidate is always at `next`.
    let mut pairs = Vec::new();
    let mut next = 0usize;
    for (ia, &ta) in stream_a.iter().enumerate() {
        let lo = match kind {
            WindowKind::After => ta,
            WindowKind::Symmetric => ta.saturating_sub(window_ps),
        };
        while next < stream_b.len() && stream_b[next] < lo {
            next += 1;
        }
        if next < stream_b.len() && stream_b[next] <= ta.saturating_add(window_ps) {
            pairs.push((ia, next));
            next += 1;
        }
    }
    Ok(pairs)
}

/// Splits the heralds into consecutive blocks of `nu` and counts the matched
/// heralds in each. A trailing partial block is dropped.
pub fn group_into_sets(stream_a: &[u64], pairs: &[(usize, usize)], nu: u64) -> Result<Vec<u64>> {
    group_indices_into_sets(stream_a.len(), 0, pairs, nu)
}

fn group_indices_into_sets(count: usize, offset: usize, pairs: &[(usize, usize)], nu: u64) -> Result<Vec<u64>> {
    if nu == 0 {
        return Err(Error::domain("nu must be >= 1"));
    }
    let nu = nu as usize;
    let mut matched = vec![false; count];
    for &(ia, _) in pairs {
        if ia >= offset && ia < offset + count {
            matched[ia - offset] = true;
        }
    }
    Ok(matched
        .chunks_exact(nu)
        .map(|block| block.iter().filter(|&&m| m).count() as u64)
        .collect())
}

/// Per time bin of width `bin_ps` (starting at 0), the matched counts of the
/// complete `nu`-blocks of heralds falling in that bin.
pub fn sets_per_bin(stream_a: &[u64], pairs: &[(usize, usize)], nu: u64, bin_ps: u64) -> Result<Vec<Vec<u64>>> {
    if bin_ps == 0 {
        return Err(Error::domain("bin width must be > 0"));
    }
    check_sorted(stream_a, "A")?;
    let Some(&last) = stream_a.last() else {
        return Ok(Vec::new());
    };
    let n_bins = (last / bin_ps + 1) as usize;
    let mut out = Vec::with_capacity(n_bins);
    let mut start = 0usize;
    let mut pair_start = 0usize;
    for bin in 0..n_bins as u64 {
        let end_t = (bin + 1) * bin_ps;
        let end = start + stream_a[start..].partition_point(|&t| t < end_t);
        let pair_end = pair_start + pairs[pair_start..].partition_point(|&(ia, _)| ia < end);
        out.push(group_indices_into_sets(end - start, start, &pairs[pair_start..pair_end], nu)?);
        start = end;
        pair_start = pair_end;
    }
    Ok(out)
}

/// Parameters of a simulated herald/probe stream pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    /// Herald (detector A) rate, s^-1.
    pub herald_rate: f64,
    /// Probability that a herald's partner reaches detector B.
    pub transmission: f64,
    pub duration_s: f64,
    /// B events lag their herald by a delay uniform in `[0, jitter_ps]`.
    pub jitter_ps: u64,
    /// Rate of uncorrelated B events, s^-1. Zero disables accidentals.
    #[serde(default)]
    pub background_rate: f64,
    /// Absolute start of the simulated interval, ps.
    #[serde(default)]
    pub start_ps: u64,
}

fn quantize(t_ps: f64) -> u64 {
    (t_ps / RESOLUTION_PS as f64).floor() as u64 * RESOLUTION_PS
}

fn poisson_times<R: Rng + ?Sized>(rate: f64, start_ps: u64, duration_s: f64, rng: &mut R) -> Result<Vec<u64>> {
    let gap = Exp::new(rate / PS_PER_S).map_err(|e| Error::domain(e.to_string()))?;
    let end = duration_s * PS_PER_S;
    let mut t = 0.0;
    let mut out = Vec::with_capacity((rate * duration_s * 1.05) as usize + 16);
    loop {
        t += gap.sample(rng);
        if t >= end {
            break;
        }
        out.push(start_ps + quantize(t));
    }
    Ok(out)
}

/// Herald stream from a Poisson process and the probe stream it spawns.
/// Both streams are sorted and quantized to [`RESOLUTION_PS`].
pub fn simulate_streams<R: Rng + ?Sized>(params: &StreamParams, rng: &mut R) -> Result<(Vec<u64>, Vec<u64>)> {
    if !(params.herald_rate > 0.0) {
        return Err(Error::domain("herald rate must be > 0"));
    }
    if !(0.0..=1.0).contains(&params.transmission) {
        return Err(Error::domain("transmission must lie in [0, 1]"));
    }
    if !(params.duration_s >= 0.0) || !(params.background_rate >= 0.0) {
        return Err(Error::domain("duration and background rate must be >= 0"));
    }
    let a = poisson_times(params.herald_rate, params.start_ps, params.duration_s, rng)?;
    let jitter_steps = params.jitter_ps / RESOLUTION_PS;
    let mut b: Vec<u64> = Vec::with_capacity((a.len() as f64 * params.transmission * 1.1) as usize + 16);
    for &ta in &a {
        if rng.random::<f64>() < params.transmission {
            let delay = if jitter_steps == 0 { 0 } else { rng.random_range(0..=jitter_steps) };
            b.push(ta + delay * RESOLUTION_PS);
        }
    }
    if params.background_rate > 0.0 {
        b.extend(poisson_times(params.background_rate, params.start_ps, params.duration_s, rng)?);
    }
    b.sort_unstable();
    Ok((a, b))
}

/// Merges two per-channel streams into one globally time-ordered list.
/// On equal timestamps A precedes B.
pub fn merge_streams(stream_a: &[u64], stream_b: &[u64]) -> Vec<TimeTagEvent> {
    let mut out = Vec::with_capacity(stream_a.len() + stream_b.len());
    let (mut i, mut j) = (0, 0);
    while i < stream_a.len() || j < stream_b.len() {
        let take_a = j >= stream_b.len() || (i < stream_a.len() && stream_a[i] <= stream_b[j]);
        if take_a {
            out.push(TimeTagEvent { channel: Channel::A, timestamp_ps: stream_a[i] });
            i += 1;
        } else {
            out.push(TimeTagEvent { channel: Channel::B, timestamp_ps: stream_b[j] });
            j += 1;
        }
    }
    out
}

pub fn split_streams(events: &[TimeTagEvent]) -> (Vec<u64>, Vec<u64>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for ev in events {
        match ev.channel {
            Channel::A => a.push(ev.timestamp_ps),
            Channel::B => b.push(ev.timestamp_ps),
        }
    }
    (a, b)
}

pub fn write_timetag_csv<W: Write>(events: &[TimeTagEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMETAG_HEADER).map_err(csv_err)?;
    for ev in events {
        w.write_record(&[ev.channel.to_string(), ev.timestamp_ps.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `channel,timestamp_ps` file. Rows must be sorted by timestamp.
pub fn read_timetag_csv<R: Read>(input: R) -> Result<Vec<TimeTagEvent>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let cols = column_indices(&headers, &TIMETAG_HEADER)?;
    let mut events: Vec<TimeTagEvent> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let ev = TimeTagEvent {
            channel: parse_field(&rec, cols[0], line)?,
            timestamp_ps: parse_field(&rec, cols[1], line)?,
        };
        if events.last().is_some_and(|prev| prev.timestamp_ps > ev.timestamp_ps) {
            return Err(Error::Parse { line, message: "timestamps are not sorted".into() });
        }
        events.push(ev);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn window_boundary_is_inclusive() {
        assert_eq!(match_coincidences(&[0], &[4000], 4000).unwrap(), vec![(0, 0)]);
        assert!(match_coincidences(&[0], &[4025], 4000).unwrap().is_empty());
        assert!(match_coincidences(&[100], &[75], 4000).unwrap().is_empty());
    }

    #[test]
    fn earliest_unmatched_candidate_wins() {
        // Both heralds see both B events; greedy hands them out in order.
        let pairs = match_coincidences(&[0, 100], &[200, 300], 4000).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        // Second herald is past the only B event it could use.
        let pairs = match_coincidences(&[0, 5000], &[100, 200], 4000).unwrap();
        assert_eq!(pairs, vec![(0, 0)]);
    }

    #[test]
    fn symmetric_window_accepts_early_b() {
        let pairs = match_coincidences_with(&[5000], &[2000], 4000, WindowKind::Symmetric).unwrap();
        assert_eq!(pairs, vec![(0, 0)]);
        let pairs = match_coincidences_with(&[5000], &[975], 4000, WindowKind::Symmetric).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn unsorted_streams_are_rejected() {
        assert!(matches!(match_coincidences(&[10, 5], &[], 4000), Err(Error::Contract(_))));
        assert!(matches!(match_coincidences(&[], &[10, 5], 4000), Err(Error::Contract(_))));
        assert!(matches!(match_coincidences(&[], &[], 0), Err(Error::Contract(_))));
    }

    #[test]
    fn grouping_examples() {
        let a: Vec<u64> = (0..150).map(|i| i * 1_000_000).collect();
        let all: Vec<(usize, usize)> = (0..150).map(|i| (i, i)).collect();
        assert_eq!(group_into_sets(&a, &all, 150).unwrap(), vec![150]);

        let a: Vec<u64> = (0..300).map(|i| i * 1_000_000).collect();
        assert_eq!(group_into_sets(&a, &[], 150).unwrap(), vec![0, 0]);

        assert!(group_into_sets(&a[..10], &[], 150).unwrap().is_empty());
        assert_eq!(group_into_sets(&a[..7], &[(1, 0), (4, 1)], 3).unwrap(), vec![1, 1]);
    }

    #[test]
    fn sets_per_bin_respects_bin_edges() {
        let a = vec![0, 10, 20, 30, 100, 110, 120];
        let pairs = vec![(0, 0), (2, 1), (4, 2), (5, 3), (6, 4)];
        let bins = sets_per_bin(&a, &pairs, 2, 100).unwrap();
        assert_eq!(bins, vec![vec![1, 1], vec![2]]);
    }

    #[test]
    fn simulated_streams_edge_cases() {
        let mut rng = substream(5, 0);
        let p = StreamParams {
            herald_rate: 5e4,
            transmission: 0.0,
            duration_s: 0.1,
            jitter_ps: 500,
            background_rate: 0.0,
            start_ps: 0,
        };
        let (a, b) = simulate_streams(&p, &mut rng).unwrap();
        assert!(!a.is_empty());
        assert!(b.is_empty());
        assert!(a.iter().all(|t| t % RESOLUTION_PS == 0));

        let p = StreamParams { transmission: 1.0, jitter_ps: 0, ..p };
        let (a, b) = simulate_streams(&p, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn timetag_csv_round_trip() {
        let ev = merge_streams(&[0, 100, 200], &[100, 150]);
        let channels: Vec<Channel> = ev.iter().map(|e| e.channel).collect();
        assert_eq!(channels, vec![Channel::A, Channel::A, Channel::B, Channel::B, Channel::A]);
        let mut buf = Vec::new();
        write_timetag_csv(&ev, &mut buf).unwrap();
        assert!(buf.starts_with(b"channel,timestamp_ps\n"));
        let back = read_timetag_csv(&buf[..]).unwrap();
        assert_eq!(back, ev);
        assert_eq!(split_streams(&back), (vec![0, 100, 200], vec![100, 150]));
    }

    #[test]
    fn timetag_csv_rejects_unsorted_and_bad_channels() {
        let text = "channel,timestamp_ps\nA,100\nB,50\n";
        assert!(matches!(read_timetag_csv(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let text = "channel,timestamp_ps\nC,100\n";
        assert!(matches!(read_timetag_csv(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
