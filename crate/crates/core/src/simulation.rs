//! Synthetic experiments: noiseless transmission curves turned into
//! per-bin set transmissions, either by direct photon-count sampling or by
//! simulating and matching time-tag streams.
//!
//! Bin `k` of dataset `d` draws from its own RNG stream, so datasets are
//! reproducible from the seed alone and independent of evaluation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::dataset::ExperimentDataset;
use crate::kinetics::{association_curve, KineticParams};
use crate::photon_stats::{sample_set_transmissions, ProbeModel, SamplingPlan};
use crate::rng::{stream_id, substream};
use crate::spr_optics::{analyte_index_trajectory, SensorModel};
use crate::timetag::{match_coincidences_with, sets_per_bin, simulate_streams, CoincidenceConfig, StreamParams};

const DIRECT_STREAM_TAG: u16 = 0x7364;
const TIMETAG_STREAM_TAG: u16 = 0x7374;
const PS_PER_S: f64 = 1e12;

/// Maps the bound fraction of the surface to detected transmission.
#[derive(Debug, Clone, PartialEq)]
pub enum TransmissionPath {
    /// `T = baseline + saturation * fraction`.
    Direct { baseline: f64, saturation: f64 },
    /// Analyte index `n_buffer + delta_n_max * fraction` read through a
    /// sensor parked at its operating angle.
    Stack { sensor: Box<SensorModel>, n_buffer: f64, delta_n_max: f64 },
}

impl TransmissionPath {
    pub fn transmission(&self, fraction_bound: f64) -> Result<f64> {
        match self {
            TransmissionPath::Direct { baseline, saturation } => {
                if !(0.0..=1.0).contains(&fraction_bound) {
                    return Err(Error::domain(format!("bound fraction must lie in [0, 1], got {fraction_bound}")));
                }
                let t = baseline + saturation * fraction_bound;
                if !(*baseline >= 0.0 && *saturation >= 0.0 && t <= 1.0) {
                    return Err(Error::domain(format!("transmission {t} outside [0, 1]")));
                }
                Ok(t)
            }
            TransmissionPath::Stack { sensor, n_buffer, delta_n_max } => {
                sensor.transmission(analyte_index_trajectory(fraction_bound, *n_buffer, *delta_n_max)?)
            }
        }
    }
}

/// Bound fraction over time after injection at `t = 0`, starting from an
/// empty surface: `KA L0 / (1 + KA L0) * (1 - exp(-ks t))`.
pub fn bound_fraction(params: &KineticParams, t: f64) -> f64 {
    let x = params.affinity * params.l0;
    association_curve(t, 0.0, x / (1.0 + x), params.ks)
}

/// Bin start times `k * bin` with `k * bin < duration`.
pub fn bin_grid(duration_s: f64, bin_s: f64) -> Result<Vec<f64>> {
    if !(duration_s >= 0.0) || !(bin_s > 0.0) {
        return Err(Error::domain("need duration >= 0 and bin width > 0"));
    }
    let n = (duration_s / bin_s).ceil() as usize;
    Ok((0..n).map(|k| k as f64 * bin_s).filter(|&t| t < duration_s).collect())
}

/// Noiseless transmission at each grid time.
pub fn transmission_curve(params: &KineticParams, path: &TransmissionPath, time: &[f64]) -> Result<Vec<f64>> {
    time.iter().map(|&t| path.transmission(bound_fraction(params, t))).collect()
}

/// Samples `plan.mu` sets of `plan.nu` probes for every bin of `curve`.
pub fn simulate_dataset(
    time: &[f64],
    curve: &[f64],
    l0: f64,
    plan: &SamplingPlan,
    model: ProbeModel,
    seed: u64,
    dataset_index: u32,
) -> Result<ExperimentDataset> {
    plan.validate()?;
    if time.len() != curve.len() {
        return Err(Error::domain("time and curve lengths differ"));
    }
    let bins = curve
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut rng = substream(seed, stream_id(DIRECT_STREAM_TAG, dataset_index, k as u64));
            sample_set_transmissions(t, plan, model, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentDataset { l0, nu: plan.nu, time: time.to_vec(), bins })
}

/// Source settings for the time-tag path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimetagSource {
    pub herald_rate: f64,
    pub jitter_ps: u64,
    #[serde(default)]
    pub background_rate: f64,
    #[serde(default)]
    pub coincidence: CoincidenceConfig,
}

/// Raw streams and the dataset recovered from them.
#[derive(Debug, Clone, PartialEq)]
pub struct TimetagRun {
    pub stream_a: Vec<u64>,
    pub stream_b: Vec<u64>,
    pub dataset: ExperimentDataset,
}

/// Simulates herald and probe streams bin by bin (transmission held at the
/// bin-start value), matches them, and keeps the first `mu_cap` complete
/// sets of each bin.
#[allow(clippy::too_many_arguments)]
pub fn simulate_timetag_dataset(
    time: &[f64],
    curve: &[f64],
    bin_s: f64,
    l0: f64,
    source: &TimetagSource,
    mu_cap: usize,
    seed: u64,
    dataset_index: u32,
) -> Result<TimetagRun> {
    if time.len() != curve.len() {
        return Err(Error::domain("time and curve lengths differ"));
    }
    let bin_ps = (bin_s * PS_PER_S).round() as u64;
    if bin_ps == 0 {
        return Err(Error::domain("bin width must be > 0"));
    }
    let per_bin = curve
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut rng = substream(seed, stream_id(TIMETAG_STREAM_TAG, dataset_index, k as u64));
            simulate_streams(
                &StreamParams {
                    herald_rate: source.herald_rate,
                    transmission: t,
                    duration_s: bin_s,
                    jitter_ps: source.jitter_ps,
                    background_rate: source.background_rate,
                    start_ps: k as u64 * bin_ps,
                },
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stream_a = Vec::new();
    let mut stream_b = Vec::new();
    for (a, b) in per_bin {
        stream_a.extend(a);
        stream_b.extend(b);
    }
    // Delays can carry a probe event past the next bin's first herald.
    stream_b.sort_unstable();
    let mut dataset = dataset_from_streams(&stream_a, &stream_b, bin_s, l0, &source.coincidence, Some(mu_cap))?;
    dataset.time.truncate(time.len());
    dataset.bins.truncate(time.len());
    Ok(TimetagRun { stream_a, stream_b, dataset })
}

/// Matches the streams and converts each bin's complete sets to `T_i`.
/// Bin `k` covers `[k bin, (k + 1) bin)` of herald time and is stamped
/// with its start. With `mu_cap`, only the first sets of each bin are kept.
pub fn dataset_from_streams(
    stream_a: &[u64],
    stream_b: &[u64],
    bin_s: f64,
    l0: f64,
    coincidence: &CoincidenceConfig,
    mu_cap: Option<usize>,
) -> Result<ExperimentDataset> {
    let bin_ps = (bin_s * PS_PER_S).round() as u64;
    let pairs = match_coincidences_with(stream_a, stream_b, coincidence.window_ps, coincidence.kind)?;
    let counts = sets_per_bin(stream_a, &pairs, coincidence.nu, bin_ps)?;
    let nu = coincidence.nu as f64;
    let mut dataset = ExperimentDataset { l0, nu: coincidence.nu, time: Vec::new(), bins: Vec::new() };
    for (k, sets) in counts.into_iter().enumerate() {
        if sets.is_empty() {
            return Err(Error::domain(format!(
                "bin {k} holds fewer than nu = {} heralds; raise the herald rate or the bin width",
                coincidence.nu
            )));
        }
        let keep = mu_cap.map_or(sets.len(), |cap| cap.min(sets.len()));
        if keep < sets.len() || mu_cap.is_some_and(|cap| cap > sets.len()) {
            log::debug!("bin {k}: {} complete sets, keeping {keep}", sets.len());
        }
        dataset.time.push(k as f64 * bin_s);
        dataset.bins.push(sets[..keep].iter().map(|&c| c as f64 / nu).collect());
    }
    Ok(dataset)
}
