//! Bootstrap pipelines for the observable rate and the affinity chain.
//!
//! One repetition of the rate pipeline builds `m` noisy sensorgrams, averages
//! them, and fits the association curve to the average. In quantum mode each
//! noisy sensorgram takes, per bin, one stored set transmission `T_i` at
//! random; in classical mode it adds Gaussian shot noise of spread
//! `sqrt(<T> / nu)` to the bin mean. Repeating `p` times gives the sampling
//! distribution of the estimate.
//!
//! Repetition `r` draws from its own RNG stream, so the output is
//! bit-identical for a given seed whatever the thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::ExperimentDataset;
use super::linear::linear_fit;
use super::lm::{levenberg_marquardt, FitResult, LmOptions};
use crate::error::{Error, Result};
use crate::kinetics::{affinity_from_reciprocal_fit, association_curve, rates_from_affinity};
use crate::rng::{stream_id, substream};

const KS_STREAM_TAG: u16 = 0x6b73;
const AFFINITY_STREAM_TAG: u16 = 0x6b61;

/// Fraction of failed fits above which the rate pipeline warns.
pub const KS_FAILURE_WARN_FRACTION: f64 = 0.01;
/// Fraction of discarded repetitions above which the affinity pipeline warns.
pub const AFFINITY_DISCARD_WARN_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Resample the measured heralded-photon sets.
    Quantum,
    /// Gaussian shot-noise surrogate around the measured means.
    Classical,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::Quantum => "quantum",
            NoiseMode::Classical => "classical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Noisy sensorgrams averaged per repetition.
    pub m: usize,
    /// Repetitions.
    pub p: usize,
    pub rng_seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { m: 175, p: 15_000, rng_seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.p == 0 {
            return Err(Error::domain("bootstrap needs m >= 1 and p >= 1"));
        }
        Ok(())
    }

    /// Same settings, seed decorrelated for the `index`-th dataset of a
    /// family.
    pub fn for_dataset(&self, index: u64) -> Self {
        let mut z = self.rng_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        BootstrapConfig { rng_seed: z ^ (z >> 31), ..*self }
    }
}

/// Mean, sample standard deviation and count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// Welford accumulation; a constant sample yields exactly zero spread.
    pub fn of(values: &[f64]) -> Self {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (k, &v) in values.iter().enumerate() {
            let delta = v - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (v - mean);
        }
        let n = values.len();
        let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
        Summary { mean: if n == 0 { f64::NAN } else { mean }, std, n }
    }
}

/// One noisy sensorgram: per bin, a uniformly chosen stored `T_i`.
pub fn bootstrap_sensorgram<R: Rng + ?Sized>(dataset: &ExperimentDataset, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; dataset.len()];
    accumulate_bootstrap(dataset, None, rng, &mut out);
    out
}

fn accumulate_bootstrap<R: Rng + ?Sized>(
    dataset: &ExperimentDataset,
    only: Option<&[usize]>,
    rng: &mut R,
    acc: &mut [f64],
) {
    match only {
        None => {
            for (slot, bin) in acc.iter_mut().zip(&dataset.bins) {
                *slot += bin[rng.random_range(0..bin.len())];
            }
        }
        Some(idx) => {
            for (slot, &i) in acc.iter_mut().zip(idx) {
                let bin = &dataset.bins[i];
                *slot += bin[rng.random_range(0..bin.len())];
            }
        }
    }
}

/// One classical noisy sensorgram: `<T> + N(0, sqrt(<T> / nu))` per bin,
/// unclamped.
pub fn classical_surrogate_sensorgram<R: Rng + ?Sized>(means: &[f64], nu: u64, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; means.len()];
    let noise = shot_noise(means, nu)?;
    accumulate_classical(means, &noise, rng, &mut out);
    Ok(out)
}

fn shot_noise(means: &[f64], nu: u64) -> Result<Vec<Normal<f64>>> {
    if nu == 0 {
        return Err(Error::domain("nu must be >= 1"));
    }
    means
        .iter()
        .map(|&t| {
            if !(t >= 0.0) {
                return Err(Error::domain(format!("mean transmission must be >= 0, got {t}")));
            }
            Normal::new(0.0, (t / nu as f64).sqrt()).map_err(|e| Error::domain(e.to_string()))
        })
        .collect()
}

fn accumulate_classical<R: Rng + ?Sized>(means: &[f64], noise: &[Normal<f64>], rng: &mut R, acc: &mut [f64]) {
    for ((slot, &t), n) in acc.iter_mut().zip(means).zip(noise) {
        *slot += t + n.sample(rng);
    }
}

/// Source of noisy sensorgram draws for one dataset.
struct NoisySampler<'a> {
    dataset: &'a ExperimentDataset,
    mode: NoiseMode,
    /// Restrict to these bins (in this order); all bins if `None`.
    bins: Option<Vec<usize>>,
    means: Vec<f64>,
    noise: Vec<Normal<f64>>,
}

impl<'a> NoisySampler<'a> {
    fn new(dataset: &'a ExperimentDataset, mode: NoiseMode, bins: Option<Vec<usize>>) -> Result<Self> {
        let all = dataset.bin_means();
        let means: Vec<f64> = match &bins {
            Some(idx) => idx.iter().map(|&i| all[i]).collect(),
            None => all,
        };
        let noise = match mode {
            NoiseMode::Classical => shot_noise(&means, dataset.nu)?,
            NoiseMode::Quantum => Vec::new(),
        };
        Ok(NoisySampler { dataset, mode, bins, means, noise })
    }

    fn width(&self) -> usize {
        self.means.len()
    }

    /// Average of `m` noisy sensorgrams.
    fn mean_of<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<f64> {
        let mut acc = vec![0.0; self.width()];
        for _ in 0..m {
            match self.mode {
                NoiseMode::Quantum => accumulate_bootstrap(self.dataset, self.bins.as_deref(), rng, &mut acc),
                NoiseMode::Classical => accumulate_classical(&self.means, &self.noise, rng, &mut acc),
            }
        }
        let inv = 1.0 / m as f64;
        acc.iter_mut().for_each(|v| *v *= inv);
        acc
    }
}

/// Starting point for the association fit: baseline from the first bin,
/// amplitude from last minus first, rate from the half-rise time.
pub fn association_initial_guess(time: &[f64], values: &[f64]) -> [f64; 3] {
    let t0 = values[0];
    let last = *values.last().expect("non-empty");
    let span = time.last().expect("non-empty") - time[0];
    let mut amp = last - t0;
    if !(amp.abs() > 0.0) {
        amp = 1e-6;
    }
    let half = t0 + 0.5 * amp;
    let crossed = |v: f64| if amp > 0.0 { v >= half } else { v <= half };
    let t_half = values
        .iter()
        .position(|&v| crossed(v))
        .map(|k| {
            if k == 0 {
                time[0]
            } else {
                let (ta, tb, va, vb) = (time[k - 1], time[k], values[k - 1], values[k]);
                if vb == va { tb } else { ta + (half - va) / (vb - va) * (tb - ta) }
            }
        })
        .unwrap_or(time[0] + 0.5 * span)
        - time[0];
    let ks = if t_half > 0.0 { 1.0 / t_half } else { 2.0 / span.max(f64::MIN_POSITIVE) };
    [t0, amp, ks]
}

/// Analytic Jacobian of `T0 + Tinf (1 - exp(-ks t))` with respect to
/// `(T0, Tinf, ks)`.
pub fn association_jacobian(time: &[f64], params: &[f64]) -> DMatrix<f64> {
    let (t_inf, ks) = (params[1], params[2]);
    let mut j = DMatrix::zeros(time.len(), 3);
    for (i, &t) in time.iter().enumerate() {
        let e = (-ks * t).exp();
        j[(i, 0)] = 1.0;
        j[(i, 1)] = 1.0 - e;
        j[(i, 2)] = t_inf * t * e;
    }
    j
}

/// Unweighted least-squares fit of the association curve.
/// Parameters are `(T0, Tinf, ks)`.
pub fn fit_association(time: &[f64], values: &[f64], init: Option<[f64; 3]>, opts: &LmOptions) -> Result<FitResult> {
    if time.len() != values.len() {
        return Err(Error::domain("time and value lengths differ"));
    }
    if time.len() < 3 {
        return Err(Error::domain("association fit needs at least 3 bins"));
    }
    let init = init.unwrap_or_else(|| association_initial_guess(time, values));
    levenberg_marquardt(
        |p| {
            DVector::from_iterator(
                time.len(),
                time.iter().zip(values).map(|(&t, &y)| association_curve(t, p[0], p[1], p[2]) - y),
            )
        },
        |p| association_jacobian(time, p),
        &init,
        opts,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsEstimate {
    pub mode: NoiseMode,
    pub summary: Summary,
    /// Successful repetitions, in repetition order.
    pub distribution: Vec<f64>,
    pub failed: usize,
    pub attempted: usize,
}

/// Bootstrap distribution of the observable rate for one dataset.
pub fn estimate_ks(dataset: &ExperimentDataset, config: &BootstrapConfig, mode: NoiseMode) -> Result<KsEstimate> {
    config.validate()?;
    dataset.validate()?;
    if dataset.len() < 4 {
        return Err(Error::domain("rate estimation needs at least 4 bins"));
    }
    let sampler = NoisySampler::new(dataset, mode, None)?;
    let opts = LmOptions::default();
    let outcomes: Vec<Option<f64>> = (0..config.p)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(config.rng_seed, stream_id(KS_STREAM_TAG, 0, rep as u64));
            let mean = sampler.mean_of(config.m, &mut rng);
            fit_association(&dataset.time, &mean, None, &opts)
                .ok()
                .filter(|f| f.converged && f.params[2].is_finite())
                .map(|f| f.params[2])
        })
        .collect();
    let distribution: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let failed = config.p - distribution.len();
    if distribution.is_empty() {
        return Err(Error::Estimation(format!("all {} association fits failed", config.p)));
    }
    if failed as f64 > KS_FAILURE_WARN_FRACTION * config.p as f64 {
        log::warn!("{failed} of {} association fits did not converge ({} mode)", config.p, mode.as_str());
    }
    Ok(KsEstimate {
        mode,
        summary: Summary::of(&distribution),
        distribution,
        failed,
        attempted: config.p,
    })
}

/// How the steady-state amplitude entering the double-reciprocal plot is
/// read off a sensorgram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyStateReadout {
    /// Steady-state transmission minus the first-bin baseline.
    #[default]
    BaselineSubtracted,
    /// Raw steady-state transmission.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityConfig {
    pub bootstrap: BootstrapConfig,
    /// Centre of the steady-state readout window, s.
    pub steady_state_time: f64,
    /// Width of the readout window, s.
    pub steady_state_width: f64,
    pub readout: SteadyStateReadout,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        AffinityConfig {
            bootstrap: BootstrapConfig::default(),
            steady_state_time: 94.0,
            steady_state_width: 6.0,
            readout: SteadyStateReadout::BaselineSubtracted,
        }
    }
}

/// Rate samples from the rate pipeline together with the concentration they
/// were measured at.
#[derive(Debug, Clone, Copy)]
pub struct KsSamples<'a> {
    pub l0: f64,
    pub values: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityEstimate {
    pub mode: NoiseMode,
    pub affinity: Summary,
    pub kd: Summary,
    pub ka: Summary,
    pub discarded: usize,
    pub attempted: usize,
}

struct SteadyState<'a> {
    sampler: NoisySampler<'a>,
    baseline: f64,
    x: f64,
}

/// Bootstrap of the double-reciprocal affinity and the rates it implies.
///
/// Each repetition averages `m` noisy steady-state readouts per
/// concentration, fits `1/Tinf` against `1/L0`, inverts the line to `KA`,
/// pairs it with one rate drawn from `ks` and splits that rate into `kd`
/// and `ka`. Repetitions with a non-positive amplitude, slope or intercept
/// are discarded and counted.
pub fn estimate_affinity(
    datasets: &[ExperimentDataset],
    ks: KsSamples<'_>,
    config: &AffinityConfig,
    mode: NoiseMode,
) -> Result<AffinityEstimate> {
    config.bootstrap.validate()?;
    if datasets.len() < 3 {
        return Err(Error::domain("double-reciprocal fit needs at least 3 concentrations"));
    }
    if ks.values.is_empty() {
        return Err(Error::domain("no rate samples"));
    }
    if !(ks.l0 > 0.0) {
        return Err(Error::domain("rate samples need a positive concentration"));
    }
    let mut levels = Vec::with_capacity(datasets.len());
    for ds in datasets {
        ds.validate()?;
        if !(ds.l0 > 0.0) {
            return Err(Error::domain("every concentration must be > 0"));
        }
        let idx = ds.bins_near(config.steady_state_time, config.steady_state_width);
        if idx.is_empty() {
            return Err(Error::domain(format!(
                "dataset L0={:.4e} has no bin within the steady-state window around {} s",
                ds.l0, config.steady_state_time
            )));
        }
        let baseline = match config.readout {
            SteadyStateReadout::BaselineSubtracted => ds.bin_means()[0],
            SteadyStateReadout::Raw => 0.0,
        };
        levels.push(SteadyState { sampler: NoisySampler::new(ds, mode, Some(idx))?, baseline, x: 1.0 / ds.l0 });
    }

    let m = config.bootstrap.m;
    let outcomes: Vec<Option<(f64, f64, f64)>> = (0..config.bootstrap.p)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(config.bootstrap.rng_seed, stream_id(AFFINITY_STREAM_TAG, 0, rep as u64));
            let mut xs = Vec::with_capacity(levels.len());
            let mut ys = Vec::with_capacity(levels.len());
            for level in &levels {
                let readout = level.sampler.mean_of(m, &mut rng);
                let amplitude = readout.iter().sum::<f64>() / readout.len() as f64 - level.baseline;
                xs.push(level.x);
                ys.push(1.0 / amplitude);
            }
            let ks_draw = ks.values[rng.random_range(0..ks.values.len())];
            if ys.iter().any(|y| !(*y > 0.0) || !y.is_finite()) {
                return None;
            }
            let fit = linear_fit(&xs, &ys).ok()?;
            if !(fit.slope > 0.0 && fit.intercept > 0.0) {
                return None;
            }
            let (affinity, _alpha) = affinity_from_reciprocal_fit(fit.slope, fit.intercept).ok()?;
            let (kd, ka) = rates_from_affinity(ks_draw, affinity, ks.l0).ok()?;
            Some((affinity, kd, ka))
        })
        .collect();

    let kept: Vec<(f64, f64, f64)> = outcomes.into_iter().flatten().collect();
    let attempted = config.bootstrap.p;
    let discarded = attempted - kept.len();
    if kept.is_empty() {
        return Err(Error::Estimation(format!("all {attempted} affinity repetitions were discarded")));
    }
    if discarded as f64 > AFFINITY_DISCARD_WARN_FRACTION * attempted as f64 {
        log::warn!("{discarded} of {attempted} affinity repetitions discarded ({} mode)", mode.as_str());
    }
    let column = |f: fn(&(f64, f64, f64)) -> f64| Summary::of(&kept.iter().map(f).collect::<Vec<_>>());
    Ok(AffinityEstimate {
        mode,
        affinity: column(|r| r.0),
        kd: column(|r| r.1),
        ka: column(|r| r.2),
        discarded,
        attempted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_dataset(values: Vec<f64>) -> ExperimentDataset {
        ExperimentDataset { l0: 1e-5, nu: 150, time: vec![0.0, 6.0], bins: vec![values.clone(), values] }
    }

    #[test]
    fn single_set_bootstrap_returns_stored_values() {
        let ds = ExperimentDataset { l0: 1e-5, nu: 150, time: vec![0.0, 6.0], bins: vec![vec![0.06], vec![0.09]] };
        let mut rng = substream(3, 0);
        for _ in 0..10 {
            assert_eq!(bootstrap_sensorgram(&ds, &mut rng), vec![0.06, 0.09]);
        }
    }

    #[test]
    fn bootstrap_is_deterministic_per_stream() {
        let ds = flat_dataset((0..50).map(|k| k as f64 / 500.0).collect());
        let a = bootstrap_sensorgram(&ds, &mut substream(9, 4));
        let b = bootstrap_sensorgram(&ds, &mut substream(9, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn classical_surrogate_zero_mean_is_exact() {
        let mut rng = substream(1, 1);
        let s = classical_surrogate_sensorgram(&[0.0, 0.0], 150, &mut rng).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
        assert!(classical_surrogate_sensorgram(&[-0.1], 150, &mut rng).is_err());
    }

    #[test]
    fn summary_of_constant_sample_has_zero_spread() {
        let s = Summary::of(&[0.0413; 1000]);
        assert_eq!(s.mean, 0.0413);
        assert_eq!(s.std, 0.0);
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn initial_guess_is_reasonable() {
        let time: Vec<f64> = (0..17).map(|k| 6.0 * k as f64).collect();
        let values: Vec<f64> = time.iter().map(|&t| association_curve(t, 0.06, 0.04, 0.0413)).collect();
        let [t0, amp, ks] = association_initial_guess(&time, &values);
        assert_eq!(t0, 0.06);
        assert!((amp - 0.04).abs() < 0.002);
        assert!(ks > 0.01 && ks < 0.2, "{ks}");
    }

    #[test]
    fn dataset_seeds_are_decorrelated() {
        let c = BootstrapConfig { rng_seed: 42, ..Default::default() };
        assert_ne!(c.for_dataset(0).rng_seed, c.for_dataset(1).rng_seed);
        assert_eq!(c.for_dataset(3), c.for_dataset(3));
    }
}
