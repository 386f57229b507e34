//! Photon-counting noise of the probe light and the resulting transmission
//! precision.
//!
//! A set of `nu` heralded single photons sent through a channel of
//! transmission `T` yields `Nt ~ Binomial(nu, T)` transmitted photons, so the
//! per-set estimate `Nt / nu` has spread `sqrt(T (1 - T) / nu)`. A coherent
//! probe with one photon per pulse on average gives `Nt ~ Poisson(nu T)` and
//! the shot-noise spread `sqrt(T / nu)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise law of the probe light.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeModel {
    HeraldedSinglePhoton,
    /// Weak coherent state, mean photon number exactly one per probe.
    CoherentUnitMean,
}

impl ProbeModel {
    pub const COHERENT_MEAN_PHOTONS: f64 = 1.0;

    /// Closed-form per-set spread of `Nt / nu` for this probe.
    pub fn precision(self, t: f64, nu: u64) -> Result<f64> {
        match self {
            ProbeModel::HeraldedSinglePhoton => dt_quantum(t, nu),
            ProbeModel::CoherentUnitMean => dt_classical(t, nu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Probes per set.
    pub nu: u64,
    /// Sets per time bin.
    pub mu: usize,
    /// Duration of one bin in seconds.
    pub bin_seconds: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan { nu: 150, mu: 2000, bin_seconds: 6.0 }
    }
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 || self.mu == 0 {
            return Err(Error::domain("sampling plan needs nu >= 1 and mu >= 1"));
        }
        if !(self.bin_seconds > 0.0) {
            return Err(Error::domain("bin duration must be > 0"));
        }
        Ok(())
    }
}

/// Mean and population spread of the per-set transmissions in one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetStatistics {
    pub mean_t: f64,
    pub std_t: f64,
    pub n_sets: usize,
}

fn check_transmission(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("transmission must lie in [0, 1], got {t}")));
    }
    Ok(())
}

/// Number of photons transmitted out of `nu` probes.
pub fn sample_transmitted<R: Rng + ?Sized>(t: f64, nu: u64, model: ProbeModel, rng: &mut R) -> Result<u64> {
    check_transmission(t)?;
    if nu == 0 {
        return Err(Error::domain("nu must be >= 1"));
    }
    if t == 0.0 {
        return Ok(0);
    }
    match model {
        ProbeModel::HeraldedSinglePhoton => {
            let dist = Binomial::new(nu, t).map_err(|e| Error::domain(e.to_string()))?;
            Ok(dist.sample(rng))
        }
        ProbeModel::CoherentUnitMean => {
            let lambda = nu as f64 * t * ProbeModel::COHERENT_MEAN_PHOTONS;
            let dist = Poisson::new(lambda).map_err(|e| Error::domain(e.to_string()))?;
            Ok(dist.sample(rng) as u64)
        }
    }
}

/// Heralded photons as `nu` independent Bernoulli trials. Same law as the
/// binomial branch of [`sample_transmitted`], one draw per photon.
pub fn sample_transmitted_per_photon<R: Rng + ?Sized>(t: f64, nu: u64, rng: &mut R) -> Result<u64> {
    check_transmission(t)?;
    if nu == 0 {
        return Err(Error::domain("nu must be >= 1"));
    }
    Ok((0..nu).filter(|_| rng.random::<f64>() < t).count() as u64)
}

/// `T_i = Nt / nu`. Coherent draws may exceed `nu`; the estimate is left
/// unclamped.
pub fn estimate_t(nt: u64, nu: u64) -> Result<f64> {
    if nu == 0 {
        return Err(Error::domain("nu must be >= 1"));
    }
    Ok(nt as f64 / nu as f64)
}

/// `mu` per-set transmission estimates for one bin.
pub fn sample_set_transmissions<R: Rng + ?Sized>(
    t: f64,
    plan: &SamplingPlan,
    model: ProbeModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    (0..plan.mu)
        .map(|_| sample_transmitted(t, plan.nu, model, rng).and_then(|n| estimate_t(n, plan.nu)))
        .collect()
}

/// Mean and `1/mu`-normalised standard deviation of the set estimates.
pub fn set_statistics(samples: &[f64]) -> Result<SetStatistics> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(SetStatistics { mean_t: mean, std_t: var.sqrt(), n_sets: samples.len() })
}

/// Single-photon precision `sqrt(T (1 - T) / nu)`.
pub fn dt_quantum(t: f64, nu: u64) -> Result<f64> {
    check_transmission(t)?;
    if nu == 0 {
        return Err(Error::domain("nu must be >= 1"));
    }
    Ok((t * (1.0 - t) / nu as f64).sqrt())
}

/// Shot-noise precision `sqrt(T / nu)`.
pub fn dt_classical(t: f64, nu: u64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("transmission must be >= 0, got {t}")));
    }
    if nu == 0 {
        return Err(Error::domain("nu must be >= 1"));
    }
    Ok((t / nu as f64).sqrt())
}

/// Ratio of shot-noise to single-photon precision, `1 / sqrt(1 - T)`.
pub fn enhancement(t: f64) -> Result<f64> {
    if t == 1.0 {
        return Err(Error::domain("enhancement diverges at T = 1"));
    }
    if !(0.0..1.0).contains(&t) {
        return Err(Error::domain(format!("transmission must lie in [0, 1), got {t}")));
    }
    Ok(1.0 / (1.0 - t).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn degenerate_transmissions() {
        let mut rng = substream(1, 0);
        for model in [ProbeModel::HeraldedSinglePhoton, ProbeModel::CoherentUnitMean] {
            for _ in 0..100 {
                assert_eq!(sample_transmitted(0.0, 150, model, &mut rng).unwrap(), 0);
            }
        }
        for _ in 0..100 {
            assert_eq!(
                sample_transmitted(1.0, 150, ProbeModel::HeraldedSinglePhoton, &mut rng).unwrap(),
                150
            );
        }
        assert!(sample_transmitted(1.2, 150, ProbeModel::HeraldedSinglePhoton, &mut rng).is_err());
        assert!(sample_transmitted(-0.1, 150, ProbeModel::CoherentUnitMean, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let draw = |seed| {
            let mut rng = substream(seed, 3);
            let plan = SamplingPlan { mu: 50, ..Default::default() };
            sample_set_transmissions(0.06, &plan, ProbeModel::HeraldedSinglePhoton, &mut rng).unwrap()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn estimate_t_examples() {
        assert_eq!(estimate_t(9, 150).unwrap(), 0.06);
        assert_eq!(estimate_t(0, 150).unwrap(), 0.0);
        assert_eq!(estimate_t(150, 150).unwrap(), 1.0);
        assert_eq!(estimate_t(160, 150).unwrap(), 160.0 / 150.0);
        assert!(estimate_t(1, 0).is_err());
    }

    #[test]
    fn set_statistics_examples() {
        let s = set_statistics(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((s.mean_t, s.std_t, s.n_sets), (0.5, 0.0, 3));
        let s = set_statistics(&[0.0, 1.0]).unwrap();
        assert_eq!((s.mean_t, s.std_t), (0.5, 0.5));
        assert!(set_statistics(&[]).is_err());
    }

    #[test]
    fn set_statistics_matches_binomial_law() {
        let mut rng = substream(2024, 0);
        let plan = SamplingPlan::default();
        let xs = sample_set_transmissions(0.06, &plan, ProbeModel::HeraldedSinglePhoton, &mut rng).unwrap();
        let s = set_statistics(&xs).unwrap();
        assert!((s.std_t / 0.0194 - 1.0).abs() < 0.05, "{}", s.std_t);
    }

    #[test]
    fn precision_formulas() {
        assert!((dt_quantum(0.06, 150).unwrap() - 0.019391).abs() < 5e-7);
        assert_eq!(dt_quantum(0.0, 150).unwrap(), 0.0);
        assert_eq!(dt_quantum(1.0, 150).unwrap(), 0.0);
        assert_eq!(dt_quantum(0.5, 1).unwrap(), 0.5);
        assert!((dt_classical(0.06, 150).unwrap() - 0.020000).abs() < 5e-7);
        assert_eq!(dt_classical(0.0, 150).unwrap(), 0.0);
        assert!((dt_classical(0.10, 150).unwrap() - 0.025820).abs() < 5e-7);
        assert!(dt_quantum(0.5, 0).is_err());
    }

    #[test]
    fn enhancement_examples() {
        assert_eq!(enhancement(0.0).unwrap(), 1.0);
        assert!((enhancement(0.10).unwrap() - 1.05409).abs() < 5e-6);
        assert_eq!(enhancement(0.75).unwrap(), 2.0);
        assert!(enhancement(1.0).is_err());
    }

    #[test]
    fn quantum_is_sub_shot_noise() {
        for i in 1..100 {
            let t = i as f64 / 100.0;
            for nu in [1, 10, 150, 1000] {
                assert!(dt_quantum(t, nu).unwrap() < dt_classical(t, nu).unwrap());
            }
        }
    }

    #[test]
    fn quadrupling_nu_halves_precision() {
        for t in [0.02, 0.06, 0.1, 0.5, 0.9] {
            for nu in [1, 37, 150] {
                let q = dt_quantum(t, 4 * nu).unwrap() / dt_quantum(t, nu).unwrap();
                let c = dt_classical(t, 4 * nu).unwrap() / dt_classical(t, nu).unwrap();
                assert!((q - 0.5).abs() < 1e-14);
                assert!((c - 0.5).abs() < 1e-14);
            }
        }
    }
}
