//! Receptor-ligand association model.
//!
//! During association the sensor transmission follows a saturating
//! exponential `T(t) = T0 + Tinf (1 - exp(-ks t))` where the observable rate
//! is `ks = ka [L0] + kd`. The affinity `KA = ka / kd` is recovered from a
//! double-reciprocal plot of the steady-state amplitude against `1/[L0]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensorgram::Sensorgram;

const CONSISTENCY_RTOL: f64 = 1e-9;

/// Ground-truth or estimated kinetic constants for one ligand concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    /// Association rate, M^-1 s^-1.
    pub ka: f64,
    /// Dissociation rate, s^-1.
    pub kd: f64,
    /// Affinity `ka / kd`, M^-1.
    pub affinity: f64,
    /// Ligand concentration in the sensing cavity, mol/L.
    pub l0: f64,
    /// Observable rate, s^-1.
    pub ks: f64,
    /// Steady-state rise of the transmission above baseline.
    pub t_inf: f64,
}

impl KineticParams {
    pub fn from_rates(ka: f64, kd: f64, l0: f64, t_inf: f64) -> Result<Self> {
        let ks = observable_rate(ka, l0, kd)?;
        let affinity = if kd > 0.0 { ka / kd } else { f64::INFINITY };
        let p = KineticParams { ka, kd, affinity, l0, ks, t_inf };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from `(KA, kd)`, the natural pair when the affinity
    /// comes from a double-reciprocal plot.
    pub fn from_affinity(affinity: f64, kd: f64, l0: f64, t_inf: f64) -> Result<Self> {
        if !(affinity >= 0.0) {
            return Err(Error::domain(format!("affinity must be non-negative, got {affinity}")));
        }
        Self::from_rates(affinity * kd, kd, l0, t_inf)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("ka", self.ka), ("kd", self.kd), ("l0", self.l0)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.t_inf) {
            return Err(Error::domain(format!("t_inf must lie in [0, 1], got {}", self.t_inf)));
        }
        let expected_ks = self.ka * self.l0 + self.kd;
        if !close(self.ks, expected_ks) {
            return Err(Error::domain(format!(
                "ks = {} inconsistent with ka*L0 + kd = {expected_ks}",
                self.ks
            )));
        }
        if self.kd > 0.0 && !close(self.affinity, self.ka / self.kd) {
            return Err(Error::domain(format!(
                "affinity {} inconsistent with ka/kd = {}",
                self.affinity,
                self.ka / self.kd
            )));
        }
        Ok(())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSISTENCY_RTOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// How a ligand sample was prepared and injected into the sensing cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecipe {
    /// Dry powder mass, g.
    pub dry_mass: f64,
    /// g/mol.
    pub molar_mass: f64,
    /// Volume the powder is dissolved in, L.
    pub solvent_volume: f64,
    /// Volume of solution injected, L.
    pub injected_volume: f64,
    /// Buffer volume already in the cavity, L.
    pub cavity_volume: f64,
}

impl InjectionRecipe {
    pub fn validate(&self) -> Result<()> {
        // dry_mass = 0 is a legitimate blank injection.
        if !(self.dry_mass >= 0.0) {
            return Err(Error::domain(format!("dry mass must be >= 0, got {}", self.dry_mass)));
        }
        for (name, v) in [
            ("molar_mass", self.molar_mass),
            ("solvent_volume", self.solvent_volume),
            ("injected_volume", self.injected_volume),
            ("cavity_volume", self.cavity_volume),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.injected_volume > self.solvent_volume {
            return Err(Error::domain("injected volume exceeds the prepared solution volume"));
        }
        Ok(())
    }
}

/// `ks = ka L0 + kd`.
pub fn observable_rate(ka: f64, l0: f64, kd: f64) -> Result<f64> {
    if !(ka >= 0.0 && l0 >= 0.0 && kd >= 0.0) {
        return Err(Error::domain(format!(
            "rates and concentration must be >= 0 (ka={ka}, L0={l0}, kd={kd})"
        )));
    }
    Ok(ka * l0 + kd)
}

/// Association curve with a baseline offset.
pub fn model_transmission(t: f64, t_inf: f64, ks: f64, t0: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    if !(ks >= 0.0) {
        return Err(Error::domain(format!("ks must be >= 0, got {ks}")));
    }
    if !(t0 >= 0.0 && t_inf >= 0.0 && t0 + t_inf <= 1.0) {
        return Err(Error::domain(format!(
            "transmissions out of range (T0={t0}, Tinf={t_inf})"
        )));
    }
    Ok(association_curve(t, t0, t_inf, ks))
}

/// Unchecked form of [`model_transmission`], also used as the fit model.
#[inline]
pub fn association_curve(t: f64, t0: f64, t_inf: f64, ks: f64) -> f64 {
    t0 + t_inf * -(-ks * t).exp_m1()
}

/// Noise-free sensorgram sampled on `time_grid`.
pub fn generate_sensorgram(params: &KineticParams, t0: f64, time_grid: &[f64]) -> Result<Sensorgram> {
    if time_grid.is_empty() {
        return Err(Error::domain("time grid is empty"));
    }
    if time_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("time grid must be strictly increasing"));
    }
    let mean = time_grid
        .iter()
        .map(|&t| model_transmission(t, params.t_inf, params.ks, t0))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sensorgram {
        time: time_grid.to_vec(),
        std: vec![0.0; mean.len()],
        mean,
    })
}

/// Ligand concentration in the cavity after injecting the prepared solution.
pub fn cavity_concentration(recipe: &InjectionRecipe) -> Result<f64> {
    recipe.validate()?;
    let stock = recipe.dry_mass / (recipe.molar_mass * recipe.solvent_volume);
    Ok(stock * recipe.injected_volume / (recipe.injected_volume + recipe.cavity_volume))
}

/// Inverts the double-reciprocal line `1/Tinf = (alpha/KA)(1/L0) + alpha`.
///
/// Returns `(KA, alpha)`.
pub fn affinity_from_reciprocal_fit(slope: f64, intercept: f64) -> Result<(f64, f64)> {
    if slope == 0.0 || intercept == 0.0 || !slope.is_finite() || !intercept.is_finite() {
        return Err(Error::DegenerateFit(format!(
            "cannot invert reciprocal line with slope={slope}, intercept={intercept}"
        )));
    }
    Ok((intercept / slope, intercept))
}

/// Splits an observable rate into `(kd, ka)` given the affinity.
pub fn rates_from_affinity(ks: f64, affinity: f64, l0: f64) -> Result<(f64, f64)> {
    if !(ks > 0.0 && affinity > 0.0 && l0 > 0.0) {
        return Err(Error::domain(format!(
            "ks, KA and L0 must be > 0 (ks={ks}, KA={affinity}, L0={l0})"
        )));
    }
    let kd = ks / (affinity * l0 + 1.0);
    Ok((kd, affinity * kd))
}

/// Steady-state amplitude of a single-site Langmuir isotherm, the curve the
/// double-reciprocal plot linearises: `Tinf = Tsat KA L0 / (1 + KA L0)`.
pub fn langmuir_amplitude(saturation: f64, affinity: f64, l0: f64) -> f64 {
    let x = affinity * l0;
    saturation * x / (1.0 + x)
}
