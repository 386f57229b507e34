//! Kretschmann-geometry plasmonic sensor optics.
//!
//! p-polarised light inside a high-index prism hits a stack of thin films
//! (adhesion layer, gold) backed by the analyte. Reflectance is computed
//! with the characteristic-matrix method. Past the critical angle the
//! stack reflects almost everything except near the plasmon resonance,
//! where a dip appears. The sensor is parked on the low-angle flank of that
//! dip, where reflectance responds steeply to the analyte index.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One thin film.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub permittivity: Complex64,
    pub thickness_nm: f64,
}

/// Prism | films... | analyte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub prism_index: f64,
    pub layers: Vec<Layer>,
    /// `n_a = sqrt(eps_a)` of the semi-infinite medium above the films.
    pub analyte_index: f64,
    pub wavelength_nm: f64,
}

impl LayerStack {
    /// Physical sanity of the stack. Reflectance is defined for any positive
    /// indices; the resonance search additionally needs
    /// [`validate_kretschmann`](Self::validate_kretschmann).
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_nm > 0.0) {
            return Err(Error::domain("wavelength must be > 0"));
        }
        if !(self.analyte_index > 0.0) || !(self.prism_index > 0.0) {
            return Err(Error::domain("refractive indices must be > 0"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if !(l.thickness_nm > 0.0) {
                return Err(Error::domain(format!("layer {i} thickness must be > 0")));
            }
            if !l.permittivity.re.is_finite() || !l.permittivity.im.is_finite() {
                return Err(Error::domain(format!("layer {i} permittivity is not finite")));
            }
        }
        Ok(())
    }

    /// Total-internal-reflection geometry: the prism is optically denser
    /// than the analyte.
    pub fn validate_kretschmann(&self) -> Result<()> {
        self.validate()?;
        if !(self.prism_index > self.analyte_index) {
            return Err(Error::domain(format!(
                "need prism index > analyte index (prism {}, analyte {})",
                self.prism_index, self.analyte_index
            )));
        }
        Ok(())
    }

    pub fn with_analyte_index(&self, analyte_index: f64) -> Self {
        LayerStack { analyte_index, ..self.clone() }
    }

    /// Internal angle beyond which the bare prism/analyte interface totally
    /// reflects.
    pub fn critical_angle(&self) -> f64 {
        (self.analyte_index / self.prism_index).asin()
    }
}

/// Normal wavevector component `sqrt(eps - (n_p sin theta)^2)` (in units of
/// the vacuum wavenumber) on the decaying/absorbing branch.
pub(crate) fn normal_component(eps: Complex64, in_plane_sq: f64) -> Complex64 {
    let mut q = (eps - in_plane_sq).sqrt();
    if q.im < 0.0 || (q.im == 0.0 && q.re < 0.0) {
        q = -q;
    }
    q
}

/// p-polarised reflectance `|r_p|^2` at internal incidence angle `theta`.
pub fn reflectance(stack: &LayerStack, theta: f64) -> Result<f64> {
    if !(0.0..FRAC_PI_2).contains(&theta) {
        return Err(Error::domain(format!("incidence angle must lie in [0, pi/2), got {theta}")));
    }
    stack.validate()?;
    Ok(reflectance_unchecked(stack, theta))
}

fn reflectance_unchecked(stack: &LayerStack, theta: f64) -> f64 {
    let k0 = 2.0 * std::f64::consts::PI / stack.wavelength_nm;
    let kx2 = (stack.prism_index * theta.sin()).powi(2);
    // p-wave admittance of a medium: kz / eps.
    let admittance = |eps: Complex64| normal_component(eps, kx2) / eps;

    let eps_in = Complex64::new(stack.prism_index * stack.prism_index, 0.0);
    let eps_out = Complex64::new(stack.analyte_index * stack.analyte_index, 0.0);
    let y_in = admittance(eps_in);
    let y_out = admittance(eps_out);

    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let i = Complex64::i();
    let (mut m11, mut m12, mut m21, mut m22) = (one, zero, zero, one);
    for layer in &stack.layers {
        let kz = normal_component(layer.permittivity, kx2);
        let y = kz / layer.permittivity;
        let phase = kz * k0 * layer.thickness_nm;
        let (c, s) = (phase.cos(), phase.sin());
        let (l11, l12, l21, l22) = (c, -i * s / y, -i * y * s, c);
        (m11, m12, m21, m22) = (
            m11 * l11 + m12 * l21,
            m11 * l12 + m12 * l22,
            m21 * l11 + m22 * l21,
            m21 * l12 + m22 * l22,
        );
    }
    let b = m11 + m12 * y_out;
    let c = m21 + m22 * y_out;
    let r = (b * y_in - c) / (b * y_in + c);
    r.norm_sqr()
}

const GRID_POINTS: usize = 4000;
const GOLDEN_TOL: f64 = 1e-13;

fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > GOLDEN_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Coarse grid over `(lo, hi)` exclusive of the endpoints; returns the angles.
fn angle_grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (GRID_POINTS + 1) as f64;
    (1..=GRID_POINTS).map(move |k| lo + k as f64 * step)
}

/// Angle of minimum reflectance between the critical angle and grazing
/// incidence.
pub fn find_resonance_angle(stack: &LayerStack) -> Result<f64> {
    stack.validate_kretschmann()?;
    let lo = stack.critical_angle();
    let hi = FRAC_PI_2;
    let grid: Vec<(f64, f64)> = angle_grid(lo, hi).map(|th| (th, reflectance_unchecked(stack, th))).collect();
    let (k_min, &(_, r_min)) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("grid is non-empty");
    let r_max = grid.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    // Flat or monotone curves have no interior dip.
    if r_max - r_min < 1e-9 || k_min == 0 || k_min == grid.len() - 1 {
        return Err(Error::NoResonance);
    }
    let theta = golden_section_min(
        |th| reflectance_unchecked(stack, th),
        grid[k_min - 1].0,
        grid[k_min + 1].0,
    );
    Ok(theta)
}

/// Reflectance plateau on the low-angle flank of the dip: the maximum of
/// `R` between the critical angle and the resonance. Returns `(theta, R)`.
pub fn off_resonance_plateau(stack: &LayerStack, theta_min: f64) -> Result<(f64, f64)> {
    stack.validate_kretschmann()?;
    let lo = stack.critical_angle();
    if !(theta_min > lo && theta_min < FRAC_PI_2) {
        return Err(Error::domain("resonance angle must lie above the critical angle"));
    }
    let grid: Vec<(f64, f64)> = angle_grid(lo, theta_min).map(|th| (th, reflectance_unchecked(stack, th))).collect();
    let (k, _) = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("grid is non-empty");
    let a = if k == 0 { lo } else { grid[k - 1].0 };
    let b = if k + 1 == grid.len() { theta_min } else { grid[k + 1].0 };
    let theta = golden_section_min(|th| -reflectance_unchecked(stack, th), a, b);
    Ok((theta, reflectance_unchecked(stack, theta)))
}

/// Operating angle on the low-angle flank where reflectance has dropped by
/// `drop_fraction` from the off-resonance plateau.
///
/// Bisects between the plateau peak and the resonance, on which interval `R`
/// decreases monotonically.
pub fn operating_point(stack: &LayerStack, drop_fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::domain(format!("drop fraction must lie in [0, 1), got {drop_fraction}")));
    }
    let theta_min = find_resonance_angle(stack)?;
    let (theta_peak, r_off) = off_resonance_plateau(stack, theta_min)?;
    let target = (1.0 - drop_fraction) * r_off;
    if drop_fraction == 0.0 {
        return Ok(theta_peak);
    }
    let r_dip = reflectance_unchecked(stack, theta_min);
    if target < r_dip {
        return Err(Error::domain(format!(
            "a {drop_fraction} drop needs R = {target:.6} but the dip bottoms out at {r_dip:.6}"
        )));
    }
    let (mut lo, mut hi) = (theta_peak, theta_min);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reflectance_unchecked(stack, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Multiplicative transmission losses of the optical path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBudget {
    /// Bulk glass absorption through the prism.
    pub prism_bulk: f64,
    /// Fresnel losses at the prism entry and exit faces.
    pub prism_surfaces: f64,
    /// Detector efficiency times fibre coupling.
    pub detector_and_coupling: f64,
    /// Unattributed residual (film roughness, oil interfaces).
    #[serde(default = "one")]
    pub residual: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for EfficiencyBudget {
    fn default() -> Self {
        EfficiencyBudget { prism_bulk: 1.0, prism_surfaces: 1.0, detector_and_coupling: 1.0, residual: 1.0 }
    }
}

impl EfficiencyBudget {
    /// The measured N-BK7 prism setup: 71% bulk, 64% combined with the faces,
    /// 20% detection and coupling, and a residual factor bringing the
    /// off-resonance transmission down to the observed 10%.
    pub fn bk7_prism_setup() -> Self {
        let prism_bulk = 0.71;
        let prism_surfaces = 0.64 / prism_bulk;
        let detector_and_coupling = 0.2;
        EfficiencyBudget {
            prism_bulk,
            prism_surfaces,
            detector_and_coupling,
            residual: 0.10 / (0.64 * 0.2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("prism_bulk", self.prism_bulk),
            ("prism_surfaces", self.prism_surfaces),
            ("detector_and_coupling", self.detector_and_coupling),
            ("residual", self.residual),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.prism_bulk * self.prism_surfaces * self.detector_and_coupling * self.residual
    }
}

pub fn system_transmission(r: f64, budget: &EfficiencyBudget) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::domain(format!("reflectance must lie in [0, 1], got {r}")));
    }
    budget.validate()?;
    Ok(r * budget.total())
}

/// Linear refractive-index response to the bound fraction of the surface.
pub fn analyte_index_trajectory(fraction_bound: f64, n_buffer: f64, delta_n_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fraction_bound) {
        return Err(Error::domain(format!("bound fraction must lie in [0, 1], got {fraction_bound}")));
    }
    if !(n_buffer > 0.0) || !(delta_n_max >= 0.0) {
        return Err(Error::domain("need n_buffer > 0 and delta_n_max >= 0"));
    }
    Ok(n_buffer + fraction_bound * delta_n_max)
}

/// A sensor parked at a fixed operating angle: maps analyte index to
/// detected transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub stack: LayerStack,
    pub theta_op: f64,
    pub budget: EfficiencyBudget,
}

impl SensorModel {
    pub fn new(stack: LayerStack, drop_fraction: f64, budget: EfficiencyBudget) -> Result<Self> {
        budget.validate()?;
        let theta_op = operating_point(&stack, drop_fraction)?;
        Ok(SensorModel { stack, theta_op, budget })
    }

    pub fn transmission(&self, analyte_index: f64) -> Result<f64> {
        let r = reflectance(&self.stack.with_analyte_index(analyte_index), self.theta_op)?;
        system_transmission(r.min(1.0), &self.budget)
    }
}

/// `theta_rad,R` rows for an angle sweep.
pub fn write_sweep_csv<W: std::io::Write>(stack: &LayerStack, angles: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta_rad", "R"]).map_err(crate::sensorgram::csv_err)?;
    for &th in angles {
        let r = reflectance(stack, th)?;
        w.write_record(&[th.to_string(), r.to_string()]).map_err(crate::sensorgram::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare(n1: f64, n2: f64) -> LayerStack {
        LayerStack { prism_index: n1, layers: vec![], analyte_index: n2, wavelength_nm: 810.0 }
    }

    fn gold_stack() -> LayerStack {
        LayerStack {
            prism_index: 1.5108,
            layers: vec![Layer { permittivity: Complex64::new(-26.0, 1.5), thickness_nm: 50.0 }],
            analyte_index: 1.329,
            wavelength_nm: 810.0,
        }
    }

    #[test]
    fn normal_incidence_fresnel() {
        for (n1, n2) in [(1.0, 1.5), (1.5, 1.0)] {
            let r = reflectance(&bare(n1, n2), 0.0).unwrap();
            assert!((r - 0.04).abs() < 1e-14, "{r}");
        }
    }

    #[test]
    fn lossless_total_internal_reflection() {
        let s = bare(1.5, 1.33);
        let crit = s.critical_angle();
        for k in 1..50 {
            let th = crit + (FRAC_PI_2 - crit) * k as f64 / 50.0;
            assert!((reflectance(&s, th).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs() {
        let mut s = gold_stack();
        assert!(reflectance(&s, FRAC_PI_2).is_err());
        s.layers[0].permittivity = Complex64::new(f64::NAN, 0.0);
        assert!(reflectance(&s, 1.0).is_err());
        assert!(bare(1.3, 1.5).validate_kretschmann().is_err());
        assert!(find_resonance_angle(&bare(1.3, 1.5)).is_err());
    }

    #[test]
    fn no_resonance_without_film() {
        assert!(matches!(find_resonance_angle(&bare(1.5, 1.33)), Err(Error::NoResonance)));
    }

    #[test]
    fn gold_film_resonance_and_operating_point() {
        let s = gold_stack();
        let th = find_resonance_angle(&s).unwrap();
        assert!(th > s.critical_angle());
        let r_min = reflectance(&s, th).unwrap();
        assert!(r_min < 0.2, "{r_min}");

        let (th_peak, r_off) = off_resonance_plateau(&s, th).unwrap();
        assert!(th_peak < th);
        let th0 = operating_point(&s, 0.0).unwrap();
        assert_eq!(th0, th_peak);

        let op = operating_point(&s, 0.4).unwrap();
        let ratio = reflectance(&s, op).unwrap() / r_off;
        assert!((ratio - 0.6).abs() < 1e-9, "{ratio}");
        assert!(op > th_peak && op < th);

        assert!(operating_point(&s, 0.9999).is_err());
        assert!(operating_point(&s, 1.0).is_err());
    }

    #[test]
    fn budget_examples() {
        let b = EfficiencyBudget::bk7_prism_setup();
        let no_residual = EfficiencyBudget { residual: 1.0, ..b };
        assert!((system_transmission(1.0, &no_residual).unwrap() - 0.128).abs() < 1e-12);
        assert!((system_transmission(1.0, &b).unwrap() - 0.10).abs() < 1e-12);
        assert_eq!(system_transmission(0.0, &b).unwrap(), 0.0);
        assert_eq!(system_transmission(0.37, &EfficiencyBudget::default()).unwrap(), 0.37);
        assert!(system_transmission(1.1, &b).is_err());
        assert!(EfficiencyBudget { prism_bulk: 0.0, ..b }.validate().is_err());
    }

    #[test]
    fn index_trajectory() {
        assert_eq!(analyte_index_trajectory(0.0, 1.329, 0.01).unwrap(), 1.329);
        assert_eq!(analyte_index_trajectory(1.0, 1.329, 0.01).unwrap(), 1.329 + 0.01);
        assert!(analyte_index_trajectory(1.5, 1.329, 0.01).is_err());
    }

    #[test]
    fn sweep_csv_header() {
        let mut buf = Vec::new();
        write_sweep_csv(&gold_stack(), &[1.0, 1.1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("theta_rad,R\n"));
    }
}
