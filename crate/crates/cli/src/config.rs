//! Run configuration: a TOML file of dotted sections.
//!
//! Every field has a default, so an empty file describes the reference
//! experiment: four BSA injections, heralded single-photon probes, sets of
//! 150 heralds, 2000 sets per 6 s bin, 100 s of association.

use std::path::Path;

use num_complex::Complex64;
use qsens_core::estimation::{AffinityConfig, BootstrapConfig, NoiseMode, SteadyStateReadout};
use qsens_core::kinetics::{cavity_concentration, InjectionRecipe, KineticParams};
use qsens_core::photon_stats::{ProbeModel, SamplingPlan};
use qsens_core::simulation::{TimetagSource, TransmissionPath};
use qsens_core::spr_optics::{EfficiencyBudget, Layer, LayerStack, SensorModel};
use qsens_core::timetag::{CoincidenceConfig, WindowKind, DEFAULT_WINDOW_PS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub transmission: TransmissionSection,
    #[serde(default)]
    pub kinetics: KineticsSection,
    #[serde(default)]
    pub chemistry: ChemistrySection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub timetag: TimetagSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub model: ProbeModel,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { model: ProbeModel::HeraldedSinglePhoton }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub nu: u64,
    pub mu: usize,
    pub bin_seconds: f64,
    pub duration_s: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let plan = SamplingPlan::default();
        SamplingSection { nu: plan.nu, mu: plan.mu, bin_seconds: plan.bin_seconds, duration_s: 100.0 }
    }
}

impl SamplingSection {
    pub fn plan(&self) -> SamplingPlan {
        SamplingPlan { nu: self.nu, mu: self.mu, bin_seconds: self.bin_seconds }
    }
}

/// Exactly one transmission path is active, selected by `mode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransmissionSection {
    /// `T = baseline + saturation * bound_fraction`.
    Direct { baseline: f64, saturation: f64 },
    Stack(StackSection),
}

impl Default for TransmissionSection {
    fn default() -> Self {
        // Steady state of the highest concentration sits 0.04 above baseline.
        TransmissionSection::Direct { baseline: 0.06, saturation: 0.0528 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSection {
    pub prism_index: f64,
    pub wavelength_nm: f64,
    /// Buffer index above the films before injection.
    pub buffer_index: f64,
    pub layers: Vec<LayerSection>,
    /// Reflectance drop below the plateau at the operating angle.
    pub drop_fraction: f64,
    /// Index increase at full surface coverage.
    pub delta_n_max: f64,
    /// Buffer-level transmission; the budget's residual factor is scaled to
    /// reach it. Omit to use the budget as given.
    #[serde(default)]
    pub baseline: Option<f64>,
    #[serde(default)]
    pub budget: EfficiencyBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub eps_re: f64,
    pub eps_im: f64,
    pub thickness_nm: f64,
}

impl StackSection {
    pub fn layer_stack(&self) -> LayerStack {
        LayerStack {
            prism_index: self.prism_index,
            layers: self
                .layers
                .iter()
                .map(|l| Layer { permittivity: Complex64::new(l.eps_re, l.eps_im), thickness_nm: l.thickness_nm })
                .collect(),
            analyte_index: self.buffer_index,
            wavelength_nm: self.wavelength_nm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KineticsSection {
    /// Ground-truth dissociation rate, s^-1.
    pub kd: f64,
    /// Ground-truth affinity, M^-1.
    pub affinity: f64,
}

impl Default for KineticsSection {
    fn default() -> Self {
        KineticsSection { kd: 0.01, affinity: 6.72e4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChemistrySection {
    pub molar_mass: f64,
    pub solvent_volume_l: f64,
    pub injected_volume_l: f64,
    pub cavity_volume_l: f64,
    /// One injection per entry, grams.
    pub dry_masses_g: Vec<f64>,
}

impl Default for ChemistrySection {
    fn default() -> Self {
        ChemistrySection {
            molar_mass: 66430.0,
            solvent_volume_l: 10e-3,
            injected_volume_l: 0.13e-3,
            cavity_volume_l: 0.5e-3,
            dry_masses_g: vec![0.15, 0.10, 0.075, 0.05],
        }
    }
}

impl ChemistrySection {
    pub fn recipes(&self) -> Vec<InjectionRecipe> {
        self.dry_masses_g
            .iter()
            .map(|&dry_mass| InjectionRecipe {
                dry_mass,
                molar_mass: self.molar_mass,
                solvent_volume: self.solvent_volume_l,
                injected_volume: self.injected_volume_l,
                cavity_volume: self.cavity_volume_l,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    pub m: usize,
    pub p: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let b = BootstrapConfig::default();
        BootstrapSection { m: b.m, p: b.p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Quantum,
    Classical,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<NoiseMode> {
        match self {
            ModeSelection::Quantum => vec![NoiseMode::Quantum],
            ModeSelection::Classical => vec![NoiseMode::Classical],
            ModeSelection::Both => vec![NoiseMode::Quantum, NoiseMode::Classical],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub mode: ModeSelection,
    pub steady_state_time: f64,
    pub steady_state_width: f64,
    pub readout: SteadyStateReadout,
    /// Shift every dataset so this time becomes `t = 0`.
    pub injection_time: Option<f64>,
    /// Common first-bin transmission after alignment.
    pub aligned_baseline: Option<f64>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        let a = AffinityConfig::default();
        EstimateSection {
            mode: ModeSelection::Both,
            steady_state_time: a.steady_state_time,
            steady_state_width: a.steady_state_width,
            readout: a.readout,
            injection_time: None,
            aligned_baseline: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimetagSection {
    /// Generate datasets through simulated detector streams and write them.
    pub enabled: bool,
    pub herald_rate: f64,
    pub jitter_ps: u64,
    pub background_rate: f64,
    pub window_ps: u64,
    pub window: WindowKind,
}

impl Default for TimetagSection {
    fn default() -> Self {
        TimetagSection {
            enabled: false,
            herald_rate: 5e4,
            jitter_ps: 1000,
            background_rate: 0.0,
            window_ps: DEFAULT_WINDOW_PS,
            window: WindowKind::After,
        }
    }
}

impl TimetagSection {
    pub fn coincidence(&self, nu: u64) -> CoincidenceConfig {
        CoincidenceConfig { window_ps: self.window_ps, nu, kind: self.window }
    }

    pub fn source(&self, nu: u64) -> TimetagSource {
        TimetagSource {
            herald_rate: self.herald_rate,
            jitter_ps: self.jitter_ps,
            background_rate: self.background_rate,
            coincidence: self.coincidence(nu),
        }
    }
}

/// Everything the manifest records: the configuration plus the version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: String,
    #[serde(flatten)]
    config: RunConfig,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            probe: Default::default(),
            sampling: Default::default(),
            transmission: Default::default(),
            kinetics: Default::default(),
            chemistry: Default::default(),
            bootstrap: Default::default(),
            estimate: Default::default(),
            timetag: Default::default(),
        }
    }

    /// Parses a config or a previously written manifest. `seed_override`
    /// supplies or replaces the seed.
    pub fn from_toml(text: &str, seed_override: Option<u64>) -> CliResult<Self> {
        let mut table: toml::Table = text.parse().map_err(config_err)?;
        table.remove("version");
        if let Some(seed) = seed_override {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        if !table.contains_key("seed") {
            return Err(CliError::Config("`seed` is mandatory (in the config or via --seed)".into()));
        }
        let cfg: RunConfig = table.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, seed_override)
    }

    /// Config echo with the version string, reloadable by [`from_toml`](Self::from_toml).
    pub fn manifest_toml(&self) -> String {
        let manifest = Manifest { version: VERSION.to_string(), config: self.clone() };
        toml::to_string(&manifest).expect("configuration always serialises")
    }

    pub fn validate(&self) -> CliResult<()> {
        let wrap = |e: qsens_core::Error| CliError::Config(e.to_string());
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config("seed must fit in 63 bits".into()));
        }
        self.sampling.plan().validate().map_err(wrap)?;
        if !(self.sampling.duration_s >= 0.0) {
            return Err(CliError::Config("sampling.duration_s must be >= 0".into()));
        }
        self.bootstrap_config().validate().map_err(wrap)?;
        for r in self.chemistry.recipes() {
            r.validate().map_err(wrap)?;
        }
        if self.chemistry.dry_masses_g.is_empty() {
            return Err(CliError::Config("chemistry.dry_masses_g is empty".into()));
        }
        KineticParams::from_affinity(self.kinetics.affinity, self.kinetics.kd, 0.0, 0.0).map_err(wrap)?;
        match &self.transmission {
            TransmissionSection::Direct { baseline, saturation } => {
                if !(*baseline >= 0.0 && *saturation >= 0.0 && baseline + saturation <= 1.0) {
                    return Err(CliError::Config("direct path needs baseline, saturation >= 0 and sum <= 1".into()));
                }
            }
            TransmissionSection::Stack(s) => {
                s.layer_stack().validate_kretschmann().map_err(wrap)?;
                s.budget.validate().map_err(wrap)?;
                if !(0.0..1.0).contains(&s.drop_fraction) || !(s.delta_n_max >= 0.0) {
                    return Err(CliError::Config("stack needs drop_fraction in [0, 1) and delta_n_max >= 0".into()));
                }
            }
        }
        if self.timetag.enabled && !(self.timetag.herald_rate > 0.0) {
            return Err(CliError::Config("timetag.herald_rate must be > 0".into()));
        }
        if self.timetag.window_ps == 0 {
            return Err(CliError::Config("timetag.window_ps must be > 0".into()));
        }
        Ok(())
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig { m: self.bootstrap.m, p: self.bootstrap.p, rng_seed: self.seed }
    }

    pub fn affinity_config(&self) -> AffinityConfig {
        AffinityConfig {
            bootstrap: self.bootstrap_config(),
            steady_state_time: self.estimate.steady_state_time,
            steady_state_width: self.estimate.steady_state_width,
            readout: self.estimate.readout,
        }
    }

    /// Cavity concentration of each configured injection.
    pub fn concentrations(&self) -> CliResult<Vec<f64>> {
        self.chemistry
            .recipes()
            .iter()
            .map(|r| cavity_concentration(r).map_err(|e| CliError::Config(e.to_string())))
            .collect()
    }

    pub fn truth(&self, l0: f64) -> CliResult<KineticParams> {
        KineticParams::from_affinity(self.kinetics.affinity, self.kinetics.kd, l0, 0.0)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Builds the active transmission path, locating the operating angle and
    /// calibrating the budget for the stack path.
    pub fn transmission_path(&self) -> CliResult<TransmissionPath> {
        let wrap = |e: qsens_core::Error| CliError::Config(e.to_string());
        Ok(match &self.transmission {
            TransmissionSection::Direct { baseline, saturation } => {
                TransmissionPath::Direct { baseline: *baseline, saturation: *saturation }
            }
            TransmissionSection::Stack(s) => {
                let stack = s.layer_stack();
                let mut sensor = SensorModel::new(stack, s.drop_fraction, s.budget).map_err(wrap)?;
                if let Some(target) = s.baseline {
                    let at_buffer = sensor.transmission(s.buffer_index).map_err(wrap)?;
                    sensor.budget.residual *= target / at_buffer;
                    sensor.budget.validate().map_err(wrap)?;
                }
                TransmissionPath::Stack { sensor: Box::new(sensor), n_buffer: s.buffer_index, delta_n_max: s.delta_n_max }
            }
        })
    }
}

/// Default gold-film stack for the optical path.
pub fn reference_stack() -> StackSection {
    StackSection {
        prism_index: 1.5108,
        wavelength_nm: 810.0,
        buffer_index: 1.329,
        layers: vec![LayerSection { eps_re: -26.0, eps_im: 1.5, thickness_nm: 50.0 }],
        drop_fraction: 0.8,
        delta_n_max: 1.23e-3,
        baseline: Some(0.06),
        budget: EfficiencyBudget::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_needs_a_seed() {
        assert!(matches!(RunConfig::from_toml("", None), Err(CliError::Config(_))));
        let cfg = RunConfig::from_toml("", Some(7)).unwrap();
        assert_eq!(cfg, RunConfig::with_seed(7));
    }

    #[test]
    fn manifest_reloads_to_the_same_config() {
        let mut cfg = RunConfig::with_seed(99);
        cfg.transmission = TransmissionSection::Stack(reference_stack());
        cfg.timetag.enabled = true;
        let text = cfg.manifest_toml();
        assert!(text.contains("version"));
        assert_eq!(RunConfig::from_toml(&text, None).unwrap(), cfg);
    }

    #[test]
    fn dotted_keys_and_unknown_fields() {
        let cfg = RunConfig::from_toml("seed = 1\nsampling.nu = 600\nbootstrap.p = 10\n", None).unwrap();
        assert_eq!((cfg.sampling.nu, cfg.bootstrap.p), (600, 10));
        assert!(RunConfig::from_toml("seed = 1\nsampling.nuu = 600\n", None).is_err());
        assert!(RunConfig::from_toml("seed = 1\nsampling.nu = 0\n", None).is_err());
    }

    #[test]
    fn default_concentrations_are_the_injection_series() {
        let l0 = RunConfig::with_seed(0).concentrations().unwrap();
        for (got, want) in l0.iter().zip([4.659e-5, 3.106e-5, 2.330e-5, 1.553e-5]) {
            assert!((got - want).abs() / want < 1e-3);
        }
    }

    #[test]
    fn stack_path_is_calibrated_to_the_baseline() {
        let mut cfg = RunConfig::with_seed(0);
        cfg.transmission = TransmissionSection::Stack(reference_stack());
        let path = cfg.transmission_path().unwrap();
        assert!((path.transmission(0.0).unwrap() - 0.06).abs() < 1e-12);
    }

    #[test]
    fn reference_stack_spans_six_to_ten_percent() {
        let mut cfg = RunConfig::with_seed(0);
        cfg.transmission = TransmissionSection::Stack(reference_stack());
        let path = cfg.transmission_path().unwrap();
        let l0 = cfg.concentrations().unwrap()[0];
        let steady = qsens_core::simulation::bound_fraction(&cfg.truth(l0).unwrap(), 1e6);
        let t = path.transmission(steady).unwrap();
        assert!((t - 0.10).abs() < 1e-3, "steady state {t}");
    }
}
