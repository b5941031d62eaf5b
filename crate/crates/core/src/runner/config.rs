//! Run configuration: flat TOML keys, figure presets and `key=value`
//! overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Method, PulseShape};
use crate::error::{Error, Result};
use crate::geometry::{median_nearest_neighbor_distance, radius_from_density, UM3_PER_CM3};
use crate::observables::DomainConvention;

/// Scaled interaction strength (median nearest-neighbour `|κ|τ` at 10 ns)
/// used for the presets of the reference figures. Matches a 70p-like C6 at
/// 1e11 cm^-3.
pub const PAPER_SCALED_STRENGTH: f64 = 1000.0;

/// Interaction multiplier of the strong-interaction figure.
pub const STRONG_MULTIPLIER: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    /// Fixed Rabi frequency, pulse duration varied.
    TauScan,
    /// Fixed pulse duration, Rabi frequency varied.
    OmegaScan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Atom number, or its mean when `poissonian` is set.
    pub n_atoms: usize,
    pub poissonian: bool,
    pub density_cm3: Option<f64>,
    pub radius_um: Option<f64>,
    /// Effective dispersion coefficient in MHz·μm⁶ (`κ/2π = C6/R⁶`).
    pub c6_mhz_um6: Option<f64>,
    /// Median nearest-neighbour `|κ|·τ_ref`.
    pub scaled_strength: Option<f64>,
    pub interaction_multiplier: f64,
    pub pulse_shape: PulseShape,
    pub scan: ScanKind,
    /// Explicit pulse-area grid; overrides `area_start/area_stop/area_points`.
    pub areas: Vec<f64>,
    pub area_start: f64,
    pub area_stop: f64,
    pub area_points: usize,
    /// Reference pulse duration (ns): the fixed τ of an Ω-scan, the longest τ
    /// of a τ-scan unless `rabi_mhz` is set, and the time unit of the scaled
    /// strength. For Gaussian pulses τ is the FWHM.
    pub tau_ns: f64,
    /// Fixed `Ω/2π` (MHz) of a τ-scan.
    pub rabi_mhz: Option<f64>,
    /// Gaussian integration window in units of τ on each side of the centre.
    pub gaussian_half_window: f64,
    pub superatoms: Option<usize>,
    pub max_excited: usize,
    pub realizations: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub retain_curves: bool,
    /// Scan point (nearest grid area) of the reported correlation function;
    /// defaults to the first maximum of the averaged curve.
    pub correlation_area: Option<f64>,
    pub correlation_bin_um: f64,
    pub min_distance_um: f64,
    pub blockade_multiple: f64,
    pub domain_convention: DomainConvention,
    pub method: Method,
    pub rtol: f64,
    pub max_failure_fraction: f64,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_atoms: 70,
            poissonian: false,
            density_cm3: None,
            radius_um: None,
            c6_mhz_um6: None,
            scaled_strength: None,
            interaction_multiplier: 1.0,
            pulse_shape: PulseShape::Square,
            scan: ScanKind::TauScan,
            areas: Vec::new(),
            area_start: 0.05,
            area_stop: 6.0,
            area_points: 120,
            tau_ns: 10.0,
            rabi_mhz: None,
            gaussian_half_window: 3.0,
            superatoms: None,
            max_excited: 7,
            realizations: 100,
            seed: 1,
            workers: None,
            retain_curves: false,
            correlation_area: None,
            correlation_bin_um: 0.5,
            min_distance_um: crate::geometry::DEFAULT_MIN_DISTANCE,
            blockade_multiple: 10.0,
            domain_convention: DomainConvention::AtomsPerExcitation,
            method: Method::Auto,
            rtol: 1e-9,
            max_failure_fraction: 0.1,
            output_dir: "out".into(),
        }
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 8] = ["1a", "1b", "2a", "2b", "3a", "3b", "4", "5"];

/// Keys of a figure preset. Letters `a`/`b` select the τ-scan and the Ω-scan.
pub fn preset(name: &str) -> Result<toml::Table> {
    let (shape, scan, multiplier) = match name {
        "1a" | "3a" | "4" => ("square", "tau_scan", 1.0),
        "1b" | "3b" => ("square", "omega_scan", 1.0),
        "2a" => ("gaussian", "tau_scan", 1.0),
        "2b" => ("gaussian", "omega_scan", 1.0),
        "5" => ("square", "tau_scan", STRONG_MULTIPLIER),
        _ => return Err(Error::Config(format!("unknown preset {name:?}, expected one of {PRESETS:?}"))),
    };
    let text = format!(
        "n_atoms = 70\n\
         density_cm3 = 1e11\n\
         scaled_strength = {PAPER_SCALED_STRENGTH:?}\n\
         interaction_multiplier = {multiplier:?}\n\
         pulse_shape = \"{shape}\"\n\
         scan = \"{scan}\"\n\
         tau_ns = 10.0\n\
         superatoms = 23\n\
         max_excited = 7\n\
         realizations = 100\n"
    );
    Ok(toml::from_str(&text).expect("preset text is valid TOML"))
}

/// Parses one `key=value` override; values that are not TOML literals are
/// taken as strings.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {spec:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Layers configuration sources, later ones winning key by key.
#[derive(Clone, Debug, Default)]
pub struct ConfigBuilder {
    table: toml::Table,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn preset(mut self, name: &str) -> Result<Self> {
        self.table.extend(preset(name)?);
        Ok(self)
    }

    pub fn toml_str(mut self, text: &str) -> Result<Self> {
        let t: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        self.table.extend(t);
        Ok(self)
    }

    pub fn file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        self.toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the keys of `other` on top of these.
    pub fn merge(mut self, other: ConfigBuilder) -> Self {
        self.table.extend(other.table);
        self
    }

    pub fn set(mut self, key: &str, value: toml::Value) -> Self {
        self.table.insert(key.to_string(), value);
        self
    }

    pub fn override_str(self, spec: &str) -> Result<Self> {
        let (k, v) = parse_override(spec)?;
        Ok(self.set(&k, v))
    }

    pub fn build(self) -> Result<RunConfig> {
        let cfg: RunConfig = self.table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        ConfigBuilder::new().toml_str(text)?.build()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.density_cm3.is_some() == self.radius_um.is_some() {
            return bad("give exactly one of density_cm3 and radius_um".into());
        }
        if self.c6_mhz_um6.is_some() == self.scaled_strength.is_some() {
            return bad("give exactly one of c6_mhz_um6 and scaled_strength".into());
        }
        let positive = |name: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { bad(format!("{name} must be positive, got {v}")) };
        if let Some(d) = self.density_cm3 {
            positive("density_cm3", d)?;
        }
        if let Some(r) = self.radius_um {
            positive("radius_um", r)?;
        }
        if let Some(s) = self.scaled_strength {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("scaled_strength must be nonnegative, got {s}"));
            }
        }
        if let Some(c) = self.c6_mhz_um6 {
            if !c.is_finite() {
                return bad("c6_mhz_um6 must be finite".into());
            }
        }
        if !self.interaction_multiplier.is_finite() {
            return bad("interaction_multiplier must be finite".into());
        }
        if self.n_atoms == 0 {
            return bad("n_atoms must be at least 1".into());
        }
        positive("tau_ns", self.tau_ns)?;
        if let Some(r) = self.rabi_mhz {
            positive("rabi_mhz", r)?;
        }
        positive("gaussian_half_window", self.gaussian_half_window)?;
        positive("correlation_bin_um", self.correlation_bin_um)?;
        positive("rtol", self.rtol)?;
        if self.max_excited == 0 {
            return bad("max_excited must be at least 1".into());
        }
        if self.superatoms == Some(0) {
            return bad("superatoms must be at least 1".into());
        }
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return bad("max_failure_fraction must lie in [0, 1]".into());
        }
        let grid = self.grid();
        if grid.is_empty() {
            return bad("scan grid is empty".into());
        }
        if grid.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return bad("scan grid areas must be positive and finite".into());
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("scan grid must be strictly increasing".into());
        }
        Ok(())
    }

    /// Pulse areas `Ωτ` of the scan.
    pub fn grid(&self) -> Vec<f64> {
        if !self.areas.is_empty() {
            return self.areas.clone();
        }
        match self.area_points {
            0 => Vec::new(),
            1 => vec![self.area_stop],
            n => (0..n)
                .map(|i| self.area_start + (self.area_stop - self.area_start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    /// Sample radius in μm.
    pub fn radius(&self) -> Result<f64> {
        match (self.radius_um, self.density_cm3) {
            (Some(r), _) => Ok(r),
            (None, Some(d)) => radius_from_density(self.n_atoms, d),
            (None, None) => Err(Error::Config("neither density nor radius given".into())),
        }
    }

    /// Mean density in cm⁻³.
    pub fn density(&self) -> Result<f64> {
        match self.density_cm3 {
            Some(d) => Ok(d),
            None => {
                let r = self.radius()?;
                Ok(self.n_atoms as f64 / (4.0 / 3.0 * std::f64::consts::PI * r.powi(3)) * UM3_PER_CM3)
            }
        }
    }

    /// `Ω` in units of `1/τ_ref` held fixed during a τ-scan. Without
    /// `rabi_mhz` the longest pulse of the scan lasts `τ_ref`.
    pub fn tau_scan_rabi(&self) -> f64 {
        match self.rabi_mhz {
            Some(f) => mhz_to_internal(f, self.tau_ns),
            None => self.grid().last().copied().unwrap_or(1.0) / shape_factor(self.pulse_shape),
        }
    }
}

/// Area of a unit-height pulse of unit duration: 1 for a square pulse,
/// `√(π / 4 ln 2)` for a Gaussian of unit FWHM.
pub fn shape_factor(shape: PulseShape) -> f64 {
    match shape {
        PulseShape::Square => 1.0,
        PulseShape::Gaussian => (std::f64::consts::PI / (4.0 * std::f64::consts::LN_2)).sqrt(),
    }
}

/// Converts a frequency `x/2π` in MHz into rad per `tau_ns` nanoseconds.
pub fn mhz_to_internal(mhz: f64, tau_ns: f64) -> f64 {
    2.0 * std::f64::consts::PI * mhz * 1e-3 * tau_ns
}

/// Interaction scale of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Calibration {
    /// `C6` in rad·μm⁶ per `τ_ref`, multiplier included.
    pub c6_internal: f64,
    /// The same in MHz·μm⁶.
    pub c6_mhz_um6: f64,
    /// Median nearest-neighbour distance at the configured density (μm).
    pub nn_distance_um: f64,
    /// Median nearest-neighbour `|κ|τ_ref`, multiplier included.
    pub scaled_strength: f64,
}

/// Fixes the dispersion coefficient. In scaled-strength mode the median
/// nearest-neighbour distance of a uniform gas at the configured density
/// sets the scale, so the result does not depend on any realization.
pub fn calibrate_interaction(cfg: &RunConfig) -> Result<Calibration> {
    let density = cfg.density()?;
    let r_nn = median_nearest_neighbor_distance(density);
    let r6 = r_nn.powi(6);
    let base = match (cfg.scaled_strength, cfg.c6_mhz_um6) {
        (Some(s), None) => s * r6,
        (None, Some(c6)) => mhz_to_internal(c6, cfg.tau_ns),
        _ => return Err(Error::Config("give exactly one of c6_mhz_um6 and scaled_strength".into())),
    };
    let c6_internal = base * cfg.interaction_multiplier;
    Ok(Calibration {
        c6_internal,
        c6_mhz_um6: c6_internal / mhz_to_internal(1.0, cfg.tau_ns),
        nn_distance_um: r_nn,
        scaled_strength: c6_internal.abs() / r6,
    })
}
