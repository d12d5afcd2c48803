//! Scenario configuration, read from TOML.
//!
//! Every section and field is optional; missing values take the defaults of
//! the reference deployment (16×4 arrays at 28 GHz, two RF chains and two
//! streams per node, 128 subcarriers). Unknown keys are rejected.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allowlist::LinkMode;
use crate::channel::{ArrayGeometry, NearFieldNorm};
use crate::error::{Error, Result};
use crate::evaluate::Method;
use crate::saturation::{ConditionVariant, SaturationThresholds};
use crate::stochastic::{ClusterModel, SiPathModel};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default SI path gain `G_ii^2`, chosen so that the reference deployment
/// keeps roughly 40 of its 64 beams.
pub const DEFAULT_G_SI_SQ_DB: f64 = -62.0;

pub const DEFAULT_ADC_BITS: u32 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_horizontal: usize,
    pub n_vertical: usize,
    pub spacing_wavelengths: f64,
    pub carrier_ghz: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            n_horizontal: 16,
            n_vertical: 4,
            spacing_wavelengths: 0.5,
            carrier_ghz: 28.0,
        }
    }
}

/// Which condition the proposed method enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantChoice {
    C3,
    C4,
    C4Pruned,
}

impl VariantChoice {
    pub fn method(self) -> Method {
        match self {
            VariantChoice::C3 => Method::ProposedC3,
            VariantChoice::C4 => Method::ProposedC4,
            VariantChoice::C4Pruned => Method::ProposedC4Pruned,
        }
    }

    pub fn condition(self) -> ConditionVariant {
        match self {
            VariantChoice::C3 => ConditionVariant::C3SvdRfOnly,
            _ => ConditionVariant::C4Colnorm,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "c3" => Some(VariantChoice::C3),
            "c4" => Some(VariantChoice::C4),
            "c4-pruned" => Some(VariantChoice::C4Pruned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub l_t: usize,
    pub l_r: usize,
    pub n_s: usize,
    pub num_subcarriers: usize,
    pub sample_interval_ns: f64,
    pub num_taps: usize,
    pub link_mode: LinkMode,
    pub variant: VariantChoice,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            l_t: 2,
            l_r: 2,
            n_s: 2,
            num_subcarriers: 128,
            sample_interval_ns: 2.5,
            num_taps: 16,
            link_mode: LinkMode::TxOnly,
            variant: VariantChoice::C4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub p_tx_dbm: f64,
    /// SI path gain `G_ii^2`.
    pub g_si_sq_db: f64,
    /// Desired-link path gain; only sets the interference-to-noise ratio of
    /// uncancelled SI relative to the desired SNR.
    pub g_desired_sq_db: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            p_tx_dbm: 40.0,
            g_si_sq_db: DEFAULT_G_SI_SQ_DB,
            g_desired_sq_db: -110.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub p_lna_max_dbm: f64,
    /// ADC resolution; [`DEFAULT_ADC_BITS`] when neither this nor
    /// `p_adc_max_dbm` is set. Giving both requires them to agree.
    pub adc_bits: Option<u32>,
    pub p_adc_max_dbm: Option<f64>,
    pub noise_floor_dbm: f64,
    pub papr_margin_db: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            p_lna_max_dbm: -10.0,
            adc_bits: None,
            p_adc_max_dbm: None,
            noise_floor_dbm: -90.0,
            papr_margin_db: 10.0,
        }
    }
}

impl ThresholdConfig {
    pub fn resolve(&self) -> Result<SaturationThresholds> {
        let thr = match (self.adc_bits, self.p_adc_max_dbm) {
            (_, Some(p)) => SaturationThresholds {
                p_lna_max_dbm: self.p_lna_max_dbm,
                p_adc_max_dbm: p,
                adc_bits: self.adc_bits,
                noise_floor_dbm: self.noise_floor_dbm,
                papr_margin_db: self.papr_margin_db,
            },
            (b, None) => SaturationThresholds::from_adc_bits(
                self.p_lna_max_dbm,
                b.unwrap_or(DEFAULT_ADC_BITS),
                self.noise_floor_dbm,
                self.papr_margin_db,
            ),
        };
        thr.validate().map_err(|e| Error::Config(format!("thresholds: {e}")))?;
        Ok(thr)
    }
}

/// Where the far-field SI paths come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiSource {
    /// Fresh random paths every trial.
    Stochastic,
    /// A fixed path-list CSV.
    PathList(PathBuf),
}

impl SiSource {
    pub fn parse(s: &str) -> SiSource {
        if s == "stochastic" {
            SiSource::Stochastic
        } else {
            SiSource::PathList(PathBuf::from(s))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiConfig {
    /// `"stochastic"` or a path-list CSV.
    pub source: String,
    pub kappa: f64,
    pub separation_m: f64,
    /// Fixed near-field constant; Frobenius normalization when absent.
    pub near_field_rho: Option<f64>,
    pub num_paths: usize,
    /// Share of the far-field power in the two strongest paths.
    pub dominant_fraction: f64,
    pub los_share: f64,
    pub decay: f64,
}

impl Default for SiConfig {
    fn default() -> Self {
        let d = SiPathModel::default();
        SiConfig {
            source: "stochastic".into(),
            kappa: 10.0,
            separation_m: 0.1,
            near_field_rho: None,
            num_paths: d.num_paths,
            dominant_fraction: d.dominant_fraction,
            los_share: d.los_share,
            decay: d.decay,
        }
    }
}

impl SiConfig {
    pub fn source(&self) -> SiSource {
        SiSource::parse(&self.source)
    }

    pub fn path_model(&self) -> SiPathModel {
        SiPathModel {
            num_paths: self.num_paths,
            dominant_fraction: self.dominant_fraction,
            los_share: self.los_share,
            decay: self.decay,
        }
    }

    pub fn nf_normalization(&self) -> NearFieldNorm {
        self.near_field_rho.map_or(NearFieldNorm::Frobenius, NearFieldNorm::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Also report a half-duplex row (ideal SE halved).
    pub hd_reference: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 200,
            seed: 1,
            methods: vec![
                Method::ProposedC3,
                Method::ProposedC4,
                Method::ProposedC4Pruned,
                Method::PowerReduction,
                Method::IdealFd,
            ],
            hd_reference: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lna_grid_dbm: Vec<f64>,
    pub adc_bits_grid: Vec<u32>,
    pub methods: Vec<Method>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lna_grid_dbm: vec![-20.0, -10.0, 0.0],
            adc_bits_grid: vec![8, 10, 12, 14],
            methods: vec![Method::ProposedC3, Method::ProposedC4],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllowlistConfig {
    /// Receive beams whose ADCs are also protected; LNA test only when absent.
    pub rx_combiner: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub array: ArrayConfig,
    pub link: LinkConfig,
    pub power: PowerConfig,
    pub thresholds: ThresholdConfig,
    pub si: SiConfig,
    pub desired: ClusterModel,
    pub run: RunConfig,
    pub sweep: SweepConfig,
    pub allowlist: AllowlistConfig,
}

fn field(name: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{name}: {reason}"))
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, origin: &FsPath) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
            match line {
                Some(l) => Error::Config(format!("{}:{}: {}", origin.display(), l, e.message())),
                None => Error::Config(format!("{}: {}", origin.display(), e.message())),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative path-list source resolves against the
    /// file's directory.
    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        if let SiSource::PathList(p) = cfg.si.source() {
            if p.is_relative() {
                let base = path.parent().unwrap_or(FsPath::new(""));
                cfg.si.source = base.join(p).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.array;
        if a.n_horizontal == 0 || a.n_vertical == 0 {
            return Err(field("array", "element counts must be >= 1"));
        }
        if !(a.spacing_wavelengths > 0.0) || !a.spacing_wavelengths.is_finite() {
            return Err(field("array.spacing_wavelengths", "must be finite and > 0"));
        }
        if !(a.carrier_ghz > 0.0) || !a.carrier_ghz.is_finite() {
            return Err(field("array.carrier_ghz", "must be finite and > 0"));
        }
        let l = &self.link;
        let n = a.n_horizontal * a.n_vertical;
        if l.l_t == 0 || l.l_r == 0 || l.l_t > n || l.l_r > n {
            return Err(field("link.l_t/l_r", format!("must lie in 1..={n}")));
        }
        if l.n_s == 0 || l.n_s > l.l_t.min(l.l_r) {
            return Err(field("link.n_s", "must lie in 1..=min(l_t, l_r)"));
        }
        if l.num_subcarriers == 0 {
            return Err(field("link.num_subcarriers", "must be >= 1"));
        }
        if l.num_taps == 0 || l.num_taps > l.num_subcarriers {
            return Err(field("link.num_taps", "must lie in 1..=num_subcarriers"));
        }
        if !(l.sample_interval_ns > 0.0) || !l.sample_interval_ns.is_finite() {
            return Err(field("link.sample_interval_ns", "must be finite and > 0"));
        }
        for (name, v) in [
            ("power.p_tx_dbm", self.power.p_tx_dbm),
            ("power.g_si_sq_db", self.power.g_si_sq_db),
            ("power.g_desired_sq_db", self.power.g_desired_sq_db),
        ] {
            if !v.is_finite() {
                return Err(field(name, "must be finite"));
            }
        }
        self.thresholds.resolve()?;
        if !(self.si.kappa >= 0.0) {
            return Err(field("si.kappa", "must be >= 0"));
        }
        if !(self.si.separation_m > 0.0) || !self.si.separation_m.is_finite() {
            return Err(field("si.separation_m", "must be finite and > 0"));
        }
        self.si.path_model().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.desired.validate().map_err(|e| Error::Config(e.to_string()))?;
        let r = &self.run;
        if r.trials == 0 {
            return Err(field("run.trials", "must be >= 1"));
        }
        if r.snr_db.is_empty() || r.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(field("run.snr_db", "must be a non-empty list of finite values"));
        }
        if r.methods.is_empty() {
            return Err(field("run.methods", "must not be empty"));
        }
        if self.sweep.lna_grid_dbm.is_empty() || self.sweep.adc_bits_grid.is_empty() {
            return Err(field("sweep", "grids must not be empty"));
        }
        if self.sweep.lna_grid_dbm.iter().any(|v| !v.is_finite()) {
            return Err(field("sweep.lna_grid_dbm", "must be finite"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry {
            n_horizontal: self.array.n_horizontal,
            n_vertical: self.array.n_vertical,
            spacing_wavelengths: self.array.spacing_wavelengths,
        }
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / (self.array.carrier_ghz * 1e9)
    }

    pub fn sample_interval_s(&self) -> f64 {
        self.link.sample_interval_ns * 1e-9
    }

    pub fn thresholds(&self) -> SaturationThresholds {
        self.thresholds.resolve().expect("validated thresholds")
    }
}
