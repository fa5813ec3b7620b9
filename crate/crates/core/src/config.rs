//! Scenario configuration.
//!
//! Configs are TOML documents: a handful of top-level campaign keys plus the
//! `[network]`, `[frame]`, `[power]`, `[channel]` and `[cluster]` sections.
//!
//! ```toml
//! seed = 42
//! num_setups = 4
//! num_realizations = 200
//! mode = "distributed"
//! schemes = ["MR", "LP-MMSE"]
//!
//! [network]
//! num_aps = 100
//! antennas_per_ap = 1
//! num_ues = 40
//! area_side_km = 1.0
//!
//! [frame]
//! pilot_len = 10
//! coherence_len = 200
//! ul_data_len = 190
//! dl_data_len = 0
//!
//! [power]
//! ue_power_w = 0.1
//! ap_power_w = 1.0
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermal noise for 20 MHz with a 7 dB noise figure: −174 + 73 + 7 dBm.
pub const DEFAULT_NOISE_DBM: f64 = -94.0;

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Receive-combining / precoding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "MR")]
    Mr,
    #[serde(rename = "MMSE")]
    Mmse,
    #[serde(rename = "P-MMSE")]
    PMmse,
    #[serde(rename = "L-MMSE")]
    LMmse,
    #[serde(rename = "LP-MMSE")]
    LpMmse,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Mr,
        Scheme::Mmse,
        Scheme::PMmse,
        Scheme::LMmse,
        Scheme::LpMmse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Mr => "MR",
            Scheme::Mmse => "MMSE",
            Scheme::PMmse => "P-MMSE",
            Scheme::LMmse => "L-MMSE",
            Scheme::LpMmse => "LP-MMSE",
        }
    }

    /// Whether an AP can compute the combiner from its own estimates only.
    pub fn is_local(self) -> bool {
        matches!(self, Scheme::Mr | Scheme::LMmse | Scheme::LpMmse)
    }

    pub fn from_name(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|x| x.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Level of AP cooperation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessingMode {
    /// Pilot and data signals go to the CPU; UL SE is evaluated with the
    /// side-information bound, DL precoders are normalized collectively.
    Centralized,
    /// APs combine locally; UL uses the use-and-then-forget bound and DL
    /// precoders are normalized per AP.
    Distributed,
}

impl fmt::Display for ProcessingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessingMode::Centralized => f.write_str("centralized"),
            ProcessingMode::Distributed => f.write_str("distributed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_ues: usize,
    pub area_side_km: f64,
    #[serde(default = "default_ap_height")]
    pub ap_height_m: f64,
}

fn default_ap_height() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub pilot_len: usize,
    pub coherence_len: usize,
    pub ul_data_len: usize,
    pub dl_data_len: usize,
}

impl FrameConfig {
    pub fn ul_prelog(&self) -> f64 {
        self.ul_data_len as f64 / self.coherence_len as f64
    }

    pub fn dl_prelog(&self) -> f64 {
        self.dl_data_len as f64 / self.coherence_len as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    /// Maximum (and, with full-power UL, actual) UE transmit power.
    pub ue_power_w: f64,
    /// Per-AP transmit power budget.
    pub ap_power_w: f64,
    #[serde(default = "default_noise")]
    pub noise_power_w: f64,
    #[serde(default)]
    pub ul_noise_power_w: Option<f64>,
    #[serde(default)]
    pub dl_noise_power_w: Option<f64>,
}

fn default_noise() -> f64 {
    dbm_to_watt(DEFAULT_NOISE_DBM)
}

impl PowerConfig {
    pub fn ul_noise(&self) -> f64 {
        self.ul_noise_power_w.unwrap_or(self.noise_power_w)
    }

    pub fn dl_noise(&self) -> f64 {
        self.dl_noise_power_w.unwrap_or(self.noise_power_w)
    }
}

/// Propagation model: log-distance pathloss with log-normal shadowing and
/// Gaussian local scattering around the line-of-sight angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    #[serde(default = "default_pl0")]
    pub pathloss_at_1m_db: f64,
    /// Coefficient α in `−α·log10(d / 1 m)`.
    #[serde(default = "default_alpha")]
    pub pathloss_slope_db: f64,
    #[serde(default = "default_shadowing")]
    pub shadowing_std_db: f64,
    #[serde(default = "default_spread")]
    pub angular_spread_deg: f64,
}

fn default_pl0() -> f64 {
    30.5
}
fn default_alpha() -> f64 {
    36.7
}
fn default_shadowing() -> f64 {
    4.0
}
fn default_spread() -> f64 {
    15.0
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            pathloss_at_1m_db: default_pl0(),
            pathloss_slope_db: default_alpha(),
            shadowing_std_db: default_shadowing(),
            angular_spread_deg: default_spread(),
        }
    }
}

/// Cluster-formation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    /// APs within this wrap-around distance of the master are invited.
    #[serde(default = "default_radius")]
    pub neighbor_radius_km: f64,
    /// At most this many (nearest) neighbors are invited.
    #[serde(default = "default_max_neighbors")]
    pub max_neighbors: usize,
    /// Benchmark mode: bypass clustering, every AP serves every UE.
    #[serde(default)]
    pub serve_all: bool,
}

fn default_radius() -> f64 {
    0.5
}
fn default_max_neighbors() -> usize {
    20
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            neighbor_radius_km: default_radius(),
            max_neighbors: default_max_neighbors(),
            serve_all: false,
        }
    }
}

/// All scenario parameters of one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub num_setups: usize,
    pub num_realizations: usize,
    pub mode: ProcessingMode,
    pub schemes: Vec<Scheme>,
    /// Also report the genie-aided DL reference SE.
    #[serde(default)]
    pub genie: bool,
    pub network: NetworkConfig,
    pub frame: FrameConfig,
    pub power: PowerConfig,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub cluster: ClusterConfig,
}

impl SimulationConfig {
    /// Parses TOML text and validates it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
            key: "<document>".into(),
            message: e.message().to_string(),
        })?;
        let cfg: SimulationConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.message().to_string();
            Error::Parse {
                key: missing_key(&path, &message),
                message,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.network;
        let f = &self.frame;
        let p = &self.power;
        let fail = |m: String| Err(Error::Validation(m));
        if n.num_aps == 0 {
            return fail("network.num_aps must be positive".into());
        }
        if n.antennas_per_ap == 0 {
            return fail("network.antennas_per_ap must be positive".into());
        }
        if n.num_ues == 0 {
            return fail("network.num_ues must be positive".into());
        }
        if !(n.area_side_km > 0.0) {
            return fail("network.area_side_km must be positive".into());
        }
        if !(n.ap_height_m >= 0.0) {
            return fail("network.ap_height_m must be nonnegative".into());
        }
        if f.pilot_len == 0 {
            return fail("frame.pilot_len must be positive".into());
        }
        if f.coherence_len == 0 {
            return fail("frame.coherence_len must be positive".into());
        }
        let used = f.pilot_len + f.ul_data_len + f.dl_data_len;
        if used > f.coherence_len {
            return fail(format!(
                "frame budget exceeded: pilot_len + ul_data_len + dl_data_len = {used} > coherence_len = {}",
                f.coherence_len
            ));
        }
        for (name, v) in [
            ("power.ue_power_w", p.ue_power_w),
            ("power.ap_power_w", p.ap_power_w),
            ("power.noise_power_w", p.noise_power_w),
            ("power.ul_noise_power_w", p.ul_noise()),
            ("power.dl_noise_power_w", p.dl_noise()),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be strictly positive"));
            }
        }
        let c = &self.channel;
        if !(c.shadowing_std_db >= 0.0) || !(c.angular_spread_deg >= 0.0) {
            return fail("channel spreads must be nonnegative".into());
        }
        if !(self.cluster.neighbor_radius_km >= 0.0) {
            return fail("cluster.neighbor_radius_km must be nonnegative".into());
        }
        if self.num_setups == 0 {
            return fail("num_setups must be positive".into());
        }
        if self.schemes.is_empty() {
            return fail("schemes must name at least one scheme".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.schemes {
            if !seen.insert(*s) {
                return fail(format!("scheme {s} listed twice"));
            }
            if self.mode == ProcessingMode::Distributed && !s.is_local() {
                return fail(format!(
                    "scheme {s} needs centralized processing and cannot run in distributed mode"
                ));
            }
        }
        Ok(())
    }

    /// Stable hash of the canonical serialized config.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn ul_noise(&self) -> f64 {
        self.power.ul_noise()
    }

    pub fn dl_noise(&self) -> f64 {
        self.power.dl_noise()
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<SimulationConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SimulationConfig::from_toml_str(&text)
}

// serde reports a missing field at the parent path; append the field name so
// the error names the key itself.
fn missing_key(path: &str, message: &str) -> String {
    if let Some(rest) = message.strip_prefix("missing field `") {
        if let Some(field) = rest.split('`').next() {
            return if path == "." || path.is_empty() {
                field.to_string()
            } else {
                format!("{path}.{field}")
            };
        }
    }
    path.to_string()
}
