//! TOML experiment configuration.
//!
//! Every key is optional; absent keys take the defaults below. Unknown keys
//! are rejected. Grammar:
//!
//! ```toml
//! frequency_hz = 2.5e9          # carrier
//! layer_spacing_m = 0.02        # D, also the user → layer-1 distance
//! penetration_loss = 0.8        # α
//! noise_power_w = 1e-6          # σ²
//! p_max_w = [0.001, 0.01, 0.1]  # transmit powers to sweep
//! user_antennas = 2             # K
//! bs_antennas = 8               # M
//! user_position_m = [0.0, 0.0, 0.0]
//! bs_position_m = [0.0, 10.0, 0.0]
//! antenna_spacing_m = 0.06      # ULA spacing, default λ/2
//! element_pitch_m = 0.03        # surface pitch, default λ/4
//! architecture = "foldable_sparse"
//! budget = 256                  # active elements before scaling
//! fold_angles = 3               # m, must be odd
//! scale = 0.125                 # area ratio applied to every grid and the budget
//! seed = 0
//! ear_threshold = 0.1
//! stage1_init = "dense"         # or "random"
//!
//! [grids]
//! single_layer = [16, 16]
//! multilayer = [8, 16]
//! multilayer_layers = 2
//! sparse = [8, 16]
//! sparse_layers = 3
//!
//! [search]
//! neighbor_distance = 1
//! neighbors = 20
//! tabu_capacity = 10
//! stage1_max_iters = 50
//! stage2_max_iters = 9
//! stall_iters = 15              # 0 disables the stall cutoff
//! rounds = 1
//!
//! [ao]
//! tol = 1e-8
//! max_sweeps = 200
//! search_tol = 1e-6
//! search_max_sweeps = 60
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    SingleLayer,
    Multilayer,
    SparseMultilayer,
    FoldableSparse,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::SingleLayer,
        Architecture::Multilayer,
        Architecture::SparseMultilayer,
        Architecture::FoldableSparse,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::SingleLayer => "single_layer",
            Architecture::Multilayer => "multilayer",
            Architecture::SparseMultilayer => "sparse_multilayer",
            Architecture::FoldableSparse => "foldable_sparse",
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Architecture::SingleLayer | Architecture::Multilayer)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config("architecture", format!("unknown architecture `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Init {
    /// Centred, evenly split topology; guarantees the sparse result beats it.
    Dense,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub single_layer: [usize; 2],
    pub multilayer: [usize; 2],
    pub multilayer_layers: usize,
    pub sparse: [usize; 2],
    pub sparse_layers: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            single_layer: [16, 16],
            multilayer: [8, 16],
            multilayer_layers: 2,
            sparse: [8, 16],
            sparse_layers: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub neighbor_distance: usize,
    pub neighbors: usize,
    pub tabu_capacity: usize,
    pub stage1_max_iters: usize,
    pub stage2_max_iters: usize,
    pub stall_iters: usize,
    pub rounds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            neighbor_distance: 1,
            neighbors: 20,
            tabu_capacity: 10,
            stage1_max_iters: 50,
            stage2_max_iters: 9,
            stall_iters: 15,
            rounds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AoConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub search_tol: f64,
    pub search_max_sweeps: usize,
}

impl Default for AoConfig {
    fn default() -> Self {
        AoConfig {
            tol: 1e-8,
            max_sweeps: 200,
            search_tol: 1e-6,
            search_max_sweeps: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub frequency_hz: f64,
    pub layer_spacing_m: f64,
    pub penetration_loss: f64,
    pub noise_power_w: f64,
    pub p_max_w: Vec<f64>,
    pub user_antennas: usize,
    pub bs_antennas: usize,
    pub user_position_m: [f64; 3],
    pub bs_position_m: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antenna_spacing_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub element_pitch_m: Option<f64>,
    pub architecture: Architecture,
    pub budget: usize,
    pub fold_angles: usize,
    pub scale: f64,
    pub seed: u64,
    pub ear_threshold: f64,
    pub stage1_init: Stage1Init,
    pub grids: GridConfig,
    pub search: SearchConfig,
    pub ao: AoConfig,
}

/// `count` points spaced evenly in log10 between `lo` and `hi`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            frequency_hz: 2.5e9,
            layer_spacing_m: 0.02,
            penetration_loss: 0.8,
            noise_power_w: 1e-6,
            p_max_w: log_space(1e-3, 1.0, 10),
            user_antennas: 2,
            bs_antennas: 8,
            user_position_m: [0.0, 0.0, 0.0],
            bs_position_m: [0.0, 10.0, 0.0],
            antenna_spacing_m: None,
            element_pitch_m: None,
            architecture: Architecture::FoldableSparse,
            budget: 256,
            fold_angles: 3,
            scale: 0.125,
            seed: 0,
            ear_threshold: 0.1,
            stage1_init: Stage1Init::Dense,
            grids: GridConfig::default(),
            search: SearchConfig::default(),
            ao: AoConfig::default(),
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}

fn at_least_one(path: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::config(path, "must be at least 1"))
    }
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.to_string().trim().to_string()))?;
        let cfg: SystemConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    /// Round-trippable TOML echo.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn wavelength(&self) -> f64 {
        crate::channel::wavelength(self.frequency_hz)
    }

    pub fn element_pitch(&self) -> f64 {
        self.element_pitch_m.unwrap_or(self.wavelength() / 4.0)
    }

    pub fn antenna_spacing(&self) -> f64 {
        self.antenna_spacing_m.unwrap_or(self.wavelength() / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        positive("frequency_hz", self.frequency_hz)?;
        positive("layer_spacing_m", self.layer_spacing_m)?;
        positive("noise_power_w", self.noise_power_w)?;
        if !(self.penetration_loss > 0.0 && self.penetration_loss <= 1.0) {
            return Err(Error::config(
                "penetration_loss",
                format!("must lie in (0, 1], got {}", self.penetration_loss),
            ));
        }
        if self.p_max_w.is_empty() {
            return Err(Error::config("p_max_w", "needs at least one power"));
        }
        for (i, &p) in self.p_max_w.iter().enumerate() {
            positive(&format!("p_max_w[{i}]"), p)?;
        }
        at_least_one("user_antennas", self.user_antennas)?;
        at_least_one("bs_antennas", self.bs_antennas)?;
        if let Some(s) = self.antenna_spacing_m {
            positive("antenna_spacing_m", s)?;
        }
        if let Some(p) = self.element_pitch_m {
            positive("element_pitch_m", p)?;
        }
        at_least_one("budget", self.budget)?;
        at_least_one("fold_angles", self.fold_angles)?;
        if self.fold_angles.is_multiple_of(2) {
            return Err(Error::config(
                "fold_angles",
                format!("must be odd so the flat surface is feasible, got {}", self.fold_angles),
            ));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::config("scale", format!("must lie in (0, 1], got {}", self.scale)));
        }
        if !(self.ear_threshold > 0.0 && self.ear_threshold <= 1.0) {
            return Err(Error::config(
                "ear_threshold",
                format!("must lie in (0, 1], got {}", self.ear_threshold),
            ));
        }
        let g = &self.grids;
        for (path, dims) in [
            ("grids.single_layer", g.single_layer),
            ("grids.multilayer", g.multilayer),
            ("grids.sparse", g.sparse),
        ] {
            if dims[0] == 0 || dims[1] < 2 {
                return Err(Error::config(path, format!("needs rows >= 1 and cols >= 2, got {dims:?}")));
            }
        }
        at_least_one("grids.multilayer_layers", g.multilayer_layers)?;
        at_least_one("grids.sparse_layers", g.sparse_layers)?;
        let s = &self.search;
        at_least_one("search.neighbor_distance", s.neighbor_distance)?;
        at_least_one("search.neighbors", s.neighbors)?;
        at_least_one("search.stage1_max_iters", s.stage1_max_iters)?;
        at_least_one("search.stage2_max_iters", s.stage2_max_iters)?;
        at_least_one("search.rounds", s.rounds)?;
        positive("ao.tol", self.ao.tol)?;
        positive("ao.search_tol", self.ao.search_tol)?;
        at_least_one("ao.max_sweeps", self.ao.max_sweeps)?;
        at_least_one("ao.search_max_sweeps", self.ao.search_max_sweeps)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = SystemConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, SystemConfig::default());
        assert_eq!(cfg.frequency_hz, 2.5e9);
        assert_eq!(cfg.layer_spacing_m, 0.02);
        assert_eq!(cfg.penetration_loss, 0.8);
        assert_eq!(cfg.noise_power_w, 1e-6);
        assert_eq!(cfg.p_max_w.len(), 10);
        assert!((cfg.p_max_w[0] - 1e-3).abs() < 1e-18 && (cfg.p_max_w[9] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = SystemConfig::from_toml_str("foo = 1").unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = SystemConfig::from_toml_str("[search]\nbar = 2").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("bar") && text.contains("search"), "{text}");
    }

    #[test]
    fn bad_values_report_their_path() {
        let err = SystemConfig::from_toml_str("penetration_loss = 1.5").unwrap_err();
        assert!(err.to_string().contains("`penetration_loss`"), "{err}");
        let err = SystemConfig::from_toml_str("p_max_w = [1.0, -2.0]").unwrap_err();
        assert!(err.to_string().contains("p_max_w[1]"), "{err}");
        let err = SystemConfig::from_toml_str("fold_angles = 2").unwrap_err();
        assert!(err.to_string().contains("fold_angles"), "{err}");
        let err = SystemConfig::from_toml_str("[ao]\ntol = \"x\"").unwrap_err();
        assert!(err.to_string().contains("ao.tol"), "{err}");
        assert!(SystemConfig::from_toml_str("scale = = 1").is_err());
    }

    #[test]
    fn overrides_survive_the_echo() {
        let cfg = SystemConfig::from_toml_str(
            "p_max_w = [0.5, 0.25]\nseed = 9\nelement_pitch_m = 0.01\narchitecture = \"multilayer\"\n[search]\nneighbors = 7",
        )
        .unwrap();
        assert_eq!(cfg.p_max_w, vec![0.5, 0.25]);
        assert_eq!(cfg.architecture, Architecture::Multilayer);
        let echo = cfg.to_toml_string();
        assert_eq!(SystemConfig::from_toml_str(&echo).unwrap(), cfg);
    }

    #[test]
    fn architecture_names() {
        for a in Architecture::ALL {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
        }
        assert!("x".parse::<Architecture>().is_err());
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1e-3, 1.0, 4);
        assert_eq!(v.len(), 4);
        assert!((v[1] - 1e-2).abs() < 1e-16);
        assert_eq!(log_space(2.0, 3.0, 1), vec![2.0]);
    }
}
