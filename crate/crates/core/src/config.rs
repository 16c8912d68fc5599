//! TOML run configuration.
//!
//! ```toml
//! seed = 7                      # required
//!
//! [scenario]                    # all keys optional
//! arrival_rate = 0.016667       # aircraft/s per route
//! min_headway = 30.0            # s
//! episode_length = 3000.0       # s
//! dt = 1.0
//! entry_speed = 20.0            # m/s
//! wind = [0.0, 0.0]             # east, north (m/s)
//! capture_radius = 100.0
//! # routes = [[[0.0, 2000.0], [2000.0, 2000.0], ...], ...]
//!
//! [scenario.reward]
//! alpha = 0.1
//! beta = 0.0002
//! c_nmac = 1.0
//! lambda_u = 0.001
//! d_pz = 100.0
//! d_r = 500.0
//!
//! [observation]
//! kappa = [60.0, 60.0, 0.0873, 2.0, 60.0, 0.0]   # x, y, heading (rad), speed, dist-to-go, prev cmd
//!
//! [network]
//! hidden = 64
//! heads = 4
//! head_dim = 16
//! head_hidden = 64
//! leaky_slope = 0.01
//! rel_scale = 500.0
//!
//! [training]                    # see TrainConfig
//! total_steps = 200000
//!
//! [eval]
//! rates = [0.0, 0.05, 0.1]
//! episodes = 100
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::EvalSettings;
use crate::net::{Featurizer, NetConfig};
use crate::observation::{CorruptionBounds, Normalizer};
use crate::sim::{RewardParams, Route, RouteNetwork, Scenario, Wind, DELTA_V};
use crate::trainer::{RunOptions, TrainConfig};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub observation: ObservationSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub eval: EvalSettings,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub arrival_rate: f64,
    pub min_headway: f64,
    pub episode_length: f64,
    pub dt: f64,
    pub entry_speed: f64,
    pub wind: [f64; 2],
    pub capture_radius: f64,
    pub routes: Option<Vec<Vec<[f64; 2]>>>,
    pub reward: RewardSection,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            arrival_rate: s.arrival_rate,
            min_headway: s.min_headway,
            episode_length: s.episode_length,
            dt: s.dt,
            entry_speed: s.entry_speed,
            wind: [s.wind.east, s.wind.north],
            capture_radius: s.network.capture_radius,
            routes: None,
            reward: RewardSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub alpha: f64,
    pub beta: f64,
    pub c_nmac: f64,
    pub lambda_u: f64,
    pub d_pz: f64,
    pub d_r: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let r = RewardParams::default();
        Self { alpha: r.alpha, beta: r.beta, c_nmac: r.c_nmac, lambda_u: r.lambda_u, d_pz: r.d_pz, d_r: r.d_r }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSection {
    pub kappa: [f64; 6],
    pub norm_offset: Option<[f64; 6]>,
    pub norm_scale: Option<[f64; 6]>,
}

impl Default for ObservationSection {
    fn default() -> Self {
        Self { kappa: CorruptionBounds::DEFAULT_COLUMNS, norm_offset: None, norm_scale: None }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub head_hidden: usize,
    pub leaky_slope: f64,
    pub rel_scale: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let (n, f) = (NetConfig::default(), Featurizer::default());
        Self {
            hidden: n.hidden,
            heads: n.heads,
            head_dim: n.head_dim,
            head_hidden: n.head_hidden,
            leaky_slope: n.leaky_slope,
            rel_scale: f.rel_scale,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario()?.validate()?;
        self.kappa()?;
        self.net_config().validate()?;
        self.featurizer()?.validate()?;
        self.training.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let s = &self.scenario;
        let network = match &s.routes {
            None => RouteNetwork { capture_radius: s.capture_radius, ..RouteNetwork::default_network() },
            Some(rs) => RouteNetwork::new(rs.iter().cloned().map(Route::new).collect::<Result<_>>()?, s.capture_radius)?,
        };
        let r = &s.reward;
        Ok(Scenario {
            network,
            arrival_rate: s.arrival_rate,
            min_headway: s.min_headway,
            wind: Wind { east: s.wind[0], north: s.wind[1] },
            episode_length: s.episode_length,
            dt: s.dt,
            entry_speed: s.entry_speed,
            reward: RewardParams {
                alpha: r.alpha,
                beta: r.beta,
                c_nmac: r.c_nmac,
                lambda_u: r.lambda_u,
                delta_v: DELTA_V,
                d_pz: r.d_pz,
                d_r: r.d_r,
            },
        })
    }

    pub fn kappa(&self) -> Result<CorruptionBounds> {
        CorruptionBounds::from_columns(self.observation.kappa).map_err(|e| Error::Config(format!("observation.kappa: {e}")))
    }

    pub fn net_config(&self) -> NetConfig {
        let n = &self.network;
        NetConfig {
            hidden: n.hidden,
            heads: n.heads,
            head_dim: n.head_dim,
            head_hidden: n.head_hidden,
            leaky_slope: n.leaky_slope,
        }
    }

    pub fn featurizer(&self) -> Result<Featurizer> {
        let d = Normalizer::default();
        let norm = Normalizer::new(
            self.observation.norm_offset.unwrap_or(d.offset),
            self.observation.norm_scale.unwrap_or(d.scale),
        )
        .map_err(|e| Error::Config(format!("observation normaliser: {e}")))?;
        Ok(Featurizer { norm, rel_scale: self.network.rel_scale })
    }

    pub fn run_options(&self) -> Result<RunOptions> {
        Ok(RunOptions {
            seed: self.seed,
            scenario: self.scenario()?,
            kappa: self.kappa()?,
            net: self.net_config(),
            features: self.featurizer()?,
            divergence_dir: None,
        })
    }
}
