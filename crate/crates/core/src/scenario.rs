//! Scenario files (TOML) and command-line overrides.
//!
//! Precedence is flag > file > default: missing file keys take the defaults
//! of [`SimConfig`], and any override that is set replaces the file value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ControllerKind, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Number of runs; run `k` uses seed `sim.seed + k`.
    pub seeds: usize,
    pub out_dir: PathBuf,
    pub plot: bool,
    pub sim: SimConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seeds: 1,
            out_dir: PathBuf::from("out"),
            plot: false,
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub controller: Option<ControllerKind>,
    pub seeds: Option<usize>,
    pub noise: Option<f64>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub plot: Option<bool>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Parse {
            what: "scenario".into(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "scenario".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("seeds must be at least 1".into()));
        }
        self.sim.validate()
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(c) = o.controller {
            self.sim.controller = c;
        }
        if let Some(n) = o.seeds {
            self.seeds = n;
        }
        if let Some(v) = o.noise {
            self.sim.noise_sigma = v;
        }
        if let Some(v) = o.dt {
            self.sim.dt = v;
        }
        if let Some(v) = o.duration {
            self.sim.duration = v;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(p) = o.plot {
            self.plot = p;
        }
        self.validate()
    }

    /// Configuration of run `k` of the seed sweep.
    pub fn run_config(&self, k: usize) -> SimConfig {
        SimConfig {
            seed: self.sim.seed.wrapping_add(k as u64),
            ..self.sim.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdc::{CouplingTemplate, Factorization};

    #[test]
    fn defaults_fill_missing_keys() {
        let s = Scenario::from_toml("seeds = 3\n[sim]\nn_robots = 8\n").unwrap();
        assert_eq!(s.seeds, 3);
        assert_eq!(s.sim.n_robots, 8);
        assert_eq!(s.sim.dt, 0.01);
        assert_eq!(s.sim.weights, Default::default());
    }

    #[test]
    fn round_trip() {
        let mut s = Scenario::default();
        s.sim.factorization = Factorization::Projection(CouplingTemplate {
            x_row: [0.0, 0.0, 0.0, 0.0, 0.5, 0.1],
            ..CouplingTemplate::default()
        });
        s.sim.hysteresis.sigma_enter = Some(0.02);
        s.sim.seed = 12345;
        let text = s.to_toml().unwrap();
        let back = Scenario::from_toml(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(Scenario::from_toml(&back.to_toml().unwrap()).unwrap(), back);
        let pivot = Scenario {
            sim: SimConfig {
                factorization: Factorization::PivotDivision,
                ..SimConfig::default()
            },
            ..Scenario::default()
        };
        assert_eq!(Scenario::from_toml(&pivot.to_toml().unwrap()).unwrap(), pivot);
    }

    #[test]
    fn flags_beat_file() {
        let mut s = Scenario::from_toml("seeds = 3\n[sim]\nnoise_sigma = 0.1\ncontroller = \"pd\"\n").unwrap();
        s.apply(&Overrides {
            noise: Some(0.2),
            seeds: Some(10),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!((s.seeds, s.sim.noise_sigma, s.sim.controller), (10, 0.2, ControllerKind::Pd));
        assert!(s
            .apply(&Overrides {
                dt: Some(-1.0),
                ..Overrides::default()
            })
            .is_err());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Scenario::from_toml("[sim]\nunknown_key = 1\n").is_err());
        assert!(Scenario::from_toml("seeds = 0\n").is_err());
        assert!(Scenario::from_toml("[sim]\nn_robots = 0\n").is_err());
        assert!(Scenario::from_toml("not toml").is_err());
    }

    #[test]
    fn seed_sweep() {
        let s = Scenario::default();
        assert_eq!(s.run_config(3).seed, s.sim.seed + 3);
    }
}
