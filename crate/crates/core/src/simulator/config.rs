//! Scenario files: versioned TOML documents holding named [`MarketParams`].
//!
//! ```toml
//! format_version = 1
//!
//! [[scenario]]
//! name = "LH"
//! [scenario.market]
//! mu = 0.0
//! sigma = 0.02
//! # ...
//! [scenario.market.hawkes]
//! mu_a = 30.0
//! # ...
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MarketParams;
use crate::{Error, Result};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub market: MarketParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub format_version: u32,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<Scenario>,
}

impl ScenarioFile {
    pub fn new(scenarios: Vec<Scenario>) -> Self {
        Self {
            format_version: SCENARIO_FORMAT_VERSION,
            scenarios,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.format_version != SCENARIO_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario format_version {} (expected {SCENARIO_FORMAT_VERSION})",
                file.format_version
            )));
        }
        if file.scenarios.is_empty() {
            return Err(Error::Config("scenario file lists no scenarios".into()));
        }
        for s in &file.scenarios {
            s.market
                .validate()
                .map_err(|e| Error::Config(format!("scenario `{}`: {e}", s.name)))?;
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}
