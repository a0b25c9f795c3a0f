//! Run configuration loaded from TOML. Missing keys take the values of the
//! bundled `config/default.toml`.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cost::{LatencyParams, TileCostParams};
use crate::error::{Error, Result};
use crate::fragment::{SortKey, TileGeometry};
use crate::network::RapaPlan;
use crate::packing::{Budget, FitPolicy, PackMode};
use crate::sweep::{default_aspect_multipliers, default_row_dims, PackerChoice, SweepConfig};

/// The bundled default configuration, verbatim.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub anchor_tile: String,
    pub anchor_efficiency: f64,
    pub d_unit_in: f64,
    pub d_unit_out: f64,
    /// Explicit control-block edge; overrides the anchor fit when set.
    pub d_cnt: Option<f64>,
    pub cell_area_mm2: Option<f64>,
    pub a_aux: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            anchor_tile: "256x256".into(),
            anchor_efficiency: 0.2,
            d_unit_in: 1.0,
            d_unit_out: 1.0,
            d_cnt: None,
            cell_area_mm2: None,
            a_aux: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub row_dims: Vec<u32>,
    pub aspect_multipliers: Vec<u32>,
    pub packer: PackerChoice,
    pub rapa: Option<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            row_dims: default_row_dims(),
            aspect_multipliers: default_aspect_multipliers(),
            packer: PackerChoice::Greedy,
            rapa: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PackingSection {
    pub policy: FitPolicy,
    pub sort: SortKey,
    pub max_nodes: u64,
    pub time_limit_secs: f64,
    pub exact_max_items: usize,
}

impl Default for PackingSection {
    fn default() -> Self {
        let b = Budget::default();
        Self {
            policy: FitPolicy::default(),
            sort: SortKey::default(),
            max_nodes: b.max_nodes,
            time_limit_secs: b.time_limit.as_secs_f64(),
            exact_max_items: b.max_items,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolConfig {
    pub cost: CostSection,
    pub latency: LatencyParams,
    pub sweep: SweepSection,
    pub packing: PackingSection,
}

impl ToolConfig {
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_CONFIG_TOML, "config/default.toml").expect("bundled config parses")
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn cost_params(&self) -> Result<TileCostParams> {
        let c = &self.cost;
        let mut params = match c.d_cnt {
            Some(d_cnt) => TileCostParams {
                d_unit_in: c.d_unit_in,
                d_unit_out: c.d_unit_out,
                d_cnt,
                ..TileCostParams::default()
            },
            None => {
                let anchor: TileGeometry = c.anchor_tile.parse()?;
                TileCostParams::calibrated(anchor, c.anchor_efficiency, c.d_unit_in, c.d_unit_out)?
            }
        };
        params.cell_area_scale = c.cell_area_mm2;
        params.a_aux = c.a_aux;
        params.validate()?;
        Ok(params)
    }

    pub fn budget(&self) -> Result<Budget> {
        let p = &self.packing;
        if !(p.time_limit_secs.is_finite() && p.time_limit_secs >= 0.0) {
            return Err(Error::Config(format!(
                "time_limit_secs must be a non-negative number (got {})",
                p.time_limit_secs
            )));
        }
        Ok(Budget {
            max_nodes: p.max_nodes,
            time_limit: Duration::from_secs_f64(p.time_limit_secs),
            max_items: p.exact_max_items,
        })
    }

    pub fn rapa(&self) -> Result<Option<RapaPlan>> {
        self.sweep.rapa.as_deref().map(str::parse).transpose()
    }

    pub fn sweep_config(&self, mode: PackMode) -> Result<SweepConfig> {
        let config = SweepConfig {
            row_dims: self.sweep.row_dims.clone(),
            aspect_multipliers: self.sweep.aspect_multipliers.clone(),
            mode,
            rapa: self.rapa()?,
            packer: self.sweep.packer,
            sort_key: self.packing.sort,
            policy: self.packing.policy,
            cost: self.cost_params()?,
            latency: self.latency,
            budget: self.budget()?,
        };
        config.validate()?;
        Ok(config)
    }
}
