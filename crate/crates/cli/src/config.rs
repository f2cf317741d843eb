//! Exchange registry (CSV), model parameters (TOML) and calibration grid (TOML).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pricequake_core::calibration::{SearchAxis, SearchSpace};
use pricequake_core::engine::{ModelParams, DEFAULT_WARMUP_DAYS};
use pricequake_core::market::{validate_registry, ZoneDistance};
use pricequake_core::ExchangeSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct RegistryRow {
    name: String,
    capitalization: f64,
    time_zone: f64,
    open_hour: f64,
    close_hour: f64,
}

/// Reads `name,capitalization,time_zone,open_hour,close_hour` rows; ids follow row order.
pub fn parse_registry(reader: impl Read) -> Result<Vec<ExchangeSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (id, row) in rdr.deserialize::<RegistryRow>().enumerate() {
        let row = row.with_context(|| format!("registry row {}", id + 2))?;
        out.push(ExchangeSpec::new(id, row.name, row.capitalization, row.time_zone, row.open_hour, row.close_hour));
    }
    validate_registry(&out)?;
    Ok(out)
}

pub fn read_registry(path: &Path) -> Result<Vec<ExchangeSpec>> {
    let file = fs::File::open(path).with_context(|| format!("opening registry {}", path.display()))?;
    parse_registry(file).with_context(|| format!("reading registry {}", path.display()))
}

pub fn write_registry(writer: impl Write, exchanges: &[ExchangeSpec]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in exchanges {
        w.serialize(RegistryRow {
            name: e.name.clone(),
            capitalization: e.capitalization,
            time_zone: e.time_zone,
            open_hour: e.open_hour,
            close_hour: e.close_hour,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter file. Exactly one of `sigma` and `sigma2` is required;
/// `sigmas` optionally gives one standard deviation per exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub r_c: f64,
    pub tau: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_days: Option<u32>,
    #[serde(default)]
    pub circular_time_zones: bool,
}

impl ParamsFile {
    pub fn from_params(p: &ModelParams) -> Self {
        Self {
            r_c: p.threshold,
            tau: p.zone_scale,
            gamma: p.cap_scale,
            sigma: None,
            sigma2: Some(p.noise_variance()),
            sigmas: None,
            seed: p.seed,
            warmup_days: None,
            circular_time_zones: false,
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let noise_sd = match (self.sigma, self.sigma2) {
            (Some(s), None) => s,
            (None, Some(v)) if v >= 0.0 => v.sqrt(),
            (None, Some(_)) => bail!("sigma2 must be non-negative"),
            (Some(_), Some(_)) => bail!("give either sigma or sigma2, not both"),
            (None, None) => bail!("parameter file needs sigma or sigma2"),
        };
        let p = ModelParams {
            threshold: self.r_c,
            zone_scale: self.tau,
            cap_scale: self.gamma,
            noise_sd,
            seed: self.seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zone_distance(&self) -> ZoneDistance {
        if self.circular_time_zones {
            ZoneDistance::Circular
        } else {
            ZoneDistance::Absolute
        }
    }

    pub fn warmup_days(&self) -> u32 {
        self.warmup_days.unwrap_or(DEFAULT_WARMUP_DAYS)
    }
}

pub fn read_params(path: &Path) -> Result<ParamsFile> {
    let text = fs::read_to_string(path).with_context(|| format!("opening parameter file {}", path.display()))?;
    let file: ParamsFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    file.model_params().with_context(|| format!("checking {}", path.display()))?;
    Ok(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisFile {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl From<AxisFile> for SearchAxis {
    fn from(a: AxisFile) -> Self {
        SearchAxis::new(a.lower, a.upper, a.points)
    }
}

/// Calibration grid; missing sections fall back to the default search space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub gamma: Option<AxisFile>,
    pub tau: Option<AxisFile>,
    pub r_c: Option<AxisFile>,
    pub refinement_passes: Option<usize>,
    #[serde(default)]
    pub circular_time_zones: bool,
}

impl GridFile {
    pub fn search_space(&self) -> SearchSpace {
        let d = SearchSpace::default();
        SearchSpace {
            cap_scale: self.gamma.map_or(d.cap_scale, Into::into),
            zone_scale: self.tau.map_or(d.zone_scale, Into::into),
            threshold: self.r_c.map_or(d.threshold, Into::into),
            refinement_passes: self.refinement_passes.unwrap_or(d.refinement_passes),
        }
    }
}

pub fn read_grid(path: &Path) -> Result<GridFile> {
    let text = fs::read_to_string(path).with_context(|| format!("opening grid file {}", path.display()))?;
    let grid: GridFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    grid.search_space().validate()?;
    Ok(grid)
}
