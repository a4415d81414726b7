//! Versioned JSON run configuration.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dac::{ambient_factors_solid, PlantSizing, TechnologyLibrary, TechnologySpec};
use crate::design::{DesignContext, DesignParams, Objective, SiteData, DEFAULT_BUDGET};
use crate::economics::CostModel;
use crate::error::{Error, Result};
use crate::plant::Mode;
use crate::solar::{CollectorParams, StorageParams};
use crate::thermo::ThermalAssumptions;
use crate::threshold::ThresholdConfig;
use crate::timeseries::{
    align_all, carbon_intensity, load_ambient, load_fuel_mix, load_series_with, LoadOptions, SeriesKind, TimeSeries, MASTER_STEP_SECONDS,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub technologies: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    /// Either a ready carbon-intensity series...
    pub carbon_intensity: Option<PathBuf>,
    /// ...or a fuel mix with per-fuel emission factors.
    pub fuel_mix: Option<PathBuf>,
    pub emission_factors: Option<PathBuf>,
    pub solar: Option<PathBuf>,
    pub ambient: Option<PathBuf>,
    /// Location manifest for global runs.
    pub grid: Option<PathBuf>,
}

impl DataPaths {
    fn all_mut(&mut self) -> [&mut Option<PathBuf>; 8] {
        [
            &mut self.technologies,
            &mut self.prices,
            &mut self.carbon_intensity,
            &mut self.fuel_mix,
            &mut self.emission_factors,
            &mut self.solar,
            &mut self.ambient,
            &mut self.grid,
        ]
    }

    pub fn files(&self) -> Vec<&Path> {
        [
            &self.technologies,
            &self.prices,
            &self.carbon_intensity,
            &self.fuel_mix,
            &self.emission_factors,
            &self.solar,
            &self.ambient,
            &self.grid,
        ]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Market {
    /// USD per tonne of CO2 sold.
    pub incentive: f64,
    /// USD per tonne of emitted CO2 added to the electricity price.
    pub carbon_value: f64,
}

impl Default for Market {
    fn default() -> Self {
        Self {
            incentive: 200.0,
            carbon_value: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub budget: usize,
    pub objective: Objective,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            objective: Objective::Lco2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncentiveSettings {
    pub values: Vec<f64>,
    pub storage_candidates: Vec<f64>,
}

impl Default for IncentiveSettings {
    fn default() -> Self {
        Self {
            values: vec![0.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0],
            storage_candidates: vec![30.0, 50.0, 70.0, 90.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalSettings {
    /// Land points at or below this annual mean capacity factor are skipped.
    pub mask_cf_threshold: f64,
    pub thresholds: Vec<f64>,
    pub best_n: usize,
}

impl Default for GlobalSettings {
    fn default() -> Self {
        Self {
            mask_cf_threshold: 0.0,
            thresholds: vec![180.0, 220.0, 300.0, 400.0],
            best_n: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub data: DataPaths,
    pub technology: String,
    pub mode: Mode,
    pub sizing: PlantSizing,
    pub design: DesignParams,
    pub collector: CollectorParams,
    pub storage: StorageParams,
    pub threshold: ThresholdConfig,
    pub economics: CostModel,
    pub market: Market,
    pub battery_round_trip: f64,
    pub apply_ambient: bool,
    pub thermal: ThermalAssumptions,
    pub sweep: SweepSettings,
    pub incentives: IncentiveSettings,
    pub global: GlobalSettings,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            data: DataPaths::default(),
            technology: "MOF".into(),
            mode: Mode::Grid,
            sizing: PlantSizing::default(),
            design: DesignParams::default(),
            collector: CollectorParams::default(),
            storage: StorageParams::default(),
            threshold: ThresholdConfig::default(),
            economics: CostModel::default(),
            market: Market::default(),
            battery_round_trip: 0.88,
            apply_ambient: false,
            thermal: ThermalAssumptions::default(),
            sweep: SweepSettings::default(),
            incentives: IncentiveSettings::default(),
            global: GlobalSettings::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Site series plus the timestamp of the first step.
#[derive(Debug, Clone)]
pub struct LoadedSite {
    pub site: SiteData,
    pub start: DateTime<Utc>,
}

impl RunConfig {
    /// Parses, resolves relative paths and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&raw).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without touching the filesystem.
    pub fn from_json(raw: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| Error::Json {
            path: PathBuf::from("<config>"),
            source: e,
        })?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Schema(format!(
                    "config schema version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::Schema("config lacks a numeric schema_version".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Json {
            path: PathBuf::from("<config>"),
            source: e,
        })
    }

    pub fn resolve(&mut self, base: &Path) {
        for p in self.data.all_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in self.data.files() {
            if !f.exists() {
                return Err(Error::Schema(format!("referenced file {} does not exist", f.display())));
            }
        }
        if self.data.technologies.is_none() {
            return Err(Error::Schema("data.technologies is required".into()));
        }
        if self.data.fuel_mix.is_some() != self.data.emission_factors.is_some() {
            return Err(Error::Schema("fuel_mix and emission_factors go together".into()));
        }
        if self.mode == Mode::Grid && self.data.prices.is_none() {
            return Err(Error::Schema("grid mode needs data.prices".into()));
        }
        if self.apply_ambient && self.data.ambient.is_none() {
            return Err(Error::Schema("apply_ambient needs data.ambient".into()));
        }
        if !(self.market.incentive >= 0.0) {
            return Err(Error::Schema("market.incentive must be non-negative".into()));
        }
        if !(self.battery_round_trip > 0.0 && self.battery_round_trip <= 1.0) {
            return Err(Error::Schema("battery_round_trip must lie in (0, 1]".into()));
        }
        self.design.validate()?;
        self.collector.validate()?;
        self.storage.validate()?;
        self.threshold.validate()?;
        self.economics.validate()?;
        Ok(())
    }

    pub fn technology_spec(&self) -> Result<TechnologySpec> {
        let path = self
            .data
            .technologies
            .as_ref()
            .ok_or_else(|| Error::Schema("data.technologies is required".into()))?;
        Ok(TechnologyLibrary::load(path)?.get(&self.technology)?.clone())
    }

    pub fn context(&self) -> Result<DesignContext> {
        Ok(DesignContext {
            tech: self.technology_spec()?,
            sizing: self.sizing,
            collector: self.collector,
            storage: self.storage,
            cost: self.economics,
            threshold: self.threshold,
            mode: self.mode,
            incentive: self.market.incentive,
            carbon_value: self.market.carbon_value,
            battery_round_trip: self.battery_round_trip,
            apply_ambient: self.apply_ambient,
        })
    }

    /// Loads every configured series onto the 5-minute grid.
    pub fn load_site(&self) -> Result<LoadedSite> {
        let opts = LoadOptions { fill_missing: true };
        let solar_path = self.data.solar.as_ref().ok_or_else(|| Error::Schema("data.solar is required".into()))?;
        let solar = load_series_with(solar_path, SeriesKind::Solar, &opts)?;
        let mut series: Vec<TimeSeries> = vec![solar];
        let price_at = self.data.prices.as_ref().map(|p| -> Result<usize> {
            series.push(load_series_with(p, SeriesKind::Price, &opts)?);
            Ok(series.len() - 1)
        });
        let price_at = price_at.transpose()?;
        let ci_at = if let Some(p) = &self.data.carbon_intensity {
            series.push(load_series_with(p, SeriesKind::CarbonIntensity, &opts)?);
            Some(series.len() - 1)
        } else if let (Some(mix), Some(ef)) = (&self.data.fuel_mix, &self.data.emission_factors) {
            series.push(carbon_intensity(&load_fuel_mix(mix, ef)?)?);
            Some(series.len() - 1)
        } else {
            None
        };
        let amb_at = if let Some(p) = &self.data.ambient {
            let (t, h) = load_ambient(p, &opts)?;
            series.push(t);
            series.push(h);
            Some(series.len() - 2)
        } else {
            None
        };
        let refs: Vec<&TimeSeries> = series.iter().collect();
        let aligned = align_all(&refs, MASTER_STEP_SECONDS)?;
        let n = aligned[0].len();
        let site = SiteData {
            step_seconds: MASTER_STEP_SECONDS,
            wholesale_price: price_at.map_or_else(|| vec![0.0; n], |i| aligned[i].values.clone()),
            carbon_intensity: ci_at.map_or_else(|| vec![0.0; n], |i| aligned[i].values.clone()),
            dni_cf: aligned[0].values.clone(),
            pv_cf: Vec::new(),
            ambient: amb_at.map(|i| {
                aligned[i]
                    .values
                    .iter()
                    .zip(&aligned[i + 1].values)
                    .map(|(&t, &h)| ambient_factors_solid(t, h))
                    .collect()
            }),
        };
        Ok(LoadedSite {
            site,
            start: aligned[0].start,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn schema_version_is_checked() {
        assert!(matches!(RunConfig::from_json("{}"), Err(Error::Schema(_))));
        assert!(matches!(RunConfig::from_json(r#"{"schema_version": 9}"#), Err(Error::Schema(_))));
        let err = RunConfig::from_json(r#"{"schema_version": 1, "bogus": 3}"#).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tech.json"), r#"{"technologies": []}"#).unwrap();
        let cfg = r#"{"schema_version": 1, "mode": "standalone", "data": {"technologies": "tech.json"}, "output_dir": "o"}"#;
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, cfg).unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.data.technologies.unwrap(), dir.path().join("tech.json"));
        assert_eq!(c.output_dir, dir.path().join("o"));

        std::fs::write(&path, r#"{"schema_version": 1, "data": {"technologies": "nope.json"}}"#).unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("nope.json"), "{err}");
    }

    #[test]
    fn missing_config_names_path() {
        let err = RunConfig::load("/definitely/not/here.json").unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("/definitely/not/here.json"));
    }
}
