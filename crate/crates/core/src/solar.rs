//! Concentrated-solar-thermal collector and sand-storage model.
//!
//! Collector efficiency is a fitted curve: a 0.78 optical ceiling minus a loss
//! that grows with the square of the target temperature and shrinks with
//! irradiance (as a capacity factor) and concentration ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regeneration temperature of the sorbent; collectors must at least reach it.
pub const REGENERATION_TEMP_C: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectorParams {
    /// Temperature loss coefficient, 1/°C².
    pub alpha: f64,
    pub beta: f64,
    /// Capacity-factor offset keeping the loss finite at zero irradiance.
    pub m: f64,
    pub gamma: f64,
    pub base_efficiency: f64,
    /// Concentration ratio.
    pub cr: f64,
    /// Collector target temperature, °C.
    pub target_temp_c: f64,
}

impl Default for CollectorParams {
    fn default() -> Self {
        Self {
            alpha: 8.8e-7,
            beta: 1.1,
            m: 0.1,
            gamma: 1.0,
            base_efficiency: 0.78,
            cr: 1.0,
            target_temp_c: 400.0,
        }
    }
}

impl CollectorParams {
    pub fn with_design(cr: f64, target_temp_c: f64) -> Self {
        Self {
            cr,
            target_temp_c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let consts = [self.alpha, self.beta, self.m, self.gamma, self.base_efficiency];
        if consts.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Design("collector constants must be positive".into()));
        }
        if !(self.cr >= 1.0) {
            return Err(Error::Design(format!("concentration ratio {} < 1", self.cr)));
        }
        if !(self.target_temp_c >= REGENERATION_TEMP_C) {
            return Err(Error::Design(format!(
                "target temperature {} °C below regeneration temperature",
                self.target_temp_c
            )));
        }
        Ok(())
    }
}

/// Collector efficiency, clamped to zero where the loss exceeds the ceiling.
pub fn collector_efficiency(dni_cf: f64, p: &CollectorParams) -> f64 {
    let t = p.target_temp_c;
    let loss = p.alpha * t * t * (p.beta / (dni_cf + p.m)) * (p.gamma / p.cr);
    (p.base_efficiency - loss).max(0.0)
}

/// Heat delivered to storage per step (MWh) for a collector sized `cp` MWh/step.
pub fn thermal_flux(dni_cf: f64, cp: f64, p: &CollectorParams, charge_efficiency: f64) -> f64 {
    if dni_cf <= 0.0 {
        return 0.0;
    }
    dni_cf * cp * collector_efficiency(dni_cf, p) * charge_efficiency
}

pub fn flux_series(dni_cf: &[f64], cp: f64, p: &CollectorParams, charge_efficiency: f64) -> Vec<f64> {
    dni_cf
        .iter()
        .map(|&d| thermal_flux(d, cp, p, charge_efficiency))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StorageParams {
    /// Rated capacity in MWh over a `unit_span_c` temperature span.
    pub h_rated: f64,
    pub unit_span_c: f64,
    /// Minimum usable source temperature, °C.
    pub min_temp_c: f64,
    /// Fraction of stored heat kept from one step to the next.
    pub per_step_retention: f64,
    pub charge_efficiency: f64,
}

impl Default for StorageParams {
    fn default() -> Self {
        Self {
            h_rated: 70.0,
            unit_span_c: 100.0,
            min_temp_c: 300.0,
            per_step_retention: 0.99986,
            charge_efficiency: 0.95,
        }
    }
}

impl StorageParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.per_step_retention > 0.0 && self.per_step_retention <= 1.0) {
            return Err(Error::Design("storage retention must lie in (0, 1]".into()));
        }
        if !(self.charge_efficiency > 0.0 && self.charge_efficiency <= 1.0) {
            return Err(Error::Design("charge efficiency must lie in (0, 1]".into()));
        }
        if !(self.h_rated >= 0.0) || !(self.unit_span_c > 0.0) {
            return Err(Error::Design("storage rating must be non-negative with a positive span".into()));
        }
        if self.min_temp_c < 300.0 {
            return Err(Error::Design(format!(
                "minimum source temperature {} °C below 300 °C",
                self.min_temp_c
            )));
        }
        Ok(())
    }
}

/// Usable storage capacity (MWh) when charged up to `target_temp_c`.
pub fn effective_capacity(s: &StorageParams, target_temp_c: f64) -> Result<f64> {
    if target_temp_c < s.min_temp_c {
        return Err(Error::Design(format!(
            "target {target_temp_c} °C is below the storage minimum {} °C",
            s.min_temp_c
        )));
    }
    Ok(s.h_rated * (target_temp_c - s.min_temp_c) / s.unit_span_c)
}
