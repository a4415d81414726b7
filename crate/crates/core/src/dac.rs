//! DAC technology parameters, rate laws, saturation dynamics and ambient corrections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// One row of the technology table, as published: values refer to a unit
/// per-cycle capacity (X̄ = 1 t) on the 5-minute grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologySpec {
    pub name: String,
    /// USD per cycle switch, per tonne of per-cycle capacity.
    pub cycle_switching_cost: f64,
    /// MW per tonne of per-cycle capacity while adsorbing.
    pub adsorption_power: f64,
    /// MW per tonne of per-cycle capacity while desorbing.
    pub desorption_power: f64,
    pub beta_a1: f64,
    pub beta_a2: f64,
    pub beta_d1: f64,
    pub beta_d2: f64,
    pub cycle_hours: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TechnologyLibrary {
    pub technologies: Vec<TechnologySpec>,
}

impl TechnologyLibrary {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn get(&self, name: &str) -> Result<&TechnologySpec> {
        self.technologies
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                let known: Vec<&str> = self.technologies.iter().map(|t| t.name.as_str()).collect();
                Error::Argument(format!("unknown technology {name:?}; known: {known:?}"))
            })
    }
}

/// Plant-level knobs used when turning a table row into per-step quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantSizing {
    pub annual_capacity_t: f64,
    /// Regeneration heat per tonne of per-cycle capacity per full desorption, MWh.
    pub thermal_mwh_per_t: f64,
    /// Saturation threshold as a fraction of `beta_a1 * x_max`.
    pub rate_epsilon_fraction: f64,
}

impl Default for PlantSizing {
    fn default() -> Self {
        Self {
            annual_capacity_t: 6000.0,
            thermal_mwh_per_t: 1.8,
            rate_epsilon_fraction: 0.01,
        }
    }
}

/// A technology instantiated at plant scale with per-step quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Technology {
    pub name: String,
    /// USD per cycle switch.
    pub switch_cost: f64,
    /// MWh electricity per adsorption step.
    pub p_ads: f64,
    /// MWh electricity per desorption step.
    pub p_des: f64,
    pub beta_a1: f64,
    pub beta_a2: f64,
    pub beta_d1: f64,
    pub beta_d2: f64,
    pub cycle_hours: f64,
    /// Per-cycle capacity X̄, t.
    pub x_max: f64,
    /// Thermal draw per desorption step, MWh.
    pub h_step: f64,
    /// Rate (t/step) below which a phase counts as exhausted.
    pub rate_epsilon: f64,
}

/// Maximum capture per adsorption cycle for a plant of `annual_capacity` t/yr.
pub fn capacity_per_cycle(annual_capacity: f64, cycle_hours: f64) -> Result<f64> {
    if !(annual_capacity > 0.0) || !(cycle_hours > 0.0) {
        return Err(Error::Argument(format!(
            "capacity ({annual_capacity}) and cycle length ({cycle_hours} h) must be positive"
        )));
    }
    Ok(annual_capacity / (HOURS_PER_YEAR / cycle_hours))
}

impl TechnologySpec {
    pub fn instantiate(&self, sizing: &PlantSizing, step_seconds: u32) -> Result<Technology> {
        let x_max = capacity_per_cycle(sizing.annual_capacity_t, self.cycle_hours)?;
        if !(sizing.thermal_mwh_per_t >= 0.0) || !(sizing.rate_epsilon_fraction > 0.0) {
            return Err(Error::Argument("thermal load must be >= 0 and epsilon fraction > 0".into()));
        }
        let step_hours = step_seconds as f64 / 3600.0;
        let mut tech = Technology {
            name: self.name.clone(),
            switch_cost: self.cycle_switching_cost * x_max,
            p_ads: self.adsorption_power * x_max * step_hours,
            p_des: self.desorption_power * x_max * step_hours,
            beta_a1: self.beta_a1,
            beta_a2: self.beta_a2,
            beta_d1: self.beta_d1,
            beta_d2: self.beta_d2,
            cycle_hours: self.cycle_hours,
            x_max,
            h_step: 0.0,
            rate_epsilon: sizing.rate_epsilon_fraction * self.beta_a1 * x_max,
        };
        let steps = tech.nominal_desorption_steps();
        tech.h_step = sizing.thermal_mwh_per_t * x_max / steps as f64;
        tech.validate()?;
        Ok(tech)
    }
}

impl Technology {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > 0.0) {
            return Err(Error::Argument("x_max must be positive".into()));
        }
        if self.switch_cost < 0.0 || self.p_ads < 0.0 || self.p_des < 0.0 || self.h_step < 0.0 {
            return Err(Error::Argument("costs and energies must be non-negative".into()));
        }
        let ends = [
            self.beta_a1,
            self.beta_a1 + self.beta_a2,
            self.beta_d1,
            self.beta_d1 + self.beta_d2,
        ];
        if ends.iter().any(|b| *b < -1e-12) {
            return Err(Error::Argument(format!(
                "{}: rate caps go negative on [0, x_max]",
                self.name
            )));
        }
        Ok(())
    }

    /// Steps of rate-saturated desorption from a full sorbent until the rate
    /// drops below `rate_epsilon`.
    pub fn nominal_desorption_steps(&self) -> usize {
        let mut x = self.x_max;
        let mut n = 0;
        while n < 100_000 {
            let cap = desorption_cap(x, self);
            if cap <= self.rate_epsilon {
                break;
            }
            x -= cap.min(x);
            n += 1;
        }
        n.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Adsorb,
    Desorb,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Idle, Phase::Adsorb, Phase::Desorb];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Adsorb => "adsorb",
            Phase::Desorb => "desorb",
        }
    }

    pub fn parse(raw: &str) -> Option<Phase> {
        match raw.trim() {
            "idle" => Some(Phase::Idle),
            "adsorb" => Some(Phase::Adsorb),
            "desorb" => Some(Phase::Desorb),
            _ => None,
        }
    }

    /// `u_t - v_t`.
    fn direction(self) -> i8 {
        match self {
            Phase::Idle => 0,
            Phase::Adsorb => 1,
            Phase::Desorb => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacState {
    /// Sorbent loading, t.
    pub x: f64,
    pub phase: Phase,
    /// Cycle sign flag.
    pub k: bool,
}

impl DacState {
    pub fn empty() -> Self {
        Self {
            x: 0.0,
            phase: Phase::Idle,
            k: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: DacState,
    /// A new cycle started this step (k rising edge).
    pub switched: bool,
}

/// Next value of the cycle flag for a given phase.
pub fn next_k(k: bool, phase: Phase) -> bool {
    match phase.direction() {
        1 => true,
        -1 => false,
        _ => k,
    }
}

/// Upper bound on adsorption this step, t.
pub fn adsorption_cap(x: f64, tech: &Technology, capture_factor: f64) -> f64 {
    let frac = x / tech.x_max;
    (capture_factor * (tech.beta_a1 + tech.beta_a2 * frac) * tech.x_max).max(0.0)
}

/// Upper bound on desorption this step, t. Not affected by ambient conditions.
pub fn desorption_cap(x: f64, tech: &Technology) -> f64 {
    let frac = x / tech.x_max;
    ((tech.beta_d1 + tech.beta_d2 * frac) * tech.x_max).max(0.0)
}

/// Advances the sorbent state by one step with the given rates.
pub fn step_state(state: &DacState, phase: Phase, adsorbed: f64, desorbed: f64, tech: &Technology) -> Result<Transition> {
    let consistent = match phase {
        Phase::Idle => adsorbed == 0.0 && desorbed == 0.0,
        Phase::Adsorb => desorbed == 0.0 && adsorbed >= 0.0,
        Phase::Desorb => adsorbed == 0.0 && desorbed >= 0.0,
    };
    if !consistent {
        return Err(Error::Argument(format!(
            "rates a={adsorbed}, d={desorbed} inconsistent with phase {}",
            phase.as_str()
        )));
    }
    let x = state.x + adsorbed - desorbed;
    let tol = 1e-9 * tech.x_max;
    if x < -tol || x > tech.x_max + tol {
        return Err(Error::Infeasible(format!(
            "saturation {x} outside [0, {}]",
            tech.x_max
        )));
    }
    let k = next_k(state.k, phase);
    Ok(Transition {
        state: DacState {
            x: x.clamp(0.0, tech.x_max),
            phase,
            k,
        },
        switched: k && !state.k,
    })
}

/// Multipliers relative to laboratory conditions (20 °C, 50 % RH).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientFactors {
    /// Scales electricity use.
    pub energy_factor: f64,
    /// Scales the adsorption rate.
    pub capture_factor: f64,
}

impl AmbientFactors {
    pub const BASELINE: AmbientFactors = AmbientFactors {
        energy_factor: 1.0,
        capture_factor: 1.0,
    };
}

pub const BASELINE_TEMP_C: f64 = 20.0;
pub const BASELINE_RH: f64 = 0.5;

fn raw_energy_solid(t: f64, rh: f64) -> f64 {
    let d = rh - 0.4;
    (1.9 + 0.01 * (t - 20.0)) * d * d * d.exp() + (1.5 + 0.003 * (t - 20.0) * (t - 20.0))
}

fn raw_capture_solid(t: f64, rh: f64) -> f64 {
    let d = rh - 0.4;
    65.0 - 0.01 * t * t - (t + 20.0) * d * d
}

/// Ambient corrections for cyclic solid-sorbent DAC.
pub fn ambient_factors_solid(temp_c: f64, rh: f64) -> AmbientFactors {
    let c0 = raw_energy_solid(BASELINE_TEMP_C, BASELINE_RH);
    let eta0 = raw_capture_solid(BASELINE_TEMP_C, BASELINE_RH);
    AmbientFactors {
        energy_factor: raw_energy_solid(temp_c, rh) / c0,
        capture_factor: (raw_capture_solid(temp_c, rh) / eta0).max(0.0),
    }
}

/// Capture-rate correction for continuous KOH liquid-solvent DAC.
pub fn ambient_capture_koh(temp_c: f64, rh: f64) -> f64 {
    let raw = |t: f64, h: f64| 74.0 + 8.0 * (h - 0.5) + (t - 20.0);
    (raw(temp_c, rh) / raw(BASELINE_TEMP_C, BASELINE_RH)).max(0.0)
}
