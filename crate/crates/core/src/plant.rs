//! One-step plant dynamics shared by every scheduler: sorbent saturation,
//! sand-storage heat balance, optional PV + battery supply, and per-step
//! economics.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dac::{adsorption_cap, desorption_cap, step_state, AmbientFactors, DacState, Phase, Technology};
use crate::error::{Error, Result};

/// Slack allowed when comparing available heat or battery energy to a demand.
pub const ENERGY_TOL: f64 = 1e-12;

/// Electricity price after adding the value of the carbon it carries.
pub fn adjust_price_carbon(base_price: f64, carbon_intensity: f64, carbon_value: f64) -> f64 {
    base_price + carbon_value * carbon_intensity
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Grid,
    Standalone,
}

/// Aligned per-step inputs for one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub step_seconds: u32,
    /// Wholesale electricity price, USD/MWh.
    pub wholesale_price: Vec<f64>,
    /// Grid carbon intensity, tCO2/MWh.
    pub carbon_intensity: Vec<f64>,
    /// Heat delivered to storage, MWh/step.
    pub flux: Vec<f64>,
    pub energy_factor: Vec<f64>,
    pub capture_factor: Vec<f64>,
    /// PV energy available per step (stand-alone only), MWh.
    pub pv_energy: Vec<f64>,
    /// CO2 value π, USD/t.
    pub incentive: f64,
    /// Carbon value applied to electricity ρ_e, USD/t.
    pub carbon_value: f64,
    pub mode: Mode,
    /// Effective decision price λ_t.
    pub price: Vec<f64>,
}

impl Scenario {
    /// Grid-connected scenario at laboratory ambient conditions.
    pub fn grid(
        step_seconds: u32,
        wholesale_price: Vec<f64>,
        carbon_intensity: Vec<f64>,
        flux: Vec<f64>,
        incentive: f64,
        carbon_value: f64,
    ) -> Result<Self> {
        let n = wholesale_price.len();
        let mut s = Self {
            step_seconds,
            wholesale_price,
            carbon_intensity,
            flux,
            energy_factor: vec![1.0; n],
            capture_factor: vec![1.0; n],
            pv_energy: Vec::new(),
            incentive,
            carbon_value,
            mode: Mode::Grid,
            price: Vec::new(),
        };
        s.refresh_price();
        s.validate()?;
        Ok(s)
    }

    /// Stand-alone scenario: no grid purchases, PV energy per step instead.
    pub fn standalone(step_seconds: u32, flux: Vec<f64>, pv_energy: Vec<f64>, incentive: f64) -> Result<Self> {
        let n = flux.len();
        let mut s = Self {
            step_seconds,
            wholesale_price: vec![0.0; n],
            carbon_intensity: vec![0.0; n],
            flux,
            energy_factor: vec![1.0; n],
            capture_factor: vec![1.0; n],
            pv_energy,
            incentive,
            carbon_value: 0.0,
            mode: Mode::Standalone,
            price: Vec::new(),
        };
        s.refresh_price();
        s.validate()?;
        Ok(s)
    }

    pub fn with_ambient(mut self, factors: &[AmbientFactors]) -> Result<Self> {
        if factors.len() != self.len() {
            return Err(Error::Schema(format!(
                "ambient series has {} steps, scenario has {}",
                factors.len(),
                self.len()
            )));
        }
        self.energy_factor = factors.iter().map(|f| f.energy_factor).collect();
        self.capture_factor = factors.iter().map(|f| f.capture_factor).collect();
        Ok(self)
    }

    pub fn with_incentive(mut self, incentive: f64) -> Self {
        self.incentive = incentive;
        self
    }

    pub fn refresh_price(&mut self) {
        self.price = self
            .wholesale_price
            .iter()
            .zip(&self.carbon_intensity)
            .map(|(&p, &e)| adjust_price_carbon(p, e, self.carbon_value))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.wholesale_price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wholesale_price.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.carbon_intensity.len(),
            self.flux.len(),
            self.energy_factor.len(),
            self.capture_factor.len(),
            self.price.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Schema(format!("misaligned scenario series: {n} vs {lens:?}")));
        }
        if self.mode == Mode::Standalone && self.pv_energy.len() != n {
            return Err(Error::Schema("stand-alone scenario needs a PV series of equal length".into()));
        }
        if !(self.incentive >= 0.0) {
            return Err(Error::Argument("incentive must be non-negative".into()));
        }
        if self.step_seconds == 0 {
            return Err(Error::Argument("step_seconds must be positive".into()));
        }
        Ok(())
    }

    pub fn slice(&self, range: Range<usize>) -> ScenarioSlice<'_> {
        ScenarioSlice {
            step_seconds: self.step_seconds,
            price: &self.price[range.clone()],
            wholesale_price: &self.wholesale_price[range.clone()],
            carbon_intensity: &self.carbon_intensity[range.clone()],
            flux: &self.flux[range.clone()],
            energy_factor: &self.energy_factor[range.clone()],
            capture_factor: &self.capture_factor[range.clone()],
            pv_energy: if self.pv_energy.is_empty() {
                &[]
            } else {
                &self.pv_energy[range]
            },
            incentive: self.incentive,
            mode: self.mode,
        }
    }

    pub fn full(&self) -> ScenarioSlice<'_> {
        self.slice(0..self.len())
    }

    /// Duration covered, in years of 8760 h.
    pub fn years(&self) -> f64 {
        self.len() as f64 * self.step_seconds as f64 / (8760.0 * 3600.0)
    }
}

/// Borrowed window over a [`Scenario`].
#[derive(Debug, Clone, Copy)]
pub struct ScenarioSlice<'a> {
    pub step_seconds: u32,
    pub price: &'a [f64],
    pub wholesale_price: &'a [f64],
    pub carbon_intensity: &'a [f64],
    pub flux: &'a [f64],
    pub energy_factor: &'a [f64],
    pub capture_factor: &'a [f64],
    pub pv_energy: &'a [f64],
    pub incentive: f64,
    pub mode: Mode,
}

impl<'a> ScenarioSlice<'a> {
    pub fn len(&self) -> usize {
        self.price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.price.is_empty()
    }

    pub fn sub(&self, range: Range<usize>) -> ScenarioSlice<'a> {
        ScenarioSlice {
            step_seconds: self.step_seconds,
            price: &self.price[range.clone()],
            wholesale_price: &self.wholesale_price[range.clone()],
            carbon_intensity: &self.carbon_intensity[range.clone()],
            flux: &self.flux[range.clone()],
            energy_factor: &self.energy_factor[range.clone()],
            capture_factor: &self.capture_factor[range.clone()],
            pv_energy: if self.pv_energy.is_empty() {
                self.pv_energy
            } else {
                &self.pv_energy[range]
            },
            incentive: self.incentive,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerSupply {
    Grid,
    Battery { capacity_mwh: f64, round_trip_efficiency: f64 },
}

/// Everything about the plant that stays fixed during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub tech: Technology,
    /// Effective storage capacity h_eff, MWh.
    pub storage_capacity: f64,
    pub retention: f64,
    pub power: PowerSupply,
}

impl PlantConfig {
    pub fn grid(tech: Technology, storage_capacity: f64, retention: f64) -> Self {
        Self {
            tech,
            storage_capacity,
            retention,
            power: PowerSupply::Grid,
        }
    }

    pub fn check_state(&self, s: &PlantState) -> Result<()> {
        let tol = 1e-9;
        if !(s.dac.x >= -tol * self.tech.x_max && s.dac.x <= self.tech.x_max * (1.0 + tol)) {
            return Err(Error::Infeasible(format!("initial saturation {} outside [0, {}]", s.dac.x, self.tech.x_max)));
        }
        if !(s.h >= 0.0 && s.h <= self.storage_capacity + tol) {
            return Err(Error::Infeasible(format!(
                "initial storage {} outside [0, {}]",
                s.h, self.storage_capacity
            )));
        }
        if let PowerSupply::Battery { capacity_mwh, .. } = self.power {
            if !(s.battery >= 0.0 && s.battery <= capacity_mwh + tol) {
                return Err(Error::Infeasible(format!("initial battery {} outside [0, {capacity_mwh}]", s.battery)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub dac: DacState,
    /// Stored usable heat, MWh.
    pub h: f64,
    /// Battery charge, MWh.
    pub battery: f64,
    /// Threshold policy mode: regenerating until the sorbent is depleted.
    pub desorbing: bool,
}

impl PlantState {
    pub fn initial(h0: f64) -> Self {
        Self {
            dac: DacState::empty(),
            h: h0,
            battery: 0.0,
            desorbing: false,
        }
    }
}

impl Default for PlantState {
    fn default() -> Self {
        Self::initial(0.0)
    }
}

/// Outcome of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub u: bool,
    pub v: bool,
    pub a: f64,
    pub d: f64,
    /// Saturation at the end of the step.
    pub x: f64,
    /// Stored heat at the end of the step.
    pub h: f64,
    pub k: bool,
    pub z: bool,
    /// Electricity consumed, MWh.
    pub electricity: f64,
    /// Decision price λ_t.
    pub price: f64,
    pub revenue: f64,
    pub energy_cost: f64,
    pub switch_cost: f64,
    pub curtailed: f64,
    pub emitted: f64,
    pub battery: f64,
}

impl StepRecord {
    pub fn phase(&self) -> Option<Phase> {
        match (self.u, self.v) {
            (false, false) => Some(Phase::Idle),
            (true, false) => Some(Phase::Adsorb),
            (false, true) => Some(Phase::Desorb),
            (true, true) => None,
        }
    }

    pub fn profit(&self) -> f64 {
        self.revenue - self.energy_cost - self.switch_cost
    }

    pub fn is_active(&self) -> bool {
        self.u || self.v
    }
}

impl PlantConfig {
    /// Applies `phase` at step `t` of `slice` with rates at their caps.
    /// Returns `None` when the phase is infeasible (not enough heat or power).
    #[inline]
    pub fn advance(&self, state: &PlantState, phase: Phase, slice: &ScenarioSlice<'_>, t: usize) -> Option<(PlantState, StepRecord)> {
        let tech = &self.tech;
        let x = state.dac.x;
        let (a, d) = match phase {
            Phase::Idle => (0.0, 0.0),
            Phase::Adsorb => (adsorption_cap(x, tech, slice.capture_factor[t]).min(tech.x_max - x).max(0.0), 0.0),
            Phase::Desorb => (0.0, desorption_cap(x, tech).min(x)),
        };

        let available_heat = self.retention * state.h + slice.flux[t];
        let draw = if phase == Phase::Desorb { tech.h_step } else { 0.0 };
        if available_heat + ENERGY_TOL < draw {
            return None;
        }
        let after = (available_heat - draw).max(0.0);
        let h = after.min(self.storage_capacity);
        let curtailed = after - h;

        let base = match phase {
            Phase::Idle => 0.0,
            Phase::Adsorb => tech.p_ads,
            Phase::Desorb => tech.p_des,
        };
        let electricity = slice.energy_factor[t] * base;

        let battery = match self.power {
            PowerSupply::Grid => 0.0,
            PowerSupply::Battery {
                capacity_mwh,
                round_trip_efficiency,
            } => {
                let leg = round_trip_efficiency.sqrt();
                let pv = slice.pv_energy[t];
                if pv >= electricity {
                    (state.battery + (pv - electricity) * leg).min(capacity_mwh)
                } else {
                    let needed = (electricity - pv) / leg;
                    if needed > state.battery + ENERGY_TOL {
                        return None;
                    }
                    (state.battery - needed).max(0.0)
                }
            }
        };

        let tr = step_state(&state.dac, phase, a, d, tech).ok()?;
        let price = slice.price[t];
        let record = StepRecord {
            u: phase == Phase::Adsorb,
            v: phase == Phase::Desorb,
            a,
            d,
            x: tr.state.x,
            h,
            k: tr.state.k,
            z: tr.switched,
            electricity,
            price,
            revenue: slice.incentive * d,
            energy_cost: price * electricity,
            switch_cost: if tr.switched { tech.switch_cost } else { 0.0 },
            curtailed,
            emitted: slice.carbon_intensity[t] * electricity,
            battery,
        };
        let next = PlantState {
            dac: tr.state,
            h,
            battery,
            desorbing: state.desorbing,
        };
        Some((next, record))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub profit: f64,
    pub revenue: f64,
    pub energy_cost: f64,
    pub switch_cost: f64,
    /// CO2 adsorbed, t.
    pub captured: f64,
    /// CO2 desorbed (sold), t.
    pub desorbed: f64,
    pub electricity_mwh: f64,
    /// Electricity valued at the wholesale price, USD.
    pub wholesale_cost: f64,
    pub cycles: u64,
    pub active_steps: u64,
    pub adsorb_steps: u64,
    pub desorb_steps: u64,
    pub steps: u64,
    pub curtailed_mwh: f64,
    pub emitted_t: f64,
    /// Fraction of steps with the DAC adsorbing or desorbing.
    pub capacity_factor: f64,
}

impl Totals {
    pub fn from_steps(steps: &[StepRecord], wholesale_price: &[f64]) -> Self {
        let mut t = Totals::default();
        for (i, s) in steps.iter().enumerate() {
            t.profit += s.profit();
            t.revenue += s.revenue;
            t.energy_cost += s.energy_cost;
            t.switch_cost += s.switch_cost;
            t.captured += s.a;
            t.desorbed += s.d;
            t.electricity_mwh += s.electricity;
            t.wholesale_cost += wholesale_price.get(i).copied().unwrap_or(s.price) * s.electricity;
            t.cycles += s.z as u64;
            t.active_steps += s.is_active() as u64;
            t.adsorb_steps += s.u as u64;
            t.desorb_steps += s.v as u64;
            t.curtailed_mwh += s.curtailed;
            t.emitted_t += s.emitted;
        }
        t.steps = steps.len() as u64;
        t.capacity_factor = if steps.is_empty() {
            0.0
        } else {
            t.active_steps as f64 / steps.len() as f64
        };
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub step_seconds: u32,
    pub initial: PlantState,
    pub steps: Vec<StepRecord>,
    pub totals: Totals,
}

impl Schedule {
    pub fn new(step_seconds: u32, initial: PlantState, steps: Vec<StepRecord>, wholesale_price: &[f64]) -> Self {
        let totals = Totals::from_steps(&steps, wholesale_price);
        Self {
            step_seconds,
            initial,
            steps,
            totals,
        }
    }

    pub fn phases(&self) -> Vec<Option<Phase>> {
        self.steps.iter().map(|s| s.phase()).collect()
    }

    /// Writes `step,phase,a,d,X,h,z`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["step", "phase", "a", "d", "X", "h", "z"])?;
        for (i, s) in self.steps.iter().enumerate() {
            let phase = s.phase().map_or("conflict", |p| p.as_str());
            w.write_record([
                i.to_string(),
                phase.to_string(),
                format!("{}", s.a),
                format!("{}", s.d),
                format!("{}", s.x),
                format!("{}", s.h),
                (s.z as u8).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}

/// One row of `schedule.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub u: bool,
    pub v: bool,
    pub a: f64,
    pub d: f64,
    pub x: f64,
    pub h: f64,
    pub z: bool,
}

impl From<&StepRecord> for ScheduleRow {
    fn from(s: &StepRecord) -> Self {
        Self {
            u: s.u,
            v: s.v,
            a: s.a,
            d: s.d,
            x: s.x,
            h: s.h,
            z: s.z,
        }
    }
}

impl Schedule {
    pub fn rows(&self) -> Vec<ScheduleRow> {
        self.steps.iter().map(ScheduleRow::from).collect()
    }
}

pub fn read_schedule_csv(path: impl AsRef<Path>) -> Result<Vec<ScheduleRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ["step", "phase", "a", "d", "X", "h", "z"] {
        return Err(Error::Schema(format!("{}: unexpected schedule header {header:?}", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let perr = |m: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message: m,
        };
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| perr(format!("column {j}: {e}")))
        };
        let raw_phase = rec.get(1).unwrap_or("").trim();
        let (u, v) = match raw_phase {
            "conflict" => (true, true),
            other => match Phase::parse(other) {
                Some(Phase::Idle) => (false, false),
                Some(Phase::Adsorb) => (true, false),
                Some(Phase::Desorb) => (false, true),
                None => return Err(perr(format!("unknown phase {other:?}"))),
            },
        };
        rows.push(ScheduleRow {
            u,
            v,
            a: num(2)?,
            d: num(3)?,
            x: num(4)?,
            h: num(5)?,
            z: num(6)? != 0.0,
        });
    }
    Ok(rows)
}
