//! Two-node lumped thermal model (sand store and DAC thermal mass) used to
//! check whether a schedule's regeneration cycles are physically achievable.
//!
//! The sand store is charged by the solar flux and discharges through
//! `ua_heat` into the DAC during desorption steps. After the last desorption
//! step of an episode the DAC is cooled through `ua_cool` towards a water
//! sink until it reaches the cooling target.

use serde::{Deserialize, Serialize};

use crate::dac::Technology;
use crate::error::{Error, Result};
use crate::plant::ScheduleRow;
use crate::solar::StorageParams;

const J_PER_MWH: f64 = 3.6e9;
const TEMP_TOL: f64 = 1e-9;
/// Largest admissible conductance, W/K.
pub const UA_MAX: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalPlant {
    /// Sand heat capacity m·c, J/K.
    pub sand_heat_capacity: f64,
    /// Sand temperature at zero usable energy, °C.
    pub sand_min_temp_c: f64,
    /// Sand temperature at full charge, °C.
    pub sand_max_temp_c: f64,
    /// Fraction of stored energy kept per schedule step.
    pub retention: f64,
    /// DAC thermal mass, J/K.
    pub dac_heat_capacity: f64,
    /// Heat consumed while holding at the regeneration temperature, W.
    pub hold_power: f64,
    pub ua_heat: f64,
    pub ua_cool: f64,
    pub sink_temp_c: f64,
    pub cooling_target_c: f64,
    pub regen_temp_c: f64,
    pub sim_step_s: f64,
    /// Share of the desorption time the DAC must spend at the regeneration temperature.
    pub hold_fraction: f64,
}

/// How the per-cycle regeneration heat is split and what calibration aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalAssumptions {
    /// Share of the regeneration heat that warms the DAC mass from cooling target to 100 °C.
    pub sensible_fraction: f64,
    /// Share of the cycle available for heat-up, hold and cool-down.
    pub cycle_margin: f64,
    pub sink_temp_c: f64,
    pub cooling_target_c: f64,
    pub sim_step_s: f64,
    pub hold_fraction: f64,
}

impl Default for ThermalAssumptions {
    fn default() -> Self {
        Self {
            sensible_fraction: 0.6,
            cycle_margin: 0.8,
            sink_temp_c: 15.0,
            cooling_target_c: 20.0,
            sim_step_s: 10.0,
            hold_fraction: 0.5,
        }
    }
}

impl ThermalPlant {
    /// Uncalibrated plant (zero conductances) for a storage design and technology.
    pub fn template(storage: &StorageParams, target_temp_c: f64, tech: &Technology, step_seconds: u32, a: &ThermalAssumptions) -> Self {
        let span = (target_temp_c - storage.min_temp_c).max(0.0);
        let sand_heat_capacity = storage.h_rated * J_PER_MWH / storage.unit_span_c;
        let cycle_energy = tech.h_step * tech.nominal_desorption_steps() as f64 * J_PER_MWH;
        let regen = crate::solar::REGENERATION_TEMP_C;
        let desorb_seconds = tech.nominal_desorption_steps() as f64 * step_seconds as f64;
        Self {
            sand_heat_capacity,
            sand_min_temp_c: storage.min_temp_c,
            sand_max_temp_c: storage.min_temp_c + span,
            retention: storage.per_step_retention,
            dac_heat_capacity: a.sensible_fraction * cycle_energy / (regen - a.cooling_target_c),
            hold_power: (1.0 - a.sensible_fraction) * cycle_energy / desorb_seconds,
            ua_heat: 0.0,
            ua_cool: 0.0,
            sink_temp_c: a.sink_temp_c,
            cooling_target_c: a.cooling_target_c,
            regen_temp_c: regen,
            sim_step_s: a.sim_step_s,
            hold_fraction: a.hold_fraction,
        }
    }

    pub fn sand_temperature(&self, energy_mwh: f64) -> f64 {
        if self.sand_heat_capacity > 0.0 {
            self.sand_min_temp_c + energy_mwh * J_PER_MWH / self.sand_heat_capacity
        } else {
            self.sand_min_temp_c
        }
    }

    fn sand_capacity_j(&self) -> f64 {
        self.sand_heat_capacity * (self.sand_max_temp_c - self.sand_min_temp_c)
    }

    fn check_stability(&self) -> Result<()> {
        let mut pairs = vec![(self.dac_heat_capacity, self.ua_heat), (self.dac_heat_capacity, self.ua_cool)];
        if self.sand_heat_capacity > 0.0 {
            pairs.push((self.sand_heat_capacity, self.ua_heat));
        }
        for (c, ua) in pairs {
            if ua > 0.0 && self.sim_step_s >= 0.1 * c / ua {
                return Err(Error::Argument(format!(
                    "simulation step {} s too coarse for time constant {} s",
                    self.sim_step_s,
                    c / ua
                )));
            }
        }
        Ok(())
    }
}

/// Sets `ua_heat` and `ua_cool` so heating from the cooling target to the
/// regeneration temperature from a source at the minimum sand temperature
/// and cooling back each take a third of the usable cycle time.
pub fn calibrate(template: &ThermalPlant, tech: &Technology, a: &ThermalAssumptions) -> Result<ThermalPlant> {
    let c = template.dac_heat_capacity;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Calibration(format!("DAC thermal mass {c} J/K cannot be calibrated")));
    }
    if !(tech.cycle_hours > 0.0) || !(a.cycle_margin > 0.0 && a.cycle_margin <= 1.0) {
        return Err(Error::Calibration("cycle length and margin must be positive".into()));
    }
    let t = template;
    let budget = a.cycle_margin * tech.cycle_hours * 3600.0;
    let t_heat = budget / 3.0;
    let t_cool = budget / 3.0;
    let source = t.sand_min_temp_c;
    if source <= t.regen_temp_c || t.cooling_target_c <= t.sink_temp_c {
        return Err(Error::Calibration("no driving force for heating or cooling".into()));
    }
    let ua_heat_time = c * ((source - t.cooling_target_c) / (source - t.regen_temp_c)).ln() / t_heat;
    let ua_hold = 1.25 * t.hold_power / (source - t.regen_temp_c);
    let ua_heat = ua_heat_time.max(ua_hold);
    let ua_cool = c * ((t.regen_temp_c - t.sink_temp_c) / (t.cooling_target_c - t.sink_temp_c)).ln() / t_cool;
    for (name, ua) in [("heating", ua_heat), ("cooling", ua_cool)] {
        if !(ua.is_finite() && ua > 0.0 && ua <= UA_MAX) {
            return Err(Error::Calibration(format!("{name} conductance {ua} W/K outside (0, {UA_MAX}]")));
        }
    }
    let plant = ThermalPlant { ua_heat, ua_cool, ..*template };
    plant.check_stability()?;
    Ok(plant)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub first_step: usize,
    pub last_desorb_step: usize,
    pub desorb_steps: usize,
    pub source_temp_c: f64,
    /// Time from the first desorption step until the DAC first reached the regeneration temperature.
    pub heat_up_s: Option<f64>,
    pub hold_s: f64,
    /// Time from the end of the episode until the DAC reached the cooling target.
    pub cool_down_s: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub delivered_j: f64,
    pub curtailed_j: f64,
    pub standing_loss_j: f64,
    pub to_dac_j: f64,
    pub hold_consumed_j: f64,
    pub cooling_j: f64,
    pub sand_change_j: f64,
    pub dac_change_j: f64,
    /// Largest per-day balance residual relative to that day's throughput.
    pub max_daily_residual: f64,
}

impl EnergyLedger {
    pub fn residual(&self) -> f64 {
        self.sand_change_j + self.dac_change_j
            - (self.delivered_j - self.curtailed_j - self.standing_loss_j - self.hold_consumed_j - self.cooling_j)
    }

    pub fn throughput(&self) -> f64 {
        self.delivered_j + self.to_dac_j + self.cooling_j + self.standing_loss_j + self.curtailed_j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycles: Vec<CycleRecord>,
    pub feasible_fraction: f64,
    pub energy: EnergyLedger,
}

impl CycleReport {
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record([
            "cycle",
            "first_step",
            "last_desorb_step",
            "desorb_steps",
            "source_temp_c",
            "heat_up_s",
            "hold_s",
            "cool_down_s",
            "feasible",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for (i, c) in self.cycles.iter().enumerate() {
            w.write_record([
                i.to_string(),
                c.first_step.to_string(),
                c.last_desorb_step.to_string(),
                c.desorb_steps.to_string(),
                format!("{}", c.source_temp_c),
                opt(c.heat_up_s),
                format!("{}", c.hold_s),
                opt(c.cool_down_s),
                (c.feasible as u8).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Heat,
    Adiabatic,
    Cool,
}

/// Desorption episodes as `(first desorb step, last desorb step)`.
fn episodes(rows: &[ScheduleRow]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (t, r) in rows.iter().enumerate() {
        if r.v {
            open = Some(match open {
                Some((s, _)) => (s, t),
                None => (t, t),
            });
        } else if r.u {
            if let Some(e) = open.take() {
                out.push(e);
            }
        }
    }
    out.extend(open);
    out
}

struct Sim<'a> {
    p: &'a ThermalPlant,
    sand_j: f64,
    dac_c: f64,
    ledger: EnergyLedger,
}

impl Sim<'_> {
    /// Advances one substep; returns whether the DAC held at temperature.
    fn substep(&mut self, mode: Mode, flux_w: f64, dt: f64, loss_factor: f64) -> bool {
        let p = self.p;
        let c = p.dac_heat_capacity;
        let ts = p.sand_temperature(self.sand_j / J_PER_MWH);
        let mut q_in = 0.0;
        let mut q_cool = 0.0;
        let mut load = 0.0;
        let mut held = false;
        match mode {
            Mode::Heat => {
                let avail = p.ua_heat * (ts - self.dac_c).max(0.0);
                if self.dac_c >= p.regen_temp_c - TEMP_TOL {
                    load = p.hold_power;
                    q_in = avail.min(load);
                    held = avail >= load;
                } else {
                    q_in = avail.min(c * (p.regen_temp_c - self.dac_c) / dt);
                }
            }
            Mode::Cool => {
                if self.dac_c > p.cooling_target_c + TEMP_TOL {
                    q_cool = (p.ua_cool * (self.dac_c - p.sink_temp_c)).min(c * (self.dac_c - p.cooling_target_c) / dt);
                }
            }
            Mode::Adiabatic => {}
        }

        let delivered = flux_w * dt;
        let loss = if self.sand_j > 0.0 {
            self.sand_j * (1.0 - loss_factor)
        } else {
            0.0
        };
        let mut sand = self.sand_j + delivered - loss - q_in * dt;
        let cap = p.sand_capacity_j();
        let curtailed = (sand - cap).max(0.0);
        sand -= curtailed;

        let dac_before = self.dac_c;
        let mut dac = self.dac_c + (q_in - load - q_cool) * dt / c;
        if mode == Mode::Heat && load == 0.0 && (dac - p.regen_temp_c).abs() < 1e-9 {
            dac = p.regen_temp_c;
        }
        if mode == Mode::Cool && (dac - p.cooling_target_c).abs() < 1e-9 {
            dac = p.cooling_target_c;
        }

        let l = &mut self.ledger;
        l.delivered_j += delivered;
        l.curtailed_j += curtailed;
        l.standing_loss_j += loss;
        l.to_dac_j += q_in * dt;
        l.hold_consumed_j += load * dt;
        l.cooling_j += q_cool * dt;
        l.sand_change_j += sand - self.sand_j;
        l.dac_change_j += (dac - dac_before) * c;
        self.sand_j = sand;
        self.dac_c = dac;
        held
    }
}

/// Simulates a schedule against its flux series and reports each
/// regeneration cycle.
pub fn simulate_schedule(
    rows: &[ScheduleRow],
    flux_mwh: &[f64],
    step_seconds: u32,
    plant: &ThermalPlant,
    initial_store_mwh: f64,
) -> Result<CycleReport> {
    if plant.sim_step_s <= 0.0 || plant.sim_step_s > step_seconds as f64 {
        return Err(Error::Argument(format!(
            "simulation step {} s must lie in (0, {step_seconds}] s",
            plant.sim_step_s
        )));
    }
    if flux_mwh.len() != rows.len() {
        return Err(Error::Schema(format!(
            "flux series has {} steps, schedule has {}",
            flux_mwh.len(),
            rows.len()
        )));
    }
    if !(plant.ua_heat > 0.0 && plant.ua_cool > 0.0) {
        return Err(Error::Calibration("thermal plant is not calibrated".into()));
    }
    plant.check_stability()?;

    let step = step_seconds as f64;
    let n_sub = (step / plant.sim_step_s).round().max(1.0) as usize;
    let dt = step / n_sub as f64;
    let loss_factor = plant.retention.powf(1.0 / n_sub as f64);
    let eps = episodes(rows);

    let mut mode_of = vec![Mode::Cool; rows.len()];
    for &(s, e) in &eps {
        for (t, m) in mode_of.iter_mut().enumerate().take(e + 1).skip(s) {
            *m = if rows[t].v { Mode::Heat } else { Mode::Adiabatic };
        }
    }

    let mut sim = Sim {
        p: plant,
        sand_j: initial_store_mwh * J_PER_MWH,
        dac_c: plant.cooling_target_c,
        ledger: EnergyLedger {
            delivered_j: 0.0,
            curtailed_j: 0.0,
            standing_loss_j: 0.0,
            to_dac_j: 0.0,
            hold_consumed_j: 0.0,
            cooling_j: 0.0,
            sand_change_j: 0.0,
            dac_change_j: 0.0,
            max_daily_residual: 0.0,
        },
    };

    let steps_per_day = ((86_400.0 / step).round() as usize).max(1);
    let mut day_start = sim.ledger.clone();
    let mut cycles = Vec::with_capacity(eps.len());
    let mut ep_idx = 0usize;
    let mut current: Option<CycleRecord> = None;
    let mut cooling_since: Option<(usize, f64)> = None;

    for t in 0..rows.len() {
        if ep_idx < eps.len() && eps[ep_idx].0 == t {
            if let Some((ci, _)) = cooling_since.take() {
                let c: &mut CycleRecord = &mut cycles[ci];
                c.feasible = false;
            }
            current = Some(CycleRecord {
                first_step: t,
                last_desorb_step: eps[ep_idx].1,
                desorb_steps: 0,
                source_temp_c: plant.sand_temperature(sim.sand_j / J_PER_MWH),
                heat_up_s: None,
                hold_s: 0.0,
                cool_down_s: None,
                feasible: false,
            });
        }
        let mode = mode_of[t];
        let flux_w = flux_mwh[t] * J_PER_MWH / step;
        for k in 0..n_sub {
            let held = sim.substep(mode, flux_w, dt, loss_factor);
            let elapsed = (t * n_sub + k + 1) as f64 * dt;
            if let Some(c) = current.as_mut() {
                if mode == Mode::Heat {
                    if held {
                        c.hold_s += dt;
                    }
                    if c.heat_up_s.is_none() && sim.dac_c >= plant.regen_temp_c - TEMP_TOL {
                        c.heat_up_s = Some(elapsed - c.first_step as f64 * step);
                    }
                }
            } else if let Some((ci, since)) = cooling_since {
                if sim.dac_c <= plant.cooling_target_c + TEMP_TOL {
                    cycles[ci].cool_down_s = Some(elapsed - since);
                    cooling_since = None;
                }
            }
        }
        if let Some(c) = current.as_mut() {
            if rows[t].v {
                c.desorb_steps += 1;
            }
            if t == c.last_desorb_step {
                let mut done = current.take().expect("open cycle");
                let source_ok = done.source_temp_c >= plant.sand_min_temp_c - 1e-6;
                let hold_ok = done.hold_s + 1e-9 >= plant.hold_fraction * done.desorb_steps as f64 * step;
                done.feasible = source_ok && hold_ok;
                cycles.push(done);
                ep_idx += 1;
                cooling_since = Some((cycles.len() - 1, (t + 1) as f64 * step));
                if sim.dac_c <= plant.cooling_target_c + TEMP_TOL {
                    cycles.last_mut().expect("pushed").cool_down_s = Some(0.0);
                    cooling_since = None;
                }
            }
        }
        if (t + 1) % steps_per_day == 0 || t + 1 == rows.len() {
            let day = diff_ledger(&sim.ledger, &day_start);
            let through = day.throughput();
            if through > 0.0 {
                let r = day.residual().abs() / through;
                sim.ledger.max_daily_residual = sim.ledger.max_daily_residual.max(r);
            }
            day_start = sim.ledger.clone();
        }
    }

    let feasible = cycles.iter().filter(|c| c.feasible).count();
    let feasible_fraction = if cycles.is_empty() {
        1.0
    } else {
        feasible as f64 / cycles.len() as f64
    };
    Ok(CycleReport {
        cycles,
        feasible_fraction,
        energy: sim.ledger,
    })
}

fn diff_ledger(a: &EnergyLedger, b: &EnergyLedger) -> EnergyLedger {
    EnergyLedger {
        delivered_j: a.delivered_j - b.delivered_j,
        curtailed_j: a.curtailed_j - b.curtailed_j,
        standing_loss_j: a.standing_loss_j - b.standing_loss_j,
        to_dac_j: a.to_dac_j - b.to_dac_j,
        hold_consumed_j: a.hold_consumed_j - b.hold_consumed_j,
        cooling_j: a.cooling_j - b.cooling_j,
        sand_change_j: a.sand_change_j - b.sand_change_j,
        dac_change_j: a.dac_change_j - b.dac_change_j,
        max_daily_residual: 0.0,
    }
}

/// Time for the DAC to go from `dac_temp_c` to the regeneration temperature
/// with the sand starting at `sand_temp_c` and no solar input; `None` if it
/// does not get there within `max_seconds`.
pub fn heat_up_time(plant: &ThermalPlant, sand_temp_c: f64, dac_temp_c: f64, max_seconds: f64) -> Option<f64> {
    let mut sim = Sim {
        p: plant,
        sand_j: (sand_temp_c - plant.sand_min_temp_c) * plant.sand_heat_capacity,
        dac_c: dac_temp_c,
        ledger: EnergyLedger {
            delivered_j: 0.0,
            curtailed_j: 0.0,
            standing_loss_j: 0.0,
            to_dac_j: 0.0,
            hold_consumed_j: 0.0,
            cooling_j: 0.0,
            sand_change_j: 0.0,
            dac_change_j: 0.0,
            max_daily_residual: 0.0,
        },
    };
    let dt = plant.sim_step_s;
    let mut t = 0.0;
    while t < max_seconds {
        if sim.dac_c >= plant.regen_temp_c - TEMP_TOL {
            return Some(t);
        }
        sim.substep(Mode::Heat, 0.0, dt, 1.0);
        t += dt;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dac::{PlantSizing, TechnologySpec};

    fn mof() -> Technology {
        TechnologySpec {
            name: "MOF".into(),
            cycle_switching_cost: 115.6,
            adsorption_power: 0.642,
            desorption_power: 0.097,
            beta_a1: 0.2,
            beta_a2: -0.2,
            beta_d1: 0.0,
            beta_d2: 0.4,
            cycle_hours: 1.0,
        }
        .instantiate(&PlantSizing::default(), 300)
        .unwrap()
    }

    fn plant() -> ThermalPlant {
        let a = ThermalAssumptions::default();
        let tech = mof();
        calibrate(&ThermalPlant::template(&StorageParams::default(), 400.0, &tech, 300, &a), &tech, &a).unwrap()
    }

    #[test]
    fn heats_from_minimum_source_within_twenty_minutes() {
        let p = plant();
        let t = heat_up_time(&p, 300.0, 20.0, 3600.0).unwrap();
        assert!(t <= 1200.0, "{t}");
    }

    #[test]
    fn no_driving_force_never_heats() {
        let p = plant();
        assert_eq!(heat_up_time(&p, 100.0, 20.0, 86_400.0), None);
    }

    #[test]
    fn longer_cycles_allow_smaller_conductance() {
        let a = ThermalAssumptions::default();
        let fast = mof();
        let slow = Technology {
            cycle_hours: 9.6,
            ..fast.clone()
        };
        let tpl = ThermalPlant::template(&StorageParams::default(), 400.0, &fast, 300, &a);
        let pf = calibrate(&tpl, &fast, &a).unwrap();
        let ps = calibrate(&tpl, &slow, &a).unwrap();
        assert!(ps.ua_heat < pf.ua_heat);
        assert!(ps.ua_cool < pf.ua_cool);
    }

    #[test]
    fn infinite_mass_fails_calibration() {
        let a = ThermalAssumptions::default();
        let tech = mof();
        let mut tpl = ThermalPlant::template(&StorageParams::default(), 400.0, &tech, 300, &a);
        tpl.dac_heat_capacity = f64::INFINITY;
        assert!(matches!(calibrate(&tpl, &tech, &a), Err(Error::Calibration(_))));
    }

    #[test]
    fn coarse_sim_step_rejected() {
        let mut p = plant();
        p.sim_step_s = 600.0;
        let rows = vec![
            ScheduleRow {
                u: false,
                v: false,
                a: 0.0,
                d: 0.0,
                x: 0.0,
                h: 0.0,
                z: false
            };
            3
        ];
        assert!(matches!(
            simulate_schedule(&rows, &[0.0; 3], 300, &p, 0.0),
            Err(Error::Argument(_))
        ));
    }

    fn row(u: bool, v: bool) -> ScheduleRow {
        ScheduleRow {
            u,
            v,
            a: 0.0,
            d: 0.0,
            x: 0.0,
            h: 0.0,
            z: false,
        }
    }

    #[test]
    fn full_cycle_is_feasible_and_conserves_energy() {
        let p = plant();
        let mut rows = Vec::new();
        for _ in 0..3 {
            rows.extend((0..21).map(|_| row(true, false)));
            rows.extend((0..11).map(|_| row(false, true)));
        }
        rows.extend((0..10).map(|_| row(false, false)));
        let flux = vec![0.3; rows.len()];
        let r = simulate_schedule(&rows, &flux, 300, &p, 40.0).unwrap();
        assert_eq!(r.cycles.len(), 3);
        assert_eq!(r.feasible_fraction, 1.0, "{:?}", r.cycles);
        assert!(r.energy.residual().abs() < 1e-6 * r.energy.throughput());
        assert!(r.energy.max_daily_residual < 1e-6);
    }

    #[test]
    fn one_step_episode_cannot_hold() {
        let p = plant();
        let rows = vec![row(true, false), row(false, true), row(true, false), row(true, false)];
        let r = simulate_schedule(&rows, &[0.0; 4], 300, &p, 40.0).unwrap();
        assert_eq!(r.cycles.len(), 1);
        assert!(!r.cycles[0].feasible);
        assert_eq!(r.feasible_fraction, 0.0);
    }
}
