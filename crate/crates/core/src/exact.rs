//! Exhaustive search over phase sequences for short horizons, and a
//! constraint-by-constraint schedule checker.
//!
//! Within the rate-saturated policy class (every active step runs at its
//! rate cap), a schedule is fully determined by its phase sequence, so the
//! mixed-integer program reduces to choosing one of `3^T` sequences.

use serde::Serialize;

use crate::dac::{adsorption_cap, desorption_cap, next_k, Phase};
use crate::exec::Execution;
use crate::error::{Error, Result};
use crate::plant::{PlantConfig, PlantState, Schedule, ScenarioSlice, ScheduleRow};

pub const MAX_EXACT_HORIZON: usize = 16;

fn improves(candidate: f64, best: f64) -> bool {
    candidate > best + 1e-9 * (1.0 + best.abs())
}

struct Search<'a> {
    plant: &'a PlantConfig,
    slice: &'a ScenarioSlice<'a>,
    path: Vec<Phase>,
    best_profit: f64,
    best_path: Option<Vec<Phase>>,
}

impl Search<'_> {
    fn dfs(&mut self, state: &PlantState, t: usize, profit: f64) {
        if t == self.slice.len() {
            if self.best_path.is_none() || improves(profit, self.best_profit) {
                self.best_profit = profit;
                self.best_path = Some(self.path.clone());
            }
            return;
        }
        for phase in Phase::ALL {
            if let Some((next, rec)) = self.plant.advance(state, phase, self.slice, t) {
                self.path.push(phase);
                self.dfs(&next, t + 1, profit + rec.profit());
                self.path.pop();
            }
        }
    }
}

/// Replays a phase sequence; `None` if some step is infeasible.
pub fn replay(plant: &PlantConfig, slice: &ScenarioSlice<'_>, initial: &PlantState, phases: &[Phase]) -> Option<Schedule> {
    let mut state = *initial;
    let mut steps = Vec::with_capacity(phases.len());
    for (t, &p) in phases.iter().enumerate() {
        let (next, rec) = plant.advance(&state, p, slice, t)?;
        steps.push(rec);
        state = next;
    }
    Some(Schedule::new(slice.step_seconds, *initial, steps, slice.wholesale_price))
}

/// Profit-maximizing rate-saturated schedule over the whole slice.
///
/// Ties are broken towards the lexicographically smallest phase sequence
/// with `idle < adsorb < desorb`. The result does not depend on `exec`.
pub fn solve_exact(plant: &PlantConfig, slice: &ScenarioSlice<'_>, initial: &PlantState, exec: Execution) -> Result<Schedule> {
    let horizon = slice.len();
    if horizon == 0 {
        return Err(Error::Argument("empty horizon".into()));
    }
    if horizon > MAX_EXACT_HORIZON {
        return Err(Error::Argument(format!(
            "horizon {horizon} exceeds the exhaustive-search limit of {MAX_EXACT_HORIZON}"
        )));
    }
    plant.tech.validate()?;
    plant.check_state(initial)?;

    let depth = horizon.min(2);
    let prefixes: Vec<Vec<Phase>> = match depth {
        1 => Phase::ALL.iter().map(|&p| vec![p]).collect(),
        _ => Phase::ALL
            .iter()
            .flat_map(|&p| Phase::ALL.iter().map(move |&q| vec![p, q]))
            .collect(),
    };

    let results = exec.map(&prefixes, |prefix| {
        let mut state = *initial;
        let mut profit = 0.0;
        for (t, &p) in prefix.iter().enumerate() {
            let (next, rec) = plant.advance(&state, p, slice, t)?;
            state = next;
            profit += rec.profit();
        }
        let mut search = Search {
            plant,
            slice,
            path: prefix.clone(),
            best_profit: f64::NEG_INFINITY,
            best_path: None,
        };
        search.dfs(&state, prefix.len(), profit);
        search.best_path.map(|p| (search.best_profit, p))
    });

    let mut best: Option<(f64, Vec<Phase>)> = None;
    for (profit, path) in results.into_iter().flatten() {
        match &best {
            Some((b, _)) if !improves(profit, *b) => {}
            _ => best = Some((profit, path)),
        }
    }
    let (_, path) = best.ok_or_else(|| Error::Infeasible("no feasible phase sequence".into()))?;
    Ok(replay(plant, slice, initial, &path).expect("winning sequence replays"))
}

/// A broken constraint of the scheduling program, numbered as in its
/// mixed-integer formulation (2 to 16).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub step: usize,
    pub constraint: u8,
    pub message: String,
}

/// Re-checks every constraint against a schedule; empty iff feasible.
pub fn verify_schedule(rows: &[ScheduleRow], plant: &PlantConfig, slice: &ScenarioSlice<'_>, initial: &PlantState) -> Vec<Violation> {
    let tech = &plant.tech;
    let mut out = Vec::new();
    if rows.len() != slice.len() {
        out.push(Violation {
            step: rows.len().min(slice.len()),
            constraint: 9,
            message: format!("schedule has {} steps, scenario has {}", rows.len(), slice.len()),
        });
        return out;
    }
    let xtol = 1e-9 * (1.0 + tech.x_max);
    let htol = 1e-9 * (1.0 + plant.storage_capacity);
    let mut push = |step: usize, constraint: u8, message: String| {
        out.push(Violation { step, constraint, message });
    };

    let mut x_prev = initial.dac.x;
    let mut h_prev = initial.h;
    let mut k_prev = initial.dac.k;
    for (t, r) in rows.iter().enumerate() {
        if r.u && r.v {
            push(t, 2, "adsorbing and desorbing in the same step".into());
        }
        let acap = adsorption_cap(x_prev, tech, slice.capture_factor[t]);
        if r.a > acap + xtol {
            push(t, 3, format!("adsorption {} above rate cap {acap}", r.a));
        }
        let dcap = desorption_cap(x_prev, tech);
        if r.d > dcap + xtol {
            push(t, 4, format!("desorption {} above rate cap {dcap}", r.d));
        }
        if r.a > xtol && !r.u {
            push(t, 5, format!("adsorption {} while not adsorbing", r.a));
        }
        if r.d > xtol && !r.v {
            push(t, 6, format!("desorption {} while not desorbing", r.d));
        }
        if r.a < -xtol {
            push(t, 7, format!("negative adsorption {}", r.a));
        }
        if r.d < -xtol {
            push(t, 8, format!("negative desorption {}", r.d));
        }
        let expected = x_prev + r.a - r.d;
        if (r.x - expected).abs() > xtol {
            push(t, 9, format!("saturation {} but balance gives {expected}", r.x));
        }
        if r.x < -xtol || r.x > tech.x_max + xtol {
            push(t, 10, format!("saturation {} outside [0, {}]", r.x, tech.x_max));
        }
        let phase = match (r.u, r.v) {
            (true, false) => Phase::Adsorb,
            (false, true) => Phase::Desorb,
            _ => Phase::Idle,
        };
        let k = if r.u && r.v { k_prev } else { next_k(k_prev, phase) };
        if k && !k_prev && !r.z {
            push(t, 14, "new cycle started without counting a switch".into());
        }
        if r.h < -htol || r.h > plant.storage_capacity + htol {
            push(t, 15, format!("stored heat {} outside [0, {}]", r.h, plant.storage_capacity));
        }
        let bound = plant.retention * h_prev + slice.flux[t] - if r.v { tech.h_step } else { 0.0 };
        if r.h > bound + htol {
            push(t, 16, format!("stored heat {} exceeds charge balance {bound}", r.h));
        }
        x_prev = r.x;
        h_prev = r.h;
        k_prev = k;
    }
    out
}
