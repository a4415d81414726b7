//! Chunked price-threshold scheduling for full-year horizons.
//!
//! Each chunk is scheduled by a single number: the DAC is allowed to run in
//! steps whose price is at or below the threshold. Inside allowed steps a
//! fixed phase automaton decides what to do: adsorb until the sorbent is
//! saturated, then regenerate whenever stored heat permits until the sorbent
//! is depleted, spend one step switching back, and start over.

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::dac::{adsorption_cap, desorption_cap, Phase};
use crate::error::{Error, Result};
use crate::golden::golden_section;
use crate::plant::{PlantConfig, PlantState, Scenario, ScenarioSlice, Schedule, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub chunk_steps: usize,
    pub lookahead_steps: usize,
    pub guess_min: f64,
    pub guess_max: f64,
    pub guess_spacing: f64,
    pub tolerance: f64,
    /// Credit unsold loading during the search.
    pub use_boost: bool,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            chunk_steps: 288,
            lookahead_steps: 288,
            guess_min: -10.0,
            guess_max: 500.0,
            guess_spacing: 10.0,
            tolerance: 0.01,
            use_boost: true,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_steps == 0 {
            return Err(Error::Argument("chunk_steps must be at least 1".into()));
        }
        if !(self.guess_min < self.guess_max) {
            return Err(Error::Argument("guess_min must be below guess_max".into()));
        }
        if !(self.guess_spacing > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::Argument("guess spacing and tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn guesses(&self) -> Vec<f64> {
        let n = ((self.guess_max - self.guess_min) / self.guess_spacing + 1e-9).floor() as usize;
        (0..=n).map(|i| self.guess_min + i as f64 * self.guess_spacing).collect()
    }
}

/// Search-time credit for sorbent loading not yet sold.
pub fn boost(profit: f64, co2: f64, x_remain: f64) -> f64 {
    if co2 > 0.0 {
        profit / co2 * x_remain
    } else {
        0.0
    }
}

/// Steps the threshold allows the DAC to run in.
pub fn activation_mask(prices: &[f64], threshold: f64) -> Vec<bool> {
    prices.iter().map(|&p| p <= threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkResult {
    pub threshold: f64,
    /// Committed profit, excluding boost.
    pub profit: f64,
    pub co2_desorbed: f64,
    pub x_remain: f64,
    /// Boost from the committed quantities, for reporting only.
    pub boost: f64,
    pub end_state: PlantState,
    /// Window profit plus window boost at the chosen threshold.
    pub search_objective: f64,
}

/// One step of the threshold policy.
#[inline]
pub fn policy_step(plant: &PlantConfig, state: &PlantState, slice: &ScenarioSlice<'_>, t: usize, threshold: f64) -> (PlantState, StepRecord) {
    let idle = |s: &PlantState| plant.advance(s, Phase::Idle, slice, t).expect("idle is always feasible");
    if slice.price[t] > threshold {
        return idle(state);
    }
    let tech = &plant.tech;
    let x = state.dac.x;
    let eps = tech.rate_epsilon;
    if state.desorbing {
        if desorption_cap(x, tech) > eps {
            plant.advance(state, Phase::Desorb, slice, t).unwrap_or_else(|| idle(state))
        } else {
            let switched = PlantState {
                desorbing: false,
                ..*state
            };
            idle(&switched)
        }
    } else if adsorption_cap(x, tech, 1.0) > eps && x < tech.x_max {
        match plant.advance(state, Phase::Adsorb, slice, t) {
            Some((next, rec)) if rec.a > 0.0 => (next, rec),
            _ => idle(state),
        }
    } else if desorption_cap(x, tech) > eps {
        let switched = PlantState {
            desorbing: true,
            ..*state
        };
        plant.advance(&switched, Phase::Desorb, slice, t).unwrap_or_else(|| idle(&switched))
    } else {
        idle(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tally {
    profit: f64,
    co2: f64,
    state: PlantState,
}

/// Runs the policy over `slice`, reporting tallies after `commit` steps and at the end.
fn run_policy<F: FnMut(&StepRecord)>(
    plant: &PlantConfig,
    slice: &ScenarioSlice<'_>,
    threshold: f64,
    start: &PlantState,
    commit: usize,
    mut sink: F,
) -> (Tally, Tally) {
    let mut state = *start;
    let mut profit = 0.0;
    let mut co2 = 0.0;
    let mut committed = Tally {
        profit,
        co2,
        state,
    };
    for t in 0..slice.len() {
        if t == commit {
            committed = Tally { profit, co2, state };
        }
        let (next, rec) = policy_step(plant, &state, slice, t, threshold);
        if t < commit {
            sink(&rec);
        }
        profit += rec.profit();
        co2 += rec.d;
        state = next;
    }
    let end = Tally { profit, co2, state };
    if commit >= slice.len() {
        committed = end;
    }
    (committed, end)
}

fn chunk_result(threshold: f64, committed: Tally, window: Tally) -> ChunkResult {
    ChunkResult {
        threshold,
        profit: committed.profit,
        co2_desorbed: committed.co2,
        x_remain: committed.state.dac.x,
        boost: boost(committed.profit, committed.co2, committed.state.dac.x),
        end_state: committed.state,
        search_objective: window.profit + boost(window.profit, window.co2, window.state.dac.x),
    }
}

/// Applies a fixed threshold to the whole slice.
pub fn simulate_policy(plant: &PlantConfig, slice: &ScenarioSlice<'_>, threshold: f64, start: &PlantState) -> (ChunkResult, Vec<StepRecord>) {
    let mut steps = Vec::with_capacity(slice.len());
    let (c, w) = run_policy(plant, slice, threshold, start, slice.len(), |r| steps.push(*r));
    (chunk_result(threshold, c, w), steps)
}

/// Distinct prices of a window, sorted ascending. The policy only depends on
/// how many of them lie at or below the threshold.
struct Plateaus {
    levels: Vec<f64>,
}

impl Plateaus {
    fn new(prices: &[f64]) -> Self {
        let mut levels: Vec<f64> = prices.to_vec();
        levels.sort_by(|a, b| a.total_cmp(b));
        levels.dedup();
        Self { levels }
    }

    fn index(&self, threshold: f64) -> usize {
        self.levels.partition_point(|&p| p <= threshold)
    }

    /// Representative threshold of plateau `i`.
    fn midpoint(&self, i: usize, cfg: &ThresholdConfig) -> f64 {
        let m = self.levels.len();
        match (i == 0, i == m) {
            (true, true) => cfg.guess_min,
            (true, false) => cfg.guess_min.min(self.levels[0] - cfg.guess_spacing),
            (false, true) => cfg.guess_max.max(self.levels[m - 1]),
            (false, false) => 0.5 * (self.levels[i - 1] + self.levels[i]),
        }
    }
}

/// Picks the threshold maximizing window profit plus boost and commits the
/// first `commit` steps of the window.
pub fn optimize_chunk(
    plant: &PlantConfig,
    window: &ScenarioSlice<'_>,
    commit: usize,
    cfg: &ThresholdConfig,
    start: &PlantState,
) -> (ChunkResult, Vec<StepRecord>) {
    let commit = commit.min(window.len());
    let plateaus = Plateaus::new(window.price);
    let mut memo: Vec<Option<f64>> = vec![None; plateaus.levels.len() + 1];
    let mut objective = |lambda: f64| -> f64 {
        let i = plateaus.index(lambda);
        if let Some(v) = memo[i] {
            return v;
        }
        let (_, w) = run_policy(plant, window, lambda, start, window.len(), |_| {});
        let credit = if cfg.use_boost { boost(w.profit, w.co2, w.state.dac.x) } else { 0.0 };
        let v = -(w.profit + credit);
        memo[i] = Some(v);
        v
    };

    let mut best: Option<(f64, f64)> = None;
    for guess in cfg.guesses() {
        let lo = (guess - cfg.guess_spacing).max(cfg.guess_min);
        let hi = (guess + cfg.guess_spacing).min(cfg.guess_max);
        let at_guess = objective(guess);
        let m = golden_section(&mut objective, lo, hi, cfg.tolerance);
        let (x, v) = if m.value < at_guess { (m.x, m.value) } else { (guess, at_guess) };
        let polished = plateaus.midpoint(plateaus.index(x), cfg);
        let better = match best {
            None => true,
            Some((_, bv)) => v < bv - 1e-9 * (1.0 + bv.abs()),
        };
        if better {
            best = Some((polished, v));
        }
    }
    let (lambda, _) = best.expect("at least one guess");

    let mut steps = Vec::with_capacity(commit);
    let (c, w) = run_policy(plant, window, lambda, start, commit, |r| steps.push(*r));
    (chunk_result(lambda, c, w), steps)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YearResult {
    pub schedule: Schedule,
    pub chunks: Vec<ChunkResult>,
}

/// Optimizes the whole scenario chunk by chunk, carrying the plant state over.
pub fn run_year(scenario: &Scenario, plant: &PlantConfig, cfg: &ThresholdConfig, initial: &PlantState) -> Result<YearResult> {
    scenario.validate()?;
    cfg.validate()?;
    plant.tech.validate()?;
    plant.check_state(initial)?;
    let n = scenario.len();
    let full = scenario.full();
    let mut state = *initial;
    let mut steps = Vec::with_capacity(n);
    let mut chunks = Vec::with_capacity(n.div_ceil(cfg.chunk_steps));
    let mut start = 0;
    while start < n {
        let commit = cfg.chunk_steps.min(n - start);
        let end = (start + cfg.chunk_steps + cfg.lookahead_steps).min(n);
        let window = full.sub(start..end);
        let (chunk, committed) = optimize_chunk(plant, &window, commit, cfg, &state);
        state = chunk.end_state;
        steps.extend(committed);
        chunks.push(chunk);
        start += commit;
    }
    Ok(YearResult {
        schedule: Schedule::new(scenario.step_seconds, *initial, steps, &scenario.wholesale_price),
        chunks,
    })
}

/// Profit recomputed from a step log, independent of stored totals.
pub fn audit_profit(steps: &[StepRecord], slice: &ScenarioSlice<'_>, plant: &PlantConfig) -> f64 {
    steps
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let base = if s.u {
                plant.tech.p_ads
            } else if s.v {
                plant.tech.p_des
            } else {
                0.0
            };
            let energy = slice.energy_factor[t] * base;
            slice.incentive * s.d - slice.price[t] * energy - if s.z { plant.tech.switch_cost } else { 0.0 }
        })
        .sum()
}

/// Mean operation by hour of day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfile {
    pub hour: u32,
    pub adsorb: f64,
    pub desorb: f64,
    pub idle: f64,
    pub mean_price: f64,
}

pub fn hourly_profile(schedule: &Schedule, start: DateTime<Utc>, prices: &[f64]) -> Vec<HourlyProfile> {
    let mut acc = [[0.0f64; 4]; 24];
    let mut count = [0u64; 24];
    let offset = start.num_seconds_from_midnight() as u64;
    for (i, s) in schedule.steps.iter().enumerate() {
        let secs = offset + i as u64 * schedule.step_seconds as u64;
        let h = ((secs / 3600) % 24) as usize;
        acc[h][0] += s.u as u8 as f64;
        acc[h][1] += s.v as u8 as f64;
        acc[h][2] += (!s.is_active()) as u8 as f64;
        acc[h][3] += prices.get(i).copied().unwrap_or(s.price);
        count[h] += 1;
    }
    (0..24)
        .map(|h| {
            let n = count[h].max(1) as f64;
            HourlyProfile {
                hour: h as u32,
                adsorb: acc[h][0] / n,
                desorb: acc[h][1] / n,
                idle: acc[h][2] / n,
                mean_price: acc[h][3] / n,
            }
        })
        .collect()
}

pub fn write_hourly_profile(profile: &[HourlyProfile], path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["hour", "adsorb", "desorb", "idle", "mean_price"])?;
    for p in profile {
        w.write_record([
            p.hour.to_string(),
            format!("{}", p.adsorb),
            format!("{}", p.desorb),
            format!("{}", p.idle),
            format!("{}", p.mean_price),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::tests::{toy_scenario, toy_tech};

    fn toy() -> PlantConfig {
        PlantConfig::grid(toy_tech(), 10.0, 1.0)
    }

    #[test]
    fn boost_points() {
        assert_eq!(boost(50.0, 1.0, 0.5), 25.0);
        assert_eq!(boost(50.0, 1.0, 0.0), 0.0);
        assert_eq!(boost(-10.0, 1.0, 0.5), -5.0);
        assert_eq!(boost(50.0, 0.0, 0.5), 0.0);
    }

    #[test]
    fn policy_hand_cases() {
        let sc = toy_scenario(&[40.0, 60.0, 40.0], 0.0, 100.0);
        let s0 = PlantState::initial(1.0);
        let (r, steps) = simulate_policy(&toy(), &sc.full(), 50.0, &s0);
        let phases: Vec<_> = steps.iter().map(|s| s.phase().unwrap()).collect();
        assert_eq!(phases, [Phase::Adsorb, Phase::Idle, Phase::Desorb]);
        assert!((r.profit - 20.0).abs() < 1e-12);

        let (r, steps) = simulate_policy(&toy(), &sc.full(), 70.0, &s0);
        let phases: Vec<_> = steps.iter().map(|s| s.phase().unwrap()).collect();
        assert_eq!(phases, [Phase::Adsorb, Phase::Desorb, Phase::Idle]);
        assert!(r.profit.abs() < 1e-12);

        let (r, steps) = simulate_policy(&toy(), &sc.full(), 10.0, &s0);
        assert!(steps.iter().all(|s| !s.is_active()));
        assert_eq!(r.profit, 0.0);
        assert_eq!(r.x_remain, 0.0);
    }

    #[test]
    fn optimizer_toy_plateau() {
        let sc = toy_scenario(&[40.0, 60.0, 40.0], 0.0, 100.0);
        let cfg = ThresholdConfig::default();
        let (r, _) = optimize_chunk(&toy(), &sc.full(), 3, &cfg, &PlantState::initial(1.0));
        assert!((40.0..60.0).contains(&r.threshold), "{}", r.threshold);
        assert!((r.profit - 20.0).abs() < 1e-12);
    }

    #[test]
    fn flat_unprofitable_picks_guess_min() {
        let sc = toy_scenario(&[50.0; 6], 1.0, 0.0);
        let cfg = ThresholdConfig::default();
        let (r, steps) = optimize_chunk(&toy(), &sc.full(), 6, &cfg, &PlantState::initial(1.0));
        assert_eq!(r.threshold, cfg.guess_min);
        assert_eq!(r.profit, 0.0);
        assert!(steps.iter().all(|s| !s.is_active()));
    }

    #[test]
    fn guesses_cover_range() {
        let g = ThresholdConfig::default().guesses();
        assert_eq!(g.len(), 52);
        assert_eq!(g[0], -10.0);
        assert_eq!(*g.last().unwrap(), 500.0);
    }

    #[test]
    fn run_year_chunks_add_up() {
        let prices: Vec<f64> = (0..50).map(|i| ((i * 37) % 23) as f64 * 4.0).collect();
        let n = prices.len();
        let sc = Scenario::grid(300, prices, vec![0.0; n], vec![0.3; n], 100.0, 0.0).unwrap();
        let cfg = ThresholdConfig {
            chunk_steps: 7,
            lookahead_steps: 5,
            ..ThresholdConfig::default()
        };
        let plant = toy();
        let y = run_year(&sc, &plant, &cfg, &PlantState::initial(0.0)).unwrap();
        assert_eq!(y.schedule.steps.len(), n);
        let chunk_sum: f64 = y.chunks.iter().map(|c| c.profit).sum();
        assert!((chunk_sum - y.schedule.totals.profit).abs() <= 1e-9 * (1.0 + chunk_sum.abs()));
        let audit = audit_profit(&y.schedule.steps, &sc.full(), &plant);
        assert!((audit - y.schedule.totals.profit).abs() <= 1e-9 * (1.0 + audit.abs()));
    }

    #[test]
    fn hourly_profile_fractions() {
        let sc = toy_scenario(&[1.0; 24], 0.0, 100.0);
        let (_, steps) = simulate_policy(&toy(), &sc.full(), 50.0, &PlantState::initial(5.0));
        let sched = Schedule::new(3600, PlantState::initial(5.0), steps, &sc.wholesale_price);
        let prof = hourly_profile(&sched, DateTime::<Utc>::UNIX_EPOCH, &sc.wholesale_price);
        assert_eq!(prof.len(), 24);
        for p in &prof {
            assert!((p.adsorb + p.desorb + p.idle - 1.0).abs() < 1e-12);
        }
    }
}
