//! Grid search over solar collector, storage and stand-alone power sizing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dac::{AmbientFactors, PlantSizing, TechnologySpec};
use crate::economics::{capex_dac, capex_solar, lco2, CapitalCosts, CostBreakdown, CostModel};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::plant::{Mode, PlantConfig, PlantState, PowerSupply, Scenario, Totals};
use crate::solar::{effective_capacity, flux_series, CollectorParams, StorageParams};
use crate::threshold::{run_year, ThresholdConfig};

pub const DEFAULT_BUDGET: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignParams {
    /// Collector heating capacity, MWh/step.
    pub cp: f64,
    pub cr: f64,
    pub target_temp_c: f64,
    /// Rated sand storage, MWh per 100 °C span.
    pub h_rated: f64,
    pub pv_kw: f64,
    pub battery_kwh: f64,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            cp: 3.0,
            cr: 1.0,
            target_temp_c: 400.0,
            h_rated: 70.0,
            pv_kw: 0.0,
            battery_kwh: 0.0,
        }
    }
}

impl DesignParams {
    fn key(&self) -> [f64; 6] {
        [self.cp, self.cr, self.target_temp_c, self.h_rated, self.pv_kw, self.battery_kwh]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cp > 0.0) || !(self.cr >= 1.0) || !(self.h_rated >= 0.0) {
            return Err(Error::Design(format!(
                "need cp > 0, cr >= 1, storage >= 0 (got {}, {}, {})",
                self.cp, self.cr, self.h_rated
            )));
        }
        if !(self.target_temp_c >= 300.0) {
            return Err(Error::Design(format!("target temperature {} °C below 300 °C", self.target_temp_c)));
        }
        if !(self.pv_kw >= 0.0) || !(self.battery_kwh >= 0.0) {
            return Err(Error::Design("PV and battery sizes must be non-negative".into()));
        }
        Ok(())
    }
}

/// Time series of one site on a common step.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SiteData {
    pub step_seconds: u32,
    /// Grid mode only.
    pub wholesale_price: Vec<f64>,
    /// Grid mode only, t/MWh.
    pub carbon_intensity: Vec<f64>,
    pub dni_cf: Vec<f64>,
    /// PV capacity factor for stand-alone runs; empty means reuse `dni_cf`.
    pub pv_cf: Vec<f64>,
    pub ambient: Option<Vec<AmbientFactors>>,
}

impl SiteData {
    pub fn len(&self) -> usize {
        self.dni_cf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dni_cf.is_empty()
    }
}

/// Everything held fixed while designs vary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignContext {
    pub tech: TechnologySpec,
    pub sizing: PlantSizing,
    pub collector: CollectorParams,
    pub storage: StorageParams,
    pub cost: CostModel,
    pub threshold: ThresholdConfig,
    pub mode: Mode,
    pub incentive: f64,
    pub carbon_value: f64,
    pub battery_round_trip: f64,
    pub apply_ambient: bool,
}

impl DesignContext {
    pub fn new(tech: TechnologySpec, mode: Mode, incentive: f64) -> Self {
        Self {
            tech,
            sizing: PlantSizing::default(),
            collector: CollectorParams::default(),
            storage: StorageParams::default(),
            cost: CostModel::default(),
            threshold: ThresholdConfig::default(),
            mode,
            incentive,
            carbon_value: 0.0,
            battery_round_trip: 0.88,
            apply_ambient: false,
        }
    }

    /// Scenario and plant for one design on one site.
    pub fn build(&self, site: &SiteData, design: &DesignParams) -> Result<(Scenario, PlantConfig)> {
        design.validate()?;
        if site.is_empty() {
            return Err(Error::Data("site has no time steps".into()));
        }
        let collector = CollectorParams {
            cr: design.cr,
            target_temp_c: design.target_temp_c,
            ..self.collector
        };
        collector.validate()?;
        let storage = StorageParams {
            h_rated: design.h_rated,
            ..self.storage
        };
        storage.validate()?;
        let h_eff = effective_capacity(&storage, design.target_temp_c)?;
        let flux = flux_series(&site.dni_cf, design.cp, &collector, storage.charge_efficiency);
        let tech = self.tech.instantiate(&self.sizing, site.step_seconds)?;

        let (scenario, power) = match self.mode {
            Mode::Grid => (
                Scenario::grid(
                    site.step_seconds,
                    site.wholesale_price.clone(),
                    site.carbon_intensity.clone(),
                    flux,
                    self.incentive,
                    self.carbon_value,
                )?,
                PowerSupply::Grid,
            ),
            Mode::Standalone => {
                let cf = if site.pv_cf.is_empty() { &site.dni_cf } else { &site.pv_cf };
                let step_h = site.step_seconds as f64 / 3600.0;
                let pv = cf.iter().map(|c| c.max(0.0) * design.pv_kw / 1000.0 * step_h).collect();
                (
                    Scenario::standalone(site.step_seconds, flux, pv, self.incentive)?,
                    PowerSupply::Battery {
                        capacity_mwh: design.battery_kwh / 1000.0,
                        round_trip_efficiency: self.battery_round_trip,
                    },
                )
            }
        };
        let scenario = match (&site.ambient, self.apply_ambient) {
            (Some(f), true) => scenario.with_ambient(f)?,
            (None, true) => return Err(Error::Data("ambient correction requested but site has no ambient series".into())),
            _ => scenario,
        };
        let plant = PlantConfig {
            tech,
            storage_capacity: h_eff,
            retention: storage.per_step_retention,
            power,
        };
        Ok((scenario, plant))
    }

    pub fn capital(&self, design: &DesignParams) -> Result<CapitalCosts> {
        let pv_battery = match self.mode {
            Mode::Grid => 0.0,
            Mode::Standalone => self.cost.unit_capex_pv * design.pv_kw + self.cost.unit_capex_battery * design.battery_kwh,
        };
        Ok(CapitalCosts {
            dac: capex_dac(self.sizing.annual_capacity_t, &self.cost)?,
            solar: capex_solar(design.cp, design.cr, design.h_rated, &self.cost)?,
            pv_battery,
        })
    }

    /// Runs the year and prices the result.
    pub fn evaluate(&self, site: &SiteData, design: &DesignParams) -> Result<Evaluation> {
        let (scenario, plant) = self.build(site, design)?;
        let year = run_year(&scenario, &plant, &self.threshold, &PlantState::initial(0.0))?;
        let totals = year.schedule.totals;
        let years = scenario.years();
        let capital = self.capital(design)?;
        let emitted = if self.mode == Mode::Grid { totals.emitted_t } else { 0.0 };
        let net_co2 = (totals.desorbed - emitted) / years;
        let breakdown = lco2(&totals, years, &capital, &self.cost, self.mode);
        Ok(Evaluation {
            design: *design,
            totals,
            years,
            capex: capital.total(),
            net_co2,
            annual_profit: totals.profit / years,
            lco2: breakdown.as_ref().map(|b| b.lco2).unwrap_or(f64::INFINITY),
            abatement_per_capex: if capital.total() > 0.0 { net_co2 / capital.total() } else { 0.0 },
            error: breakdown.as_ref().err().map(|e| e.to_string()),
            breakdown: breakdown.ok(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub design: DesignParams,
    pub totals: Totals,
    pub years: f64,
    pub capex: f64,
    /// t/yr.
    pub net_co2: f64,
    pub annual_profit: f64,
    /// Infinite when the cost could not be levelized.
    pub lco2: f64,
    /// Net t/yr per USD of capital.
    pub abatement_per_capex: f64,
    pub breakdown: Option<CostBreakdown>,
    pub error: Option<String>,
}

impl Evaluation {
    pub fn capacity_factor(&self) -> f64 {
        self.totals.capacity_factor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Lco2,
    AbatementPerCapex,
}

impl Objective {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "lco2" => Some(Self::Lco2),
            "abatement_per_capex" | "abatement" => Some(Self::AbatementPerCapex),
            _ => None,
        }
    }

    /// Value to minimize.
    pub fn score(self, e: &Evaluation) -> f64 {
        match self {
            Objective::Lco2 => e.lco2,
            Objective::AbatementPerCapex => -e.abatement_per_capex,
        }
    }
}

/// One search dimension: a list of values or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { min: f64, max: f64, step: f64 },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Axis::Values(v) => Ok(v.clone()),
            Axis::Range { min, max, step } => {
                if !(*step > 0.0) || !(max >= min) {
                    return Err(Error::Argument(format!("bad range {min}..{max} step {step}")));
                }
                let n = ((max - min) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| min + i as f64 * step).collect())
            }
        }
    }
}

/// Search bounds; missing axes stay at the base design's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepBounds {
    pub cp: Option<Axis>,
    pub cr: Option<Axis>,
    pub target_temp_c: Option<Axis>,
    pub h_rated: Option<Axis>,
    pub pv_kw: Option<Axis>,
    pub battery_kwh: Option<Axis>,
}

impl SweepBounds {
    /// Grid points in lexicographic parameter order.
    pub fn grid(&self, base: &DesignParams) -> Result<Vec<DesignParams>> {
        let axis = |a: &Option<Axis>, v: f64| -> Result<Vec<f64>> {
            match a {
                Some(a) => a.values(),
                None => Ok(vec![v]),
            }
        };
        let axes = [
            axis(&self.cp, base.cp)?,
            axis(&self.cr, base.cr)?,
            axis(&self.target_temp_c, base.target_temp_c)?,
            axis(&self.h_rated, base.h_rated)?,
            axis(&self.pv_kw, base.pv_kw)?,
            axis(&self.battery_kwh, base.battery_kwh)?,
        ];
        if axes.iter().any(|a| a.is_empty()) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut idx = [0usize; 6];
        loop {
            out.push(DesignParams {
                cp: axes[0][idx[0]],
                cr: axes[1][idx[1]],
                target_temp_c: axes[2][idx[2]],
                h_rated: axes[3][idx[3]],
                pv_kw: axes[4][idx[4]],
                battery_kwh: axes[5][idx[5]],
            });
            let mut d = 5;
            loop {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
                if d == 0 {
                    return Ok(out);
                }
                d -= 1;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub objective: Objective,
    pub points: Vec<Evaluation>,
    pub argmin: usize,
}

impl SweepResult {
    pub fn best(&self) -> &Evaluation {
        &self.points[self.argmin]
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "cp",
            "cr",
            "target_temp_c",
            "h_rated",
            "pv_kw",
            "battery_kwh",
            "lco2",
            "net_co2",
            "capacity_factor",
            "abatement_per_capex",
            "capex",
            "annual_profit",
            "argmin",
            "error",
        ])
        ?;
        for (i, p) in self.points.iter().enumerate() {
            let d = &p.design;
            let row = [
                d.cp.to_string(),
                d.cr.to_string(),
                d.target_temp_c.to_string(),
                d.h_rated.to_string(),
                d.pv_kw.to_string(),
                d.battery_kwh.to_string(),
                p.lco2.to_string(),
                p.net_co2.to_string(),
                p.capacity_factor().to_string(),
                p.abatement_per_capex.to_string(),
                p.capex.to_string(),
                p.annual_profit.to_string(),
                u8::from(i == self.argmin).to_string(),
                p.error.clone().unwrap_or_default(),
            ];
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Index of the best point: lowest score, then lower capital cost, then grid order.
pub fn pick_best(points: &[Evaluation], objective: Objective) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let (sp, sb) = (objective.score(p), objective.score(&points[b]));
        let better = if same(sp, sb) {
            if same(p.capex, points[b].capex) {
                p.design.key() < points[b].design.key()
            } else {
                p.capex < points[b].capex
            }
        } else {
            sp < sb
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Evaluates every grid point; the output order follows the grid.
pub fn sweep(
    ctx: &DesignContext,
    site: &SiteData,
    grid: &[DesignParams],
    objective: Objective,
    budget: usize,
    exec: Execution,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Argument("design grid is empty".into()));
    }
    if grid.len() > budget {
        return Err(Error::Argument(format!(
            "design grid has {} points, budget is {budget}",
            grid.len()
        )));
    }
    let points = exec
        .map(grid, |d| ctx.evaluate(site, d))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let argmin = pick_best(&points, objective).expect("non-empty grid");
    Ok(SweepResult {
        objective,
        points,
        argmin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncentivePoint {
    pub incentive: f64,
    /// USD/yr at the base design.
    pub annual_profit: f64,
    pub capacity_factor: f64,
    pub net_co2: f64,
    /// Storage rating with the highest abatement per unit capital.
    pub optimal_storage: f64,
    pub payback_years: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncentiveSweep {
    pub points: Vec<IncentivePoint>,
    pub profit_monotone: bool,
    pub capacity_factor_monotone: bool,
}

/// One year per incentive level (and per storage candidate).
pub fn incentive_sweep(
    ctx: &DesignContext,
    site: &SiteData,
    design: &DesignParams,
    incentives: &[f64],
    storage_candidates: &[f64],
    exec: Execution,
) -> Result<IncentiveSweep> {
    if incentives.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Argument("incentives must be non-negative".into()));
    }
    let mut pis = incentives.to_vec();
    pis.sort_by(f64::total_cmp);
    pis.dedup();
    let mut storages = storage_candidates.to_vec();
    if !storages.contains(&design.h_rated) {
        storages.push(design.h_rated);
    }
    storages.sort_by(f64::total_cmp);
    storages.dedup();

    let jobs: Vec<(usize, f64)> = (0..pis.len()).flat_map(|i| storages.iter().map(move |&s| (i, s))).collect();
    let evals = exec
        .map(&jobs, |&(i, s)| {
            let mut c = ctx.clone();
            c.incentive = pis[i];
            c.evaluate(site, &DesignParams { h_rated: s, ..*design })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut by_pi: BTreeMap<usize, Vec<&Evaluation>> = BTreeMap::new();
    for ((i, _), e) in jobs.iter().zip(&evals) {
        by_pi.entry(*i).or_default().push(e);
    }
    let points: Vec<IncentivePoint> = by_pi
        .into_iter()
        .map(|(i, es)| {
            let base = es
                .iter()
                .find(|e| e.design.h_rated == design.h_rated)
                .expect("base storage evaluated");
            let optimal = es
                .iter()
                .fold(None::<&&Evaluation>, |best, e| match best {
                    Some(b) if e.abatement_per_capex <= b.abatement_per_capex => Some(b),
                    _ => Some(e),
                })
                .expect("at least one storage candidate");
            IncentivePoint {
                incentive: pis[i],
                annual_profit: base.annual_profit,
                capacity_factor: base.capacity_factor(),
                net_co2: base.net_co2,
                optimal_storage: optimal.design.h_rated,
                payback_years: crate::economics::payback_years(base.capex, base.annual_profit),
            }
        })
        .collect();
    let profit_monotone = points.windows(2).all(|w| w[1].annual_profit >= w[0].annual_profit - 1e-9 * w[0].annual_profit.abs().max(1.0));
    let capacity_factor_monotone = points.windows(2).all(|w| w[1].capacity_factor >= w[0].capacity_factor - 1e-12);
    Ok(IncentiveSweep {
        points,
        profit_monotone,
        capacity_factor_monotone,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn mof_spec() -> TechnologySpec {
        TechnologySpec {
            name: "MOF".into(),
            cycle_switching_cost: 115.60,
            adsorption_power: 0.642,
            desorption_power: 0.097,
            beta_a1: 0.2,
            beta_a2: -0.2,
            beta_d1: 0.0,
            beta_d2: 0.4,
            cycle_hours: 1.0,
        }
    }

    /// Two sunny days with cheap nights.
    pub(crate) fn small_site(days: usize) -> SiteData {
        let n = days * 288;
        let dni: Vec<f64> = (0..n)
            .map(|i| {
                let h = (i % 288) as f64 / 12.0;
                if (7.0..19.0).contains(&h) {
                    (std::f64::consts::PI * (h - 7.0) / 12.0).sin() * 0.9
                } else {
                    0.0
                }
            })
            .collect();
        let price = (0..n).map(|i| 20.0 + 30.0 * ((i % 288) as f64 / 288.0)).collect();
        SiteData {
            step_seconds: 300,
            wholesale_price: price,
            carbon_intensity: vec![0.0; n],
            dni_cf: dni,
            pv_cf: Vec::new(),
            ambient: None,
        }
    }

    fn ctx() -> DesignContext {
        DesignContext::new(mof_spec(), Mode::Grid, 200.0)
    }

    #[test]
    fn axis_ranges_are_inclusive() {
        let a = Axis::Range { min: 1.0, max: 5.0, step: 1.0 };
        assert_eq!(a.values().unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let parsed: Axis = serde_json::from_str("[50, 70]").unwrap();
        assert_eq!(parsed.values().unwrap(), vec![50.0, 70.0]);
    }

    #[test]
    fn grid_is_lexicographic() {
        let b = SweepBounds {
            cp: Some(Axis::Values(vec![2.0, 1.0])),
            h_rated: Some(Axis::Values(vec![10.0, 20.0])),
            ..SweepBounds::default()
        };
        let g = b.grid(&DesignParams::default()).unwrap();
        let keys: Vec<(f64, f64)> = g.iter().map(|d| (d.cp, d.h_rated)).collect();
        assert_eq!(keys, [(2.0, 10.0), (2.0, 20.0), (1.0, 10.0), (1.0, 20.0)]);
    }

    #[test]
    fn empty_grid_and_budget() {
        let site = small_site(1);
        assert!(matches!(
            sweep(&ctx(), &site, &[], Objective::Lco2, 10, Execution::Sequential),
            Err(Error::Argument(_))
        ));
        let g = vec![DesignParams::default(); 3];
        assert!(matches!(
            sweep(&ctx(), &site, &g, Objective::Lco2, 2, Execution::Sequential),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn single_point_is_argmin() {
        let site = small_site(2);
        let r = sweep(&ctx(), &site, &[DesignParams::default()], Objective::Lco2, 10, Execution::Sequential).unwrap();
        assert_eq!(r.argmin, 0);
        assert!(r.best().lco2.is_finite());
    }

    #[test]
    fn ties_prefer_cheaper_then_grid_order() {
        let site = small_site(1);
        let c = ctx();
        let mut a = c.evaluate(&site, &DesignParams::default()).unwrap();
        let mut b = a.clone();
        b.design.cp = 2.0;
        b.capex = a.capex - 1.0;
        assert_eq!(pick_best(&[a.clone(), b.clone()], Objective::Lco2), Some(1));
        b.capex = a.capex;
        assert_eq!(pick_best(&[a.clone(), b.clone()], Objective::Lco2), Some(1));
        a.lco2 -= 1.0;
        assert_eq!(pick_best(&[a, b], Objective::Lco2), Some(0));
    }

    #[test]
    fn sweeps_are_reproducible_across_execution_modes() {
        let site = small_site(2);
        let b = SweepBounds {
            cp: Some(Axis::Values(vec![0.5, 1.0])),
            h_rated: Some(Axis::Values(vec![5.0, 20.0])),
            ..SweepBounds::default()
        };
        let g = b.grid(&DesignParams::default()).unwrap();
        let s = sweep(&ctx(), &site, &g, Objective::Lco2, 10, Execution::Sequential).unwrap();
        let p = sweep(&ctx(), &site, &g, Objective::Lco2, 10, Execution::Parallel).unwrap();
        assert_eq!(s.argmin, p.argmin);
        for (x, y) in s.points.iter().zip(&p.points) {
            assert_eq!(x.lco2.to_bits(), y.lco2.to_bits());
        }
    }

    #[test]
    fn no_incentive_means_no_capture() {
        let site = small_site(2);
        let r = incentive_sweep(&ctx(), &site, &DesignParams::default(), &[0.0, 200.0, 100.0], &[30.0], Execution::Sequential).unwrap();
        assert_eq!(r.points[0].incentive, 0.0);
        assert!(r.points[0].annual_profit <= 0.0);
        assert!(r.points[0].net_co2.abs() < 1e-9);
        assert!(r.points[0].payback_years.is_infinite());
        assert!(r.profit_monotone);
        assert!(r.points[2].capacity_factor > 0.5);
    }

    #[test]
    fn standalone_needs_power() {
        let site = small_site(2);
        let mut c = DesignContext::new(mof_spec(), Mode::Standalone, 200.0);
        c.cost.unit_capex_pv = 1000.0;
        let dark = c.evaluate(&site, &DesignParams::default()).unwrap();
        assert_eq!(dark.totals.captured, 0.0);
        assert!(dark.error.is_some());
        let lit = c
            .evaluate(&site, &DesignParams { pv_kw: 3000.0, battery_kwh: 4000.0, ..DesignParams::default() })
            .unwrap();
        assert!(lit.totals.desorbed > 0.0);
        assert!(lit.lco2.is_finite());
    }
}
