//! Randomized invariants shared by the property suite and the acceptance run.
#![allow(dead_code)]

use std::path::PathBuf;

use heliodac::dac::{ambient_capture_koh, ambient_factors_solid, step_state, AmbientFactors, DacState, Phase, PlantSizing, BASELINE_RH, BASELINE_TEMP_C};
use heliodac::exact::solve_exact;
use heliodac::exec::Execution;
use heliodac::plant::{PlantConfig, PlantState, PowerSupply, Scenario};
use heliodac::solar::{effective_capacity, StorageParams};
use heliodac::synthetic::{reference_technologies, sample_start};
use heliodac::thermo::{calibrate, simulate_schedule, ThermalAssumptions, ThermalPlant};
use heliodac::threshold::{run_year, ThresholdConfig};
use heliodac::timeseries::{align_to_step, apply_masks, resample_repeat, GridPoint, LocationGrid, TimeSeries, Unit};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const CASES: u32 = 1000;
const STEP: u32 = 300;

pub type Check = Result<(), TestCaseError>;

#[derive(Debug, Clone)]
pub struct Case {
    tech: usize,
    thermal_mwh_per_t: f64,
    storage: f64,
    prices: Vec<f64>,
    flux: Vec<f64>,
    pv: Vec<f64>,
    standalone: bool,
    battery: f64,
    h0_frac: f64,
    chunk: usize,
    lookahead: usize,
    use_boost: bool,
}

/// A short grid-tied or stand-alone plant with any of the reference sorbents.
pub fn case() -> impl Strategy<Value = Case> {
    (1usize..160).prop_flat_map(|n| {
        (
            0usize..3,
            1.0f64..20.0,
            0.5f64..40.0,
            prop::collection::vec(-50.0f64..300.0, n),
            prop::collection::vec(0.0f64..4.0, n),
            prop::collection::vec(0.0f64..2.0, n),
            any::<bool>(),
            0.0f64..10.0,
            0.0f64..=1.0,
            1usize..60,
            0usize..60,
            any::<bool>(),
        )
            .prop_map(
                |(tech, thermal_mwh_per_t, storage, prices, flux, pv, standalone, battery, h0_frac, chunk, lookahead, use_boost)| Case {
                    tech,
                    thermal_mwh_per_t,
                    storage,
                    prices,
                    flux,
                    pv,
                    standalone,
                    battery,
                    h0_frac,
                    chunk,
                    lookahead,
                    use_boost,
                },
            )
    })
}

fn build(c: &Case) -> (Scenario, PlantConfig, ThresholdConfig, PlantState) {
    let spec = &reference_technologies()[c.tech];
    let sizing = PlantSizing {
        thermal_mwh_per_t: c.thermal_mwh_per_t,
        ..PlantSizing::default()
    };
    let tech = spec.instantiate(&sizing, STEP).unwrap();
    let n = c.prices.len();
    let (scenario, power) = if c.standalone {
        (
            Scenario::standalone(STEP, c.flux.clone(), c.pv.clone(), 200.0).unwrap(),
            PowerSupply::Battery {
                capacity_mwh: c.battery,
                round_trip_efficiency: 0.88,
            },
        )
    } else {
        (
            Scenario::grid(STEP, c.prices.clone(), vec![0.4; n], c.flux.clone(), 200.0, 0.0).unwrap(),
            PowerSupply::Grid,
        )
    };
    let plant = PlantConfig {
        power,
        ..PlantConfig::grid(tech, c.storage, 0.99986)
    };
    let cfg = ThresholdConfig {
        chunk_steps: c.chunk,
        lookahead_steps: c.lookahead,
        use_boost: c.use_boost,
        ..ThresholdConfig::default()
    };
    (scenario, plant, cfg, PlantState::initial(c.h0_frac * c.storage))
}

pub fn check_bounds(c: &Case) -> Check {
    let (scenario, plant, cfg, init) = build(c);
    let year = run_year(&scenario, &plant, &cfg, &init).unwrap();
    let xmax = plant.tech.x_max;
    for (t, s) in year.schedule.steps.iter().enumerate() {
        prop_assert!(s.x >= -1e-12 && s.x <= xmax * (1.0 + 1e-9), "step {t}: x = {} of {xmax}", s.x);
        prop_assert!(
            s.h >= -1e-12 && s.h <= c.storage * (1.0 + 1e-9) + 1e-12,
            "step {t}: h = {} of {}",
            s.h,
            c.storage
        );
        prop_assert!(s.a >= 0.0 && s.d >= 0.0);
        prop_assert!(s.curtailed >= 0.0);
        if let PowerSupply::Battery { capacity_mwh, .. } = plant.power {
            prop_assert!(s.battery >= -1e-12 && s.battery <= capacity_mwh + 1e-9);
        }
    }
    Ok(())
}

pub fn check_exclusion(c: &Case) -> Check {
    let (scenario, plant, cfg, init) = build(c);
    let year = run_year(&scenario, &plant, &cfg, &init).unwrap();
    for (t, s) in year.schedule.steps.iter().enumerate() {
        prop_assert!(!(s.u && s.v), "step {t} both adsorbs and desorbs");
        prop_assert!(s.a == 0.0 || s.d == 0.0, "step {t}: a = {}, d = {}", s.a, s.d);
        if !s.u {
            prop_assert_eq!(s.a, 0.0);
        }
        if !s.v {
            prop_assert_eq!(s.d, 0.0);
        }
    }
    Ok(())
}

pub fn check_cycle_edges(c: &Case) -> Check {
    let (scenario, plant, cfg, init) = build(c);
    let year = run_year(&scenario, &plant, &cfg, &init).unwrap();
    let mut state: DacState = init.dac;
    let mut edges = 0u64;
    for s in &year.schedule.steps {
        let tr = step_state(&state, s.phase().unwrap(), s.a, s.d, &plant.tech).unwrap();
        prop_assert_eq!(tr.state.k, s.k);
        prop_assert_eq!(tr.switched, s.z);
        edges += tr.switched as u64;
        state = tr.state;
    }
    let z: u64 = year.schedule.steps.iter().map(|s| s.z as u64).sum();
    prop_assert_eq!(z, edges);
    prop_assert_eq!(year.schedule.totals.cycles, edges);
    Ok(())
}

pub fn check_ambient_baseline(c: &Case) -> Check {
    let f = ambient_factors_solid(BASELINE_TEMP_C, BASELINE_RH);
    prop_assert!((f.energy_factor - 1.0).abs() < 1e-12);
    prop_assert!((f.capture_factor - 1.0).abs() < 1e-12);
    prop_assert!((ambient_capture_koh(BASELINE_TEMP_C, BASELINE_RH) - 1.0).abs() < 1e-12);

    let (scenario, plant, cfg, init) = build(c);
    let n = scenario.len();
    let plain = run_year(&scenario, &plant, &cfg, &init).unwrap();
    let computed = run_year(&scenario.clone().with_ambient(&vec![f; n]).unwrap(), &plant, &cfg, &init).unwrap();
    prop_assert_eq!(plain.schedule.phases(), computed.schedule.phases());
    let p = plain.schedule.totals.profit;
    prop_assert!((p - computed.schedule.totals.profit).abs() <= 1e-9 * (1.0 + p.abs()));
    let unit = run_year(
        &scenario.clone().with_ambient(&vec![AmbientFactors::BASELINE; n]).unwrap(),
        &plant,
        &cfg,
        &init,
    )
    .unwrap();
    prop_assert_eq!(unit.schedule, plain.schedule);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ThermalCase {
    storage: f64,
    target: f64,
    thermal_mwh_per_t: f64,
    flux: Vec<f64>,
    prices: Vec<f64>,
    h0: f64,
}

pub fn thermal_case() -> impl Strategy<Value = ThermalCase> {
    (24usize..600).prop_flat_map(|n| {
        (
            10.0f64..120.0,
            320.0f64..500.0,
            5.0f64..25.0,
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..8.0], n),
            prop::collection::vec(-20.0f64..150.0, n),
            0.0f64..=1.0,
        )
            .prop_map(|(storage, target, thermal_mwh_per_t, flux, prices, h0)| ThermalCase {
                storage,
                target,
                thermal_mwh_per_t,
                flux,
                prices,
                h0,
            })
    })
}

pub fn check_energy_balance(c: &ThermalCase) -> Check {
    let spec = &reference_technologies()[2];
    let sizing = PlantSizing {
        thermal_mwh_per_t: c.thermal_mwh_per_t,
        ..PlantSizing::default()
    };
    let tech = spec.instantiate(&sizing, STEP).unwrap();
    let store = StorageParams {
        h_rated: c.storage,
        ..StorageParams::default()
    };
    let capacity = effective_capacity(&store, c.target).unwrap();
    let n = c.flux.len();
    let scenario = Scenario::grid(STEP, c.prices.clone(), vec![0.4; n], c.flux.clone(), 200.0, 0.0).unwrap();
    let plant = PlantConfig::grid(tech.clone(), capacity, store.per_step_retention);
    let cfg = ThresholdConfig {
        chunk_steps: 96,
        lookahead_steps: 96,
        ..ThresholdConfig::default()
    };
    let h0 = c.h0 * capacity;
    let year = run_year(&scenario, &plant, &cfg, &PlantState::initial(h0)).unwrap();

    let a = ThermalAssumptions::default();
    let template = ThermalPlant::template(&store, c.target, &tech, STEP, &a);
    let thermal = calibrate(&template, &tech, &a).unwrap();
    let report = simulate_schedule(&year.schedule.rows(), &scenario.flux, STEP, &thermal, h0).unwrap();
    let e = &report.energy;
    let scale = e.throughput().max(1.0);
    prop_assert!(e.residual().abs() / scale < 1e-6, "residual {} of {}", e.residual(), scale);
    prop_assert!(e.max_daily_residual < 1e-6, "daily residual {}", e.max_daily_residual);
    prop_assert!((0.0..=1.0).contains(&report.feasible_fraction));
    Ok(())
}

pub fn resample_case() -> impl Strategy<Value = (Vec<f64>, u32)> {
    (
        prop::collection::vec(-500.0f64..500.0, 1..300),
        prop::sample::select(vec![1u32, 2, 3, 4, 5, 6, 12]),
    )
}

pub fn check_resample(values: &[f64], factor: u32) -> Check {
    let s = TimeSeries::new(sample_start(), 3600, values.to_vec(), Unit::UsdPerMwh).unwrap();
    let r = resample_repeat(&s, factor).unwrap();
    prop_assert_eq!(r.len(), s.len() * factor as usize);
    prop_assert!((r.mean() - s.mean()).abs() <= 1e-9 * (1.0 + s.mean().abs()));
    let aligned = align_to_step(&s, 300).unwrap();
    prop_assert_eq!(aligned.step_seconds, 300);
    prop_assert!((aligned.mean() - s.mean()).abs() <= 1e-9 * (1.0 + s.mean().abs()));
    Ok(())
}

pub fn mask_case() -> impl Strategy<Value = (Vec<(bool, Option<f64>)>, f64)> {
    (
        prop::collection::vec((any::<bool>(), prop::option::of(0.0f64..1.0)), 0..80),
        0.0f64..1.0,
    )
}

pub fn check_masks(points: &[(bool, Option<f64>)], threshold: f64) -> Check {
    let grid = LocationGrid {
        points: points
            .iter()
            .enumerate()
            .map(|(i, &(is_land, cf_mean))| GridPoint {
                lat: -60.0 + i as f64,
                lon: i as f64,
                solar_path: PathBuf::from(format!("{i}.csv")),
                ambient_path: PathBuf::from(format!("{i}_amb.csv")),
                is_land,
                cf_mean,
            })
            .collect(),
    };
    let masked = apply_masks(&grid, threshold);
    let mut cursor = 0;
    for p in &masked.points {
        prop_assert!(p.is_land);
        prop_assert!(p.cf_mean.unwrap() > threshold);
        let at = grid.points[cursor..].iter().position(|q| q == p);
        prop_assert!(at.is_some(), "masked point not in the grid, or out of order");
        cursor += at.unwrap() + 1;
    }
    let eligible = grid
        .points
        .iter()
        .filter(|p| p.is_land && p.cf_mean.is_some_and(|m| m > threshold))
        .count();
    prop_assert_eq!(masked.len(), eligible);
    Ok(())
}

pub fn check_parallel_map(items: &[i64]) -> Check {
    let f = |x: &i64| x.wrapping_mul(0x9E37_79B9).rotate_left(7) ^ 0x55;
    prop_assert_eq!(Execution::Sequential.map(items, f), Execution::Parallel.map(items, f));
    Ok(())
}

pub fn exact_merge_case() -> impl Strategy<Value = (Vec<f64>, f64, f64, bool)> {
    (
        prop::collection::vec(-30.0f64..200.0, 1..7),
        0.0f64..0.3,
        0.0f64..1.0,
        any::<bool>(),
    )
}

pub fn check_exact_merge(prices: &[f64], flux_scale: f64, h0: f64, loaded: bool) -> Check {
    let tech = reference_technologies()[0].instantiate(&PlantSizing::default(), STEP).unwrap();
    let n = prices.len();
    let flux: Vec<f64> = (0..n).map(|i| flux_scale * (i % 3) as f64).collect();
    let scenario = Scenario::grid(STEP, prices.to_vec(), vec![0.3; n], flux, 200.0, 0.0).unwrap();
    let plant = PlantConfig::grid(tech.clone(), 2.0, 0.99986);
    let mut init = PlantState::initial(h0);
    if loaded {
        init.dac = DacState {
            x: tech.x_max,
            phase: Phase::Idle,
            k: true,
        };
    }
    let seq = solve_exact(&plant, &scenario.full(), &init, Execution::Sequential).unwrap();
    let par = solve_exact(&plant, &scenario.full(), &init, Execution::Parallel).unwrap();
    prop_assert_eq!(seq, par);
    Ok(())
}
