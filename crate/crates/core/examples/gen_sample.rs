//! Regenerates the bundled sample data set and its calibrated configs.
//!
//! Usage: `cargo run --release -p heliodac-core --example gen_sample -- [DIR] [SEED]`

use std::path::{Path, PathBuf};

use heliodac::config::{RunConfig, SCHEMA_VERSION};
use heliodac::design::{Axis, DesignParams, SweepBounds};
use heliodac::economics::{calibrate_unit_costs, REFERENCE_SHARES};
use heliodac::plant::Mode;

/// Regeneration heat per tonne of per-cycle capacity that makes the reference
/// design cost-optimal on the sample.
const CALIBRATED_THERMAL_MWH_PER_T: f64 = 17.0;

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20220101);
    heliodac::synthetic::write_sample(&dir, seed)?;

    let mut tx = RunConfig {
        schema_version: SCHEMA_VERSION,
        technology: "MOF".into(),
        mode: Mode::Grid,
        output_dir: "../out/tx".into(),
        ..RunConfig::default()
    };
    tx.data.technologies = Some("technologies.json".into());
    tx.data.prices = Some("tx/prices.csv".into());
    tx.data.solar = Some("tx/solar.csv".into());
    tx.data.ambient = Some("tx/ambient.csv".into());
    tx.data.fuel_mix = Some("tx/fuel_mix.csv".into());
    tx.data.emission_factors = Some("tx/emission_factors.json".into());
    tx.sizing.thermal_mwh_per_t = CALIBRATED_THERMAL_MWH_PER_T;

    let mut resolved = tx.clone();
    resolved.resolve(&dir);
    let site = resolved.load_site()?.site;
    let ctx = resolved.context()?;
    let eval = ctx.evaluate(&site, &tx.design)?;
    let d = tx.design;
    tx.economics = calibrate_unit_costs(
        &eval.totals,
        eval.years,
        tx.sizing.annual_capacity_t,
        d.cp,
        d.cr,
        d.h_rated,
        REFERENCE_SHARES,
        &tx.economics,
    )?;
    write_json(&dir.join("tx_config.json"), &tx)?;

    let mut global = tx.clone();
    global.mode = Mode::Standalone;
    global.output_dir = "../out/global".into();
    global.data.prices = None;
    global.data.solar = None;
    global.data.ambient = None;
    global.data.fuel_mix = None;
    global.data.emission_factors = None;
    global.data.grid = Some("global/manifest.csv".into());
    global.design = DesignParams {
        pv_kw: 2500.0,
        battery_kwh: 6000.0,
        ..d
    };
    global.global.mask_cf_threshold = 0.15;
    write_json(&dir.join("global_config.json"), &global)?;

    let bounds = SweepBounds {
        cp: Some(Axis::Range { min: 1.0, max: 5.0, step: 1.0 }),
        cr: Some(Axis::Values(vec![1.0, 2.0])),
        target_temp_c: Some(Axis::Range { min: 350.0, max: 450.0, step: 50.0 }),
        h_rated: Some(Axis::Range { min: 30.0, max: 110.0, step: 20.0 }),
        ..SweepBounds::default()
    };
    write_json(&dir.join("sweep_bounds.json"), &bounds)?;

    println!(
        "wrote sample under {}: capacity factor {:.3}, calibrated costs {:?}",
        dir.display(),
        eval.capacity_factor(),
        tx.economics
    );
    Ok(())
}
