//! Deterministic synthetic inputs: a hot, sunny grid market with a fuel mix,
//! plus a small global location grid. Used for the bundled sample data,
//! examples and tests.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dac::TechnologySpec;
use crate::error::{Error, Result};
use crate::timeseries::{write_ambient, write_fuel_mix, write_series, FuelMixTable, SeriesKind, TimeSeries, Unit};

pub fn sample_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap()
}

/// The three sorbents of the reference technology table.
pub fn reference_technologies() -> Vec<TechnologySpec> {
    let row = |name: &str, s: f64, pa: f64, pd: f64, b: [f64; 4]| TechnologySpec {
        name: name.into(),
        cycle_switching_cost: s,
        adsorption_power: pa,
        desorption_power: pd,
        beta_a1: b[0],
        beta_a2: b[1],
        beta_d1: b[2],
        beta_d2: b[3],
        cycle_hours: 1.0,
    };
    let mut techs = vec![
        row("SI-AEATPMS", 213.36, 0.357, 0.071, [0.00099, 0.0, 0.0, 0.088]),
        row("APDES-NFC-FD", 42.02, 0.300, 0.060, [0.009434, 0.0, 0.0, 0.5]),
        row("MOF", 115.60, 0.642, 0.097, [0.2, -0.2, 0.0, 0.4]),
    ];
    techs[0].cycle_hours = 89.6;
    techs[1].cycle_hours = 9.6;
    techs
}

/// Climate knobs of one synthetic site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Climate {
    pub lat: f64,
    /// Long-run share of clear days.
    pub clear_share: f64,
    /// Share of the remaining days that are overcast rather than broken.
    pub overcast_share: f64,
    pub mean_temp_c: f64,
    pub seasonal_swing_c: f64,
    pub diurnal_swing_c: f64,
    pub mean_rh: f64,
}

impl Climate {
    pub const TX: Climate = Climate {
        lat: 31.5,
        clear_share: 0.85,
        overcast_share: 0.35,
        mean_temp_c: 19.0,
        seasonal_swing_c: 9.0,
        diurnal_swing_c: 7.0,
        mean_rh: 0.45,
    };
}

fn solar_declination(day: f64) -> f64 {
    (23.45f64).to_radians() * (2.0 * PI * (284.0 + day) / 365.0).sin()
}

/// Clear-sky direct-normal capacity factor at local solar time.
pub fn clear_sky_cf(lat_deg: f64, day_of_year: u32, hour: f64) -> f64 {
    let phi = lat_deg.to_radians();
    let delta = solar_declination(day_of_year as f64);
    let omega = (15.0 * (hour - 12.0)).to_radians();
    let cos_z = phi.sin() * delta.sin() + phi.cos() * delta.cos() * omega.cos();
    if cos_z <= 0.02 {
        return 0.0;
    }
    let air_mass = 1.0 / cos_z;
    (1.353 * 0.7f64.powf(air_mass.powf(0.678))).min(1.0)
}

#[derive(Clone, Copy, PartialEq)]
enum Sky {
    Clear,
    Broken,
    Overcast,
}

fn daily_skies(rng: &mut ChaCha8Rng, days: usize, c: &Climate) -> Vec<Sky> {
    let persistence = 0.55;
    let draw = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.gen();
        if u < c.clear_share {
            Sky::Clear
        } else if u < c.clear_share + (1.0 - c.clear_share) * c.overcast_share {
            Sky::Overcast
        } else {
            Sky::Broken
        }
    };
    let mut out = Vec::with_capacity(days);
    let mut sky = draw(rng);
    for _ in 0..days {
        if rng.gen::<f64>() > persistence {
            sky = draw(rng);
        }
        out.push(sky);
    }
    out
}

/// Direct-normal capacity factor series.
pub fn solar_series(rng: &mut ChaCha8Rng, c: &Climate, start: DateTime<Utc>, step_seconds: u32, steps: usize) -> Vec<f64> {
    let per_day = (86_400 / step_seconds) as usize;
    let skies = daily_skies(rng, steps.div_ceil(per_day) + 1, c);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut cloud = 0.0f64;
    (0..steps)
        .map(|i| {
            let ts = start + Duration::seconds(i as i64 * step_seconds as i64);
            let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0 + step_seconds as f64 / 7200.0;
            let clear = clear_sky_cf(c.lat, ts.ordinal(), hour);
            let sky = skies[i / per_day];
            cloud = 0.9 * cloud + 0.3 * noise.sample(rng);
            let transmit = match sky {
                Sky::Clear => 1.0 - 0.03 * cloud.abs().min(1.0),
                Sky::Broken => (0.55 + 0.45 * cloud.tanh()).clamp(0.0, 1.0),
                Sky::Overcast => (0.08 + 0.06 * cloud).clamp(0.0, 0.2),
            };
            (clear * transmit).clamp(0.0, 1.0)
        })
        .collect()
}

/// Temperature (°C) and relative humidity (fraction) series.
pub fn ambient_series(rng: &mut ChaCha8Rng, c: &Climate, start: DateTime<Utc>, step_seconds: u32, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let hemisphere = if c.lat >= 0.0 { 1.0 } else { -1.0 };
    let mut weather = 0.0f64;
    let mut temp = Vec::with_capacity(steps);
    let mut rh = Vec::with_capacity(steps);
    for i in 0..steps {
        let ts = start + Duration::seconds(i as i64 * step_seconds as i64);
        let day = ts.ordinal() as f64;
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        weather = 0.995 * weather + 0.1 * noise.sample(rng);
        let seasonal = -hemisphere * (2.0 * PI * (day + 10.0) / 365.0).cos();
        let diurnal = (2.0 * PI * (hour - 9.0) / 24.0).sin();
        let t = c.mean_temp_c + c.seasonal_swing_c * seasonal + c.diurnal_swing_c * diurnal + 2.0 * weather;
        let h = c.mean_rh - 0.15 * diurnal - 0.03 * weather;
        temp.push(t);
        rh.push(h.clamp(0.03, 1.0));
    }
    (temp, rh)
}

/// Hourly generation by fuel for a market with large wind and solar shares.
pub fn fuel_mix(rng: &mut ChaCha8Rng, start: DateTime<Utc>, hours: usize, lat: f64) -> FuelMixTable {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut wind_state = 0.0f64;
    let fuels = ["gas", "coal", "nuclear", "wind", "solar"];
    let mut cols = vec![Vec::with_capacity(hours); fuels.len()];
    for i in 0..hours {
        let ts = start + Duration::hours(i as i64);
        let day = ts.ordinal() as f64;
        let hour = ts.hour() as f64;
        let summer = (-(2.0 * PI * (day + 10.0) / 365.0).cos()).max(0.0);
        let demand = 42_000.0 + 14_000.0 * summer + 6_000.0 * (2.0 * PI * (hour - 11.0) / 24.0).sin();
        wind_state = 0.97 * wind_state + 0.25 * noise.sample(rng);
        let night = if !(7.0..19.0).contains(&hour) { 1.0 } else { 0.0 };
        let wind = (11_000.0 + 5_000.0 * wind_state + 4_000.0 * night).clamp(500.0, 30_000.0);
        let solar = 9_000.0 * clear_sky_cf(lat, ts.ordinal(), hour + 0.5);
        let nuclear = 5_000.0;
        let thermal = (demand - wind - solar - nuclear).max(3_000.0);
        cols[0].push(thermal * 0.72);
        cols[1].push(thermal * 0.28);
        cols[2].push(nuclear);
        cols[3].push(wind);
        cols[4].push(solar);
    }
    let factors: BTreeMap<String, f64> = [("gas", 0.41), ("coal", 0.95), ("nuclear", 0.0), ("wind", 0.0), ("solar", 0.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    FuelMixTable::new(start, 3600, fuels.iter().map(|f| f.to_string()).collect(), cols, factors).expect("consistent fuel mix")
}

/// Wholesale prices on a 5-minute grid: cheap sunny middays and windy nights,
/// evening peaks that sharpen in summer, and rare scarcity spikes.
pub fn price_series(rng: &mut ChaCha8Rng, c: &Climate, start: DateTime<Utc>, steps: usize) -> Vec<f64> {
    let step = 300u32;
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut slow = 0.0f64;
    let mut fast = 0.0f64;
    let mut spike_left = 0usize;
    let mut spike_level = 0.0;
    let mut windy = false;
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let ts = start + Duration::seconds(i as i64 * step as i64);
        let day = ts.ordinal() as f64;
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        if i % 288 == 0 {
            windy = rng.gen::<f64>() < 0.12;
        }
        let summer = (-(2.0 * PI * (day + 10.0) / 365.0).cos()).max(0.0);
        let evening = (-((hour - 19.0) / 1.8).powi(2)).exp();
        let morning = (-((hour - 7.5) / 1.2).powi(2)).exp();
        let solar = clear_sky_cf(c.lat, ts.ordinal(), hour);
        let night = if !(6.0..20.0).contains(&hour) { 1.0 } else { 0.0 };
        let mut p = 34.0 + 8.0 * morning + (20.0 + 55.0 * summer) * evening - 14.0 * solar + 6.0 * summer;
        if windy {
            p -= 28.0 * night + 8.0;
        }
        slow = 0.999 * slow + 0.25 * noise.sample(rng);
        fast = 0.9 * fast + 1.5 * noise.sample(rng);
        p += 3.0 * slow + fast;
        if spike_left == 0 && rng.gen::<f64>() < 0.0009 * (1.0 + 3.0 * summer * evening) {
            spike_left = rng.gen_range(1..=18);
            spike_level = 150.0 + 1500.0 * rng.gen::<f64>().powi(3);
        }
        if spike_left > 0 {
            spike_left -= 1;
            p = p.max(spike_level * (0.8 + 0.4 * rng.gen::<f64>()));
        }
        out.push((p * 100.0).round() / 100.0);
    }
    out
}

/// One location of the synthetic global grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalSite {
    pub name: &'static str,
    pub lon: f64,
    pub is_land: bool,
    pub climate: Climate,
}

pub fn global_sites() -> Vec<GlobalSite> {
    let site = |name, lat, lon, is_land, clear, overcast, t, ts, td, rh| GlobalSite {
        name,
        lon,
        is_land,
        climate: Climate {
            lat,
            clear_share: clear,
            overcast_share: overcast,
            mean_temp_c: t,
            seasonal_swing_c: ts,
            diurnal_swing_c: td,
            mean_rh: rh,
        },
    };
    vec![
        site("sahara", 23.0, 10.0, true, 0.92, 0.2, 27.0, 9.0, 9.0, 0.22),
        site("atacama", -24.0, -69.0, true, 0.93, 0.2, 16.0, 4.0, 9.0, 0.25),
        site("arabia", 24.0, 45.0, true, 0.88, 0.2, 29.0, 10.0, 8.0, 0.3),
        site("sonoran", 33.0, -112.0, true, 0.84, 0.3, 23.0, 10.0, 8.0, 0.3),
        site("outback", -25.0, 130.0, true, 0.82, 0.3, 23.0, 7.0, 8.0, 0.35),
        site("central_europe", 51.0, 10.0, true, 0.3, 0.55, 9.0, 9.0, 5.0, 0.75),
        site("pacific", 0.0, -140.0, false, 0.55, 0.4, 26.0, 1.0, 2.0, 0.8),
        site("south_atlantic", -40.0, 0.0, false, 0.35, 0.5, 13.0, 3.0, 2.0, 0.8),
    ]
}

fn series(values: Vec<f64>, step: u32, unit: Unit) -> Result<TimeSeries> {
    TimeSeries::new(sample_start(), step, values, unit)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Files written by [`write_sample`].
#[derive(Debug, Clone)]
pub struct SampleFiles {
    pub technologies: PathBuf,
    pub prices: PathBuf,
    pub fuel_mix: PathBuf,
    pub emission_factors: PathBuf,
    pub solar: PathBuf,
    pub ambient: PathBuf,
    pub grid_manifest: PathBuf,
}

/// Writes a full year of grid-market data for one site, the technology table
/// and an hourly global grid under `dir`.
pub fn write_sample(dir: &Path, seed: u64) -> Result<SampleFiles> {
    let mk = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mk(dir)?;
    let tx = dir.join("tx");
    let globe = dir.join("global");
    mk(&tx)?;
    mk(&globe)?;
    let start = sample_start();
    let steps = 105_120;
    let hours = 8760;

    let technologies = dir.join("technologies.json");
    write_json(&technologies, &serde_json::json!({ "technologies": reference_technologies() }))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Climate::TX;
    let prices = tx.join("prices.csv");
    write_series(&prices, &series(price_series(&mut rng, &c, start, steps), 300, Unit::UsdPerMwh)?, SeriesKind::Price)?;
    let solar = tx.join("solar.csv");
    write_series(&solar, &series(solar_series(&mut rng, &c, start, 300, steps), 300, Unit::CapacityFactor)?, SeriesKind::Solar)?;
    let (t, h) = ambient_series(&mut rng, &c, start, 3600, hours);
    let ambient = tx.join("ambient.csv");
    write_ambient(&ambient, &series(t, 3600, Unit::Celsius)?, &series(h, 3600, Unit::RelativeHumidity)?)?;
    let mix = fuel_mix(&mut rng, start, hours, c.lat);
    let fuel = tx.join("fuel_mix.csv");
    write_fuel_mix(&fuel, &mix)?;
    let emission_factors = tx.join("emission_factors.json");
    write_json(&emission_factors, &serde_json::to_value(&mix.emission_factors).expect("plain map"))?;

    let mut manifest = String::from("lat,lon,solar_path,ambient_path,is_land\n");
    for s in global_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s.lon.to_bits().rotate_left(17)) ^ s.climate.lat.to_bits());
        let solar_name = format!("{}_solar.csv", s.name);
        let amb_name = format!("{}_ambient.csv", s.name);
        let cf = solar_series(&mut rng, &s.climate, start, 3600, hours);
        write_series(globe.join(&solar_name), &series(cf, 3600, Unit::CapacityFactor)?, SeriesKind::Solar)?;
        let (t, h) = ambient_series(&mut rng, &s.climate, start, 3600, hours);
        write_ambient(globe.join(&amb_name), &series(t, 3600, Unit::Celsius)?, &series(h, 3600, Unit::RelativeHumidity)?)?;
        manifest.push_str(&format!(
            "{},{},{solar_name},{amb_name},{}\n",
            s.climate.lat,
            s.lon,
            if s.is_land { 1 } else { 0 }
        ));
    }
    let grid_manifest = globe.join("manifest.csv");
    std::fs::write(&grid_manifest, manifest).map_err(|e| Error::io(&grid_manifest, e))?;

    Ok(SampleFiles {
        technologies,
        prices,
        fuel_mix: fuel,
        emission_factors,
        solar,
        ambient,
        grid_manifest,
    })
}
