//! Input time series: loading, validation, cleaning, resampling and alignment.
//!
//! All series live on a uniform UTC step grid. Missing values are carried as
//! `NaN` until [`fill_missing_linear`] replaces them; every other operation
//! expects a clean series.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default optimization step: 5 minutes.
pub const MASTER_STEP_SECONDS: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    UsdPerMwh,
    TonnePerMwh,
    CapacityFactor,
    Celsius,
    RelativeHumidity,
}

impl Unit {
    fn is_fraction(self) -> bool {
        matches!(self, Unit::CapacityFactor | Unit::RelativeHumidity)
    }
}

/// Which file schema and column a series is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Price,
    Solar,
    CarbonIntensity,
    Temperature,
    Humidity,
}

impl SeriesKind {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            SeriesKind::Price => &["timestamp", "price_usd_per_mwh"],
            SeriesKind::Solar => &["timestamp", "dni_cf"],
            SeriesKind::CarbonIntensity => &["timestamp", "carbon_t_per_mwh"],
            SeriesKind::Temperature | SeriesKind::Humidity => &["timestamp", "temp_c", "rh"],
        }
    }

    fn column(self) -> usize {
        match self {
            SeriesKind::Humidity => 2,
            _ => 1,
        }
    }

    pub fn unit(self) -> Unit {
        match self {
            SeriesKind::Price => Unit::UsdPerMwh,
            SeriesKind::Solar => Unit::CapacityFactor,
            SeriesKind::CarbonIntensity => Unit::TonnePerMwh,
            SeriesKind::Temperature => Unit::Celsius,
            SeriesKind::Humidity => Unit::RelativeHumidity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub start: DateTime<Utc>,
    pub step_seconds: u32,
    pub values: Vec<f64>,
    pub unit: Unit,
}

impl TimeSeries {
    pub fn new(start: DateTime<Utc>, step_seconds: u32, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if step_seconds == 0 {
            return Err(Error::Argument("step_seconds must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::Argument("a series needs at least one value".into()));
        }
        Ok(Self {
            start,
            step_seconds,
            values,
            unit,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(i as i64 * self.step_seconds as i64)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn has_gaps(&self) -> bool {
        self.values.iter().any(|v| !v.is_finite())
    }

    /// Checks the clean-series invariants: finite values and unit range.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value at {}", self.timestamp(i))));
            }
            if self.unit.is_fraction() && !(0.0..=1.0).contains(v) {
                return Err(Error::Data(format!(
                    "value {v} at {} outside [0, 1]",
                    self.timestamp(i)
                )));
            }
        }
        Ok(())
    }

    /// Mean of each consecutive day (partial trailing day included).
    pub fn daily_means(&self) -> Vec<f64> {
        let per_day = (86_400 / self.step_seconds as usize).max(1);
        self.values
            .chunks(per_day)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Replace empty / `NaN` cells using [`fill_missing_linear`] instead of failing.
    pub fill_missing: bool,
}

fn parse_timestamp(raw: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {raw:?}: {e}"))
}

fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<Vec<String>> {
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() != expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Schema(format!(
            "{}: header {:?} does not match expected {:?}",
            path.display(),
            header,
            expected
        )));
    }
    Ok(header)
}

/// Reads the timestamp column plus any number of numeric columns, checking that
/// the step grid is uniform. Empty or `NaN` cells come back as `NaN`.
fn read_columns(
    path: &Path,
    reader: &mut csv::Reader<File>,
    columns: &[usize],
) -> Result<(DateTime<Utc>, u32, Vec<Vec<f64>>)> {
    let mut out = vec![Vec::new(); columns.len()];
    let mut start = None;
    let mut prev: Option<DateTime<Utc>> = None;
    let mut step: Option<i64> = None;
    let display = path.display().to_string();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record?;
        let perr = |message: String| Error::Parse {
            path: display.clone(),
            line,
            message,
        };
        let ts = parse_timestamp(record.get(0).unwrap_or("")).map_err(&perr)?;
        if let Some(p) = prev {
            let delta = (ts - p).num_seconds();
            match step {
                None if delta > 0 => step = Some(delta),
                Some(s) if s == delta => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "{display}: line {line}: non-uniform timestamp step ({delta} s)"
                    )))
                }
            }
        } else {
            start = Some(ts);
        }
        prev = Some(ts);
        for (slot, &col) in out.iter_mut().zip(columns) {
            let cell = record
                .get(col)
                .ok_or_else(|| perr(format!("missing column {col}")))?
                .trim();
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .map_err(|e| perr(format!("bad number {cell:?}: {e}")))?
            };
            slot.push(v);
        }
    }
    let start = start.ok_or_else(|| Error::Data(format!("{display}: no data rows")))?;
    let step = match step {
        Some(s) => u32::try_from(s).map_err(|_| Error::Schema(format!("{display}: step too large")))?,
        // A single row carries no step information; assume the master step.
        None => MASTER_STEP_SECONDS,
    };
    Ok((start, step, out))
}

fn finish(path: &Path, series: TimeSeries, opts: &LoadOptions) -> Result<TimeSeries> {
    let series = if series.has_gaps() {
        if !opts.fill_missing {
            let i = series.values.iter().position(|v| !v.is_finite()).unwrap();
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message: "missing value (enable fill_missing to interpolate)".into(),
            });
        }
        fill_missing_linear(&series)?
    } else {
        series
    };
    if series.unit.is_fraction() {
        if let Some(i) = series.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message: format!("value {} outside [0, 1]", series.values[i]),
            });
        }
    }
    Ok(series)
}

pub fn load_series(path: impl AsRef<Path>, kind: SeriesKind) -> Result<TimeSeries> {
    load_series_with(path, kind, &LoadOptions::default())
}

pub fn load_series_with(path: impl AsRef<Path>, kind: SeriesKind, opts: &LoadOptions) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, kind.header())?;
    let (start, step, mut cols) = read_columns(path, &mut reader, &[kind.column()])?;
    let series = TimeSeries::new(start, step, cols.pop().unwrap(), kind.unit())?;
    finish(path, series, opts)
}

/// Loads both columns of an ambient file: `(temperature °C, relative humidity)`.
pub fn load_ambient(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<(TimeSeries, TimeSeries)> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, SeriesKind::Temperature.header())?;
    let (start, step, mut cols) = read_columns(path, &mut reader, &[1, 2])?;
    let rh = cols.pop().unwrap();
    let temp = cols.pop().unwrap();
    let temp = finish(path, TimeSeries::new(start, step, temp, Unit::Celsius)?, opts)?;
    let rh = finish(path, TimeSeries::new(start, step, rh, Unit::RelativeHumidity)?, opts)?;
    Ok((temp, rh))
}

fn write_csv(path: &Path, header: &[&str], start: DateTime<Utc>, step: u32, cols: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let n = cols.first().map_or(0, |c| c.len());
    let mut row = Vec::with_capacity(cols.len() + 1);
    for i in 0..n {
        row.clear();
        row.push(format_timestamp(start + Duration::seconds(i as i64 * step as i64)));
        for c in cols {
            // `{}` on f64 prints the shortest representation that round-trips.
            row.push(format!("{}", c[i]));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_series(path: impl AsRef<Path>, series: &TimeSeries, kind: SeriesKind) -> Result<()> {
    if matches!(kind, SeriesKind::Temperature | SeriesKind::Humidity) {
        return Err(Error::Argument("ambient series are written with write_ambient".into()));
    }
    write_csv(path.as_ref(), kind.header(), series.start, series.step_seconds, &[&series.values])
}

pub fn write_ambient(path: impl AsRef<Path>, temp: &TimeSeries, rh: &TimeSeries) -> Result<()> {
    if temp.len() != rh.len() || temp.step_seconds != rh.step_seconds || temp.start != rh.start {
        return Err(Error::Schema("temperature and humidity series are not aligned".into()));
    }
    write_csv(
        path.as_ref(),
        SeriesKind::Temperature.header(),
        temp.start,
        temp.step_seconds,
        &[&temp.values, &rh.values],
    )
}

/// Writes the generation table as `timestamp,<fuel>_mw,...`; emission factors are not included.
pub fn write_fuel_mix(path: impl AsRef<Path>, mix: &FuelMixTable) -> Result<()> {
    let header: Vec<String> = std::iter::once("timestamp".to_string())
        .chain(mix.fuels.iter().map(|f| format!("{f}_mw")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let cols: Vec<&[f64]> = mix.generation.iter().map(Vec::as_slice).collect();
    write_csv(path.as_ref(), &header, mix.start, mix.step_seconds, &cols)
}

/// Generation by fuel plus the emission factor of each fuel.
#[derive(Debug, Clone)]
pub struct FuelMixTable {
    pub start: DateTime<Utc>,
    pub step_seconds: u32,
    pub fuels: Vec<String>,
    /// `generation[f][t]` in MW.
    pub generation: Vec<Vec<f64>>,
    /// tCO2/MWh by fuel name.
    pub emission_factors: BTreeMap<String, f64>,
}

impl FuelMixTable {
    pub fn new(
        start: DateTime<Utc>,
        step_seconds: u32,
        fuels: Vec<String>,
        generation: Vec<Vec<f64>>,
        emission_factors: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if fuels.is_empty() || fuels.len() != generation.len() {
            return Err(Error::Schema("fuel names and generation columns differ".into()));
        }
        let n = generation[0].len();
        if n == 0 || generation.iter().any(|g| g.len() != n) {
            return Err(Error::Schema("generation columns have unequal or zero length".into()));
        }
        for (fuel, col) in fuels.iter().zip(&generation) {
            if !emission_factors.contains_key(fuel) {
                return Err(Error::Schema(format!("no emission factor for fuel {fuel:?}")));
            }
            if col.iter().any(|g| !g.is_finite() || *g < 0.0) {
                return Err(Error::Data(format!("negative or non-finite generation for {fuel:?}")));
            }
        }
        Ok(Self {
            start,
            step_seconds,
            fuels,
            generation,
            emission_factors,
        })
    }

    pub fn len(&self) -> usize {
        self.generation[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loads `timestamp,<fuel>_mw,...` plus a JSON object mapping fuel name to tCO2/MWh.
pub fn load_fuel_mix(csv_path: impl AsRef<Path>, factors_path: impl AsRef<Path>) -> Result<FuelMixTable> {
    let csv_path = csv_path.as_ref();
    let factors_path = factors_path.as_ref();
    let raw = std::fs::read_to_string(factors_path).map_err(|e| Error::io(factors_path, e))?;
    let factors: BTreeMap<String, f64> = serde_json::from_str(&raw).map_err(|e| Error::Json {
        path: factors_path.to_path_buf(),
        source: e,
    })?;
    let mut reader = open_reader(csv_path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 2 || header[0] != "timestamp" {
        return Err(Error::Schema(format!(
            "{}: fuel mix header must be timestamp,<fuel>_mw,...",
            csv_path.display()
        )));
    }
    let fuels: Vec<String> = header[1..]
        .iter()
        .map(|h| h.strip_suffix("_mw").unwrap_or(h).to_string())
        .collect();
    let cols: Vec<usize> = (1..header.len()).collect();
    let (start, step, generation) = read_columns(csv_path, &mut reader, &cols)?;
    FuelMixTable::new(start, step, fuels, generation, factors)
}

/// Generation-weighted average emission factor per step, in tCO2/MWh.
pub fn carbon_intensity(mix: &FuelMixTable) -> Result<TimeSeries> {
    let factors: Vec<f64> = mix.fuels.iter().map(|f| mix.emission_factors[f]).collect();
    let mut values = Vec::with_capacity(mix.len());
    for t in 0..mix.len() {
        let mut total = 0.0;
        let mut emitted = 0.0;
        for (col, ef) in mix.generation.iter().zip(&factors) {
            total += col[t];
            emitted += col[t] * ef;
        }
        if total <= 0.0 {
            let ts = mix.start + Duration::seconds(t as i64 * mix.step_seconds as i64);
            return Err(Error::Data(format!("zero total demand at {}", format_timestamp(ts))));
        }
        values.push(emitted / total);
    }
    TimeSeries::new(mix.start, mix.step_seconds, values, Unit::TonnePerMwh)
}

/// Repeats every value `factor` times, shrinking the step accordingly.
pub fn resample_repeat(s: &TimeSeries, factor: u32) -> Result<TimeSeries> {
    if factor == 0 {
        return Err(Error::Argument("resample factor must be at least 1".into()));
    }
    if !s.step_seconds.is_multiple_of(factor) {
        return Err(Error::Argument(format!(
            "step of {} s is not divisible by {factor}",
            s.step_seconds
        )));
    }
    let values = s
        .values
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, factor as usize))
        .collect();
    TimeSeries::new(s.start, s.step_seconds / factor, values, s.unit)
}

/// Interpolates interior gaps linearly and holds edge gaps at the nearest valid value.
pub fn fill_missing_linear(s: &TimeSeries) -> Result<TimeSeries> {
    let valid: Vec<usize> = (0..s.len()).filter(|&i| s.values[i].is_finite()).collect();
    if valid.len() < 2 {
        return Err(Error::Data(format!(
            "cannot fill gaps: {} valid point(s), need at least 2",
            valid.len()
        )));
    }
    let mut values = s.values.clone();
    let (first, last) = (valid[0], *valid.last().unwrap());
    for v in values.iter_mut().take(first) {
        *v = s.values[first];
    }
    for v in values.iter_mut().skip(last + 1) {
        *v = s.values[last];
    }
    for pair in valid.windows(2) {
        let (i0, i1) = (pair[0], pair[1]);
        let (y0, y1) = (s.values[i0], s.values[i1]);
        let span = (i1 - i0) as f64;
        for (j, v) in values.iter_mut().enumerate().take(i1).skip(i0 + 1) {
            let w = (j - i0) as f64 / span;
            *v = y0 + (y1 - y0) * w;
        }
    }
    TimeSeries::new(s.start, s.step_seconds, values, s.unit)
}

/// Brings a series onto `master_step` by repetition. Finer series are rejected.
pub fn align_to_step(s: &TimeSeries, master_step: u32) -> Result<TimeSeries> {
    if s.step_seconds == master_step {
        return Ok(s.clone());
    }
    if s.step_seconds < master_step || !s.step_seconds.is_multiple_of(master_step) {
        return Err(Error::Schema(format!(
            "cannot align a {} s series to a {master_step} s grid by repetition",
            s.step_seconds
        )));
    }
    resample_repeat(s, s.step_seconds / master_step)
}

/// Aligns several series to one grid and checks they cover the same span.
pub fn align_all(series: &[&TimeSeries], master_step: u32) -> Result<Vec<TimeSeries>> {
    let aligned = series
        .iter()
        .map(|s| align_to_step(s, master_step))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = aligned.first() {
        for s in &aligned[1..] {
            if s.start != first.start || s.len() != first.len() {
                return Err(Error::Schema(format!(
                    "misaligned series: start {} len {} vs start {} len {}",
                    format_timestamp(s.start),
                    s.len(),
                    format_timestamp(first.start),
                    first.len()
                )));
            }
        }
    }
    Ok(aligned)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lat: f64,
    pub lon: f64,
    pub solar_path: PathBuf,
    pub ambient_path: PathBuf,
    pub is_land: bool,
    /// Annual mean solar capacity factor, once the solar series has been read.
    #[serde(default)]
    pub cf_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocationGrid {
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    lat: f64,
    lon: f64,
    solar_path: String,
    ambient_path: String,
    is_land: String,
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

impl LocationGrid {
    /// Reads a `lat,lon,solar_path,ambient_path,is_land` manifest. Relative
    /// series paths resolve against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut reader = open_reader(path)?;
        check_header(path, &mut reader, &["lat", "lon", "solar_path", "ambient_path", "is_land"])?;
        let mut points = Vec::new();
        for (row, rec) in reader.deserialize::<ManifestRow>().enumerate() {
            let line = row + 2;
            let perr = |message: String| Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            };
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            if !(-90.0..=90.0).contains(&rec.lat) || !(-180.0..=180.0).contains(&rec.lon) {
                return Err(perr(format!("coordinate ({}, {}) out of range", rec.lat, rec.lon)));
            }
            let is_land = parse_flag(&rec.is_land).ok_or_else(|| perr(format!("bad is_land {:?}", rec.is_land)))?;
            points.push(GridPoint {
                lat: rec.lat,
                lon: rec.lon,
                solar_path: base.join(rec.solar_path),
                ambient_path: base.join(rec.ambient_path),
                is_land,
                cf_mean: None,
            });
        }
        Ok(Self { points })
    }

    /// Fills `cf_mean` for every point whose solar series loads; others stay `None`.
    pub fn annotate_solar_means(&mut self) {
        for p in &mut self.points {
            p.cf_mean = load_series_with(&p.solar_path, SeriesKind::Solar, &LoadOptions { fill_missing: true })
                .ok()
                .map(|s| s.mean());
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Keeps land points whose annual mean capacity factor exceeds `cf_threshold`.
/// Points without a known mean are dropped.
pub fn apply_masks(grid: &LocationGrid, cf_threshold: f64) -> LocationGrid {
    LocationGrid {
        points: grid
            .points
            .iter()
            .filter(|p| p.is_land && p.cf_mean.is_some_and(|m| m > cf_threshold))
            .cloned()
            .collect(),
    }
}
