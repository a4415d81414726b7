//! Stand-alone cost assessment over a grid of locations.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dac::{ambient_factors_solid, AmbientFactors};
use crate::design::{DesignContext, DesignParams, SiteData};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::plant::Mode;
use crate::timeseries::{align_all, load_ambient, load_series_with, GridPoint, LoadOptions, LocationGrid, SeriesKind, MASTER_STEP_SECONDS};

pub const OK_FLAG: &str = "ok";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationResult {
    pub lat: f64,
    pub lon: f64,
    pub lco2: f64,
    pub lco2_ambient: f64,
    pub cf_mean: f64,
    pub cf_daily_std: f64,
    pub dac_cf: f64,
    /// `ok`, or what went wrong at this point.
    pub flag: String,
}

impl LocationResult {
    fn failed(p: &GridPoint, flag: String) -> Self {
        Self {
            lat: p.lat,
            lon: p.lon,
            lco2: f64::NAN,
            lco2_ambient: f64::NAN,
            cf_mean: f64::NAN,
            cf_daily_std: f64::NAN,
            dac_cf: f64::NAN,
            flag,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.flag == OK_FLAG
    }
}

fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Reads one location's solar and ambient series onto the 5-minute grid.
pub fn load_site(point: &GridPoint) -> Result<(SiteData, f64, f64)> {
    let opts = LoadOptions { fill_missing: true };
    let solar = load_series_with(&point.solar_path, SeriesKind::Solar, &opts)?;
    let (temp, rh) = load_ambient(&point.ambient_path, &opts)?;
    let cf_mean = solar.mean();
    let cf_daily_std = population_std(&solar.daily_means());
    let aligned = align_all(&[&solar, &temp, &rh], MASTER_STEP_SECONDS)?;
    let ambient: Vec<AmbientFactors> = aligned[1]
        .values
        .iter()
        .zip(&aligned[2].values)
        .map(|(&t, &h)| ambient_factors_solid(t, h))
        .collect();
    let n = aligned[0].len();
    let site = SiteData {
        step_seconds: MASTER_STEP_SECONDS,
        wholesale_price: vec![0.0; n],
        carbon_intensity: vec![0.0; n],
        dni_cf: aligned[0].values.clone(),
        pv_cf: Vec::new(),
        ambient: Some(ambient),
    };
    Ok((site, cf_mean, cf_daily_std))
}

fn assess_point(point: &GridPoint, design: &DesignParams, ctx: &DesignContext) -> LocationResult {
    let (site, cf_mean, cf_daily_std) = match load_site(point) {
        Ok(v) => v,
        Err(e) => return LocationResult::failed(point, format!("missing data: {e}")),
    };
    let mut nominal = ctx.clone();
    nominal.mode = Mode::Standalone;
    nominal.apply_ambient = false;
    let mut corrected = nominal.clone();
    corrected.apply_ambient = true;
    let runs = nominal
        .evaluate(&site, design)
        .and_then(|a| corrected.evaluate(&site, design).map(|b| (a, b)));
    match runs {
        Ok((a, b)) => {
            let flag = match (&a.error, &b.error) {
                (None, None) => OK_FLAG.to_string(),
                (Some(e), _) | (None, Some(e)) => format!("no cost: {e}"),
            };
            LocationResult {
                lat: point.lat,
                lon: point.lon,
                lco2: a.lco2,
                lco2_ambient: b.lco2,
                cf_mean,
                cf_daily_std,
                dac_cf: a.capacity_factor(),
                flag,
            }
        }
        Err(e) => LocationResult::failed(point, format!("run failed: {e}")),
    }
}

/// Evaluates a fixed stand-alone design at every point of an already masked
/// grid, nominally and with ambient corrections. Output follows grid order.
pub fn assess(grid: &LocationGrid, design: &DesignParams, ctx: &DesignContext, exec: Execution) -> Vec<LocationResult> {
    exec.map(&grid.points, |p| assess_point(p, design, ctx))
}

pub fn write_results(path: impl AsRef<Path>, results: &[LocationResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lat", "lon", "lco2", "lco2_ambient", "cf_mean", "cf_daily_std", "dac_cf", "flag"])?;
    for r in results {
        w.write_record([
            r.lat.to_string(),
            r.lon.to_string(),
            r.lco2.to_string(),
            r.lco2_ambient.to_string(),
            r.cf_mean.to_string(),
            r.cf_daily_std.to_string(),
            r.dac_cf.to_string(),
            r.flag.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct ResultRow {
    lat: f64,
    lon: f64,
    lco2: String,
    lco2_ambient: String,
    cf_mean: String,
    cf_daily_std: String,
    dac_cf: String,
    flag: String,
}

fn parse_num(raw: &str) -> std::result::Result<f64, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(f64::NAN);
    }
    raw.parse::<f64>().map_err(|e| format!("bad number {raw:?}: {e}"))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<LocationResult>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<ResultRow>().enumerate() {
        let perr = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            message,
        };
        let row = row.map_err(|e| perr(e.to_string()))?;
        out.push(LocationResult {
            lat: row.lat,
            lon: row.lon,
            lco2: parse_num(&row.lco2).map_err(perr)?,
            lco2_ambient: parse_num(&row.lco2_ambient).map_err(perr)?,
            cf_mean: parse_num(&row.cf_mean).map_err(perr)?,
            cf_daily_std: parse_num(&row.cf_daily_std).map_err(perr)?,
            dac_cf: parse_num(&row.dac_cf).map_err(perr)?,
            flag: row.flag,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCount {
    pub threshold: f64,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub points: usize,
    pub valid: usize,
    pub below: Vec<ThresholdCount>,
    pub best: Vec<LocationResult>,
    /// `lco2 ≈ c0 + c1·cf + c2·cf²`, lying on or below every valid point.
    pub lower_bound: [f64; 3],
    pub mean_ambient_increase: f64,
}

/// Least-squares polynomial through the points, shifted down until it touches
/// the lowest one.
pub fn lower_bound_quadratic(x: &[f64], y: &[f64]) -> [f64; 3] {
    if x.is_empty() {
        return [0.0; 3];
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let degree = (distinct.len() - 1).min(2);
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let mut c = [0.0; 3];
    if let Ok(sol) = a.clone().svd(true, true).solve(&b, 1e-12) {
        for (j, v) in sol.iter().enumerate() {
            c[j] = *v;
        }
    }
    let eval = |c: &[f64; 3], x: f64| c[0] + c[1] * x + c[2] * x * x;
    let min_residual = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| yi - eval(&c, xi))
        .fold(f64::INFINITY, f64::min);
    c[0] += min_residual;
    c
}

/// Threshold counts, the `best_n` cheapest points and the lower-bound fit.
/// Fractions are relative to all points, failed ones included.
pub fn summarize(results: &[LocationResult], thresholds: &[f64], best_n: usize) -> Result<GlobalSummary> {
    if results.is_empty() {
        return Err(Error::Argument("no results to summarize".into()));
    }
    let valid: Vec<&LocationResult> = results.iter().filter(|r| r.lco2.is_finite()).collect();
    let below = thresholds
        .iter()
        .map(|&t| {
            let count = valid.iter().filter(|r| r.lco2 < t).count();
            ThresholdCount {
                threshold: t,
                count,
                fraction: count as f64 / results.len() as f64,
            }
        })
        .collect();
    let mut ranked = valid.clone();
    ranked.sort_by(|a, b| a.lco2.total_cmp(&b.lco2).then(a.lat.total_cmp(&b.lat)).then(a.lon.total_cmp(&b.lon)));
    let best = ranked.into_iter().take(best_n).cloned().collect();
    let fit_pts: Vec<&&LocationResult> = valid.iter().filter(|r| r.cf_mean.is_finite()).collect();
    let xs: Vec<f64> = fit_pts.iter().map(|r| r.cf_mean).collect();
    let ys: Vec<f64> = fit_pts.iter().map(|r| r.lco2).collect();
    let increases: Vec<f64> = valid
        .iter()
        .filter(|r| r.lco2_ambient.is_finite() && r.lco2 > 0.0)
        .map(|r| r.lco2_ambient / r.lco2 - 1.0)
        .collect();
    Ok(GlobalSummary {
        points: results.len(),
        valid: valid.len(),
        below,
        best,
        lower_bound: lower_bound_quadratic(&xs, &ys),
        mean_ambient_increase: if increases.is_empty() {
            0.0
        } else {
            increases.iter().sum::<f64>() / increases.len() as f64
        },
    })
}

/// A value on someone else's grid, such as a competing technology's cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalPoint {
    pub lat: f64,
    pub lon: f64,
    pub value: f64,
}

pub fn read_external(path: impl AsRef<Path>) -> Result<Vec<ExternalPoint>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (lat, lon) = match (col("lat"), col("lon")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Schema(format!("{}: need lat and lon columns", path.display()))),
    };
    let value = col("value")
        .or_else(|| col("lco2"))
        .ok_or_else(|| Error::Schema(format!("{}: need a value or lco2 column", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |j: usize| -> Result<f64> {
            parse_num(rec.get(j).unwrap_or("")).map_err(|message| Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message,
            })
        };
        out.push(ExternalPoint {
            lat: get(lat)?,
            lon: get(lon)?,
            value: get(value)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffOptions {
    /// Coordinates closer than this (degrees) are the same point.
    pub tolerance: f64,
    /// A nearest neighbour inside this radius but outside `tolerance` means the
    /// grids are offset rather than partially overlapping.
    pub mismatch_radius: f64,
}

impl Default for DiffOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            mismatch_radius: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffPoint {
    pub lat: f64,
    pub lon: f64,
    /// `a − b`; `None` for unmatched points.
    pub diff: Option<f64>,
    pub in_a: bool,
    pub in_b: bool,
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Point-wise `a.lco2 − b.value`. Points of `a` come first in their order,
/// followed by unmatched points of `b`.
pub fn diff_grid(a: &[LocationResult], b: &[ExternalPoint], opts: &DiffOptions) -> Result<Vec<DiffPoint>> {
    let mut used = vec![false; b.len()];
    let mut out = Vec::with_capacity(a.len());
    for p in a {
        let nearest = b
            .iter()
            .enumerate()
            .map(|(j, q)| (j, distance((p.lat, p.lon), (q.lat, q.lon))))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match nearest {
            Some((j, d)) if d <= opts.tolerance => {
                used[j] = true;
                out.push(DiffPoint {
                    lat: p.lat,
                    lon: p.lon,
                    diff: Some(p.lco2 - b[j].value),
                    in_a: true,
                    in_b: true,
                });
            }
            Some((j, d)) if d <= opts.mismatch_radius => {
                return Err(Error::Data(format!(
                    "coordinate mismatch: ({}, {}) vs ({}, {}) differ by {d} degrees",
                    p.lat, p.lon, b[j].lat, b[j].lon
                )));
            }
            _ => out.push(DiffPoint {
                lat: p.lat,
                lon: p.lon,
                diff: None,
                in_a: true,
                in_b: false,
            }),
        }
    }
    for (q, _) in b.iter().zip(&used).filter(|(_, u)| !**u) {
        out.push(DiffPoint {
            lat: q.lat,
            lon: q.lon,
            diff: None,
            in_a: false,
            in_b: true,
        });
    }
    Ok(out)
}

pub fn write_diff(path: impl AsRef<Path>, diff: &[DiffPoint]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lat", "lon", "diff", "flag"])?;
    for d in diff {
        let flag = match (d.in_a, d.in_b) {
            (true, true) => "ok",
            (true, false) => "only_a",
            _ => "only_b",
        };
        w.write_record([
            d.lat.to_string(),
            d.lon.to_string(),
            d.diff.map(|v| v.to_string()).unwrap_or_default(),
            flag.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn res(lat: f64, lco2: f64, cf: f64) -> LocationResult {
        LocationResult {
            lat,
            lon: 0.0,
            lco2,
            lco2_ambient: lco2,
            cf_mean: cf,
            cf_daily_std: 0.0,
            dac_cf: 0.9,
            flag: OK_FLAG.into(),
        }
    }

    #[test]
    fn uniform_results_all_below() {
        let r: Vec<_> = (0..5).map(|i| res(i as f64, 170.0, 0.3)).collect();
        let s = summarize(&r, &[180.0, 160.0], 2).unwrap();
        assert_eq!(s.below[0].fraction, 1.0);
        assert_eq!(s.below[1].fraction, 0.0);
        assert_eq!(s.best.len(), 2);
        assert!(summarize(&[], &[180.0], 1).is_err());
    }

    #[test]
    fn bimodal_hand_count() {
        let mut r: Vec<_> = (0..3).map(|i| res(i as f64, 150.0, 0.35)).collect();
        r.extend((3..10).map(|i| res(i as f64, 400.0, 0.1)));
        let s = summarize(&r, &[180.0, 500.0], 1).unwrap();
        assert_eq!(s.below[0].count, 3);
        assert_eq!(s.below[0].fraction, 0.3);
        assert_eq!(s.below[1].fraction, 1.0);
        assert_eq!(s.best[0].lco2, 150.0);
    }

    #[test]
    fn diff_identity_shift_and_overlap() {
        let a: Vec<_> = (0..4).map(|i| res(i as f64, 100.0 + i as f64, 0.3)).collect();
        let same: Vec<_> = a.iter().map(|r| ExternalPoint { lat: r.lat, lon: r.lon, value: r.lco2 }).collect();
        let d = diff_grid(&a, &same, &DiffOptions::default()).unwrap();
        assert!(d.iter().all(|p| p.diff == Some(0.0)));
        let shifted: Vec<_> = same.iter().map(|p| ExternalPoint { value: p.value + 10.0, ..*p }).collect();
        let d = diff_grid(&a, &shifted, &DiffOptions::default()).unwrap();
        assert!(d.iter().all(|p| p.diff == Some(-10.0)));

        let partial = vec![same[1], same[2], ExternalPoint { lat: 50.0, lon: 0.0, value: 1.0 }];
        let d = diff_grid(&a, &partial, &DiffOptions::default()).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.iter().filter(|p| p.diff.is_some()).count(), 2);
        assert!(d[0].diff.is_none() && d[0].in_a && !d[0].in_b);
        assert!(!d[4].in_a && d[4].in_b);

        let offset = vec![ExternalPoint { lat: 0.005, lon: 0.0, value: 1.0 }];
        assert!(matches!(diff_grid(&a, &offset, &DiffOptions::default()), Err(Error::Data(_))));
    }

    #[test]
    fn results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = vec![res(1.5, 200.25, 0.3)];
        r.push(LocationResult::failed(
            &GridPoint {
                lat: 2.0,
                lon: 3.0,
                solar_path: "x".into(),
                ambient_path: "y".into(),
                is_land: true,
                cf_mean: None,
            },
            "missing data: x, y".into(),
        ));
        let p = dir.path().join("global.csv");
        write_results(&p, &r).unwrap();
        let back = read_results(&p).unwrap();
        assert_eq!(back[0], r[0]);
        assert!(back[1].lco2.is_nan());
        assert_eq!(back[1].flag, r[1].flag);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn lower_bound_never_above_points(pts in prop::collection::vec((0.0f64..1.0, 50.0f64..1000.0), 1..40)) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let c = lower_bound_quadratic(&xs, &ys);
            let mut touches = false;
            for (x, y) in xs.iter().zip(&ys) {
                let r = y - (c[0] + c[1] * x + c[2] * x * x);
                prop_assert!(r >= -1e-9 * y.abs().max(1.0), "residual {r}");
                touches |= r.abs() <= 1e-6 * y.abs().max(1.0);
            }
            prop_assert!(touches);
        }
    }
}
