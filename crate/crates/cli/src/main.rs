use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use heliodac::config::RunConfig;
use heliodac::dac::DacState;
use heliodac::design::{incentive_sweep, sweep, Objective, SweepBounds};
use heliodac::error::Error as CoreError;
use heliodac::exact::{solve_exact, verify_schedule, MAX_EXACT_HORIZON};
use heliodac::exec::{configure_threads, Execution};
use heliodac::global::{assess, diff_grid, read_external, read_results, summarize, write_diff, write_results, DiffOptions};
use heliodac::plant::{read_schedule_csv, PlantState};
use heliodac::solar::StorageParams;
use heliodac::thermo::{calibrate, simulate_schedule, ThermalPlant};
use heliodac::threshold::{hourly_profile, run_year, write_hourly_profile, ThresholdConfig};
use heliodac::timeseries::{apply_masks, LocationGrid};

#[derive(Parser, Debug)]
#[command(name = "heliodac", version, about = "Solar-thermal direct air capture scheduling and cost assessment")]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "HELIODAC_JOBS")]
    jobs: Option<usize>,

    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Schedule one year with the threshold policy and report economics.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the configured CO2 incentive, USD/t.
        #[arg(long)]
        incentive: Option<f64>,
    },
    /// Exhaustive search over a short window.
    Exact {
        #[arg(long)]
        config: PathBuf,
        /// Number of steps, at most 16.
        #[arg(long)]
        horizon: usize,
        /// First step of the window.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Stored heat at the start of the window, MWh.
        #[arg(long, default_value_t = 0.0)]
        h0: f64,
        /// Start with a fully loaded sorbent.
        #[arg(long)]
        saturated: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a schedule against the plant constraints and the thermal model.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long, default_value_t = 0.99)]
        min_feasible: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search over collector, storage and temperature designs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bounds: PathBuf,
        /// `lco2` or `abatement_per_capex`.
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Profit, capacity factor and best storage across incentive levels.
    Incentives {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated incentive levels, USD/t.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stand-alone cost over a grid of locations.
    Global {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Point-wise difference between a result grid and another grid.
    Diff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold counts, best locations and a lower-bound fit for a result grid.
    Summarize {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [180.0, 220.0, 300.0, 400.0])]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        best: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Bad input from the command line itself.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return if e.is_validation() { 2 } else { 1 };
        }
    }
    1
}

/// The cause chain, skipping causes already spelled out by their parent.
fn render(err: &anyhow::Error) -> String {
    let mut out = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        configure_threads(jobs);
    }
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command, exec: Execution) -> Result<()> {
    match cmd {
        Command::Optimize { config, out, incentive } => optimize(&config, out, incentive),
        Command::Exact {
            config,
            horizon,
            start,
            h0,
            saturated,
            out,
        } => exact(&config, horizon, start, h0, saturated, out, exec),
        Command::Verify {
            config,
            schedule,
            min_feasible,
            out,
        } => verify(&config, &schedule, min_feasible, out),
        Command::Sweep {
            config,
            bounds,
            objective,
            out,
        } => run_sweep(&config, &bounds, objective.as_deref(), out, exec),
        Command::Incentives { config, values, out } => incentives(&config, values, out, exec),
        Command::Global { config, out } => global(&config, out, exec),
        Command::Diff { a, b, tolerance, out } => diff(&a, &b, tolerance, &out),
        Command::Summarize {
            results,
            thresholds,
            best,
            out,
        } => run_summarize(&results, &thresholds, best, &out),
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    Ok(RunConfig::load(path)?)
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: Option<FileHash>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

fn hash_entry(path: &Path) -> Result<FileHash> {
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Records what went in and what came out. Outputs are named relative to `dir`.
fn write_manifest(dir: &Path, command: &'static str, config: Option<&Path>, inputs: &[PathBuf], outputs: &[&str]) -> Result<()> {
    let mut ins = inputs.to_vec();
    ins.sort();
    ins.dedup();
    let manifest = Manifest {
        tool: "heliodac",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: config.map(hash_entry).transpose()?,
        inputs: ins.iter().map(|p| hash_entry(p)).collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|name| {
                Ok(FileHash {
                    path: (*name).to_string(),
                    sha256: sha256_file(&dir.join(name))?,
                })
            })
            .collect::<Result<_>>()?,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn config_inputs(cfg: &RunConfig) -> Vec<PathBuf> {
    cfg.data.files().into_iter().map(Path::to_path_buf).collect()
}

fn optimize(config: &Path, out: Option<PathBuf>, incentive: Option<f64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(pi) = incentive {
        if !pi.is_finite() {
            return Err(Usage(format!("incentive {pi} is not finite")).into());
        }
        cfg.market.incentive = pi;
    }
    let dir = output_dir(&cfg, out)?;
    let loaded = cfg.load_site()?;
    let ctx = cfg.context()?;
    let clock = Instant::now();
    let eval = ctx.evaluate(&loaded.site, &cfg.design)?;
    let (scenario, plant) = ctx.build(&loaded.site, &cfg.design)?;
    let year = run_year(&scenario, &plant, &ctx.threshold, &PlantState::initial(0.0))?;
    let runtime = clock.elapsed().as_secs_f64();

    year.schedule.write_csv(dir.join("schedule.csv"))?;
    let profile = hourly_profile(&year.schedule, loaded.start, &scenario.wholesale_price);
    write_hourly_profile(&profile, dir.join("hourly_profile.csv"))?;
    let summary = json!({
        "technology": cfg.technology,
        "mode": cfg.mode,
        "design": cfg.design,
        "incentive": cfg.market.incentive,
        "steps": scenario.len(),
        "years": eval.years,
        "annual_profit": eval.annual_profit,
        "capacity_factor": eval.capacity_factor(),
        "lco2": finite_or_null(eval.lco2),
        "net_co2_per_year": eval.net_co2,
        "capex": eval.capex,
        "totals": eval.totals,
        "breakdown": eval.breakdown,
        "economics_error": eval.error,
        "runtime_s": runtime,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    write_manifest(
        &dir,
        "optimize",
        Some(config),
        &config_inputs(&cfg),
        &["schedule.csv", "hourly_profile.csv", "summary.json"],
    )?;
    println!(
        "profit {:.0} USD/yr, capacity factor {:.3}, LCO2 {}",
        eval.annual_profit,
        eval.capacity_factor(),
        fmt_cost(eval.lco2)
    );
    Ok(())
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn fmt_cost(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.1} USD/t")
    } else {
        "undefined".into()
    }
}

fn exact(config: &Path, horizon: usize, start: usize, h0: f64, saturated: bool, out: Option<PathBuf>, exec: Execution) -> Result<()> {
    if horizon == 0 || horizon > MAX_EXACT_HORIZON {
        return Err(Usage(format!("--horizon must lie in 1..={MAX_EXACT_HORIZON}, got {horizon}")).into());
    }
    let cfg = load_config(config)?;
    let dir = output_dir(&cfg, out)?;
    let loaded = cfg.load_site()?;
    let ctx = cfg.context()?;
    let (scenario, plant) = ctx.build(&loaded.site, &cfg.design)?;
    if start + horizon > scenario.len() {
        return Err(Usage(format!(
            "window {start}..{} exceeds the {} available steps",
            start + horizon,
            scenario.len()
        ))
        .into());
    }
    let mut initial = PlantState::initial(h0);
    if saturated {
        initial.dac = DacState {
            x: plant.tech.x_max,
            k: true,
            ..DacState::empty()
        };
    }
    let slice = scenario.slice(start..start + horizon);
    let clock = Instant::now();
    let best = solve_exact(&plant, &slice, &initial, exec)?;
    let runtime = clock.elapsed().as_secs_f64();
    let heuristic_cfg = ThresholdConfig {
        chunk_steps: horizon,
        lookahead_steps: 0,
        use_boost: false,
        ..ctx.threshold
    };
    let (_, steps) = heliodac::threshold::optimize_chunk(&plant, &slice, horizon, &heuristic_cfg, &initial);
    let heuristic_profit: f64 = steps.iter().map(|s| s.profit()).sum();

    best.write_csv(dir.join("exact_schedule.csv"))?;
    let phases: Vec<&str> = best.phases().iter().map(|p| p.map_or("conflict", |p| p.as_str())).collect();
    let summary = json!({
        "start": start,
        "horizon": horizon,
        "profit": best.totals.profit,
        "heuristic_profit": heuristic_profit,
        "phases": phases,
        "totals": best.totals,
        "runtime_s": runtime,
    });
    write_json(&dir.join("exact_summary.json"), &summary)?;
    write_manifest(
        &dir,
        "exact",
        Some(config),
        &config_inputs(&cfg),
        &["exact_schedule.csv", "exact_summary.json"],
    )?;
    println!("exact profit {:.2} USD, threshold policy {:.2} USD", best.totals.profit, heuristic_profit);
    Ok(())
}

fn verify(config: &Path, schedule: &Path, min_feasible: f64, out: Option<PathBuf>) -> Result<()> {
    if !(0.0..=1.0).contains(&min_feasible) {
        return Err(Usage(format!("--min-feasible must lie in [0, 1], got {min_feasible}")).into());
    }
    let cfg = load_config(config)?;
    let dir = output_dir(&cfg, out)?;
    let rows = read_schedule_csv(schedule)?;
    let loaded = cfg.load_site()?;
    let ctx = cfg.context()?;
    let (scenario, plant) = ctx.build(&loaded.site, &cfg.design)?;
    let violations = verify_schedule(&rows, &plant, &scenario.full(), &PlantState::initial(0.0));

    let storage = StorageParams {
        h_rated: cfg.design.h_rated,
        ..cfg.storage
    };
    let template = ThermalPlant::template(&storage, cfg.design.target_temp_c, &plant.tech, scenario.step_seconds, &cfg.thermal);
    let thermal = calibrate(&template, &plant.tech, &cfg.thermal)?;
    let report = if violations.is_empty() {
        Some(simulate_schedule(&rows, &scenario.flux, scenario.step_seconds, &thermal, 0.0)?)
    } else {
        None
    };
    let mut outputs = vec!["verify.json"];
    if let Some(r) = &report {
        r.write_csv(dir.join("cycles.csv"))?;
        outputs.push("cycles.csv");
    }
    let feasible = report.as_ref().map_or(0.0, |r| r.feasible_fraction);
    let pass = violations.is_empty() && feasible >= min_feasible;
    let summary = json!({
        "constraint_violations": violations.len(),
        "first_violations": violations.iter().take(100).collect::<Vec<_>>(),
        "cycles": report.as_ref().map(|r| r.cycles.len()),
        "feasible_fraction": report.as_ref().map(|r| r.feasible_fraction),
        "max_daily_residual": report.as_ref().map(|r| r.energy.max_daily_residual),
        "energy": report.as_ref().map(|r| &r.energy),
        "min_feasible": min_feasible,
        "pass": pass,
    });
    write_json(&dir.join("verify.json"), &summary)?;
    let mut inputs = config_inputs(&cfg);
    inputs.push(schedule.to_path_buf());
    write_manifest(&dir, "verify", Some(config), &inputs, &outputs)?;
    if let Some(v) = violations.first() {
        return Err(anyhow!(
            "{} constraint violations, first at step {} (constraint {}): {}",
            violations.len(),
            v.step,
            v.constraint,
            v.message
        ));
    }
    if !pass {
        return Err(anyhow!("feasible cycle fraction {feasible:.4} is below {min_feasible}"));
    }
    println!(
        "{} cycles, feasible fraction {feasible:.4}",
        report.as_ref().map_or(0, |r| r.cycles.len())
    );
    Ok(())
}

fn run_sweep(config: &Path, bounds_path: &Path, objective: Option<&str>, out: Option<PathBuf>, exec: Execution) -> Result<()> {
    let cfg = load_config(config)?;
    let objective = match objective {
        Some(raw) => Objective::parse(raw).ok_or_else(|| Usage(format!("unknown objective {raw:?}")))?,
        None => cfg.sweep.objective,
    };
    let raw = fs::read_to_string(bounds_path)
        .map_err(|e| CoreError::Io {
            path: bounds_path.to_path_buf(),
            source: e,
        })?;
    let bounds: SweepBounds = serde_json::from_str(&raw).map_err(|e| CoreError::Json {
        path: bounds_path.to_path_buf(),
        source: e,
    })?;
    let grid = bounds.grid(&cfg.design)?;
    let dir = output_dir(&cfg, out)?;
    let loaded = cfg.load_site()?;
    let ctx = cfg.context()?;
    let clock = Instant::now();
    let result = sweep(&ctx, &loaded.site, &grid, objective, cfg.sweep.budget, exec)?;
    let runtime = clock.elapsed().as_secs_f64();
    result.write_csv(dir.join("sweep.csv"))?;
    let best = result.best();
    let summary = json!({
        "objective": objective,
        "points": result.points.len(),
        "best": best.design,
        "best_lco2": finite_or_null(best.lco2),
        "best_abatement_per_capex": best.abatement_per_capex,
        "best_capacity_factor": best.capacity_factor(),
        "best_breakdown": best.breakdown,
        "runtime_s": runtime,
    });
    write_json(&dir.join("sweep_summary.json"), &summary)?;
    let mut inputs = config_inputs(&cfg);
    inputs.push(bounds_path.to_path_buf());
    write_manifest(&dir, "sweep", Some(config), &inputs, &["sweep.csv", "sweep_summary.json"])?;
    let d = best.design;
    println!(
        "{} designs; best cp {} h {} MWh T {} °C cr {}, LCO2 {}",
        result.points.len(),
        d.cp,
        d.h_rated,
        d.target_temp_c,
        d.cr,
        fmt_cost(best.lco2)
    );
    Ok(())
}

fn incentives(config: &Path, values: Option<Vec<f64>>, out: Option<PathBuf>, exec: Execution) -> Result<()> {
    let cfg = load_config(config)?;
    let values = values.unwrap_or_else(|| cfg.incentives.values.clone());
    if values.is_empty() {
        return Err(Usage("no incentive levels given".into()).into());
    }
    let dir = output_dir(&cfg, out)?;
    let loaded = cfg.load_site()?;
    let ctx = cfg.context()?;
    let res = incentive_sweep(&ctx, &loaded.site, &cfg.design, &values, &cfg.incentives.storage_candidates, exec)?;

    let path = dir.join("incentives.csv");
    let mut text = String::from("incentive,annual_profit,capacity_factor,net_co2,optimal_storage,payback_years\n");
    for p in &res.points {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.incentive, p.annual_profit, p.capacity_factor, p.net_co2, p.optimal_storage, p.payback_years
        ));
    }
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    write_json(&dir.join("incentives.json"), &res)?;
    write_manifest(&dir, "incentives", Some(config), &config_inputs(&cfg), &["incentives.csv", "incentives.json"])?;
    println!(
        "{} levels; profit monotone {}, capacity factor monotone {}",
        res.points.len(),
        res.profit_monotone,
        res.capacity_factor_monotone
    );
    Ok(())
}

fn global(config: &Path, out: Option<PathBuf>, exec: Execution) -> Result<()> {
    let cfg = load_config(config)?;
    let grid_path = cfg
        .data
        .grid
        .clone()
        .ok_or_else(|| CoreError::Schema("data.grid is required for the global run".into()))?;
    let dir = output_dir(&cfg, out)?;
    let mut grid = LocationGrid::load(&grid_path)?;
    grid.annotate_solar_means();
    let masked = apply_masks(&grid, cfg.global.mask_cf_threshold);
    let ctx = cfg.context()?;
    let clock = Instant::now();
    let results = assess(&masked, &cfg.design, &ctx, exec);
    let runtime = clock.elapsed().as_secs_f64();
    write_results(dir.join("global.csv"), &results)?;
    let mut outputs = vec!["global.csv"];
    let summary = summarize(&results, &cfg.global.thresholds, cfg.global.best_n);
    let doc = json!({
        "grid_points": grid.len(),
        "assessed": masked.len(),
        "summary": summary.as_ref().ok(),
        "runtime_s": runtime,
    });
    write_json(&dir.join("global_summary.json"), &doc)?;
    outputs.push("global_summary.json");

    let mut inputs = config_inputs(&cfg);
    for p in &masked.points {
        inputs.push(p.solar_path.clone());
        inputs.push(p.ambient_path.clone());
    }
    inputs.retain(|p| p.exists());
    write_manifest(&dir, "global", Some(config), &inputs, &outputs)?;
    let valid = results.iter().filter(|r| r.is_ok()).count();
    println!("{} of {} locations assessed, {valid} with a finite cost", masked.len(), grid.len());
    Ok(())
}

fn diff(a: &Path, b: &Path, tolerance: f64, out: &Path) -> Result<()> {
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Usage(format!("--tolerance must be non-negative, got {tolerance}")).into());
    }
    let left = read_results(a)?;
    let right = read_external(b)?;
    let opts = DiffOptions {
        tolerance,
        ..DiffOptions::default()
    };
    let points = diff_grid(&left, &right, &opts)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    write_diff(out.join("diff.csv"), &points)?;
    write_manifest(out, "diff", None, &[a.to_path_buf(), b.to_path_buf()], &["diff.csv"])?;
    let matched = points.iter().filter(|p| p.in_a && p.in_b).count();
    println!("{matched} matched points, {} unmatched", points.len() - matched);
    Ok(())
}

fn run_summarize(results: &Path, thresholds: &[f64], best: usize, out: &Path) -> Result<()> {
    let rows = read_results(results)?;
    let summary = summarize(&rows, thresholds, best)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    write_json(&out.join("summary.json"), &summary)?;
    write_manifest(out, "summarize", None, &[results.to_path_buf()], &["summary.json"])?;
    for t in &summary.below {
        println!("{:>5.0} USD/t: {} locations ({:.1}%)", t.threshold, t.count, 100.0 * t.fraction);
    }
    Ok(())
}
