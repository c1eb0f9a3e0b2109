use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use millibot::coilfield::{calibrate, CoilLayout, ReferenceActivation};
use millibot::harness::{emit_outputs, run_suite, run_trial_in, Scenario, SuiteConfig, World};
use millibot::planner::{plan, CanalMask, PlannerConfig, DEFAULT_PIXEL_SIZE_MM};
use millibot::{svg, Error, Vec2};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRIAL_FAILED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "millibot", version, about = "Magnetic millirobot navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a clearance-aware path through a canal mask.
    Plan {
        #[arg(long)]
        mask: PathBuf,
        /// Start point in mm, `x,y`.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        start: Vec2,
        /// Goal point in mm, `x,y`.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        goal: Vec2,
        /// Mask pixel size in mm.
        #[arg(long, default_value_t = DEFAULT_PIXEL_SIZE_MM)]
        pixel_size: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one closed-loop trial.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a comparison suite (parallel, capped by MILLIBOT_THREADS).
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate a coil layout against the reference activation. A missing
    /// file is created from the default geometry.
    Calibrate {
        #[arg(long)]
        coils: PathBuf,
    },
}

fn parse_point(s: &str) -> Result<Vec2, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok(Vec2::new(num(x)?, num(y)?))
}

/// I/O problems map to 4, everything else the user can fix in the inputs to 2.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn create_dir(dir: &Path) -> millibot::Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.into(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> millibot::Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn cmd_plan(mask: &Path, start: Vec2, goal: Vec2, pixel_size: f64, out: &Path) -> millibot::Result<()> {
    let mask = CanalMask::load_pgm(mask, pixel_size)?;
    let result = plan(&mask, start, goal, &PlannerConfig::default())?;
    create_dir(out)?;
    write(&out.join("waypoints.csv"), &result.path.to_csv())?;
    write(
        &out.join("plan.svg"),
        &svg::plan_overlay(&mask, &result.costmap, &result.path.waypoints),
    )?;
    println!(
        "planned {} waypoints, {:.2} mm",
        result.path.waypoints.len(),
        result.path.total_length
    );
    Ok(())
}

/// Returns whether the trial completed.
fn cmd_run(scenario: &Path, out: &Path) -> Result<bool, u8> {
    let report = |e: Error, code: u8| {
        eprintln!("error: {e}");
        code
    };
    let scenario = Scenario::load(scenario).map_err(|e| {
        let c = exit_code(&e);
        report(e, c)
    })?;
    let world = World::prepare(&scenario).map_err(|e| {
        let c = exit_code(&e);
        report(e, c)
    })?;
    // errors past this point come from the simulation itself
    let result = run_trial_in(&scenario, &world).map_err(|e| report(e, EXIT_TRIAL_FAILED))?;
    emit_outputs(&result, world.mask.as_deref(), out).map_err(|e| {
        let c = exit_code(&e);
        report(e, c)
    })?;
    let m = result.metrics;
    match result.failure_reason {
        None => println!(
            "completed: rmse {:.3} mm, p95 {:.3} mm, max {:.3} mm",
            m.rmse_mm, m.p95_mm, m.max_mm
        ),
        Some(r) => println!("failed ({r}) after {:.1} s: rmse {:.3} mm", result.series.last().map_or(0.0, |s| s.t), m.rmse_mm),
    }
    Ok(result.completed)
}

fn cmd_suite(config: &Path, out: &Path) -> millibot::Result<()> {
    let cfg = SuiteConfig::load(config)?;
    let (report, _) = run_suite(&cfg)?;
    create_dir(out)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write(&out.join("suite.json"), &json)?;
    let table = report.table();
    write(&out.join("suite.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_calibrate(path: &Path) -> millibot::Result<()> {
    let mut layout = if path.exists() {
        CoilLayout::load(path)?
    } else {
        CoilLayout::uncalibrated()
    };
    let report = calibrate(&layout.coils, &ReferenceActivation::default())?;
    layout.coils = report.coils;
    layout.save(path)?;
    println!(
        "scale {:.6e}; peak flux {:.3} mT at ({:.1}, {:.1}) mm; peak gradient {:.2} mT/cm at ({:.1}, {:.1}) mm",
        report.scale,
        report.peak_flux_t * 1e3,
        report.peak_flux_at.x * 1e3,
        report.peak_flux_at.y * 1e3,
        report.peak_gradient_t_per_m * 10.0,
        report.peak_gradient_at.x * 1e3,
        report.peak_gradient_at.y * 1e3,
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Plan {
            mask,
            start,
            goal,
            pixel_size,
            out,
        } => cmd_plan(mask, *start, *goal, *pixel_size, out),
        Command::Suite { config, out } => cmd_suite(config, out),
        Command::Calibrate { coils } => cmd_calibrate(coils),
        Command::Run { scenario, out } => {
            return match cmd_run(scenario, out) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_TRIAL_FAILED),
                Err(code) => ExitCode::from(code),
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
