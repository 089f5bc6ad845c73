use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use slipwalk::aslip::ASlipParams;
use slipwalk::gait::{GaitSpec, GaitTrajectory};
use slipwalk::hlip::HlipParams;
use slipwalk::io::{
    cmd_analyze, cmd_gait, cmd_orbit, cmd_plan, cmd_simulate, output_dir, AnalyzeOptions,
    GaitSource, Scenario,
};
use slipwalk::{Error, Result};

/// aSLIP walking stabilized by H-LIP step-size control.
#[derive(Parser)]
#[command(name = "slipwalk", version, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the periodic stepping-in-place gait.
    Gait(GaitArgs),
    /// Print the period-1 and period-2 orbits of the H-LIP.
    Orbit(OrbitArgs),
    /// Run one or more scenario files.
    Simulate(SimulateArgs),
    /// Solve a step-planning problem.
    Plan(PlanArgs),
    /// Disturbance and invariant-set analysis of a run directory.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GaitArgs {
    /// Gait spec JSON; defaults are used for a missing file argument.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// aSLIP parameter JSON.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    osc_amp: Option<f64>,
    #[arg(long, default_value = "gait.json")]
    out: PathBuf,
    /// Defaults to `<out>` with a `.report.json` suffix.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct OrbitArgs {
    /// Take the H-LIP parameters measured on a gait file.
    #[arg(long)]
    gait: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    z0: f64,
    #[arg(long, default_value_t = 9.81)]
    g: f64,
    #[arg(long, default_value_t = 0.3)]
    t_ssp: f64,
    #[arg(long, default_value_t = 0.05)]
    t_dsp: f64,
    /// Desired velocity.
    #[arg(long, default_value_t = 0.3)]
    v: f64,
    /// Left-stance step size of the period-2 orbit.
    #[arg(long, default_value_t = -0.3, allow_hyphen_values = true)]
    u_left: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory; with several scenarios, one subdirectory each.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    gait: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write SVG figures.
    #[arg(long)]
    svg: bool,
    /// Run the scenarios in parallel.
    #[arg(long)]
    batch: bool,
}

#[derive(Args)]
struct PlanArgs {
    problem: PathBuf,
    #[arg(long, default_value = "solution.json")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    dir: PathBuf,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = slipwalk::invariant::DEFAULT_INFLATION)]
    inflation: f64,
    /// Run directory whose leg forces are the band reference.
    #[arg(long)]
    force_ref: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    c: f64,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir()?.join(path)
    })
}

fn gait(args: GaitArgs) -> Result<()> {
    let mut spec: GaitSpec = match &args.spec {
        Some(p) => read_json(p)?,
        None => GaitSpec::default(),
    };
    if let Some(a) = args.osc_amp {
        spec.osc_amp = a;
    }
    let params: ASlipParams = match &args.params {
        Some(p) => read_json(p)?,
        None => ASlipParams::default(),
    };
    let report = args
        .report
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    let r = cmd_gait(&spec, &params, &args.out, &report)?;
    println!(
        "gait written to {} (residual {:.2e}, oscillation {:.4} m, t_dsp {:.4} s)",
        args.out.display(),
        r.residual.unwrap_or(f64::NAN),
        r.oscillation.unwrap_or(f64::NAN),
        r.hlip.map_or(f64::NAN, |h| h.t_dsp)
    );
    Ok(())
}

fn orbit(args: OrbitArgs) -> Result<()> {
    let hlip = match &args.gait {
        Some(p) => GaitTrajectory::from_json(&std::fs::read_to_string(p)?)?.hlip,
        None => HlipParams::new(args.z0, args.g, args.t_ssp, args.t_dsp)?,
    };
    let report = cmd_orbit(&hlip, args.v, args.u_left)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn simulate_one(path: &Path, args: &SimulateArgs) -> Result<()> {
    let mut scenario = Scenario::load(path)?;
    if let Some(n) = args.steps {
        scenario.n_steps = n;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(g) = &args.gait {
        scenario.gait = GaitSource::File(absolute(g)?);
    }
    let out = match (&args.out, args.scenarios.len()) {
        (Some(dir), 1) => dir.clone(),
        (Some(dir), _) => dir.join(&scenario.name),
        (None, _) => output_dir(&scenario, None),
    };
    let s = cmd_simulate(&scenario, &out, args.svg)?;
    println!(
        "{}: {} steps, mean velocity [{:.4}, {:.4}] m/s, final position [{:.4}, {:.4}] -> {}",
        s.name,
        s.steps_completed,
        s.mean_velocity[0],
        s.mean_velocity[1],
        s.final_position[0],
        s.final_position[1],
        out.display()
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> std::result::Result<(), i32> {
    let run = |p: &PathBuf| {
        simulate_one(p, &args).map_err(|e| {
            eprintln!("error: {}: {e}", p.display());
            e.exit_code()
        })
    };
    let results: Vec<_> = if args.batch {
        args.scenarios.par_iter().map(run).collect()
    } else {
        args.scenarios.iter().map(run).collect()
    };
    match results.iter().filter_map(|r| r.err()).max() {
        Some(code) => Err(code),
        None => Ok(()),
    }
}

fn plan(args: PlanArgs) -> Result<()> {
    let s = cmd_plan(&args.problem, &args.out)?;
    println!(
        "objective {:.6e}, {} iterations, KKT residual {:.1e} -> {}",
        s.objective,
        s.iterations,
        s.kkt_residual,
        args.out.display()
    );
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let options = AnalyzeOptions {
        n: args.n,
        inflation: args.inflation,
        force_reference: args.force_ref,
        c: args.c,
        ..AnalyzeOptions::default()
    };
    let a = cmd_analyze(&args.dir, &options)?;
    for p in &a.planes {
        print!("{} plane: max |w| {:.3e}", p.axis, p.w_max_norm);
        if let Some(e) = &p.error {
            print!(
                ", {}/{} errors in E{}, certificate {}",
                e.inside.iter().filter(|&&b| b).count(),
                e.inside.len(),
                if e.exact { "" } else { "_n" },
                if e.certificate.holds {
                    "holds"
                } else {
                    "fails"
                }
            );
        }
        println!();
    }
    if let Some(f) = &a.force_band {
        println!(
            "force band c = {}: {} ({} violations)",
            f.c,
            if f.passed { "pass" } else { "fail" },
            f.violations
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gait(a) => gait(a).map_err(report),
        Command::Orbit(a) => orbit(a).map_err(report),
        Command::Simulate(a) => simulate(a),
        Command::Plan(a) => plan(a).map_err(report),
        Command::Analyze(a) => analyze(a).map_err(report),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code as u8),
    }
}

fn report(e: Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
