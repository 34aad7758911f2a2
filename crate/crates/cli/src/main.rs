use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affordance::checks::{run_suite, SUITE_NAMES};
use affordance::error::Error;
use affordance::export::{self, CompareRow};
use affordance::oracle::OracleConfig;
use affordance::scenario::{load_scenario, preset, PRESET_NAMES};
use affordance::{randomize_targets, solve_problem, ManipulabilityMode, Scenario, SolveStatus};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

const EXIT_INPUT: u8 = 1;
const EXIT_ABORT: u8 = 2;

#[derive(Parser)]
#[command(name = "affordance", version, about = "Tool-use trajectory optimization with range constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write tables, report, ellipsoid and plot.
    Run(RunArgs),
    /// Solve a scenario for every (mode, seed) cell and tabulate alpha at T.
    Compare(CompareArgs),
    /// Run the oracle suites.
    Check(CheckArgs),
    /// List built-in presets, or print one as TOML.
    Presets {
        name: Option<String>,
    },
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario TOML file, or `preset:<name>`.
    #[arg(long)]
    scenario: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Plot,
    Both,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    out: PathBuf,
    /// Draw via box and target placement from the scenario's randomize region.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the manipulability mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ManipulabilityMode>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of none,directional,determinant,tracking.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, value_parser = parse_mode)]
    modes: Vec<ManipulabilityMode>,
    /// `a..b`, `a..=b` or a comma-separated list.
    #[arg(long, default_value = "0..10", value_parser = parse_seeds)]
    seeds: Seeds,
    #[arg(long)]
    max_threads: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    /// Suites to run (default: all).
    #[arg(long = "suite", value_parser = clap::builder::PossibleValuesParser::new(SUITE_NAMES))]
    suites: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_mode(s: &str) -> Result<ManipulabilityMode, String> {
    ManipulabilityMode::parse(s).map_err(|_| {
        let all: Vec<&str> = ManipulabilityMode::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown mode `{s}` (expected one of {})", all.join(", "))
    })
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(Seeds(seeds))
}

fn read_scenario(source: &str) -> affordance::error::Result<Scenario> {
    if source.starts_with("preset:") {
        return load_scenario(source);
    }
    let text = fs::read_to_string(source).map_err(|e| Error::InvalidArgument(format!("{source}: {e}")))?;
    load_scenario(&text)
}

fn prepare(base: Scenario, seed: Option<u64>, mode: Option<ManipulabilityMode>) -> affordance::error::Result<Scenario> {
    let mut s = base;
    if let Some(m) = mode {
        s = s.with_mode(m);
    }
    if let Some(seed) = seed {
        s = randomize_targets(&s, seed)?;
    }
    s.validate()?;
    Ok(s)
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn write(dir: &Path, name: &str, contents: &str) -> affordance::error::Result<()> {
    export::write_atomic(&dir.join(name), contents)
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let scenario = match read_scenario(&args.scenario.scenario).and_then(|s| prepare(s, args.seed, args.mode)) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let problem = match scenario.build() {
        Ok(p) => p,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    if let Err(e) = fs::create_dir_all(&args.out) {
        return fail(EXIT_INPUT, format!("{}: {e}", args.out.display()));
    }
    let report = match solve_problem(&problem) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_ABORT, e),
    };
    let out = &args.out;
    let written = (|| -> affordance::error::Result<()> {
        write(out, "report.json", &export::report_json(&report)?)?;
        write(out, "timing.json", &export::timing_json(&report)?)?;
        if args.format != Format::Plot {
            write(out, "trajectory.csv", &export::trajectory_csv(&report))?;
            write(out, "history.csv", &export::history_csv(&report))?;
            if let Some(e) = export::final_ellipsoid(&report) {
                write(out, "ellipsoid.json", &export::ellipsoid_json(e)?)?;
            }
        }
        if args.format != Format::Table {
            if problem.model.chain.workspace_dim() == 2 {
                write(out, "plot.svg", &export::plot_svg(&problem, &report)?)?;
            } else {
                eprintln!("note: plots are drawn for planar chains only");
            }
        }
        Ok(())
    })();
    if let Err(e) = written {
        return fail(EXIT_INPUT, e);
    }

    println!("scenario        {}", report.name);
    println!("status          {}", report.status.label());
    println!("outer iters     {}", report.outer_iterations());
    if let Some((rp, rd)) = report.final_residuals() {
        println!("residuals       r_p={rp:.3e} r_d={rd:.3e}");
    }
    if let Some(e) = report.final_position_error {
        println!("final error     {e:.3e} m");
    }
    if let Some(d) = report.constraints.via_distance {
        println!("via distance    {d:.3e} m");
    }
    if let Some(m) = &report.manipulability {
        println!("alpha at T      {:.6}", m.alpha);
    }
    println!("elapsed         {:.3} s", report.elapsed.as_secs_f64());
    match &report.status {
        SolveStatus::Aborted(msg) => fail(EXIT_ABORT, format!("solver aborted: {msg}")),
        _ => ExitCode::SUCCESS,
    }
}

fn compare_cell(base: &Scenario, mode: ManipulabilityMode, seed: u64, randomize: bool) -> CompareRow {
    let result = prepare(base.clone(), randomize.then_some(seed), Some(mode))
        .and_then(|s| s.build())
        .and_then(|p| solve_problem(&p));
    let (alpha, status) = match result {
        Ok(r) => match r.status {
            SolveStatus::Aborted(_) => (None, r.status.label().to_string()),
            _ => (r.manipulability.map(|m| m.alpha), r.status.label().to_string()),
        },
        Err(_) => (None, "error".to_string()),
    };
    CompareRow {
        mode: mode.as_str().to_string(),
        seed,
        alpha,
        status,
    }
}

fn cmd_compare(args: CompareArgs) -> ExitCode {
    let base = match read_scenario(&args.scenario.scenario).and_then(|s| prepare(s, None, None)) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let randomize = base.randomize.is_some();
    if !randomize {
        eprintln!("note: scenario has no randomize region; seeds only label the cells");
    }
    if let Err(e) = fs::create_dir_all(&args.out) {
        return fail(EXIT_INPUT, format!("{}: {e}", args.out.display()));
    }
    let cells: Vec<(ManipulabilityMode, u64)> = args
        .modes
        .iter()
        .flat_map(|m| args.seeds.0.iter().map(move |s| (*m, *s)))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.max_threads {
        pool = pool.num_threads(n.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let rows: Vec<CompareRow> =
        pool.install(|| cells.par_iter().map(|(m, s)| compare_cell(&base, *m, *s, randomize)).collect());

    if let Err(e) = write(&args.out, "compare.csv", &export::compare_csv(&rows)) {
        return fail(EXIT_INPUT, e);
    }
    println!("{:<12} {:>6} {:>12}  status", "mode", "seed", "alpha_t");
    for r in &rows {
        let alpha = r.alpha.map(|a| format!("{a:.6}")).unwrap_or_else(|| "-".into());
        println!("{:<12} {:>6} {:>12}  {}", r.mode, r.seed, alpha, r.status);
    }
    if rows.iter().any(|r| r.alpha.is_some()) {
        ExitCode::SUCCESS
    } else {
        fail(EXIT_ABORT, "no cell produced a result")
    }
}

fn cmd_check(args: CheckArgs) -> ExitCode {
    let mut config = OracleConfig {
        seed: args.seed,
        ..OracleConfig::default()
    };
    if let Some(t) = args.trials {
        config.trials = t;
    }
    let suites: Vec<&str> = if args.suites.is_empty() {
        SUITE_NAMES.to_vec()
    } else {
        args.suites.iter().map(String::as_str).collect()
    };
    let mut ok = true;
    for name in suites {
        match run_suite(name, &config) {
            Ok(r) => {
                ok &= r.passed;
                println!("{}", r.line());
            }
            Err(e) => {
                ok = false;
                println!("FAIL {name:<10} error: {e}");
            }
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INPUT)
    }
}

fn cmd_presets(name: Option<String>) -> ExitCode {
    match name {
        Some(n) => match preset(&n).and_then(|s| s.to_toml()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_INPUT, e),
        },
        None => {
            for n in PRESET_NAMES {
                let s = preset(n).expect("built-in preset");
                println!(
                    "{n:<16} chain={:<10} T={:<4} mode={}",
                    s.chain.preset,
                    s.horizon_steps,
                    s.manipulability.mode.as_str()
                );
            }
            ExitCode::SUCCESS
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Check(a) => cmd_check(a),
        Command::Presets { name } => cmd_presets(name),
    }
}
