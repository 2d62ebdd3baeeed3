use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use meshsim::bench::experiment::{default_suite, run_experiment, run_suite, App, ExperimentResult, ExperimentSpec, Shape};
use meshsim::bench::output::{chart_for, parse_results_json, result_csv, results_csv, results_json};
use meshsim::bench::report::Report;
use meshsim::calibrate::calibrate;
use meshsim::config::MachineConfig;
use meshsim::error::SimError;
use meshsim::kernels::stencil::Exchange;

/// Discrete-event simulator of a 2D mesh many-core chip.
#[derive(Parser)]
#[command(name = "meshsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (or the whole suite) and write its results.
    Bench(BenchArgs),
    /// Compare saved JSON results with the reference measurements.
    Report(ReportArgs),
    /// Fit the timing constants and write a config file.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Bandwidth,
    Latency,
    Elink,
    Stencil,
    Matmul,
    WeakScaling,
    StrongScaling,
    Suite,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AppArg {
    Stencil,
    Matmul,
}

#[derive(Args)]
struct BenchArgs {
    kind: Kind,
    /// Core grid, e.g. 8x8.
    #[arg(long, value_parser = parse_shape)]
    cores: Option<Shape>,
    /// Square problem size: matmul N, or an N×N stencil grid.
    #[arg(long, conflicts_with_all = ["rows", "cols"])]
    size: Option<usize>,
    #[arg(long, requires = "cols")]
    rows: Option<usize>,
    #[arg(long, requires = "rows")]
    cols: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 1)]
    writers: usize,
    /// Stencil without boundary exchange.
    #[arg(long)]
    no_halo: bool,
    /// Application for the scaling runs.
    #[arg(long, value_enum, default_value_t = AppArg::Stencil)]
    app: AppArg,
    /// Suite: add the 1024 and 1536 off-chip products.
    #[arg(long)]
    large: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write an SVG line chart (curve-like experiments only).
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON result files written by `meshsim bench --format json`.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Also write the comparison table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write every datapoint in long CSV form.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Starting config; the bundled default when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    s.parse::<Shape>().map_err(|e| e.to_string())
}

fn load_config(path: Option<&Path>) -> anyhow::Result<MachineConfig> {
    match path {
        Some(p) => MachineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(MachineConfig::default()),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn build_specs(a: &BenchArgs) -> Vec<ExperimentSpec> {
    let cores = a.cores.unwrap_or(Shape::new(8, 8));
    let app = match a.app {
        AppArg::Stencil => App::Stencil,
        AppArg::Matmul => App::Matmul,
    };
    match a.kind {
        Kind::Bandwidth => vec![ExperimentSpec::bandwidth()],
        Kind::Latency => vec![ExperimentSpec::latency()],
        Kind::Elink => vec![ExperimentSpec::elink(a.writers)],
        Kind::Stencil => {
            let (rows, cols) = match (a.size, a.rows, a.cols) {
                (Some(n), _, _) => (n, n),
                (None, Some(r), Some(c)) => (r, c),
                _ => (80 * cores.rows, 20 * cores.cols),
            };
            vec![ExperimentSpec::Stencil {
                rows,
                cols,
                cores,
                iterations: a.iters.unwrap_or(50),
                exchange: if a.no_halo { Exchange::None } else { Exchange::Halo },
            }]
        }
        Kind::Matmul => vec![ExperimentSpec::matmul(a.size.unwrap_or(32 * cores.rows), cores)],
        Kind::WeakScaling => vec![ExperimentSpec::WeakScaling {
            app,
            iterations: a.iters.unwrap_or(20),
        }],
        Kind::StrongScaling => vec![ExperimentSpec::StrongScaling {
            app,
            iterations: a.iters.unwrap_or(20),
        }],
        Kind::Suite => default_suite(a.large),
    }
}

fn is_usage_error(e: &SimError) -> bool {
    matches!(
        e,
        SimError::Config(_)
            | SimError::Domain(_)
            | SimError::OutOfBounds { .. }
            | SimError::Capacity(_)
            | SimError::Layout(_)
    )
}

fn bench(a: BenchArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(a.config.as_deref())?;
    let specs = build_specs(&a);
    // Reject bad parameters before anything runs.
    for s in &specs {
        if let Err(e) = s.validate(&cfg) {
            eprintln!("meshsim: invalid experiment: {e}");
            return Ok(ExitCode::from(2));
        }
    }
    let results: Vec<ExperimentResult> = if specs.len() == 1 {
        match run_experiment(&specs[0], &cfg) {
            Ok(r) => vec![r],
            Err(e) if is_usage_error(&e) => {
                eprintln!("meshsim: invalid experiment: {e}");
                return Ok(ExitCode::from(2));
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        run_suite(&specs, &cfg).into_iter().collect::<Result<_, _>>()?
    };
    let text = match (a.format, results.as_slice()) {
        (Format::Json, _) => results_json(&results)? + "\n",
        (Format::Csv, [one]) => result_csv(one)?,
        (Format::Csv, many) => results_csv(many)?,
    };
    write_out(a.out.as_deref(), &text)?;
    if let Some(p) = &a.svg {
        let charts: Vec<String> = results.iter().filter_map(chart_for).map(|c| c.to_svg()).collect();
        match charts.as_slice() {
            [] => bail!("no chart for this experiment kind"),
            [one] => std::fs::write(p, one)?,
            many => {
                // One file per chart: name.svg, name-1.svg, ...
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("chart");
                for (i, svg) in many.iter().enumerate() {
                    let name = if i == 0 { format!("{stem}.svg") } else { format!("{stem}-{i}.svg") };
                    std::fs::write(p.with_file_name(name), svg)?;
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report(a: ReportArgs) -> anyhow::Result<ExitCode> {
    let mut results = Vec::new();
    for p in &a.inputs {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        results.extend(parse_results_json(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    let rep = Report::build(&results);
    print!("{}", rep.to_text());
    if let Some(p) = &a.csv {
        std::fs::write(p, rep.to_csv()?)?;
    }
    if let Some(p) = &a.curves {
        std::fs::write(p, results_csv(&results)?)?;
    }
    Ok(if rep.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn calibrate_cmd(a: CalibrateArgs) -> anyhow::Result<ExitCode> {
    let base = load_config(a.config.as_deref())?;
    let (cfg, rep) = calibrate(&base)?;
    std::fs::write(&a.out, cfg.to_json_pretty() + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("{}", serde_json::to_string_pretty(&rep)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
        Command::Calibrate(a) => calibrate_cmd(a),
    };
    r.unwrap_or_else(|e| {
        eprintln!("meshsim: {e:#}");
        ExitCode::FAILURE
    })
}
