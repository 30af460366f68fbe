mod commands;
mod demo;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geoinv::inverse_solver::Method;
use geoinv::sampling::SearchBox;

/// Global inversion of smooth maps of ℝⁿ by pullback-metric geodesics.
#[derive(Parser, Debug)]
#[command(name = "geoinv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve f(x) = y for one or more targets.
    Invert(InvertArgs),
    /// Estimate inf σ_min(Df)² over a box.
    Estimate(EstimateArgs),
    /// Check |f(x) - f(y)| >= sqrt(c)|x - y| on random pairs.
    Probe(ProbeArgs),
    /// Integrate a pullback-metric geodesic and write it as CSV.
    Geodesic(GeodesicArgs),
    /// Walk through the complex exponential, where the theorem's hypothesis fails.
    DemoExp,
    /// Run the built-in invariant suites.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct MapArg {
    /// Builtin map name (identity, linear, sinperturb[:a], cyclosin[:a],
    /// shear2, expc) or @path to a map file.
    #[arg(long)]
    map: String,
}

#[derive(Args, Debug)]
struct Tolerances {
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
}

#[derive(Args, Debug)]
struct InvertArgs {
    #[command(flatten)]
    map: MapArg,
    /// Target point y, comma separated. Repeat for a batch.
    #[arg(long, required = true, allow_hyphen_values = true, value_parser = parse_point)]
    target: Vec<Point>,
    /// Start of the path (default: origin).
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    x0: Option<Point>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    #[command(flatten)]
    tol: Tolerances,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the path as CSV (single target only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    map: MapArg,
    /// Search box, lo:hi per axis, comma separated.
    #[arg(long = "box", allow_hyphen_values = true)]
    search_box: SearchBox,
    /// Grid points per axis.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Additional uniformly drawn points.
    #[arg(long, default_value_t = 0)]
    random: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Polish the best sample by golden-section coordinate descent.
    #[arg(long)]
    refine: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[command(flatten)]
    map: MapArg,
    #[arg(long = "box", allow_hyphen_values = true)]
    search_box: SearchBox,
    /// Lower bound c to test; estimated on the box when omitted.
    #[arg(long)]
    c_hat: Option<f64>,
    /// Grid points per axis for the estimate when --c-hat is omitted.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    /// Extra pair to test, written x1,..,xn/y1,..,yn. Repeatable.
    #[arg(long = "pair", allow_hyphen_values = true, value_parser = parse_pair)]
    extra: Vec<(Point, Point)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GeodesicArgs {
    #[command(flatten)]
    map: MapArg,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    x0: Point,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    velocity: Point,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[command(flatten)]
    tol: Tolerances,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Geodesic,
    Continuation,
    Auto,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Geodesic => Method::Geodesic,
            MethodArg::Continuation => Method::Continuation,
            MethodArg::Auto => Method::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    ChristoffelSign,
}

/// Comma-separated coordinates.
#[derive(Clone, Debug, PartialEq)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    let v = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| format!("`{c}` is not a number")))
        .collect::<Result<Vec<f64>, String>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    Ok(Point(v))
}

fn parse_pair(s: &str) -> Result<(Point, Point), String> {
    let (a, b) = s.split_once('/').ok_or("expected x1,..,xn/y1,..,yn")?;
    Ok((parse_point(a)?, parse_point(b)?))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Invert(a) => commands::invert(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Probe(a) => commands::probe(a),
        Command::Geodesic(a) => commands::geodesic(a),
        Command::DemoExp => demo::run(),
        Command::Selftest(a) => commands::selftest(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("geoinv: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
