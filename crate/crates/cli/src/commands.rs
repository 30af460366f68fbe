use std::fs;
use std::io::Write;
use std::path::Path;

use geoinv::expr_map::{parse, to_smooth_map};
use geoinv::inverse_solver::{estimate_hadamard, invert as solve, lipschitz_probe, InversionOptions};
use geoinv::pullback_geometry::{exp_map, PathTolerances};
use geoinv::selftest::{run_selftest, Fault};
use geoinv::{make_builtin, BuiltinMapId, Error, SmoothMap};
use rayon::prelude::*;
use serde_json::json;

use crate::{EstimateArgs, FaultArg, GeodesicArgs, InvertArgs, ProbeArgs, SelftestArgs, Tolerances};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_PARSE: u8 = 4;

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
            Error::Parse(_) | Error::Domain { .. } | Error::Io(_) => EXIT_PARSE,
            _ => EXIT_SOLVER,
        };
        CliError { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: message.into() }
}

fn exit_code_for(kind: &str) -> u8 {
    if kind == "domain_error" {
        EXIT_PARSE
    } else {
        EXIT_SOLVER
    }
}

pub type CmdResult = Result<u8, CliError>;

/// Resolves `--map`. Builtins take their dimension from the point
/// arguments; map files carry their own.
pub fn load_map(spec: &str, n: Option<usize>) -> Result<Box<dyn SmoothMap>, CliError> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError { code: EXIT_PARSE, message: format!("cannot read map file {path}: {e}") })?;
        let ast = parse(&text).map_err(|e| CliError { code: EXIT_PARSE, message: format!("{path}: {e}") })?;
        if let Some(n) = n {
            if n != ast.dim {
                return Err(usage(format!("{path} defines a map of dimension {}, arguments have {n}", ast.dim)));
            }
        }
        return Ok(Box::new(to_smooth_map(ast)?.with_name(path)));
    }
    let id: BuiltinMapId = spec.parse()?;
    let n = n.or(id.fixed_dim()).ok_or_else(|| usage(format!("cannot infer the dimension of `{spec}`")))?;
    Ok(Box::new(make_builtin(&id, n)?))
}

fn common_dim<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Result<Option<usize>, CliError> {
    let mut n = None;
    for p in points {
        match n {
            None => n = Some(p.len()),
            Some(m) if m != p.len() => return Err(usage(format!("points of dimension {m} and {} mixed", p.len()))),
            _ => {}
        }
    }
    Ok(n)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError { code: EXIT_USAGE, message: format!("cannot write output: {e}") };
    match out {
        Some(path) => fs::write(path, text).map_err(io),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(io)
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn path_tolerances(t: &Tolerances) -> Result<PathTolerances, CliError> {
    if !(t.rtol > 0.0 && t.atol > 0.0) {
        return Err(usage("--rtol and --atol must be positive"));
    }
    Ok(PathTolerances { rtol: t.rtol, atol: t.atol, ..PathTolerances::default() })
}

pub fn invert(a: InvertArgs) -> CmdResult {
    if a.trace.is_some() && a.target.len() > 1 {
        return Err(usage("--trace takes a single --target"));
    }
    let n = common_dim(a.target.iter().chain(&a.x0).map(|p| p.0.as_slice()))?;
    let map = load_map(&a.map.map, n)?;
    let opts = InversionOptions {
        method: a.method.into(),
        path: path_tolerances(&a.tol)?,
        x0: a.x0.as_ref().map(|p| p.0.clone()),
        ..InversionOptions::default()
    };

    let reports = a
        .target
        .par_iter()
        .map(|y| solve(map.as_ref(), &y.0, &opts))
        .collect::<Result<Vec<_>, Error>>()?;

    if let Some(path) = &a.trace {
        let file = fs::File::create(path).map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
        reports[0].trace.write_csv(map.as_ref(), std::io::BufWriter::new(file))?;
    }
    let text = match reports.as_slice() {
        [one] => pretty(one),
        many => pretty(&many),
    };
    emit(a.out.as_deref(), &text)?;

    let mut code = 0;
    for (y, r) in a.target.iter().zip(&reports) {
        if let Some(f) = &r.failure {
            eprintln!("geoinv: target {:?}: {}", y.0, f.message);
            code = code.max(exit_code_for(&f.kind));
        }
    }
    Ok(code)
}

pub fn estimate(a: EstimateArgs) -> CmdResult {
    let map = load_map(&a.map.map, Some(a.search_box.dim()))?;
    let est = estimate_hadamard(map.as_ref(), &a.search_box, a.grid, a.random, a.refine, a.seed)?;
    emit(a.out.as_deref(), &pretty(&est))?;
    Ok(0)
}

pub fn probe(a: ProbeArgs) -> CmdResult {
    let map = load_map(&a.map.map, Some(a.search_box.dim()))?;
    let c_hat = match a.c_hat {
        Some(c) => c,
        None => estimate_hadamard(map.as_ref(), &a.search_box, a.grid, 0, true, a.seed)?.c_hat,
    };
    let extra: Vec<(Vec<f64>, Vec<f64>)> = a.extra.into_iter().map(|(x, y)| (x.0, y.0)).collect();
    let report = lipschitz_probe(map.as_ref(), c_hat, a.pairs, &a.search_box, a.seed, &extra)?;
    emit(a.out.as_deref(), &pretty(&report))?;
    Ok(0)
}

pub fn geodesic(a: GeodesicArgs) -> CmdResult {
    let n = common_dim([a.x0.0.as_slice(), a.velocity.0.as_slice()])?;
    let map = load_map(&a.map.map, n)?;
    let tol = path_tolerances(&a.tol)?;
    match exp_map(map.as_ref(), &a.x0.0, &a.velocity.0, a.t_end, &tol) {
        Ok(trace) => {
            let mut buf = Vec::new();
            trace.write_csv(map.as_ref(), &mut buf)?;
            emit(a.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))?;
            Ok(0)
        }
        Err(f) => {
            let e = &f.error;
            if matches!(e, Error::InvalidInput(_) | Error::DimensionMismatch { .. }) {
                return Err(f.error.clone().into());
            }
            let failure = json!({
                "schema_version": 1,
                "failure": {
                    "kind": e.kind(),
                    "t": e.t(),
                    "position": e.position(),
                    "message": e.to_string(),
                },
                "steps": f.partial.len().saturating_sub(1),
            });
            emit(None, &pretty(&failure))?;
            eprintln!("geoinv: {e}");
            Ok(exit_code_for(e.kind()))
        }
    }
}

pub fn selftest(a: SelftestArgs) -> CmdResult {
    let fault = a.inject_fault.map(|f| match f {
        FaultArg::ChristoffelSign => Fault::ChristoffelSign,
    });
    let outcomes = run_selftest(fault);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:width$}  {:>7.2}s  {}", o.name, o.seconds, o.detail);
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    println!("{}/{} suites passed", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("geoinv: failing suites: {}", failed.join(", "));
        Ok(1)
    }
}
