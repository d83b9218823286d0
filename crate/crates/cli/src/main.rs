use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use oselab::cocycle::{spectrum_of_pf, Exponent, MatrixCocycle};
use oselab::defaults::{self, Tolerances};
use oselab::experiments::{self, Experiment, ExperimentOptions, Reproduction};
use oselab::met::{self, multiset_distance, qr_exponent_oracle, HarnessOptions, RandomCocycleSpec};
use oselab::oseledets::{pushforward_subspaces, PushOptions};
use rayon::prelude::*;
use serde_json::json;

mod input;
mod output;

use output::{csv_string, emit, fixed, to_json, to_json_line, write_atomic};

/// Bad flags, unreadable or malformed configuration. Exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A pinned check did not hold. Exit code 1.
#[derive(Debug)]
struct CheckFailure(String);

impl fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailure {}

#[derive(Parser)]
#[command(name = "oselab", version, about = "Lyapunov spectra and Oseledets subspaces of transfer-operator cocycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one of the pinned reproduction pipelines.
    Reproduce(ReproduceArgs),
    /// Eigenvalues of the transfer matrices, optionally the Lyapunov spectrum
    /// of the cocycle they generate.
    Spectrum(SpectrumArgs),
    /// Push-forward Oseledets splitting at one base.
    Oseledets(OseledetsArgs),
    /// Splitting checks on seeded random cocycles.
    Met(MetArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Thm1,
    Thm2,
    Sec7,
    All,
}

#[derive(Args)]
struct Common {
    /// Gram depth M.
    #[arg(long = "depth-M", value_name = "M")]
    depth: Option<usize>,
    /// Push length N.
    #[arg(long = "push-N", value_name = "N")]
    push: Option<usize>,
    /// Largest gap between log-eigenvalues merged into one group.
    #[arg(long, default_value_t = defaults::GAP_TOL)]
    gap_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (directory for `reproduce`); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

impl Common {
    fn check(&self) -> Result<(), UsageError> {
        if !(self.gap_tol.is_finite() && self.gap_tol > 0.0) {
            return Err(UsageError(format!("--gap-tol must be positive, got {}", self.gap_tol)));
        }
        if let (Some(m), Some(n)) = (self.depth, self.push) {
            if n > m {
                return Err(UsageError(format!("--push-N {n} exceeds --depth-M {m}")));
            }
        }
        if self.depth == Some(0) {
            return Err(UsageError("--depth-M must be positive".to_string()));
        }
        Ok(())
    }

    fn depths(&self, default_push: usize) -> (usize, usize) {
        let push = self.push.unwrap_or(default_push);
        (self.depth.unwrap_or((2 * push).max(1)), push)
    }
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    which: Which,
    #[command(flatten)]
    common: Common,
    /// Tolerance override, e.g. `--tol delta=1e-9`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tolerances: Vec<String>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Family (t123, s, s1to6, t1to6), names (T1,S2,rho) or a JSON map file.
    #[arg(long)]
    maps: String,
    /// With a driver, also the Gram-root exponents at depth M.
    #[arg(long)]
    driver: Option<String>,
    #[arg(long, default_value_t = 0)]
    base: i64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OseledetsArgs {
    #[arg(long)]
    maps: String,
    #[arg(long)]
    driver: String,
    #[arg(long, default_value_t = 0)]
    base: i64,
    /// Project each new base onto the complement of the faster directions.
    #[arg(long)]
    flag_projection: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MetArgs {
    /// Dimension d.
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    generators: usize,
    #[arg(long, default_value_t = 1)]
    singular: usize,
    /// Column grading rate; 0 draws plain uniform entries.
    #[arg(long, default_value_t = 1.0)]
    grading: f64,
    /// Entry half-width.
    #[arg(long, default_value_t = 0.25)]
    spread: f64,
    /// JSON cocycle description replacing the generator flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Cocycles with seeds seed, seed+1, ….
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Bases checked.
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long)]
    no_flag_projection: bool,
    /// Skip the QR exponent comparison.
    #[arg(long)]
    no_oracle: bool,
    #[command(flatten)]
    common: Common,
}

fn thread_pool() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("OSE_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("OSE_LAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(format!("OSE_LAB_THREADS: {e}")))
}

fn exponent_str(e: &Exponent) -> String {
    match e.finite() {
        Some(x) => fixed(x),
        None => "-inf".to_string(),
    }
}

fn reproduction_files(r: &Reproduction, format: Format) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    match format {
        Format::Json => files.push((format!("{}.json", r.experiment), to_json(r)?)),
        Format::Csv => {
            let rows: Vec<Vec<String>> = r
                .checks
                .iter()
                .map(|c| {
                    vec![
                        c.name.clone(),
                        c.pass.to_string(),
                        fixed(c.value),
                        fixed(c.target),
                        fixed(c.tolerance),
                        c.detail.clone(),
                    ]
                })
                .collect();
            files.push((
                format!("{}_checks.csv", r.experiment),
                csv_string(&["name", "pass", "value", "target", "tolerance", "detail"], &rows)?,
            ));
        }
    }
    files.extend(r.tables.iter().map(|t| (t.name.clone(), t.csv.clone())));
    Ok(files)
}

fn reproduce(args: &ReproduceArgs) -> Result<()> {
    args.common.check()?;
    let mut tolerances = Tolerances::default();
    for item in &args.tolerances {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--tol expects NAME=VALUE, got {item:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("--tol {name}: not a number: {value:?}")))?;
        tolerances.set(name.trim(), value).map_err(UsageError)?;
    }
    let options = ExperimentOptions {
        depth: args.common.depth,
        push: args.common.push,
        gap_tol: args.common.gap_tol,
        seed: args.common.seed,
        tolerances,
    };
    let which: Vec<Experiment> = match args.which {
        Which::Thm1 => vec![Experiment::Thm1],
        Which::Thm2 => vec![Experiment::Thm2],
        Which::Sec7 => vec![Experiment::Sec7],
        Which::All => Experiment::ALL.to_vec(),
    };
    let reports = which
        .par_iter()
        .map(|&e| experiments::run(e, &options).with_context(|| format!("{e} pipeline")))
        .collect::<Result<Vec<_>>>()?;

    match &args.common.out {
        Some(dir) => {
            for r in &reports {
                for (name, contents) in reproduction_files(r, args.common.format)? {
                    write_atomic(&dir.join(name), &contents)?;
                }
                for c in &r.checks {
                    println!(
                        "{} {} value {} tolerance {}",
                        if c.pass { "PASS" } else { "FAIL" },
                        c.name,
                        fixed(c.value),
                        fixed(c.tolerance)
                    );
                }
            }
        }
        None => match args.common.format {
            Format::Json if reports.len() == 1 => emit(None, &to_json(&reports[0])?)?,
            Format::Json => emit(None, &to_json(&reports)?)?,
            Format::Csv => {
                for r in &reports {
                    emit(None, &reproduction_files(r, Format::Csv)?[0].1)?;
                }
            }
        },
    }

    if let Some((r, c)) = reports
        .iter()
        .find_map(|r| r.first_failure().map(|c| (r, c)))
    {
        return Err(CheckFailure(format!(
            "{}: check {} failed: value {} target {} tolerance {} ({})",
            r.experiment,
            c.name,
            fixed(c.value),
            fixed(c.target),
            fixed(c.tolerance),
            c.detail
        ))
        .into());
    }
    Ok(())
}

fn spectrum(args: &SpectrumArgs) -> Result<()> {
    args.common.check()?;
    let maps = input::parse_maps(&args.maps)?;
    let per_map: Vec<_> = maps
        .labels
        .iter()
        .zip(&maps.matrices)
        .map(|(l, m)| (l.clone(), spectrum_of_pf(m)))
        .collect();
    let cocycle = match &args.driver {
        Some(d) => {
            let driver = input::parse_driver(d)?;
            let c = MatrixCocycle::from_pf_matrices(&maps.matrices, driver)
                .map_err(|e| UsageError(format!("--driver: {e}")))?;
            let (depth, _) = args.common.depths(defaults::SEC7_PUSH);
            Some(c.lyapunov_spectrum(depth, args.base, args.common.gap_tol)?)
        }
        None => None,
    };
    let text = match args.common.format {
        Format::Json => to_json(&json!({
            "maps": per_map
                .iter()
                .map(|(l, s)| json!({"name": l, "spectrum": s}))
                .collect::<Vec<_>>(),
            "cocycle": cocycle,
        }))?,
        Format::Csv => {
            let mut rows = Vec::new();
            for (l, s) in &per_map {
                for (i, z) in s.eigenvalues.iter().enumerate() {
                    rows.push(vec![l.clone(), (i + 1).to_string(), fixed(z.re), fixed(z.im), fixed(s.moduli[i])]);
                }
            }
            csv_string(&["map", "index", "re", "im", "modulus"], &rows)?
        }
    };
    emit(args.common.out.as_deref(), &text)
}

fn oseledets(args: &OseledetsArgs) -> Result<()> {
    args.common.check()?;
    let maps = input::parse_maps(&args.maps)?;
    let driver = input::parse_driver(&args.driver)?;
    let cocycle = MatrixCocycle::from_pf_matrices(&maps.matrices, driver.clone())
        .map_err(|e| UsageError(format!("--driver: {e}")))?;
    let (depth, push) = args.common.depths(defaults::SEC7_PUSH);
    let options = PushOptions::new(depth, push)
        .with_gap_tol(args.common.gap_tol)
        .with_flag_projection(args.flag_projection);
    let a = pushforward_subspaces(&cocycle, options, args.base)?;
    let text = match args.common.format {
        Format::Json => {
            let groups: Vec<_> = a
                .groups
                .iter()
                .map(|g| {
                    let basis: Vec<Vec<f64>> = g
                        .basis
                        .matrix()
                        .column_iter()
                        .map(|c| c.iter().copied().collect())
                        .collect();
                    json!({
                        "exponent": g.exponent,
                        "multiplicity": g.multiplicity,
                        "conditioning": g.conditioning,
                        "basis": basis,
                    })
                })
                .collect();
            to_json(&json!({
                "maps": maps.labels,
                "driver": driver.to_spec(),
                "depth": depth,
                "push": push,
                "base": args.base,
                "multiplicities": a.multiplicities(),
                "exponents": a.exponents(),
                "direct_sum_condition": a.direct_sum_condition(),
                "groups": groups,
            }))?
        }
        Format::Csv => {
            let mut rows = Vec::new();
            for (j, g) in a.groups.iter().enumerate() {
                for (k, col) in g.basis.matrix().column_iter().enumerate() {
                    for (i, x) in col.iter().enumerate() {
                        rows.push(vec![
                            (j + 1).to_string(),
                            exponent_str(&g.exponent),
                            g.multiplicity.to_string(),
                            (k + 1).to_string(),
                            (i + 1).to_string(),
                            fixed(*x),
                        ]);
                    }
                }
            }
            csv_string(&["group", "exponent", "multiplicity", "vector", "entry", "value"], &rows)?
        }
    };
    emit(args.common.out.as_deref(), &text)
}

fn met(args: &MetArgs) -> Result<()> {
    args.common.check()?;
    if args.count == 0 {
        return Err(UsageError("--count must be positive".to_string()).into());
    }
    let base_spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
            input::parse_json::<RandomCocycleSpec>(&p.display().to_string(), &text)?
        }
        None => RandomCocycleSpec::graded(
            args.dim,
            args.generators,
            args.singular,
            args.grading,
            args.spread,
            args.common.seed,
        ),
    };
    base_spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let (depth, push) = args.common.depths(40);
    let push_opts = PushOptions::new(depth, push)
        .with_gap_tol(args.common.gap_tol)
        .with_flag_projection(!args.no_flag_projection);

    let seeds: Vec<u64> = (0..args.count).map(|i| base_spec.seed + i).collect();
    let results = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<serde_json::Value>> {
            let spec = RandomCocycleSpec { seed, ..base_spec };
            let cocycle = met::generate(&spec)?;
            let mut opts = HarnessOptions::new(push_opts, args.window);
            opts.seed = seed;
            let report = met::verify_splitting(&cocycle, &opts);
            let mut lines = Vec::new();
            for e in &report.entries {
                let mut v = serde_json::to_value(e)?;
                v["seed"] = json!(seed);
                v["dimension"] = json!(spec.dimension);
                lines.push(v);
            }
            if !args.no_oracle {
                let gram = cocycle.gram_root(4096, 0)?.exponents();
                let qr = qr_exponent_oracle(&cocycle, 4096, 0, defaults::RANK_TOL)?;
                let dist = multiset_distance(&gram, &qr);
                lines.push(json!({
                    "base": 0,
                    "property": "qr_oracle",
                    "pass": dist <= defaults::ORACLE_TOL,
                    "value": dist,
                    "tolerance": defaults::ORACLE_TOL,
                    "detail": format!("Gram root and QR exponents over 4096 steps: {:?} vs {:?}", gram, qr),
                    "seed": seed,
                    "dimension": spec.dimension,
                }));
            }
            Ok(lines)
        })
        .collect::<Result<Vec<_>>>()?;
    let lines: Vec<serde_json::Value> = results.into_iter().flatten().collect();

    let text = match args.common.format {
        Format::Json => lines
            .iter()
            .map(to_json_line)
            .collect::<Result<Vec<_>>>()?
            .concat(),
        Format::Csv => {
            let rows: Vec<Vec<String>> = lines
                .iter()
                .map(|v| {
                    let num = |k: &str| v[k].as_f64().map(fixed).unwrap_or_else(|| "nan".to_string());
                    vec![
                        v["seed"].to_string(),
                        v["base"].to_string(),
                        v["property"].as_str().unwrap_or_default().to_string(),
                        v["pass"].to_string(),
                        num("value"),
                        num("tolerance"),
                        v["detail"].as_str().unwrap_or_default().to_string(),
                    ]
                })
                .collect();
            csv_string(&["seed", "base", "property", "pass", "value", "tolerance", "detail"], &rows)?
        }
    };
    emit(args.common.out.as_deref(), &text)?;
    if let Some(v) = lines.iter().find(|v| v["pass"] != json!(true)) {
        return Err(CheckFailure(format!(
            "seed {} base {}: {} failed: {}",
            v["seed"], v["base"], v["property"].as_str().unwrap_or_default(), v["detail"].as_str().unwrap_or_default()
        ))
        .into());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    thread_pool()?;
    match &cli.command {
        Command::Reproduce(a) => reproduce(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Oseledets(a) => oseledets(a),
        Command::Met(a) => met(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) if e.is::<CheckFailure>() => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
