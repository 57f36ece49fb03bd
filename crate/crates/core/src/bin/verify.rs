use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use metallic_sigma::report::{exit_code, EpsilonSpec, OUTPUT_DIR_ENV};
use metallic_sigma::{emit_report, run_suite, Error, Format, Preset, RunConfig, Sign, SurfaceKind};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SurfaceArg {
    Sphere,
    HyperplaneSphere,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Verify the identities of a metallic structure and its induced Σ-structure.
#[derive(Debug, Parser)]
#[command(name = "verify", version)]
struct Cli {
    /// golden, silver, bronze, copper, nickel or subtle
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    q: Option<u32>,
    #[arg(long, value_enum, default_value = "sphere")]
    surface: SurfaceArg,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    sub_radius: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    offset: f64,
    /// Block dimensions as `a,b`; the ambient space has dimension 2a+b.
    #[arg(long, default_value = "1,1")]
    dims: String,
    /// +1 or -1
    #[arg(long, default_value = "+1", allow_hyphen_values = true)]
    lambda: String,
    /// `auto`, `all-plus` or a comma-separated list of ±1
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    epsilon: String,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Output file; standard output when absent and the output-directory variable is unset.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-identity override, `id=value`; may be repeated.
    #[arg(long = "tolerance")]
    tolerances: Vec<String>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock time in the report (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

fn parse_sign(s: &str) -> Result<i64, Error> {
    s.trim()
        .parse::<i64>()
        .ok()
        .filter(|v| *v == 1 || *v == -1)
        .ok_or_else(|| Error::Config(format!("expected +1 or -1, got '{s}'")))
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let preset = cli
        .preset
        .as_deref()
        .map(str::parse::<Preset>)
        .transpose()
        .map_err(|e| Error::Config(e.to_string()))?;
    let (p, q) = match (preset, cli.p, cli.q) {
        (Some(pr), p, q) => {
            let (pp, pq) = pr.pq();
            (p.unwrap_or(pp), q.unwrap_or(pq))
        }
        (None, Some(p), Some(q)) => (p, q),
        (None, _, _) => return Err(Error::Config("give --preset or both --p and --q".into())),
    };
    let (a, b) = cli
        .dims
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
        .ok_or_else(|| Error::Config(format!("--dims expects a,b; got '{}'", cli.dims)))?;
    let lambda = Sign::from_int(parse_sign(&cli.lambda)?)?;
    let epsilon = match cli.epsilon.as_str() {
        "auto" => EpsilonSpec::Auto,
        "all-plus" => EpsilonSpec::AllPlus,
        "" => EpsilonSpec::Signs(Vec::new()),
        list => EpsilonSpec::Signs(list.split(',').map(parse_sign).collect::<Result<_, _>>()?),
    };
    let surface = match cli.surface {
        SurfaceArg::Sphere => SurfaceKind::Sphere { radius: cli.radius },
        SurfaceArg::HyperplaneSphere => SurfaceKind::HyperplaneSphere {
            sub_radius: cli.sub_radius,
            offset: cli.offset,
        },
    };
    let mut tolerances = BTreeMap::new();
    for t in &cli.tolerances {
        let (id, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--tolerance expects id=value; got '{t}'")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Config(format!("bad tolerance value in '{t}'")))?;
        tolerances.insert(id.to_string(), v);
    }
    let config = RunConfig {
        p,
        q,
        preset,
        lambda,
        epsilon,
        dims: (a, b),
        surface,
        samples: cli.samples,
        seed: cli.seed,
        tolerances,
    };
    config.validate()?;
    Ok(config)
}

fn output_path(cli: &Cli) -> Option<PathBuf> {
    if cli.out.is_some() {
        return cli.out.clone();
    }
    let dir = std::env::var_os(OUTPUT_DIR_ENV)?;
    let ext = match cli.format {
        FormatArg::Json => "json",
        FormatArg::Csv => "csv",
    };
    Some(PathBuf::from(dir).join(format!("report.{ext}")))
}

fn code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => exit_code::IO_FAILURE,
        _ => exit_code::USAGE,
    }
}

fn run(cli: Cli) -> i32 {
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code::USAGE;
        }
    };
    let start = Instant::now();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run_suite(&config)),
            Err(e) => {
                eprintln!("error: {e}");
                return exit_code::USAGE;
            }
        },
        None => run_suite(&config),
    };
    let mut report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return code_for(&e);
        }
    };
    if cli.timing {
        report.wall_time_seconds = Some(start.elapsed().as_secs_f64());
    }
    let format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let path = output_path(&cli);
    if let Err(e) = emit_report(&report, format, path.as_deref()) {
        eprintln!("error: {e}");
        return exit_code::IO_FAILURE;
    }
    for r in report.identities.iter().filter(|r| r.applicable && !r.pass) {
        eprintln!(
            "FAIL {}: max residual {:e} > {:e}",
            r.id, r.max_residual, r.tolerance
        );
    }
    if report.all_pass {
        exit_code::SUCCESS
    } else {
        exit_code::VERIFICATION_FAILURE
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(exit_code::USAGE as u8),
            };
        }
    };
    ExitCode::from(run(cli) as u8)
}
