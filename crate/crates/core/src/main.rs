use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spectral_flow::commands::{self, Written};
use spectral_flow::config::{Eps2Spec, ExperimentConfig, Format, LambdaSpec, RouteChoice};
use spectral_flow::Error;

/// Eigenvalue flow through a spectral gap of `−Δ + f − αV` on ℤ^d.
///
/// Output columns:
///   bands.csv       k_*, band_* : Bloch band energies on the k-grid
///   dos.csv         lambda, rho : integrated density of states (Bloch or finite volume)
///   flow.csv        N = count_below(A_Ω − αV, λ) − count_below(A_Ω, λ) on |n| < c·ε₂·α^{1/p}
///   bs.csv          n_plus = n₊(1/α, √V(A_Ω − λ)⁻¹√V); flow_count as above
///   asymptotics.csv N, N1, N2 are flow counts on the whole ball, inner ball, shell;
///                   ratio = N / (α^{d/p} I(λ)); links_r = links crossing the splitting spheres
///
/// Environment: SPECTRAL_FLOW_CACHE (density-of-states cache directory),
/// SPECTRAL_FLOW_THREADS (worker cap).
#[derive(Parser, Debug)]
#[command(name = "spectral-flow", version, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Band structure and spectral gaps
    Bands(Common),
    /// Integrated density of states table
    Dos(Common),
    /// Flow counts along the α-grid
    Flow(Common),
    /// Birman–Schwinger counting identity check
    BsVerify(Common),
    /// Convergence study of N(λ, α) / α^{d/p}
    Asymptotics(Common),
    /// All stages plus a combined summary
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (JSON)
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Spectral parameter, or "auto-midgap"
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    alpha_min: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long)]
    alpha_points: Option<usize>,
    /// Linear instead of logarithmic α spacing
    #[arg(long)]
    linear: bool,
    #[arg(long)]
    eps1: Option<f64>,
    /// Outer splitting radius, or "auto"
    #[arg(long)]
    eps2: Option<String>,
    /// Truncation multiplier c in c·ε₂·α^{1/p}
    #[arg(long)]
    radius_rule: Option<f64>,
    /// bloch, finite_volume or both
    #[arg(long)]
    route: Option<String>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Comma-separated subset of csv,json,svg
    #[arg(long)]
    formats: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::UnboundedDomain
            | Error::NotInGap { .. }
            | Error::Json(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn apply_flags(cfg: &mut ExperimentConfig, f: &Common) -> Result<(), Failure> {
    let bad = |flag: &str, v: &str| Failure::Config(format!("--{flag}: cannot parse `{v}`"));
    if let Some(o) = &f.output {
        cfg.output.directory = o.clone();
    }
    if let Some(l) = &f.lambda {
        cfg.lambda = if l == "auto-midgap" {
            LambdaSpec::default()
        } else {
            LambdaSpec::Value(l.parse().map_err(|_| bad("lambda", l))?)
        };
    }
    if let Some(v) = f.alpha_min {
        cfg.alpha_grid.min = v;
    }
    if let Some(v) = f.alpha_max {
        cfg.alpha_grid.max = v;
    }
    if let Some(v) = f.alpha_points {
        cfg.alpha_grid.points = v;
    }
    if f.linear {
        cfg.alpha_grid.log_spaced = false;
    }
    if let Some(v) = f.eps1 {
        cfg.split.eps1 = v;
    }
    if let Some(e) = &f.eps2 {
        cfg.split.eps2 = if e == "auto" {
            Eps2Spec::default()
        } else {
            Eps2Spec::Value(e.parse().map_err(|_| bad("eps2", e))?)
        };
    }
    if let Some(v) = f.radius_rule {
        cfg.radius_rule = v;
    }
    if let Some(r) = &f.route {
        cfg.dos.route = match r.as_str() {
            "bloch" => RouteChoice::Bloch,
            "finite_volume" => RouteChoice::FiniteVolume,
            "both" => RouteChoice::Both,
            _ => return Err(bad("route", r)),
        };
    }
    if let Some(v) = f.grid_points {
        cfg.dos.grid_points = Some(v);
    }
    if let Some(list) = &f.formats {
        cfg.output.formats = list
            .split(',')
            .map(|s| match s.trim() {
                "csv" => Ok(Format::Csv),
                "json" => Ok(Format::Json),
                "svg" => Ok(Format::Svg),
                other => Err(bad("formats", other)),
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("SPECTRAL_FLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| Failure::Config(format!("SPECTRAL_FLOW_THREADS: cannot parse `{v}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("SPECTRAL_FLOW_THREADS: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn list(w: &Written) {
    for p in &w.0 {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let common = match &cli.command {
        Command::Bands(c)
        | Command::Dos(c)
        | Command::Flow(c)
        | Command::BsVerify(c)
        | Command::Asymptotics(c)
        | Command::Report(c) => c,
    };
    let mut cfg = commands::load_config(&common.config)?;
    apply_flags(&mut cfg, common)?;
    match cli.command {
        Command::Bands(_) => {
            let (out, w) = commands::cmd_bands(&cfg)?;
            println!("{}", out.summary());
            list(&w);
        }
        Command::Dos(_) => {
            let (out, w) = commands::cmd_dos(&cfg)?;
            for t in &out.tables {
                println!("{} table: {} points", t.provenance(), t.lambda_grid().len());
            }
            if let Some(d) = out.max_disagreement {
                println!("max |bloch - finite volume| = {d}");
            }
            list(&w);
        }
        Command::Flow(_) => {
            let (rows, w) = commands::cmd_flow(&cfg)?;
            for r in &rows {
                println!("alpha = {}: N = {}", r.alpha, r.n);
            }
            list(&w);
        }
        Command::BsVerify(_) => {
            let (out, w) = commands::cmd_bs_verify(&cfg)?;
            println!(
                "{} alphas, {} flagged, {} mismatches",
                out.rows.len(),
                out.flagged,
                out.mismatches
            );
            list(&w);
            if !out.all_equal() {
                return Err(Failure::Numerical("counting identity violated".into()));
            }
        }
        Command::Asymptotics(_) => {
            let (rep, w) = commands::cmd_asymptotics(&cfg)?;
            println!("I(lambda = {}) = {}", rep.lambda, rep.integral.value);
            for r in &rep.records {
                let ratio = r
                    .ratio
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "-".into());
                println!("alpha = {}: N = {}, R = {ratio}", r.alpha, r.n);
            }
            println!("trend toward 1: {}", rep.verdict.trend_toward_1);
            list(&w);
        }
        Command::Report(_) => {
            let (summary, w) = commands::cmd_report(&cfg)?;
            print!("{}", summary.to_text());
            list(&w);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
