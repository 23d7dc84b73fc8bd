//! Command-line front door for the hodgelab workbench: runs verification
//! suites and measurement sweeps, and emits CSV/JSON artifacts.

mod commands;
mod report;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "hodgelab", version, about = "Hodge-Dirac workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, clap::Args)]
struct CommonArgs {
    /// built-in domain name
    #[arg(long, default_value = "square")]
    domain: String,
    /// mesh spacing
    #[arg(long, default_value_t = 0.125)]
    h: f64,
    /// comma-separated Lebesgue exponents
    #[arg(long)]
    p: Option<String>,
    /// comma-separated resolvent scales
    #[arg(long)]
    t: Option<String>,
    /// contour/sector angle
    #[arg(long, default_value_t = 0.6)]
    theta: f64,
    /// boundary condition: tangential or normal
    #[arg(long, default_value = "tangential")]
    bc: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// output directory for artifacts
    #[arg(long, default_value = "hodgelab-out")]
    out: PathBuf,
    /// worker cap for parallel sections
    #[arg(long)]
    jobs: Option<usize>,
    /// override tolerance for the suite's soft checks
    #[arg(long)]
    tol: Option<f64>,
    /// JSON config file; values override the flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// run the full invariant suite on one domain
    Verify(CommonArgs),
    /// exact ball-potential identities plus glued-potential quadrature checks
    Potential(CommonArgs),
    /// Hodge decomposition report (ranks, harmonic dimensions, projector norms)
    Decompose(CommonArgs),
    /// resolvent/projector norm sweeps over (t, p) grids
    Sweep(CommonArgs),
    /// contour calculus vs spectral oracle with node-doubling study
    Funcalc(CommonArgs),
    /// Calderón-Zygmund decomposition demo over a threshold sweep
    Czdemo(CommonArgs),
    /// boundary-smoothing and intermediate-domain constructions
    Geometry(CommonArgs),
    /// exponent arithmetic p′, p_S, p*, p^S
    Exponents {
        /// rational exponent, e.g. 3/2
        #[arg(long, default_value = "2")]
        p: String,
        #[arg(long, default_value_t = 3)]
        n: u32,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Verify(args) => dispatch(args, commands::verify),
        Command::Potential(args) => dispatch(args, commands::potential),
        Command::Decompose(args) => dispatch(args, commands::decompose),
        Command::Sweep(args) => dispatch(args, commands::sweep),
        Command::Funcalc(args) => dispatch(args, commands::funcalc),
        Command::Czdemo(args) => dispatch(args, commands::czdemo),
        Command::Geometry(args) => dispatch(args, commands::geometry),
        Command::Exponents { p, n } => commands::exponents(&p, n),
    };
    std::process::exit(code);
}

fn dispatch(mut args: CommonArgs, f: fn(&CommonArgs) -> anyhow::Result<report::Report>) -> i32 {
    if let Some(path) = args.config.clone() {
        match apply_config(&mut args, &path) {
            Ok(()) => {}
            Err(e) => {
                eprintln!("config error: {e}");
                return 2;
            }
        }
    }
    if let Some(jobs) = args.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match f(&args) {
        Ok(rep) => {
            let failed = rep.failed_count();
            match rep.write(&args.out) {
                Ok(path) => eprintln!(
                    "{}: {} checks, {} failed — report at {}",
                    rep.command,
                    rep.checks.len(),
                    failed,
                    path.display()
                ),
                Err(e) => {
                    eprintln!("failed to write artifacts: {e}");
                    return 2;
                }
            }
            if failed == 0 {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn apply_config(args: &mut CommonArgs, path: &PathBuf) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    if !v.is_object() {
        anyhow::bail!("config must be a JSON object");
    }
    if let Some(d) = v.get("domain") {
        args.domain =
            d.as_str().ok_or_else(|| anyhow::anyhow!("domain must be a string"))?.to_string();
    }
    if let Some(h) = v.get("h") {
        args.h = h.as_f64().ok_or_else(|| anyhow::anyhow!("h must be a number"))?;
    }
    if let Some(p) = v.get("p") {
        args.p = Some(match p {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Array(a) => {
                a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            }
            other => other.to_string(),
        });
    }
    if let Some(t) = v.get("t") {
        args.t = Some(match t {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Array(a) => {
                a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            }
            other => other.to_string(),
        });
    }
    if let Some(x) = v.get("theta") {
        args.theta = x.as_f64().ok_or_else(|| anyhow::anyhow!("theta must be a number"))?;
    }
    if let Some(x) = v.get("bc") {
        args.bc = x.as_str().ok_or_else(|| anyhow::anyhow!("bc must be a string"))?.to_string();
    }
    if let Some(x) = v.get("seed") {
        args.seed = x.as_u64().ok_or_else(|| anyhow::anyhow!("seed must be an integer"))?;
    }
    if let Some(x) = v.get("out") {
        args.out =
            PathBuf::from(x.as_str().ok_or_else(|| anyhow::anyhow!("out must be a string"))?);
    }
    if let Some(x) = v.get("tol") {
        args.tol = Some(x.as_f64().ok_or_else(|| anyhow::anyhow!("tol must be a number"))?);
    }
    Ok(())
}
