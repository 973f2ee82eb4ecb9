use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wforge_cli::{construct, degree, report, verify, CliError, ConfigError, DegreeArgs, Overrides, RunConfig};
use wforge_core::analysis::TestFunction;

#[derive(Parser)]
#[command(name = "wforge", version, about = "Convex-integration solutions of det D^2 v = f in the plane")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output / artifact directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Holder stage cap.
    #[arg(long, global = true)]
    stages: Option<usize>,
    /// Points per side of exported grids.
    #[arg(long, global = true)]
    resolution: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write logs, traces and grids.
    Construct,
    /// Weak-Hessian, defect and Holder checks of stored artifacts.
    Verify,
    /// Brouwer degree of grad v0 on a polygon.
    Degree {
        /// Vertices `x,y;x,y;...`, counterclockwise.
        #[arg(long, conflicts_with = "circle")]
        polygon: Option<String>,
        /// Regular polygon `cx,cy,r,n`.
        #[arg(long)]
        circle: Option<String>,
        /// Target point `y1,y2`.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        /// Rotation perturbation `delta (-x2, x1)`.
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<f64>,
        /// Test bump `cx,cy,r` for the degree formula.
        #[arg(long, allow_hyphen_values = true)]
        g: Option<String>,
    },
    /// Markdown summary of a construct run.
    Report,
}

fn numbers(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(ConfigError { line: None, column: None, message: format!("--{what}: {e}") }))
}

fn arg_error(message: String) -> CliError {
    CliError::Config(ConfigError { line: None, column: None, message })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None if matches!(cli.command, Command::Report) => RunConfig::default(),
        None => return Err(arg_error("--config is required".into())),
    };
    let ov = Overrides { out: cli.out.clone(), seed: cli.seed, stages: cli.stages, resolution: cli.resolution };
    if cli.config.is_some() {
        ov.apply(&mut cfg)?;
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match cli.command {
        Command::Construct => construct(&cfg, cli.quiet).map(|_| ()),
        Command::Verify => verify(&cfg, &dir, cli.quiet).map(|_| ()),
        Command::Report => report(&dir, cli.quiet).map(|_| ()),
        Command::Degree { polygon, circle, y, delta, g } => {
            let y = numbers(&y, "y")?;
            if y.len() != 2 {
                return Err(arg_error("--y needs two numbers".into()));
            }
            let polygon = match (polygon, circle) {
                (Some(p), _) => p
                    .split(';')
                    .map(|v| numbers(v, "polygon").and_then(|c| if c.len() == 2 { Ok([c[0], c[1]]) } else { Err(arg_error("--polygon vertices need two numbers".into())) }))
                    .collect::<Result<Vec<_>, _>>()?,
                (None, Some(c)) => {
                    let c = numbers(&c, "circle")?;
                    if c.len() != 4 {
                        return Err(arg_error("--circle needs cx,cy,r,n".into()));
                    }
                    wforge_core::analysis::DegreeQuery::circle([c[0], c[1]], c[2], c[3] as usize, [0.0; 2]).polygon
                }
                (None, None) => return Err(arg_error("either --polygon or --circle is required".into())),
            };
            let g = match g {
                Some(g) => {
                    let c = numbers(&g, "g")?;
                    if c.len() != 3 {
                        return Err(arg_error("--g needs cx,cy,r".into()));
                    }
                    Some(TestFunction::new([c[0], c[1]], c[2], 1.0))
                }
                None => None,
            };
            let args = DegreeArgs { polygon, y: [y[0], y[1]], delta, g, resolution: cli.resolution.unwrap_or(128) };
            degree(&cfg, &args, cli.quiet).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wforge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
