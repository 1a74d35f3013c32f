//! Command-line driver for the boundary-to-volume parametrization pipeline.

use clap::{Args, Parser, Subcommand, ValueEnum};
use splinedeform::deform::{
    deform, DeformConfig, DeformError, StepsizePolicy, Strategy,
};
use splinedeform::elasticity::MaterialParams;
use splinedeform::geometry::{coons_patch, BijectivityStrategy, BoundaryShell, Patch};
use splinedeform::io::{load_geometry, save_geometry, write_svg, write_vtk, Geometry, IoError};
use splinedeform::pipeline::{run_pipeline, PipelineError, RunConfig};
use splinedeform::simplify::{build_initial_domain, CoarseSpec, Reexpress, SimplifyError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_PARSE: u8 = 2;
const EXIT_INITIAL_DOMAIN: u8 = 3;
const EXIT_STALL: u8 = 4;
const EXIT_DIVERGENCE: u8 = 5;

#[derive(Parser)]
#[command(name = "splinedeform", version, about = "Bijective spline parametrizations from boundary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project the boundary sides onto a coarse spline space
    Simplify {
        /// geometry file holding a boundary shell
        input: PathBuf,
        #[command(flatten)]
        coarse: CoarseArgs,
        /// write the simplified shell (on the original bases) here
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill a boundary shell by transfinite interpolation
    Coons {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deform an initial domain onto a target boundary
    Deform {
        /// geometry file holding the target boundary shell
        target: PathBuf,
        /// geometry file holding the initial volumetric patch
        #[arg(long)]
        initial: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run simplify, transfinite interpolation and deformation end to end
    Pipeline {
        /// geometry file holding the target boundary shell
        target: PathBuf,
        #[command(flatten)]
        coarse: CoarseArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Print the quality measures of a volumetric patch
    Quality {
        input: PathBuf,
        /// samples per knot span; default degree + 2
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Args)]
struct CoarseArgs {
    /// degree of the coarse boundary space
    #[arg(long, default_value_t = 2)]
    coarse_degree: usize,
    /// number of basis functions per direction of the coarse space
    #[arg(long, default_value_t = 3)]
    coarse_size: usize,
}

impl CoarseArgs {
    fn spec(&self) -> Result<CoarseSpec, CliError> {
        CoarseSpec::new(self.coarse_degree, self.coarse_size)
            .map_err(|e| CliError::Parse(e.to_string()))
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum StrategyArg {
    Newton,
    Ndil,
    Ldil,
}

#[derive(Copy, Clone, ValueEnum)]
enum PolicyArg {
    Fixed,
    Adaptive,
    Greedy,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Ndil)]
    strategy: StrategyArg,
    /// number of loading steps N
    #[arg(long, default_value_t = 4)]
    steps: usize,
    /// Poisson ratio
    #[arg(long, default_value_t = 0.49)]
    nu: f64,
    /// Young modulus
    #[arg(long, default_value_t = 1.0)]
    e: f64,
    /// relative Newton increment tolerance
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Adaptive)]
    policy: PolicyArg,
}

impl SolverArgs {
    fn config(&self) -> Result<DeformConfig, CliError> {
        let mat = MaterialParams::new(self.e, self.nu)
            .map_err(|e| CliError::Parse(e.to_string()))?;
        let mut cfg = DeformConfig::new(self.steps, mat);
        cfg.strategy = match self.strategy {
            StrategyArg::Newton => Strategy::IncrementalNewton,
            StrategyArg::Ndil => Strategy::Ndil,
            StrategyArg::Ldil => Strategy::Ldil,
        };
        cfg.stepsize_policy = match self.policy {
            PolicyArg::Fixed => StepsizePolicy::Fixed,
            PolicyArg::Adaptive => StepsizePolicy::AdaptiveFixed,
            PolicyArg::Greedy => StepsizePolicy::Greedy,
        };
        cfg.epsilon = self.epsilon;
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// directory receiving the geometry, grid and isoline exports
    #[arg(long)]
    out: Option<PathBuf>,
    /// write the JSON run report here
    #[arg(long)]
    report: Option<PathBuf>,
}

enum CliError {
    Parse(String),
    InitialDomain(String),
    Stall(String),
    Divergence(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::InitialDomain(_) => EXIT_INITIAL_DOMAIN,
            CliError::Stall(_) => EXIT_STALL,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Parse(m)
            | CliError::InitialDomain(m)
            | CliError::Stall(m)
            | CliError::Divergence(m)
            | CliError::Other(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Parse { .. } | IoError::Geometry(_) | IoError::Bspline(_) => {
                CliError::Parse(e.to_string())
            }
            IoError::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<SimplifyError> for CliError {
    fn from(e: SimplifyError) -> Self {
        match e {
            SimplifyError::InitialDomainFailed { .. } => CliError::InitialDomain(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<DeformError> for CliError {
    fn from(e: DeformError) -> Self {
        match e {
            DeformError::Stall { .. } => CliError::Stall(e.to_string()),
            DeformError::Divergence { .. } => CliError::Divergence(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Simplify(s) => s.into(),
            PipelineError::Deform(d) => d.into(),
            PipelineError::Geometry(g) => CliError::Other(g.to_string()),
        }
    }
}

fn load_shell(path: &Path) -> Result<BoundaryShell, CliError> {
    match load_geometry(path)? {
        Geometry::Shell(s) => Ok(s),
        Geometry::Patch(_) => Err(CliError::Parse(format!(
            "{}: expected a boundary shell, found a patch",
            path.display()
        ))),
    }
}

fn load_patch(path: &Path) -> Result<Patch, CliError> {
    match load_geometry(path)? {
        Geometry::Patch(p) => Ok(p),
        Geometry::Shell(_) => Err(CliError::Parse(format!(
            "{}: expected a volumetric patch, found a shell",
            path.display()
        ))),
    }
}

fn export(patch: &Patch, initial: Option<&Patch>, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Other(e.to_string()))?;
    save_geometry(&dir.join("final.geo"), &Geometry::Patch(patch.clone()))?;
    let mut vtk = std::fs::File::create(dir.join("final.vtk"))
        .map_err(|e| CliError::Other(e.to_string()))?;
    write_vtk(&mut vtk, patch, patch.default_samples_per_span())?;
    if patch.dim_par() == 2 && patch.dim_phys() == 2 {
        let mut svg = std::fs::File::create(dir.join("final.svg"))
            .map_err(|e| CliError::Other(e.to_string()))?;
        write_svg(&mut svg, patch, 8)?;
    }
    if let Some(init) = initial {
        save_geometry(&dir.join("initial.geo"), &Geometry::Patch(init.clone()))?;
    }
    Ok(())
}

fn print_quality(patch: &Patch, samples: Option<usize>) -> Result<(), CliError> {
    let s = samples.unwrap_or_else(|| patch.default_samples_per_span());
    let (m, r) = patch
        .quality(s)
        .map_err(|e| CliError::Other(e.to_string()))?;
    println!("m = {m:.12e}");
    if r.is_finite() {
        println!("R = {r:.12e}");
    } else {
        println!("R = inf");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simplify { input, coarse, out } => {
            let shell = load_shell(&input)?;
            let spec = coarse.spec()?;
            let specs = vec![spec; shell.sides().len()];
            let domain = build_initial_domain(
                &shell,
                &specs,
                Reexpress::Project,
                BijectivityStrategy::GaussSampling,
            )?;
            save_geometry(&out, &Geometry::Shell(domain.shell))?;
            println!("initial domain: m = {:.6e}, R = {:.6e}", domain.min_det, domain.ratio);
            Ok(())
        }
        Command::Coons { input, out } => {
            let shell = load_shell(&input)?;
            let patch = coons_patch(&shell).map_err(|e| CliError::Other(e.to_string()))?;
            save_geometry(&out, &Geometry::Patch(patch.clone()))?;
            print_quality(&patch, None)
        }
        Command::Deform {
            target,
            initial,
            solver,
            output,
        } => {
            let shell = load_shell(&target)?;
            let init = load_patch(&initial)?;
            let cfg = solver.config()?;
            let result = deform(&init, &shell, &cfg)?;
            if let Some(path) = &output.report {
                let json = serde_json::to_string_pretty(&result.report)
                    .map_err(|e| CliError::Other(e.to_string()))?;
                std::fs::write(path, json).map_err(|e| CliError::Other(e.to_string()))?;
            }
            if let Some(dir) = &output.out {
                export(result.final_patch(), Some(&init), dir)?;
            }
            print_quality(result.final_patch(), None)
        }
        Command::Pipeline {
            target,
            coarse,
            solver,
            output,
        } => {
            let shell = load_shell(&target)?;
            let config = RunConfig {
                coarse: coarse.spec()?,
                reexpress: Reexpress::Project,
                deform: solver.config()?,
            };
            let outcome = run_pipeline(&shell, &config)?;
            if let Some(path) = &output.report {
                let json = serde_json::to_string_pretty(&outcome.report)
                    .map_err(|e| CliError::Other(e.to_string()))?;
                std::fs::write(path, json).map_err(|e| CliError::Other(e.to_string()))?;
            }
            if let Some(dir) = &output.out {
                export(outcome.final_patch(), Some(&outcome.initial), dir)?;
            }
            println!(
                "initial m = {:.6e}, final m = {:.6e}, solves = {}",
                outcome.report.initial_min_det,
                outcome.report.final_min_det,
                outcome.report.solver.tangent_solves
            );
            print_quality(outcome.final_patch(), None)
        }
        Command::Quality { input, samples } => {
            let patch = load_patch(&input)?;
            print_quality(&patch, samples)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
