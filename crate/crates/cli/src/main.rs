//! Command-line front end: hypothesis validation, mode computation, and the
//! static / harmonic / dynamic synthesis paths, with VTK and JSON outputs.
//!
//! Exit codes: 0 success, 2 usage or malformed input, 3 mesh validation
//! failure, 4 solver failure, 5 resonance, 6 material validation failure.

mod commands;
mod io_util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    MeshValidation(String),
    Solver(String),
    Resonance(String),
    MaterialValidation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MeshValidation(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Resonance(_) => 5,
            CliError::MaterialValidation(_) => 6,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::MeshValidation(m)
            | CliError::Solver(m)
            | CliError::Resonance(m)
            | CliError::MaterialValidation(m) => m,
        }
    }
}

impl From<elastomode::mesh::MeshError> for CliError {
    fn from(err: elastomode::mesh::MeshError) -> Self {
        use elastomode::mesh::MeshError;
        match err {
            MeshError::Io(_) | MeshError::Json(_) | MeshError::Gmsh { .. } => {
                CliError::Usage(err.to_string())
            }
            other => CliError::MeshValidation(other.to_string()),
        }
    }
}

impl From<elastomode::material::MaterialError> for CliError {
    fn from(err: elastomode::material::MaterialError) -> Self {
        use elastomode::material::MaterialError;
        match err {
            MaterialError::Io(_) | MaterialError::Parse(_) => CliError::Usage(err.to_string()),
            other => CliError::MaterialValidation(other.to_string()),
        }
    }
}

impl From<elastomode::assembly::AssemblyError> for CliError {
    fn from(err: elastomode::assembly::AssemblyError) -> Self {
        use elastomode::assembly::AssemblyError;
        match err {
            AssemblyError::Io(_) | AssemblyError::Parse(_) => CliError::Usage(err.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<elastomode::solver::SolverError> for CliError {
    fn from(err: elastomode::solver::SolverError) -> Self {
        use elastomode::solver::SolverError;
        match err {
            SolverError::TooManyModes { .. } | SolverError::InvalidOptions { .. } => {
                CliError::Usage(err.to_string())
            }
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<elastomode::modal::ModalError> for CliError {
    fn from(err: elastomode::modal::ModalError) -> Self {
        use elastomode::modal::ModalError;
        match err {
            ModalError::Resonance { .. } => CliError::Resonance(err.to_string()),
            ModalError::Io(_) | ModalError::Parse(_) => CliError::Usage(err.to_string()),
            ModalError::Assembly(inner) => CliError::from(inner),
            ModalError::Mesh(inner) => CliError::from(inner),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

/// Shared input flags of every command.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Mesh file: .json (native schema) or .msh (Gmsh 2.2 ASCII)
    #[arg(long)]
    pub mesh: PathBuf,
    /// Material file (JSON)
    #[arg(long)]
    pub material: PathBuf,
    /// Physical tags mapped to Dirichlet facets (.msh meshes), e.g. "1,2"
    #[arg(long)]
    pub dirichlet_tags: Option<String>,
    /// Physical tags mapped to Neumann facets (.msh meshes)
    #[arg(long)]
    pub neumann_tags: Option<String>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TolArgs {
    /// Relative residual tolerance of the conjugate-gradient solver
    #[arg(long, default_value_t = elastomode::solver::DEFAULT_CG_TOL)]
    pub tol_cg: f64,
    /// Relative eigen residual tolerance
    #[arg(long, default_value_t = elastomode::solver::DEFAULT_EIG_TOL)]
    pub tol_eig: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Args)]
pub struct ModesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tols: TolArgs,
    /// Number of eigenmodes to compute
    #[arg(long)]
    pub num_modes: usize,
}

#[derive(Debug, Args)]
pub struct StaticArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tols: TolArgs,
    /// Sources file (JSON)
    #[arg(long)]
    pub sources: PathBuf,
    /// Mode container written by `modes`
    #[arg(long)]
    pub modes_file: Option<PathBuf>,
    /// Retain only the first N modes of the container
    #[arg(long)]
    pub num_modes: Option<usize>,
    /// Skip the modal path and solve the system directly
    #[arg(long)]
    pub direct: bool,
    /// Also solve directly and report the relative mass-norm error
    #[arg(long)]
    pub compare_direct: bool,
}

#[derive(Debug, Args)]
pub struct HarmonicArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tols: TolArgs,
    #[arg(long)]
    pub sources: PathBuf,
    #[arg(long)]
    pub modes_file: PathBuf,
    #[arg(long)]
    pub num_modes: Option<usize>,
    /// Angular frequency (rad/s)
    #[arg(long)]
    pub omega: f64,
    /// Relative resonance guard on |lambda - omega^2|
    #[arg(long, default_value_t = elastomode::modal::DEFAULT_RESONANCE_GUARD)]
    pub guard: f64,
    /// Also solve (K - omega^2 M) u = F densely and report the error
    #[arg(long)]
    pub compare_direct: bool,
}

#[derive(Debug, Args)]
pub struct DynamicArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tols: TolArgs,
    /// Frequency spectrum file (JSON)
    #[arg(long)]
    pub spectrum: PathBuf,
    #[arg(long)]
    pub modes_file: PathBuf,
    #[arg(long)]
    pub num_modes: Option<usize>,
    /// Comma-separated time samples, e.g. "0,0.05,0.1"
    #[arg(long)]
    pub times: String,
    #[arg(long, default_value_t = elastomode::modal::DEFAULT_RESONANCE_GUARD)]
    pub guard: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check mesh invariants and the material hypotheses
    Validate(ValidateArgs),
    /// Compute eigenmodes and write the mode container
    Modes(ModesArgs),
    /// Static response by modal superposition
    Static(StaticArgs),
    /// Time-harmonic response at one angular frequency
    Harmonic(HarmonicArgs),
    /// Time-domain response from a finite frequency spectrum
    Dynamic(DynamicArgs),
}

#[derive(Debug, Parser)]
#[command(
    name = "elastomode",
    version,
    about = "Elastic eigenmodes and modal synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate(args) => commands::run_validate(&args),
        Command::Modes(args) => commands::run_modes(&args),
        Command::Static(args) => commands::run_static(&args),
        Command::Harmonic(args) => commands::run_harmonic(&args),
        Command::Dynamic(args) => commands::run_dynamic(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
