//! The full simplify -> transfinite interpolation -> deform pipeline.

use crate::deform::{deform, DeformConfig, DeformError, DeformResult, SolverReport};
use crate::geometry::{BoundaryShell, GeometryError, Patch};
use crate::simplify::{build_initial_domain, CoarseSpec, Reexpress, SimplifyError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("simplification failed: {0}")]
    Simplify(#[from] SimplifyError),
    #[error("deformation failed: {0}")]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// coarse space for each boundary side (same spec for all sides)
    pub coarse: CoarseSpec,
    pub reexpress: Reexpress,
    pub deform: DeformConfig,
}

/// Summary of one pipeline run, serializable for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub initial_min_det: f64,
    pub initial_ratio: f64,
    pub final_min_det: f64,
    pub final_ratio: f64,
    pub solver: SolverReport,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub initial: Patch,
    pub result: DeformResult,
    pub report: PipelineReport,
}

impl PipelineOutcome {
    pub fn final_patch(&self) -> &Patch {
        self.result.final_patch()
    }
}

/// Run the whole pipeline on a boundary shell: simplify the boundary,
/// build the bijective initial domain, then deform it onto the target
/// boundary.
pub fn run_pipeline(shell: &BoundaryShell, config: &RunConfig) -> Result<PipelineOutcome, PipelineError> {
    let specs = vec![config.coarse; shell.sides().len()];
    let initial = build_initial_domain(
        shell,
        &specs,
        config.reexpress,
        config.deform.bijectivity,
    )?;
    let result = deform(&initial.patch, shell, &config.deform)?;
    let (final_min_det, final_ratio) = result
        .final_patch()
        .quality(result.final_patch().default_samples_per_span())?;
    let report = PipelineReport {
        initial_min_det: initial.min_det,
        initial_ratio: initial.ratio,
        final_min_det,
        final_ratio,
        solver: result.report.clone(),
    };
    Ok(PipelineOutcome {
        initial: initial.patch,
        result,
        report,
    })
}

/// Convenience default configuration: quadratic 3-point coarse sides,
/// N-DIL with adaptive-fixed steps, nearly incompressible 2D material.
pub fn default_config_2d(steps: usize) -> RunConfig {
    let mat = crate::elasticity::MaterialParams::new(1.0, 0.49).expect("valid defaults");
    RunConfig {
        coarse: CoarseSpec::new(2, 3).expect("valid defaults"),
        reexpress: Reexpress::Project,
        deform: DeformConfig::new(steps, mat),
    }
}

/// 3D variant: the default Poisson ratio drops to 0.46.
pub fn default_config_3d(steps: usize) -> RunConfig {
    let mat = crate::elasticity::MaterialParams::new(1.0, 0.46).expect("valid defaults");
    RunConfig {
        coarse: CoarseSpec::new(2, 3).expect("valid defaults"),
        reexpress: Reexpress::Project,
        deform: DeformConfig::new(steps, mat),
    }
}
