//! Boundary-driven deformation solvers. The initial bijective domain is
//! deformed so that its boundary matches the target shell, by solving the
//! hyperelastic equilibrium problem with incrementally loaded Dirichlet
//! data. Every accepted update is guarded by a bijectivity check with
//! stepsize halving.

use crate::bspline::BsplineError;
use crate::elasticity::{l2_norm, ElasticityError, MaterialParams};
use crate::geometry::{BijectivityStrategy, BoundaryShell, GeometryError, Patch, SideId};
use crate::multipatch::{
    build_dof_map, global_linear, global_residual, global_tangent, side_lattice_to_volume,
    GlobalDofMap, PatchTopology, TopologyError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DeformError {
    #[error("initial and target boundary are incompatible: {0}")]
    Incompatible(String),
    #[error(
        "stepsize control stalled at load {loaded:.6} after {halvings} halvings \
         (requested step {requested:.3e})"
    )]
    Stall {
        loaded: f64,
        halvings: usize,
        requested: f64,
    },
    #[error("Newton iteration did not converge within {max_iters} iterations at load {loaded:.6}")]
    Divergence { loaded: f64, max_iters: usize },
    #[error("linear solve failed at load {loaded:.6}")]
    SolveFailed { loaded: f64 },
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Bspline(#[from] BsplineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    IncrementalNewton,
    Ndil,
    Ldil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepsizePolicy {
    /// reject any halving: each step must be accepted in full
    Fixed,
    /// request 1/N, absorb leftover load in extra steps of at most 1/N
    AdaptiveFixed,
    /// always request all remaining load
    Greedy,
}

#[derive(Debug, Clone)]
pub struct DeformConfig {
    pub steps: usize,
    pub strategy: Strategy,
    pub stepsize_policy: StepsizePolicy,
    pub epsilon: f64,
    pub max_newton_iters: usize,
    pub max_halvings: usize,
    pub material: MaterialParams,
    pub bijectivity: BijectivityStrategy,
    /// absolute floor for the pointwise jacobian guard; scaled internally
    /// by the domain volume
    pub delta: f64,
    /// N-DIL: skip the trailing Newton phase (predictors only)
    pub phase_one_only: bool,
    /// L-DIL: run a trailing Newton phase after the linear sweeps
    pub finish_with_newton: bool,
}

impl DeformConfig {
    pub fn new(steps: usize, material: MaterialParams) -> Self {
        Self {
            steps: steps.max(1),
            strategy: Strategy::Ndil,
            stepsize_policy: StepsizePolicy::AdaptiveFixed,
            epsilon: 1e-9,
            max_newton_iters: 30,
            max_halvings: 10,
            material,
            bijectivity: BijectivityStrategy::GaussSampling,
            delta: 0.0,
            phase_one_only: false,
            finish_with_newton: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    /// accepted fraction of the total load in this step
    pub stepsize: f64,
    pub halvings: usize,
    /// 0 for pure predictor / linear steps
    pub newton_iters: usize,
    pub min_det_j: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub strategy: Strategy,
    pub steps: Vec<StepRecord>,
    /// total number of linearized systems solved
    pub tangent_solves: usize,
    pub sum_stepsizes: f64,
    pub final_residual_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct DeformResult {
    /// displacement control coefficients, one point per global dof
    pub displacement: Vec<f64>,
    pub patches: Vec<Patch>,
    pub report: SolverReport,
}

impl DeformResult {
    pub fn final_patch(&self) -> &Patch {
        &self.patches[0]
    }
}

/// Build the full Dirichlet displacement vector (global coefficients,
/// zero off the outer boundary) from per-side target patches.
pub fn dirichlet_from_targets(
    topology: &PatchTopology,
    map: &GlobalDofMap,
    targets: &[(usize, SideId, Patch)],
) -> Result<Vec<f64>, DeformError> {
    let dim = topology.patches[0].dim_phys();
    let unmatched = topology.unmatched_sides();
    let mut u_d = vec![0.0; map.n_global * dim];
    for (p, id, target) in targets {
        if !unmatched.contains(&(*p, *id)) {
            return Err(DeformError::Incompatible(format!(
                "side {id} of patch {p} is not an outer boundary side"
            )));
        }
        let patch = &topology.patches[*p];
        let side = patch.side(*id);
        if side.basis().sizes() != target.basis().sizes() {
            return Err(DeformError::Incompatible(format!(
                "target for side {id} of patch {p} lives on a different basis"
            )));
        }
        for lex in 0..side.num_cps() {
            let m = side.basis().multi_index(lex);
            let l = side_lattice_to_volume(patch, *id, &m);
            let g = map.local_to_global[*p][l];
            for c in 0..dim {
                u_d[g * dim + c] = target.cp(lex)[c] - side.cp(lex)[c];
            }
        }
    }
    Ok(u_d)
}

/// Dirichlet data for a single patch whose boundary should come to rest
/// on `target`.
pub fn dirichlet_from_shell(
    initial: &Patch,
    target: &BoundaryShell,
) -> Result<Vec<(usize, SideId, Patch)>, DeformError> {
    if target.dim() != initial.dim_par() {
        return Err(DeformError::Incompatible(
            "target shell dimension differs from the initial domain".into(),
        ));
    }
    let mut out = Vec::new();
    for (k, id) in SideId::all(initial.dim_par()).into_iter().enumerate() {
        let side = initial.side(id);
        let tgt = &target.sides()[k];
        if side.basis().kvs() != tgt.basis().kvs() {
            return Err(DeformError::Incompatible(format!(
                "side {id}: target boundary uses a different knot vector"
            )));
        }
        out.push((0, id, tgt.clone()));
    }
    Ok(out)
}

struct Engine<'a> {
    topo: &'a PatchTopology,
    map: GlobalDofMap,
    dim: usize,
    u_d: Vec<f64>,
    cfg: &'a DeformConfig,
    /// current displacement (global coefficients)
    u: Vec<f64>,
    loaded: f64,
    records: Vec<StepRecord>,
    tangent_solves: usize,
}

impl<'a> Engine<'a> {
    fn new(
        topo: &'a PatchTopology,
        targets: &[(usize, SideId, Patch)],
        cfg: &'a DeformConfig,
    ) -> Result<Self, DeformError> {
        let map = build_dof_map(topo)?;
        let dim = topo.patches[0].dim_phys();
        let u_d = dirichlet_from_targets(topo, &map, targets)?;
        Ok(Self {
            topo,
            map,
            dim,
            u_d,
            cfg,
            u: vec![0.0; 0],
            loaded: 0.0,
            records: Vec::new(),
            tangent_solves: 0,
        })
        .map(|mut e| {
            e.u = vec![0.0; e.map.n_global * e.dim];
            e
        })
    }

    fn composed_patches(&self, u: &[f64]) -> Vec<Patch> {
        self.topo
            .patches
            .iter()
            .enumerate()
            .map(|(p, patch)| {
                let local = self.map.gather_local(p, u, self.dim);
                let mut cps = patch.cps().to_vec();
                for (x, d) in cps.iter_mut().zip(&local) {
                    *x += d;
                }
                patch.with_cps(cps)
            })
            .collect()
    }

    fn min_det_j(&self, u: &[f64]) -> f64 {
        self.composed_patches(u)
            .iter()
            .map(|p| {
                p.quality(p.default_samples_per_span())
                    .map(|(m, _)| m)
                    .unwrap_or(f64::NEG_INFINITY)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn is_bijective(&self, u: &[f64]) -> bool {
        self.composed_patches(u).iter().all(|p| {
            p.check_bijective(self.cfg.bijectivity, self.cfg.delta)
                .map(|r| r.bijective)
                .unwrap_or(false)
        })
    }

    /// Find the largest t = 1/2^k such that u + t du stays bijective.
    fn adapt_scale(&self, du: &[f64], requested: f64) -> Result<(f64, usize), DeformError> {
        for k in 0..=self.cfg.max_halvings {
            if self.cfg.stepsize_policy == StepsizePolicy::Fixed && k > 0 {
                break;
            }
            let t = 0.5f64.powi(k as i32);
            let trial: Vec<f64> = self
                .u
                .iter()
                .zip(du)
                .map(|(a, b)| a + t * b)
                .collect();
            if self.is_bijective(&trial) {
                return Ok((t, k));
            }
        }
        Err(DeformError::Stall {
            loaded: self.loaded,
            halvings: self.cfg.max_halvings,
            requested,
        })
    }

    fn solve_system(
        &mut self,
        system: &crate::elasticity::AssembledSystem,
    ) -> Result<Vec<f64>, DeformError> {
        self.tangent_solves += 1;
        let sol = system.solve().map_err(|_| DeformError::SolveFailed {
            loaded: self.loaded,
        })?;
        let mut du = vec![0.0; self.map.n_global * self.dim];
        for (s, &g) in self.map.free.iter().enumerate() {
            for c in 0..self.dim {
                du[g * self.dim + c] = sol[s * self.dim + c];
            }
        }
        Ok(du)
    }

    /// Inhomogeneous predictor: load a boundary increment of h * u_d with
    /// the consistent tangent. Returns (accepted load fraction, halvings).
    fn type_b_step(&mut self, h: f64) -> Result<(f64, usize), DeformError> {
        let g: Vec<f64> = self.u_d.iter().map(|v| h * v).collect();
        let system = global_tangent(
            &self.topo.patches,
            &self.map,
            &self.u,
            &self.cfg.material,
            Some(&g),
        )?;
        let mut du = self.solve_system(&system)?;
        for (i, v) in du.iter_mut().enumerate() {
            if self.map.is_outer[i / self.dim] {
                *v = g[i];
            }
        }
        let (t, halvings) = self.adapt_scale(&du, h)?;
        for (x, d) in self.u.iter_mut().zip(&du) {
            *x += t * d;
        }
        self.loaded += t * h;
        Ok((t * h, halvings))
    }

    /// Linear (Hooke) predictor on the current deformed configuration.
    fn linear_step(&mut self, h: f64) -> Result<(f64, usize), DeformError> {
        let g: Vec<f64> = self.u_d.iter().map(|v| h * v).collect();
        let current = self.composed_patches(&self.u);
        let system = global_linear(&current, &self.map, &self.cfg.material, Some(&g))?;
        let mut du = self.solve_system(&system)?;
        for (i, v) in du.iter_mut().enumerate() {
            if self.map.is_outer[i / self.dim] {
                *v = g[i];
            }
        }
        let (t, halvings) = self.adapt_scale(&du, h)?;
        for (x, d) in self.u.iter_mut().zip(&du) {
            *x += t * d;
        }
        self.loaded += t * h;
        Ok((t * h, halvings))
    }

    /// Homogeneous Newton corrections at the current load, until the
    /// relative increment drops below epsilon.
    fn newton_corrections(&mut self) -> Result<usize, DeformError> {
        let u_norm = self.field_norm(&self.u).max(1e-14);
        for it in 1..=self.cfg.max_newton_iters {
            let system = global_tangent(
                &self.topo.patches,
                &self.map,
                &self.u,
                &self.cfg.material,
                None,
            )?;
            let du = self.solve_system(&system)?;
            let (t, _) = self.adapt_scale(&du, 0.0)?;
            let scaled: Vec<f64> = du.iter().map(|v| t * v).collect();
            for (x, d) in self.u.iter_mut().zip(&scaled) {
                *x += d;
            }
            let rel = self.field_norm(&scaled) / u_norm;
            if rel < self.cfg.epsilon {
                return Ok(it);
            }
        }
        Err(DeformError::Divergence {
            loaded: self.loaded,
            max_iters: self.cfg.max_newton_iters,
        })
    }

    /// L2 norm of a global coefficient field over the initial domain.
    fn field_norm(&self, coeffs: &[f64]) -> f64 {
        let mut sq = 0.0;
        for (p, patch) in self.topo.patches.iter().enumerate() {
            let local = self.map.gather_local(p, coeffs, self.dim);
            let n = l2_norm(patch, &local, self.dim).expect("valid quadrature basis");
            sq += n * n;
        }
        sq.sqrt()
    }

    fn requested_step(&self) -> f64 {
        let remaining = 1.0 - self.loaded;
        match self.cfg.stepsize_policy {
            StepsizePolicy::Fixed | StepsizePolicy::AdaptiveFixed => {
                let h = 1.0 / self.cfg.steps as f64;
                if remaining <= h * (1.0 + 1e-12) {
                    remaining
                } else {
                    h
                }
            }
            StepsizePolicy::Greedy => remaining,
        }
    }

    fn fully_loaded(&self) -> bool {
        self.loaded >= 1.0 - 1e-13
    }

    /// Pin the boundary coefficients to the exact target once the full
    /// load has been applied, absorbing roundoff from the increments.
    fn snap_boundary(&mut self) {
        for i in 0..self.u.len() {
            if self.map.is_outer[i / self.dim] {
                self.u[i] = self.u_d[i];
            }
        }
        self.loaded = 1.0;
    }

    fn step_budget(&self) -> usize {
        self.cfg.steps * (self.cfg.max_halvings + 1) + 64
    }

    fn run_incremental_newton(&mut self) -> Result<(), DeformError> {
        let budget = self.step_budget();
        let mut index = 0;
        while !self.fully_loaded() {
            if index >= budget {
                return Err(DeformError::Stall {
                    loaded: self.loaded,
                    halvings: self.cfg.max_halvings,
                    requested: self.requested_step(),
                });
            }
            let h = self.requested_step();
            let (accepted, halvings) = self.type_b_step(h)?;
            if self.fully_loaded() {
                self.snap_boundary();
            }
            let iters = self.newton_corrections()?;
            self.records.push(StepRecord {
                index,
                stepsize: accepted,
                halvings,
                newton_iters: iters,
                min_det_j: self.min_det_j(&self.u),
            });
            index += 1;
        }
        Ok(())
    }

    fn run_ndil(&mut self) -> Result<(), DeformError> {
        let budget = self.step_budget();
        let mut index = 0;
        while !self.fully_loaded() {
            if index >= budget {
                return Err(DeformError::Stall {
                    loaded: self.loaded,
                    halvings: self.cfg.max_halvings,
                    requested: self.requested_step(),
                });
            }
            let h = self.requested_step();
            let (accepted, halvings) = self.type_b_step(h)?;
            if self.fully_loaded() {
                self.snap_boundary();
            }
            self.records.push(StepRecord {
                index,
                stepsize: accepted,
                halvings,
                newton_iters: 0,
                min_det_j: self.min_det_j(&self.u),
            });
            index += 1;
        }
        if !self.cfg.phase_one_only {
            let iters = self.newton_corrections()?;
            self.records.push(StepRecord {
                index,
                stepsize: 0.0,
                halvings: 0,
                newton_iters: iters,
                min_det_j: self.min_det_j(&self.u),
            });
        }
        Ok(())
    }

    fn run_ldil(&mut self) -> Result<(), DeformError> {
        let budget = self.step_budget();
        let mut index = 0;
        while !self.fully_loaded() {
            if index >= budget {
                return Err(DeformError::Stall {
                    loaded: self.loaded,
                    halvings: self.cfg.max_halvings,
                    requested: self.requested_step(),
                });
            }
            let h = self.requested_step();
            let (accepted, halvings) = self.linear_step(h)?;
            if self.fully_loaded() {
                self.snap_boundary();
            }
            self.records.push(StepRecord {
                index,
                stepsize: accepted,
                halvings,
                newton_iters: 0,
                min_det_j: self.min_det_j(&self.u),
            });
            index += 1;
        }
        if self.cfg.finish_with_newton {
            let iters = self.newton_corrections()?;
            self.records.push(StepRecord {
                index,
                stepsize: 0.0,
                halvings: 0,
                newton_iters: iters,
                min_det_j: self.min_det_j(&self.u),
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<DeformResult, DeformError> {
        let residual = global_residual(
            &self.topo.patches,
            &self.map,
            &self.u,
            &self.cfg.material,
        )?;
        let final_residual_norm = residual.norm();
        let patches = self.composed_patches(&self.u);
        let sum: f64 = self.records.iter().map(|r| r.stepsize).sum();
        let converged = self.fully_loaded();
        let report = SolverReport {
            strategy: self.cfg.strategy,
            steps: std::mem::take(&mut self.records),
            tangent_solves: self.tangent_solves,
            sum_stepsizes: sum,
            final_residual_norm,
            converged,
        };
        Ok(DeformResult {
            displacement: self.u,
            patches,
            report,
        })
    }
}

/// Deform a multipatch initial domain so its outer boundary matches the
/// given per-side targets.
pub fn deform_multipatch(
    topology: &PatchTopology,
    targets: &[(usize, SideId, Patch)],
    config: &DeformConfig,
) -> Result<DeformResult, DeformError> {
    let mut engine = Engine::new(topology, targets, config)?;
    if !engine.is_bijective(&engine.u) {
        return Err(DeformError::Incompatible(
            "initial domain is not bijective".into(),
        ));
    }
    match config.strategy {
        Strategy::IncrementalNewton => engine.run_incremental_newton()?,
        Strategy::Ndil => engine.run_ndil()?,
        Strategy::Ldil => engine.run_ldil()?,
    }
    engine.finish()
}

/// Deform a single-patch initial domain so its boundary comes to rest on
/// the target shell.
pub fn deform(
    initial: &Patch,
    target: &BoundaryShell,
    config: &DeformConfig,
) -> Result<DeformResult, DeformError> {
    let targets = dirichlet_from_shell(initial, target)?;
    let topo = PatchTopology::single(initial.clone());
    deform_multipatch(&topo, &targets, config)
}

/// Compose the initial parametrization with a displacement field given as
/// global control coefficients: the superposition principle at work —
/// control points simply add.
pub fn compose_final(initial: &Patch, displacement: &[f64]) -> Result<Patch, DeformError> {
    if displacement.len() != initial.cps().len() {
        return Err(DeformError::Incompatible(format!(
            "displacement has {} coefficients, patch needs {}",
            displacement.len(),
            initial.cps().len()
        )));
    }
    let cps: Vec<f64> = initial
        .cps()
        .iter()
        .zip(displacement)
        .map(|(a, b)| a + b)
        .collect();
    Ok(initial.with_cps(cps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::coons_patch;
    use crate::sample_domains;
    use approx::assert_relative_eq;

    fn translate_shell(patch: &Patch, dx: f64, dy: f64) -> BoundaryShell {
        let sides: Vec<Patch> = SideId::all(2)
            .into_iter()
            .map(|id| {
                let s = patch.side(id);
                let cps: Vec<f64> = s
                    .cps()
                    .chunks(2)
                    .flat_map(|c| [c[0] + dx, c[1] + dy])
                    .collect();
                s.with_cps(cps)
            })
            .collect();
        BoundaryShell::new(2, sides).unwrap()
    }

    #[test]
    fn translation_is_reproduced_in_one_step() {
        let initial = sample_domains::identity_square(2, 5);
        let target = translate_shell(&initial, 0.3, -0.2);
        let mat = MaterialParams::new(1.0, 0.49).unwrap();
        let mut cfg = DeformConfig::new(1, mat);
        cfg.strategy = Strategy::IncrementalNewton;
        let result = deform(&initial, &target, &cfg).unwrap();
        for chunk in result.displacement.chunks(2) {
            assert_relative_eq!(chunk[0], 0.3, epsilon = 1e-9);
            assert_relative_eq!(chunk[1], -0.2, epsilon = 1e-9);
        }
        // one predictor already lands on the solution; Newton confirms
        assert_eq!(result.report.steps.len(), 1);
        assert!(result.report.converged);
    }

    #[test]
    fn ldil_translation_zero_followup_increments() {
        let initial = sample_domains::identity_square(2, 5);
        let target = translate_shell(&initial, 0.2, 0.1);
        let mat = MaterialParams::new(1.0, 0.3).unwrap();
        let mut cfg = DeformConfig::new(4, mat);
        cfg.strategy = Strategy::Ldil;
        let result = deform(&initial, &target, &cfg).unwrap();
        assert!(result.report.converged);
        for chunk in result.displacement.chunks(2) {
            assert_relative_eq!(chunk[0], 0.2, epsilon = 1e-10);
            assert_relative_eq!(chunk[1], 0.1, epsilon = 1e-10);
        }
    }

    #[test]
    fn affine_target_is_exact_for_ndil() {
        // affine maps are equilibrium states of the homogeneous material:
        // a single inhomogeneous predictor reproduces them exactly
        let initial = sample_domains::identity_square(3, 6);
        let a = [[1.2, 0.3], [-0.1, 0.9]];
        let b = [0.05, -0.02];
        let sides: Vec<Patch> = SideId::all(2)
            .into_iter()
            .map(|id| {
                let s = initial.side(id);
                let cps: Vec<f64> = s
                    .cps()
                    .chunks(2)
                    .flat_map(|c| {
                        [
                            a[0][0] * c[0] + a[0][1] * c[1] + b[0],
                            a[1][0] * c[0] + a[1][1] * c[1] + b[1],
                        ]
                    })
                    .collect();
                s.with_cps(cps)
            })
            .collect();
        let target = BoundaryShell::new(2, sides).unwrap();
        let mat = MaterialParams::new(1.0, 0.49).unwrap();
        let mut cfg = DeformConfig::new(1, mat);
        cfg.strategy = Strategy::Ndil;
        let result = deform(&initial, &target, &cfg).unwrap();
        let final_patch = result.final_patch();
        for (cp0, cp1) in initial.cps().chunks(2).zip(final_patch.cps().chunks(2)) {
            let ex = a[0][0] * cp0[0] + a[0][1] * cp0[1] + b[0];
            let ey = a[1][0] * cp0[0] + a[1][1] * cp0[1] + b[1];
            assert_relative_eq!(cp1[0], ex, epsilon = 1e-9);
            assert_relative_eq!(cp1[1], ey, epsilon = 1e-9);
        }
    }

    #[test]
    fn boundary_lands_exactly_on_target() {
        let shell = sample_domains::concave_shell_2d();
        let initial = coons_patch(&sample_domains::square_shell_like(&shell)).unwrap();
        let mat = MaterialParams::new(1.0, 0.49).unwrap();
        let cfg = DeformConfig::new(4, mat);
        let result = deform(&initial, &shell, &cfg).unwrap();
        let final_patch = result.final_patch();
        for (k, id) in SideId::all(2).into_iter().enumerate() {
            let side = final_patch.side(id);
            for (a, b) in side.cps().iter().zip(shell.sides()[k].cps()) {
                assert!((a - b).abs() < 1e-14, "side {id}: {a} vs {b}");
            }
        }
        assert!(result.report.converged);
        assert_relative_eq!(result.report.sum_stepsizes, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stall_reported_when_budget_exhausted() {
        let shell = sample_domains::concave_shell_2d();
        let initial = coons_patch(&sample_domains::square_shell_like(&shell)).unwrap();
        let mat = MaterialParams::new(1.0, 0.49).unwrap();
        let mut cfg = DeformConfig::new(1, mat);
        cfg.strategy = Strategy::Ndil;
        cfg.max_halvings = 0;
        cfg.stepsize_policy = StepsizePolicy::Fixed;
        // with no halvings allowed, either the single full step succeeds
        // or we get a stall; both are legitimate outcomes, but the error
        // path must be a Stall, never a panic
        match deform(&initial, &shell, &cfg) {
            Ok(r) => assert!(r.report.converged),
            Err(DeformError::Stall { .. }) => {}
            Err(e) => panic!("unexpected error: {e}"),
        }
    }

    #[test]
    fn superposition_of_control_points() {
        let initial = sample_domains::identity_square(2, 5);
        let target = translate_shell(&initial, 0.1, 0.2);
        let mat = MaterialParams::new(1.0, 0.4).unwrap();
        let cfg = DeformConfig::new(2, mat);
        let result = deform(&initial, &target, &cfg).unwrap();
        let composed = compose_final(&initial, &result.displacement).unwrap();
        for (a, b) in composed.cps().iter().zip(result.final_patch().cps()) {
            assert_eq!(a, b);
        }
    }
}
