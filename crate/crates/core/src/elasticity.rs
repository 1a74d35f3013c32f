//! Neo-Hookean material law and isogeometric assembly of the nonlinear
//! residual, its consistent tangent, and the linear-elastic bilinear form.

use crate::bspline::{self, BsplineError, QuadratureRule, TensorBasis};
use crate::geometry::{det_small, tensor_quad_points, GeometryError, Patch};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ElasticityError {
    #[error("Young's modulus must be positive, got {0}")]
    NonPositiveYoung(f64),
    #[error("Poisson's ratio must lie in [0, 0.5), got {0}")]
    InvalidPoisson(f64),
    #[error("non-bijective state: det F = {det:.6e}{}", element_note(.element))]
    NonBijectiveState { det: f64, element: Option<usize> },
    #[error("initial patch is not bijective at a quadrature point: det = {0:.6e}")]
    DegenerateGeometry(f64),
    #[error("displacement field basis does not match the patch basis")]
    BasisMismatch,
    #[error("linear solve failed: {0}")]
    SolveFailed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bspline(#[from] BsplineError),
}

fn element_note(e: &Option<usize>) -> String {
    e.map(|i| format!(" (element {i})")).unwrap_or_default()
}

/// Elastic material parameters. The Lame constants are derived from
/// Young's modulus and Poisson's ratio on construction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaterialParams {
    pub e: f64,
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl MaterialParams {
    pub fn new(e: f64, nu: f64) -> Result<Self, ElasticityError> {
        let (lambda, mu) = lame_from_e_nu(e, nu)?;
        Ok(Self { e, nu, lambda, mu })
    }
}

/// lambda = nu E / ((1+nu)(1-2nu)), mu = E / (2(1+nu)).
pub fn lame_from_e_nu(e: f64, nu: f64) -> Result<(f64, f64), ElasticityError> {
    if e <= 0.0 {
        return Err(ElasticityError::NonPositiveYoung(e));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(ElasticityError::InvalidPoisson(nu));
    }
    let lambda = nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

/// Pointwise kinematic quantities derived from the displacement gradient.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// Deformation gradient F = I + grad u.
    pub f: DMatrix<f64>,
    /// Right Cauchy-Green tensor C = F^T F.
    pub c: DMatrix<f64>,
    /// Inverse of C.
    pub c_inv: DMatrix<f64>,
    /// det F.
    pub j: f64,
    pub ln_j: f64,
}

impl Kinematics {
    pub fn from_grad_u(grad_u: &DMatrix<f64>) -> Result<Self, ElasticityError> {
        let d = grad_u.nrows();
        let mut f = grad_u.clone();
        for i in 0..d {
            f[(i, i)] += 1.0;
        }
        let j = det_small(&f);
        if j <= 0.0 {
            return Err(ElasticityError::NonBijectiveState {
                det: j,
                element: None,
            });
        }
        let c = f.transpose() * &f;
        let c_inv = c
            .clone()
            .try_inverse()
            .ok_or(ElasticityError::NonBijectiveState {
                det: j,
                element: None,
            })?;
        Ok(Self {
            f,
            c,
            c_inv,
            j,
            ln_j: j.ln(),
        })
    }
}

/// Second Piola-Kirchhoff stress of the logarithmic neo-Hookean law:
/// S = lambda ln J C^-1 + mu (I - C^-1).
pub fn neo_hookean_stress(kin: &Kinematics, mat: &MaterialParams) -> DMatrix<f64> {
    let d = kin.c.nrows();
    let mut s = &kin.c_inv * (mat.lambda * kin.ln_j - mat.mu);
    for i in 0..d {
        s[(i, i)] += mat.mu;
    }
    s
}

/// Components of the fourth-order elasticity tensor
/// C_abcd = lambda Ci_ab Ci_cd + (mu - lambda ln J)(Ci_ac Ci_bd + Ci_ad Ci_bc),
/// flattened with index ((a d + b) d + c) d + e.
pub fn elasticity_tensor(kin: &Kinematics, mat: &MaterialParams) -> Vec<f64> {
    let d = kin.c.nrows();
    let ci = &kin.c_inv;
    let g = mat.mu - mat.lambda * kin.ln_j;
    let mut out = vec![0.0; d * d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    out[((a * d + b) * d + c) * d + e] = mat.lambda * ci[(a, b)] * ci[(c, e)]
                        + g * (ci[(a, c)] * ci[(b, e)] + ci[(a, e)] * ci[(b, c)]);
                }
            }
        }
    }
    out
}

/// Cauchy stress of Hooke's law: sigma = lambda tr(eps) I + 2 mu eps.
pub fn linear_stress(grad_u: &DMatrix<f64>, mat: &MaterialParams) -> DMatrix<f64> {
    let d = grad_u.nrows();
    let eps = (grad_u + grad_u.transpose()) * 0.5;
    let mut s = eps * (2.0 * mat.mu);
    let tr: f64 = (0..d).map(|i| grad_u[(i, i)]).sum();
    for i in 0..d {
        s[(i, i)] += mat.lambda * tr;
    }
    s
}

/// A displacement field discretized on the basis of the initial patch.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    basis: TensorBasis,
    /// Coefficient vectors d_i, `dim` components per basis function.
    coeffs: Vec<f64>,
    dim: usize,
}

impl DiscreteField {
    pub fn zero(basis: TensorBasis, dim: usize) -> Self {
        let n = basis.num_basis();
        Self {
            basis,
            coeffs: vec![0.0; n * dim],
            dim,
        }
    }

    pub fn new(basis: TensorBasis, coeffs: Vec<f64>, dim: usize) -> Result<Self, ElasticityError> {
        if coeffs.len() != basis.num_basis() * dim {
            return Err(ElasticityError::BasisMismatch);
        }
        Ok(Self { basis, coeffs, dim })
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Basis indices on the boundary of the index lattice.
    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.basis.num_basis())
            .filter(|&i| self.basis.is_boundary_index(i))
            .collect()
    }

    /// Basis indices interior to the index lattice.
    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.basis.num_basis())
            .filter(|&i| !self.basis.is_boundary_index(i))
            .collect()
    }
}

/// A symmetric system over interior degrees of freedom, stored sparsely as
/// sorted CSR triplets.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// interior slot -> global basis index
    pub dof_map: Vec<usize>,
    pub dim: usize,
    /// (row, col, value) triplets, merged and sorted row-major.
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: DVector<f64>,
}

impl AssembledSystem {
    pub fn size(&self) -> usize {
        self.dof_map.len() * self.dim
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.triplets {
            m[(r, c)] += v;
        }
        m
    }

    pub fn symmetry_error(&self) -> f64 {
        let m = self.to_dense();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..m.nrows() {
            for j in 0..i {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
                scale = scale.max(m[(i, j)].abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// Deterministic direct solve (dense LU; Cholesky would also apply for
    /// the SPD linear-elastic case but LU covers the general tangent).
    pub fn solve(&self) -> Result<DVector<f64>, ElasticityError> {
        let m = self.to_dense();
        m.lu()
            .solve(&self.rhs)
            .ok_or_else(|| ElasticityError::SolveFailed("singular tangent matrix".into()))
    }
}

/// What an element loop should produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementForm {
    /// Neo-Hookean residual only.
    Residual,
    /// Neo-Hookean residual and consistent tangent.
    Tangent,
    /// Hooke bilinear form on the given geometry (no displacement state).
    Linear,
}

/// Per-element contribution: active global basis indices, local matrix
/// (na*d x na*d) and/or local residual (na*d).
pub struct ElementContrib {
    pub active: Vec<usize>,
    pub matrix: Option<DMatrix<f64>>,
    pub residual: Option<DVector<f64>>,
}

/// Evaluate one element's contribution. `geometry` provides the pullback
/// and the integration measure; `disp` are displacement coefficients on the
/// same basis (ignored for `Linear`).
pub fn element_contrib(
    geometry: &Patch,
    disp: Option<&[f64]>,
    mat: &MaterialParams,
    elem_index: usize,
    elem: &[(f64, f64)],
    rules: &[QuadratureRule],
    form: ElementForm,
) -> Result<ElementContrib, ElasticityError> {
    let d = geometry.dim_par();
    assert_eq!(d, geometry.dim_phys());
    let basis = geometry.basis();
    let mut active: Vec<usize> = Vec::new();
    let mut local_k: Option<DMatrix<f64>> = None;
    let mut local_r: Option<DVector<f64>> = None;

    for (xi, w) in tensor_quad_points(rules, elem) {
        let act = basis.eval(&xi, true)?;
        let na = act.indices.len();
        if active.is_empty() {
            active = act.indices.clone();
            let n = na * d;
            if form != ElementForm::Residual {
                local_k = Some(DMatrix::zeros(n, n));
            }
            if form != ElementForm::Linear {
                local_r = Some(DVector::zeros(n));
            }
        }
        debug_assert_eq!(active, act.indices);

        // geometry pullback
        let mut g0 = DMatrix::<f64>::zeros(d, d);
        for (k, &i) in act.indices.iter().enumerate() {
            let cp = geometry.cp(i);
            for a in 0..d {
                for b in 0..d {
                    g0[(a, b)] += cp[a] * act.grads[k * d + b];
                }
            }
        }
        let det_g0 = det_small(&g0);
        if det_g0 <= 0.0 {
            return Err(ElasticityError::DegenerateGeometry(det_g0));
        }
        let g0_inv = g0
            .try_inverse()
            .ok_or(ElasticityError::DegenerateGeometry(det_g0))?;
        // physical gradients of the active basis functions
        let mut grad_b = vec![0.0; na * d];
        for k in 0..na {
            for b in 0..d {
                let mut v = 0.0;
                for a in 0..d {
                    v += act.grads[k * d + a] * g0_inv[(a, b)];
                }
                grad_b[k * d + b] = v;
            }
        }
        let scale = w * det_g0;

        match form {
            ElementForm::Linear => {
                let k_mat = local_k.as_mut().unwrap();
                // Hooke: lambda div(u) div(v) + 2 mu eps(u):eps(v)
                for a in 0..na {
                    for kc in 0..d {
                        let row = a * d + kc;
                        for b in 0..na {
                            for lc in 0..d {
                                let col = b * d + lc;
                                let div_term =
                                    grad_b[a * d + kc] * grad_b[b * d + lc] * mat.lambda;
                                // 2 mu eps:eps with eps(B e_k)_ij = (d_ik dB_j + d_jk dB_i)/2
                                let mut eps_term = 0.0;
                                if kc == lc {
                                    for j in 0..d {
                                        eps_term += grad_b[a * d + j] * grad_b[b * d + j];
                                    }
                                }
                                eps_term += grad_b[a * d + lc] * grad_b[b * d + kc];
                                eps_term *= mat.mu;
                                k_mat[(row, col)] += scale * (div_term + eps_term);
                            }
                        }
                    }
                }
            }
            ElementForm::Residual | ElementForm::Tangent => {
                let disp = disp.expect("nonlinear forms need a displacement state");
                // displacement gradient
                let mut grad_u = DMatrix::<f64>::zeros(d, d);
                for (k, &i) in act.indices.iter().enumerate() {
                    for a in 0..d {
                        let c = disp[i * d + a];
                        for b in 0..d {
                            grad_u[(a, b)] += c * grad_b[k * d + b];
                        }
                    }
                }
                let kin = Kinematics::from_grad_u(&grad_u).map_err(|e| match e {
                    ElasticityError::NonBijectiveState { det, .. } => {
                        ElasticityError::NonBijectiveState {
                            det,
                            element: Some(elem_index),
                        }
                    }
                    other => other,
                })?;
                let s = neo_hookean_stress(&kin, mat);
                let fs = &kin.f * &s;
                let r = local_r.as_mut().unwrap();
                for a in 0..na {
                    for kc in 0..d {
                        let mut v = 0.0;
                        for j in 0..d {
                            v += fs[(kc, j)] * grad_b[a * d + j];
                        }
                        r[a * d + kc] += scale * v;
                    }
                }
                if form == ElementForm::Tangent {
                    let k_mat = local_k.as_mut().unwrap();
                    let ci = &kin.c_inv;
                    let gcoef = mat.mu - mat.lambda * kin.ln_j;
                    // strain variations delta E for every (function, component)
                    // pair, plus their contractions with C^-1
                    let mut de = vec![DMatrix::<f64>::zeros(d, d); na * d];
                    let mut ci_de = vec![0.0; na * d];
                    let mut ci_de_ci = vec![DMatrix::<f64>::zeros(d, d); na * d];
                    for a in 0..na {
                        for kc in 0..d {
                            let idx = a * d + kc;
                            let m = &mut de[idx];
                            for i in 0..d {
                                for j in 0..d {
                                    m[(i, j)] = 0.5
                                        * (kin.f[(kc, i)] * grad_b[a * d + j]
                                            + kin.f[(kc, j)] * grad_b[a * d + i]);
                                }
                            }
                            let mut tr = 0.0;
                            for i in 0..d {
                                for j in 0..d {
                                    tr += ci[(i, j)] * de[idx][(j, i)];
                                }
                            }
                            ci_de[idx] = tr;
                            ci_de_ci[idx] = ci * &de[idx] * ci;
                        }
                    }
                    for a in 0..na {
                        // geometric part: delta_kl grad_b^T S grad_a
                        for b in 0..na {
                            let mut geo = 0.0;
                            for i in 0..d {
                                for j in 0..d {
                                    geo += grad_b[b * d + i] * s[(i, j)] * grad_b[a * d + j];
                                }
                            }
                            geo *= scale;
                            for kc in 0..d {
                                k_mat[(a * d + kc, b * d + kc)] += geo;
                            }
                            for kc in 0..d {
                                let row = a * d + kc;
                                let ta = a * d + kc;
                                for lc in 0..d {
                                    let col = b * d + lc;
                                    let tb = b * d + lc;
                                    // lambda (Ci:dEa)(Ci:dEb)
                                    //   + 2 (mu - lambda lnJ) tr(Ci dEa Ci dEb)
                                    let mut tr = 0.0;
                                    for i in 0..d {
                                        for j in 0..d {
                                            tr += ci_de_ci[ta][(i, j)] * de[tb][(j, i)];
                                        }
                                    }
                                    let val = mat.lambda * ci_de[ta] * ci_de[tb]
                                        + 2.0 * gcoef * tr;
                                    k_mat[(row, col)] += scale * val;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ElementContrib {
        active,
        matrix: local_k,
        residual: local_r,
    })
}

/// Gauss rules for a basis: degree + 1 points per direction.
pub fn default_rules(basis: &TensorBasis) -> Result<Vec<QuadratureRule>, BsplineError> {
    basis
        .kvs()
        .iter()
        .map(|kv| bspline::gauss_rule(kv.degree() + 1))
        .collect()
}

/// Compute all element contributions of a patch in parallel, returned in
/// element-index order so downstream scattering is deterministic.
pub fn patch_contribs(
    geometry: &Patch,
    disp: Option<&[f64]>,
    mat: &MaterialParams,
    form: ElementForm,
) -> Result<Vec<ElementContrib>, ElasticityError> {
    let rules = default_rules(geometry.basis())?;
    let elements = geometry.basis().elements();
    elements
        .par_iter()
        .enumerate()
        .map(|(idx, elem)| element_contrib(geometry, disp, mat, idx, elem, &rules, form))
        .collect()
}

fn interior_slots(field: &DiscreteField) -> (Vec<usize>, Vec<isize>) {
    let interior = field.interior_indices();
    let mut slot_of = vec![-1isize; field.basis().num_basis()];
    for (s, &g) in interior.iter().enumerate() {
        slot_of[g] = s as isize;
    }
    (interior, slot_of)
}

/// Nonlinear residual over interior degrees of freedom.
pub fn assemble_residual(
    field: &DiscreteField,
    initial: &Patch,
    mat: &MaterialParams,
) -> Result<DVector<f64>, ElasticityError> {
    if field.basis() != initial.basis() {
        return Err(ElasticityError::BasisMismatch);
    }
    let d = field.dim();
    let (interior, slot_of) = interior_slots(field);
    let mut r = DVector::zeros(interior.len() * d);
    for contrib in patch_contribs(initial, Some(field.coeffs()), mat, ElementForm::Residual)? {
        let local = contrib.residual.unwrap();
        for (a, &g) in contrib.active.iter().enumerate() {
            let s = slot_of[g];
            if s < 0 {
                continue;
            }
            for c in 0..d {
                r[s as usize * d + c] += local[a * d + c];
            }
        }
    }
    Ok(r)
}

fn scatter_system(
    contribs: Vec<ElementContrib>,
    field_dim: usize,
    slot_of: &[isize],
    interior: Vec<usize>,
    boundary_increment: Option<&[f64]>,
) -> AssembledSystem {
    let d = field_dim;
    let n = interior.len() * d;
    let mut rhs = DVector::zeros(n);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for contrib in contribs {
        let k = contrib.matrix.as_ref();
        if let Some(res) = &contrib.residual {
            for (a, &g) in contrib.active.iter().enumerate() {
                let s = slot_of[g];
                if s < 0 {
                    continue;
                }
                for c in 0..d {
                    rhs[s as usize * d + c] -= res[a * d + c];
                }
            }
        }
        if let Some(k) = k {
            for (a, &ga) in contrib.active.iter().enumerate() {
                let sa = slot_of[ga];
                if sa < 0 {
                    continue;
                }
                for (b, &gb) in contrib.active.iter().enumerate() {
                    let sb = slot_of[gb];
                    for ca in 0..d {
                        let row = sa as usize * d + ca;
                        for cb in 0..d {
                            let v = k[(a * d + ca, b * d + cb)];
                            if sb >= 0 {
                                triplets.push((row, sb as usize * d + cb, v));
                            } else if let Some(ginc) = boundary_increment {
                                rhs[row] -= v * ginc[gb * d + cb];
                            }
                        }
                    }
                }
            }
        }
    }
    triplets.sort_by_key(|&(r, c, _)| (r, c));
    triplets.dedup_by(|a, b| {
        if a.0 == b.0 && a.1 == b.1 {
            b.2 += a.2;
            true
        } else {
            false
        }
    });
    AssembledSystem {
        dof_map: interior,
        dim: d,
        triplets,
        rhs,
    }
}

/// Consistent tangent over interior dofs. The right-hand side is the
/// negative residual; when `boundary_increment` is given (full-size
/// coefficient vector, only boundary entries used), the Dirichlet columns
/// are folded into the right-hand side as well.
pub fn assemble_tangent(
    field: &DiscreteField,
    initial: &Patch,
    mat: &MaterialParams,
    boundary_increment: Option<&[f64]>,
) -> Result<AssembledSystem, ElasticityError> {
    if field.basis() != initial.basis() {
        return Err(ElasticityError::BasisMismatch);
    }
    let (interior, slot_of) = interior_slots(field);
    let contribs = patch_contribs(initial, Some(field.coeffs()), mat, ElementForm::Tangent)?;
    Ok(scatter_system(
        contribs,
        field.dim(),
        &slot_of,
        interior,
        boundary_increment,
    ))
}

/// Linear-elastic stiffness on the given (possibly deformed) geometry.
pub fn assemble_linear(
    domain: &Patch,
    mat: &MaterialParams,
    boundary_increment: Option<&[f64]>,
) -> Result<AssembledSystem, ElasticityError> {
    let field = DiscreteField::zero(domain.basis().clone(), domain.dim_phys());
    let (interior, slot_of) = interior_slots(&field);
    let contribs = patch_contribs(domain, None, mat, ElementForm::Linear)?;
    Ok(scatter_system(
        contribs,
        field.dim(),
        &slot_of,
        interior,
        boundary_increment,
    ))
}

/// L2 norm of a discrete field over the initial domain, by Gauss
/// quadrature with the geometric measure |det grad G0|.
pub fn l2_norm(initial: &Patch, coeffs: &[f64], dim: usize) -> Result<f64, ElasticityError> {
    let basis = initial.basis();
    let rules = default_rules(basis)?;
    let mut total = 0.0;
    for elem in basis.elements() {
        for (xi, w) in tensor_quad_points(&rules, &elem) {
            let act = basis.eval(&xi, true)?;
            let d = initial.dim_par();
            let mut g0 = DMatrix::<f64>::zeros(d, d);
            let mut val = vec![0.0; dim];
            for (k, &i) in act.indices.iter().enumerate() {
                let cp = initial.cp(i);
                for a in 0..d {
                    for b in 0..d {
                        g0[(a, b)] += cp[a] * act.grads[k * d + b];
                    }
                }
                for c in 0..dim {
                    val[c] += act.values[k] * coeffs[i * dim + c];
                }
            }
            let det = det_small(&g0).abs();
            total += w * det * val.iter().map(|v| v * v).sum::<f64>();
        }
    }
    Ok(total.sqrt())
}
