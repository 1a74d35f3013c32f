//! Boundary simplification: constrained L2 projection of boundary curves
//! and surfaces onto a coarse spline space, with endpoints (curves) or
//! the whole lattice boundary (surfaces) pinned so adjacent sides stay
//! compatible. Together with the transfinite interpolation this yields
//! the initial bijective domain.

use crate::bspline::{gauss_rule, refine_to, BsplineError, KnotVector, TensorBasis};
use crate::geometry::{coons_patch, BijectivityStrategy, BoundaryShell, GeometryError, Patch};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SimplifyError {
    #[error("coarse space (degree {degree}, {num_basis} functions) is not coarser than the boundary space")]
    NotCoarser { degree: usize, num_basis: usize },
    #[error("coarse space needs at least degree+1 basis functions, got {0}")]
    TooFewBasis(usize),
    #[error("mass matrix is not positive definite")]
    SingularMass,
    #[error(
        "simplified boundary does not bound a bijective domain \
         (min det J = {min_det:.3e}, ratio = {ratio:.3e}); coarsen further"
    )]
    InitialDomainFailed { min_det: f64, ratio: f64 },
    #[error(transparent)]
    Bspline(#[from] BsplineError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Coarse target space for one boundary side, applied to every
/// parametric direction of that side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CoarseSpec {
    pub degree: usize,
    pub num_basis: usize,
}

impl CoarseSpec {
    pub fn new(degree: usize, num_basis: usize) -> Result<Self, SimplifyError> {
        if num_basis < degree + 1 {
            return Err(SimplifyError::TooFewBasis(num_basis));
        }
        Ok(Self { degree, num_basis })
    }

    pub fn knot_vector(&self) -> KnotVector {
        KnotVector::uniform_open(self.degree, self.num_basis)
            .expect("num_basis >= degree + 1")
    }
}

/// How to express a simplified side back on the original boundary basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reexpress {
    /// exact knot refinement (requires nestedness; always holds for
    /// uniform open coarse vectors refined onto the original space only
    /// when the spaces nest — otherwise use `Project`)
    Refine,
    /// constrained L2 projection onto the original space
    Project,
}

/// Breakpoints of the union mesh of two knot vectors.
fn union_breakpoints(a: &KnotVector, b: &KnotVector) -> Vec<f64> {
    let mut pts: Vec<f64> = a
        .interior_breakpoints()
        .into_iter()
        .chain(b.interior_breakpoints())
        .map(|(x, _)| x)
        .collect();
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    pts
}

/// Quadrature points and weights over the union mesh, exact for products
/// of the two spaces.
fn union_quadrature(a: &KnotVector, b: &KnotVector) -> (Vec<f64>, Vec<f64>) {
    let brk = union_breakpoints(a, b);
    let rule = gauss_rule(a.degree().max(b.degree()) + 1).expect("positive point count");
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in brk.windows(2) {
        for (x, wt) in rule.mapped(w[0], w[1]) {
            nodes.push(x);
            weights.push(wt);
        }
    }
    (nodes, weights)
}

/// Constrained L2 projection of a spline side onto a target tensor basis.
/// `pinned` lists (lex index, coefficient values) that are eliminated
/// from the system; the reduced mass matrix stays symmetric positive
/// definite.
fn constrained_project(
    source: &Patch,
    target: &TensorBasis,
    pinned: &[(usize, Vec<f64>)],
) -> Result<Vec<f64>, SimplifyError> {
    let d = target.dim();
    let dim = source.dim_phys();
    let n = target.num_basis();
    // per-direction union quadrature
    let quads: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
        .map(|k| union_quadrature(&target.kvs()[k], &source.basis().kvs()[k]))
        .collect();

    let mut pin_value: Vec<Option<&[f64]>> = vec![None; n];
    for (lex, vals) in pinned {
        pin_value[*lex] = Some(vals);
    }
    let free: Vec<usize> = (0..n).filter(|&i| pin_value[i].is_none()).collect();
    let slot: Vec<isize> = {
        let mut s = vec![-1isize; n];
        for (k, &i) in free.iter().enumerate() {
            s[i] = k as isize;
        }
        s
    };

    let nf = free.len();
    let mut mass = DMatrix::zeros(nf, nf);
    let mut rhs = DMatrix::zeros(nf, dim);

    // iterate the tensor quadrature grid
    let sizes: Vec<usize> = quads.iter().map(|q| q.0.len()).collect();
    let total: usize = sizes.iter().product();
    let mut xi = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        let mut wq = 1.0;
        for k in 0..d {
            let idx = rem % sizes[k];
            rem /= sizes[k];
            xi[k] = quads[k].0[idx];
            wq *= quads[k].1[idx];
        }
        let active = target.eval(&xi, false).map_err(SimplifyError::Bspline)?;
        let f = source.eval(&xi).map_err(SimplifyError::Geometry)?;
        for (a, &ia) in active.indices.iter().enumerate() {
            let sa = slot[ia];
            let ba = active.values[a];
            if sa < 0 {
                continue;
            }
            for c in 0..dim {
                rhs[(sa as usize, c)] += wq * ba * f[c];
            }
            for (b, &ib) in active.indices.iter().enumerate() {
                let bb = active.values[b];
                match slot[ib] {
                    s if s >= 0 => mass[(sa as usize, s as usize)] += wq * ba * bb,
                    _ => {
                        let vals = pin_value[ib].unwrap();
                        for c in 0..dim {
                            rhs[(sa as usize, c)] -= wq * ba * bb * vals[c];
                        }
                    }
                }
            }
        }
    }

    let chol = mass.cholesky().ok_or(SimplifyError::SingularMass)?;
    let sol = chol.solve(&rhs);

    let mut coeffs = vec![0.0; n * dim];
    for i in 0..n {
        match slot[i] {
            s if s >= 0 => {
                for c in 0..dim {
                    coeffs[i * dim + c] = sol[(s as usize, c)];
                }
            }
            _ => {
                let vals = pin_value[i].unwrap();
                coeffs[i * dim..(i + 1) * dim].copy_from_slice(vals);
            }
        }
    }
    Ok(coeffs)
}

/// Lattice-boundary pins for a surface side: the four edge curves are
/// simplified first (1D, endpoints pinned), so neighbouring sides that
/// share an edge receive identical simplified edges.
fn surface_boundary_pins(
    side: &Patch,
    spec: &CoarseSpec,
) -> Result<Vec<(usize, Vec<f64>)>, SimplifyError> {
    let dim = side.dim_phys();
    let m = spec.num_basis;
    let sizes = side.basis().sizes();
    let mut pins: Vec<(usize, Vec<f64>)> = Vec::new();
    // four edges of the side lattice: (fixed dir, at upper end?)
    for fixed in 0..2usize {
        for upper in [false, true] {
            // extract the edge curve in the running direction
            let run = 1 - fixed;
            let run_kv = side.basis().kvs()[run].clone();
            let mut edge_cps = Vec::with_capacity(sizes[run] * dim);
            for i in 0..sizes[run] {
                let mut mi = [0usize; 2];
                mi[fixed] = if upper { sizes[fixed] - 1 } else { 0 };
                mi[run] = i;
                let lex = side.basis().lex_index(&mi);
                edge_cps.extend_from_slice(side.cp(lex));
            }
            let edge = Patch::new(TensorBasis::new(vec![run_kv]), edge_cps, dim)
                .map_err(SimplifyError::Geometry)?;
            let simplified = simplify_curve(&edge, spec)?;
            for i in 0..m {
                let mut mi = [0usize; 2];
                mi[fixed] = if upper { m - 1 } else { 0 };
                mi[run] = i;
                let lex = mi[0] + m * mi[1];
                let vals = simplified[i * dim..(i + 1) * dim].to_vec();
                // corners get pinned twice with identical values
                if !pins.iter().any(|(l, _)| *l == lex) {
                    pins.push((lex, vals));
                }
            }
        }
    }
    Ok(pins)
}

fn simplify_curve(curve: &Patch, spec: &CoarseSpec) -> Result<Vec<f64>, SimplifyError> {
    let n_fine = curve.num_cps();
    if spec.num_basis >= n_fine && spec.degree >= curve.basis().kvs()[0].degree() {
        return Err(SimplifyError::NotCoarser {
            degree: spec.degree,
            num_basis: spec.num_basis,
        });
    }
    let target = TensorBasis::new(vec![spec.knot_vector()]);
    let m = spec.num_basis;
    let pins = vec![
        (0usize, curve.cp(0).to_vec()),
        (m - 1, curve.cp(n_fine - 1).to_vec()),
    ];
    constrained_project(curve, &target, &pins)
}

/// Constrained L2 simplification of one boundary side onto the coarse
/// space. Curve sides pin their endpoints; surface sides pin their whole
/// lattice boundary to independently simplified edge curves.
pub fn simplify_side(side: &Patch, spec: &CoarseSpec) -> Result<Patch, SimplifyError> {
    match side.dim_par() {
        1 => {
            let coeffs = simplify_curve(side, spec)?;
            let basis = TensorBasis::new(vec![spec.knot_vector()]);
            Patch::new(basis, coeffs, side.dim_phys()).map_err(SimplifyError::Geometry)
        }
        2 => {
            let pins = surface_boundary_pins(side, spec)?;
            let basis = TensorBasis::new(vec![spec.knot_vector(), spec.knot_vector()]);
            let coeffs = constrained_project(side, &basis, &pins)?;
            Patch::new(basis, coeffs, side.dim_phys()).map_err(SimplifyError::Geometry)
        }
        d => Err(SimplifyError::Geometry(GeometryError::Incompatible(
            format!("cannot simplify a side of parametric dimension {d}"),
        ))),
    }
}

/// Express a simplified side back on the original boundary basis so the
/// deformation problem can carry the boundary displacement.
pub fn reexpress(simplified: &Patch, original: &Patch, mode: Reexpress) -> Result<Patch, SimplifyError> {
    match mode {
        Reexpress::Refine => {
            let dim = simplified.dim_phys();
            let mut kvs = simplified.basis().kvs().to_vec();
            let mut coeffs = simplified.cps().to_vec();
            for k in 0..kvs.len() {
                let target_kv = &original.basis().kvs()[k];
                // refine direction k: treat all other directions as extra
                // component stride
                let sizes: Vec<usize> = kvs.iter().map(|kv| kv.num_basis()).collect();
                let n_k = sizes[k];
                let n_rest: usize = sizes.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &s)| s).product();
                let mut new_coeffs = Vec::new();
                let mut refined_rows: Vec<Vec<f64>> = Vec::with_capacity(n_rest);
                for rest in 0..n_rest {
                    // gather the row along direction k
                    let mut row = Vec::with_capacity(n_k * dim);
                    for i in 0..n_k {
                        let lex = row_lex(&sizes, k, i, rest);
                        row.extend_from_slice(&coeffs[lex * dim..(lex + 1) * dim]);
                    }
                    refined_rows.push(refine_to(&kvs[k], &row, dim, target_kv)?);
                }
                let mut new_sizes = sizes.clone();
                new_sizes[k] = target_kv.num_basis();
                let total: usize = new_sizes.iter().product();
                new_coeffs.resize(total * dim, 0.0);
                for (rest, row) in refined_rows.iter().enumerate() {
                    for i in 0..new_sizes[k] {
                        let lex = row_lex(&new_sizes, k, i, rest);
                        new_coeffs[lex * dim..(lex + 1) * dim]
                            .copy_from_slice(&row[i * dim..(i + 1) * dim]);
                    }
                }
                kvs[k] = target_kv.clone();
                coeffs = new_coeffs;
            }
            Patch::new(TensorBasis::new(kvs), coeffs, simplified.dim_phys())
                .map_err(SimplifyError::Geometry)
        }
        Reexpress::Project => {
            let basis = original.basis().clone();
            let dim = simplified.dim_phys();
            // pin the lattice boundary to the exact refinement of the
            // simplified side's boundary, keeping sides compatible
            let mut pins = Vec::new();
            let sizes = basis.sizes();
            match basis.dim() {
                1 => {
                    pins.push((0usize, simplified.cp(0).to_vec()));
                    pins.push((sizes[0] - 1, simplified.cp(simplified.num_cps() - 1).to_vec()));
                }
                _ => {
                    // surfaces: take the lattice boundary from the exact
                    // refinement and project only the interior
                    let refined = reexpress(simplified, original, Reexpress::Refine)?;
                    let mut pins2 = Vec::new();
                    for lex in 0..basis.num_basis() {
                        if basis.is_boundary_index(lex) {
                            pins2.push((lex, refined.cp(lex).to_vec()));
                        }
                    }
                    let coeffs = constrained_project(simplified, &basis, &pins2)?;
                    return Patch::new(basis, coeffs, dim).map_err(SimplifyError::Geometry);
                }
            }
            let coeffs = constrained_project(simplified, &basis, &pins)?;
            Patch::new(basis, coeffs, dim).map_err(SimplifyError::Geometry)
        }
    }
}

fn row_lex(sizes: &[usize], k: usize, i: usize, rest: usize) -> usize {
    let mut multi = vec![0usize; sizes.len()];
    let mut rem = rest;
    for (d, &s) in sizes.iter().enumerate() {
        if d == k {
            continue;
        }
        multi[d] = rem % s;
        rem /= s;
    }
    multi[k] = i;
    let mut lex = 0usize;
    let mut stride = 1usize;
    for (d, &s) in sizes.iter().enumerate() {
        lex += multi[d] * stride;
        stride *= s;
    }
    lex
}

/// Outcome of the initial-domain construction.
#[derive(Debug, Clone)]
pub struct InitialDomain {
    /// bijective transfinite interpolation of the simplified shell,
    /// re-expressed on the original boundary bases
    pub patch: Patch,
    /// the simplified shell on the original bases
    pub shell: BoundaryShell,
    pub min_det: f64,
    pub ratio: f64,
}

/// Simplify every side of the shell, re-express on the original bases,
/// build the transfinite interpolation and verify bijectivity.
pub fn build_initial_domain(
    shell: &BoundaryShell,
    specs: &[CoarseSpec],
    mode: Reexpress,
    strategy: BijectivityStrategy,
) -> Result<InitialDomain, SimplifyError> {
    assert_eq!(specs.len(), shell.sides().len(), "one CoarseSpec per side");
    let mut simplified_sides = Vec::with_capacity(shell.sides().len());
    for (side, spec) in shell.sides().iter().zip(specs) {
        let coarse = simplify_side(side, spec)?;
        simplified_sides.push(reexpress(&coarse, side, mode)?);
    }
    let simplified_shell =
        BoundaryShell::new(shell.dim(), simplified_sides).map_err(SimplifyError::Geometry)?;
    let patch = coons_patch(&simplified_shell).map_err(SimplifyError::Geometry)?;
    let (min_det, ratio) = patch
        .quality(patch.default_samples_per_span())
        .map_err(SimplifyError::Geometry)?;
    let report = patch
        .check_bijective(strategy, 0.0)
        .map_err(SimplifyError::Geometry)?;
    if !report.bijective {
        return Err(SimplifyError::InitialDomainFailed { min_det, ratio });
    }
    Ok(InitialDomain {
        patch,
        shell: simplified_shell,
        min_det,
        ratio,
    })
}
