//! Tensor-product patches, boundary shells, the Coons patch constructor,
//! Jacobian evaluation and the quality measures m(G) and R(G).

use crate::bspline::{self, BsplineError, KnotVector, TensorBasis};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum GeometryError {
    #[error(transparent)]
    Bspline(#[from] BsplineError),
    #[error("control point count {got} does not match basis size {expected}")]
    CoeffMismatch { got: usize, expected: usize },
    #[error("parametric dimension {par} exceeds physical dimension {phys}")]
    DimMismatch { par: usize, phys: usize },
    #[error("operation requires d_par = d_phys, got {par} and {phys}")]
    NotVolumetric { par: usize, phys: usize },
    #[error("incompatible boundary shell: {0}")]
    Incompatible(String),
    #[error("parametric point {0:?} outside the unit cube")]
    OutOfDomain(Vec<f64>),
}

/// One side of the parametric cube: a direction and a min/max face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SideId {
    pub dir: usize,
    pub upper: bool,
}

impl SideId {
    pub fn all(dim: usize) -> Vec<SideId> {
        (0..dim)
            .flat_map(|dir| {
                [false, true]
                    .into_iter()
                    .map(move |upper| SideId { dir, upper })
            })
            .collect()
    }

    /// Position in the canonical side ordering (dir-major, min before max).
    pub fn index(&self) -> usize {
        2 * self.dir + self.upper as usize
    }
}

impl std::fmt::Display for SideId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.dir, if self.upper { "max" } else { "min" })
    }
}

/// A tensor-product geometry map: control points over a tensor basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    basis: TensorBasis,
    /// Flattened control points, `dim_phys` components per basis function,
    /// lexicographic order (first parametric direction fastest).
    cps: Vec<f64>,
    dim_phys: usize,
}

impl Patch {
    pub fn new(basis: TensorBasis, cps: Vec<f64>, dim_phys: usize) -> Result<Self, GeometryError> {
        let n = basis.num_basis();
        if cps.len() != n * dim_phys {
            return Err(GeometryError::CoeffMismatch {
                got: cps.len(),
                expected: n * dim_phys,
            });
        }
        if basis.dim() > dim_phys {
            return Err(GeometryError::DimMismatch {
                par: basis.dim(),
                phys: dim_phys,
            });
        }
        Ok(Self {
            basis,
            cps,
            dim_phys,
        })
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn cps(&self) -> &[f64] {
        &self.cps
    }

    pub fn cps_mut(&mut self) -> &mut [f64] {
        &mut self.cps
    }

    pub fn dim_par(&self) -> usize {
        self.basis.dim()
    }

    pub fn dim_phys(&self) -> usize {
        self.dim_phys
    }

    pub fn num_cps(&self) -> usize {
        self.basis.num_basis()
    }

    pub fn cp(&self, lex: usize) -> &[f64] {
        &self.cps[lex * self.dim_phys..(lex + 1) * self.dim_phys]
    }

    /// Same basis, new control points.
    pub fn with_cps(&self, cps: Vec<f64>) -> Patch {
        Patch::new(self.basis.clone(), cps, self.dim_phys)
            .expect("control net size is unchanged")
    }

    fn check_domain(&self, xi: &[f64]) -> Result<(), GeometryError> {
        if xi.len() != self.dim_par() || xi.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(GeometryError::OutOfDomain(xi.to_vec()));
        }
        Ok(())
    }

    /// Evaluate the geometry map at a parametric point.
    pub fn eval(&self, xi: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_domain(xi)?;
        let act = self.basis.eval(xi, false)?;
        let mut out = vec![0.0; self.dim_phys];
        for (&i, &b) in act.indices.iter().zip(&act.values) {
            let cp = self.cp(i);
            for c in 0..self.dim_phys {
                out[c] += b * cp[c];
            }
        }
        Ok(out)
    }

    /// Parametric gradient of the map at `xi`: a d_phys x d_par matrix.
    pub fn gradient(&self, xi: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.check_domain(xi)?;
        let d_par = self.dim_par();
        let act = self.basis.eval(xi, true)?;
        let mut g = DMatrix::zeros(self.dim_phys, d_par);
        for (k, &i) in act.indices.iter().enumerate() {
            let cp = self.cp(i);
            for a in 0..self.dim_phys {
                for b in 0..d_par {
                    g[(a, b)] += cp[a] * act.grads[k * d_par + b];
                }
            }
        }
        Ok(g)
    }

    /// Jacobian sample at `xi`; requires a volumetric patch.
    pub fn jacobian(&self, xi: &[f64]) -> Result<JacobianSample, GeometryError> {
        if self.dim_par() != self.dim_phys {
            return Err(GeometryError::NotVolumetric {
                par: self.dim_par(),
                phys: self.dim_phys,
            });
        }
        let gradient = self.gradient(xi)?;
        let det = det_small(&gradient);
        Ok(JacobianSample {
            location: xi.to_vec(),
            gradient,
            det,
        })
    }

    /// Extract a boundary side as a patch of parametric dimension d-1.
    /// The side keeps the remaining parametric directions in increasing
    /// order.
    pub fn side(&self, id: SideId) -> Patch {
        let d = self.dim_par();
        assert!(id.dir < d && d >= 2);
        let sizes = self.basis.sizes();
        let fixed = if id.upper { sizes[id.dir] - 1 } else { 0 };
        let other_dirs: Vec<usize> = (0..d).filter(|&k| k != id.dir).collect();
        let kvs: Vec<KnotVector> = other_dirs
            .iter()
            .map(|&k| self.basis.kv(k).clone())
            .collect();
        let side_basis = TensorBasis::new(kvs);
        let side_sizes = side_basis.sizes();
        let total: usize = side_sizes.iter().product();
        let mut cps = Vec::with_capacity(total * self.dim_phys);
        for lex in 0..total {
            let smulti = side_basis.multi_index(lex);
            let mut vmulti = vec![0usize; d];
            vmulti[id.dir] = fixed;
            for (pos, &dir) in other_dirs.iter().enumerate() {
                vmulti[dir] = smulti[pos];
            }
            cps.extend_from_slice(self.cp(self.basis.lex_index(&vmulti)));
        }
        Patch::new(side_basis, cps, self.dim_phys).expect("side extraction is size-consistent")
    }

    /// All sides as a boundary shell.
    pub fn boundary(&self) -> BoundaryShell {
        let d = self.dim_par();
        BoundaryShell {
            dim: d,
            sides: SideId::all(d).into_iter().map(|id| self.side(id)).collect(),
        }
    }

    /// Quality measures: m = min det J, R = max/min over a uniform sample
    /// grid with `samples_per_span` points per non-empty knot span.
    /// R is `f64::INFINITY` when m <= 0.
    pub fn quality(&self, samples_per_span: usize) -> Result<(f64, f64), GeometryError> {
        assert!(samples_per_span >= 1);
        let d = self.dim_par();
        let per_dir: Vec<Vec<f64>> = (0..d)
            .map(|dir| sample_coords(self.basis.kv(dir), samples_per_span))
            .collect();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut idx = vec![0usize; d];
        loop {
            let xi: Vec<f64> = (0..d).map(|k| per_dir[k][idx[k]]).collect();
            let det = self.jacobian(&xi)?.det;
            min = min.min(det);
            max = max.max(det);
            let mut dir = 0;
            loop {
                if dir == d {
                    let r = if min > 0.0 { max / min } else { f64::INFINITY };
                    return Ok((min, r));
                }
                idx[dir] += 1;
                if idx[dir] < per_dir[dir].len() {
                    break;
                }
                idx[dir] = 0;
                dir += 1;
            }
        }
    }

    /// Default sample density for `quality`: max degree + 2.
    pub fn default_samples_per_span(&self) -> usize {
        self.basis
            .kvs()
            .iter()
            .map(|k| k.degree())
            .max()
            .unwrap_or(1)
            + 2
    }

    /// Signed parametric volume: integral of det J over the unit cube.
    pub fn signed_volume(&self) -> Result<f64, GeometryError> {
        let d = self.dim_par();
        let rules: Vec<_> = (0..d)
            .map(|dir| bspline::gauss_rule(self.basis.kv(dir).degree() + 1))
            .collect::<Result<_, _>>()?;
        let mut vol = 0.0;
        for elem in self.basis.elements() {
            for (xi, w) in tensor_quad_points(&rules, &elem) {
                vol += w * self.jacobian(&xi)?.det;
            }
        }
        Ok(vol)
    }

    /// Test bijectivity of the map.
    pub fn check_bijective(
        &self,
        strategy: BijectivityStrategy,
        delta: f64,
    ) -> Result<BijectivityReport, GeometryError> {
        match strategy {
            BijectivityStrategy::GaussSampling => self.check_bijective_gauss(delta),
            BijectivityStrategy::CoefficientTest => self.check_bijective_coefficients(delta),
        }
    }

    fn check_bijective_gauss(&self, delta: f64) -> Result<BijectivityReport, GeometryError> {
        let d = self.dim_par();
        let rules: Vec<_> = (0..d)
            .map(|dir| bspline::gauss_rule(self.basis.kv(dir).degree() + 1))
            .collect::<Result<_, _>>()?;
        let mut worst: Option<JacobianSample> = None;
        let mut volume = 0.0;
        for elem in self.basis.elements() {
            for (xi, w) in tensor_quad_points(&rules, &elem) {
                let s = self.jacobian(&xi)?;
                volume += w * s.det;
                if worst.as_ref().map_or(true, |b| s.det < b.det) {
                    worst = Some(s);
                }
            }
        }
        let worst = worst.expect("at least one quadrature point");
        // relative floor guards round-off sign flips near zero
        let floor = delta.max(1e-12 * volume.abs());
        Ok(BijectivityReport {
            bijective: worst.det > floor,
            worst: Worst::Sample(worst),
        })
    }

    fn check_bijective_coefficients(&self, delta: f64) -> Result<BijectivityReport, GeometryError> {
        let d = self.dim_par();
        if d != self.dim_phys {
            return Err(GeometryError::NotVolumetric {
                par: d,
                phys: self.dim_phys,
            });
        }
        // det J of a degree-p patch lies exactly in the degree d*p product
        // space with smoothness reduced by one order at each breakpoint
        let kvs: Vec<KnotVector> = (0..d)
            .map(|dir| {
                let kv = self.basis.kv(dir);
                let p = kv.degree();
                let q = d * p;
                let mut knots = vec![0.0; q + 1];
                for (b, m) in kv.interior_breakpoints() {
                    // original continuity p - m, det J continuity p - m - 1
                    let cont = (p as isize - m as isize - 1).max(0) as usize;
                    let mult = (q - cont).min(q);
                    knots.extend(std::iter::repeat(b).take(mult));
                }
                knots.extend(std::iter::repeat(1.0).take(q + 1));
                KnotVector::new(q, knots)
            })
            .collect::<Result<_, _>>()?;
        let product = TensorBasis::new(kvs);
        let grid = product.greville();
        let vals: Vec<f64> = grid
            .iter()
            .map(|xi| self.jacobian(xi).map(|s| s.det))
            .collect::<Result<_, _>>()?;
        let coeffs = tensor_interpolate(&product, vals)?;
        let (arg, &min) = coeffs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        Ok(BijectivityReport {
            bijective: min > delta,
            worst: Worst::Coefficient {
                index: arg,
                value: min,
            },
        })
    }
}

/// Uniform sample coordinates over the non-empty spans of a knot vector,
/// endpoints included when more than one sample per span is requested.
fn sample_coords(kv: &KnotVector, per_span: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for (a, b) in kv.spans() {
        if per_span == 1 {
            out.push(0.5 * (a + b));
        } else {
            for k in 0..per_span {
                let x = a + (b - a) * k as f64 / (per_span - 1) as f64;
                if out.last().map_or(true, |&l: &f64| x > l) {
                    out.push(x);
                }
            }
        }
    }
    out
}

/// Tensor quadrature points over one element.
pub(crate) fn tensor_quad_points(
    rules: &[bspline::QuadratureRule],
    elem: &[(f64, f64)],
) -> Vec<(Vec<f64>, f64)> {
    let d = elem.len();
    let per_dir: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|k| rules[k].mapped(elem[k].0, elem[k].1).collect())
        .collect();
    let mut out: Vec<(Vec<f64>, f64)> = vec![(vec![], 1.0)];
    for dir_pts in &per_dir {
        let mut next = Vec::with_capacity(out.len() * dir_pts.len());
        for &(x, w) in dir_pts {
            for (xs, ws) in &out {
                let mut v = xs.clone();
                v.push(x);
                next.push((v, ws * w));
            }
        }
        out = next;
    }
    out
}

/// Interpolate grid values given at the tensor Greville points onto the
/// tensor basis, solving one banded collocation system per direction.
fn tensor_interpolate(basis: &TensorBasis, mut vals: Vec<f64>) -> Result<Vec<f64>, GeometryError> {
    let d = basis.dim();
    let sizes = basis.sizes();
    for dir in 0..d {
        let kv = basis.kv(dir);
        let n = sizes[dir];
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (row, &g) in kv.greville().iter().enumerate() {
            let (first, table) = kv.eval_basis(g, 0)?;
            for (j, &b) in table[0].iter().enumerate() {
                a[(row, first + j)] = b;
            }
        }
        let lu = a.lu();
        // stride of direction `dir` in lexicographic numbering
        let stride: usize = sizes[..dir].iter().product();
        let total: usize = sizes.iter().product();
        let num_lines = total / n;
        for line in 0..num_lines {
            // base index of this line
            let outer = line / stride;
            let inner = line % stride;
            let base = outer * stride * n + inner;
            let col =
                nalgebra::DVector::from_iterator(n, (0..n).map(|i| vals[base + i * stride]));
            let x = lu.solve(&col).ok_or_else(|| {
                GeometryError::Incompatible("singular collocation matrix".into())
            })?;
            for i in 0..n {
                vals[base + i * stride] = x[i];
            }
        }
    }
    Ok(vals)
}

pub(crate) fn det_small(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => m.determinant(),
    }
}

/// A Jacobian evaluation at one parametric point.
#[derive(Debug, Clone)]
pub struct JacobianSample {
    pub location: Vec<f64>,
    pub gradient: DMatrix<f64>,
    pub det: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BijectivityStrategy {
    GaussSampling,
    CoefficientTest,
}

#[derive(Debug, Clone)]
pub struct BijectivityReport {
    pub bijective: bool,
    pub worst: Worst,
}

#[derive(Debug, Clone)]
pub enum Worst {
    Sample(JacobianSample),
    Coefficient { index: usize, value: f64 },
}

impl Worst {
    pub fn value(&self) -> f64 {
        match self {
            Worst::Sample(s) => s.det,
            Worst::Coefficient { value, .. } => *value,
        }
    }
}

/// The 2d compatible sides bounding a d-dimensional patch, in canonical
/// order (dir-major, min before max).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryShell {
    dim: usize,
    sides: Vec<Patch>,
}

const SHELL_TOL: f64 = 1e-12;

impl BoundaryShell {
    pub fn new(dim: usize, sides: Vec<Patch>) -> Result<Self, GeometryError> {
        if sides.len() != 2 * dim {
            return Err(GeometryError::Incompatible(format!(
                "expected {} sides, got {}",
                2 * dim,
                sides.len()
            )));
        }
        let shell = Self { dim, sides };
        shell.check_compatibility()?;
        Ok(shell)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dim_phys(&self) -> usize {
        self.sides[0].dim_phys()
    }

    pub fn side(&self, id: SideId) -> &Patch {
        &self.sides[id.index()]
    }

    pub fn sides(&self) -> &[Patch] {
        &self.sides
    }

    /// The tensor basis of the volumetric patch this shell bounds.
    pub fn volume_basis(&self) -> TensorBasis {
        let kvs: Vec<KnotVector> = (0..self.dim)
            .map(|dir| {
                // direction `dir` appears as a side parameter of any side
                // with a different fixed direction
                let probe = if dir == 0 { 1 } else { 0 };
                let side = self.side(SideId {
                    dir: probe,
                    upper: false,
                });
                let pos = (0..self.dim).filter(|&k| k != probe).position(|k| k == dir);
                side.basis().kv(pos.unwrap()).clone()
            })
            .collect();
        TensorBasis::new(kvs)
    }

    fn check_compatibility(&self) -> Result<(), GeometryError> {
        let d = self.dim;
        for s in &self.sides {
            if s.dim_par() != d - 1 {
                return Err(GeometryError::Incompatible(format!(
                    "side has parametric dimension {}, expected {}",
                    s.dim_par(),
                    d - 1
                )));
            }
            if s.dim_phys() != self.sides[0].dim_phys() {
                return Err(GeometryError::Incompatible(
                    "sides have mixed physical dimensions".into(),
                ));
            }
        }
        // opposite sides carry identical bases
        for dir in 0..d {
            let a = self.side(SideId { dir, upper: false });
            let b = self.side(SideId { dir, upper: true });
            if a.basis() != b.basis() {
                return Err(GeometryError::Incompatible(format!(
                    "opposite sides in direction {dir} have different bases"
                )));
            }
        }
        // adjacent sides agree on shared edges/corners
        for a in 0..d {
            for b in 0..d {
                if a == b {
                    continue;
                }
                for ea in [false, true] {
                    for eb in [false, true] {
                        let pa = self.side(SideId { dir: a, upper: ea });
                        let pb = self.side(SideId { dir: b, upper: eb });
                        // in side a, direction b is a parameter; fix it at eb
                        let ca = side_edge_cps(pa, a, d, b, eb);
                        let cb = side_edge_cps(pb, b, d, a, ea);
                        if ca.len() != cb.len() {
                            return Err(GeometryError::Incompatible(format!(
                                "sides {a}/{b} have mismatched shared edge sizes"
                            )));
                        }
                        for (x, y) in ca.iter().zip(&cb) {
                            if (x - y).abs() > SHELL_TOL {
                                return Err(GeometryError::Incompatible(format!(
                                    "sides ({a},{}) and ({b},{}) disagree on their shared \
                                     edge by {:.3e}",
                                    ea as u8,
                                    eb as u8,
                                    (x - y).abs()
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Control points of the edge of side (fixed_dir, *) where volume direction
/// `clamp_dir` is clamped to its `clamp_upper` end. Flattened, ordered along
/// the remaining volume directions in increasing order.
fn side_edge_cps(
    side: &Patch,
    fixed_dir: usize,
    volume_dim: usize,
    clamp_dir: usize,
    clamp_upper: bool,
) -> Vec<f64> {
    let params: Vec<usize> = (0..volume_dim).filter(|&k| k != fixed_dir).collect();
    let pos = params
        .iter()
        .position(|&k| k == clamp_dir)
        .expect("clamp_dir is a parameter of this side");
    let sizes = side.basis().sizes();
    let fixed = if clamp_upper { sizes[pos] - 1 } else { 0 };
    let total = side.num_cps();
    let mut out = Vec::new();
    for lex in 0..total {
        let multi = side.basis().multi_index(lex);
        if multi[pos] == fixed {
            out.extend_from_slice(side.cp(lex));
        }
    }
    out
}

/// Construct the transfinite (Coons) patch interpolating a compatible
/// boundary shell. The blending is done at the control-point level with
/// Greville weights, so the boundary of the result equals the shell's sides
/// control point by control point.
pub fn coons_patch(shell: &BoundaryShell) -> Result<Patch, GeometryError> {
    match shell.dim() {
        2 => coons_2d(shell),
        3 => coons_3d(shell),
        d => Err(GeometryError::Incompatible(format!(
            "Coons patch requires dimension 2 or 3, got {d}"
        ))),
    }
}

fn coons_2d(shell: &BoundaryShell) -> Result<Patch, GeometryError> {
    let basis = shell.volume_basis();
    let dim = shell.dim_phys();
    let (n0, n1) = (basis.sizes()[0], basis.sizes()[1]);
    let g0 = basis.kv(0).greville();
    let g1 = basis.kv(1).greville();
    let left = shell.side(SideId {
        dir: 0,
        upper: false,
    });
    let right = shell.side(SideId {
        dir: 0,
        upper: true,
    });
    let bottom = shell.side(SideId {
        dir: 1,
        upper: false,
    });
    let top = shell.side(SideId { dir: 1, upper: true });
    let corner = |s0: bool, s1: bool| -> Vec<f64> {
        let side = if s1 { top } else { bottom };
        let i = if s0 { n0 - 1 } else { 0 };
        side.cp(i).to_vec()
    };
    let c00 = corner(false, false);
    let c10 = corner(true, false);
    let c01 = corner(false, true);
    let c11 = corner(true, true);
    let mut cps = vec![0.0; n0 * n1 * dim];
    for j in 0..n1 {
        for i in 0..n0 {
            let (a, b) = (g0[i], g1[j]);
            let out = &mut cps[(j * n0 + i) * dim..(j * n0 + i + 1) * dim];
            for c in 0..dim {
                out[c] = (1.0 - a) * left.cp(j)[c] + a * right.cp(j)[c]
                    + (1.0 - b) * bottom.cp(i)[c]
                    + b * top.cp(i)[c]
                    - ((1.0 - a) * (1.0 - b) * c00[c]
                        + a * (1.0 - b) * c10[c]
                        + (1.0 - a) * b * c01[c]
                        + a * b * c11[c]);
            }
        }
    }
    Patch::new(basis, cps, dim)
}

fn coons_3d(shell: &BoundaryShell) -> Result<Patch, GeometryError> {
    let basis = shell.volume_basis();
    let dim = shell.dim_phys();
    let sizes = basis.sizes();
    let grev: Vec<Vec<f64>> = (0..3).map(|d| basis.kv(d).greville()).collect();
    let weight = |d: usize, i: usize, upper: bool| -> f64 {
        if upper {
            grev[d][i]
        } else {
            1.0 - grev[d][i]
        }
    };
    // face lookup: face (dir, upper) has parameters = remaining dirs sorted
    let face_cp = |dir: usize, upper: bool, multi: &[usize; 3]| -> Vec<f64> {
        let side = shell.side(SideId { dir, upper });
        let params: Vec<usize> = (0..3).filter(|&k| k != dir).collect();
        let smulti = [multi[params[0]], multi[params[1]]];
        let lex = side.basis().lex_index(&smulti);
        side.cp(lex).to_vec()
    };
    let total: usize = sizes.iter().product();
    let mut cps = vec![0.0; total * dim];
    for lex in 0..total {
        let m3 = basis.multi_index(lex);
        let multi = [m3[0], m3[1], m3[2]];
        let out = &mut cps[lex * dim..(lex + 1) * dim];
        // + face blends
        for d in 0..3 {
            for upper in [false, true] {
                let w = weight(d, multi[d], upper);
                let mut clamped = multi;
                clamped[d] = if upper { sizes[d] - 1 } else { 0 };
                let f = face_cp(d, upper, &clamped);
                for c in 0..dim {
                    out[c] += w * f[c];
                }
            }
        }
        // - edge blends (each pair of clamped directions)
        for d1 in 0..3 {
            for d2 in d1 + 1..3 {
                for u1 in [false, true] {
                    for u2 in [false, true] {
                        let w = weight(d1, multi[d1], u1) * weight(d2, multi[d2], u2);
                        let mut clamped = multi;
                        clamped[d1] = if u1 { sizes[d1] - 1 } else { 0 };
                        clamped[d2] = if u2 { sizes[d2] - 1 } else { 0 };
                        let f = face_cp(d1, u1, &clamped);
                        for c in 0..dim {
                            out[c] -= w * f[c];
                        }
                    }
                }
            }
        }
        // + corner blend
        for u0 in [false, true] {
            for u1 in [false, true] {
                for u2 in [false, true] {
                    let w = weight(0, multi[0], u0)
                        * weight(1, multi[1], u1)
                        * weight(2, multi[2], u2);
                    let clamped = [
                        if u0 { sizes[0] - 1 } else { 0 },
                        if u1 { sizes[1] - 1 } else { 0 },
                        if u2 { sizes[2] - 1 } else { 0 },
                    ];
                    let f = face_cp(0, u0, &clamped);
                    for c in 0..dim {
                        out[c] += w * f[c];
                    }
                }
            }
        }
    }
    Patch::new(basis, cps, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample_domains;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_patch_eval() {
        let p = sample_domains::identity_square(2, 5);
        let y = p.eval(&[0.3, 0.7]).unwrap();
        assert_abs_diff_eq!(y[0], 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(y[1], 0.7, epsilon = 1e-14);
        // corner interpolation
        let y0 = p.eval(&[0.0, 0.0]).unwrap();
        assert_eq!(&y0[..], p.cp(0));
    }

    #[test]
    fn identity_patch_jacobian() {
        let p = sample_domains::identity_square(3, 6);
        for xi in [[0.0, 0.0], [0.4, 0.9], [1.0, 1.0]] {
            let s = p.jacobian(&xi).unwrap();
            assert_abs_diff_eq!(s.det, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scaled_patch_jacobian() {
        let mut p = sample_domains::identity_square(2, 4);
        for v in p.cps_mut() {
            *v *= 2.0;
        }
        let s = p.jacobian(&[0.3, 0.3]).unwrap();
        assert_abs_diff_eq!(s.det, 4.0, epsilon = 1e-12);
        let (m, r) = p.quality(4).unwrap();
        assert_abs_diff_eq!(m, 4.0, epsilon = 1e-11);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn fold_fixture_detected() {
        let p = sample_domains::folded_square();
        // dense sampling locates the fold
        let (m, r) = p.quality(13).unwrap();
        assert!(m < 0.0, "fold fixture must have negative det, got {m}");
        assert!(r.is_infinite());
        for strategy in [
            BijectivityStrategy::GaussSampling,
            BijectivityStrategy::CoefficientTest,
        ] {
            let rep = p.check_bijective(strategy, 0.0).unwrap();
            assert!(!rep.bijective);
        }
    }

    #[test]
    fn identity_bijective_both_strategies() {
        let p = sample_domains::identity_square(2, 5);
        for strategy in [
            BijectivityStrategy::GaussSampling,
            BijectivityStrategy::CoefficientTest,
        ] {
            let rep = p.check_bijective(strategy, 0.0).unwrap();
            assert!(rep.bijective);
        }
    }

    #[test]
    fn coefficient_test_is_conservative() {
        // pull one interior control point near the boundary: dense sampling
        // stays positive while the sufficient coefficient test flips
        let mut p = sample_domains::identity_square(2, 4);
        let basis = p.basis().clone();
        let lex = basis.lex_index(&[1, 1]);
        p.cps_mut()[lex * 2] = -0.12;
        p.cps_mut()[lex * 2 + 1] = -0.12;
        let mut min = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let xi = [i as f64 / 200.0, j as f64 / 200.0];
                min = min.min(p.jacobian(&xi).unwrap().det);
            }
        }
        assert!(min > 0.0, "dense 200x200 sampling must stay positive: {min}");
        let coeff = p
            .check_bijective(BijectivityStrategy::CoefficientTest, 0.0)
            .unwrap();
        let gauss = p
            .check_bijective(BijectivityStrategy::GaussSampling, 0.0)
            .unwrap();
        assert!(gauss.bijective);
        assert!(
            !coeff.bijective,
            "fixture chosen so the sufficient test reports a false negative"
        );
    }

    #[test]
    fn coons_reproduces_bilinear_square() {
        let shell = sample_domains::identity_square(1, 2).boundary();
        let p = coons_patch(&shell).unwrap();
        let q = sample_domains::identity_square(1, 2);
        for (a, b) in p.cps().iter().zip(q.cps()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn coons_parallelogram_affine() {
        // shear the unit square: blend of linear data stays affine
        let mut sq = sample_domains::identity_square(2, 5);
        let cps = sq.cps_mut();
        for k in 0..cps.len() / 2 {
            cps[2 * k] += 0.5 * cps[2 * k + 1];
        }
        let p = coons_patch(&sq.boundary()).unwrap();
        let det0 = p.jacobian(&[0.0, 0.0]).unwrap().det;
        for xi in [[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]] {
            assert_abs_diff_eq!(p.jacobian(&xi).unwrap().det, det0, epsilon = 1e-13);
        }
    }

    #[test]
    fn coons_boundary_interpolation_exact() {
        let shell = sample_domains::puzzle_shell_2d();
        let p = coons_patch(&shell).unwrap();
        for id in SideId::all(2) {
            let side = p.side(id);
            let orig = shell.side(id);
            for (a, b) in side.cps().iter().zip(orig.cps()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn coons_convex_quad_bijective() {
        // convex corner quad of a non-convex fixture
        let quad = sample_domains::convex_quad();
        let p = coons_patch(&quad.boundary()).unwrap();
        let (m, _) = p.quality(6).unwrap();
        assert!(m > 0.0);
    }

    #[test]
    fn coons_3d_identity_cube() {
        let cube = sample_domains::identity_cube(2, 4);
        let p = coons_patch(&cube.boundary()).unwrap();
        for (a, b) in p.cps().iter().zip(cube.cps()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn quality_translation_and_scaling() {
        let p = sample_domains::wavy_square();
        let (m, r) = p.quality(5).unwrap();
        let mut moved = p.clone();
        for (k, v) in moved.cps_mut().iter_mut().enumerate() {
            *v += if k % 2 == 0 { 3.0 } else { -1.5 };
        }
        let (m2, r2) = moved.quality(5).unwrap();
        assert_abs_diff_eq!(m, m2, epsilon = 1e-11);
        assert_abs_diff_eq!(r, r2, epsilon = 1e-9);
        let mut scaled = p.clone();
        for v in scaled.cps_mut() {
            *v *= 2.0;
        }
        let (m3, r3) = scaled.quality(5).unwrap();
        assert_abs_diff_eq!(m3, 4.0 * m, epsilon = 1e-10);
        assert_abs_diff_eq!(r3, r, epsilon = 1e-9);
    }

    #[test]
    fn incompatible_shell_rejected() {
        let p = sample_domains::identity_square(2, 5);
        let mut sides: Vec<Patch> = SideId::all(2).into_iter().map(|id| p.side(id)).collect();
        // break a corner
        sides[0].cps_mut()[0] += 0.1;
        assert!(matches!(
            BoundaryShell::new(2, sides),
            Err(GeometryError::Incompatible(_))
        ));
    }

    #[test]
    fn dimension_error_on_curve_jacobian() {
        let p = sample_domains::identity_square(1, 3).side(SideId {
            dir: 0,
            upper: false,
        });
        assert!(matches!(
            p.jacobian(&[0.5]),
            Err(GeometryError::NotVolumetric { .. })
        ));
    }
}
