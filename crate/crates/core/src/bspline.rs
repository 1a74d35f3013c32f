//! Clamped B-spline bases: evaluation with derivatives, refinement between
//! nested spaces, and Gauss-Legendre quadrature.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BsplineError {
    #[error("knot vector must be non-decreasing at position {0}")]
    DecreasingKnots(usize),
    #[error("knot vector must be clamped: first/last {0} knots must repeat")]
    NotClamped(usize),
    #[error("knot vector must span [0,1], got [{0}, {1}]")]
    BadRange(f64, f64),
    #[error("need at least {needed} knots for degree {degree}, got {got}")]
    TooFewKnots {
        degree: usize,
        needed: usize,
        got: usize,
    },
    #[error("parameter {0} outside [0,1]")]
    OutOfDomain(f64),
    #[error("quadrature rule needs at least one point")]
    EmptyRule,
    #[error("target space does not contain the source space: {0}")]
    NotNested(String),
    #[error("coefficient count {got} does not match basis size {expected}")]
    CoeffMismatch { got: usize, expected: usize },
}

/// Tolerance used when matching breakpoints of two knot vectors.
const KNOT_EQ_TOL: f64 = 1e-12;

/// A clamped (open) knot vector on [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self, BsplineError> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(BsplineError::TooFewKnots {
                degree: p,
                needed: 2 * (p + 1),
                got: knots.len(),
            });
        }
        for i in 1..knots.len() {
            if knots[i] < knots[i - 1] {
                return Err(BsplineError::DecreasingKnots(i));
            }
        }
        let first = knots[0];
        let last = *knots.last().unwrap();
        if first != 0.0 || last != 1.0 {
            return Err(BsplineError::BadRange(first, last));
        }
        if knots[p] != first || knots[knots.len() - 1 - p] != last {
            return Err(BsplineError::NotClamped(p + 1));
        }
        Ok(Self { degree: p, knots })
    }

    /// The coarsest clamped basis of the given degree and size: `num_basis`
    /// functions with uniformly spaced interior knots of multiplicity one.
    pub fn uniform_open(degree: usize, num_basis: usize) -> Result<Self, BsplineError> {
        let p = degree;
        if num_basis < p + 1 {
            return Err(BsplineError::TooFewKnots {
                degree: p,
                needed: 2 * (p + 1),
                got: num_basis + p + 1,
            });
        }
        let n_interior = num_basis - p - 1;
        let mut knots = vec![0.0; p + 1];
        for i in 1..=n_interior {
            knots.push(i as f64 / (n_interior + 1) as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(p + 1));
        Self::new(p, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Interior breakpoints with multiplicities, excluding 0 and 1.
    pub fn interior_breakpoints(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &k in &self.knots {
            if k <= 0.0 || k >= 1.0 {
                continue;
            }
            match out.last_mut() {
                Some((b, m)) if (k - *b).abs() <= KNOT_EQ_TOL => *m += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }

    /// Non-empty knot spans as (start, end) pairs.
    pub fn spans(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in self.degree..self.num_basis() {
            if self.knots[i + 1] > self.knots[i] {
                out.push((self.knots[i], self.knots[i + 1]));
            }
        }
        out
    }

    /// Index of the span containing `xi`; xi = 1 resolves to the last
    /// non-empty span (left-limit convention).
    pub fn find_span(&self, xi: f64) -> Result<usize, BsplineError> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(BsplineError::OutOfDomain(xi));
        }
        let n = self.num_basis();
        if xi >= self.knots[n] {
            // last non-empty span
            let mut i = n - 1;
            while self.knots[i + 1] <= self.knots[i] {
                i -= 1;
            }
            return Ok(i);
        }
        let mut lo = self.degree;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if xi < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Values and derivatives of the p+1 basis functions that are non-zero
    /// at `xi` (Cox-de Boor recursion).
    ///
    /// Returns the index of the first non-vanishing function and a table
    /// whose row k holds the k-th derivatives; rows beyond the degree are
    /// zero.
    pub fn eval_basis(
        &self,
        xi: f64,
        deriv_order: usize,
    ) -> Result<(usize, Vec<Vec<f64>>), BsplineError> {
        let span = self.find_span(xi)?;
        let p = self.degree;
        let u = &self.knots;
        let n = deriv_order.min(p);

        // Knot-difference table (NURBS-book style), extended with basis
        // values on the diagonal.
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        ndu[0][0] = 1.0;
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        for j in 1..=p {
            left[j] = xi - u[span + 1 - j];
            right[j] = u[span + j] - xi;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; deriv_order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }

        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    a[s2][j] =
                        (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = 1.0;
        for k in 1..=n {
            factor *= (p - k + 1) as f64;
            for j in 0..=p {
                ders[k][j] *= factor;
            }
        }
        Ok((span - p, ders))
    }

    /// Greville abscissae.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis())
            .map(|i| self.knots[i + 1..i + 1 + p].iter().sum::<f64>() / p.max(1) as f64)
            .collect()
    }

    /// Does the spline space of `self` contain the spline space of `other`?
    pub fn contains_space(&self, other: &KnotVector) -> bool {
        if self.degree < other.degree {
            return false;
        }
        let shift = self.degree - other.degree;
        let mine = self.interior_breakpoints();
        for (b, m) in other.interior_breakpoints() {
            let found = mine
                .iter()
                .find(|(b2, _)| (b2 - b).abs() <= KNOT_EQ_TOL)
                .map(|(_, m2)| *m2)
                .unwrap_or(0);
            if found < m + shift {
                return false;
            }
        }
        true
    }
}

/// Evaluate a spline with `dim`-component coefficients at `xi`.
pub fn eval_spline(
    kv: &KnotVector,
    coeffs: &[f64],
    dim: usize,
    xi: f64,
) -> Result<Vec<f64>, BsplineError> {
    let n = kv.num_basis();
    if coeffs.len() != n * dim {
        return Err(BsplineError::CoeffMismatch {
            got: coeffs.len(),
            expected: n * dim,
        });
    }
    let (first, table) = kv.eval_basis(xi, 0)?;
    let mut out = vec![0.0; dim];
    for (j, &b) in table[0].iter().enumerate() {
        let i = first + j;
        for c in 0..dim {
            out[c] += b * coeffs[i * dim + c];
        }
    }
    Ok(out)
}

/// Re-express spline coefficients on a containing (nested) target space.
///
/// The represented function is unchanged: coefficients are recovered by
/// collocation at the Greville abscissae of the target basis, which is exact
/// for any function already lying in the target space.
pub fn refine_to(
    source: &KnotVector,
    coeffs: &[f64],
    dim: usize,
    target: &KnotVector,
) -> Result<Vec<f64>, BsplineError> {
    let n_src = source.num_basis();
    if coeffs.len() != n_src * dim {
        return Err(BsplineError::CoeffMismatch {
            got: coeffs.len(),
            expected: n_src * dim,
        });
    }
    if source == target {
        return Ok(coeffs.to_vec());
    }
    if !target.contains_space(source) {
        return Err(BsplineError::NotNested(format!(
            "degree {} knots {:?} not contained in degree {} knots {:?}",
            source.degree,
            source.knots,
            target.degree,
            target.knots
        )));
    }
    let n = target.num_basis();
    let grev = target.greville();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, dim);
    for (row, &g) in grev.iter().enumerate() {
        let (first, table) = target.eval_basis(g, 0)?;
        for (j, &b) in table[0].iter().enumerate() {
            a[(row, first + j)] = b;
        }
        let val = eval_spline(source, coeffs, dim, g)?;
        for c in 0..dim {
            rhs[(row, c)] = val[c];
        }
    }
    let lu = a.lu();
    let mut out = vec![0.0; n * dim];
    for c in 0..dim {
        let col = DVector::from_iterator(n, (0..n).map(|r| rhs[(r, c)]));
        let x = lu
            .solve(&col)
            .ok_or_else(|| BsplineError::NotNested("singular collocation matrix".into()))?;
        for i in 0..n {
            out[i * dim + c] = x[i];
        }
    }
    Ok(out)
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes and weights mapped to the interval [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

/// Gauss-Legendre rule with `n` points, exact for polynomials of degree
/// 2n-1. Nodes are the roots of the Legendre polynomial P_n, found by
/// Newton iteration on the three-term recurrence.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule, BsplineError> {
    if n == 0 {
        return Err(BsplineError::EmptyRule);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    Ok(QuadratureRule { nodes, weights })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Basis functions active at a point of a tensor-product basis.
#[derive(Debug, Clone)]
pub struct ActiveBasis {
    /// Global lexicographic indices of the active functions.
    pub indices: Vec<usize>,
    /// Basis values, same order as `indices`.
    pub values: Vec<f64>,
    /// Parametric gradients, `dim` entries per active function.
    pub grads: Vec<f64>,
}

/// Tensor product of up to three univariate clamped bases. The first
/// parametric direction runs fastest in lexicographic numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBasis {
    kvs: Vec<KnotVector>,
}

impl TensorBasis {
    pub fn new(kvs: Vec<KnotVector>) -> Self {
        assert!(!kvs.is_empty() && kvs.len() <= 3, "1 to 3 directions");
        Self { kvs }
    }

    pub fn dim(&self) -> usize {
        self.kvs.len()
    }

    pub fn kv(&self, dir: usize) -> &KnotVector {
        &self.kvs[dir]
    }

    pub fn kvs(&self) -> &[KnotVector] {
        &self.kvs
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.kvs.iter().map(|k| k.num_basis()).collect()
    }

    pub fn num_basis(&self) -> usize {
        self.kvs.iter().map(|k| k.num_basis()).product()
    }

    pub fn lex_index(&self, multi: &[usize]) -> usize {
        let sizes = self.sizes();
        let mut idx = 0;
        for d in (0..multi.len()).rev() {
            idx = idx * sizes[d] + multi[d];
        }
        idx
    }

    pub fn multi_index(&self, lex: usize) -> Vec<usize> {
        let sizes = self.sizes();
        let mut rest = lex;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in &sizes {
            out.push(rest % s);
            rest /= s;
        }
        out
    }

    /// Is the lexicographic index on the boundary of the index lattice?
    pub fn is_boundary_index(&self, lex: usize) -> bool {
        let sizes = self.sizes();
        self.multi_index(lex)
            .iter()
            .zip(&sizes)
            .any(|(&i, &s)| i == 0 || i + 1 == s)
    }

    /// Evaluate the active basis functions at `xi` with values and, if
    /// requested, first parametric derivatives.
    pub fn eval(&self, xi: &[f64], with_grads: bool) -> Result<ActiveBasis, BsplineError> {
        assert_eq!(xi.len(), self.dim());
        let d = self.dim();
        let order = if with_grads { 1 } else { 0 };
        let mut firsts = Vec::with_capacity(d);
        let mut tables = Vec::with_capacity(d);
        for dir in 0..d {
            let (f, t) = self.kvs[dir].eval_basis(xi[dir], order)?;
            firsts.push(f);
            tables.push(t);
        }
        let counts: Vec<usize> = self.kvs.iter().map(|k| k.degree() + 1).collect();
        let total: usize = counts.iter().product();
        let mut out = ActiveBasis {
            indices: Vec::with_capacity(total),
            values: Vec::with_capacity(total),
            grads: if with_grads {
                Vec::with_capacity(total * d)
            } else {
                Vec::new()
            },
        };
        let mut multi = vec![0usize; d];
        for _ in 0..total {
            let mut value = 1.0;
            for dir in 0..d {
                value *= tables[dir][0][multi[dir]];
            }
            let glob: Vec<usize> = (0..d).map(|dir| firsts[dir] + multi[dir]).collect();
            out.indices.push(self.lex_index(&glob));
            out.values.push(value);
            if with_grads {
                for g in 0..d {
                    let mut gv = 1.0;
                    for dir in 0..d {
                        let row = if dir == g { 1 } else { 0 };
                        gv *= tables[dir][row][multi[dir]];
                    }
                    out.grads.push(gv);
                }
            }
            // advance multi-index, first direction fastest
            for dir in 0..d {
                multi[dir] += 1;
                if multi[dir] < counts[dir] {
                    break;
                }
                multi[dir] = 0;
            }
        }
        Ok(out)
    }

    /// Cartesian product of non-empty knot spans: each element is a list of
    /// per-direction parametric intervals.
    pub fn elements(&self) -> Vec<Vec<(f64, f64)>> {
        let per_dir: Vec<Vec<(f64, f64)>> = self.kvs.iter().map(|k| k.spans()).collect();
        let mut out: Vec<Vec<(f64, f64)>> = vec![vec![]];
        for spans in &per_dir {
            let mut next = Vec::with_capacity(out.len() * spans.len());
            for &s in spans {
                for base in &out {
                    let mut e = base.clone();
                    e.push(s);
                    next.push(e);
                }
            }
            // keep first direction fastest
            out = Vec::with_capacity(next.len());
            out.extend(next);
        }
        out
    }

    /// Tensor Greville points, lexicographic order.
    pub fn greville(&self) -> Vec<Vec<f64>> {
        let per_dir: Vec<Vec<f64>> = self.kvs.iter().map(|k| k.greville()).collect();
        let sizes = self.sizes();
        let total: usize = sizes.iter().product();
        (0..total)
            .map(|lex| {
                let multi = self.multi_index(lex);
                multi
                    .iter()
                    .enumerate()
                    .map(|(d, &i)| per_dir[d][i])
                    .collect()
            })
            .collect()
    }
}
