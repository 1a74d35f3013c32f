//! Plain-text geometry files, VTK legacy export and SVG isoline sketches.
//!
//! The geometry format is line based. A volumetric patch:
//!
//! ```text
//! patch <dim_par> <dim_phys>
//! knots <dir> <degree> <knot values...>
//! cps <count>
//! <dim_phys floats per line>
//! ```
//!
//! A boundary shell holds `2 * dim` sides, each introduced by
//! `side <dir><min|max>` followed by the same knots/cps blocks. Floats are
//! written with 17 significant digits, so a write/read round trip is exact.

use crate::bspline::{BsplineError, KnotVector, TensorBasis};
use crate::geometry::{BoundaryShell, GeometryError, Patch, SideId};
use std::fmt::Write as _;
use std::io::{BufRead, Read as _, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bspline(#[from] BsplineError),
}

#[derive(Debug, Clone)]
pub enum Geometry {
    Patch(Patch),
    Shell(BoundaryShell),
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_basis_and_cps(out: &mut String, patch: &Patch) {
    for (dir, kv) in patch.basis().kvs().iter().enumerate() {
        write!(out, "knots {dir} {}", kv.degree()).unwrap();
        for k in kv.knots() {
            write!(out, " {}", fmt_f64(*k)).unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "cps {}", patch.num_cps()).unwrap();
    for lex in 0..patch.num_cps() {
        let cp = patch.cp(lex);
        let line: Vec<String> = cp.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
}

pub fn write_patch(w: &mut impl Write, patch: &Patch) -> Result<(), IoError> {
    let mut out = String::new();
    writeln!(out, "patch {} {}", patch.dim_par(), patch.dim_phys()).unwrap();
    write_basis_and_cps(&mut out, patch);
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_shell(w: &mut impl Write, shell: &BoundaryShell) -> Result<(), IoError> {
    let mut out = String::new();
    writeln!(out, "shell {} {}", shell.dim(), shell.dim_phys()).unwrap();
    for id in SideId::all(shell.dim()) {
        writeln!(out, "side {id}").unwrap();
        write_basis_and_cps(&mut out, shell.side(id));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_geometry(w: &mut impl Write, geometry: &Geometry) -> Result<(), IoError> {
    match geometry {
        Geometry::Patch(p) => write_patch(w, p),
        Geometry::Shell(s) => write_shell(w, s),
    }
}

/// Write a geometry file atomically: the target path either keeps its old
/// content or receives the complete new one.
pub fn save_geometry(path: &Path, geometry: &Geometry) -> Result<(), IoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        write_geometry(&mut f, geometry)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            iter: text.lines().enumerate(),
        }
    }

    /// next non-empty, non-comment line with its 1-based number
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.iter.by_ref() {
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((i + 1, t));
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str), IoError> {
        self.next().ok_or_else(|| IoError::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_usize(line: usize, tok: &str, what: &str) -> Result<usize, IoError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))
}

fn parse_f64(line: usize, tok: &str) -> Result<f64, IoError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid number `{tok}`")))
}

fn parse_basis_and_cps(
    lines: &mut Lines,
    dim_par: usize,
    dim_phys: usize,
) -> Result<Patch, IoError> {
    let mut kvs: Vec<Option<KnotVector>> = vec![None; dim_par];
    for _ in 0..dim_par {
        let (ln, l) = lines.expect("a `knots` line")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 4 || toks[0] != "knots" {
            return Err(parse_err(ln, "expected `knots <dir> <degree> <values...>`"));
        }
        let dir = parse_usize(ln, toks[1], "direction")?;
        if dir >= dim_par {
            return Err(parse_err(ln, format!("direction {dir} out of range")));
        }
        if kvs[dir].is_some() {
            return Err(parse_err(ln, format!("duplicate knots for direction {dir}")));
        }
        let degree = parse_usize(ln, toks[2], "degree")?;
        let knots: Vec<f64> = toks[3..]
            .iter()
            .map(|t| parse_f64(ln, t))
            .collect::<Result<_, _>>()?;
        let kv = KnotVector::new(degree, knots).map_err(|e| parse_err(ln, e.to_string()))?;
        kvs[dir] = Some(kv);
    }
    let basis = TensorBasis::new(kvs.into_iter().map(|k| k.unwrap()).collect());
    let (ln, l) = lines.expect("a `cps` line")?;
    let toks: Vec<&str> = l.split_whitespace().collect();
    if toks.len() != 2 || toks[0] != "cps" {
        return Err(parse_err(ln, "expected `cps <count>`"));
    }
    let count = parse_usize(ln, toks[1], "control point count")?;
    if count != basis.num_basis() {
        return Err(parse_err(
            ln,
            format!(
                "control point count {count} does not match the basis ({})",
                basis.num_basis()
            ),
        ));
    }
    let mut cps = Vec::with_capacity(count * dim_phys);
    for _ in 0..count {
        let (ln, l) = lines.expect("a control point line")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != dim_phys {
            return Err(parse_err(
                ln,
                format!("expected {dim_phys} coordinates, got {}", toks.len()),
            ));
        }
        for t in toks {
            cps.push(parse_f64(ln, t)?);
        }
    }
    Patch::new(basis, cps, dim_phys).map_err(IoError::Geometry)
}

pub fn parse_geometry(text: &str) -> Result<Geometry, IoError> {
    let mut lines = Lines::new(text);
    let (ln, header) = lines.expect("a `patch` or `shell` header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(parse_err(ln, "expected `patch|shell <dim_par> <dim_phys>`"));
    }
    let dim_par = parse_usize(ln, toks[1], "parametric dimension")?;
    let dim_phys = parse_usize(ln, toks[2], "physical dimension")?;
    match toks[0] {
        "patch" => Ok(Geometry::Patch(parse_basis_and_cps(
            &mut lines, dim_par, dim_phys,
        )?)),
        "shell" => {
            let expected: Vec<String> = SideId::all(dim_par)
                .into_iter()
                .map(|id| id.to_string())
                .collect();
            let mut sides = Vec::with_capacity(expected.len());
            for name in &expected {
                let (ln, l) = lines.expect("a `side` line")?;
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() != 2 || toks[0] != "side" {
                    return Err(parse_err(ln, "expected `side <dir><min|max>`"));
                }
                if toks[1] != name {
                    return Err(parse_err(
                        ln,
                        format!("expected side `{name}` here, got `{}`", toks[1]),
                    ));
                }
                sides.push(parse_basis_and_cps(&mut lines, dim_par - 1, dim_phys)?);
            }
            Ok(Geometry::Shell(
                BoundaryShell::new(dim_par, sides).map_err(IoError::Geometry)?,
            ))
        }
        other => Err(parse_err(ln, format!("unknown geometry kind `{other}`"))),
    }
}

pub fn load_geometry(path: &Path) -> Result<Geometry, IoError> {
    let mut text = String::new();
    std::io::BufReader::new(std::fs::File::open(path)?).read_to_string(&mut text)?;
    parse_geometry(&text)
}

/// Legacy-format VTK structured grid of the patch image, with det J as
/// point data. `samples_per_span` controls the grid density.
pub fn write_vtk(
    w: &mut impl Write,
    patch: &Patch,
    samples_per_span: usize,
) -> Result<(), IoError> {
    let d = patch.dim_par();
    let per_dir: Vec<Vec<f64>> = (0..d)
        .map(|dir| sample_axis(patch.basis().kv(dir), samples_per_span))
        .collect();
    let dims: Vec<usize> = per_dir.iter().map(|v| v.len()).collect();
    let total: usize = dims.iter().product();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("spline parametrization\n");
    out.push_str("ASCII\nDATASET STRUCTURED_GRID\n");
    writeln!(
        out,
        "DIMENSIONS {} {} {}",
        dims[0],
        dims.get(1).copied().unwrap_or(1),
        dims.get(2).copied().unwrap_or(1)
    )
    .unwrap();
    writeln!(out, "POINTS {total} double").unwrap();
    let mut dets = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let xi: Vec<f64> = (0..d).map(|k| per_dir[k][idx[k]]).collect();
        let x = patch.eval(&xi)?;
        let s = patch.jacobian(&xi)?;
        dets.push(s.det);
        writeln!(
            out,
            "{} {} {}",
            x[0],
            x.get(1).copied().unwrap_or(0.0),
            x.get(2).copied().unwrap_or(0.0)
        )
        .unwrap();
        for k in 0..d {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    writeln!(out, "POINT_DATA {total}").unwrap();
    out.push_str("SCALARS det_jacobian double 1\nLOOKUP_TABLE default\n");
    for det in dets {
        writeln!(out, "{det}").unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

fn sample_axis(kv: &KnotVector, per_span: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for (a, b) in kv.spans() {
        let n = per_span.max(2);
        for k in 0..n {
            let x = a + (b - a) * k as f64 / (n - 1) as f64;
            if out.last().map_or(true, |&l: &f64| x > l + 1e-15) {
                out.push(x);
            }
        }
    }
    out
}

/// SVG sketch of a planar patch: boundary plus parametric isolines,
/// sampled densely enough that the chord error stays below about 1e-3 of
/// the bounding-box diameter.
pub fn write_svg(w: &mut impl Write, patch: &Patch, isolines: usize) -> Result<(), IoError> {
    if patch.dim_par() != 2 || patch.dim_phys() != 2 {
        return Err(IoError::Geometry(GeometryError::NotVolumetric {
            par: patch.dim_par(),
            phys: patch.dim_phys(),
        }));
    }
    let max_span_count = patch
        .basis()
        .kvs()
        .iter()
        .map(|kv| kv.spans().len())
        .max()
        .unwrap();
    // dense uniform sampling: with s samples per span of a degree-p curve
    // the chord deviation scales like (1/s)^2; 48 is comfortably below 1e-3
    let samples = 48 * max_span_count;
    let mut polylines: Vec<Vec<[f64; 2]>> = Vec::new();
    for dir in 0..2 {
        let mut levels: Vec<f64> = (0..=isolines + 1)
            .map(|k| k as f64 / (isolines + 1) as f64)
            .collect();
        // make sure the boundary is always drawn
        levels[0] = 0.0;
        *levels.last_mut().unwrap() = 1.0;
        for level in levels {
            let mut line = Vec::with_capacity(samples + 1);
            for k in 0..=samples {
                let t = k as f64 / samples as f64;
                let xi = if dir == 0 { [level, t] } else { [t, level] };
                let x = patch.eval(&xi)?;
                line.push([x[0], x[1]]);
            }
            polylines.push(line);
        }
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for line in &polylines {
        for p in line {
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let margin = 0.05 * span;
    let stroke = 0.004 * span;
    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">",
        lo[0] - margin,
        -(hi[1] + margin),
        hi[0] - lo[0] + 2.0 * margin,
        hi[1] - lo[1] + 2.0 * margin
    )
    .unwrap();
    for line in &polylines {
        out.push_str("<polyline fill=\"none\" stroke=\"black\" stroke-width=\"");
        write!(out, "{stroke}").unwrap();
        out.push_str("\" points=\"");
        for p in line {
            // flip y so the svg is not mirrored
            write!(out, "{},{} ", p[0], -p[1]).unwrap();
        }
        out.push_str("\"/>\n");
    }
    out.push_str("</svg>\n");
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_geometry(r: &mut impl BufRead) -> Result<Geometry, IoError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    parse_geometry(&text)
}
