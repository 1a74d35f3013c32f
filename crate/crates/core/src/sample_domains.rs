//! Programmatic sample geometries shared by tests, benchmarks and the
//! command-line examples.

use crate::bspline::{KnotVector, TensorBasis};
use crate::geometry::{BoundaryShell, Patch, SideId};
use crate::multipatch::{Interface, Orientation, PatchTopology};

fn open_kv(degree: usize, num_basis: usize) -> KnotVector {
    KnotVector::uniform_open(degree, num_basis).expect("valid sample basis")
}

/// Identity map of the unit square: control points at the Greville grid.
pub fn identity_square(degree: usize, num_basis: usize) -> Patch {
    let kv = open_kv(degree, num_basis);
    let g = kv.greville();
    let mut cps = Vec::with_capacity(g.len() * g.len() * 2);
    for &y in &g {
        for &x in &g {
            cps.extend_from_slice(&[x, y]);
        }
    }
    Patch::new(TensorBasis::new(vec![kv.clone(), kv]), cps, 2).unwrap()
}

/// Identity map of the unit cube.
pub fn identity_cube(degree: usize, num_basis: usize) -> Patch {
    let kv = open_kv(degree, num_basis);
    let g = kv.greville();
    let mut cps = Vec::with_capacity(g.len().pow(3) * 3);
    for &z in &g {
        for &y in &g {
            for &x in &g {
                cps.extend_from_slice(&[x, y, z]);
            }
        }
    }
    Patch::new(TensorBasis::new(vec![kv.clone(), kv.clone(), kv]), cps, 3).unwrap()
}

/// A folded square: the two rightmost control columns are pushed back to
/// the left, so det J changes sign inside the domain.
pub fn folded_square() -> Patch {
    let mut p = identity_square(2, 5);
    let folded_x = [0.0, 0.25, 0.5, 0.1, 0.0];
    let cps = p.cps_mut();
    for j in 0..5 {
        for i in 0..5 {
            cps[(j * 5 + i) * 2] = folded_x[i];
        }
    }
    p
}

/// A bijective bilinear map onto a non-rectangular convex quadrilateral.
pub fn convex_quad() -> Patch {
    let kv = open_kv(1, 2);
    let cps = vec![0.0, 0.0, 1.3, 0.2, 0.2, 1.0, 1.1, 1.2];
    Patch::new(TensorBasis::new(vec![kv.clone(), kv]), cps, 2).unwrap()
}

/// A curved but clearly bijective deformation of the unit square.
pub fn wavy_square() -> Patch {
    let mut p = identity_square(2, 6);
    let kv = open_kv(2, 6);
    let g = kv.greville();
    let cps = p.cps_mut();
    for (j, &y) in g.iter().enumerate() {
        for (i, &x) in g.iter().enumerate() {
            let k = (j * g.len() + i) * 2;
            let s = (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
            cps[k] += 0.06 * s;
            cps[k + 1] -= 0.05 * s;
        }
    }
    p
}

fn curve_from_cps(kv: &KnotVector, pts: &[[f64; 2]]) -> Patch {
    let cps: Vec<f64> = pts.iter().flatten().copied().collect();
    Patch::new(TensorBasis::new(vec![kv.clone()]), cps, 2).unwrap()
}

fn straight_curve(kv: &KnotVector, from: [f64; 2], to: [f64; 2]) -> Patch {
    let pts: Vec<[f64; 2]> = kv
        .greville()
        .iter()
        .map(|&t| {
            [
                (1.0 - t) * from[0] + t * to[0],
                (1.0 - t) * from[1] + t * to[1],
            ]
        })
        .collect();
    curve_from_cps(kv, &pts)
}

/// Boundary of a unit square with a mushroom-shaped protrusion growing
/// from the bottom side into the domain: the prototypical boundary whose
/// plain transfinite interpolation folds.
pub fn puzzle_shell_2d() -> BoundaryShell {
    let kv = open_kv(3, 8);
    let bottom = curve_from_cps(
        &kv,
        &[
            [0.0, 0.0],
            [0.35, 0.0],
            [0.45, 0.45],
            [0.1, 0.75],
            [0.9, 0.75],
            [0.55, 0.45],
            [0.65, 0.0],
            [1.0, 0.0],
        ],
    );
    let top = straight_curve(&kv, [0.0, 1.0], [1.0, 1.0]);
    let left = straight_curve(&kv, [0.0, 0.0], [0.0, 1.0]);
    let right = straight_curve(&kv, [1.0, 0.0], [1.0, 1.0]);
    // canonical side order: dir-major, min before max
    BoundaryShell::new(2, vec![left, right, bottom, top]).unwrap()
}

/// A mildly concave boundary: a smooth bump on the bottom side. The plain
/// transfinite interpolation of this shell is still bijective, which makes
/// it a good target for convergence studies.
pub fn concave_shell_2d() -> BoundaryShell {
    let kv = open_kv(2, 6);
    let g = kv.greville();
    let bump = [0.0, 0.0, 0.5, 0.5, 0.0, 0.0];
    let bottom_pts: Vec<[f64; 2]> = g.iter().zip(&bump).map(|(&x, &b)| [x, b]).collect();
    let bottom = curve_from_cps(&kv, &bottom_pts);
    let top = straight_curve(&kv, [0.0, 1.0], [1.0, 1.0]);
    let left = straight_curve(&kv, [0.0, 0.0], [0.0, 1.0]);
    let right = straight_curve(&kv, [1.0, 0.0], [1.0, 1.0]);
    BoundaryShell::new(2, vec![left, right, bottom, top]).unwrap()
}

/// Straight-sided shell with the same bases and corners as the given one:
/// every side is replaced by the segment between its end control points.
pub fn square_shell_like(shell: &BoundaryShell) -> BoundaryShell {
    let sides: Vec<Patch> = shell
        .sides()
        .iter()
        .map(|s| {
            let kv = s.basis().kv(0).clone();
            let n = s.num_cps();
            let from = [s.cp(0)[0], s.cp(0)[1]];
            let to = [s.cp(n - 1)[0], s.cp(n - 1)[1]];
            straight_curve(&kv, from, to)
        })
        .collect();
    BoundaryShell::new(shell.dim(), sides).unwrap()
}

/// A curved surface side of a 3D shell, with curved edges.
pub fn wavy_surface_side() -> Patch {
    let kv = open_kv(2, 5);
    let g = kv.greville();
    let pi = std::f64::consts::PI;
    let mut cps = Vec::with_capacity(g.len() * g.len() * 3);
    for &v in &g {
        for &u in &g {
            cps.extend_from_slice(&[
                u,
                v + 0.1 * (pi * u).sin(),
                0.15 * (pi * u).sin() + 0.1 * (pi * v).sin(),
            ]);
        }
    }
    Patch::new(TensorBasis::new(vec![kv.clone(), kv]), cps, 3).unwrap()
}

/// The unit square split into two patches at x = 0.5, plus the equivalent
/// single patch on the merged (C0 at 0.5) knot vector.
pub fn two_patch_strip(degree: usize, num_basis: usize) -> (PatchTopology, Patch) {
    let kv = open_kv(degree, num_basis);
    let g = kv.greville();
    let make = |x0: f64| {
        let mut cps = Vec::new();
        for &y in &g {
            for &x in &g {
                cps.extend_from_slice(&[x0 + 0.5 * x, y]);
            }
        }
        Patch::new(TensorBasis::new(vec![kv.clone(), kv.clone()]), cps, 2).unwrap()
    };
    let topo = PatchTopology::new(
        vec![make(0.0), make(0.5)],
        vec![Interface {
            patch_a: 0,
            side_a: SideId {
                dir: 0,
                upper: true,
            },
            patch_b: 1,
            side_b: SideId {
                dir: 0,
                upper: false,
            },
            orientation: Orientation::aligned(),
        }],
    )
    .unwrap();

    // merged x knot vector, C0 at 0.5
    let p = degree;
    let interior: Vec<f64> = kv
        .interior_breakpoints()
        .into_iter()
        .map(|(b, _)| b)
        .collect();
    let mut knots = vec![0.0; p + 1];
    knots.extend(interior.iter().map(|b| 0.5 * b));
    knots.extend(std::iter::repeat(0.5).take(p));
    knots.extend(interior.iter().map(|b| 0.5 + 0.5 * b));
    knots.extend(std::iter::repeat(1.0).take(p + 1));
    let kvx = KnotVector::new(p, knots).unwrap();
    let gx = kvx.greville();
    let mut cps = Vec::new();
    for &y in &g {
        for &x in &gx {
            cps.extend_from_slice(&[x, y]);
        }
    }
    let single = Patch::new(TensorBasis::new(vec![kvx, kv]), cps, 2).unwrap();
    (topo, single)
}

/// An 8-patch annulus: straight-sided octagon sectors as the initial
/// domain, and wavy inner/outer circles as the deformation targets.
/// Direction 0 runs along the angle, direction 1 along the radius.
pub fn ring_fixture(degree: usize, num_basis: usize) -> (PatchTopology, Vec<(usize, SideId, Patch)>) {
    let kv = open_kv(degree, num_basis);
    let g = kv.greville();
    let (r_in, r_out) = (0.5, 1.0);
    let corner = |k: usize, r: f64| {
        // wrap so the last interface reuses the bits of the first corner
        let th = (k % 8) as f64 * std::f64::consts::FRAC_PI_4;
        [r * th.cos(), r * th.sin()]
    };
    let mut patches = Vec::with_capacity(8);
    for k in 0..8 {
        let (a_in, b_in) = (corner(k, r_in), corner(k + 1, r_in));
        let (a_out, b_out) = (corner(k, r_out), corner(k + 1, r_out));
        let mut cps = Vec::new();
        for &t_r in &g {
            for &t_a in &g {
                let inner = [
                    (1.0 - t_a) * a_in[0] + t_a * b_in[0],
                    (1.0 - t_a) * a_in[1] + t_a * b_in[1],
                ];
                let outer = [
                    (1.0 - t_a) * a_out[0] + t_a * b_out[0],
                    (1.0 - t_a) * a_out[1] + t_a * b_out[1],
                ];
                // radius decreasing along direction 1 keeps the Jacobian
                // determinant positive with the angle on direction 0
                cps.extend_from_slice(&[
                    (1.0 - t_r) * outer[0] + t_r * inner[0],
                    (1.0 - t_r) * outer[1] + t_r * inner[1],
                ]);
            }
        }
        patches.push(Patch::new(TensorBasis::new(vec![kv.clone(), kv.clone()]), cps, 2).unwrap());
    }
    let interfaces: Vec<Interface> = (0..8)
        .map(|k| Interface {
            patch_a: k,
            side_a: SideId {
                dir: 0,
                upper: true,
            },
            patch_b: (k + 1) % 8,
            side_b: SideId {
                dir: 0,
                upper: false,
            },
            orientation: Orientation::aligned(),
        })
        .collect();
    let topo = PatchTopology::new(patches, interfaces).unwrap();

    // wavy-circle targets on the unmatched radial sides
    let radius = |r_base: f64, th: f64| r_base * (1.0 + 0.08 * (4.0 * th).sin());
    let mut targets = Vec::new();
    for k in 0..8 {
        for (upper, r_base) in [(false, r_out), (true, r_in)] {
            let mut cps = Vec::new();
            for &t_a in &g {
                let th = (k as f64 + t_a) * std::f64::consts::FRAC_PI_4;
                let r = radius(r_base, th);
                cps.extend_from_slice(&[r * th.cos(), r * th.sin()]);
            }
            let side = Patch::new(TensorBasis::new(vec![kv.clone()]), cps, 2).unwrap();
            targets.push((k, SideId { dir: 1, upper }, side));
        }
    }
    (topo, targets)
}
