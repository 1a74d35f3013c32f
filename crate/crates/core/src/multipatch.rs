//! C0-coupled multi-patch assemblies: shared interface degrees of freedom,
//! the global dof map, and global residual/tangent/linear assembly.

use crate::elasticity::{
    patch_contribs, AssembledSystem, ElasticityError, ElementForm, MaterialParams,
};
use crate::geometry::{GeometryError, Patch, SideId};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum TopologyError {
    #[error("interface {0}: {1}")]
    BadInterface(usize, String),
    #[error("side {side} of patch {patch} appears in more than one interface")]
    DuplicateSide { patch: usize, side: SideId },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Orientation of one side lattice relative to its partner. `swap`
/// exchanges the two side parameters (3D only); `flip` reverses a side
/// parameter (after the swap).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Orientation {
    pub swap: bool,
    pub flip: [bool; 2],
}

impl Orientation {
    pub fn aligned() -> Self {
        Self {
            swap: false,
            flip: [false, false],
        }
    }

    pub fn reversed() -> Self {
        Self {
            swap: false,
            flip: [true, false],
        }
    }

    /// Map a side-lattice multi-index of side a to the matching index on
    /// side b.
    pub fn map_index(&self, multi: &[usize], sizes_b: &[usize]) -> Vec<usize> {
        let mut m: Vec<usize> = if self.swap && multi.len() == 2 {
            vec![multi[1], multi[0]]
        } else {
            multi.to_vec()
        };
        for (k, v) in m.iter_mut().enumerate() {
            if self.flip[k] {
                *v = sizes_b[k] - 1 - *v;
            }
        }
        m
    }
}

/// A declared C0 interface between two patch sides.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Interface {
    pub patch_a: usize,
    pub side_a: SideId,
    pub patch_b: usize,
    pub side_b: SideId,
    pub orientation: Orientation,
}

/// A collection of patches with explicitly declared interfaces. Unmatched
/// sides form the outer boundary.
#[derive(Debug, Clone)]
pub struct PatchTopology {
    pub patches: Vec<Patch>,
    pub interfaces: Vec<Interface>,
}

const MATCH_TOL: f64 = 1e-10;

impl PatchTopology {
    pub fn new(patches: Vec<Patch>, interfaces: Vec<Interface>) -> Result<Self, TopologyError> {
        let topo = Self {
            patches,
            interfaces,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn single(patch: Patch) -> Self {
        Self {
            patches: vec![patch],
            interfaces: vec![],
        }
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let mut seen: Vec<(usize, SideId)> = Vec::new();
        for (k, itf) in self.interfaces.iter().enumerate() {
            for &(p, s) in &[(itf.patch_a, itf.side_a), (itf.patch_b, itf.side_b)] {
                if p >= self.patches.len() {
                    return Err(TopologyError::BadInterface(
                        k,
                        format!("patch index {p} out of range"),
                    ));
                }
                if s.dir >= self.patches[p].dim_par() {
                    return Err(TopologyError::BadInterface(
                        k,
                        format!("side direction {} out of range", s.dir),
                    ));
                }
                if seen.contains(&(p, s)) {
                    return Err(TopologyError::DuplicateSide { patch: p, side: s });
                }
                seen.push((p, s));
            }
            let sa = self.patches[itf.patch_a].side(itf.side_a);
            let sb = self.patches[itf.patch_b].side(itf.side_b);
            let sizes_a = sa.basis().sizes();
            let sizes_b = sb.basis().sizes();
            let mapped_sizes: Vec<usize> = if itf.orientation.swap && sizes_a.len() == 2 {
                vec![sizes_a[1], sizes_a[0]]
            } else {
                sizes_a.clone()
            };
            if mapped_sizes != sizes_b {
                return Err(TopologyError::BadInterface(
                    k,
                    format!("side sizes {sizes_a:?} vs {sizes_b:?} do not match"),
                ));
            }
            for lex in 0..sa.num_cps() {
                let ma = sa.basis().multi_index(lex);
                let mb = itf.orientation.map_index(&ma, &sizes_b);
                let lb = sb.basis().lex_index(&mb);
                let (ca, cb) = (sa.cp(lex), sb.cp(lb));
                let dist: f64 = ca
                    .iter()
                    .zip(cb)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if dist > MATCH_TOL {
                    return Err(TopologyError::BadInterface(
                        k,
                        format!("interface control points differ by {dist:.3e}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sides not consumed by any interface, i.e. the outer boundary.
    pub fn unmatched_sides(&self) -> Vec<(usize, SideId)> {
        let mut matched: Vec<(usize, SideId)> = Vec::new();
        for itf in &self.interfaces {
            matched.push((itf.patch_a, itf.side_a));
            matched.push((itf.patch_b, itf.side_b));
        }
        let mut out = Vec::new();
        for (p, patch) in self.patches.iter().enumerate() {
            for id in SideId::all(patch.dim_par()) {
                if !matched.contains(&(p, id)) {
                    out.push((p, id));
                }
            }
        }
        out
    }
}

/// Volume local lex index of a side-lattice point.
pub fn side_lattice_to_volume(patch: &Patch, side: SideId, side_multi: &[usize]) -> usize {
    let d = patch.dim_par();
    let sizes = patch.basis().sizes();
    let mut vmulti = vec![0usize; d];
    vmulti[side.dir] = if side.upper { sizes[side.dir] - 1 } else { 0 };
    let others: Vec<usize> = (0..d).filter(|&k| k != side.dir).collect();
    for (pos, &dir) in others.iter().enumerate() {
        vmulti[dir] = side_multi[pos];
    }
    patch.basis().lex_index(&vmulti)
}

/// Identification of patch-local coefficients with global degrees of
/// freedom, plus the outer-boundary/free classification.
#[derive(Debug, Clone)]
pub struct GlobalDofMap {
    /// per-patch: local lex index -> global index
    pub local_to_global: Vec<Vec<usize>>,
    pub n_global: usize,
    /// is the global dof on the outer boundary (an unmatched side)?
    pub is_outer: Vec<bool>,
    /// free (interior + interface) globals, ascending
    pub free: Vec<usize>,
    /// global -> free slot, or -1 for outer boundary dofs
    pub slot_of: Vec<isize>,
}

impl GlobalDofMap {
    pub fn gather_local(&self, patch: usize, global_vec: &[f64], dim: usize) -> Vec<f64> {
        let map = &self.local_to_global[patch];
        let mut out = vec![0.0; map.len() * dim];
        for (l, &g) in map.iter().enumerate() {
            out[l * dim..(l + 1) * dim].copy_from_slice(&global_vec[g * dim..(g + 1) * dim]);
        }
        out
    }
}

/// Union-find identification of interface coefficients, deterministic by
/// patch-major local index order.
pub fn build_dof_map(topology: &PatchTopology) -> Result<GlobalDofMap, TopologyError> {
    let counts: Vec<usize> = topology.patches.iter().map(|p| p.num_cps()).collect();
    let offsets: Vec<usize> = counts
        .iter()
        .scan(0usize, |acc, &c| {
            let o = *acc;
            *acc += c;
            Some(o)
        })
        .collect();
    let total: usize = counts.iter().sum();

    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for itf in &topology.interfaces {
        let pa = &topology.patches[itf.patch_a];
        let pb = &topology.patches[itf.patch_b];
        let sa = pa.side(itf.side_a);
        let sb = pb.side(itf.side_b);
        let sizes_b = sb.basis().sizes();
        for lex in 0..sa.num_cps() {
            let ma = sa.basis().multi_index(lex);
            let mb = itf.orientation.map_index(&ma, &sizes_b);
            let la = offsets[itf.patch_a] + side_lattice_to_volume(pa, itf.side_a, &ma);
            let lb = offsets[itf.patch_b] + side_lattice_to_volume(pb, itf.side_b, &mb);
            let (ra, rb) = (find(&mut parent, la), find(&mut parent, lb));
            if ra != rb {
                // lower index wins, keeping numbering deterministic
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        }
    }
    // assign globals in first-occurrence order
    let mut global_of_root: Vec<isize> = vec![-1; total];
    let mut n_global = 0usize;
    let mut local_to_global: Vec<Vec<usize>> = Vec::with_capacity(topology.patches.len());
    for (p, patch) in topology.patches.iter().enumerate() {
        let mut map = Vec::with_capacity(patch.num_cps());
        for l in 0..patch.num_cps() {
            let r = find(&mut parent, offsets[p] + l);
            if global_of_root[r] < 0 {
                global_of_root[r] = n_global as isize;
                n_global += 1;
            }
            map.push(global_of_root[r] as usize);
        }
        local_to_global.push(map);
    }
    // outer-boundary classification: any member on an unmatched side
    let mut is_outer = vec![false; n_global];
    for (p, id) in topology.unmatched_sides() {
        let patch = &topology.patches[p];
        let side = patch.side(id);
        for lex in 0..side.num_cps() {
            let m = side.basis().multi_index(lex);
            let l = side_lattice_to_volume(patch, id, &m);
            is_outer[local_to_global[p][l]] = true;
        }
    }
    let free: Vec<usize> = (0..n_global).filter(|&g| !is_outer[g]).collect();
    let mut slot_of = vec![-1isize; n_global];
    for (s, &g) in free.iter().enumerate() {
        slot_of[g] = s as isize;
    }
    Ok(GlobalDofMap {
        local_to_global,
        n_global,
        is_outer,
        free,
        slot_of,
    })
}

/// Global residual over free dofs for the displacement `u` (global
/// coefficients, boundary entries included).
pub fn global_residual(
    patches0: &[Patch],
    map: &GlobalDofMap,
    u: &[f64],
    mat: &MaterialParams,
) -> Result<DVector<f64>, ElasticityError> {
    let dim = patches0[0].dim_phys();
    let mut r = DVector::zeros(map.free.len() * dim);
    for (p, patch) in patches0.iter().enumerate() {
        let local = map.gather_local(p, u, dim);
        for contrib in patch_contribs(patch, Some(&local), mat, ElementForm::Residual)? {
            let res = contrib.residual.unwrap();
            for (a, &l) in contrib.active.iter().enumerate() {
                let s = map.slot_of[map.local_to_global[p][l]];
                if s < 0 {
                    continue;
                }
                for c in 0..dim {
                    r[s as usize * dim + c] += res[a * dim + c];
                }
            }
        }
    }
    Ok(r)
}

fn scatter_global(
    contribs_per_patch: Vec<Vec<crate::elasticity::ElementContrib>>,
    map: &GlobalDofMap,
    dim: usize,
    boundary_increment: Option<&[f64]>,
) -> AssembledSystem {
    let n = map.free.len() * dim;
    let mut rhs = DVector::zeros(n);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (p, contribs) in contribs_per_patch.into_iter().enumerate() {
        for contrib in contribs {
            if let Some(res) = &contrib.residual {
                for (a, &l) in contrib.active.iter().enumerate() {
                    let s = map.slot_of[map.local_to_global[p][l]];
                    if s < 0 {
                        continue;
                    }
                    for c in 0..dim {
                        rhs[s as usize * dim + c] -= res[a * dim + c];
                    }
                }
            }
            if let Some(k) = &contrib.matrix {
                for (a, &la) in contrib.active.iter().enumerate() {
                    let ga = map.local_to_global[p][la];
                    let sa = map.slot_of[ga];
                    if sa < 0 {
                        continue;
                    }
                    for (b, &lb) in contrib.active.iter().enumerate() {
                        let gb = map.local_to_global[p][lb];
                        let sb = map.slot_of[gb];
                        for ca in 0..dim {
                            let row = sa as usize * dim + ca;
                            for cb in 0..dim {
                                let v = k[(a * dim + ca, b * dim + cb)];
                                if sb >= 0 {
                                    triplets.push((row, sb as usize * dim + cb, v));
                                } else if let Some(g) = boundary_increment {
                                    rhs[row] -= v * g[gb * dim + cb];
                                }
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
        dof_map: map.free.clone(),
        dim,
        triplets,
        rhs,
    }
}

/// Global consistent tangent over free dofs; the rhs holds the negative
/// residual with Dirichlet columns folded in when `boundary_increment`
/// (a global coefficient vector) is given.
pub fn global_tangent(
    patches0: &[Patch],
    map: &GlobalDofMap,
    u: &[f64],
    mat: &MaterialParams,
    boundary_increment: Option<&[f64]>,
) -> Result<AssembledSystem, ElasticityError> {
    let dim = patches0[0].dim_phys();
    let contribs: Vec<_> = patches0
        .iter()
        .enumerate()
        .map(|(p, patch)| {
            let local = map.gather_local(p, u, dim);
            patch_contribs(patch, Some(&local), mat, ElementForm::Tangent)
        })
        .collect::<Result<_, _>>()?;
    Ok(scatter_global(contribs, map, dim, boundary_increment))
}

/// Global Hooke stiffness on the current (possibly deformed) geometry.
pub fn global_linear(
    patches: &[Patch],
    map: &GlobalDofMap,
    mat: &MaterialParams,
    boundary_increment: Option<&[f64]>,
) -> Result<AssembledSystem, ElasticityError> {
    let dim = patches[0].dim_phys();
    let contribs: Vec<_> = patches
        .iter()
        .map(|patch| patch_contribs(patch, None, mat, ElementForm::Linear))
        .collect::<Result<_, _>>()?;
    Ok(scatter_global(contribs, map, dim, boundary_increment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample_domains;

    #[test]
    fn single_patch_map_is_identity() {
        let p = sample_domains::identity_square(2, 5);
        let topo = PatchTopology::single(p);
        let map = build_dof_map(&topo).unwrap();
        assert_eq!(map.n_global, 25);
        for (l, &g) in map.local_to_global[0].iter().enumerate() {
            assert_eq!(l, g);
        }
        // all lattice-boundary dofs are outer
        let n_outer = map.is_outer.iter().filter(|&&b| b).count();
        assert_eq!(n_outer, 25 - 9);
    }

    #[test]
    fn two_patches_share_one_edge() {
        let (topo, _) = sample_domains::two_patch_strip(3, 4);
        let map = build_dof_map(&topo).unwrap();
        let n_local = topo.patches[0].num_cps();
        // 4x4 patches sharing an edge of 4 control points
        assert_eq!(map.n_global, 2 * n_local - 4);
        // the shared edge is still outer here (its dofs lie on unmatched
        // top/bottom sides only at the 2 end points)
        let shared_free: Vec<usize> = map
            .free
            .iter()
            .copied()
            .filter(|&g| {
                map.local_to_global[0].iter().filter(|&&x| x == g).count() > 0
                    && map.local_to_global[1].iter().filter(|&&x| x == g).count() > 0
            })
            .collect();
        assert_eq!(shared_free.len(), 2);
    }

    #[test]
    fn mismatched_interface_rejected() {
        let (mut topo, _) = sample_domains::two_patch_strip(3, 4);
        topo.patches[1].cps_mut()[1] += 0.05;
        let itf = topo.interfaces.clone();
        assert!(matches!(
            PatchTopology::new(topo.patches, itf),
            Err(TopologyError::BadInterface(_, _))
        ));
    }

    #[test]
    fn ring_interface_dofs_free() {
        let (topo, _) = sample_domains::ring_fixture(2, 4);
        let map = build_dof_map(&topo).unwrap();
        // every interface dof that is not on an arc is free
        let mut n_shared_free = 0;
        for itf in &topo.interfaces {
            let pa = &topo.patches[itf.patch_a];
            let sa = pa.side(itf.side_a);
            for lex in 0..sa.num_cps() {
                let m = sa.basis().multi_index(lex);
                let l = side_lattice_to_volume(pa, itf.side_a, &m);
                let g = map.local_to_global[itf.patch_a][l];
                if !map.is_outer[g] {
                    n_shared_free += 1;
                }
            }
        }
        assert!(n_shared_free > 0);
        assert_eq!(topo.interfaces.len(), 8);
    }

    #[test]
    fn split_domain_residual_matches_unsplit() {
        // a domain split into two patches assembles the same residual as
        // the single-patch version refined along the split line
        let (topo, single) = sample_domains::two_patch_strip(2, 4);
        let map = build_dof_map(&topo).unwrap();
        let dim = 2;
        // displacement: smooth polynomial field evaluated at control points
        let assign = |x: f64, y: f64| [0.05 * x * x + 0.02 * y, -0.03 * x * y];
        let mut u = vec![0.0; map.n_global * dim];
        for (p, patch) in topo.patches.iter().enumerate() {
            for l in 0..patch.num_cps() {
                let cp = patch.cp(l);
                let v = assign(cp[0], cp[1]);
                let g = map.local_to_global[p][l];
                u[g * dim] = v[0];
                u[g * dim + 1] = v[1];
            }
        }
        let mat = MaterialParams::new(1.0, 0.4).unwrap();
        let r_multi = global_residual(&topo.patches, &map, &u, &mat).unwrap();

        let single_topo = PatchTopology::single(single.clone());
        let smap = build_dof_map(&single_topo).unwrap();
        let mut us = vec![0.0; smap.n_global * dim];
        for l in 0..single.num_cps() {
            let cp = single.cp(l);
            let v = assign(cp[0], cp[1]);
            us[l * dim] = v[0];
            us[l * dim + 1] = v[1];
        }
        let r_single = global_residual(&single_topo.patches, &smap, &us, &mat).unwrap();

        // compare entries via physical anchor points of the free dofs
        assert_eq!(r_multi.len(), r_single.len());
        let mut anchors_multi: Vec<(Vec<i64>, f64, f64)> = Vec::new();
        for (s, &g) in map.free.iter().enumerate() {
            // find an owner
            'outer: for (p, ltg) in map.local_to_global.iter().enumerate() {
                for (l, &gg) in ltg.iter().enumerate() {
                    if gg == g {
                        let cp = topo.patches[p].cp(l);
                        let key: Vec<i64> =
                            cp.iter().map(|&x| (x * 1e9).round() as i64).collect();
                        anchors_multi.push((key, r_multi[s * 2], r_multi[s * 2 + 1]));
                        break 'outer;
                    }
                }
            }
        }
        for (s, &g) in smap.free.iter().enumerate() {
            let cp = single.cp(g);
            let key: Vec<i64> = cp.iter().map(|&x| (x * 1e9).round() as i64).collect();
            let found = anchors_multi.iter().find(|(k, _, _)| *k == key).unwrap();
            assert!((found.1 - r_single[s * 2]).abs() < 1e-10);
            assert!((found.2 - r_single[s * 2 + 1]).abs() < 1e-10);
        }
    }
}
