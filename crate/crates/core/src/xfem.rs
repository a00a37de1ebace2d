//! Heaviside-enriched discretization on the structured grid: connected
//! material regions, per-node enrichment levels, the global DOF map, and
//! subcell quadrature rules.
//!
//! Each connected region of each solid phase gets its own set of nodal
//! shape functions, so disconnected pieces of the same phase never share
//! DOFs and no spurious load transfer can occur. Void carries no DOFs.

use crate::error::{Error, Result};
use crate::geometry::{ElemCut, Phase, PhaseMap};
use crate::mesh::Mesh;

/// Step enrichment function: 1 where the argument is strictly positive.
pub fn heaviside(phi: f64) -> f64 {
    if phi > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Connected-region structure and per-node enrichment levels.
#[derive(Debug, Clone)]
pub struct Enrichment {
    /// Global region id per (element, local region); `usize::MAX` for void.
    pub elem_regions: Vec<Vec<usize>>,
    /// Phase of each global region (A or B only).
    pub region_phase: Vec<Phase>,
    /// Per node, per phase (A, B): sorted global region ids the node's
    /// support touches. The position in the list is the enrichment level.
    pub node_levels: Vec<[Vec<usize>; 2]>,
}

impl Enrichment {
    /// Highest enrichment-level count over all (node, phase) pairs.
    pub fn max_levels(&self) -> usize {
        self.node_levels
            .iter()
            .flat_map(|l| l.iter().map(Vec::len))
            .max()
            .unwrap_or(0)
    }

    pub fn n_regions(&self) -> usize {
        self.region_phase.len()
    }

    pub fn level_of(&self, node: usize, phase: Phase, region: usize) -> Option<usize> {
        self.node_levels[node][phase.idx()].iter().position(|&g| g == region)
    }
}

/// Dense global DOF numbering over (node, phase, level, direction).
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Per node, per phase: first DOF index of each level (x; y follows).
    base: Vec<[Vec<usize>; 2]>,
    pub n_dofs: usize,
    /// Per element, per local region: the 8 gathered DOFs
    /// (node-major, x then y), or None for void regions.
    pub gather: Vec<Vec<Option<[usize; 8]>>>,
}

impl DofMap {
    pub fn dof(&self, node: usize, phase: Phase, level: usize, dir: usize) -> usize {
        self.base[node][phase.idx()][level] + dir
    }

    pub fn elem_dofs(&self, elem: usize, local_region: usize) -> Option<[usize; 8]> {
        self.gather[elem][local_region]
    }
}

/// One quadrature point with its phase and local-region tags.
#[derive(Debug, Clone, Copy)]
pub struct QPoint {
    pub x: [f64; 2],
    pub w: f64,
    pub phase: Phase,
    pub region: usize,
}

/// Integration rules per element: 2x2 Gauss on uncut quads, a 3-point
/// midpoint rule per triangle subcell on intersected ones.
#[derive(Debug, Clone)]
pub struct SubcellQuadrature {
    pub elems: Vec<Vec<QPoint>>,
}

/// Discretization bundle for one design iterate.
#[derive(Debug)]
pub struct XfemModel {
    pub mesh: Mesh,
    pub pm: PhaseMap,
    pub enr: Enrichment,
    pub dofs: DofMap,
    pub quad: SubcellQuadrature,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn local_phase(cut: &ElemCut, lr: usize) -> Phase {
    match cut.uniform {
        Some(p) => p,
        None => cut.regions[lr],
    }
}

fn n_local_regions(cut: &ElemCut) -> usize {
    if cut.uniform.is_some() {
        1
    } else {
        cut.regions.len()
    }
}

/// Identify connected regions across elements and assign enrichment
/// levels. `phi1`/`phi2` are the nodal fields the phase map was built
/// from; they provide the phase layout along shared element edges.
pub fn build_enrichment(
    mesh: &Mesh,
    pm: &PhaseMap,
    phi1: &[f64],
    phi2: Option<&[f64]>,
) -> Enrichment {
    // flattened (element, local region) ids
    let mut offset = Vec::with_capacity(pm.elems.len() + 1);
    let mut total = 0;
    for cut in &pm.elems {
        offset.push(total);
        total += n_local_regions(cut);
    }
    offset.push(total);

    let mut uf = UnionFind::new(total);
    for edge in mesh.interior_edges() {
        let [e0, e1] = edge.elems;
        let [n0, n1] = edge.nodes;
        let p1 = [phi1[n0], phi1[n1]];
        let p2 = phi2.map(|f| [f[n0], f[n1]]);
        let (a, b) = (mesh.coord(n0), mesh.coord(n1));
        for iv in PhaseMap::edge_intervals(p1, p2) {
            if iv.phase == Phase::Void {
                continue;
            }
            let tm = 0.5 * (iv.t0 + iv.t1);
            let p = [a[0] + tm * (b[0] - a[0]), a[1] + tm * (b[1] - a[1])];
            let locate = |e: usize, s: f64| -> Option<usize> {
                let cut = &pm.elems[e];
                for eps_scale in [1e-7, 1e-5, 1e-3] {
                    let eps = eps_scale * mesh.h;
                    let q = [p[0] + s * eps * edge.normal[0], p[1] + s * eps * edge.normal[1]];
                    if let Some(lr) = cut.region_of_point(q) {
                        if local_phase(cut, lr) == iv.phase {
                            return Some(lr);
                        }
                    }
                }
                None
            };
            if let (Some(l0), Some(l1)) = (locate(e0, -1.0), locate(e1, 1.0)) {
                uf.union(offset[e0] + l0, offset[e1] + l1);
            }
        }
    }

    // global ids in order of each class's minimum flattened id
    let mut root_of = vec![usize::MAX; total];
    let mut roots: Vec<(usize, Phase)> = Vec::new();
    for e in 0..pm.elems.len() {
        let cut = &pm.elems[e];
        for lr in 0..n_local_regions(cut) {
            let phase = local_phase(cut, lr);
            if phase == Phase::Void {
                continue;
            }
            let id = offset[e] + lr;
            let r = uf.find(id);
            if root_of[r] == usize::MAX {
                root_of[r] = roots.len();
                roots.push((r, phase));
            }
        }
    }
    let region_phase: Vec<Phase> = roots.iter().map(|&(_, p)| p).collect();

    let mut elem_regions = Vec::with_capacity(pm.elems.len());
    for e in 0..pm.elems.len() {
        let cut = &pm.elems[e];
        let mut regs = Vec::with_capacity(n_local_regions(cut));
        for lr in 0..n_local_regions(cut) {
            if local_phase(cut, lr) == Phase::Void {
                regs.push(usize::MAX);
            } else {
                regs.push(root_of[uf.find(offset[e] + lr)]);
            }
        }
        elem_regions.push(regs);
    }

    // node enrichment levels: every region present in an adjacent element
    let mut node_levels: Vec<[Vec<usize>; 2]> =
        vec![[Vec::new(), Vec::new()]; mesh.n_nodes()];
    for e in 0..pm.elems.len() {
        for &g in &elem_regions[e] {
            if g == usize::MAX {
                continue;
            }
            let pidx = region_phase[g].idx();
            for n in mesh.elem_nodes(e) {
                let list = &mut node_levels[n][pidx];
                if !list.contains(&g) {
                    list.push(g);
                }
            }
        }
    }
    for levels in &mut node_levels {
        for l in levels.iter_mut() {
            l.sort_unstable();
        }
    }

    Enrichment { elem_regions, region_phase, node_levels }
}

pub fn build_dof_map(mesh: &Mesh, pm: &PhaseMap, enr: &Enrichment) -> DofMap {
    let mut base: Vec<[Vec<usize>; 2]> = vec![[Vec::new(), Vec::new()]; mesh.n_nodes()];
    let mut next = 0;
    for (n, levels) in enr.node_levels.iter().enumerate() {
        for p in 0..2 {
            for _ in 0..levels[p].len() {
                base[n][p].push(next);
                next += 2;
            }
        }
    }
    let mut gather = Vec::with_capacity(pm.elems.len());
    for e in 0..pm.elems.len() {
        let nodes = mesh.elem_nodes(e);
        let mut lists = Vec::with_capacity(enr.elem_regions[e].len());
        for &g in &enr.elem_regions[e] {
            if g == usize::MAX {
                lists.push(None);
                continue;
            }
            let pidx = enr.region_phase[g].idx();
            let mut d = [0usize; 8];
            for (k, &n) in nodes.iter().enumerate() {
                let level = enr.node_levels[n][pidx]
                    .iter()
                    .position(|&x| x == g)
                    .expect("node level covers adjacent region");
                d[2 * k] = base[n][pidx][level];
                d[2 * k + 1] = base[n][pidx][level] + 1;
            }
            lists.push(Some(d));
        }
        gather.push(lists);
    }
    DofMap { base, n_dofs: next, gather }
}

/// Gauss points of the 2x2 rule on [0, 1], tensorized.
const GAUSS2: [f64; 2] = [0.211_324_865_405_187_12, 0.788_675_134_594_812_9];

pub fn build_quadrature(mesh: &Mesh, pm: &PhaseMap) -> SubcellQuadrature {
    let h2 = mesh.h * mesh.h;
    let sliver = 1e-10 * h2;
    let mut elems = Vec::with_capacity(pm.elems.len());
    for (e, cut) in pm.elems.iter().enumerate() {
        let mut pts = Vec::new();
        match cut.uniform {
            Some(Phase::Void) => {}
            Some(p) => {
                let o = mesh.elem_origin(e);
                for &gx in &GAUSS2 {
                    for &gy in &GAUSS2 {
                        pts.push(QPoint {
                            x: [o[0] + gx * mesh.h, o[1] + gy * mesh.h],
                            w: 0.25 * h2,
                            phase: p,
                            region: 0,
                        });
                    }
                }
            }
            None => {
                // re-tag sliver triangles to their largest edge-neighbor so
                // tiny subcells never carry their own DOF coupling
                let areas: Vec<f64> = cut
                    .tris
                    .iter()
                    .map(|t| {
                        let (a, b, c) =
                            (cut.verts[t.v[0]], cut.verts[t.v[1]], cut.verts[t.v[2]]);
                        0.5 * ((b[0] - a[0]) * (c[1] - a[1])
                            - (c[0] - a[0]) * (b[1] - a[1]))
                            .abs()
                    })
                    .collect();
                for (ti, t) in cut.tris.iter().enumerate() {
                    let (mut phase, mut region) = (t.phase, t.region);
                    if areas[ti] < sliver {
                        let mut best = (0.0, phase, region);
                        for (tj, u) in cut.tris.iter().enumerate() {
                            if tj == ti {
                                continue;
                            }
                            let shared = t.v.iter().filter(|v| u.v.contains(v)).count();
                            if shared >= 2 && areas[tj] > best.0 {
                                best = (areas[tj], u.phase, u.region);
                            }
                        }
                        phase = best.1;
                        region = best.2;
                    }
                    if phase == Phase::Void {
                        continue;
                    }
                    let (a, b, c) = (cut.verts[t.v[0]], cut.verts[t.v[1]], cut.verts[t.v[2]]);
                    let w = areas[ti] / 3.0;
                    for (p, q) in [(a, b), (b, c), (c, a)] {
                        pts.push(QPoint {
                            x: [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])],
                            w,
                            phase,
                            region,
                        });
                    }
                }
            }
        }
        elems.push(pts);
    }
    SubcellQuadrature { elems }
}

impl XfemModel {
    pub fn build(
        mesh: &Mesh,
        pm: PhaseMap,
        phi1: &[f64],
        phi2: Option<&[f64]>,
    ) -> Result<Self> {
        let enr = build_enrichment(mesh, &pm, phi1, phi2);
        let dofs = build_dof_map(mesh, &pm, &enr);
        let quad = build_quadrature(mesh, &pm);
        Ok(XfemModel { mesh: mesh.clone(), pm, enr, dofs, quad })
    }

    /// Displacement at a physical point using the single active DOF set
    /// of the phase region containing it.
    pub fn interpolate_displacement(
        &self,
        elem: usize,
        x: [f64; 2],
        state: &[f64],
    ) -> Result<[f64; 2]> {
        let cut = &self.pm.elems[elem];
        let lr = cut
            .region_of_point(x)
            .ok_or_else(|| Error::config("point outside element"))?;
        if local_phase(cut, lr) == Phase::Void {
            return Err(Error::QueryInVoid { x: x[0], y: x[1] });
        }
        let dofs = self.dofs.elem_dofs(elem, lr).expect("solid region has DOFs");
        let n = self.mesh.shape(elem, x);
        let mut u = [0.0; 2];
        for k in 0..4 {
            u[0] += n[k] * state[dofs[2 * k]];
            u[1] += n[k] * state[dofs[2 * k + 1]];
        }
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify_phases, LevelSetField};
    use approx::assert_relative_eq;

    fn model_from(mesh: &Mesh, phi1: Vec<f64>, phi2: Option<Vec<f64>>) -> XfemModel {
        let mut f1 = LevelSetField::new(phi1);
        f1.snap(mesh.h);
        let f2 = phi2.map(|p| {
            let mut f = LevelSetField::new(p);
            f.snap(mesh.h);
            f
        });
        let pm = classify_phases(mesh, &f1, f2.as_ref()).unwrap();
        XfemModel::build(mesh, pm, &f1.phi, f2.as_ref().map(|f| f.phi.as_slice())).unwrap()
    }

    #[test]
    fn heaviside_cases() {
        assert_eq!(heaviside(0.5), 1.0);
        assert_eq!(heaviside(0.0), 0.0);
        assert_eq!(heaviside(-1e-30), 0.0);
    }

    #[test]
    fn single_phase_is_standard_fem() {
        let m = Mesh::unit_square(4);
        let model = model_from(&m, vec![-1.0; m.n_nodes()], None);
        assert_eq!(model.enr.n_regions(), 1);
        assert_eq!(model.enr.max_levels(), 1);
        assert_eq!(model.dofs.n_dofs, 2 * m.n_nodes());
        for e in 0..m.n_elems() {
            let d = model.dofs.elem_dofs(e, 0).unwrap();
            let nodes = m.elem_nodes(e);
            for k in 0..4 {
                assert_eq!(d[2 * k], 2 * nodes[k]);
                assert_eq!(d[2 * k + 1], 2 * nodes[k] + 1);
            }
        }
    }

    #[test]
    fn strip_fixture_two_a_levels() {
        // B strip over 0.3 < x < 0.5 on a 5x5 grid splits phase A in two;
        // nodes at x = 0.4 see both A regions and carry two A levels
        let m = Mesh::unit_square(5);
        let phi: Vec<f64> = m.coords().iter().map(|x| 0.1 - (x[0] - 0.4).abs()).collect();
        let model = model_from(&m, phi, None);
        let phases = &model.enr.region_phase;
        assert_eq!(phases.len(), 3);
        assert_eq!(phases.iter().filter(|&&p| p == Phase::A).count(), 2);
        assert_eq!(phases.iter().filter(|&&p| p == Phase::B).count(), 1);
        for j in 0..=5 {
            for i in 0..=5 {
                let n = m.node_id(i, j);
                let a_levels = model.enr.node_levels[n][Phase::A.idx()].len();
                let b_levels = model.enr.node_levels[n][Phase::B.idx()].len();
                let expect_a = match i {
                    2 => 2,
                    _ => 1,
                };
                let expect_b = if (1..=3).contains(&i) { 1 } else { 0 };
                assert_eq!(a_levels, expect_a, "node ({i}, {j}) A levels");
                assert_eq!(b_levels, expect_b, "node ({i}, {j}) B levels");
            }
        }
        assert_eq!(model.dofs.n_dofs, 120);
    }

    #[test]
    fn no_gather_list_mixes_disconnected_regions() {
        let m = Mesh::unit_square(5);
        let phi: Vec<f64> = m.coords().iter().map(|x| 0.1 - (x[0] - 0.4).abs()).collect();
        let model = model_from(&m, phi, None);
        // collect DOF sets of the two A regions via the gather lists
        let a_regions: Vec<usize> = (0..model.enr.n_regions())
            .filter(|&g| model.enr.region_phase[g] == Phase::A)
            .collect();
        let mut dofs_of = vec![std::collections::HashSet::new(); model.enr.n_regions()];
        for e in 0..m.n_elems() {
            for (lr, &g) in model.enr.elem_regions[e].iter().enumerate() {
                if g == usize::MAX {
                    continue;
                }
                for d in model.dofs.elem_dofs(e, lr).unwrap() {
                    dofs_of[g].insert(d);
                }
            }
        }
        // the structural stencil of one region never touches the other
        assert!(dofs_of[a_regions[0]].is_disjoint(&dofs_of[a_regions[1]]));
    }

    #[test]
    fn quadrature_weights_close_phase_areas() {
        let m = Mesh::unit_square(30);
        let phi: Vec<f64> = m
            .coords()
            .iter()
            .map(|x| 0.28 - ((x[0] - 0.5).powi(2) + (x[1] - 0.47).powi(2)).sqrt())
            .collect();
        let model = model_from(&m, phi, None);
        for (e, pts) in model.quad.elems.iter().enumerate() {
            let cut = &model.pm.elems[e];
            let total: f64 = pts.iter().map(|p| p.w).sum();
            let solid = cut.vol[0] + cut.vol[1];
            assert_relative_eq!(total, solid, epsilon = 1e-9 * m.h * m.h);
            for p in pts {
                assert!(p.w > 0.0);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_linear_field() {
        let m = Mesh::unit_square(4);
        let model = model_from(&m, vec![-1.0; m.n_nodes()], None);
        let mut state = vec![0.0; model.dofs.n_dofs];
        for n in 0..m.n_nodes() {
            let x = m.coord(n);
            state[2 * n] = x[0];
            state[2 * n + 1] = 0.0;
        }
        for p in [[0.13, 0.7], [0.5, 0.5], [0.99, 0.01]] {
            let e = m.elem_of_point(p);
            let u = model.interpolate_displacement(e, p, &state).unwrap();
            assert_relative_eq!(u[0], p[0], max_relative = 1e-13);
            assert_relative_eq!(u[1], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn b_side_value_ignores_a_dofs() {
        let m = Mesh::unit_square(4);
        let phi: Vec<f64> = m.coords().iter().map(|x| x[0] - 0.62).collect();
        let model = model_from(&m, phi, None);
        let p = [0.7, 0.5];
        let e = m.elem_of_point(p);
        let mut state = vec![0.0; model.dofs.n_dofs];
        let u0 = model.interpolate_displacement(e, p, &state).unwrap();
        // perturb every A-phase DOF
        for n in 0..m.n_nodes() {
            for level in 0..model.enr.node_levels[n][0].len() {
                state[model.dofs.dof(n, Phase::A, level, 0)] = 7.7;
                state[model.dofs.dof(n, Phase::A, level, 1)] = -3.3;
            }
        }
        let u1 = model.interpolate_displacement(e, p, &state).unwrap();
        assert_eq!(u0, u1);
    }

    #[test]
    fn void_query_errors() {
        let m = Mesh::unit_square(10);
        let phi1 = vec![1.0; m.n_nodes()];
        let phi2: Vec<f64> = m
            .coords()
            .iter()
            .map(|x| ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt() - 0.25)
            .collect();
        let model = model_from(&m, phi1, Some(phi2));
        let p = [0.5, 0.5];
        let e = m.elem_of_point(p);
        let state = vec![0.0; model.dofs.n_dofs];
        assert!(matches!(
            model.interpolate_displacement(e, p, &state),
            Err(Error::QueryInVoid { .. })
        ));
        // solid query on the same mesh still works
        let q = [0.05, 0.05];
        assert!(model
            .interpolate_displacement(m.elem_of_point(q), q, &state)
            .is_ok());
    }
}
