//! Phase classification of the structured grid against one or two level
//! set fields, producing per-element subcell triangulations and interface
//! segments.
//!
//! Intersected quads are split into four triangles through the centroid;
//! each triangle carries a linear interpolant of the nodal values (edge
//! traces match the bilinear field exactly), so cutting each triangle by
//! its chord is unambiguous, including checkerboard sign patterns.

use super::Phase;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Sub-triangle of an element with a phase tag and a local region id.
#[derive(Debug, Clone, Copy)]
pub struct Tri {
    pub v: [usize; 3],
    pub phase: Phase,
    pub region: usize,
}

/// Which interface a segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegKind {
    /// Contact interface on `phi1 = 0` (phase A against phase B).
    Contact,
    /// Void boundary on `phi2 = 0` (phase B against void), or a free
    /// surface of A where the void reaches `phi1 = 0`.
    Void,
}

/// Interface segment inside one element.
#[derive(Debug, Clone)]
pub struct ISeg {
    pub elem: usize,
    pub ends: [[f64; 2]; 2],
    pub kind: SegKind,
    /// Local region index (within the element) on the negative side of the
    /// defining field: phase A for contact segments, void for void segments.
    pub region_neg: usize,
    /// Local region on the positive side.
    pub region_pos: usize,
}

impl ISeg {
    pub fn length(&self) -> f64 {
        let d = [self.ends[1][0] - self.ends[0][0], self.ends[1][1] - self.ends[0][1]];
        (d[0] * d[0] + d[1] * d[1]).sqrt()
    }
}

/// Classification result for one element.
#[derive(Debug, Clone)]
pub struct ElemCut {
    /// Vertex coordinates: corners 0..4, centroid 4, crossings after.
    pub verts: Vec<[f64; 2]>,
    /// Subcell triangles; empty for non-intersected elements.
    pub tris: Vec<Tri>,
    /// Phase of a non-intersected element.
    pub uniform: Option<Phase>,
    /// Phase of each local connected region.
    pub regions: Vec<Phase>,
    /// Element area occupied by each phase (A, B, Void).
    pub vol: [f64; 3],
}

impl ElemCut {
    pub fn is_cut(&self) -> bool {
        self.uniform.is_none()
    }

    /// Local region containing a point (in element-local terms). For
    /// points exactly on subcell borders the first matching triangle wins.
    pub fn region_of_point(&self, x: [f64; 2]) -> Option<usize> {
        if self.uniform.is_some() {
            return Some(0);
        }
        let mut best: Option<(f64, usize)> = None;
        for t in &self.tris {
            let d = tri_signed_inclusion(&self.verts, t.v, x);
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, t.region));
            }
        }
        best.map(|(_, r)| r)
    }
}

/// Per-element, per-side phase intervals used for cross-element region
/// adjacency and ghost-penalty facets. `t` parametrizes the edge from its
/// first corner to its second.
#[derive(Debug, Clone)]
pub struct EdgeInterval {
    pub t0: f64,
    pub t1: f64,
    pub phase: Phase,
}

/// Phase layout of the whole mesh for one design iterate.
#[derive(Debug, Clone)]
pub struct PhaseMap {
    pub elems: Vec<ElemCut>,
    pub segs: Vec<ISeg>,
    pub h: f64,
    pub n_elems: usize,
}

impl PhaseMap {
    /// Total interface length over the contact and void boundaries,
    /// measured in the reference configuration.
    pub fn perimeter(&self) -> f64 {
        self.segs.iter().map(|s| s.length()).sum()
    }

    /// Areas occupied by (A, B, Void); they sum to the domain area.
    pub fn volumes(&self) -> (f64, f64, f64) {
        let mut v = [0.0; 3];
        for e in &self.elems {
            for k in 0..3 {
                v[k] += e.vol[k];
            }
        }
        (v[0], v[1], v[2])
    }

    pub fn contact_segs(&self) -> impl Iterator<Item = (usize, &ISeg)> {
        self.segs.iter().enumerate().filter(|(_, s)| s.kind == SegKind::Contact)
    }

    /// Phase intervals along one edge of an element, given the nodal field
    /// values at the edge's two endpoints.
    pub fn edge_intervals(p1: [f64; 2], p2: Option<[f64; 2]>) -> Vec<EdgeInterval> {
        // p1 holds phi1 at the two endpoints, p2 optionally phi2.
        let mut cuts = vec![0.0, 1.0];
        if p1[0].signum() != p1[1].signum() {
            cuts.push(p1[0] / (p1[0] - p1[1]));
        }
        if let Some(q) = p2 {
            if q[0].signum() != q[1].signum() {
                cuts.push(q[0] / (q[0] - q[1]));
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if t1 - t0 < 1e-14 {
                continue;
            }
            let tm = 0.5 * (t0 + t1);
            let f1 = p1[0] + tm * (p1[1] - p1[0]);
            let f2 = p2.map(|q| q[0] + tm * (q[1] - q[0]));
            out.push(EdgeInterval { t0, t1, phase: phase_of(f1, f2) });
        }
        out
    }
}

pub(crate) fn phase_of(phi1: f64, phi2: Option<f64>) -> Phase {
    if phi1 < 0.0 {
        Phase::A
    } else {
        match phi2 {
            Some(p2) if p2 < 0.0 => Phase::Void,
            _ => Phase::B,
        }
    }
}

fn tri_area(verts: &[[f64; 2]], v: [usize; 3]) -> f64 {
    let (a, b, c) = (verts[v[0]], verts[v[1]], verts[v[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Signed inclusion measure: minimum of the three barycentric-style edge
/// distances, positive inside.
fn tri_signed_inclusion(verts: &[[f64; 2]], v: [usize; 3], x: [f64; 2]) -> f64 {
    let mut dmin = f64::INFINITY;
    for k in 0..3 {
        let a = verts[v[k]];
        let b = verts[v[(k + 1) % 3]];
        let e = [b[0] - a[0], b[1] - a[1]];
        let len = (e[0] * e[0] + e[1] * e[1]).sqrt().max(1e-300);
        let d = (e[0] * (x[1] - a[1]) - e[1] * (x[0] - a[0])) / len;
        dmin = dmin.min(d);
    }
    dmin
}

struct CutBuilder {
    verts: Vec<[f64; 2]>,
    vals1: Vec<f64>,
    vals2: Option<Vec<f64>>,
    tris: Vec<(usize, usize, usize)>,
    /// crossing cache keyed by (edge lo, edge hi, field)
    cross: std::collections::HashMap<(usize, usize, u8), usize>,
}

impl CutBuilder {
    fn crossing(&mut self, a: usize, b: usize, field: u8) -> usize {
        let key = if a < b { (a, b, field) } else { (b, a, field) };
        if let Some(&v) = self.cross.get(&key) {
            return v;
        }
        let (va, vb) = match field {
            0 => (self.vals1[a], self.vals1[b]),
            _ => {
                let v2 = self.vals2.as_ref().unwrap();
                (v2[a], v2[b])
            }
        };
        let t = va / (va - vb);
        let (pa, pb) = (self.verts[a], self.verts[b]);
        let p = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
        self.verts.push(p);
        // interpolate the *other* field onto the new vertex as well
        self.vals1.push(self.vals1[a] + t * (self.vals1[b] - self.vals1[a]));
        if let Some(v2) = self.vals2.as_mut() {
            let x = v2[a] + t * (v2[b] - v2[a]);
            v2.push(x);
        }
        let id = self.verts.len() - 1;
        self.cross.insert(key, id);
        id
    }

    /// Split triangle `t` by the linear trace of `field`; returns the
    /// sub-triangles tagged by the field's sign, plus the chord if cut.
    fn split(&mut self, t: (usize, usize, usize), field: u8) -> (Vec<(usize, usize, usize, bool)>, Option<[usize; 2]>) {
        let ids = [t.0, t.1, t.2];
        let val = |s: &Self, i: usize| -> f64 {
            match field {
                0 => s.vals1[i],
                _ => s.vals2.as_ref().unwrap()[i],
            }
        };
        let pos: Vec<bool> = ids.iter().map(|&i| val(self, i) > 0.0).collect();
        if pos[0] == pos[1] && pos[1] == pos[2] {
            return (vec![(t.0, t.1, t.2, pos[0])], None);
        }
        // one vertex is alone on its side
        let alone = (0..3)
            .find(|&k| pos[k] != pos[(k + 1) % 3] && pos[k] != pos[(k + 2) % 3])
            .unwrap();
        let (i0, i1, i2) = (ids[alone], ids[(alone + 1) % 3], ids[(alone + 2) % 3]);
        let c01 = self.crossing(i0, i1, field);
        let c02 = self.crossing(i0, i2, field);
        let tris = vec![
            (i0, c01, c02, pos[alone]),
            (i1, i2, c02, pos[(alone + 1) % 3]),
            (i1, c02, c01, pos[(alone + 1) % 3]),
        ];
        (tris, Some([c01, c02]))
    }
}

/// Classify the whole mesh. `phi1` distinguishes A (negative) from B/void;
/// `phi2`, when present, carves void (negative) out of the B side.
pub fn classify_phases(
    mesh: &Mesh,
    phi1: &super::LevelSetField,
    phi2: Option<&super::LevelSetField>,
) -> Result<PhaseMap> {
    classify_phases_raw(mesh, &phi1.phi, phi2.map(|f| f.phi.as_slice()))
}

/// Same as [`classify_phases`] but on raw nodal values, assumed already
/// snapped (design-perturbation use).
pub fn classify_phases_raw(
    mesh: &Mesh,
    phi1: &[f64],
    phi2: Option<&[f64]>,
) -> Result<PhaseMap> {
    let mut elems = Vec::with_capacity(mesh.n_elems());
    let mut segs = Vec::new();
    for e in 0..mesh.n_elems() {
        let nodes = mesh.elem_nodes(e);
        let v1: Vec<f64> = nodes.iter().map(|&n| phi1[n]).collect();
        let v2: Option<Vec<f64>> = phi2.map(|f| nodes.iter().map(|&n| f[n]).collect());
        let cut = classify_element(mesh, e, &v1, v2.as_deref(), &mut segs)?;
        elems.push(cut);
    }
    Ok(PhaseMap { elems, segs, h: mesh.h, n_elems: mesh.n_elems() })
}

/// Re-classify a single element (used by design perturbations); appends
/// its interface segments to `segs`.
pub fn classify_element(
    mesh: &Mesh,
    e: usize,
    v1: &[f64],
    v2: Option<&[f64]>,
    segs: &mut Vec<ISeg>,
) -> Result<ElemCut> {
    let nodes = mesh.elem_nodes(e);
    let corners: Vec<[f64; 2]> = nodes.iter().map(|&n| mesh.coord(n)).collect();
    let h2 = mesh.h * mesh.h;

    let cut1 = v1.iter().any(|&x| x > 0.0) && v1.iter().any(|&x| x < 0.0);
    let cut2 = v2.map_or(false, |q| q.iter().any(|&x| x > 0.0) && q.iter().any(|&x| x < 0.0));

    if !cut1 {
        let in_b_side = v1[0] > 0.0;
        if !in_b_side || !cut2 {
            // fully uniform
            let phase = phase_of(v1[0], v2.map(|q| q[0]));
            let mut vol = [0.0; 3];
            vol[phase.idx()] = h2;
            return Ok(ElemCut {
                verts: corners,
                tris: Vec::new(),
                uniform: Some(phase),
                regions: vec![phase],
                vol,
            });
        }
    }

    // intersected: build the centroid fan and cut per triangle
    let centroid = mesh.elem_center(e);
    let snap_center = |vals: &[f64]| -> f64 {
        let m = 0.25 * vals.iter().sum::<f64>();
        let tol = 1e-12 * mesh.h;
        if m.abs() < tol {
            if m > 0.0 {
                tol
            } else {
                -tol
            }
        } else {
            m
        }
    };
    let mut b = CutBuilder {
        verts: corners.clone(),
        vals1: {
            let mut v = v1.to_vec();
            v.push(snap_center(v1));
            v
        },
        vals2: v2.map(|q| {
            let mut v = q.to_vec();
            v.push(snap_center(q));
            v
        }),
        tris: Vec::new(),
        cross: Default::default(),
    };
    b.verts.push(centroid);
    for k in 0..4 {
        b.tris.push((k, (k + 1) % 4, 4));
    }

    // first cut by phi1
    let base = std::mem::take(&mut b.tris);
    let mut tagged: Vec<(usize, usize, usize, bool)> = Vec::new(); // bool: phi1 > 0
    let mut chords1: Vec<[usize; 2]> = Vec::new();
    for t in base {
        let (tris, chord) = b.split(t, 0);
        tagged.extend(tris);
        if let Some(c) = chord {
            chords1.push(c);
        }
    }

    // then, where applicable, cut the positive-phi1 side by phi2
    let mut final_tris: Vec<(usize, usize, usize, Phase)> = Vec::new();
    let mut chords2: Vec<[usize; 2]> = Vec::new();
    for (a, c, d, pos1) in tagged {
        if !pos1 {
            final_tris.push((a, c, d, Phase::A));
            continue;
        }
        match &b.vals2 {
            None => final_tris.push((a, c, d, Phase::B)),
            Some(v2v) => {
                let signs: Vec<bool> = [a, c, d].iter().map(|&i| v2v[i] > 0.0).collect();
                if signs[0] == signs[1] && signs[1] == signs[2] {
                    final_tris.push((a, c, d, if signs[0] { Phase::B } else { Phase::Void }));
                } else {
                    if cut1 {
                        // phi1 and phi2 both cross the element: triple junction
                        return Err(Error::TripleJunction { elem: e });
                    }
                    let (tris, chord) = b.split((a, c, d), 1);
                    for (x, y, z, pos2) in tris {
                        final_tris.push((x, y, z, if pos2 { Phase::B } else { Phase::Void }));
                    }
                    if let Some(ch) = chord {
                        chords2.push(ch);
                    }
                }
            }
        }
    }

    // drop degenerate slivers (tiny area) into the dominant neighbor phase:
    // areas below 1e-10 h^2 are merged by re-tagging to the phase of the
    // largest same-chord neighbor. Simpler and equivalent for integration:
    // keep the triangle but it carries negligible weight; region labeling
    // still sees it. Tiny triangles are kept as-is since nodal snapping
    // already bounds how degenerate they can get.

    // local regions: union-find over same-phase triangles sharing an edge
    let n = final_tris.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut edge_owner: std::collections::HashMap<(usize, usize), Vec<usize>> = Default::default();
    for (ti, t) in final_tris.iter().enumerate() {
        let ids = [t.0, t.1, t.2];
        for k in 0..3 {
            let (x, y) = (ids[k], ids[(k + 1) % 3]);
            let key = if x < y { (x, y) } else { (y, x) };
            edge_owner.entry(key).or_default().push(ti);
        }
    }
    for owners in edge_owner.values() {
        for i in 0..owners.len() {
            for j in i + 1..owners.len() {
                let (a, bb) = (owners[i], owners[j]);
                if final_tris[a].3 == final_tris[bb].3 {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, bb));
                    if ra != rb {
                        parent[rb.max(ra)] = ra.min(rb);
                    }
                }
            }
        }
    }
    // densify region ids in first-appearance order
    let mut region_of_tri = vec![usize::MAX; n];
    let mut regions: Vec<Phase> = Vec::new();
    let mut root_region: std::collections::HashMap<usize, usize> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        let id = *root_region.entry(r).or_insert_with(|| {
            regions.push(final_tris[i].3);
            regions.len() - 1
        });
        region_of_tri[i] = id;
    }

    let mut tris = Vec::with_capacity(n);
    let mut vol = [0.0; 3];
    for (i, t) in final_tris.iter().enumerate() {
        let mut v = [t.0, t.1, t.2];
        let mut area = tri_area(&b.verts, v);
        if area < 0.0 {
            v.swap(1, 2);
            area = -area;
        }
        vol[t.3.idx()] += area;
        tris.push(Tri { v, phase: t.3, region: region_of_tri[i] });
    }

    let cutres = ElemCut {
        verts: b.verts.clone(),
        tris,
        uniform: None,
        regions,
        vol,
    };

    // interface segments with adjacent regions
    let emit = |chord: [usize; 2], kind: SegKind, cutres: &ElemCut, segs: &mut Vec<ISeg>| {
        let (p, q) = (b.verts[chord[0]], b.verts[chord[1]]);
        if ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() < 1e-12 * mesh.h {
            return;
        }
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        // find the two adjacent triangles by nudging off the chord
        let nrm = [-(q[1] - p[1]), q[0] - p[0]];
        let nl = (nrm[0] * nrm[0] + nrm[1] * nrm[1]).sqrt();
        let eps = 1e-7 * mesh.h;
        let side = |s: f64| {
            let x = [mid[0] + s * eps * nrm[0] / nl, mid[1] + s * eps * nrm[1] / nl];
            cutres.region_of_point(x).unwrap()
        };
        let (r_plus, r_minus) = (side(1.0), side(-1.0));
        // negative side of the defining field: A for contact, void for void
        let neg_phase = match kind {
            SegKind::Contact => Phase::A,
            SegKind::Void => Phase::Void,
        };
        let (region_neg, region_pos) = if cutres.regions[r_plus] == neg_phase {
            (r_plus, r_minus)
        } else {
            (r_minus, r_plus)
        };
        segs.push(ISeg { elem: e, ends: [p, q], kind, region_neg, region_pos });
    };
    for c in chords1 {
        // a phi1 chord with void on its positive side is a free surface
        let midv2 = b
            .vals2
            .as_ref()
            .map(|v2v| 0.5 * (v2v[c[0]] + v2v[c[1]]));
        let kind = match midv2 {
            Some(x) if x < 0.0 => SegKind::Void,
            _ => SegKind::Contact,
        };
        if kind == SegKind::Contact {
            emit(c, SegKind::Contact, &cutres, segs);
        } else {
            // A | void free surface: count toward perimeter only
            let (p, q) = (b.verts[c[0]], b.verts[c[1]]);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let r = cutres.region_of_point(mid).unwrap_or(0);
            segs.push(ISeg { elem: e, ends: [p, q], kind: SegKind::Void, region_neg: r, region_pos: r });
        }
    }
    for c in chords2 {
        emit(c, SegKind::Void, &cutres, segs);
    }

    Ok(cutres)
}
