//! Structured triangulation of the footprint.
//!
//! The pillar is meshed as concentric rings that are scaled copies of the rim
//! profile, stitched ring-to-ring by an angular merge. Ridges and pads are
//! tensor-product grids in their arm frame and share nodes with the rim
//! chords and with each other, so the whole mesh is conforming. Ring node
//! counts are multiples of three and ring phases are tied to the first ridge,
//! which makes the mesh of a 120°-symmetric layout itself 120°-symmetric.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;

use super::geometry::{Footprint, Terminal};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeTag {
    Free,
    Pad(Terminal),
}

impl fmt::Display for NodeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeTag::Free => f.write_str("FREE"),
            NodeTag::Pad(t) => write!(f, "PAD_{}", t.label()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    tags: Vec<NodeTag>,
    qd_node: usize,
}

impl Mesh {
    /// Assembles a mesh from raw parts and checks its invariants: positive
    /// cell orientation, a single connected component and at least one
    /// contact node.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        tags: Vec<NodeTag>,
        qd_node: usize,
    ) -> Result<Mesh> {
        if nodes.is_empty() || cells.is_empty() {
            return Err(Error::Mesh("empty mesh".into()));
        }
        if tags.len() != nodes.len() {
            return Err(Error::Dimension {
                expected: nodes.len(),
                got: tags.len(),
            });
        }
        if qd_node >= nodes.len() {
            return Err(Error::Mesh("qd_node out of range".into()));
        }
        if nodes.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Mesh("non-finite node coordinate".into()));
        }
        let mesh = Mesh {
            nodes,
            cells,
            tags,
            qd_node,
        };
        for (c, cell) in mesh.cells.iter().enumerate() {
            if cell.iter().any(|&n| n >= mesh.nodes.len()) {
                return Err(Error::Mesh(format!("cell {c} references a missing node")));
            }
            if mesh.cell_area(c) <= 0.0 {
                return Err(Error::Mesh(format!("cell {c} has non-positive area")));
            }
        }
        if !mesh.is_connected() {
            return Err(Error::Mesh("mesh is not connected".into()));
        }
        if !mesh.tags.iter().any(|t| matches!(t, NodeTag::Pad(_))) {
            return Err(Error::Mesh("mesh has no contact nodes".into()));
        }
        Ok(mesh)
    }

    /// Rectangular strip `[0, length] x [0, width]` with contact A on the
    /// left edge and contact B on the right edge. Used for Laplace-limit
    /// checks. `nx` and `ny` must be even so that a node sits at the center.
    pub fn rectangle_strip(length: f64, width: f64, nx: usize, ny: usize) -> Result<Mesh> {
        if nx < 2 || ny < 2 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::Mesh("strip needs even nx, ny >= 2".into()));
        }
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut tags = Vec::with_capacity(nodes.capacity());
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([length * i as f64 / nx as f64, width * j as f64 / ny as f64]);
                tags.push(match i {
                    0 => NodeTag::Pad(Terminal::A),
                    i if i == nx => NodeTag::Pad(Terminal::B),
                    _ => NodeTag::Free,
                });
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut cells = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                cells.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                cells.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Mesh::new(nodes, cells, tags, id(nx / 2, ny / 2))
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn tags(&self) -> &[NodeTag] {
        &self.tags
    }

    pub fn qd_node(&self) -> usize {
        self.qd_node
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tagged(&self, tag: NodeTag) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.tags[i] == tag)
            .collect()
    }

    /// Signed area of a cell (positive for counter-clockwise ordering).
    pub fn cell_area(&self, c: usize) -> f64 {
        let [a, b, d] = self.cells[c].map(|n| self.nodes[n]);
        0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_area(c)).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.cells
            .iter()
            .flat_map(|cell| {
                (0..3).map(move |k| {
                    let p = self.nodes[cell[k]];
                    let q = self.nodes[cell[(k + 1) % 3]];
                    (p[0] - q[0]).hypot(p[1] - q[1])
                })
            })
            .fold(0.0, f64::max)
    }

    fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for cell in &self.cells {
            for k in 1..3 {
                let a = find(&mut parent, cell[0]);
                let b = find(&mut parent, cell[k]);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let root = find(&mut parent, 0);
        (0..n).all(|i| find(&mut parent, i) == root)
    }

    /// Writes `<stem>_nodes.csv` and `<stem>_cells.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path, stem: &str) -> Result<()> {
        let nodes_path = dir.join(format!("{stem}_nodes.csv"));
        let mut out = String::from("node,x_um,y_um,tag\n");
        for (i, (p, t)) in self.nodes.iter().zip(&self.tags).enumerate() {
            out.push_str(&format!("{i},{},{},{t}\n", p[0], p[1]));
        }
        crate::output::write_atomic(&nodes_path, out.as_bytes())?;

        let cells_path = dir.join(format!("{stem}_cells.csv"));
        let mut buf = Vec::new();
        writeln!(buf, "cell,n0,n1,n2").unwrap();
        for (c, [a, b, d]) in self.cells.iter().enumerate() {
            writeln!(buf, "{c},{a},{b},{d}").unwrap();
        }
        crate::output::write_atomic(&cells_path, &buf)
    }
}

/// Meshes a footprint with cells whose edges do not exceed about
/// `target_edge_length` (never more than twice it).
pub fn generate_mesh(footprint: &Footprint, target_edge_length: f64) -> Result<Mesh> {
    let h = target_edge_length;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Mesh("target_edge_length must be > 0".into()));
    }
    let g = &footprint.geometry;
    let r = footprint.pillar_radius();
    if h > r {
        return Err(Error::Mesh(format!(
            "target_edge_length {h} µm cannot resolve a {r} µm pillar radius"
        )));
    }
    let mut b = Builder::default();
    let center = b.node([0.0, 0.0], NodeTag::Free);

    // Rim: chord nodes for each ridge, arc nodes in between.
    let order = footprint.arms_ccw();
    let alpha = footprint.chord_half_angle;
    let n_w = 2 * ((g.ridge_width / (2.0 * h)).ceil() as usize).max(1);
    let t_ridge: Vec<f64> = (0..=n_w)
        .map(|j| -0.5 * g.ridge_width + g.ridge_width * j as f64 / n_w as f64)
        .collect();
    let dtheta_max = (2.0 * PI / g.rim_segments as f64).min(h / r);
    let mut rim = Vec::new();
    let mut chords: [Vec<usize>; 3] = Default::default();
    for (pos, &k) in order.iter().enumerate() {
        let arm = footprint.arms[k];
        for &t in &t_ridge {
            let id = b.node(arm.point(arm.s_chord, t), NodeTag::Free);
            chords[k].push(id);
            rim.push(id);
        }
        let next = footprint.arms[order[(pos + 1) % 3]];
        let start = arm.angle + alpha;
        let span = (next.angle - alpha - start).rem_euclid(2.0 * PI);
        let m = ((span / dtheta_max).ceil() as usize).max(1);
        for q in 1..m {
            let th = start + span * q as f64 / m as f64;
            rim.push(b.node([r * th.cos(), r * th.sin()], NodeTag::Free));
        }
    }

    // Interior rings are scaled copies of the rim profile.
    let theta_ref = footprint.arms[order[0]].angle;
    let rim_radius = |phi: f64| -> f64 {
        for arm in &footprint.arms {
            let d = (phi - arm.angle + PI).rem_euclid(2.0 * PI) - PI;
            if d.abs() < alpha {
                return arm.s_chord / d.cos();
            }
        }
        r
    };
    let k_rings = ((r / h).ceil() as usize).max(2);
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(k_rings);
    for k in 1..k_rings {
        let frac = k as f64 / k_rings as f64;
        let count = 3 * ((2.0 * PI * frac * r / (3.0 * h)).ceil() as usize).max(2);
        let phase = if k % 2 == 1 { 0.5 } else { 0.0 };
        let ring = (0..count)
            .map(|j| {
                let phi = theta_ref + 2.0 * PI * (j as f64 + phase) / count as f64;
                let rho = frac * rim_radius(phi);
                b.node([rho * phi.cos(), rho * phi.sin()], NodeTag::Free)
            })
            .collect();
        rings.push(ring);
    }
    rings.push(rim);

    let first = &rings[0];
    for j in 0..first.len() {
        b.tri(center, first[j], first[(j + 1) % first.len()]);
    }
    for k in 0..rings.len() - 1 {
        let (inner, outer) = (rings[k].clone(), rings[k + 1].clone());
        b.zip(&inner, &outer);
    }

    // Ridges and pads.
    for k in 0..3 {
        let arm = footprint.arms[k];
        let n_l = ((g.ridge_length / h).ceil() as usize).max(1);
        let mut grid: Vec<Vec<usize>> = vec![chords[k].clone()];
        for i in 1..=n_l {
            let s = arm.s_chord + g.ridge_length * i as f64 / n_l as f64;
            grid.push(
                t_ridge
                    .iter()
                    .map(|&t| b.node(arm.point(s, t), NodeTag::Free))
                    .collect(),
            );
        }
        b.quads(&grid, &t_ridge);

        let side = 0.5 * (g.pad_size - g.ridge_width);
        let m_side = ((side / h).ceil() as usize).max(1);
        let mut t_pad: Vec<f64> = (0..m_side)
            .map(|q| -arm.pad_half + side * q as f64 / m_side as f64)
            .collect();
        t_pad.extend_from_slice(&t_ridge);
        t_pad.extend((1..=m_side).map(|q| arm.half_width + side * q as f64 / m_side as f64));
        let n_p = ((g.pad_size / h).ceil() as usize).max(1);
        let last_col = t_pad.len() - 1;
        let ridge_end = grid.last().unwrap().clone();
        let tag = NodeTag::Pad(Terminal::ALL[k]);
        let mut pad: Vec<Vec<usize>> = Vec::with_capacity(n_p + 1);
        for i in 0..=n_p {
            let s = arm.s_pad + g.pad_size * i as f64 / n_p as f64;
            let row = (0..t_pad.len())
                .map(|c| {
                    if i == 0 && (m_side..=m_side + n_w).contains(&c) {
                        return ridge_end[c - m_side];
                    }
                    let on_contact = c == 0 || c == last_col || i == n_p;
                    b.node(
                        arm.point(s, t_pad[c]),
                        if on_contact { tag } else { NodeTag::Free },
                    )
                })
                .collect();
            pad.push(row);
        }
        b.quads(&pad, &t_pad);
    }

    let mesh = Mesh::new(b.nodes, b.cells, b.tags, center)?;
    for t in Terminal::ALL {
        if mesh.tagged(NodeTag::Pad(t)).is_empty() {
            return Err(Error::Mesh(format!(
                "pad {} has no contact nodes",
                t.label()
            )));
        }
    }
    Ok(mesh)
}

#[derive(Default)]
struct Builder {
    nodes: Vec<[f64; 2]>,
    tags: Vec<NodeTag>,
    cells: Vec<[usize; 3]>,
}

impl Builder {
    fn node(&mut self, p: [f64; 2], tag: NodeTag) -> usize {
        self.nodes.push(p);
        self.tags.push(tag);
        self.nodes.len() - 1
    }

    /// Adds a triangle, fixing its orientation to counter-clockwise.
    fn tri(&mut self, a: usize, b: usize, c: usize) {
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let cross = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        if cross >= 0.0 {
            self.cells.push([a, b, c]);
        } else {
            self.cells.push([a, c, b]);
        }
    }

    /// Tensor-product grid in an arm frame: `grid[i][c]` is the node at axial
    /// row `i` and transverse column `c`. Diagonals mirror about `t = 0`.
    fn quads(&mut self, grid: &[Vec<usize>], t: &[f64]) {
        for i in 0..grid.len() - 1 {
            for c in 0..t.len() - 1 {
                let p00 = grid[i][c];
                let p10 = grid[i + 1][c];
                let p11 = grid[i + 1][c + 1];
                let p01 = grid[i][c + 1];
                if t[c] + t[c + 1] < 0.0 {
                    self.tri(p00, p10, p11);
                    self.tri(p00, p11, p01);
                } else {
                    self.tri(p00, p10, p01);
                    self.tri(p10, p11, p01);
                }
            }
        }
    }

    /// Stitches two closed, counter-clockwise node rings by merging their
    /// angular order. The result does not depend on where the merge starts.
    fn zip(&mut self, inner: &[usize], outer: &[usize]) {
        let angle = |n: usize| {
            let p = self.nodes[n];
            p[1].atan2(p[0])
        };
        let mut all: Vec<f64> = inner
            .iter()
            .chain(outer)
            .map(|&n| angle(n).rem_euclid(2.0 * PI))
            .collect();
        all.sort_by(f64::total_cmp);
        // Start the sweep in the middle of the widest angular gap.
        let mut seam = 0.0;
        let mut widest = -1.0;
        for i in 0..all.len() {
            let a = all[i];
            let b = if i + 1 < all.len() {
                all[i + 1]
            } else {
                all[0] + 2.0 * PI
            };
            if b - a > widest {
                widest = b - a;
                seam = 0.5 * (a + b);
            }
        }
        let sorted = |ring: &[usize]| {
            let mut v: Vec<(f64, usize)> = ring
                .iter()
                .map(|&n| ((angle(n) - seam).rem_euclid(2.0 * PI), n))
                .collect();
            v.sort_by(|x, y| x.0.total_cmp(&y.0));
            v
        };
        let ins = sorted(inner);
        let outs = sorted(outer);
        let mut cur_in = ins.last().unwrap().1;
        let mut cur_out = outs.last().unwrap().1;
        let (mut i, mut o) = (0, 0);
        const TIE: f64 = 1e-9;
        while i < ins.len() || o < outs.len() {
            let take_inner = match (ins.get(i), outs.get(o)) {
                (Some(a), Some(b)) => a.0 <= b.0 + TIE,
                (Some(_), None) => true,
                _ => false,
            };
            if take_inner {
                let next = ins[i].1;
                self.tri(cur_in, next, cur_out);
                cur_in = next;
                i += 1;
            } else {
                let next = outs[o].1;
                self.tri(cur_out, next, cur_in);
                cur_out = next;
                o += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::geometry::{build_geometry, DeviceGeometry};

    fn default_mesh(h: f64) -> Mesh {
        generate_mesh(&build_geometry(&DeviceGeometry::default()).unwrap(), h).unwrap()
    }

    #[test]
    fn default_mesh_has_three_pads() {
        let mesh = default_mesh(1.0);
        for t in Terminal::ALL {
            assert!(!mesh.tagged(NodeTag::Pad(t)).is_empty());
        }
        assert!(mesh.max_edge_length() <= 2.0 * 1.0);
    }

    #[test]
    fn mesh_covers_footprint_area() {
        let fp = build_geometry(&DeviceGeometry::default()).unwrap();
        let mesh = generate_mesh(&fp, 1.0).unwrap();
        // Only the rim arcs are polygonized; everything else is exact.
        let rel = (mesh.total_area() - fp.area()).abs() / fp.area();
        assert!(rel < 1e-3, "area mismatch {rel}");
    }

    #[test]
    fn refinement_quadruples_node_count() {
        let coarse = default_mesh(1.0).node_count() as f64;
        let fine = default_mesh(0.5).node_count() as f64;
        let ratio = fine / coarse;
        assert!((2.0..=6.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn qd_node_sits_at_pillar_center() {
        for h in [0.5, 1.0, 2.0] {
            let mesh = default_mesh(h);
            let p = mesh.nodes()[mesh.qd_node()];
            assert!(p[0].hypot(p[1]) <= 0.5 * h);
        }
    }

    #[test]
    fn symmetric_layout_gives_rotation_invariant_node_set() {
        let mesh = default_mesh(1.0);
        let rot = (120f64).to_radians();
        let (s, c) = rot.sin_cos();
        let mut pts: Vec<[f64; 2]> = mesh.nodes().to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        for p in mesh.nodes() {
            let q = [c * p[0] - s * p[1], s * p[0] + c * p[1]];
            let hit = pts
                .iter()
                .any(|x| (x[0] - q[0]).abs() < 1e-9 && (x[1] - q[1]).abs() < 1e-9);
            assert!(hit, "rotated node {q:?} missing");
        }
    }

    #[test]
    fn non_positive_edge_length_is_an_error() {
        let fp = build_geometry(&DeviceGeometry::default()).unwrap();
        assert!(generate_mesh(&fp, 0.0).is_err());
        assert!(generate_mesh(&fp, f64::NAN).is_err());
        assert!(generate_mesh(&fp, 50.0).is_err());
    }

    #[test]
    fn strip_mesh_tags_both_ends() {
        let m = Mesh::rectangle_strip(10.0, 2.0, 10, 2).unwrap();
        assert_eq!(m.tagged(NodeTag::Pad(Terminal::A)).len(), 3);
        assert_eq!(m.tagged(NodeTag::Pad(Terminal::B)).len(), 3);
        assert_eq!(m.nodes()[m.qd_node()], [5.0, 1.0]);
    }

    #[test]
    fn inverted_cell_is_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let tags = vec![NodeTag::Pad(Terminal::A); 3];
        assert!(Mesh::new(nodes.clone(), vec![[0, 2, 1]], tags.clone(), 0).is_err());
        assert!(Mesh::new(nodes, vec![[0, 1, 2]], tags, 0).is_ok());
    }
}
