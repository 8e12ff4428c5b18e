//! Finite-volume discretization of `∇·(σ_s ∇φ) = j(φ)` on the p-sheet.
//!
//! Unknowns are the potentials of free mesh nodes plus one potential per
//! contact: all nodes tagged with the same pad are merged into a single
//! equipotential unknown. A driven contact connects that unknown to its
//! source through the ridge series resistance; a floating contact only
//! enforces zero net current.

use std::collections::BTreeMap;

use super::diode::diode_with_slope;
use crate::device::{
    build_geometry, generate_mesh, DeviceGeometry, Footprint, MaterialParams, Mesh, NodeTag,
    Terminal,
};
use crate::error::{Error, Result};
use crate::sparse::SkylineCholesky;

#[derive(Debug, Clone)]
pub(crate) struct Discretization {
    pub node_dof: Vec<usize>,
    /// One representative node per unknown.
    pub dof_node: Vec<usize>,
    pub terminal_dof: [Option<usize>; 3],
    /// `(i, j, w)`: dimensionless edge weight, conductance is `σ_s * w`
    /// (times the ridge factor for edges inside a ridge).
    pub edges: Vec<(usize, usize, f64)>,
    /// Ridge containing each edge, if any.
    pub edge_ridge: Vec<Option<usize>>,
    /// Lumped junction area per unknown, µm².
    pub area: Vec<f64>,
    /// Contributions of each unknown to `∇φ` at the QD node, 1/µm.
    pub grad: Vec<(usize, [f64; 2])>,
    pub adjacency: Vec<Vec<usize>>,
}

impl Discretization {
    fn new(mesh: &Mesh, footprint: &Footprint) -> Discretization {
        let n_nodes = mesh.node_count();
        let mut node_dof = vec![usize::MAX; n_nodes];
        let mut dof_node = Vec::new();
        let mut terminal_dof = [None; 3];
        for (i, tag) in mesh.tags().iter().enumerate() {
            if *tag == NodeTag::Free {
                node_dof[i] = dof_node.len();
                dof_node.push(i);
            }
        }
        for t in Terminal::ALL {
            let nodes = mesh.tagged(NodeTag::Pad(t));
            if let Some(&rep) = nodes.first() {
                let d = dof_node.len();
                dof_node.push(rep);
                terminal_dof[t.index()] = Some(d);
                for n in nodes {
                    node_dof[n] = d;
                }
            }
        }
        let n = dof_node.len();

        let mut weights: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        let mut area = vec![0.0; n];
        let mut grad_acc: BTreeMap<usize, [f64; 2]> = BTreeMap::new();
        let mut grad_area = 0.0;
        let qd = mesh.qd_node();
        let pts = mesh.nodes();
        for (c, cell) in mesh.cells().iter().enumerate() {
            let a2 = 2.0 * mesh.cell_area(c);
            for k in 0..3 {
                let (i, j, o) = (cell[k], cell[(k + 1) % 3], cell[(k + 2) % 3]);
                let ei = [pts[i][0] - pts[o][0], pts[i][1] - pts[o][1]];
                let ej = [pts[j][0] - pts[o][0], pts[j][1] - pts[o][1]];
                // cot of the angle opposite edge (i, j), halved.
                let w = (ei[0] * ej[0] + ei[1] * ej[1]) / (2.0 * a2);
                let (di, dj) = (node_dof[i], node_dof[j]);
                if di != dj {
                    let mid = [0.5 * (pts[i][0] + pts[j][0]), 0.5 * (pts[i][1] + pts[j][1])];
                    let ridge = ridge_of(footprint, mid).unwrap_or(NO_RIDGE);
                    *weights
                        .entry((di.min(dj), di.max(dj), ridge))
                        .or_insert(0.0) += w;
                }
                area[node_dof[cell[k]]] += a2 / 6.0;
            }
            if cell.contains(&qd) {
                let area_c = 0.5 * a2;
                grad_area += area_c;
                for k in 0..3 {
                    let (j, l) = (cell[(k + 1) % 3], cell[(k + 2) % 3]);
                    // ∇λ_k = perp(p_l - p_j) / (2A), weighted by the cell area.
                    let g = [
                        (pts[j][1] - pts[l][1]) / a2 * area_c,
                        (pts[l][0] - pts[j][0]) / a2 * area_c,
                    ];
                    let e = grad_acc.entry(node_dof[cell[k]]).or_insert([0.0; 2]);
                    e[0] += g[0];
                    e[1] += g[1];
                }
            }
        }
        let grad = grad_acc
            .into_iter()
            .map(|(d, g)| (d, [g[0] / grad_area, g[1] / grad_area]))
            .collect();
        let edges: Vec<(usize, usize, f64)> =
            weights.iter().map(|(&(i, j, _), &w)| (i, j, w)).collect();
        let edge_ridge = weights
            .keys()
            .map(|&(_, _, r)| (r != NO_RIDGE).then_some(r))
            .collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, _) in &edges {
            if !adjacency[i].contains(&j) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        Discretization {
            node_dof,
            dof_node,
            terminal_dof,
            edges,
            edge_ridge,
            area,
            grad,
            adjacency,
        }
    }

    pub fn dofs(&self) -> usize {
        self.dof_node.len()
    }

    /// Sheet conductance of every edge, S.
    fn conductances(&self, m: &MaterialParams) -> Vec<f64> {
        self.edges
            .iter()
            .zip(&self.edge_ridge)
            .map(|(&(_, _, w), r)| {
                let factor = r.map_or(1.0, |k| m.ridge_conductance_factor[k]);
                m.sheet_conductance * factor * w
            })
            .collect()
    }
}

const NO_RIDGE: usize = usize::MAX;

/// Index of the ridge whose rectangle (between the rim chord and the pad)
/// contains `p`.
fn ridge_of(footprint: &Footprint, p: [f64; 2]) -> Option<usize> {
    const EPS: f64 = 1e-9;
    footprint.arms.iter().position(|arm| {
        let s = p[0] * arm.u[0] + p[1] * arm.u[1];
        let t = p[0] * arm.v[0] + p[1] * arm.v[1];
        s > arm.s_chord + EPS && s < arm.s_pad - EPS && t.abs() <= arm.half_width + EPS
    })
}

/// Geometry, materials and discretization of one device, immutable after
/// construction and shareable across concurrent solves.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    geometry: DeviceGeometry,
    materials: MaterialParams,
    mesh: Mesh,
    pub(crate) disc: Discretization,
    /// Edge conductances, S, aligned with `disc.edges`.
    pub(crate) conductance: Vec<f64>,
    pub(crate) pattern: SkylineCholesky,
}

impl DeviceModel {
    /// Builds the footprint and mesh and prepares the discretization.
    pub fn new(
        geometry: &DeviceGeometry,
        materials: &MaterialParams,
        edge_length: f64,
    ) -> Result<DeviceModel> {
        let mesh = generate_mesh(&build_geometry(geometry)?, edge_length)?;
        DeviceModel::from_mesh(geometry, materials, mesh)
    }

    pub fn from_mesh(
        geometry: &DeviceGeometry,
        materials: &MaterialParams,
        mesh: Mesh,
    ) -> Result<DeviceModel> {
        geometry.validate()?;
        materials.validate()?;
        let footprint = build_geometry(geometry)?;
        let disc = Discretization::new(&mesh, &footprint);
        let conductance = disc.conductances(materials);
        let pattern = SkylineCholesky::new(&disc.adjacency);
        Ok(DeviceModel {
            geometry: geometry.clone(),
            materials: materials.clone(),
            mesh,
            disc,
            conductance,
            pattern,
        })
    }

    /// Same mesh, different material parameters.
    pub fn with_materials(&self, materials: &MaterialParams) -> Result<DeviceModel> {
        materials.validate()?;
        Ok(DeviceModel {
            materials: materials.clone(),
            conductance: self.disc.conductances(materials),
            ..self.clone()
        })
    }

    pub fn geometry(&self) -> &DeviceGeometry {
        &self.geometry
    }

    pub fn materials(&self) -> &MaterialParams {
        &self.materials
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Number of unknowns after merging pad nodes.
    pub fn unknowns(&self) -> usize {
        self.disc.dofs()
    }

    /// Unknown index of every mesh node.
    pub fn node_unknown(&self) -> &[usize] {
        &self.disc.node_dof
    }

    pub fn terminal_unknown(&self, t: Terminal) -> Option<usize> {
        self.disc.terminal_dof[t.index()]
    }

    pub fn total_junction_area(&self) -> f64 {
        self.disc.area.iter().sum()
    }

    pub(crate) fn nodes_to_dofs(&self, phi_nodes: &[f64]) -> Result<Vec<f64>> {
        if phi_nodes.len() != self.mesh.node_count() {
            return Err(Error::Dimension {
                expected: self.mesh.node_count(),
                got: phi_nodes.len(),
            });
        }
        Ok(self.disc.dof_node.iter().map(|&n| phi_nodes[n]).collect())
    }

    pub(crate) fn dofs_to_nodes(&self, phi: &[f64]) -> Vec<f64> {
        self.disc.node_dof.iter().map(|&d| phi[d]).collect()
    }

    /// Residual (net current leaving each unknown, A) and a per-unknown
    /// magnitude scale used for relative convergence.
    pub(crate) fn residual(&self, sources: &[Option<f64>; 3], phi: &[f64]) -> (Vec<f64>, f64) {
        let d = &self.disc;
        let m = &self.materials;
        let mut f = vec![0.0; phi.len()];
        let mut mag = vec![0.0; phi.len()];
        for (&(i, j, _), &g) in d.edges.iter().zip(&self.conductance) {
            let flux = g * (phi[i] - phi[j]);
            f[i] += flux;
            f[j] -= flux;
            mag[i] += flux.abs();
            mag[j] += flux.abs();
        }
        for k in 0..phi.len() {
            let (jd, _) = diode_with_slope(phi[k], m);
            let sink = d.area[k] * jd;
            f[k] += sink;
            mag[k] += sink.abs();
        }
        for t in Terminal::ALL {
            if let (Some(k), Some(v)) = (d.terminal_dof[t.index()], sources[t.index()]) {
                let i_src = (phi[k] - v) / m.series(t);
                f[k] += i_src;
                mag[k] += i_src.abs();
            }
        }
        let floor = m.sheet_conductance * m.thermal_voltage;
        let scale = mag.iter().copied().fold(floor, f64::max);
        (f, scale)
    }

    /// Accumulates the Jacobian into `jac` (pattern from this model).
    pub(crate) fn jacobian(
        &self,
        sources: &[Option<f64>; 3],
        phi: &[f64],
        jac: &mut SkylineCholesky,
    ) {
        let d = &self.disc;
        let m = &self.materials;
        jac.clear();
        for (&(i, j, _), &g) in d.edges.iter().zip(&self.conductance) {
            jac.add(i, i, g);
            jac.add(j, j, g);
            jac.add(i, j, -g);
        }
        for k in 0..phi.len() {
            let (_, dj) = diode_with_slope(phi[k], m);
            jac.add(k, k, d.area[k] * dj);
        }
        for t in Terminal::ALL {
            if let (Some(k), Some(_)) = (d.terminal_dof[t.index()], sources[t.index()]) {
                jac.add(k, k, 1.0 / m.series(t));
            }
        }
    }

    /// In-plane gradient of φ at the QD node, V/µm.
    pub(crate) fn qd_gradient(&self, phi: &[f64]) -> [f64; 2] {
        self.disc.grad.iter().fold([0.0; 2], |acc, &(k, g)| {
            [acc[0] + g[0] * phi[k], acc[1] + g[1] * phi[k]]
        })
    }
}

/// Residual and Jacobian of the discrete system at a given potential.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Net current leaving each unknown, A.
    pub residual: Vec<f64>,
    /// Symmetric Jacobian as `(row, col, value)` triplets over unknowns;
    /// both triangles are listed and duplicates must be summed.
    pub jacobian: Vec<(usize, usize, f64)>,
    /// Unknown index of every mesh node.
    pub node_unknown: Vec<usize>,
}

impl AssembledSystem {
    pub fn jacobian_dense(&self) -> Vec<Vec<f64>> {
        let n = self.residual.len();
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j, v) in &self.jacobian {
            a[i][j] += v;
        }
        a
    }
}

/// Evaluates the discrete equations for node potentials `phi` (one value per
/// mesh node; pad nodes take the value of their contact's representative
/// node).
pub fn assemble_system(
    model: &DeviceModel,
    bias: &super::BiasPoint,
    phi: &[f64],
) -> Result<AssembledSystem> {
    bias.validate()?;
    let dofs = model.nodes_to_dofs(phi)?;
    let sources = bias.voltages();
    let (residual, _) = model.residual(&sources, &dofs);

    let d = &model.disc;
    let m = &model.materials;
    let mut jacobian = Vec::new();
    for (&(i, j, _), &g) in d.edges.iter().zip(&model.conductance) {
        jacobian.extend([(i, i, g), (j, j, g), (i, j, -g), (j, i, -g)]);
    }
    for (k, &p) in dofs.iter().enumerate() {
        jacobian.push((k, k, d.area[k] * diode_with_slope(p, m).1));
    }
    for t in Terminal::ALL {
        if let (Some(k), Some(_)) = (d.terminal_dof[t.index()], sources[t.index()]) {
            jacobian.push((k, k, 1.0 / m.series(t)));
        }
    }
    Ok(AssembledSystem {
        residual,
        jacobian,
        node_unknown: d.node_dof.clone(),
    })
}
