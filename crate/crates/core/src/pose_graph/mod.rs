//! Pose graph with odometry, radio-distance and LiDAR constraints, optimised
//! by sparse Levenberg–Marquardt.
//!
//! The objective is `Σ ρ(eᵀ Ω e)` over all edges, where `e` is the edge
//! residual, `Ω` its information and `ρ` the identity or, for loop-closure
//! edges when configured, the Huber kernel. The first node is held fixed;
//! the remaining poses form the state vector in node-id order and are updated
//! additively on `(x, y, θ)`.

pub mod dump;
pub mod sparse;

use std::collections::{HashMap, VecDeque};

use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2D};
use sparse::{Ldl, Symbolic, UpperCsc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Odometry,
    RadioDistance,
    LidarRelPose,
}

impl EdgeKind {
    pub fn is_loop_closure(self) -> bool {
        !matches!(self, EdgeKind::Odometry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// Relative pose of node j in the frame of node i.
    RelativePose {
        measurement: Pose2D,
        information: Matrix3<f64>,
    },
    /// Euclidean distance between the two node positions.
    Distance { distance: f64, information: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub i: usize,
    pub j: usize,
    pub constraint: Constraint,
}

impl Edge {
    pub fn odometry(i: usize, j: usize, measurement: Pose2D, information: Matrix3<f64>) -> Self {
        Self {
            kind: EdgeKind::Odometry,
            i,
            j,
            constraint: Constraint::RelativePose {
                measurement,
                information,
            },
        }
    }

    pub fn lidar(i: usize, j: usize, measurement: Pose2D, information: Matrix3<f64>) -> Self {
        Self {
            kind: EdgeKind::LidarRelPose,
            i,
            j,
            constraint: Constraint::RelativePose {
                measurement,
                information,
            },
        }
    }

    pub fn radio(i: usize, j: usize, distance: f64, information: f64) -> Self {
        Self {
            kind: EdgeKind::RadioDistance,
            i,
            j,
            constraint: Constraint::Distance {
                distance,
                information,
            },
        }
    }

    /// Weighted squared residual `eᵀ Ω e` before any robust kernel.
    pub fn squared_error(&self, xi: &Pose2D, xj: &Pose2D) -> f64 {
        match (&self.constraint, residual(self, xi, xj)) {
            (Constraint::RelativePose { information, .. }, Residual::Pose(e)) => {
                (e.transpose() * information * e)[(0, 0)]
            }
            (Constraint::Distance { information, .. }, Residual::Distance(r)) => information * r * r,
            _ => unreachable!("residual shape follows constraint"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub pose: Pose2D,
    pub fixed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PoseGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Residual {
    Pose(Vector3<f64>),
    Distance(f64),
}

/// Residual and Jacobians of one edge at the current estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Linearization {
    Pose {
        residual: Vector3<f64>,
        jac_i: Matrix3<f64>,
        jac_j: Matrix3<f64>,
    },
    Distance {
        residual: f64,
        jac_i: RowVector3<f64>,
        jac_j: RowVector3<f64>,
    },
}

/// Below this separation a distance edge has no usable gradient direction.
pub const MIN_DISTANCE_SEPARATION: f64 = 1e-6;

/// Relative-pose edges: `between(z, between(xi, xj))` as `(Δx, Δy, Δθ)`.
/// Distance edges: `z − ‖t_i − t_j‖`.
pub fn residual(edge: &Edge, xi: &Pose2D, xj: &Pose2D) -> Residual {
    match &edge.constraint {
        Constraint::RelativePose { measurement, .. } => {
            let e = measurement.between(&xi.between(xj));
            Residual::Pose(Vector3::new(e.x, e.y, wrap_angle(e.theta)))
        }
        Constraint::Distance { distance, .. } => {
            Residual::Distance(distance - (xi.x - xj.x).hypot(xi.y - xj.y))
        }
    }
}

/// Analytic Jacobians of [`residual`] with respect to `(x, y, θ)` of each
/// endpoint. `None` for a distance edge whose nodes coincide.
pub fn linearize(edge: &Edge, xi: &Pose2D, xj: &Pose2D) -> Option<Linearization> {
    match &edge.constraint {
        Constraint::RelativePose { measurement: z, .. } => {
            let (si, ci) = xi.theta.sin_cos();
            let (sz, cz) = z.theta.sin_cos();
            let dx = xj.x - xi.x;
            let dy = xj.y - xi.y;
            // d = R_iᵀ (t_j − t_i), e_t = R_zᵀ (d − z_t), e_θ = θ_j − θ_i − θ_z.
            let d = Vector3::new(ci * dx + si * dy, -si * dx + ci * dy, 0.0);
            let rzt = nalgebra::Matrix2::new(cz, sz, -sz, cz);
            let rit = nalgebra::Matrix2::new(ci, si, -si, ci);
            let a = rzt * rit;
            let ddtheta = nalgebra::Vector2::new(-si * dx + ci * dy, -ci * dx - si * dy);
            let dtheta = rzt * ddtheta;

            let et = rzt * nalgebra::Vector2::new(d.x - z.x, d.y - z.y);
            let residual = Vector3::new(et.x, et.y, wrap_angle(xj.theta - xi.theta - z.theta));

            let jac_i = Matrix3::new(
                -a[(0, 0)], -a[(0, 1)], dtheta.x,
                -a[(1, 0)], -a[(1, 1)], dtheta.y,
                0.0, 0.0, -1.0,
            );
            let jac_j = Matrix3::new(
                a[(0, 0)], a[(0, 1)], 0.0,
                a[(1, 0)], a[(1, 1)], 0.0,
                0.0, 0.0, 1.0,
            );
            Some(Linearization::Pose {
                residual,
                jac_i,
                jac_j,
            })
        }
        Constraint::Distance { distance, .. } => {
            let ux = xi.x - xj.x;
            let uy = xi.y - xj.y;
            let r = ux.hypot(uy);
            if r <= MIN_DISTANCE_SEPARATION {
                return None;
            }
            let g = RowVector3::new(ux / r, uy / r, 0.0);
            Some(Linearization::Distance {
                residual: distance - r,
                jac_i: -g,
                jac_j: g,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Stop when the relative chi² decrease of an accepted step falls below this.
    pub convergence_tol: f64,
    /// Huber threshold (whitened units) for loop-closure edges; `None` disables.
    pub huber_delta: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_lambda: 1e-4,
            convergence_tol: 1e-8,
            huber_delta: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeStats {
    pub iterations: usize,
    pub initial_chi2: f64,
    pub final_chi2: f64,
    pub rejected_steps: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub chi2_history: Vec<f64>,
}

const LAMBDA_MAX: f64 = 1e16;
const MAX_INNER_TRIES: usize = 12;

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node and returns its id. The first node added is fixed.
    pub fn add_node(&mut self, pose: Pose2D) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            pose,
            fixed: id == 0,
        });
        id
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<()> {
        self.validate_edge(&edge)?;
        self.edges.push(edge);
        Ok(())
    }

    fn validate_edge(&self, e: &Edge) -> Result<()> {
        let bad = |reason: &str| Error::InvalidEdge {
            i: e.i,
            j: e.j,
            reason: reason.to_owned(),
        };
        if e.i == e.j {
            return Err(bad("self loop"));
        }
        if e.i >= self.nodes.len() || e.j >= self.nodes.len() {
            return Err(bad("unknown node"));
        }
        match &e.constraint {
            Constraint::RelativePose { information, .. } => {
                let sym = (information - information.transpose()).abs().max();
                if sym > 1e-9 * information.abs().max().max(1.0) {
                    return Err(bad("information not symmetric"));
                }
                if information.cholesky().is_none() {
                    return Err(bad("information not positive definite"));
                }
            }
            Constraint::Distance {
                distance,
                information,
            } => {
                if !(*information > 0.0) || !information.is_finite() {
                    return Err(bad("information must be positive"));
                }
                if !(*distance >= 0.0) {
                    return Err(bad("distance must be non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn poses(&self) -> Vec<Pose2D> {
        self.nodes.iter().map(|n| n.pose).collect()
    }

    pub fn set_pose(&mut self, id: usize, pose: Pose2D) {
        self.nodes[id].pose = pose;
    }

    pub fn edges_mut(&mut self) -> &mut Vec<Edge> {
        &mut self.edges
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Objective value at the current node poses.
    pub fn chi2(&self, huber_delta: Option<f64>) -> f64 {
        let poses = self.poses();
        total_chi2(&self.edges, &poses, huber_delta)
    }

    /// Node ids not reachable from a fixed node through any edge.
    pub fn unreachable_nodes(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = self
            .nodes
            .iter()
            .filter(|nd| nd.fixed)
            .map(|nd| nd.id)
            .collect();
        for &q in &queue {
            seen[q] = true;
        }
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        (0..n).filter(|&k| !seen[k]).collect()
    }

    /// Runs Levenberg–Marquardt in place and returns convergence statistics.
    pub fn optimize(&mut self, config: &SolverConfig) -> Result<OptimizeStats> {
        if self.edges.is_empty() {
            return Err(Error::NoEdges);
        }
        let unreachable = self.unreachable_nodes();
        if !unreachable.is_empty() {
            return Err(Error::Disconnected(unreachable));
        }
        let mut solver = Solver::new(self);
        let mut poses = self.poses();
        let stats = solver.run(&self.edges, &mut poses, config)?;
        for (node, pose) in self.nodes.iter_mut().zip(poses) {
            node.pose = pose;
        }
        Ok(stats)
    }
}

fn robust(s: f64, delta: Option<f64>) -> (f64, f64) {
    match delta {
        Some(d) if s > d * d => {
            let root = s.sqrt();
            (2.0 * d * root - d * d, d / root)
        }
        _ => (s, 1.0),
    }
}

fn edge_delta(edge: &Edge, huber_delta: Option<f64>) -> Option<f64> {
    if edge.kind.is_loop_closure() {
        huber_delta
    } else {
        None
    }
}

fn total_chi2(edges: &[Edge], poses: &[Pose2D], huber_delta: Option<f64>) -> f64 {
    edges
        .iter()
        .map(|e| {
            let s = e.squared_error(&poses[e.i], &poses[e.j]);
            robust(s, edge_delta(e, huber_delta)).0
        })
        .sum()
}

/// Block layout of the reduced normal matrix and its symbolic factorisation.
struct Solver {
    /// State offset (in blocks) for each node; `None` for fixed nodes.
    block_of: Vec<Option<usize>>,
    n_blocks: usize,
    /// Per edge: slots of the (i,i), (j,j) and off-diagonal blocks.
    edge_slots: Vec<[Option<usize>; 3]>,
    blocks: Vec<Matrix3<f64>>,
    /// Upper-triangle CSC pattern with, per entry, its (slot, row, col) source.
    csc: UpperCsc,
    csc_src: Vec<(usize, usize, usize)>,
    symbolic: Symbolic,
}

impl Solver {
    fn new(graph: &PoseGraph) -> Self {
        let mut block_of = vec![None; graph.nodes.len()];
        let mut n_blocks = 0;
        for n in &graph.nodes {
            if !n.fixed {
                block_of[n.id] = Some(n_blocks);
                n_blocks += 1;
            }
        }

        // Block pattern keyed by (row_block, col_block) with row ≤ col.
        let mut slot_of: HashMap<(usize, usize), usize> = HashMap::new();
        let slot = |r: usize, c: usize, slot_of: &mut HashMap<(usize, usize), usize>| {
            let key = (r.min(c), r.max(c));
            let next = slot_of.len();
            *slot_of.entry(key).or_insert(next)
        };
        for b in 0..n_blocks {
            slot(b, b, &mut slot_of);
        }
        let edge_slots: Vec<[Option<usize>; 3]> = graph
            .edges
            .iter()
            .map(|e| {
                let bi = block_of[e.i];
                let bj = block_of[e.j];
                [
                    bi.map(|b| slot(b, b, &mut slot_of)),
                    bj.map(|b| slot(b, b, &mut slot_of)),
                    match (bi, bj) {
                        (Some(a), Some(b)) => Some(slot(a, b, &mut slot_of)),
                        _ => None,
                    },
                ]
            })
            .collect();

        let mut by_col: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_blocks];
        for (&(r, c), &s) in &slot_of {
            by_col[c].push((r, s));
        }
        let n = 3 * n_blocks;
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut csc_src = Vec::new();
        col_ptr.push(0);
        for (c, rows) in by_col.iter_mut().enumerate() {
            rows.sort_unstable();
            for a in 0..3 {
                let col = 3 * c + a;
                for &(r, s) in rows.iter() {
                    for b in 0..3 {
                        let row = 3 * r + b;
                        if row <= col {
                            row_idx.push(row);
                            // Blocks are stored as H[(3r..), (3c..)] for r ≤ c.
                            csc_src.push((s, b, a));
                        }
                    }
                }
                col_ptr.push(row_idx.len());
            }
        }
        let csc = UpperCsc {
            n,
            col_ptr,
            values: vec![0.0; row_idx.len()],
            row_idx,
        };
        let symbolic = Symbolic::analyze(&csc);
        Self {
            block_of,
            n_blocks,
            edge_slots,
            blocks: vec![Matrix3::zeros(); slot_of.len()],
            csc,
            csc_src,
            symbolic,
        }
    }

    /// Assembles H and the gradient g at `poses`.
    fn build(&mut self, edges: &[Edge], poses: &[Pose2D], huber_delta: Option<f64>) -> Vec<f64> {
        for b in &mut self.blocks {
            b.fill(0.0);
        }
        let mut grad = vec![0.0; 3 * self.n_blocks];
        for (e, slots) in edges.iter().zip(&self.edge_slots) {
            let Some(lin) = linearize(e, &poses[e.i], &poses[e.j]) else {
                continue;
            };
            let (ji, jj, omega, r): (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>, Vector3<f64>) =
                match (lin, &e.constraint) {
                    (
                        Linearization::Pose {
                            residual,
                            jac_i,
                            jac_j,
                        },
                        Constraint::RelativePose { information, .. },
                    ) => (jac_i, jac_j, *information, residual),
                    (
                        Linearization::Distance {
                            residual,
                            jac_i,
                            jac_j,
                        },
                        Constraint::Distance { information, .. },
                    ) => {
                        // Embed the scalar row in a 3×3 with zero lower rows.
                        let mut a = Matrix3::zeros();
                        a.set_row(0, &jac_i);
                        let mut b = Matrix3::zeros();
                        b.set_row(0, &jac_j);
                        let mut w = Matrix3::zeros();
                        w[(0, 0)] = *information;
                        (a, b, w, Vector3::new(residual, 0.0, 0.0))
                    }
                    _ => unreachable!("linearization shape follows constraint"),
                };
            let s = (r.transpose() * omega * r)[(0, 0)];
            let (_, w) = robust(s, edge_delta(e, huber_delta));
            let wo = omega * w;
            let wr = wo * r;

            if let (Some(b), Some(slot)) = (self.block_of[e.i], slots[0]) {
                self.blocks[slot] += ji.transpose() * wo * ji;
                let g = ji.transpose() * wr;
                for k in 0..3 {
                    grad[3 * b + k] += g[k];
                }
            }
            if let (Some(b), Some(slot)) = (self.block_of[e.j], slots[1]) {
                self.blocks[slot] += jj.transpose() * wo * jj;
                let g = jj.transpose() * wr;
                for k in 0..3 {
                    grad[3 * b + k] += g[k];
                }
            }
            if let (Some(bi), Some(bj), Some(slot)) =
                (self.block_of[e.i], self.block_of[e.j], slots[2])
            {
                // Stored with the smaller block index as the row.
                if bi < bj {
                    self.blocks[slot] += ji.transpose() * wo * jj;
                } else {
                    self.blocks[slot] += jj.transpose() * wo * ji;
                }
            }
        }
        for (v, &(s, r, c)) in self.csc.values.iter_mut().zip(&self.csc_src) {
            *v = self.blocks[s][(r, c)];
        }
        grad
    }

    fn diag_positions(&self) -> Vec<usize> {
        (0..self.csc.n)
            .map(|c| {
                let end = self.csc.col_ptr[c + 1];
                debug_assert_eq!(self.csc.row_idx[end - 1], c);
                end - 1
            })
            .collect()
    }

    fn run(
        &mut self,
        edges: &[Edge],
        poses: &mut [Pose2D],
        config: &SolverConfig,
    ) -> Result<OptimizeStats> {
        let huber = config.huber_delta;
        let mut chi2 = total_chi2(edges, poses, huber);
        let mut stats = OptimizeStats {
            iterations: 0,
            initial_chi2: chi2,
            final_chi2: chi2,
            rejected_steps: 0,
            chi2_history: vec![chi2],
        };
        if self.n_blocks == 0 || chi2 == 0.0 {
            return Ok(stats);
        }
        let diag_pos = self.diag_positions();
        let mut lambda = config.initial_lambda;
        let mut trial = poses.to_vec();

        'outer: while stats.iterations < config.max_iterations {
            stats.iterations += 1;
            let grad = self.build(edges, poses, huber);
            let undamped: Vec<f64> = diag_pos.iter().map(|&p| self.csc.values[p]).collect();
            let max_diag = undamped.iter().cloned().fold(0.0, f64::max);
            let floor = 1e-9 * max_diag.max(1e-12);

            let mut accepted = false;
            for _ in 0..MAX_INNER_TRIES {
                for (k, &p) in diag_pos.iter().enumerate() {
                    self.csc.values[p] = undamped[k] + lambda * undamped[k].max(floor);
                }
                let Some(ldl) = Ldl::factor(&self.csc, &self.symbolic) else {
                    lambda *= 4.0;
                    stats.rejected_steps += 1;
                    if lambda > LAMBDA_MAX {
                        return Err(Error::NotPositiveDefinite);
                    }
                    continue;
                };
                let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
                ldl.solve_in_place(&mut step);

                for (k, p) in poses.iter().enumerate() {
                    trial[k] = match self.block_of[k] {
                        Some(b) => Pose2D::new(
                            p.x + step[3 * b],
                            p.y + step[3 * b + 1],
                            p.theta + step[3 * b + 2],
                        ),
                        None => *p,
                    };
                }
                let new_chi2 = total_chi2(edges, &trial, huber);
                if new_chi2 < chi2 {
                    poses.copy_from_slice(&trial);
                    let rel = (chi2 - new_chi2) / chi2;
                    chi2 = new_chi2;
                    stats.chi2_history.push(chi2);
                    lambda = (lambda * 0.5).max(1e-12);
                    accepted = true;
                    let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                    if rel < config.convergence_tol || chi2 < 1e-30 || step_norm < 1e-14 {
                        break 'outer;
                    }
                    break;
                }
                lambda *= 4.0;
                stats.rejected_steps += 1;
                if lambda > LAMBDA_MAX {
                    break;
                }
            }
            if !accepted {
                break;
            }
        }
        stats.final_chi2 = chi2;
        Ok(stats)
    }
}
