//! Plain-text graph dump, one record per line:
//!
//! ```text
//! VERTEX_SE2 <id> <x> <y> <theta> [FIXED]
//! EDGE_SE2_ODOM  <i> <j> <dx> <dy> <dtheta> <I11> <I12> <I13> <I22> <I23> <I33>
//! EDGE_SE2_LIDAR <i> <j> <dx> <dy> <dtheta> <I11> <I12> <I13> <I22> <I23> <I33>
//! EDGE_RANGE <i> <j> <distance> <information>
//! ```
//!
//! Information matrices are written as their upper triangle, row major.
//! Lines starting with `#` are comments.

use std::fmt::Write as _;

use nalgebra::Matrix3;

use super::{Constraint, Edge, EdgeKind, PoseGraph};
use crate::error::{Error, Result};
use crate::geometry::Pose2D;

pub fn write_graph(graph: &PoseGraph) -> String {
    let mut out = String::new();
    for n in graph.nodes() {
        let _ = write!(out, "VERTEX_SE2 {} {} {} {}", n.id, n.pose.x, n.pose.y, n.pose.theta);
        if n.fixed {
            out.push_str(" FIXED");
        }
        out.push('\n');
    }
    for e in graph.edges() {
        match (&e.constraint, e.kind) {
            (
                Constraint::RelativePose {
                    measurement: z,
                    information: m,
                },
                kind,
            ) => {
                let tag = if kind == EdgeKind::LidarRelPose {
                    "EDGE_SE2_LIDAR"
                } else {
                    "EDGE_SE2_ODOM"
                };
                let _ = writeln!(
                    out,
                    "{tag} {} {} {} {} {} {} {} {} {} {} {}",
                    e.i,
                    e.j,
                    z.x,
                    z.y,
                    z.theta,
                    m[(0, 0)],
                    m[(0, 1)],
                    m[(0, 2)],
                    m[(1, 1)],
                    m[(1, 2)],
                    m[(2, 2)]
                );
            }
            (
                Constraint::Distance {
                    distance,
                    information,
                },
                _,
            ) => {
                let _ = writeln!(out, "EDGE_RANGE {} {} {} {}", e.i, e.j, distance, information);
            }
        }
    }
    out
}

pub fn read_graph(text: &str) -> Result<PoseGraph> {
    let mut graph = PoseGraph::new();
    let err = |line: usize, msg: String| Error::parse("<graph>", line as u64 + 1, msg);
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or_default();
        let fields: Vec<&str> = parts.collect();
        let num = |k: usize| -> Result<f64> {
            fields
                .get(k)
                .ok_or_else(|| err(ln, format!("missing field {k}")))?
                .parse::<f64>()
                .map_err(|e| err(ln, format!("field {k}: {e}")))
        };
        let idx = |k: usize| -> Result<usize> {
            fields
                .get(k)
                .ok_or_else(|| err(ln, format!("missing field {k}")))?
                .parse::<usize>()
                .map_err(|e| err(ln, format!("field {k}: {e}")))
        };
        match tag {
            "VERTEX_SE2" => {
                let id = idx(0)?;
                if id != graph.nodes().len() {
                    return Err(err(ln, format!("vertex ids must be consecutive, got {id}")));
                }
                let fixed = fields.get(4) == Some(&"FIXED");
                if fixed != (id == 0) {
                    return Err(err(ln, "only the first vertex may be fixed".into()));
                }
                graph.add_node(Pose2D::new(num(1)?, num(2)?, num(3)?));
            }
            "EDGE_SE2_ODOM" | "EDGE_SE2_LIDAR" => {
                let (i, j) = (idx(0)?, idx(1)?);
                let z = Pose2D::new(num(2)?, num(3)?, num(4)?);
                let (a, b, c, d, e, f) = (num(5)?, num(6)?, num(7)?, num(8)?, num(9)?, num(10)?);
                let info = Matrix3::new(a, b, c, b, d, e, c, e, f);
                let edge = if tag == "EDGE_SE2_LIDAR" {
                    Edge::lidar(i, j, z, info)
                } else {
                    Edge::odometry(i, j, z, info)
                };
                graph.add_edge(edge).map_err(|e| err(ln, e.to_string()))?;
            }
            "EDGE_RANGE" => {
                let edge = Edge::radio(idx(0)?, idx(1)?, num(2)?, num(3)?);
                graph.add_edge(edge).map_err(|e| err(ln, e.to_string()))?;
            }
            other => return Err(err(ln, format!("unknown record {other:?}"))),
        }
    }
    Ok(graph)
}
