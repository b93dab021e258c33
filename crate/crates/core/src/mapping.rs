//! Log-odds occupancy grids built from scans at known poses.
//!
//! Log-odds are stored as integer multiples of [`LOG_ODDS_QUANTUM`] so that
//! updates add exactly and the map does not depend on integration order
//! (until a cell saturates at the clamp).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Pose2D};
use crate::scan_matching::Scan;

pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const LOG_ODDS_QUANTUM: f64 = 0.05;
/// Occupied increment, +0.85.
const OCC_UNITS: i32 = 17;
/// Free-space decrement, −0.4.
const FREE_UNITS: i32 = -8;
/// Clamp at ±10.
const CLAMP_UNITS: i32 = 200;

pub const LOG_ODDS_OCCUPIED: f64 = OCC_UNITS as f64 * LOG_ODDS_QUANTUM;
pub const LOG_ODDS_FREE: f64 = FREE_UNITS as f64 * LOG_ODDS_QUANTUM;
pub const LOG_ODDS_CLAMP: f64 = CLAMP_UNITS as f64 * LOG_ODDS_QUANTUM;

pub const DEFAULT_OCCUPIED_THRESHOLD: f64 = 0.65;
pub const DEFAULT_FREE_THRESHOLD: f64 = 0.196;

pub const PGM_OCCUPIED: u8 = 0;
pub const PGM_FREE: u8 = 254;
pub const PGM_UNKNOWN: u8 = 205;

type CellKey = (i64, i64);

/// Axis-aligned occupancy grid. Cell `(0, 0)` has its lower-left corner at
/// `origin`; cells are aligned to multiples of the resolution in world
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    /// Global index of cell `(0, 0)`.
    offset: CellKey,
    width: usize,
    height: usize,
    cells: Vec<i32>,
}

impl OccupancyGrid {
    pub fn new(resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        Ok(Self {
            resolution,
            offset: (0, 0),
            width: 0,
            height: 0,
            cells: Vec::new(),
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2D {
        Pose2D::new(
            self.offset.0 as f64 * self.resolution,
            self.offset.1 as f64 * self.resolution,
            0.0,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn log_odds(&self, ix: usize, iy: usize) -> f64 {
        self.cells[iy * self.width + ix] as f64 * LOG_ODDS_QUANTUM
    }

    pub fn probability(&self, ix: usize, iy: usize) -> f64 {
        1.0 - 1.0 / (1.0 + self.log_odds(ix, iy).exp())
    }

    /// Row-major log-odds, row 0 at the lowest `y`.
    pub fn cells(&self) -> Vec<f64> {
        self.cells.iter().map(|&u| u as f64 * LOG_ODDS_QUANTUM).collect()
    }

    fn global_key(&self, p: &Point) -> CellKey {
        (
            (p.x / self.resolution).floor() as i64,
            (p.y / self.resolution).floor() as i64,
        )
    }

    pub fn world_to_cell(&self, p: &Point) -> Option<(usize, usize)> {
        let (gx, gy) = self.global_key(p);
        let ix = gx - self.offset.0;
        let iy = gy - self.offset.1;
        if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            ((self.offset.0 + ix as i64) as f64 + 0.5) * self.resolution,
            ((self.offset.1 + iy as i64) as f64 + 0.5) * self.resolution,
        )
    }

    /// Cells whose occupancy probability exceeds `threshold`.
    pub fn occupied_cells(&self, threshold: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for iy in 0..self.height {
            for ix in 0..self.width {
                if self.probability(ix, iy) > threshold {
                    out.push((ix, iy));
                }
            }
        }
        out
    }

    /// Grows the grid to cover the global cell range, at least doubling each
    /// axis that needs to grow. World positions of existing cells are kept.
    fn ensure_covers(&mut self, lo: CellKey, hi: CellKey) {
        if self.cells.is_empty() {
            self.offset = lo;
            self.width = (hi.0 - lo.0 + 1) as usize;
            self.height = (hi.1 - lo.1 + 1) as usize;
            self.cells = vec![0; self.width * self.height];
            return;
        }
        let (nx0, nw) = grow_axis(self.offset.0, self.width, lo.0, hi.0);
        let (ny0, nh) = grow_axis(self.offset.1, self.height, lo.1, hi.1);
        if nx0 == self.offset.0 && ny0 == self.offset.1 && nw == self.width && nh == self.height {
            return;
        }
        let mut cells = vec![0; nw * nh];
        let dx = (self.offset.0 - nx0) as usize;
        let dy = (self.offset.1 - ny0) as usize;
        for iy in 0..self.height {
            let src = &self.cells[iy * self.width..(iy + 1) * self.width];
            let start = (iy + dy) * nw + dx;
            cells[start..start + self.width].copy_from_slice(src);
        }
        self.offset = (nx0, ny0);
        self.width = nw;
        self.height = nh;
        self.cells = cells;
    }

    fn add(&mut self, key: CellKey, units: i32) {
        let ix = (key.0 - self.offset.0) as usize;
        let iy = (key.1 - self.offset.1) as usize;
        let c = &mut self.cells[iy * self.width + ix];
        *c = (*c + units).clamp(-CLAMP_UNITS, CLAMP_UNITS);
    }

    /// Integrates one scan taken from `pose`: free-space updates along each
    /// beam (sensor and endpoint cells excluded), an occupied update at the
    /// endpoint cell.
    pub fn integrate_scan(&mut self, pose: &Pose2D, scan: &Scan) {
        if scan.is_empty() {
            return;
        }
        let sensor = pose.position();
        let ends: Vec<Point> = scan.points.iter().map(|p| pose.transform_point(p)).collect();
        let (lo, hi) = self.bounds_of(&sensor, &ends);
        self.ensure_covers(lo, hi);
        self.integrate_covered(&sensor, &ends);
    }

    fn bounds_of(&self, sensor: &Point, ends: &[Point]) -> (CellKey, CellKey) {
        let s = self.global_key(sensor);
        let mut lo = s;
        let mut hi = s;
        for e in ends {
            let k = self.global_key(e);
            lo = (lo.0.min(k.0), lo.1.min(k.1));
            hi = (hi.0.max(k.0), hi.1.max(k.1));
        }
        (lo, hi)
    }

    fn integrate_covered(&mut self, sensor: &Point, ends: &[Point]) {
        let mut ray = Vec::new();
        for e in ends {
            ray.clear();
            ray_cells(sensor, e, self.resolution, &mut ray);
            for &k in &ray {
                self.add(k, FREE_UNITS);
            }
            let end = self.global_key(e);
            self.add(end, OCC_UNITS);
        }
    }
}

fn grow_axis(start: i64, len: usize, lo: i64, hi: i64) -> (i64, usize) {
    let end = start + len as i64 - 1;
    let need_lo = lo < start;
    let need_hi = hi > end;
    if !need_lo && !need_hi {
        return (start, len);
    }
    let union_lo = lo.min(start);
    let union_hi = hi.max(end);
    let new_len = ((union_hi - union_lo + 1) as usize).max(2 * len);
    let new_start = if need_lo && !need_hi {
        end + 1 - new_len as i64
    } else {
        union_lo
    };
    (new_start, new_len)
}

/// Global keys of the cells a segment passes through, strictly between the
/// cell containing `from` and the cell containing `to`.
///
/// Grid traversal in cell units; a segment through an exact cell corner
/// steps diagonally.
pub fn ray_cells(from: &Point, to: &Point, resolution: f64, out: &mut Vec<CellKey>) {
    let (ux, uy) = (from.x / resolution, from.y / resolution);
    let (vx, vy) = (to.x / resolution, to.y / resolution);
    let mut cx = ux.floor() as i64;
    let mut cy = uy.floor() as i64;
    let ex = vx.floor() as i64;
    let ey = vy.floor() as i64;
    let (dx, dy) = (vx - ux, vy - uy);
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let next_boundary = |c: i64, d: f64| if d > 0.0 { (c + 1) as f64 } else { c as f64 };
    let mut t_max_x = if dx != 0.0 {
        (next_boundary(cx, dx) - ux) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        (next_boundary(cy, dy) - uy) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };

    let max_steps = (ex - cx).unsigned_abs() + (ey - cy).unsigned_abs();
    for _ in 0..max_steps {
        // The walk never leaves the bounding box of the two end cells.
        if cy == ey || (cx != ex && t_max_x < t_max_y) {
            cx += step_x;
            t_max_x += t_delta_x;
        } else if cx == ex || t_max_y < t_max_x {
            cy += step_y;
            t_max_y += t_delta_y;
        } else {
            cx += step_x;
            cy += step_y;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
        if cx == ex && cy == ey {
            return;
        }
        out.push((cx, cy));
    }
}

/// Folds [`OccupancyGrid::integrate_scan`] over index-aligned poses and
/// sensor-frame scans. The grid is sized to the joint extent up front, so the
/// result does not depend on the order of the pairs.
pub fn build_occupancy_map(poses: &[Pose2D], scans: &[Scan], resolution: f64) -> Result<OccupancyGrid> {
    if poses.len() != scans.len() {
        return Err(Error::LengthMismatch(poses.len(), scans.len()));
    }
    let mut grid = OccupancyGrid::new(resolution)?;
    let mut world: Vec<(Point, Vec<Point>)> = Vec::with_capacity(scans.len());
    let mut bounds: Option<(CellKey, CellKey)> = None;
    for (pose, scan) in poses.iter().zip(scans) {
        if scan.is_empty() {
            continue;
        }
        let sensor = pose.position();
        let ends: Vec<Point> = scan.points.iter().map(|p| pose.transform_point(p)).collect();
        let (lo, hi) = grid.bounds_of(&sensor, &ends);
        bounds = Some(match bounds {
            None => (lo, hi),
            Some((a, b)) => ((a.0.min(lo.0), a.1.min(lo.1)), (b.0.max(hi.0), b.1.max(hi.1))),
        });
        world.push((sensor, ends));
    }
    if let Some((lo, hi)) = bounds {
        grid.ensure_covers(lo, hi);
    }
    for (sensor, ends) in &world {
        grid.integrate_covered(sensor, ends);
    }
    Ok(grid)
}

/// Map metadata written next to the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub resolution: f64,
    pub origin: Pose2D,
    pub width: usize,
    pub height: usize,
    pub occupied_threshold: f64,
    pub free_threshold: f64,
}

/// 8-bit map image, top row (highest `y`) first.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub pixels: Vec<u8>,
    pub metadata: MapMetadata,
}

/// Thresholds the grid into occupied (0), free (254) and unknown (205)
/// pixels. Thresholds are occupancy probabilities.
pub fn export_pgm(grid: &OccupancyGrid, occupied_threshold: f64, free_threshold: f64) -> Result<PgmImage> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if !(0.0 <= free_threshold && free_threshold < occupied_threshold && occupied_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= free < occupied <= 1, got free {free_threshold}, occupied {occupied_threshold}"
        )));
    }
    let (w, h) = (grid.width(), grid.height());
    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        let iy = h - 1 - row;
        for ix in 0..w {
            let p = grid.probability(ix, iy);
            pixels.push(if p > occupied_threshold {
                PGM_OCCUPIED
            } else if p < free_threshold {
                PGM_FREE
            } else {
                PGM_UNKNOWN
            });
        }
    }
    Ok(PgmImage {
        pixels,
        metadata: MapMetadata {
            resolution: grid.resolution(),
            origin: grid.origin(),
            width: w,
            height: h,
            occupied_threshold,
            free_threshold,
        },
    })
}

impl PgmImage {
    /// Binary P5 encoding; `comment` lines go into the header.
    pub fn to_bytes(&self, comment: Option<&str>) -> Vec<u8> {
        let mut header = String::from("P5\n");
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(header, "# {line}");
            }
        }
        let _ = write!(header, "{} {}\n255\n", self.metadata.width, self.metadata.height);
        let mut out = header.into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses a P5 image produced by [`PgmImage::to_bytes`]; returns width,
    /// height and pixels.
    pub fn parse(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
        let bad = |msg: &str| Error::InvalidArgument(format!("PGM: {msg}"));
        let mut pos = 0;
        let mut tokens = Vec::new();
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        if tokens[0] != "P5" {
            return Err(bad("not a P5 image"));
        }
        let w: usize = tokens[1].parse().map_err(|_| bad("width"))?;
        let h: usize = tokens[2].parse().map_err(|_| bad("height"))?;
        if tokens[3] != "255" {
            return Err(bad("max value must be 255"));
        }
        let data = &bytes[pos + 1..];
        if data.len() != w * h {
            return Err(bad("pixel count mismatch"));
        }
        Ok((w, h, data.to_vec()))
    }

    /// YAML-style sidecar naming the image file.
    pub fn metadata_text(&self, image_name: &str, comment: Option<&str>) -> String {
        let m = &self.metadata;
        let mut out = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        let _ = writeln!(out, "image: {image_name}");
        let _ = writeln!(out, "resolution: {}", m.resolution);
        let _ = writeln!(out, "origin: [{}, {}, {}]", m.origin.x, m.origin.y, m.origin.theta);
        let _ = writeln!(out, "width: {}", m.width);
        let _ = writeln!(out, "height: {}", m.height);
        let _ = writeln!(out, "occupied_thresh: {}", m.occupied_threshold);
        let _ = writeln!(out, "free_thresh: {}", m.free_threshold);
        let _ = writeln!(out, "negate: 0");
        out
    }
}

/// A polyline drawn in the SVG overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgLayer {
    pub label: String,
    pub color: String,
    pub points: Vec<Point>,
}

/// SVG with occupied cells (if a grid is given) and trajectory polylines,
/// one world metre per `scale` pixels, `y` pointing up.
pub fn svg_overlay(grid: Option<&OccupancyGrid>, layers: &[SvgLayer], scale: f64, comment: Option<&str>) -> String {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut extend = |p: &Point| {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    };
    let occupied: Vec<(Point, f64)> = match grid {
        Some(g) if !g.is_empty() => {
            let o = g.origin();
            extend(&Point::new(o.x, o.y));
            extend(&Point::new(
                o.x + g.width() as f64 * g.resolution(),
                o.y + g.height() as f64 * g.resolution(),
            ));
            g.occupied_cells(DEFAULT_OCCUPIED_THRESHOLD)
                .into_iter()
                .map(|(ix, iy)| (g.cell_center(ix, iy), g.resolution()))
                .collect()
        }
        _ => Vec::new(),
    };
    for l in layers {
        for p in &l.points {
            extend(p);
        }
    }
    if !lo.x.is_finite() {
        lo = Point::new(0.0, 0.0);
        hi = Point::new(1.0, 1.0);
    }
    let margin = 1.0;
    let w = (hi.x - lo.x + 2.0 * margin) * scale;
    let h = (hi.y - lo.y + 2.0 * margin) * scale;
    let tx = |p: &Point| ((p.x - lo.x + margin) * scale, (hi.y - p.y + margin) * scale);

    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    if let Some(c) = comment {
        let _ = writeln!(out, "<!-- {} -->", c.replace("--", "- -"));
    }
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.1}\" height=\"{h:.1}\" viewBox=\"0 0 {w:.1} {h:.1}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    if !occupied.is_empty() {
        let _ = writeln!(out, "<g fill=\"black\">");
        for (c, r) in &occupied {
            let (x, y) = tx(&Point::new(c.x - r / 2.0, c.y + r / 2.0));
            let s = r * scale;
            let _ = writeln!(out, "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{s:.2}\" height=\"{s:.2}\"/>");
        }
        let _ = writeln!(out, "</g>");
    }
    for l in layers {
        let pts: Vec<String> = l
            .points
            .iter()
            .map(|p| {
                let (x, y) = tx(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"><title>{}</title></polyline>",
            l.color,
            pts.join(" "),
            l.label
        );
    }
    out.push_str("</svg>\n");
    out
}
