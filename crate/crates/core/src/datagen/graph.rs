//! Procedural vessel graphs: trunks that enter from the inlet side and
//! meander across the canvas, side branches, and free-floating fragments.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Smallest accepted canvas side.
pub const MIN_CANVAS: usize = 64;

/// Continuous pixel coordinate; `x` is the column axis, `y` the row axis.
/// Pixel `(r, c)` has its centre at `(c + 0.5, r + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub width: f64,
}

/// Half-open column range `[start, end)` through which perfusate enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InletBand {
    pub start: usize,
    pub end: usize,
}

impl InletBand {
    pub fn leftmost(columns: usize) -> Self {
        InletBand { start: 0, end: columns }
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains_column(&self, col: usize) -> bool {
        col >= self.start && col < self.end
    }
}

impl Default for InletBand {
    fn default() -> Self {
        InletBand::leftmost(4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphParams {
    /// Number of trunks entering through the inlet band (≥ 1).
    pub trunks: usize,
    /// Probability that a trunk node spawns a side branch.
    pub branch_prob: f64,
    pub width_min: f64,
    pub width_max: f64,
    /// Number of fragment slots; each is filled with `fragment_prob`.
    pub fragments: usize,
    pub fragment_prob: f64,
    /// Maximum number of segments in a fragment polyline.
    pub fragment_segments: usize,
    /// Segment length as a fraction of the canvas width.
    pub step_frac: f64,
    pub inlet: InletBand,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            trunks: 2,
            branch_prob: 0.35,
            width_min: 3.0,
            width_max: 6.0,
            fragments: 4,
            fragment_prob: 0.85,
            fragment_segments: 4,
            step_frac: 0.12,
            inlet: InletBand::default(),
        }
    }
}

impl GraphParams {
    fn validate(&self, height: usize, width: usize) -> Result<()> {
        const OP: &str = "datagen::generate_graph";
        if height < MIN_CANVAS || width < MIN_CANVAS {
            return Err(Error::invalid(
                OP,
                format!("canvas {height}x{width} is smaller than {MIN_CANVAS}x{MIN_CANVAS}"),
            ));
        }
        if self.trunks == 0 {
            return Err(Error::invalid(OP, "trunk count must be at least 1"));
        }
        for (name, p) in [("branch_prob", self.branch_prob), ("fragment_prob", self.fragment_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(OP, format!("{name} {p} outside [0, 1]")));
            }
        }
        let max_width = height.min(width) as f64 / 4.0;
        if !(self.width_min >= 1.5 && self.width_min <= self.width_max && self.width_max <= max_width) {
            return Err(Error::invalid(
                OP,
                format!(
                    "width range [{}, {}] must satisfy 1.5 <= min <= max <= {max_width}",
                    self.width_min, self.width_max
                ),
            ));
        }
        if self.inlet.is_empty() || self.inlet.end > width {
            return Err(Error::invalid(OP, format!("inlet band {:?} invalid for width {width}", self.inlet)));
        }
        if !(self.step_frac > 0.0 && self.step_frac <= 0.5) {
            return Err(Error::invalid(OP, format!("step_frac {} outside (0, 0.5]", self.step_frac)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselGraph {
    pub height: usize,
    pub width: usize,
    pub nodes: Vec<Point>,
    pub edges: Vec<Edge>,
    pub inlet: InletBand,
    pub seed: u64,
}

impl VesselGraph {
    /// Whether either endpoint of `edge` lies inside the inlet band columns.
    pub fn edge_touches_inlet(&self, edge: &Edge) -> bool {
        [edge.a, edge.b].iter().any(|&i| {
            let x = self.nodes[i].x;
            x >= self.inlet.start as f64 && x < self.inlet.end as f64
        })
    }

    /// Canonical little-endian encoding, used to compare graphs bytewise.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.nodes.len() * 16 + self.edges.len() * 24);
        for v in [self.height, self.width, self.inlet.start, self.inlet.end] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        for p in &self.nodes {
            out.extend_from_slice(&p.x.to_le_bytes());
            out.extend_from_slice(&p.y.to_le_bytes());
        }
        for e in &self.edges {
            out.extend_from_slice(&(e.a as u64).to_le_bytes());
            out.extend_from_slice(&(e.b as u64).to_le_bytes());
            out.extend_from_slice(&e.width.to_le_bytes());
        }
        out
    }

    /// Connected components of the graph itself (not of its raster), as
    /// lists of edge indices. Used to check generator structure.
    pub fn edge_components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for e in &self.edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, e) in self.edges.iter().enumerate() {
            let root = find(&mut parent, e.a);
            groups.entry(root).or_default().push(i);
        }
        groups.into_values().collect()
    }
}

struct Builder<'a, R: Rng> {
    rng: R,
    params: &'a GraphParams,
    height: f64,
    width: f64,
    nodes: Vec<Point>,
    edges: Vec<Edge>,
}

impl<R: Rng> Builder<'_, R> {
    fn clamp(&self, p: Point) -> Point {
        Point { x: p.x.clamp(0.0, self.width - 1e-6), y: p.y.clamp(0.0, self.height - 1e-6) }
    }

    fn push_node(&mut self, p: Point) -> usize {
        let p = self.clamp(p);
        self.nodes.push(p);
        self.nodes.len() - 1
    }

    fn step_len(&mut self) -> f64 {
        self.width * self.params.step_frac * self.rng.gen_range(0.7..1.3)
    }

    fn width_sample(&mut self) -> f64 {
        let p = self.params;
        if p.width_max > p.width_min {
            self.rng.gen_range(p.width_min..=p.width_max)
        } else {
            p.width_min
        }
    }

    /// Polyline from `start` heading `heading` for at most `segments` steps.
    /// Returns the node indices visited, starting with `start`.
    fn polyline(&mut self, start: usize, mut heading: f64, segments: usize, width: f64, steer: f64) -> Vec<usize> {
        let jitter = Normal::new(0.0, steer).expect("positive std");
        let mut path = vec![start];
        let mut current = start;
        for _ in 0..segments {
            let len = self.step_len();
            heading += jitter.sample(&mut self.rng);
            let from = self.nodes[current];
            let to = Point { x: from.x + len * heading.cos(), y: from.y + len * heading.sin() };
            let next = self.push_node(to);
            self.edges.push(Edge { a: current, b: next, width });
            path.push(next);
            current = next;
            let p = self.nodes[current];
            if p.x >= self.width - 1.0 || p.x <= 0.0 || p.y <= 0.0 || p.y >= self.height - 1.0 {
                break;
            }
        }
        path
    }

    fn trunk(&mut self) {
        let inlet = self.params.inlet;
        let x = self.rng.gen_range(inlet.start as f64..inlet.end as f64);
        let margin = self.params.width_max;
        let y = self.rng.gen_range(margin..self.height - margin);
        let start = self.push_node(Point { x, y });
        let width = self.width_sample();
        let mut heading: f64 = self.rng.gen_range(-0.35..0.35);
        let mut current = start;
        let mut trunk_nodes = vec![start];
        // meander rightwards until the far edge
        for _ in 0..64 {
            let len = self.step_len();
            heading = (heading + self.rng.gen_range(-0.45..0.45)).clamp(-1.0, 1.0);
            let from = self.nodes[current];
            let mut to = Point { x: from.x + len * heading.cos(), y: from.y + len * heading.sin() };
            if to.y < margin || to.y > self.height - margin {
                heading = -heading;
                to.y = from.y + len * heading.sin();
            }
            let next = self.push_node(to);
            self.edges.push(Edge { a: current, b: next, width });
            trunk_nodes.push(next);
            current = next;
            if self.nodes[current].x >= self.width - 1.0 {
                break;
            }
        }
        let branch_width = (width * 0.7).max(self.params.width_min);
        for &node in &trunk_nodes[1..trunk_nodes.len() - 1] {
            if self.rng.gen_bool(self.params.branch_prob) {
                let side = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let heading = side * self.rng.gen_range(0.5..1.2);
                let segments = self.rng.gen_range(2..=4);
                let path = self.polyline(node, heading, segments, branch_width, 0.3);
                if path.len() > 2 && self.rng.gen_bool(self.params.branch_prob * 0.5) {
                    let sub = path[path.len() / 2];
                    let heading = side * -self.rng.gen_range(0.3..1.0);
                    self.polyline(sub, heading, 2, branch_width, 0.3);
                }
            }
        }
    }

    /// Free-floating polyline placed clear of the perfused tree. Up to eight
    /// placements are tried; the last one is kept even if it touches.
    fn fragment(&mut self, tree_edges: usize) {
        let inlet_end = self.params.inlet.end as f64;
        let left = inlet_end + self.width * 0.12;
        let margin = self.params.width_max;
        for attempt in 0..8 {
            let (n0, e0) = (self.nodes.len(), self.edges.len());
            let x = self.rng.gen_range(left..self.width - margin);
            let y = self.rng.gen_range(margin..self.height - margin);
            let start = self.push_node(Point { x, y });
            let width = self.width_sample();
            let heading = self.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let segments = self.rng.gen_range(1..=self.params.fragment_segments.max(1));
            let path = self.polyline(start, heading, segments, width, 0.5);
            if path.len() > 2 && self.rng.gen_bool(self.params.branch_prob) {
                let heading = heading + self.rng.gen_range(0.6..1.4);
                self.polyline(path[1], heading, 1, width, 0.3);
            }
            // never let a fragment reach back into the inlet band
            for node in self.nodes.iter_mut().skip(n0) {
                node.x = node.x.max(inlet_end + margin);
            }
            let clear = self.edges[e0..].iter().all(|f| {
                self.edges[..tree_edges].iter().all(|t| {
                    let gap = segment_gap((self.nodes[f.a], self.nodes[f.b]), (self.nodes[t.a], self.nodes[t.b]));
                    gap > (f.width + t.width) / 2.0 + 2.0
                })
            });
            if clear || attempt == 7 {
                return;
            }
            self.nodes.truncate(n0);
            self.edges.truncate(e0);
        }
    }
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
    ((a.x + t * dx - p.x).powi(2) + (a.y + t * dy - p.y).powi(2)).sqrt()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Minimum distance between two closed segments.
fn segment_gap(s: (Point, Point), t: (Point, Point)) -> f64 {
    let (d1, d2) = (cross(t.0, t.1, s.0), cross(t.0, t.1, s.1));
    let (d3, d4) = (cross(s.0, s.1, t.0), cross(s.0, s.1, t.1));
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    point_segment_distance(s.0, t.0, t.1)
        .min(point_segment_distance(s.1, t.0, t.1))
        .min(point_segment_distance(t.0, s.0, s.1))
        .min(point_segment_distance(t.1, s.0, s.1))
}

/// Generates a vessel graph on an `H×W` canvas. Pure function of its inputs.
pub fn generate_graph(seed: u64, canvas: (usize, usize), params: &GraphParams) -> Result<VesselGraph> {
    let (height, width) = canvas;
    params.validate(height, width)?;
    let mut b = Builder {
        rng: seed::rng(seed),
        params,
        height: height as f64,
        width: width as f64,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    for _ in 0..params.trunks {
        b.trunk();
    }
    let tree_edges = b.edges.len();
    for _ in 0..params.fragments {
        if b.rng.gen_bool(params.fragment_prob) {
            b.fragment(tree_edges);
        }
    }
    Ok(VesselGraph { height, width, nodes: b.nodes, edges: b.edges, inlet: params.inlet, seed })
}
