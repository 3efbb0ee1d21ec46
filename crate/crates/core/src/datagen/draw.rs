use super::graph::{Point, VesselGraph};
use crate::raster::Raster;

fn segment_distance_sq(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.x + t * dx - p.x, a.y + t * dy - p.y);
    qx * qx + qy * qy
}

/// Binary vessel raster: a pixel is 1 iff its centre lies within half the
/// edge width of some edge segment.
pub fn rasterize(graph: &VesselGraph) -> Raster {
    let (h, w) = (graph.height, graph.width);
    let mut out = Raster::new(h, w);
    for edge in &graph.edges {
        let (a, b) = (graph.nodes[edge.a], graph.nodes[edge.b]);
        let half = edge.width / 2.0;
        let r2 = half * half;
        let row_lo = ((a.y.min(b.y) - half - 0.5).floor().max(0.0)) as usize;
        let row_hi = ((a.y.max(b.y) + half - 0.5).ceil().max(0.0) as usize).min(h - 1);
        let col_lo = ((a.x.min(b.x) - half - 0.5).floor().max(0.0)) as usize;
        let col_hi = ((a.x.max(b.x) + half - 0.5).ceil().max(0.0) as usize).min(w - 1);
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let centre = Point { x: col as f64 + 0.5, y: row as f64 + 0.5 };
                if segment_distance_sq(centre, a, b) <= r2 {
                    out.set(row, col, 1);
                }
            }
        }
    }
    out
}
