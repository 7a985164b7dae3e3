//! Text interchange: `.poly` input graphs, `.node`/`.ele` meshes, SVG
//! renderings and metrics streams.
//!
//! Numbers are written with the shortest decimal that parses back to the
//! same `f64`, so a write followed by a read is bit-exact.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mesh::{Mesh, VertexId, VertexKind};
use crate::predicates::Point2;
use crate::pslg::{Pslg, PslgError};
use crate::refine::quality::is_bad_points;
use crate::refine::QualityCriteria;
use crate::rules::{emit_metrics, RunReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Pslg(#[from] PslgError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { line, msg: msg.into() }
}

/// Non-empty lines with comments stripped, as (1-based line number, tokens).
struct Tokens<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens { lines: text.lines().enumerate(), last: 0 }
    }

    fn next_line(&mut self) -> Result<(usize, Vec<&'a str>), IoError> {
        for (i, raw) in self.lines.by_ref() {
            let body = raw.split('#').next().unwrap_or("");
            let toks: Vec<&str> = body.split_whitespace().collect();
            if !toks.is_empty() {
                self.last = i + 1;
                return Ok((i + 1, toks));
            }
        }
        Err(parse_err(self.last + 1, "unexpected end of input"))
    }

    /// Next line, or `None` at end of input.
    fn maybe_line(&mut self) -> Option<(usize, Vec<&'a str>)> {
        self.next_line().ok()
    }
}

fn num<T: std::str::FromStr>(line: usize, toks: &[&str], i: usize, what: &str) -> Result<T, IoError> {
    let tok = toks.get(i).ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("bad {what} `{tok}`")))
}

struct NodeSection {
    points: Vec<Point2>,
    markers: Vec<i64>,
    base: usize,
}

fn read_nodes(tok: &mut Tokens) -> Result<NodeSection, IoError> {
    let (line, head) = tok.next_line()?;
    let n: usize = num(line, &head, 0, "vertex count")?;
    let dim: usize = if head.len() > 1 { num(line, &head, 1, "dimension")? } else { 2 };
    if dim != 2 {
        return Err(parse_err(line, format!("dimension {dim} is not 2")));
    }
    let attrs: usize = if head.len() > 2 { num(line, &head, 2, "attribute count")? } else { 0 };
    let has_marker: usize = if head.len() > 3 { num(line, &head, 3, "marker flag")? } else { 0 };
    let mut sec = NodeSection { points: Vec::with_capacity(n), markers: Vec::with_capacity(n), base: 0 };
    for k in 0..n {
        let (line, t) = tok.next_line()?;
        let idx: usize = num(line, &t, 0, "vertex index")?;
        if k == 0 {
            if idx > 1 {
                return Err(parse_err(line, "first vertex index must be 0 or 1"));
            }
            sec.base = idx;
        }
        if idx != k + sec.base {
            return Err(parse_err(line, format!("vertex index {idx} out of sequence")));
        }
        let x: f64 = num(line, &t, 1, "x coordinate")?;
        let y: f64 = num(line, &t, 2, "y coordinate")?;
        let marker = if has_marker > 0 { num(line, &t, 3 + attrs, "boundary marker")? } else { 0 };
        sec.points.push(Point2::new(x, y));
        sec.markers.push(marker);
    }
    Ok(sec)
}

fn index(line: usize, toks: &[&str], i: usize, base: usize, n: usize) -> Result<usize, IoError> {
    let raw: usize = num(line, toks, i, "vertex reference")?;
    raw.checked_sub(base).filter(|&v| v < n).ok_or_else(|| parse_err(line, format!("vertex reference {raw} out of range")))
}

/// Parses a `.poly` file. Vertex numbering may start at 0 or 1, taken from
/// the first vertex line. The hole list is optional.
pub fn read_poly(text: &str) -> Result<Pslg, IoError> {
    let mut tok = Tokens::new(text);
    let nodes = read_nodes(&mut tok)?;
    let n = nodes.points.len();
    if n == 0 {
        return Err(parse_err(1, "vertices must be listed in the file"));
    }
    let (line, head) = tok.next_line()?;
    let m: usize = num(line, &head, 0, "segment count")?;
    let mut segments = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, t) = tok.next_line()?;
        segments.push([index(line, &t, 1, nodes.base, n)?, index(line, &t, 2, nodes.base, n)?]);
    }
    let mut holes = Vec::new();
    if let Some((line, head)) = tok.maybe_line() {
        let h: usize = num(line, &head, 0, "hole count")?;
        for _ in 0..h {
            let (line, t) = tok.next_line()?;
            holes.push(Point2::new(num(line, &t, 1, "hole x")?, num(line, &t, 2, "hole y")?));
        }
    }
    let mut g = Pslg::new(nodes.points, segments)?;
    g.holes = holes;
    Ok(g)
}

/// Writes a `.poly` file with 1-based numbering.
pub fn write_poly(g: &Pslg) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} 2 0 0", g.points.len());
    for (i, p) in g.points.iter().enumerate() {
        let _ = writeln!(s, "{} {} {}", i + 1, p.x, p.y);
    }
    let _ = writeln!(s, "{} 0", g.segments.len());
    for (i, e) in g.segments.iter().enumerate() {
        let _ = writeln!(s, "{} {} {}", i + 1, e[0] + 1, e[1] + 1);
    }
    let _ = writeln!(s, "{}", g.holes.len());
    for (i, p) in g.holes.iter().enumerate() {
        let _ = writeln!(s, "{} {} {}", i + 1, p.x, p.y);
    }
    s
}

/// Live vertices renumbered densely in id order.
fn numbering(mesh: &Mesh) -> (Vec<VertexId>, Vec<u32>) {
    let live: Vec<VertexId> = mesh.vertex_ids().collect();
    let mut map = vec![u32::MAX; mesh.vertex_capacity()];
    for (i, v) in live.iter().enumerate() {
        map[v.idx()] = i as u32;
    }
    (live, map)
}

/// `.node` text, 1-based, marker 1 for input vertices and 0 for Steiner
/// points.
pub fn write_node(mesh: &Mesh) -> String {
    let (live, _) = numbering(mesh);
    let mut s = String::new();
    let _ = writeln!(s, "{} 2 0 1", live.len());
    for (i, &v) in live.iter().enumerate() {
        let vx = mesh.vertex(v);
        let marker = u8::from(vx.kind == VertexKind::Input);
        let _ = writeln!(s, "{} {} {} {}", i + 1, vx.pos.x, vx.pos.y, marker);
    }
    s
}

/// `.ele` text, 1-based, counterclockwise corners.
pub fn write_ele(mesh: &Mesh) -> String {
    let (_, map) = numbering(mesh);
    let mut s = String::new();
    let _ = writeln!(s, "{} 3 0", mesh.triangle_count());
    for (i, t) in mesh.triangle_ids().enumerate() {
        let [a, b, c] = mesh.triangle(t).vertices.map(|v| map[v.idx()] + 1);
        let _ = writeln!(s, "{} {a} {b} {c}", i + 1);
    }
    s
}

pub fn write_node_ele(mesh: &Mesh) -> (String, String) {
    (write_node(mesh), write_ele(mesh))
}

/// Parses `.node` text into points and boundary markers (0 when absent).
pub fn read_node(text: &str) -> Result<(Vec<Point2>, Vec<i64>), IoError> {
    let sec = read_nodes(&mut Tokens::new(text))?;
    Ok((sec.points, sec.markers))
}

/// Parses `.ele` text into 0-based corner triples. `base` is the numbering
/// of the matching `.node` file and `n` its vertex count.
pub fn read_ele(text: &str, base: usize, n: usize) -> Result<Vec<[u32; 3]>, IoError> {
    let mut tok = Tokens::new(text);
    let (line, head) = tok.next_line()?;
    let m: usize = num(line, &head, 0, "triangle count")?;
    let corners: usize = if head.len() > 1 { num(line, &head, 1, "corner count")? } else { 3 };
    if corners != 3 {
        return Err(parse_err(line, format!("{corners}-node triangles are not supported")));
    }
    (0..m)
        .map(|_| {
            let (line, t) = tok.next_line()?;
            let mut tri = [0u32; 3];
            for (k, c) in tri.iter_mut().enumerate() {
                *c = index(line, &t, 1 + k, base, n)? as u32;
            }
            Ok(tri)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SvgStyle {
    /// Triangles failing these criteria are filled.
    pub criteria: Option<QualityCriteria>,
    /// Width of the drawing in pixels.
    pub width: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle { criteria: Some(QualityCriteria::default()), width: 800.0 }
    }
}

/// SVG 1.1 drawing with y pointing up. Bad triangles carry class `bad`;
/// subsegments are drawn over the triangles with class `seg`.
pub fn write_svg(mesh: &Mesh, style: &SvgStyle) -> String {
    let pts: Vec<Point2> = mesh.vertex_ids().map(|v| mesh.position(v)).collect();
    let (mut lo, mut hi) = (Point2::new(0.0, 0.0), Point2::new(1.0, 1.0));
    if let Some(first) = pts.first() {
        (lo, hi) = (*first, *first);
        for p in &pts {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
    }
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
    let scale = style.width / span;
    let height = (hi.y - lo.y) * scale;
    let map = |p: Point2| ((p.x - lo.x) * scale, (hi.y - p.y) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.1}" height="{:.1}" viewBox="-2 -2 {:.1} {:.1}">"#,
        style.width + 4.0,
        height + 4.0,
        style.width + 4.0,
        height + 4.0
    );
    s.push_str("<style>polygon{fill:none;stroke:#555;stroke-width:0.4}polygon.bad{fill:#e33;fill-opacity:0.6}line.seg{stroke:#00f;stroke-width:1.2}</style>\n");
    for t in mesh.triangle_ids() {
        let p = mesh.tri_points(t);
        let bad = style.criteria.as_ref().is_some_and(|q| is_bad_points(&p, q));
        let coords: Vec<String> = p.iter().map(|&q| map(q)).map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
        let class = if bad { r#" class="bad""# } else { "" };
        let _ = writeln!(s, r#"<polygon{class} points="{}"/>"#, coords.join(" "));
    }
    for sid in mesh.subseg_ids() {
        let (a, b) = mesh.subseg_points(sid);
        let ((x1, y1), (x2, y2)) = (map(a), map(b));
        let _ = writeln!(s, r#"<line class="seg" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

/// Newline-delimited JSON, one record per batch.
pub fn write_metrics(report: &RunReport) -> String {
    emit_metrics(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdt::build_cdt;
    use crate::exec::Executor;
    use crate::refine::{refine, EngineConfig};

    const SQUARE0: &str = "# unit square\n4 2 0 0\n0 0 0\n1 1 0\n2 1 1\n3 0 1\n4 0\n0 0 1\n1 1 2\n2 2 3\n3 3 0\n";
    const SQUARE1: &str = "4 2 0 1\n1 0 0 1\n2 1 0 1\n3 1 1 1\n4 0 1 1  # corner\n\n4 1\n1 1 2 5\n2 2 3 5\n3 3 4 5\n4 4 1 5\n0\n";

    #[test]
    fn square_reads_in_both_numberings() {
        let a = read_poly(SQUARE0).unwrap();
        let b = read_poly(SQUARE1).unwrap();
        assert_eq!((a.points.len(), a.segments.len()), (4, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn crossing_segments_are_rejected() {
        let text = "4 2 0 0\n0 0 0\n1 1 1\n2 1 0\n3 0 1\n2 0\n0 0 1\n1 2 3\n";
        assert_eq!(read_poly(text), Err(IoError::Pslg(PslgError::CrossingSegments(0, 1))));
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let text = "3 2 0 0\n0 0 0\n1 1 zero\n2 0 1\n0 0\n";
        assert!(matches!(read_poly(text), Err(IoError::Parse { line: 3, .. })));
        let text = "3 2 0 0\n0 0 0\n1 1 0\n2 0 1\n1 0\n0 0 7\n";
        assert!(matches!(read_poly(text), Err(IoError::Parse { line: 6, .. })));
    }

    #[test]
    fn poly_round_trip() {
        let mut g = read_poly(SQUARE0).unwrap();
        g.points.push(Point2::new(0.1 + 0.2, 1.0 / 3.0));
        g.holes.push(Point2::new(0.5, 0.25));
        assert_eq!(read_poly(&write_poly(&g)).unwrap(), g);
    }

    #[test]
    fn one_triangle_mesh() {
        let pts = [Point2::new(0., 0.), Point2::new(1., 0.), Point2::new(0., 1.)];
        let m = Mesh::from_triangles(&pts, &[[0, 1, 2]]).unwrap();
        let (node, ele) = write_node_ele(&m);
        assert_eq!(node.lines().count(), 4);
        assert_eq!(ele.lines().count(), 2);
        assert_eq!(ele.lines().nth(1), Some("1 1 2 3"));
    }

    fn refined_mesh() -> Mesh {
        let g = crate::fixtures::corpus().into_iter().find(|f| f.name == "hexagon").unwrap().pslg;
        let mut m = build_cdt(&g).unwrap();
        refine(&mut m, &EngineConfig::default(), &Executor::sequential()).unwrap();
        m
    }

    #[test]
    fn node_ele_round_trip() {
        let m = refined_mesh();
        assert!(m.triangle_count() >= 1000, "{} triangles", m.triangle_count());
        let (node, ele) = write_node_ele(&m);
        let (pts, markers) = read_node(&node).unwrap();
        let tris = read_ele(&ele, 1, pts.len()).unwrap();
        let live: Vec<VertexId> = m.vertex_ids().collect();
        assert_eq!(pts.len(), live.len());
        for (i, &v) in live.iter().enumerate() {
            let p = m.position(v);
            assert_eq!((pts[i].x.to_bits(), pts[i].y.to_bits()), (p.x.to_bits(), p.y.to_bits()));
            assert_eq!(markers[i] == 1, m.vertex(v).kind == VertexKind::Input);
        }
        let back = Mesh::from_triangles(&pts, &tris).unwrap();
        assert_eq!(back.triangle_count(), m.triangle_count());
        assert_eq!(write_node_ele(&back).1, ele);
    }

    #[test]
    fn quality_mesh_svg_has_no_bad_fill() {
        let m = refined_mesh();
        let svg = write_svg(&m, &SvgStyle::default());
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polygon").count(), m.triangle_count());
        assert_eq!(svg.matches(r#"class="bad""#).count(), 0);
        assert_eq!(svg.matches(r#"<line class="seg""#).count(), m.subseg_count());
    }

    #[test]
    fn svg_marks_bad_triangles() {
        let pts = [Point2::new(0., 0.), Point2::new(10., 0.), Point2::new(5., 0.2)];
        let m = Mesh::from_triangles(&pts, &[[0, 1, 2]]).unwrap();
        assert_eq!(write_svg(&m, &SvgStyle::default()).matches(r#"class="bad""#).count(), 1);
        let plain = SvgStyle { criteria: None, ..SvgStyle::default() };
        assert_eq!(write_svg(&m, &plain).matches(r#"class="bad""#).count(), 0);
    }
}
