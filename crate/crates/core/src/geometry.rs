//! Rational polygons and screens.
//!
//! Every exterior angle is held as an exact fraction of π, so the embedding
//! integers `p`, `q_j` and `M` come from integer arithmetic only. Shapes are
//! normalised on construction: counter-clockwise vertex order, and one edge
//! (the longest, lowest index on ties) running along the positive horizontal
//! axis from the origin.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

pub type Point = [f64; 2];

/// Default tolerance (radians) when snapping measured angles to fractions of π.
pub const DEFAULT_ANGLE_TOLERANCE: f64 = 1e-6;
/// Default cap on the denominator of a rationalised angle.
pub const DEFAULT_MAX_DENOMINATOR: u32 = 64;

/// Relative tolerance under which two edge lengths count as a tie.
const EDGE_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("angle {0} is not a rational multiple of pi within tolerance")]
    NonRationalAngle(f64),
    #[error("exterior angle {0} must lie in (pi, 2pi]")]
    AngleOutOfRange(RationalAngle),
    #[error("polygon edges intersect (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("edge {0} has zero length")]
    DegenerateEdge(usize),
    #[error("a {kind} needs {expected} vertices, got {got}")]
    VertexCount {
        kind: ShapeKind,
        expected: &'static str,
        got: usize,
    },
    #[error("rational angle needs positive numerator and denominator")]
    ZeroFraction,
    #[error("at least one angle is required")]
    NoAngles,
    #[error("unknown shape preset `{0}`")]
    UnknownPreset(String),
    #[error("geometry file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// An angle `numerator·π/denominator`, always in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RationalAngle {
    numerator: u32,
    denominator: u32,
}

impl RationalAngle {
    pub fn new(numerator: u32, denominator: u32) -> Result<Self, GeometryError> {
        if numerator == 0 || denominator == 0 {
            return Err(GeometryError::ZeroFraction);
        }
        let g = gcd(numerator, denominator);
        Ok(Self {
            numerator: numerator / g,
            denominator: denominator / g,
        })
    }

    pub fn numerator(&self) -> u32 {
        self.numerator
    }

    pub fn denominator(&self) -> u32 {
        self.denominator
    }

    pub fn radians(&self) -> f64 {
        PI * self.numerator as f64 / self.denominator as f64
    }

    /// Whether the angle lies in `(π, 2π]`.
    pub fn is_exterior_corner(&self) -> bool {
        self.numerator > self.denominator && self.numerator <= 2 * self.denominator
    }

    /// Snaps `angle` (radians) to the first continued-fraction convergent of
    /// `angle/π` within `tolerance`, with denominator at most `max_denominator`.
    pub fn from_radians(angle: f64, tolerance: f64, max_denominator: u32) -> Result<Self, GeometryError> {
        let x = angle / PI;
        if !(x > 0.0) || !x.is_finite() {
            return Err(GeometryError::NonRationalAngle(angle));
        }
        // convergents h_n / k_n
        let (mut h_prev, mut h) = (1u64, x.floor() as u64);
        let (mut k_prev, mut k) = (0u64, 1u64);
        let mut rem = x - x.floor();
        loop {
            if k > max_denominator as u64 {
                return Err(GeometryError::NonRationalAngle(angle));
            }
            if h > 0 && (angle - PI * h as f64 / k as f64).abs() <= tolerance {
                return Self::new(h as u32, k as u32);
            }
            if rem < 1e-15 {
                return Err(GeometryError::NonRationalAngle(angle));
            }
            let inv = 1.0 / rem;
            let a = inv.floor();
            rem = inv - a;
            let a = a as u64;
            let h_next = a.saturating_mul(h).saturating_add(h_prev);
            let k_next = a.saturating_mul(k).saturating_add(k_prev);
            h_prev = h;
            h = h_next;
            k_prev = k;
            k = k_next;
        }
    }
}

impl fmt::Display for RationalAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}π/{}", self.numerator, self.denominator)
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u32, b: u32) -> u32 {
    a / gcd(a, b) * b
}

/// The embedding integers of a rational polygon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalData {
    /// Smallest positive integer with `π/p` dividing every exterior angle.
    pub p: u32,
    /// `q_j` with `q_j·π/p = ω_j`.
    pub q: Vec<u32>,
    /// `Σ (q_j − 1)`, the number of canonical far fields required.
    pub m: u32,
}

pub fn derive_rational_data(exterior_angles: &[RationalAngle]) -> Result<RationalData, GeometryError> {
    if exterior_angles.is_empty() {
        return Err(GeometryError::NoAngles);
    }
    if let Some(bad) = exterior_angles.iter().find(|a| !a.is_exterior_corner()) {
        return Err(GeometryError::AngleOutOfRange(*bad));
    }
    let p = exterior_angles.iter().fold(1, |acc, a| lcm(acc, a.denominator));
    let q: Vec<u32> = exterior_angles
        .iter()
        .map(|a| a.numerator * (p / a.denominator))
        .collect();
    let m = q.iter().map(|&qj| qj - 1).sum();
    Ok(RationalData { p, q, m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Polygon,
    Screen,
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeKind::Polygon => f.write_str("polygon"),
            ShapeKind::Screen => f.write_str("screen"),
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "polygon" => Ok(ShapeKind::Polygon),
            "screen" => Ok(ShapeKind::Screen),
            other => Err(GeometryError::Parse {
                line: 0,
                message: format!("unknown kind `{other}`"),
            }),
        }
    }
}

/// A straight boundary piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub start: Point,
    pub end: Point,
}

impl Edge {
    pub fn length(&self) -> f64 {
        dist(self.start, self.end)
    }

    pub fn point_at(&self, t: f64) -> Point {
        [
            self.start[0] + t * (self.end[0] - self.start[0]),
            self.start[1] + t * (self.end[1] - self.start[1]),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShapeOptions {
    pub angle_tolerance: f64,
    pub max_denominator: u32,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        Self {
            angle_tolerance: DEFAULT_ANGLE_TOLERANCE,
            max_denominator: DEFAULT_MAX_DENOMINATOR,
        }
    }
}

/// A normalised rational polygon or screen.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalShape {
    kind: ShapeKind,
    vertices: Vec<Point>,
    exterior_angles: Vec<RationalAngle>,
    data: RationalData,
}

pub const PRESETS: &[&str] = &["square", "equilateral", "isosceles-right", "screen", "pentagon"];

impl RationalShape {
    /// Builds a shape from raw vertices, rationalising its exterior angles
    /// and normalising orientation and placement.
    pub fn from_vertices(vertices: &[Point], kind: ShapeKind, options: ShapeOptions) -> Result<Self, GeometryError> {
        match kind {
            ShapeKind::Screen => Self::screen_from(vertices),
            ShapeKind::Polygon => Self::polygon_from(vertices, options),
        }
    }

    fn screen_from(vertices: &[Point]) -> Result<Self, GeometryError> {
        if vertices.len() != 2 {
            return Err(GeometryError::VertexCount {
                kind: ShapeKind::Screen,
                expected: "exactly 2",
                got: vertices.len(),
            });
        }
        let len = dist(vertices[0], vertices[1]);
        if !(len > 0.0) {
            return Err(GeometryError::DegenerateEdge(0));
        }
        let full = RationalAngle::new(2, 1)?;
        let exterior_angles = vec![full, full];
        let data = derive_rational_data(&exterior_angles)?;
        Ok(Self {
            kind: ShapeKind::Screen,
            vertices: vec![[0.0, 0.0], [len, 0.0]],
            exterior_angles,
            data,
        })
    }

    fn polygon_from(vertices: &[Point], options: ShapeOptions) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::VertexCount {
                kind: ShapeKind::Polygon,
                expected: "at least 3",
                got: n,
            });
        }
        let scale = vertices
            .iter()
            .flat_map(|v| v.iter().map(|c| c.abs()))
            .fold(1.0_f64, f64::max);
        for i in 0..n {
            if dist(vertices[i], vertices[(i + 1) % n]) <= 1e-12 * scale {
                return Err(GeometryError::DegenerateEdge(i));
            }
        }
        let mut verts = vertices.to_vec();
        if signed_area(&verts) < 0.0 {
            verts.reverse();
        }
        check_simple(&verts)?;

        // choose the edge to lay on the horizontal axis
        let lengths: Vec<f64> = (0..n).map(|i| dist(verts[i], verts[(i + 1) % n])).collect();
        let longest = lengths.iter().cloned().fold(0.0, f64::max);
        let chosen = lengths
            .iter()
            .position(|&l| l >= longest * (1.0 - EDGE_TIE_TOL))
            .expect("non-empty edge list");
        verts.rotate_left(chosen);

        let origin = verts[0];
        let dir = [verts[1][0] - origin[0], verts[1][1] - origin[1]];
        let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let (c, s) = (dir[0] / len, dir[1] / len);
        let mut normalized: Vec<Point> = verts
            .iter()
            .map(|v| {
                let x = v[0] - origin[0];
                let y = v[1] - origin[1];
                [c * x + s * y, -s * x + c * y]
            })
            .collect();
        normalized[0] = [0.0, 0.0];
        normalized[1] = [len, 0.0];

        let exterior_angles = (0..n)
            .map(|i| {
                let prev = normalized[(i + n - 1) % n];
                let cur = normalized[i];
                let next = normalized[(i + 1) % n];
                let a = [cur[0] - prev[0], cur[1] - prev[1]];
                let b = [next[0] - cur[0], next[1] - cur[1]];
                let turn = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
                RationalAngle::from_radians(PI + turn, options.angle_tolerance, options.max_denominator)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let data = derive_rational_data(&exterior_angles)?;
        Ok(Self {
            kind: ShapeKind::Polygon,
            vertices: normalized,
            exterior_angles,
            data,
        })
    }

    /// Named shapes with unit side length.
    pub fn preset(name: &str) -> Result<Self, GeometryError> {
        let verts: Vec<Point> = match name {
            "square" => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            "equilateral" => vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.75f64.sqrt()]],
            "isosceles-right" => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            "screen" => return Self::from_vertices(&[[0.0, 0.0], [1.0, 0.0]], ShapeKind::Screen, ShapeOptions::default()),
            "pentagon" => regular_polygon(5),
            other => return Err(GeometryError::UnknownPreset(other.to_string())),
        };
        Self::from_vertices(&verts, ShapeKind::Polygon, ShapeOptions::default())
    }

    /// Parses the plain-text geometry format: a `kind=polygon|screen` line
    /// followed by `vertex x y` lines. `#` starts a comment.
    pub fn parse(text: &str, options: ShapeOptions) -> Result<Self, GeometryError> {
        let mut kind = None;
        let mut vertices = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("kind") {
                let value = rest.trim_start().strip_prefix('=').ok_or_else(|| GeometryError::Parse {
                    line: line_no,
                    message: "expected `kind=...`".into(),
                })?;
                kind = Some(value.parse::<ShapeKind>().map_err(|_| GeometryError::Parse {
                    line: line_no,
                    message: format!("unknown kind `{}`", value.trim()),
                })?);
            } else if let Some(rest) = line.strip_prefix("vertex") {
                let coords: Vec<f64> = rest
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| GeometryError::Parse {
                        line: line_no,
                        message: format!("bad coordinate: {e}"),
                    })?;
                if coords.len() != 2 {
                    return Err(GeometryError::Parse {
                        line: line_no,
                        message: "a vertex needs exactly two coordinates".into(),
                    });
                }
                vertices.push([coords[0], coords[1]]);
            } else {
                return Err(GeometryError::Parse {
                    line: line_no,
                    message: format!("unrecognised line `{line}`"),
                });
            }
        }
        let kind = kind.ok_or(GeometryError::Parse {
            line: 0,
            message: "missing `kind=` line".into(),
        })?;
        Self::from_vertices(&vertices, kind, options)
    }

    pub fn kind(&self) -> ShapeKind {
        self.kind
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn exterior_angles(&self) -> &[RationalAngle] {
        &self.exterior_angles
    }

    pub fn p(&self) -> u32 {
        self.data.p
    }

    pub fn q(&self) -> &[u32] {
        &self.data.q
    }

    /// Number of canonical far fields the embedding formula needs.
    pub fn m(&self) -> u32 {
        self.data.m
    }

    pub fn rational_data(&self) -> &RationalData {
        &self.data
    }

    /// Boundary pieces in order; a screen has a single open edge.
    pub fn edges(&self) -> Vec<Edge> {
        match self.kind {
            ShapeKind::Screen => vec![Edge {
                start: self.vertices[0],
                end: self.vertices[1],
            }],
            ShapeKind::Polygon => {
                let n = self.vertices.len();
                (0..n)
                    .map(|i| Edge {
                        start: self.vertices[i],
                        end: self.vertices[(i + 1) % n],
                    })
                    .collect()
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().iter().map(Edge::length).sum()
    }

    /// Largest distance from the origin to a vertex.
    pub fn radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// Text form accepted by [`RationalShape::parse`].
    pub fn to_geometry_text(&self) -> String {
        let mut out = format!("kind={}\n", self.kind);
        for v in &self.vertices {
            out.push_str(&format!("vertex {:.17e} {:.17e}\n", v[0], v[1]));
        }
        out
    }
}

fn regular_polygon(sides: usize) -> Vec<Point> {
    let mut verts = Vec::with_capacity(sides);
    let mut pos = [0.0, 0.0];
    for i in 0..sides {
        verts.push(pos);
        let heading = 2.0 * PI * i as f64 / sides as f64;
        pos = [pos[0] + heading.cos(), pos[1] + heading.sin()];
    }
    verts
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}

fn check_simple(v: &[Point]) -> Result<(), GeometryError> {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return Err(GeometryError::SelfIntersecting(i, j));
            }
        }
    }
    Ok(())
}
