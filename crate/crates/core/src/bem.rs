//! Piecewise-constant collocation for the sound-soft single-layer equation.
//!
//! The density `d ≈ ∂u/∂n` solves `S d = u^i` on the boundary, where `S` has
//! kernel `(i/4) H₀⁽¹⁾(k|x − y|)`. For a screen `d` is the jump of the normal
//! derivative across the arc. Far fields are evaluated under the integral sign,
//! so they are entire in θ and can be differentiated exactly.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Point, RationalShape};
use crate::linalg::{max_abs, CMatrix, LuFactors};
use crate::pattern::FarFieldPattern;
use crate::specialfun::{cached_rule, hankel1_0_unchecked};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Elements closer than this many own lengths get log-subtracted integration.
const NEAR_FACTOR: f64 = 2.0;
/// Gauss order for each smooth piece of a near-singular element.
const NEAR_ORDER: usize = 16;
/// Gauss points per element for far-field evaluation.
const FAR_FIELD_ORDER: usize = 10;
/// Smallest admissible element length relative to its edge.
const MIN_RELATIVE_ELEMENT: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BemError {
    #[error("wavenumber must be positive and finite, got {0}")]
    InvalidWavenumber(f64),
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(String),
    #[error("edge {edge} is too short for {layers} graded layers")]
    EmptyMesh { edge: usize, layers: usize },
    #[error("singular collocation system: pivot {pivot:.3e} below {threshold:.3e}")]
    SingularSystem { pivot: f64, threshold: f64 },
}

/// Discretisation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BemParams {
    pub elements_per_wavelength: f64,
    /// Ratio between consecutive element lengths approaching a corner.
    pub grading: f64,
    /// Number of graded layers at each corner.
    pub layers: usize,
}

impl Default for BemParams {
    fn default() -> Self {
        Self {
            elements_per_wavelength: 20.0,
            grading: 0.15,
            layers: 8,
        }
    }
}

impl BemParams {
    /// Same grading, `factor` times as many elements per wavelength.
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            elements_per_wavelength: self.elements_per_wavelength * factor,
            ..*self
        }
    }

    fn validate(&self) -> Result<(), BemError> {
        if !(self.elements_per_wavelength >= 2.0) || !self.elements_per_wavelength.is_finite() {
            return Err(BemError::InvalidParameter(format!(
                "elements_per_wavelength must be at least 2, got {}",
                self.elements_per_wavelength
            )));
        }
        if !(self.grading > 0.0 && self.grading < 1.0) {
            return Err(BemError::InvalidParameter(format!("grading must lie in (0,1), got {}", self.grading)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub start: Point,
    pub end: Point,
    /// Index of the parent edge.
    pub edge: usize,
}

impl Element {
    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    pub fn midpoint(&self) -> Point {
        [0.5 * (self.start[0] + self.end[0]), 0.5 * (self.start[1] + self.end[1])]
    }

    fn point_at(&self, s: f64) -> Point {
        let l = self.length();
        [
            self.start[0] + s / l * (self.end[0] - self.start[0]),
            self.start[1] + s / l * (self.end[1] - self.start[1]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub elements: Vec<Element>,
    pub grading: f64,
    pub layers: usize,
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn max_element_length(&self) -> f64 {
        self.elements.iter().map(Element::length).fold(0.0, f64::max)
    }
}

/// Breakpoints in `[0, len]`: geometric layers toward both ends, uniform middle.
fn edge_breakpoints(len: f64, h_uniform: f64, grading: f64, layers: usize) -> Vec<f64> {
    let mut pts = vec![0.0];
    for j in (1..=layers).rev() {
        pts.push(h_uniform * grading.powi(j as i32));
    }
    let middle = len - 2.0 * h_uniform;
    let n_mid = if middle > 1e-12 * len {
        (middle / h_uniform - 1e-9).ceil().max(1.0) as usize
    } else {
        0
    };
    pts.push(h_uniform);
    for i in 1..=n_mid {
        pts.push(h_uniform + middle * i as f64 / n_mid as f64);
    }
    for j in 1..=layers {
        pts.push(len - h_uniform * grading.powi(j as i32));
    }
    pts.push(len);
    pts
}

pub fn build_mesh(shape: &RationalShape, k: f64, params: &BemParams) -> Result<Mesh, BemError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(BemError::InvalidWavenumber(k));
    }
    params.validate()?;
    let h_wave = 2.0 * PI / (k * params.elements_per_wavelength);
    let mut elements = Vec::new();
    for (index, edge) in shape.edges().iter().enumerate() {
        let len = edge.length();
        let h_uniform = h_wave.min(0.5 * len);
        if h_uniform * params.grading.powi(params.layers as i32) < MIN_RELATIVE_ELEMENT * len {
            return Err(BemError::EmptyMesh {
                edge: index,
                layers: params.layers,
            });
        }
        let pts = edge_breakpoints(len, h_uniform, params.grading, params.layers);
        for w in pts.windows(2) {
            elements.push(Element {
                start: edge.point_at(w[0] / len),
                end: edge.point_at(w[1] / len),
                edge: index,
            });
        }
    }
    Ok(Mesh {
        elements,
        grading: params.grading,
        layers: params.layers,
    })
}

/// `∫ ln √(u² + d²) du` antiderivative.
fn log_antiderivative(u: f64, d: f64) -> f64 {
    if d == 0.0 {
        if u == 0.0 {
            0.0
        } else {
            u * u.abs().ln() - u
        }
    } else {
        0.5 * (u * (u * u + d * d).ln() - 2.0 * u + 2.0 * d * (u / d).atan())
    }
}

/// Smooth part `(i/4)H₀⁽¹⁾(kr) + ln(r)/2π` of the kernel.
fn kernel_remainder(k: f64, r: f64) -> Complex64 {
    if r == 0.0 {
        Complex64::new(-((0.5 * k).ln() + EULER_GAMMA) / (2.0 * PI), 0.25)
    } else {
        0.25 * Complex64::i() * hankel1_0_unchecked(k * r) + r.ln() / (2.0 * PI)
    }
}

fn kernel(k: f64, r: f64) -> Complex64 {
    0.25 * Complex64::i() * hankel1_0_unchecked(k * r)
}

/// `∫_el (i/4) H₀⁽¹⁾(k|x − y|) ds(y)`.
fn single_layer_integral(k: f64, x: Point, el: &Element) -> Complex64 {
    let len = el.length();
    let t = [(el.end[0] - el.start[0]) / len, (el.end[1] - el.start[1]) / len];
    let rel = [x[0] - el.start[0], x[1] - el.start[1]];
    let s0 = rel[0] * t[0] + rel[1] * t[1];
    let d = (rel[0] * t[1] - rel[1] * t[0]).abs();
    let dist = if (0.0..=len).contains(&s0) {
        d
    } else {
        let over = if s0 < 0.0 { -s0 } else { s0 - len };
        over.hypot(d)
    };
    let r_at = |s: f64| (s - s0).hypot(d);

    if dist < NEAR_FACTOR * len {
        let log_part = log_antiderivative(len - s0, d) - log_antiderivative(-s0, d);
        let mut total = Complex64::new(-log_part / (2.0 * PI), 0.0);
        let rule = cached_rule(NEAR_ORDER);
        let split = s0.clamp(0.0, len);
        for (a, b) in [(0.0, split), (split, len)] {
            if b - a <= 0.0 {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xn, w) in rule.nodes.iter().zip(&rule.weights) {
                total += w * half * kernel_remainder(k, r_at(mid + half * xn));
            }
        }
        total
    } else {
        let mut order = (4.0_f64).max((k * len).ceil() + 4.0) as usize;
        if dist < 10.0 * len {
            order = order.max(8);
        }
        let rule = cached_rule(order);
        let half = 0.5 * len;
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(xn, w)| w * half * kernel(k, r_at(half + half * xn)))
            .sum()
    }
}

/// Incident plane wave `e^{−ik(x₁cos α + x₂ sin α)}`.
pub fn incident_wave(k: f64, alpha: f64, x: Point) -> Complex64 {
    let phase = -k * (x[0] * alpha.cos() + x[1] * alpha.sin());
    Complex64::from_polar(1.0, phase)
}

/// Quadrature points on the mesh used for far-field evaluation.
#[derive(Debug)]
struct FarFieldNodes {
    y1: Vec<f64>,
    y2: Vec<f64>,
    weight: Vec<f64>,
    element: Vec<usize>,
}

impl FarFieldNodes {
    fn new(mesh: &Mesh) -> Self {
        let rule = cached_rule(FAR_FIELD_ORDER);
        let cap = mesh.len() * FAR_FIELD_ORDER;
        let mut out = Self {
            y1: Vec::with_capacity(cap),
            y2: Vec::with_capacity(cap),
            weight: Vec::with_capacity(cap),
            element: Vec::with_capacity(cap),
        };
        for (j, el) in mesh.elements.iter().enumerate() {
            let half = 0.5 * el.length();
            for (xn, w) in rule.nodes.iter().zip(&rule.weights) {
                let y = el.point_at(half + half * xn);
                out.y1.push(y[0]);
                out.y2.push(y[1]);
                out.weight.push(w * half);
                out.element.push(j);
            }
        }
        out
    }
}

/// Assembled and factored collocation system for one shape and wavenumber.
#[derive(Debug)]
pub struct BemSystem {
    shape: RationalShape,
    k: f64,
    mesh: Arc<Mesh>,
    matrix: CMatrix,
    lu: LuFactors,
    nodes: Arc<FarFieldNodes>,
}

impl BemSystem {
    pub fn assemble_and_factor(shape: &RationalShape, k: f64, mesh: Mesh) -> Result<Self, BemError> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(BemError::InvalidWavenumber(k));
        }
        let n = mesh.len();
        let mids: Vec<Point> = mesh.elements.iter().map(Element::midpoint).collect();
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = single_layer_integral(k, mids[i], &mesh.elements[j]);
            }
        });
        let matrix = CMatrix::from_row_major(n, n, data);
        let threshold = 1e-14 * matrix.inf_norm();
        let lu = LuFactors::factor(matrix.clone(), threshold).map_err(|e| BemError::SingularSystem {
            pivot: e.pivot,
            threshold: e.threshold,
        })?;
        let nodes = Arc::new(FarFieldNodes::new(&mesh));
        Ok(Self {
            shape: shape.clone(),
            k,
            mesh: Arc::new(mesh),
            matrix,
            lu,
            nodes,
        })
    }

    /// Meshes and factors in one step.
    pub fn new(shape: &RationalShape, k: f64, params: &BemParams) -> Result<Self, BemError> {
        let mesh = build_mesh(shape, k, params)?;
        Self::assemble_and_factor(shape, k, mesh)
    }

    pub fn shape(&self) -> &RationalShape {
        &self.shape
    }

    pub fn wavenumber(&self) -> f64 {
        self.k
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dof(&self) -> usize {
        self.mesh.len()
    }

    pub fn rhs(&self, alpha: f64) -> Vec<Complex64> {
        self.mesh
            .elements
            .iter()
            .map(|el| incident_wave(self.k, alpha, el.midpoint()))
            .collect()
    }

    pub fn solve_density(&self, alpha: f64) -> CanonicalFarField {
        let rhs = self.rhs(alpha);
        let density = self.lu.solve(&rhs);
        let applied = self.matrix.matvec(&density);
        let resid: Vec<Complex64> = applied.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let residual = max_abs(&resid) / max_abs(&rhs);
        let weights = self
            .nodes
            .weight
            .iter()
            .zip(&self.nodes.element)
            .map(|(w, &j)| -0.5 * w * density[j])
            .collect();
        CanonicalFarField {
            alpha,
            k: self.k,
            density,
            residual,
            weights,
            nodes: Arc::clone(&self.nodes),
            mesh: Arc::clone(&self.mesh),
        }
    }
}

/// The solved density for one incident angle and its far-field pattern.
#[derive(Debug, Clone)]
pub struct CanonicalFarField {
    alpha: f64,
    k: f64,
    density: Vec<Complex64>,
    residual: f64,
    weights: Vec<Complex64>,
    nodes: Arc<FarFieldNodes>,
    mesh: Arc<Mesh>,
}

impl CanonicalFarField {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn wavenumber(&self) -> f64 {
        self.k
    }

    pub fn density(&self) -> &[Complex64] {
        &self.density
    }

    /// Relative collocation residual `‖A d − rhs‖∞ / ‖rhs‖∞`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Copy with the density replaced; used to probe linearity.
    pub fn with_density(&self, density: Vec<Complex64>) -> Self {
        assert_eq!(density.len(), self.density.len());
        let weights = self
            .nodes
            .weight
            .iter()
            .zip(&self.nodes.element)
            .map(|(w, &j)| -0.5 * w * density[j])
            .collect();
        Self {
            density,
            weights,
            ..self.clone()
        }
    }

    pub fn far_field(&self, theta: Complex64) -> Complex64 {
        self.far_field_derivative(theta, 0)
    }

    /// θ-derivative of order 0, 1 or 2, differentiated under the integral.
    pub fn far_field_derivative(&self, theta: Complex64, order: u32) -> Complex64 {
        assert!(order <= 2, "far-field derivatives are available up to order 2");
        let theta = Complex64::new(theta.re.rem_euclid(2.0 * PI), theta.im);
        let (c, s) = (theta.cos(), theta.sin());
        let mik = Complex64::new(0.0, -self.k);
        let n = &self.nodes;
        let mut total = Complex64::new(0.0, 0.0);
        for q in 0..self.weights.len() {
            let (y1, y2) = (n.y1[q], n.y2[q]);
            let phi = mik * (y1 * c + y2 * s);
            let g = self.weights[q] * phi.exp();
            total += match order {
                0 => g,
                1 => mik * (-y1 * s + y2 * c) * g,
                _ => {
                    let dphi = mik * (-y1 * s + y2 * c);
                    (dphi * dphi - phi) * g
                }
            };
        }
        total
    }

    /// `u^s(x) = −∫ G(x,y) d(y) ds(y)`, valid on and off the boundary.
    pub fn scattered_field(&self, x: Point) -> Complex64 {
        -self
            .mesh
            .elements
            .iter()
            .zip(&self.density)
            .map(|(el, d)| single_layer_integral(self.k, x, el) * d)
            .sum::<Complex64>()
    }

    pub fn write_density_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "index,real,imag")?;
        for (i, d) in self.density.iter().enumerate() {
            writeln!(out, "{i},{:.17e},{:.17e}", d.re, d.im)?;
        }
        Ok(())
    }
}

impl FarFieldPattern for CanonicalFarField {
    fn incident_angle(&self) -> f64 {
        self.alpha
    }

    fn value(&self, theta: Complex64) -> Complex64 {
        self.far_field(theta)
    }

    fn derivative(&self, theta: Complex64, order: u32) -> Complex64 {
        self.far_field_derivative(theta, order)
    }
}
