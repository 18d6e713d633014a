//! Stabilised evaluation of the embedding formula.
//!
//! The naive formula `Σ b_m Λ(θ,α_m) D(θ,α_m) / Λ(θ,α)` divides by a function
//! with real zeros. Near those zeros the evaluator subtracts the spurious
//! residues, or, when poles crowd together, replaces the numerator by a
//! quadratic interpolant and integrates around a small rectangle.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::pattern::FarFieldPattern;
use crate::specialfun::{cached_rule, quadratic_interpolate, QuadraticInterpolant, SpecialFnError};

/// Angles closer than this are treated as equal.
pub const EXACT_TOL: f64 = 1e-13;
/// Interpolation nodes closer than this are merged into a Hermite node.
pub const MERGE_TOL: f64 = 1e-8;
/// Node clusters narrower than this use a Taylor quadratic at `θ₀`.
pub const TAYLOR_TOL: f64 = 1e-6;
/// Default Gauss order per contour panel.
pub const DEFAULT_RULE_ORDER: usize = 20;
/// Singular points must stay this fraction of the half-height off a contour.
const POLE_CLEARANCE: f64 = 0.125;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("θ = {0} is a zero of Λ(·,α)")]
    PoleAtTheta(f64),
    #[error("pole {0} is double; use the interpolation branch")]
    DoublePoleInSimpleBranch(f64),
    #[error("singular point {0} lies on or too close to the contour")]
    PoleOnContour(f64),
    #[error("invalid thresholds: need 0 < h < H, got h = {small_h}, H = {big_h}")]
    InvalidThresholds { big_h: f64, small_h: f64 },
    #[error("coefficient vector has length {got}, basis has {expected} patterns")]
    CoefficientLength { expected: usize, got: usize },
    #[error(transparent)]
    Interpolation(#[from] SpecialFnError),
}

/// `Λ(θ,α) = cos(pθ) − (−1)^p cos(pα)`.
///
/// Evaluated in product form so that values near the zeros keep full
/// relative accuracy.
pub fn lambda(theta: Complex64, alpha: f64, p: u32) -> Complex64 {
    let half = 0.5 * p as f64;
    let plus = (theta + alpha) * half;
    let minus = (theta - alpha) * half;
    if p % 2 == 0 {
        -2.0 * plus.sin() * minus.sin()
    } else {
        2.0 * plus.cos() * minus.cos()
    }
}

/// `∂ᵒΛ/∂θᵒ` for order 0, 1 or 2.
pub fn lambda_derivative(theta: Complex64, alpha: f64, p: u32, order: u32) -> Complex64 {
    let pf = p as f64;
    match order {
        0 => lambda(theta, alpha, p),
        1 => -pf * (theta * pf).sin(),
        2 => -pf * pf * (theta * pf).cos(),
        _ => panic!("Λ derivatives are provided up to order 2"),
    }
}

/// `|x|_{2π} = min_n |x + 2nπ|`.
pub fn angle_norm(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r)
}

pub fn angle_distance(a: f64, b: f64) -> f64 {
    angle_norm(a - b)
}

pub fn reduce_angle(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Zeros of `Λ(·,α)` in `[lo, hi]`, ascending, double zeros listed once.
pub fn poles_in(alpha: f64, p: u32, lo: f64, hi: f64) -> Vec<f64> {
    let pf = p as f64;
    let period = 2.0 * PI / pf;
    let shift = if p % 2 == 1 { PI / pf } else { 0.0 };
    let mut out = Vec::new();
    for s in [1.0, -1.0] {
        let c = s * alpha + shift;
        let n_lo = ((lo - c) / period).ceil() as i64;
        let n_hi = ((hi - c) / period).floor() as i64;
        for n in n_lo..=n_hi {
            out.push(c + n as f64 * period);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= EXACT_TOL);
    out
}

/// Nearest multiple of `π/p` to `x`.
pub fn nearest_coalescence_point(x: f64, p: u32) -> f64 {
    let step = PI / p as f64;
    (x / step).round() * step
}

/// The poles that matter near one observation angle. All angles are
/// unwrapped representatives close to `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleEnvironment {
    pub theta: f64,
    pub theta0: f64,
    pub theta0_prime: f64,
    pub theta_star: f64,
    pub is_double: bool,
}

impl PoleEnvironment {
    /// `|θ − θ₀|_{2π}`.
    pub fn distance(&self) -> f64 {
        (self.theta - self.theta0).abs()
    }

    /// `|θ₀ − θ₀′|_{2π}`.
    pub fn separation(&self) -> f64 {
        (self.theta0 - self.theta0_prime).abs()
    }
}

pub fn pole_environment(theta: f64, alpha: f64, p: u32) -> PoleEnvironment {
    let reach = PI + 2.0 * PI / p as f64;
    let candidates = poles_in(alpha, p, theta - reach, theta + reach);
    let mut theta0 = candidates[0];
    for &c in &candidates[1..] {
        let (dc, d0) = ((theta - c).abs(), (theta - theta0).abs());
        if dc < d0 - EXACT_TOL || ((dc - d0).abs() <= EXACT_TOL && reduce_angle(c) < reduce_angle(theta0)) {
            theta0 = c;
        }
    }
    let theta_star = nearest_coalescence_point(theta0, p);
    let is_double = (theta0 - theta_star).abs() <= EXACT_TOL;
    let theta0_prime = if is_double {
        theta0
    } else {
        let near = poles_in(alpha, p, theta0 - reach, theta0 + reach);
        let mut best = f64::NAN;
        for &c in &near {
            if (c - theta0).abs() <= EXACT_TOL {
                continue;
            }
            if best.is_nan()
                || (c - theta0).abs() < (best - theta0).abs() - EXACT_TOL
                || (((c - theta0).abs() - (best - theta0).abs()).abs() <= EXACT_TOL && reduce_angle(c) < reduce_angle(best))
            {
                best = c;
            }
        }
        best
    };
    PoleEnvironment {
        theta,
        theta0,
        theta0_prime,
        theta_star,
        is_double,
    }
}

/// Diagnostic constant of the semi-discrete error bound for a given `‖b‖₂`.
pub fn error_constant(b_norm: f64) -> f64 {
    let l = (3.0 + PI * PI / 64.0).ln();
    128.0 * (5.0 * PI + 4.0 * l) * (6.0 + PI * PI / 64.0) / PI.powi(4) * b_norm
}

/// Half-width of the strip in which canonical far fields must be accurate.
pub fn strip_half_width(p: u32) -> f64 {
    (3.0 + PI * PI / 64.0).ln() / p as f64
}

/// Axis-aligned rectangle `[left, right] × [−half_height, half_height]`,
/// traversed counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectContour {
    pub left: f64,
    pub right: f64,
    pub half_height: f64,
}

impl RectContour {
    /// Distance from a real point to the rectangle boundary.
    pub fn distance_to(&self, x: f64) -> f64 {
        let horizontal = if x < self.left {
            (self.left - x).hypot(self.half_height)
        } else if x > self.right {
            (x - self.right).hypot(self.half_height)
        } else {
            self.half_height
        };
        horizontal.min((x - self.left).abs()).min((x - self.right).abs())
    }

    pub fn encloses(&self, x: f64) -> bool {
        x > self.left && x < self.right
    }
}

/// Smallest rectangle with every point of `X` at distance `h` from its boundary.
pub fn rect_contour(points: &[f64], h: f64) -> RectContour {
    let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    RectContour {
        left: lo - h,
        right: hi + h,
        half_height: h,
    }
}

/// As [`rect_contour`], but pulls a vertical side in when an excluded point
/// would otherwise sit within `h` of it, splitting the gap evenly.
pub fn rect_contour_avoiding(points: &[f64], h: f64, excluded: &[f64]) -> RectContour {
    let mut rect = rect_contour(points, h);
    let lo = rect.left + h;
    let hi = rect.right - h;
    for &x in excluded {
        if x < lo && lo - x < 2.0 * h {
            rect.left = rect.left.max(lo - 0.5 * (lo - x));
        } else if x > hi && x - hi < 2.0 * h {
            rect.right = rect.right.min(hi + 0.5 * (x - hi));
        }
    }
    rect
}

/// `(1/2πi) ∮ g(z) dz` with composite Gauss panels no longer than twice the
/// distance to the nearest singular point.
pub fn contour_integral<G: Fn(Complex64) -> Complex64>(
    contour: &RectContour,
    order: usize,
    singular: &[f64],
    g: G,
) -> Result<Complex64, EmbeddingError> {
    let hh = contour.half_height;
    for &x in singular {
        if contour.distance_to(x) < POLE_CLEARANCE * hh {
            return Err(EmbeddingError::PoleOnContour(x));
        }
    }
    let (l, r) = (contour.left, contour.right);
    let corners = [
        Complex64::new(l, -hh),
        Complex64::new(r, -hh),
        Complex64::new(r, hh),
        Complex64::new(l, hh),
    ];
    let rule = cached_rule(order);
    let mut total = Complex64::new(0.0, 0.0);
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        let clearance = singular
            .iter()
            .map(|&x| point_segment_distance(Complex64::new(x, 0.0), a, b))
            .fold(f64::INFINITY, f64::min);
        let len = (b - a).norm();
        let panels = if clearance.is_finite() {
            (len / (2.0 * clearance)).ceil().max(1.0) as usize
        } else {
            1
        };
        for k in 0..panels {
            let pa = a + (b - a) * (k as f64 / panels as f64);
            let pb = a + (b - a) * ((k + 1) as f64 / panels as f64);
            let half = (pb - pa) * 0.5;
            let mid = (pa + pb) * 0.5;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                total += g(mid + half * *x) * half * *w;
            }
        }
    }
    Ok(total / (2.0 * PI * Complex64::i()))
}

fn point_segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let t = ((z - a).re * ab.re + (z - a).im * ab.im) / ab.norm_sqr();
    let t = t.clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

/// Canonical far fields with the polygon's `p`.
#[derive(Debug, Clone)]
pub struct EmbeddingBasis<P> {
    p: u32,
    patterns: Vec<P>,
}

impl<P: FarFieldPattern> EmbeddingBasis<P> {
    pub fn new(p: u32, patterns: Vec<P>) -> Self {
        assert!(p >= 1, "p must be positive");
        Self { p, patterns }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[P] {
        &self.patterns
    }

    pub fn angles(&self) -> Vec<f64> {
        self.patterns.iter().map(|f| f.incident_angle()).collect()
    }

    /// `∂ᵒ/∂θᵒ [Λ(θ,α_m) D(θ,α_m)]`.
    pub fn hatted(&self, m: usize, theta: Complex64, order: u32) -> Complex64 {
        let pat = &self.patterns[m];
        let a = pat.incident_angle();
        let lam = |o| lambda_derivative(theta, a, self.p, o);
        match order {
            0 => lam(0) * pat.value(theta),
            1 => lam(1) * pat.value(theta) + lam(0) * pat.derivative(theta, 1),
            2 => {
                lam(2) * pat.value(theta) + 2.0 * lam(1) * pat.derivative(theta, 1) + lam(0) * pat.derivative(theta, 2)
            }
            _ => panic!("hatted derivatives are provided up to order 2"),
        }
    }

    /// `Σ_m b_m ∂ᵒD̂(θ,α_m)`, skipping zero coefficients.
    pub fn numerator(&self, b: &[Complex64], theta: Complex64, order: u32) -> Complex64 {
        b.iter()
            .enumerate()
            .filter(|(_, bm)| bm.norm_sqr() > 0.0)
            .map(|(m, bm)| bm * self.hatted(m, theta, order))
            .sum()
    }

    fn check_len(&self, b: &[Complex64]) -> Result<(), EmbeddingError> {
        if b.len() != self.patterns.len() {
            return Err(EmbeddingError::CoefficientLength {
                expected: self.patterns.len(),
                got: b.len(),
            });
        }
        Ok(())
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// The naive embedding formula.
pub fn naive_eval<P: FarFieldPattern>(
    basis: &EmbeddingBasis<P>,
    b: &[Complex64],
    theta: f64,
    alpha: f64,
) -> Result<Complex64, EmbeddingError> {
    basis.check_len(b)?;
    let lam = lambda(real(theta), alpha, basis.p);
    if lam.norm() == 0.0 {
        return Err(EmbeddingError::PoleAtTheta(theta));
    }
    Ok(basis.numerator(b, real(theta), 0) / lam)
}

/// Naive formula minus the residues of the listed simple poles.
pub fn residue_eval<P: FarFieldPattern>(
    basis: &EmbeddingBasis<P>,
    b: &[Complex64],
    theta: f64,
    alpha: f64,
    include: &[f64],
) -> Result<Complex64, EmbeddingError> {
    let naive = naive_eval(basis, b, theta, alpha)?;
    Ok(naive - residue_sum(basis, b, theta, include)?)
}

fn residue_sum<P: FarFieldPattern>(
    basis: &EmbeddingBasis<P>,
    b: &[Complex64],
    theta: f64,
    include: &[f64],
) -> Result<Complex64, EmbeddingError> {
    let pf = basis.p as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for &chi in include {
        let s = (pf * chi).sin();
        if s.abs() <= EXACT_TOL {
            return Err(EmbeddingError::DoublePoleInSimpleBranch(chi));
        }
        total += basis.numerator(b, real(chi), 0) / (pf * (chi - theta) * s);
    }
    Ok(total)
}

/// `(1/2πi) ∮ ρ₂(z) / (Λ(z,α)(z − θ)) dz`.
pub fn contour_eval(
    rho: &QuadraticInterpolant,
    alpha: f64,
    p: u32,
    theta: f64,
    contour: &RectContour,
    rule_order: usize,
) -> Result<Complex64, EmbeddingError> {
    let singular = singular_points(alpha, p, theta, contour);
    contour_integral(contour, rule_order, &singular, |z| {
        rho.eval(z) / (lambda(z, alpha, p) * (z - theta))
    })
}

/// Same contour integral with the true numerator in place of `ρ₂`.
pub fn direct_contour_eval<P: FarFieldPattern>(
    basis: &EmbeddingBasis<P>,
    b: &[Complex64],
    theta: f64,
    alpha: f64,
    contour: &RectContour,
    rule_order: usize,
) -> Result<Complex64, EmbeddingError> {
    basis.check_len(b)?;
    let p = basis.p;
    let singular = singular_points(alpha, p, theta, contour);
    contour_integral(contour, rule_order, &singular, |z| {
        basis.numerator(b, z, 0) / (lambda(z, alpha, p) * (z - theta))
    })
}

fn singular_points(alpha: f64, p: u32, theta: f64, contour: &RectContour) -> Vec<f64> {
    let margin = 1.0;
    let mut pts = poles_in(alpha, p, contour.left - margin, contour.right + margin);
    pts.push(theta);
    pts
}

/// Which formula produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Naive,
    Residue1,
    Residue2,
    Rho2Contour,
    Lhopital2,
}

impl Branch {
    pub const ALL: [Branch; 5] = [Branch::Naive, Branch::Residue1, Branch::Residue2, Branch::Rho2Contour, Branch::Lhopital2];

    pub fn label(&self) -> &'static str {
        match self {
            Branch::Naive => "naive",
            Branch::Residue1 => "residue1",
            Branch::Residue2 => "residue2",
            Branch::Rho2Contour => "rho2-contour",
            Branch::Lhopital2 => "lhopital2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: Complex64,
    pub branch: Branch,
}

/// Switching thresholds on the distance to the nearest pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub big_h: f64,
    pub small_h: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { big_h: 0.15, small_h: 0.01 }
    }
}

impl Thresholds {
    pub fn new(big_h: f64, small_h: f64) -> Result<Self, EmbeddingError> {
        if !(small_h > 0.0 && small_h < big_h && big_h.is_finite()) {
            return Err(EmbeddingError::InvalidThresholds { big_h, small_h });
        }
        Ok(Self { big_h, small_h })
    }
}

/// Threshold-driven dispatch between the naive, residue, interpolated
/// contour and limit formulas.
#[derive(Debug, Clone)]
pub struct StabilizedEvaluator<'a, P> {
    basis: &'a EmbeddingBasis<P>,
    thresholds: Thresholds,
    rule_order: usize,
}

impl<'a, P: FarFieldPattern> StabilizedEvaluator<'a, P> {
    pub fn new(basis: &'a EmbeddingBasis<P>, thresholds: Thresholds) -> Self {
        Self {
            basis,
            thresholds,
            rule_order: DEFAULT_RULE_ORDER,
        }
    }

    pub fn with_rule_order(mut self, order: usize) -> Self {
        self.rule_order = order;
        self
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn basis(&self) -> &EmbeddingBasis<P> {
        self.basis
    }

    pub fn evaluate(&self, theta: f64, alpha: f64, b: &[Complex64]) -> Result<Evaluation, EmbeddingError> {
        self.basis.check_len(b)?;
        let p = self.basis.p;
        let theta = reduce_angle(theta);
        let env = pole_environment(theta, alpha, p);
        let (big_h, h) = (self.thresholds.big_h, self.thresholds.small_h);
        let d = env.distance();
        let s = env.separation();

        if d >= big_h {
            return Ok(Evaluation {
                value: naive_eval(self.basis, b, theta, alpha)?,
                branch: Branch::Naive,
            });
        }
        if d >= h {
            let naive = naive_eval(self.basis, b, theta, alpha)?;
            return if s < h {
                let rho = self.interpolant(b, &env)?;
                let x = dedup(&[env.theta0, env.theta0_prime]);
                let mut excluded = poles_in(alpha, p, env.theta0 - 3.0 * h - s, env.theta0 + 3.0 * h + s);
                excluded.retain(|c| x.iter().all(|xi| (c - xi).abs() > EXACT_TOL));
                excluded.push(theta);
                let contour = rect_contour_avoiding(&x, h, &excluded);
                let correction = contour_eval(&rho, alpha, p, theta, &contour, self.rule_order)?;
                Ok(Evaluation {
                    value: naive + correction,
                    branch: Branch::Rho2Contour,
                })
            } else if s < big_h {
                Ok(Evaluation {
                    value: naive - residue_sum(self.basis, b, theta, &[env.theta0, env.theta0_prime])?,
                    branch: Branch::Residue2,
                })
            } else {
                Ok(Evaluation {
                    value: naive - residue_sum(self.basis, b, theta, &[env.theta0])?,
                    branch: Branch::Residue1,
                })
            };
        }

        if env.is_double && d <= EXACT_TOL {
            return Ok(Evaluation {
                value: self.lhopital(b, env.theta0),
                branch: Branch::Lhopital2,
            });
        }
        let rho = self.interpolant(b, &env)?;
        let x = if s < h {
            dedup(&[theta, env.theta0, env.theta0_prime])
        } else {
            dedup(&[theta, env.theta0])
        };
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut excluded = poles_in(alpha, p, lo - 3.0 * h, hi + 3.0 * h);
        excluded.retain(|c| x.iter().all(|xi| (c - xi).abs() > EXACT_TOL));
        let contour = rect_contour_avoiding(&x, h, &excluded);
        let mut value = contour_eval(&rho, alpha, p, theta, &contour, self.rule_order)?;
        if s >= h && s < big_h {
            value -= residue_sum(self.basis, b, theta, &[env.theta0_prime])?;
        }
        Ok(Evaluation {
            value,
            branch: Branch::Rho2Contour,
        })
    }

    /// Limit of the formula at a double pole.
    fn lhopital(&self, b: &[Complex64], theta0: f64) -> Complex64 {
        let p = self.basis.p as f64;
        self.basis.numerator(b, real(theta0), 2) / (-p * p * (p * theta0).cos())
    }

    /// `ρ₂` through `{θ, θ₀, θ₀′}`. Nodes closer than [`MERGE_TOL`] become a
    /// Hermite node at `θ₀`; a cluster narrower than [`TAYLOR_TOL`] is
    /// replaced by the Taylor quadratic at `θ₀`, since divided differences
    /// over such short gaps amplify rounding.
    fn interpolant(&self, b: &[Complex64], env: &PoleEnvironment) -> Result<QuadraticInterpolant, EmbeddingError> {
        let f = |x: f64, order: u32| self.basis.numerator(b, real(x), order);
        let t0 = env.theta0;
        let (d, s) = (env.distance(), env.separation());
        if d.max(s) < TAYLOR_TOL {
            return Ok(QuadraticInterpolant::taylor(real(t0), f(t0, 0), f(t0, 1), f(t0, 2)));
        }
        let prime_merged = env.is_double || s < MERGE_TOL;
        let theta_merged = d < MERGE_TOL;
        let (t, tp) = (env.theta, env.theta0_prime);
        let rho = if !prime_merged && !theta_merged {
            quadratic_interpolate(&[(real(t), f(t, 0)), (real(t0), f(t0, 0)), (real(tp), f(tp, 0))], None)?
        } else {
            let other = if prime_merged { t } else { tp };
            quadratic_interpolate(&[(real(t0), f(t0, 0)), (real(other), f(other, 0))], Some((real(t0), f(t0, 1))))?
        };
        Ok(rho)
    }
}

fn dedup(xs: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(xs.len());
    for &x in xs {
        if out.iter().all(|y| (x - y).abs() > EXACT_TOL) {
            out.push(x);
        }
    }
    out
}
