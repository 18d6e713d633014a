//! Hankel functions of the first kind (orders 0 and 1), Gauss–Legendre rules
//! and low-degree Hermite interpolation in the complex plane.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this argument the ascending series is used.
const SERIES_LIMIT: f64 = 8.0;
/// At and above this argument the Hankel asymptotic expansion is used.
const ASYMPTOTIC_LIMIT: f64 = 25.0;

/// Largest rule size handed out by [`cached_rule`].
pub const MAX_CACHED_RULE: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialFnError {
    #[error("Hankel function argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("Hankel order {0} is not supported (only 0 and 1)")]
    UnsupportedOrder(u32),
    #[error("Gauss–Legendre rule size {0} outside 1..=200")]
    RuleSize(usize),
    #[error("interpolation needs at most 3 conditions, got {0}")]
    OverdeterminedConstraints(usize),
    #[error("interpolation needs at least 2 conditions, got {0}")]
    UnderdeterminedConstraints(usize),
    #[error("interpolation nodes coincide without a derivative constraint")]
    CoincidentNodesWithoutDerivative,
    #[error("derivative constraint must sit on one of the interpolation nodes")]
    DerivativeNodeMismatch,
}

/// `J_0, J_1, Y_0, Y_1` at a single positive argument.
#[derive(Debug, Clone, Copy)]
pub struct BesselPair {
    pub j0: f64,
    pub j1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Hankel function of the first kind `H^{(1)}_order(x) = J_order(x) + i Y_order(x)`.
pub fn hankel1(order: u32, x: f64) -> Result<Complex64, SpecialFnError> {
    if order > 1 {
        return Err(SpecialFnError::UnsupportedOrder(order));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(SpecialFnError::NonPositiveArgument(x));
    }
    if x >= ASYMPTOTIC_LIMIT {
        return Ok(hankel_asymptotic(order as f64, x));
    }
    let b = bessel_01(x);
    Ok(match order {
        0 => Complex64::new(b.j0, b.y0),
        _ => Complex64::new(b.j1, b.y1),
    })
}

/// `H^{(1)}_0(x)` for `x > 0`, without argument checks. Used on hot paths
/// where the caller guarantees a positive argument.
#[inline]
pub(crate) fn hankel1_0_unchecked(x: f64) -> Complex64 {
    if x >= ASYMPTOTIC_LIMIT {
        hankel_asymptotic(0.0, x)
    } else if x <= SERIES_LIMIT {
        let (j0, y0) = series_order0(x);
        Complex64::new(j0, y0)
    } else {
        let b = miller_neumann(x);
        Complex64::new(b.j0, b.y0)
    }
}

/// Bessel functions of orders 0 and 1 for `0 < x`.
pub fn bessel_01(x: f64) -> BesselPair {
    if x <= SERIES_LIMIT {
        ascending_series(x)
    } else if x < ASYMPTOTIC_LIMIT {
        miller_neumann(x)
    } else {
        let h0 = hankel_asymptotic(0.0, x);
        let h1 = hankel_asymptotic(1.0, x);
        BesselPair {
            j0: h0.re,
            j1: h1.re,
            y0: h0.im,
            y1: h1.im,
        }
    }
}

fn series_order0(x: f64) -> (f64, f64) {
    let w = -0.25 * x * x;
    let mut term = 1.0;
    let mut j0 = 1.0;
    let mut harmonic = 0.0;
    let mut ysum = 0.0;
    for k in 1..80 {
        let kf = k as f64;
        term *= w / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        ysum += harmonic * term;
        if term.abs() * (1.0 + harmonic) < 1e-18 {
            break;
        }
    }
    let log_part = (0.5 * x).ln() + EULER_GAMMA;
    let y0 = FRAC_2_PI * (log_part * j0 - ysum);
    (j0, y0)
}

fn ascending_series(x: f64) -> BesselPair {
    let (j0, y0) = series_order0(x);
    let w = -0.25 * x * x;
    // order one: sum over (-x^2/4)^k / (k! (k+1)!)
    let mut term = 1.0;
    let mut jsum = 1.0;
    let mut harmonic_k = 0.0;
    let mut harmonic_k1 = 1.0;
    let mut ysum = harmonic_k + harmonic_k1;
    for k in 1..80 {
        let kf = k as f64;
        term *= w / (kf * (kf + 1.0));
        harmonic_k += 1.0 / kf;
        harmonic_k1 += 1.0 / (kf + 1.0);
        jsum += term;
        ysum += (harmonic_k + harmonic_k1) * term;
        if term.abs() * (harmonic_k + harmonic_k1) < 1e-18 {
            break;
        }
    }
    let half = 0.5 * x;
    let j1 = half * jsum;
    let log_part = half.ln() + EULER_GAMMA;
    let y1 = -FRAC_2_PI / x + FRAC_2_PI * log_part * j1 - half * ysum / PI;
    BesselPair { j0, j1, y0, y1 }
}

/// Backward recurrence for `J_n` normalised by `J_0 + 2 Σ J_{2k} = 1`, with
/// Neumann series for `Y_0` and its derivative for `Y_1`.
fn miller_neumann(x: f64) -> BesselPair {
    let start = {
        let n = (x + 10.0 * x.cbrt() + 30.0).ceil() as usize;
        n + (n % 2)
    };
    let mut j = vec![0.0_f64; start + 2];
    j[start] = 1e-30;
    for n in (1..=start).rev() {
        j[n - 1] = 2.0 * n as f64 / x * j[n] - j[n + 1];
        if j[n - 1].abs() > 1e250 {
            for v in j.iter_mut().skip(n - 1) {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    for v in j.iter_mut() {
        *v /= norm;
    }
    let log_part = (0.5 * x).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k + 1 < j.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        s0 += sign * j[2 * k] / kf;
        s1 += sign * (j[2 * k - 1] - j[2 * k + 1]) / kf;
        k += 1;
    }
    let y0 = FRAC_2_PI * (log_part * j[0] - 2.0 * s0);
    let y1 = FRAC_2_PI * (log_part * j[1] - j[0] / x + s1);
    BesselPair {
        j0: j[0],
        j1: j[1],
        y0,
        y1,
    }
}

/// Hankel asymptotic expansion, summed until the terms stop decreasing.
fn hankel_asymptotic(order: f64, x: f64) -> Complex64 {
    let mu = 4.0 * order * order;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut prev = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= Complex64::new(0.0, (mu - odd * odd) / (8.0 * k as f64 * x));
        let size = term.norm();
        if size > prev {
            break;
        }
        sum += term;
        prev = size;
        if size < 1e-18 {
            break;
        }
    }
    let (s, c) = x.sin_cos();
    let shift = Complex64::from_polar(1.0, -(order * FRAC_PI_2 + FRAC_PI_4));
    (2.0 / (PI * x)).sqrt() * Complex64::new(c, s) * shift * sum
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]` with the rule mapped affinely.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
    }
}

/// Computes the `n`-point Gauss–Legendre rule by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule, SpecialFnError> {
    if !(1..=200).contains(&n) {
        return Err(SpecialFnError::RuleSize(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                dp = legendre_with_derivative(n, x).1;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared rules of size `1..=MAX_CACHED_RULE`, built once on first use.
pub fn cached_rule(n: usize) -> &'static QuadratureRule {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        (1..=MAX_CACHED_RULE)
            .map(|m| gauss_legendre(m).expect("cached rule sizes are in range"))
            .collect()
    });
    &rules[n.clamp(1, MAX_CACHED_RULE) - 1]
}

/// Polynomial of degree at most two in Newton form, possibly with a
/// repeated (confluent) node.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticInterpolant {
    nodes: Vec<Complex64>,
    coeffs: Vec<Complex64>,
}

impl QuadraticInterpolant {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = *self.coeffs.last().expect("at least one coefficient");
        for i in (0..self.coeffs.len() - 1).rev() {
            acc = acc * (z - self.nodes[i]) + self.coeffs[i];
        }
        acc
    }

    /// Taylor quadratic `f + f₁(z − a) + f₂(z − a)²/2`.
    pub fn taylor(center: Complex64, value: Complex64, first: Complex64, second: Complex64) -> Self {
        Self {
            nodes: vec![center, center],
            coeffs: vec![value, first, 0.5 * second],
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }
}

/// Absolute tolerance under which two nodes are treated as the same point.
const COINCIDENT_NODE_TOL: f64 = 1e-13;

/// Builds the interpolant matching `points` and, optionally, a derivative at
/// one of the nodes (Hermite confluence).
pub fn quadratic_interpolate(
    points: &[(Complex64, Complex64)],
    derivative: Option<(Complex64, Complex64)>,
) -> Result<QuadraticInterpolant, SpecialFnError> {
    let conditions = points.len() + usize::from(derivative.is_some());
    if conditions > 3 {
        return Err(SpecialFnError::OverdeterminedConstraints(conditions));
    }
    if conditions < 2 || points.is_empty() {
        return Err(SpecialFnError::UnderdeterminedConstraints(conditions));
    }
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            if (a.0 - b.0).norm() <= COINCIDENT_NODE_TOL {
                return Err(SpecialFnError::CoincidentNodesWithoutDerivative);
            }
        }
    }

    match derivative {
        None => {
            let nodes: Vec<Complex64> = points.iter().map(|p| p.0).collect();
            let mut table: Vec<Complex64> = points.iter().map(|p| p.1).collect();
            // in-place divided differences
            for level in 1..nodes.len() {
                for i in (level..nodes.len()).rev() {
                    table[i] = (table[i] - table[i - 1]) / (nodes[i] - nodes[i - level]);
                }
            }
            Ok(QuadraticInterpolant {
                nodes,
                coeffs: table,
            })
        }
        Some((dz, dv)) => {
            let anchor = points
                .iter()
                .position(|p| (p.0 - dz).norm() <= COINCIDENT_NODE_TOL)
                .ok_or(SpecialFnError::DerivativeNodeMismatch)?;
            let (a, fa) = points[anchor];
            let mut nodes = vec![a, a];
            let mut coeffs = vec![fa, dv];
            if let Some(&(b, fb)) = points.iter().enumerate().find(|(i, _)| *i != anchor).map(|(_, p)| p) {
                let first = (fb - fa) / (b - a);
                coeffs.push((first - dv) / (b - a));
                nodes.push(b);
            }
            Ok(QuadraticInterpolant { nodes, coeffs })
        }
    }
}
