//! Embedding coefficients from an oversampled set of canonical far fields.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::bem::{BemSystem, CanonicalFarField};
use crate::embedding::{angle_distance, EmbeddingBasis};
use crate::linalg::{norm2, CMatrix, LuFactors};
use crate::pattern::FarFieldPattern;

pub const MAX_SVD_SWEEPS: usize = 60;
pub const MAX_SVD_DIM: usize = 200;
/// Strategy One truncation used when none is given.
pub const DEFAULT_DELTA: f64 = 1e-8;
const ZERO_COLUMN_TOL: f64 = 1e-14;
const PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("Jacobi SVD did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix dimension {0} exceeds the supported maximum")]
    TooLarge(usize),
    #[error("only {selected} independent columns found, {requested} requested")]
    ZeroColumnEncountered { selected: usize, requested: usize },
    #[error("subsystem is singular (pivot {pivot:.3e} below {threshold:.3e})")]
    SingularSubmatrix { pivot: f64, threshold: f64 },
    #[error("need M ≤ M̃, got M = {m}, M̃ = {mtilde}")]
    BadSubsetSize { m: usize, mtilde: usize },
    #[error("canonical angles {0} and {1} coincide")]
    RepeatedAngle(usize, usize),
    #[error("δ must be non-negative, got {0}")]
    NegativeDelta(f64),
    #[error("no canonical angles given")]
    Empty,
}

/// `α_m = 2π(m − 1)/count`.
pub fn equispaced_angles(count: usize) -> Vec<f64> {
    (0..count).map(|m| 2.0 * PI * m as f64 / count as f64).collect()
}

/// `⌈3M/2⌉`.
pub fn default_mtilde(m: usize) -> usize {
    (3 * m).div_ceil(2)
}

pub fn check_distinct(angles: &[f64]) -> Result<(), CoefficientError> {
    if angles.is_empty() {
        return Err(CoefficientError::Empty);
    }
    for i in 0..angles.len() {
        for j in (i + 1)..angles.len() {
            if angle_distance(angles[i], angles[j]) <= 1e-13 {
                return Err(CoefficientError::RepeatedAngle(i, j));
            }
        }
    }
    Ok(())
}

/// Solves the canonical problems for every angle with one factorisation.
pub fn solve_canonical(system: &BemSystem, angles: &[f64]) -> Result<EmbeddingBasis<CanonicalFarField>, CoefficientError> {
    check_distinct(angles)?;
    let fields = angles.par_iter().map(|&a| system.solve_density(a)).collect();
    Ok(EmbeddingBasis::new(system.shape().p(), fields))
}

/// `Ã[r][c] = Λ(α_r, α_c) D(α_r; α_c)`, rows indexed by evaluation angle.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    matrix: CMatrix,
    p: u32,
    far_field_scale: f64,
    singular_values: Vec<f64>,
}

pub fn build_system<P: FarFieldPattern>(basis: &EmbeddingBasis<P>) -> Result<SystemMatrix, CoefficientError> {
    let n = basis.len();
    if n == 0 {
        return Err(CoefficientError::Empty);
    }
    check_distinct(&basis.angles())?;
    let angles = basis.angles();
    let rows: Vec<Vec<(Complex64, f64)>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let theta = Complex64::new(angles[r], 0.0);
            (0..n)
                .map(|c| (basis.hatted(c, theta, 0), basis.patterns()[c].value(theta).norm()))
                .collect()
        })
        .collect();
    let far_field_scale = rows.iter().flatten().map(|e| e.1).fold(0.0, f64::max);
    let matrix = CMatrix::from_row_major(n, n, rows.into_iter().flatten().map(|e| e.0).collect());
    let singular_values = svd(&matrix)?.s;
    Ok(SystemMatrix {
        matrix,
        p: basis.p(),
        far_field_scale,
        singular_values,
    })
}

impl SystemMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// Largest `|D(α_r; α_c)|` over the canonical grid.
    pub fn far_field_scale(&self) -> f64 {
        self.far_field_scale
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `σ_max / σ_min`, infinite for a singular matrix.
    pub fn condition_number(&self) -> f64 {
        condition_from(&self.singular_values)
    }

    /// `(−1)^{p+1}`, the sign linking `Ã` to its transpose.
    pub fn parity(&self) -> f64 {
        if self.p % 2 == 0 {
            -1.0
        } else {
            1.0
        }
    }

    /// `‖Ã − (−1)^{p+1} Ãᵀ‖_F / ‖Ã‖_F`.
    pub fn reciprocity_defect(&self) -> f64 {
        let t = self.matrix.transpose().scale(Complex64::new(self.parity(), 0.0));
        let norm = self.matrix.frobenius_norm();
        if norm == 0.0 {
            0.0
        } else {
            self.matrix.sub(&t).frobenius_norm() / norm
        }
    }

    /// `d̃_r = (−1)^{p+1} Λ(α, α_r) D(α; α_r)`.
    pub fn rhs<P: FarFieldPattern>(&self, basis: &EmbeddingBasis<P>, alpha: f64) -> Vec<Complex64> {
        let sign = self.parity();
        let theta = Complex64::new(alpha, 0.0);
        (0..basis.len()).map(|r| sign * basis.hatted(r, theta, 0)).collect()
    }
}

fn condition_from(s: &[f64]) -> f64 {
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => f64::NAN,
    }
}

/// `X = U diag(s) V*` with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.s.len();
        let us = CMatrix::from_fn(self.u.rows(), n, |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.adjoint())
    }
}

/// One-sided Jacobi SVD of a square complex matrix.
pub fn svd(x: &CMatrix) -> Result<Svd, CoefficientError> {
    let n = x.cols();
    let rows = x.rows();
    assert_eq!(rows, n, "svd expects a square matrix");
    if n > MAX_SVD_DIM {
        return Err(CoefficientError::TooLarge(n));
    }
    // columns stored contiguously
    let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| x.column(j)).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| (0..n).map(|i| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    let tol = 1e-15;
    let mut converged = n < 2;
    for _ in 0..MAX_SVD_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let a: f64 = cols[i].iter().map(|z| z.norm_sqr()).sum();
                let b: f64 = cols[j].iter().map(|z| z.norm_sqr()).sum();
                if a == 0.0 || b == 0.0 {
                    continue;
                }
                let g: Complex64 = cols[i].iter().zip(&cols[j]).map(|(p, q)| p.conj() * q).sum();
                let gabs = g.norm();
                if gabs <= tol * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = g / gabs;
                let zeta = (b - a) / (2.0 * gabs);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, i, j, c, s, phase);
                rotate(&mut v, i, j, c, s, phase);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(CoefficientError::NoConvergence(MAX_SVD_SWEEPS));
    }
    let sigma: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let scale = sigma.iter().cloned().fold(0.0, f64::max);
    let mut u_cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    for &k in &order {
        let sk = sigma[k];
        s.push(sk);
        v_cols.push(v[k].clone());
        if sk > 1e-300 && sk > 1e-15 * scale {
            u_cols.push(cols[k].iter().map(|z| z / sk).collect());
        } else {
            u_cols.push(Vec::new());
        }
    }
    complete_orthonormal(&mut u_cols, n);
    let u = CMatrix::from_fn(n, n, |i, j| u_cols[j][i]);
    let v = CMatrix::from_fn(n, n, |i, j| v_cols[j][i]);
    Ok(Svd { u, s, v })
}

fn rotate(cols: &mut [Vec<Complex64>], i: usize, j: usize, c: f64, s: f64, phase: Complex64) {
    let (left, right) = cols.split_at_mut(j);
    let ci = &mut left[i];
    let cj = &mut right[0];
    for (p, q) in ci.iter_mut().zip(cj.iter_mut()) {
        let (x, y) = (*p, *q);
        *p = c * x - s * phase.conj() * y;
        *q = s * phase * x + c * y;
    }
}

/// Fills empty columns with unit vectors orthogonal to the rest.
fn complete_orthonormal(cols: &mut [Vec<Complex64>], n: usize) {
    let mut candidate = 0;
    for j in 0..cols.len() {
        if !cols[j].is_empty() {
            continue;
        }
        loop {
            let mut e: Vec<Complex64> = (0..n).map(|i| Complex64::new(if i == candidate { 1.0 } else { 0.0 }, 0.0)).collect();
            candidate += 1;
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let proj: Complex64 = other.iter().zip(&e).map(|(o, x)| o.conj() * x).sum();
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = norm2(&e);
            if norm > 1e-8 {
                cols[j] = e.iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

/// `V Σ† U*` keeping singular values above `delta`; also returns the rank.
pub fn tsvd_pseudoinverse(x: &CMatrix, delta: f64) -> Result<(CMatrix, usize), CoefficientError> {
    if !(delta >= 0.0) {
        return Err(CoefficientError::NegativeDelta(delta));
    }
    let dec = svd(x)?;
    Ok(pseudoinverse_from(&dec, delta))
}

fn pseudoinverse_from(dec: &Svd, delta: f64) -> (CMatrix, usize) {
    let n = dec.s.len();
    let inv: Vec<f64> = dec.s.iter().map(|&s| if s > delta && s > 0.0 { 1.0 / s } else { 0.0 }).collect();
    let rank = inv.iter().filter(|&&v| v > 0.0).count();
    let vs = CMatrix::from_fn(n, n, |i, j| dec.v[(i, j)] * inv[j]);
    (vs.matmul(&dec.u.adjoint()), rank)
}

/// Greedy column subset selection with Gram–Schmidt deflation. Indices are
/// returned in selection order.
pub fn column_subset(x: &CMatrix, m: usize) -> Result<Vec<usize>, CoefficientError> {
    let n = x.cols();
    if m > n {
        return Err(CoefficientError::BadSubsetSize { m, mtilde: n });
    }
    let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| x.column(j)).collect();
    let scale = cols.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    let mut chosen = Vec::with_capacity(m);
    while chosen.len() < m {
        let mut best = 0;
        let mut best_norm = -1.0;
        for (j, c) in cols.iter().enumerate() {
            let nj = norm2(c);
            if nj > best_norm {
                best = j;
                best_norm = nj;
            }
        }
        if best_norm == 0.0 || best_norm < ZERO_COLUMN_TOL * scale.max(1e-300) || chosen.contains(&best) {
            return Err(CoefficientError::ZeroColumnEncountered {
                selected: chosen.len(),
                requested: m,
            });
        }
        chosen.push(best);
        let pivot = cols[best].clone();
        let pp: f64 = pivot.iter().map(|z| z.norm_sqr()).sum();
        for c in cols.iter_mut() {
            // ⟨a, a*⟩ conjugate-linear in the second slot
            let ip: Complex64 = c.iter().zip(&pivot).map(|(a, b)| a * b.conj()).sum();
            let f = ip / pp;
            for (a, b) in c.iter_mut().zip(&pivot) {
                *a -= b * f;
            }
        }
    }
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Truncated-SVD least squares on the full oversampled system.
    One { delta: f64 },
    /// Square subsystem on greedily selected rows and columns.
    Two,
}

impl Strategy {
    pub fn number(&self) -> u8 {
        match self {
            Strategy::One { .. } => 1,
            Strategy::Two => 2,
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            Strategy::One { delta } => Some(*delta),
            Strategy::Two => None,
        }
    }
}

/// Coefficients for one incident angle with how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub values: Vec<Complex64>,
    pub strategy: Strategy,
    pub index_set: Option<Vec<usize>>,
    /// `‖Ã b − d̃‖₂` on the full oversampled system.
    pub residual: f64,
    pub norm: f64,
    /// Set when the truncation removed every singular value.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
enum Prepared {
    Pseudo { pinv: CMatrix, rank: usize },
    Subset { indices: Vec<usize>, lu: LuFactors, condition: f64 },
}

/// Per-shape coefficient machinery, prepared once and reused for every α.
#[derive(Debug, Clone)]
pub struct CoefficientSolver {
    system: SystemMatrix,
    strategy: Strategy,
    m: usize,
    prepared: Prepared,
    subset_selections: usize,
}

impl CoefficientSolver {
    pub fn new(system: SystemMatrix, m: usize, strategy: Strategy) -> Result<Self, CoefficientError> {
        let mtilde = system.dim();
        let mut subset_selections = 0;
        let prepared = match strategy {
            Strategy::One { delta } => {
                let (pinv, rank) = tsvd_pseudoinverse(&system.matrix, delta)?;
                Prepared::Pseudo { pinv, rank }
            }
            Strategy::Two => {
                if m == 0 || m > mtilde {
                    return Err(CoefficientError::BadSubsetSize { m, mtilde });
                }
                let indices = if m == mtilde {
                    (0..m).collect()
                } else {
                    subset_selections += 1;
                    column_subset(&system.matrix, m)?
                };
                let sub = system.matrix.select(&indices, &indices);
                let threshold = PIVOT_TOL * system.far_field_scale;
                let lu = LuFactors::factor(sub.clone(), threshold).map_err(|e| CoefficientError::SingularSubmatrix {
                    pivot: e.pivot,
                    threshold: e.threshold,
                })?;
                let condition = condition_from(&svd(&sub)?.s);
                Prepared::Subset { indices, lu, condition }
            }
        };
        Ok(Self {
            system,
            strategy,
            m,
            prepared,
            subset_selections,
        })
    }

    pub fn system(&self) -> &SystemMatrix {
        &self.system
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of greedy subset selections performed so far.
    pub fn subset_selections(&self) -> usize {
        self.subset_selections
    }

    pub fn index_set(&self) -> Option<&[usize]> {
        match &self.prepared {
            Prepared::Subset { indices, .. } => Some(indices),
            Prepared::Pseudo { .. } => None,
        }
    }

    pub fn rank(&self) -> usize {
        match &self.prepared {
            Prepared::Pseudo { rank, .. } => *rank,
            Prepared::Subset { indices, .. } => indices.len(),
        }
    }

    /// Condition number of the matrix actually inverted.
    pub fn condition_number(&self) -> f64 {
        match &self.prepared {
            Prepared::Pseudo { .. } => self.system.condition_number(),
            Prepared::Subset { condition, .. } => *condition,
        }
    }

    pub fn coefficients_for<P: FarFieldPattern>(&self, basis: &EmbeddingBasis<P>, alpha: f64) -> CoefficientVector {
        let d = self.system.rhs(basis, alpha);
        let (values, index_set, degenerate) = match &self.prepared {
            Prepared::Pseudo { pinv, rank } => (pinv.matvec(&d), None, *rank == 0),
            Prepared::Subset { indices, lu, .. } => {
                let sub_rhs: Vec<Complex64> = indices.iter().map(|&i| d[i]).collect();
                let sol = lu.solve(&sub_rhs);
                let mut values = vec![Complex64::new(0.0, 0.0); d.len()];
                for (&i, v) in indices.iter().zip(sol) {
                    values[i] = v;
                }
                (values, Some(indices.clone()), false)
            }
        };
        let applied = self.system.matrix.matvec(&values);
        let resid: Vec<Complex64> = applied.iter().zip(&d).map(|(a, b)| a - b).collect();
        CoefficientVector {
            residual: norm2(&resid),
            norm: norm2(&values),
            values,
            strategy: self.strategy,
            index_set,
            degenerate,
        }
    }
}
