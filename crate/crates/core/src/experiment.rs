//! End-to-end pipeline: canonical solves, coefficients, stabilized
//! evaluation, and the relative error measures used to judge them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::bem::{BemError, BemSystem, CanonicalFarField};
use crate::coefficients::{build_system, solve_canonical, CoefficientError, CoefficientSolver, CoefficientVector, Strategy};
use crate::embedding::{angle_distance, naive_eval, Branch, EmbeddingBasis, EmbeddingError, Evaluation, StabilizedEvaluator, Thresholds, EXACT_TOL};
use crate::geometry::GeometryError;
use crate::linalg::max_abs;

/// Reference meshes use this multiple of the working elements per wavelength.
pub const REFERENCE_REFINEMENT: f64 = 4.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bem(#[from] BemError),
    #[error(transparent)]
    Coefficients(#[from] CoefficientError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// `n` equispaced angles on `[0, 2π)` starting at zero.
pub fn sample_angles(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// `max |a − r| / max |r|`.
pub fn relative_sup_error(approx: &[Complex64], reference: &[Complex64]) -> f64 {
    let diff: f64 = approx.iter().zip(reference).map(|(a, r)| (a - r).norm()).fold(0.0, f64::max);
    diff / max_abs(reference)
}

/// Far field of a direct solve at `alpha`, sampled at `thetas`.
pub fn direct_column(system: &BemSystem, alpha: f64, thetas: &[f64]) -> Vec<Complex64> {
    let field = system.solve_density(alpha);
    thetas.iter().map(|&t| field.far_field(Complex64::new(t, 0.0))).collect()
}

/// Relative input error of the canonical far fields against a reference solver.
pub fn input_error(basis: &EmbeddingBasis<CanonicalFarField>, reference: &BemSystem, thetas: &[f64]) -> f64 {
    let per: Vec<(f64, f64)> = basis
        .patterns()
        .par_iter()
        .map(|field| {
            let r = direct_column(reference, field.alpha(), thetas);
            let a: Vec<Complex64> = thetas.iter().map(|&t| field.far_field(Complex64::new(t, 0.0))).collect();
            let diff = a.iter().zip(&r).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            (diff, max_abs(&r))
        })
        .collect();
    let num = per.iter().map(|e| e.0).fold(0.0, f64::max);
    let den = per.iter().map(|e| e.1).fold(0.0, f64::max);
    num / den
}

/// Canonical far fields plus the coefficient machinery for one shape.
pub struct EmbeddingSolver {
    basis: EmbeddingBasis<CanonicalFarField>,
    solver: CoefficientSolver,
    thresholds: Thresholds,
}

/// One incident angle's worth of embedded far-field values.
#[derive(Debug, Clone)]
pub struct EmbeddedColumn {
    pub coefficients: CoefficientVector,
    pub values: Vec<Evaluation>,
}

impl EmbeddedColumn {
    pub fn far_field(&self) -> Vec<Complex64> {
        self.values.iter().map(|e| e.value).collect()
    }
}

impl EmbeddingSolver {
    pub fn new(system: &BemSystem, angles: &[f64], strategy: Strategy, thresholds: Thresholds) -> Result<Self, ExperimentError> {
        let basis = solve_canonical(system, angles)?;
        Self::from_basis(basis, system.shape().m() as usize, strategy, thresholds)
    }

    pub fn from_basis(
        basis: EmbeddingBasis<CanonicalFarField>,
        m: usize,
        strategy: Strategy,
        thresholds: Thresholds,
    ) -> Result<Self, ExperimentError> {
        let matrix = build_system(&basis)?;
        let solver = CoefficientSolver::new(matrix, m, strategy)?;
        Ok(Self { basis, solver, thresholds })
    }

    pub fn basis(&self) -> &EmbeddingBasis<CanonicalFarField> {
        &self.basis
    }

    pub fn solver(&self) -> &CoefficientSolver {
        &self.solver
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    /// Index of the canonical angle coinciding with `alpha`, if any.
    pub fn canonical_index(&self, alpha: f64) -> Option<usize> {
        self.basis.angles().iter().position(|&a| angle_distance(a, alpha) <= EXACT_TOL)
    }

    pub fn coefficients(&self, alpha: f64) -> CoefficientVector {
        self.solver.coefficients_for(&self.basis, alpha)
    }

    pub fn evaluator(&self) -> StabilizedEvaluator<'_, CanonicalFarField> {
        StabilizedEvaluator::new(&self.basis, self.thresholds)
    }

    pub fn column(&self, alpha: f64, thetas: &[f64]) -> Result<EmbeddedColumn, ExperimentError> {
        let coefficients = self.coefficients(alpha);
        let evaluator = self.evaluator();
        let values = thetas
            .par_iter()
            .map(|&t| evaluator.evaluate(t, alpha, &coefficients.values))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmbeddedColumn { coefficients, values })
    }

    /// The unstabilized quotient; non-finite exactly on poles.
    pub fn naive_column(&self, alpha: f64, b: &[Complex64], thetas: &[f64]) -> Vec<Complex64> {
        thetas
            .par_iter()
            .map(|&t| naive_eval(&self.basis, b, t, alpha).unwrap_or(Complex64::new(f64::NAN, f64::NAN)))
            .collect()
    }
}

/// Output error over a `θ × α` grid with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GridError {
    pub relative: f64,
    pub max_reference: f64,
    pub max_coefficient_norm: f64,
    pub branch_counts: [usize; 5],
}

pub fn branch_index(branch: Branch) -> usize {
    Branch::ALL.iter().position(|&b| b == branch).unwrap_or(0)
}

pub fn output_error(
    embedding: &EmbeddingSolver,
    reference: &BemSystem,
    thetas: &[f64],
    alphas: &[f64],
) -> Result<GridError, ExperimentError> {
    let cols = alphas
        .par_iter()
        .map(|&a| {
            let col = embedding.column(a, thetas)?;
            let r = direct_column(reference, a, thetas);
            Ok((col, r))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let mut diff: f64 = 0.0;
    let mut max_reference: f64 = 0.0;
    let mut max_coefficient_norm: f64 = 0.0;
    let mut branch_counts = [0; 5];
    for (col, r) in &cols {
        max_reference = max_reference.max(max_abs(r));
        max_coefficient_norm = max_coefficient_norm.max(col.coefficients.norm);
        for (e, rv) in col.values.iter().zip(r) {
            diff = diff.max((e.value - rv).norm());
            branch_counts[branch_index(e.branch)] += 1;
        }
    }
    Ok(GridError {
        relative: diff / max_reference,
        max_reference,
        max_coefficient_norm,
        branch_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::BemParams;
    use crate::coefficients::{default_mtilde, equispaced_angles};
    use crate::geometry::RationalShape;

    #[test]
    fn error_helpers() {
        let a = sample_angles(4);
        assert_eq!(a, vec![0.0, PI / 2.0, PI, 1.5 * PI]);
        let r = [Complex64::new(2.0, 0.0), Complex64::new(0.0, -4.0)];
        let x = [Complex64::new(2.0, 0.1), Complex64::new(0.0, -4.0)];
        assert!((relative_sup_error(&x, &r) - 0.025).abs() < 1e-15);
        assert_eq!(branch_index(Branch::Lhopital2), 4);
    }

    #[test]
    fn screen_pipeline_reproduces_canonical_field() {
        let shape = RationalShape::preset("screen").unwrap();
        let system = BemSystem::new(&shape, 5.0, &BemParams::default()).unwrap();
        let angles = equispaced_angles(default_mtilde(2));
        let emb = EmbeddingSolver::new(&system, &angles, Strategy::Two, Thresholds::default()).unwrap();
        let thetas = sample_angles(64);
        let j = emb.solver().index_set().unwrap()[0];
        let col = emb.column(angles[j], &thetas).unwrap();
        let direct = direct_column(&system, angles[j], &thetas);
        let reference = BemSystem::new(&shape, 5.0, &BemParams::default().refined(2.0)).unwrap();
        let ein = input_error(emb.basis(), &reference, &thetas);
        assert!(ein > 0.0 && ein < 1e-2, "{ein}");
        for (i, v) in col.coefficients.values.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).norm() < 10.0 * ein);
        }
        // α_j = 0 puts a double pole at π, where Λ ~ d²/2 amplifies the reciprocity defect
        let err = relative_sup_error(&col.far_field(), &direct);
        assert!(err < 1e3 * ein, "{err} vs {ein}");
        let grid = output_error(&emb, &reference, &sample_angles(16), &sample_angles(7)).unwrap();
        assert!(grid.relative < 1e3 * ein, "{} vs {ein}", grid.relative);
        assert_eq!(grid.branch_counts.iter().sum::<usize>(), 16 * 7);
    }
}
