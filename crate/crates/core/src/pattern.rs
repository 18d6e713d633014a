//! Far-field patterns as analytic functions of the observation angle.

use num_complex::Complex64;

/// A far-field pattern `θ ↦ D(θ)` for one fixed incident angle, analytic
/// in a strip around the real axis.
pub trait FarFieldPattern: Send + Sync {
    /// Incident angle this pattern was computed for.
    fn incident_angle(&self) -> f64;

    fn value(&self, theta: Complex64) -> Complex64;

    /// `order`-th θ-derivative; orders 0, 1 and 2 are supported.
    fn derivative(&self, theta: Complex64, order: u32) -> Complex64;
}

/// Finite sum `Σ c_j e^{i n_j θ}`: an entire pattern with closed-form
/// derivatives, useful as an exact stand-in for solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPattern {
    pub alpha: f64,
    pub terms: Vec<(i32, Complex64)>,
}

impl FarFieldPattern for FourierPattern {
    fn incident_angle(&self) -> f64 {
        self.alpha
    }

    fn value(&self, theta: Complex64) -> Complex64 {
        self.derivative(theta, 0)
    }

    fn derivative(&self, theta: Complex64, order: u32) -> Complex64 {
        let i = Complex64::i();
        self.terms
            .iter()
            .map(|&(n, c)| {
                let factor = (i * n as f64).powu(order);
                c * factor * (i * n as f64 * theta).exp()
            })
            .sum()
    }
}
