//! Dense complex matrix helpers built on `nalgebra`.
//!
//! Every slice propagator in this crate is `exp(-i H dt)` for a Hermitian `H`,
//! evaluated through the eigendecomposition `H = V diag(λ) V†`. The same
//! eigenbasis gives exact directional derivatives of the propagator via the
//! divided-difference (Daleckii-Krein) formula.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;

/// Elementwise tolerance used when checking that an input matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalue gap below which the divided difference switches to the
/// derivative limit.
pub const DEGENERACY_TOL: f64 = 1e-12;

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest elementwise deviation `|H_ij - conj(H_ji)|`.
pub fn hermitian_defect(h: &CMatrix) -> f64 {
    let n = h.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn check_hermitian(h: &CMatrix, what: &str) -> Result<()> {
    if !h.is_square() {
        return Err(Error::Dimension(format!("{what} is {}x{}, expected a square matrix", h.nrows(), h.ncols())));
    }
    let defect = hermitian_defect(h);
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian { what: what.to_string(), defect });
    }
    Ok(())
}

/// `‖A‖_F²`.
pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `‖U†U - I‖_F`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    frobenius_sq(&(u.adjoint() * u - identity(n))).sqrt()
}

/// Kronecker product with `a` as the leading (most significant) factor.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Propagator of one piecewise-constant segment together with the spectral
/// data needed to differentiate it.
#[derive(Clone, Debug)]
pub struct SpectralPropagator {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub dt: f64,
    pub propagator: CMatrix,
}

impl SpectralPropagator {
    /// Diagonalizes `h` (assumed Hermitian; only the Hermitian part is used)
    /// and forms `exp(-i h dt)`.
    pub fn new(h: &CMatrix, dt: f64) -> Self {
        let herm = (h + h.adjoint()).scale(0.5);
        let eig = herm.symmetric_eigen();
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let v = eig.eigenvectors;
        let phases: Vec<C64> = eigenvalues.iter().map(|&l| C64::new(0.0, -l * dt).exp()).collect();
        let n = v.nrows();
        let mut vd = v.clone();
        for (c, phase) in phases.iter().enumerate() {
            for r in 0..n {
                vd[(r, c)] *= phase;
            }
        }
        let propagator = &vd * v.adjoint();
        Self { eigenvalues, eigenvectors: v, dt, propagator }
    }

    /// Divided differences of `f(λ) = exp(-i λ dt)` over the eigenvalues.
    pub fn divided_differences(&self) -> CMatrix {
        let n = self.eigenvalues.len();
        let f: Vec<C64> = self.eigenvalues.iter().map(|&l| C64::new(0.0, -l * self.dt).exp()).collect();
        CMatrix::from_fn(n, n, |p, q| {
            let (lp, lq) = (self.eigenvalues[p], self.eigenvalues[q]);
            if (lp - lq).abs() < DEGENERACY_TOL {
                C64::new(0.0, -self.dt) * (f[p] + f[q]) * 0.5
            } else {
                (f[p] - f[q]) / (lp - lq)
            }
        })
    }

    /// Transforms `m` into the eigenbasis: `V† m V`.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * m * &self.eigenvectors
    }

    /// Directional derivative of the propagator along the Hamiltonian
    /// perturbation `direction`.
    pub fn derivative(&self, direction: &CMatrix) -> CMatrix {
        let dd = self.divided_differences();
        let e = self.to_eigenbasis(direction);
        let inner = e.component_mul(&dd);
        &self.eigenvectors * inner * self.eigenvectors.adjoint()
    }

    /// Matrix `Y` with `tr(B · dP) = Σ_ab H[a,b]·Y[a,b]`, where `dP` is the
    /// derivative of the propagator along the Hamiltonian direction `H`.
    /// One `Y` serves every direction.
    pub fn gradient_weights(&self, b: &CMatrix) -> CMatrix {
        let v = &self.eigenvectors;
        let b_eig = v.adjoint() * b * v;
        let x = b_eig.transpose().component_mul(&self.divided_differences());
        v.conjugate() * x * v.transpose()
    }

    /// `tr(B · dP)` along `direction`, via [`Self::gradient_weights`].
    pub fn weighted_trace(weights: &CMatrix, direction: &CMatrix) -> C64 {
        weights.iter().zip(direction.iter()).map(|(y, h)| y * h).sum()
    }
}

/// `exp(-i H dt)` for Hermitian `H`, rejecting non-Hermitian input.
pub fn hermitian_propagator(h: &CMatrix, dt: f64) -> Result<CMatrix> {
    check_hermitian(h, "Hamiltonian")?;
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidArgument(format!("propagation time must be finite and nonnegative, got {dt}")));
    }
    Ok(SpectralPropagator::new(h, dt).propagator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sx() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[C64::ZERO, C64::ONE, C64::ONE, C64::ZERO])
    }

    fn sz() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[C64::ONE, C64::ZERO, C64::ZERO, -C64::ONE])
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_duration_is_identity() {
        let h = sx() + sz().scale(0.3);
        let u = hermitian_propagator(&h, 0.0).unwrap();
        assert!(max_diff(&u, &identity(2)) < 1e-15);
    }

    #[test]
    fn sigma_z_half_turn_is_minus_identity() {
        let u = hermitian_propagator(&sz(), PI).unwrap();
        assert!(max_diff(&u, &(-identity(2))) < 1e-12);
    }

    #[test]
    fn sigma_x_quarter_turn() {
        let u = hermitian_propagator(&sx(), PI / 2.0).unwrap();
        let expected = sx() * C64::new(0.0, -1.0);
        assert!(max_diff(&u, &expected) < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = sx();
        h[(0, 1)] = C64::new(1.0, 0.5);
        match hermitian_propagator(&h, 1.0) {
            Err(Error::NotHermitian { defect, .. }) => assert!((defect - 0.5).abs() < 1e-15),
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn derivative_matches_finite_difference_with_degeneracy() {
        // H has a doubly degenerate spectrum, exercising the limit branch.
        let h = kron(&sz(), &sz());
        let dir = kron(&sx(), &identity(2)) + kron(&identity(2), &sz()).scale(0.4);
        let dt = 0.7;
        let sp = SpectralPropagator::new(&h, dt);
        let analytic = sp.derivative(&dir);
        let eps = 1e-6;
        let plus = SpectralPropagator::new(&(&h + dir.scale(eps)), dt).propagator;
        let minus = SpectralPropagator::new(&(&h - dir.scale(eps)), dt).propagator;
        let fd = (plus - minus).unscale(2.0 * eps);
        assert!(max_diff(&analytic, &fd) < 1e-8, "{}", max_diff(&analytic, &fd));
    }

    #[test]
    fn gradient_weights_reproduce_trace() {
        let h = kron(&sx(), &sz()) + kron(&identity(2), &sx()).scale(0.3);
        let dir = kron(&sz(), &sx());
        let b = CMatrix::from_fn(4, 4, |i, j| C64::new((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
        let sp = SpectralPropagator::new(&h, 0.9);
        let want = trace_product(&b, &sp.derivative(&dir));
        let got = SpectralPropagator::weighted_trace(&sp.gradient_weights(&b), &dir);
        assert!((want - got).norm() < 1e-13, "{want} vs {got}");
    }
}
