//! Conceptor learning, the Boolean NOT, and the reconstruction losses used
//! to check that a learned conceptor is optimal.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{self, correlation, frobenius_sq, Matrix};

/// Tolerance on the `[0, 1]` spectral bound when validating a conceptor.
pub const SPECTRUM_TOL: f64 = 1e-8;

/// Channel evidence: a feature map whose `K` channel columns have been
/// scaled by their contribution weights. Rows index the `h·w` spatial
/// positions in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceMatrix {
    matrix: Matrix,
    spatial: (usize, usize),
}

impl EvidenceMatrix {
    pub fn new(matrix: Matrix, spatial: (usize, usize)) -> Result<Self> {
        if spatial.0 * spatial.1 != matrix.rows() {
            return Err(Error::dims(format!(
                "evidence has {} rows but spatial grid is {}x{}",
                matrix.rows(),
                spatial.0,
                spatial.1
            )));
        }
        if matrix.cols() == 0 {
            return Err(Error::dims("evidence needs at least one channel"));
        }
        Ok(EvidenceMatrix { matrix, spatial })
    }

    /// Evidence laid out as an `M×1` spatial column, handy for small examples.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        let rows = matrix.rows();
        EvidenceMatrix::new(matrix, (rows, 1))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn spatial(&self) -> (usize, usize) {
        self.spatial
    }

    /// Spatial length `M`.
    pub fn positions(&self) -> usize {
        self.matrix.rows()
    }

    /// Channel count `K`.
    pub fn channels(&self) -> usize {
        self.matrix.cols()
    }

    pub fn correlation(&self) -> Matrix {
        correlation(&self.matrix).expect("evidence is never empty")
    }
}

/// A symmetric `M×M` matrix with spectrum in `[0, 1]`, together with the
/// aperture it was learned at.
///
/// The complement `I − C` is kept alongside the matrix so that [`negate`]
/// is a swap and therefore an exact involution.
#[derive(Debug, Clone)]
pub struct Conceptor {
    matrix: Arc<Matrix>,
    complement: Arc<Matrix>,
    aperture: f64,
}

impl PartialEq for Conceptor {
    fn eq(&self, other: &Self) -> bool {
        self.aperture.to_bits() == other.aperture.to_bits() && self.matrix == other.matrix
    }
}

impl Conceptor {
    /// Wraps an existing matrix, checking symmetry and the spectral bound.
    pub fn from_matrix(matrix: Matrix, aperture: f64) -> Result<Self> {
        if !(aperture >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "aperture must be nonnegative, got {aperture}"
            )));
        }
        let eig = tensor::sym_eigenvalues(&matrix)?;
        if let (Some(&lo), Some(&hi)) = (eig.first(), eig.last()) {
            if lo < -SPECTRUM_TOL || hi > 1.0 + SPECTRUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "conceptor spectrum [{lo}, {hi}] leaves [0, 1]"
                )));
            }
        }
        Ok(Conceptor::assemble(matrix, aperture))
    }

    fn assemble(matrix: Matrix, aperture: f64) -> Self {
        let n = matrix.rows();
        let complement = &Matrix::identity(n) - &matrix;
        Conceptor {
            matrix: Arc::new(matrix),
            complement: Arc::new(complement),
            aperture,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Regularization weight `α⁻²`, with the convention `α⁻² = 0` at `α = 0`.
    pub fn regularization(&self) -> f64 {
        regularization(self.aperture)
    }
}

fn regularization(alpha: f64) -> f64 {
    if alpha == 0.0 {
        0.0
    } else {
        alpha.powi(-2)
    }
}

/// Learns `C = R(R + α⁻²I)⁻¹` from evidence `Z`, with `R = (1/K)·Z·Zᵀ`.
///
/// At `α = 0` the regularizer vanishes and the result is `R·R⁺`, the
/// orthogonal projector onto the range of `R`. For `α > 0` the Cholesky
/// route is used, falling back to the pseudo-inverse if `R + α⁻²I` turns
/// out numerically indefinite.
pub fn learn_conceptor(z: &EvidenceMatrix, alpha: f64) -> Result<Conceptor> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "aperture must be finite and nonnegative, got {alpha}"
        )));
    }
    let r = z.correlation();
    let c = if alpha == 0.0 {
        r.matmul(&tensor::pseudo_inverse(&r)?)?.symmetrized()
    } else {
        match tensor::ridge_inverse_apply(&r, alpha) {
            Ok(c) => c,
            Err(Error::Factorization(_)) => {
                let n = r.rows();
                let a = &r + &Matrix::identity(n).scale(regularization(alpha));
                r.matmul(&tensor::pseudo_inverse(&a)?)?.symmetrized()
            }
            Err(e) => return Err(e),
        }
    };
    Ok(Conceptor::assemble(c, alpha))
}

/// Conceptor loss `(1/K)·‖Z − CZ‖² + α⁻²·‖C‖²`.
pub fn conceptor_loss(c: &Conceptor, z: &EvidenceMatrix) -> Result<f64> {
    if !(c.aperture > 0.0) {
        return Err(Error::InvalidArgument(
            "conceptor loss needs a positive aperture".to_string(),
        ));
    }
    matrix_loss(c.matrix(), z, c.aperture)
}

/// The same loss evaluated for an arbitrary candidate matrix.
pub fn matrix_loss(c: &Matrix, z: &EvidenceMatrix, alpha: f64) -> Result<f64> {
    check_square(c, z)?;
    let zm = z.matrix();
    let residual = zm - &c.matmul(zm)?;
    let k = z.channels() as f64;
    Ok(frobenius_sq(&residual) / k + regularization(alpha) * frobenius_sq(c))
}

/// Boolean NOT: the conceptor `I − C` at the same aperture.
pub fn negate(c: &Conceptor) -> Conceptor {
    Conceptor {
        matrix: Arc::clone(&c.complement),
        complement: Arc::clone(&c.matrix),
        aperture: c.aperture,
    }
}

/// The NOT of a conceptor learned from correlation `R̄`, in its closed
/// form `R̄⁻¹(R̄⁻¹ + α²I)⁻¹`. Only defined for invertible `R̄`; kept as a
/// cross-check for [`negate`].
pub fn negation_closed_form(r_bar: &Matrix, alpha: f64) -> Result<Matrix> {
    let r_inv = tensor::inverse(r_bar)?;
    let n = r_bar.rows();
    let shifted = &r_inv + &Matrix::identity(n).scale(alpha * alpha);
    r_inv.matmul(&tensor::inverse(&shifted)?)
}

/// `λ = M/(M − 1)`.
pub fn reconstruction_lambda(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument(
            "intra-channel reconstruction needs at least two positions".to_string(),
        ));
    }
    Ok(m as f64 / (m - 1) as f64)
}

/// Intra-channel reconstruction cost in its expanded form
/// `(1/K)·‖λZ − ĈZ‖² + α⁻²‖Ĉ‖²`.
pub fn intra_reconstruction_loss(c_hat: &Matrix, z: &EvidenceMatrix, alpha: f64) -> Result<f64> {
    check_square(c_hat, z)?;
    check_alpha(alpha)?;
    let lambda = reconstruction_lambda(z.positions())?;
    let zm = z.matrix();
    let residual = &zm.scale(lambda) - &c_hat.matmul(zm)?;
    Ok(frobenius_sq(&residual) / z.channels() as f64 + alpha.powi(-2) * frobenius_sq(c_hat))
}

/// Intra-channel reconstruction cost from its defining sum: for every row
/// `i`, reconstruct `Z` from `Z` with row `i` zeroed, and average the `M`
/// residuals with weight `1/(M − 1)`.
pub fn intra_reconstruction_loss_by_masking(
    c_hat: &Matrix,
    z: &EvidenceMatrix,
    alpha: f64,
) -> Result<f64> {
    check_square(c_hat, z)?;
    check_alpha(alpha)?;
    let m = z.positions();
    reconstruction_lambda(m)?;
    let zm = z.matrix();
    let k = z.channels();
    let mut total = Matrix::zeros(m, k);
    for i in 0..m {
        let mut masked = zm.clone();
        for j in 0..k {
            masked.set(i, j, 0.0);
        }
        let term = zm - &c_hat.matmul(&masked)?;
        total = &total + &term;
    }
    let total = total.scale(1.0 / (m - 1) as f64);
    Ok(frobenius_sq(&total) / k as f64 + alpha.powi(-2) * frobenius_sq(c_hat))
}

/// Gradient of [`intra_reconstruction_loss`]: `−2λR + 2Ĉ(R + α⁻²I)`.
pub fn intra_reconstruction_gradient(
    c_hat: &Matrix,
    z: &EvidenceMatrix,
    alpha: f64,
) -> Result<Matrix> {
    check_square(c_hat, z)?;
    check_alpha(alpha)?;
    let lambda = reconstruction_lambda(z.positions())?;
    let r = z.correlation();
    let a = &r + &Matrix::identity(r.rows()).scale(alpha.powi(-2));
    Ok(&c_hat.matmul(&a)?.scale(2.0) - &r.scale(2.0 * lambda))
}

fn check_square(c: &Matrix, z: &EvidenceMatrix) -> Result<()> {
    let m = z.positions();
    if c.shape() != (m, m) {
        return Err(Error::dims(format!(
            "conceptor is {}x{} but evidence has {m} positions",
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "aperture must be positive and finite, got {alpha}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eye_evidence() -> EvidenceMatrix {
        EvidenceMatrix::from_matrix(Matrix::identity(2)).unwrap()
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.max_abs_diff(b).is_some_and(|d| d <= tol)
    }

    fn random_evidence(rng: &mut ChaCha8Rng, m: usize, k: usize) -> EvidenceMatrix {
        let data = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        EvidenceMatrix::from_matrix(Matrix::new(m, k, data).unwrap()).unwrap()
    }

    #[test]
    fn evidence_checks_spatial_grid() {
        assert!(EvidenceMatrix::new(Matrix::zeros(6, 2), (2, 3)).is_ok());
        assert!(EvidenceMatrix::new(Matrix::zeros(6, 2), (2, 2)).is_err());
        assert!(EvidenceMatrix::new(Matrix::zeros(6, 0), (2, 3)).is_err());
    }

    #[test]
    fn learn_examples() {
        let c = learn_conceptor(&eye_evidence(), 1.0).unwrap();
        assert!(close(c.matrix(), &Matrix::identity(2).scale(1.0 / 3.0), 1e-15));

        let zero = EvidenceMatrix::from_matrix(Matrix::zeros(3, 2)).unwrap();
        for alpha in [0.1, 1.0, 50.0] {
            let c = learn_conceptor(&zero, alpha).unwrap();
            assert!(close(c.matrix(), &Matrix::zeros(3, 3), 0.0));
        }

        let c = learn_conceptor(&eye_evidence(), 0.0).unwrap();
        assert!(close(c.matrix(), &Matrix::identity(2), 1e-12));
    }

    #[test]
    fn learn_rejects_negative_aperture() {
        assert!(learn_conceptor(&eye_evidence(), -1.0).is_err());
        assert!(learn_conceptor(&eye_evidence(), f64::INFINITY).is_err());
    }

    #[test]
    fn loss_examples() {
        let z = eye_evidence();
        let c = Conceptor::from_matrix(Matrix::identity(2).scale(1.0 / 3.0), 1.0).unwrap();
        assert_abs_diff_eq!(conceptor_loss(&c, &z).unwrap(), 2.0 / 3.0, epsilon = 1e-15);

        let c0 = Conceptor::from_matrix(Matrix::zeros(2, 2), 1.0).unwrap();
        // (1/2)·‖I‖² + 0
        assert_abs_diff_eq!(conceptor_loss(&c0, &z).unwrap(), 1.0, epsilon = 1e-15);

        let zero = EvidenceMatrix::from_matrix(Matrix::zeros(2, 2)).unwrap();
        for alpha in [0.3, 1.0, 7.0] {
            let c0 = Conceptor::from_matrix(Matrix::zeros(2, 2), alpha).unwrap();
            assert_eq!(conceptor_loss(&c0, &zero).unwrap(), 0.0);
        }
    }

    #[test]
    fn loss_rejects_mismatch_and_zero_aperture() {
        let c = Conceptor::from_matrix(Matrix::zeros(3, 3), 1.0).unwrap();
        assert!(conceptor_loss(&c, &eye_evidence()).is_err());
        let c = Conceptor::from_matrix(Matrix::zeros(2, 2), 0.0).unwrap();
        assert!(conceptor_loss(&c, &eye_evidence()).is_err());
    }

    #[test]
    fn from_matrix_checks_spectrum() {
        assert!(Conceptor::from_matrix(Matrix::identity(2).scale(1.5), 1.0).is_err());
        assert!(Conceptor::from_matrix(Matrix::identity(2).scale(-0.5), 1.0).is_err());
        assert!(Conceptor::from_matrix(Matrix::identity(2), 1.0).is_ok());
    }

    #[test]
    fn negate_examples() {
        let c = Conceptor::from_matrix(Matrix::identity(2).scale(1.0 / 3.0), 1.0).unwrap();
        let n = negate(&c);
        assert!(close(n.matrix(), &Matrix::identity(2).scale(2.0 / 3.0), 1e-15));
        assert_eq!(n.aperture(), 1.0);

        // Closed form with R̄ = I/2, α = 1: 2I·(3I)⁻¹.
        let closed = negation_closed_form(&Matrix::identity(2).scale(0.5), 1.0).unwrap();
        assert!(close(n.matrix(), &closed, 1e-15));

        let zero = Conceptor::from_matrix(Matrix::zeros(2, 2), 1.0).unwrap();
        assert!(close(negate(&zero).matrix(), &Matrix::identity(2), 0.0));
        let one = Conceptor::from_matrix(Matrix::identity(2), 1.0).unwrap();
        assert!(close(negate(&one).matrix(), &Matrix::zeros(2, 2), 0.0));
    }

    #[test]
    fn negate_is_exact_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_evidence(&mut rng, 5, 4);
        let c = learn_conceptor(&z, 0.7).unwrap();
        let back = negate(&negate(&c));
        assert_eq!(back.matrix().as_slice(), c.matrix().as_slice());
        assert_eq!(back, c);
    }

    #[test]
    fn intra_loss_examples() {
        let z = eye_evidence();
        let loss = intra_reconstruction_loss(&Matrix::zeros(2, 2), &z, 1.0).unwrap();
        assert_abs_diff_eq!(loss, 4.0, epsilon = 1e-15);

        let zero = EvidenceMatrix::from_matrix(Matrix::zeros(2, 2)).unwrap();
        assert_eq!(
            intra_reconstruction_loss(&Matrix::zeros(2, 2), &zero, 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn intra_loss_minimum_at_scaled_conceptor() {
        let z = eye_evidence();
        let c_hat = Matrix::identity(2).scale(2.0 / 3.0);
        let best = intra_reconstruction_loss(&c_hat, &z, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let delta = Matrix::from_fn(2, 2, |_, _| rng.random_range(-1e-3..1e-3));
            let perturbed = intra_reconstruction_loss(&(&c_hat + &delta), &z, 1.0).unwrap();
            assert!(perturbed >= best - 1e-14);
        }
    }

    #[test]
    fn intra_loss_rejects_single_position() {
        let z = EvidenceMatrix::from_matrix(Matrix::identity(1)).unwrap();
        assert!(intra_reconstruction_loss(&Matrix::zeros(1, 1), &z, 1.0).is_err());
        assert!(intra_reconstruction_gradient(&Matrix::zeros(1, 1), &z, 1.0).is_err());
    }

    #[test]
    fn expanded_and_masked_losses_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in 2..=7 {
            let z = random_evidence(&mut rng, m, 4);
            let c_hat = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let a = intra_reconstruction_loss(&c_hat, &z, 0.8).unwrap();
            let b = intra_reconstruction_loss_by_masking(&c_hat, &z, 0.8).unwrap();
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_examples() {
        let z = eye_evidence();
        let lambda = 2.0;
        let c = learn_conceptor(&z, 1.0).unwrap();
        let g = intra_reconstruction_gradient(&c.matrix().scale(lambda), &z, 1.0).unwrap();
        assert!(g.max_abs() <= 1e-8);

        let g = intra_reconstruction_gradient(&Matrix::zeros(2, 2), &z, 1.0).unwrap();
        assert!(close(&g, &Matrix::identity(2).scale(-2.0), 1e-15));

        let zero = EvidenceMatrix::from_matrix(Matrix::zeros(2, 2)).unwrap();
        let g = intra_reconstruction_gradient(&Matrix::identity(2), &zero, 1.0).unwrap();
        assert!(close(&g, &Matrix::identity(2).scale(2.0), 1e-15));
    }

    #[test]
    fn spectral_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let m = rng.random_range(1..=8);
            let k = rng.random_range(1..=8);
            let alpha = rng.random_range(0.1..4.0);
            let z = random_evidence(&mut rng, m, k);
            let c = learn_conceptor(&z, alpha).unwrap();
            let sigma_max = *tensor::sym_eigenvalues(&z.correlation()).unwrap().last().unwrap();
            let reg = alpha.powi(-2);
            let delta = reg / (sigma_max.max(0.0) + reg);
            let eig = tensor::sym_eigenvalues(c.matrix()).unwrap();
            assert!(eig[0] >= -1e-12);
            assert!(*eig.last().unwrap() <= 1.0 - delta + 1e-12);
        }
    }

    #[test]
    fn projector_limit_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (m, k) in [(4, 2), (6, 6), (3, 8)] {
            let z = random_evidence(&mut rng, m, k);
            let c = learn_conceptor(&z, 0.0).unwrap();
            let cc = c.matrix().matmul(c.matrix()).unwrap();
            assert!(close(&cc, c.matrix(), 1e-8));
        }
    }
}
