//! Randomized analytic checks of the conceptor algebra, run by
//! `ccam verify`.
//!
//! Each check draws its instances from a ChaCha8 stream seeded by the
//! caller, so a failing seed can be replayed.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conceptor::{
    intra_reconstruction_gradient, intra_reconstruction_loss, learn_conceptor, matrix_loss, negate,
    negation_closed_form, reconstruction_lambda, EvidenceMatrix,
};
use crate::error::Result;
use crate::tensor::{frobenius_sq, Matrix};

pub const DEFAULT_SEED: u64 = 0x00C0_FFEE;

/// Perturbation radius and slack for the optimality check.
pub const OPTIMALITY_RADIUS: f64 = 1e-3;
pub const OPTIMALITY_SLACK: f64 = 1e-12;

/// Gradient-descent settings for locating the reconstruction minimizer.
pub const GD_STEP: f64 = 1e-2;
pub const GD_MAX_ITERS: usize = 10_000;
pub const GD_GRAD_TOL: f64 = 1e-8;
pub const MINIMIZER_TOL: f64 = 1e-5;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-5;

pub const NOT_TOL: f64 = 1e-8;
pub const PROJECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} {} ({:.2?})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed
        )
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_evidence(rng: &mut ChaCha8Rng, m: usize, k: usize) -> EvidenceMatrix {
    EvidenceMatrix::from_matrix(random_matrix(rng, m, k)).expect("k >= 1")
}

/// Random direction with Frobenius norm `radius`.
fn random_direction(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Matrix {
    loop {
        let d = random_matrix(rng, n, n);
        let norm = frobenius_sq(&d).sqrt();
        if norm > 1e-6 {
            return d.scale(radius / norm);
        }
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// The learned conceptor has no larger loss than any small perturbation
/// of it: 100 instances with `M, K ≤ 12`, `α ∈ (0, 2]`, 50 perturbations
/// each.
pub fn check_optimality(seed: u64) -> CheckResult {
    timed("conceptor optimality", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for _ in 0..100 {
            let m = rng.random_range(1..=12);
            let k = rng.random_range(1..=12);
            let alpha = 2.0 - rng.random_range(0.0..1.9);
            let z = random_evidence(&mut rng, m, k);
            let c = learn_conceptor(&z, alpha)?;
            let best = matrix_loss(c.matrix(), &z, alpha)?;
            for _ in 0..50 {
                let d = random_direction(&mut rng, m, OPTIMALITY_RADIUS);
                let loss = matrix_loss(&(c.matrix() + &d), &z, alpha)?;
                worst = worst.min(loss - best);
            }
        }
        Ok((
            worst >= -OPTIMALITY_SLACK,
            format!("min loss gain over perturbations {worst:.3e}"),
        ))
    })
}

/// Locates the reconstruction-cost minimizer by gradient descent.
pub fn descend_reconstruction(z: &EvidenceMatrix, alpha: f64, start: Matrix) -> Result<(Matrix, usize)> {
    let mut c = start;
    for iter in 0..GD_MAX_ITERS {
        let g = intra_reconstruction_gradient(&c, z, alpha)?;
        if frobenius_sq(&g).sqrt() < GD_GRAD_TOL {
            return Ok((c, iter));
        }
        c = &c - &g.scale(GD_STEP);
    }
    Ok((c, GD_MAX_ITERS))
}

/// Gradient descent on the intra-channel reconstruction cost lands on
/// `λ·C` for `M = 2..=8`.
pub fn check_reconstruction_minimizer(seed: u64) -> CheckResult {
    timed("reconstruction minimizer", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0001);
        let mut worst = 0.0_f64;
        for m in 2..=8 {
            for _ in 0..3 {
                let k = rng.random_range(1..=8);
                let alpha = rng.random_range(0.5..2.0);
                let z = random_evidence(&mut rng, m, k);
                let start = random_matrix(&mut rng, m, m);
                let (found, _) = descend_reconstruction(&z, alpha, start)?;
                let expected = learn_conceptor(&z, alpha)?
                    .matrix()
                    .scale(reconstruction_lambda(m)?);
                worst = worst.max(found.max_abs_diff(&expected).unwrap_or(f64::INFINITY));
            }
        }
        Ok((
            worst <= MINIMIZER_TOL,
            format!("max |C_gd - λC| {worst:.3e}"),
        ))
    })
}

/// Central finite differences of the reconstruction cost.
pub fn finite_difference_gradient(c: &Matrix, z: &EvidenceMatrix, alpha: f64, step: f64) -> Result<Matrix> {
    let n = c.rows();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut plus = c.clone();
            plus.set(i, j, c.get(i, j) + step);
            let mut minus = c.clone();
            minus.set(i, j, c.get(i, j) - step);
            let d = intra_reconstruction_loss(&plus, z, alpha)? - intra_reconstruction_loss(&minus, z, alpha)?;
            g.set(i, j, d / (2.0 * step));
        }
    }
    Ok(g)
}

/// The analytic reconstruction gradient matches central differences on 50
/// random instances.
pub fn check_gradient(seed: u64) -> CheckResult {
    timed("reconstruction gradient", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0002);
        let mut worst = 0.0_f64;
        for _ in 0..50 {
            let m = rng.random_range(2..=8);
            let k = rng.random_range(1..=8);
            let alpha = rng.random_range(0.3..3.0);
            let z = random_evidence(&mut rng, m, k);
            let c = random_matrix(&mut rng, m, m);
            let analytic = intra_reconstruction_gradient(&c, &z, alpha)?;
            let numeric = finite_difference_gradient(&c, &z, alpha, FD_STEP)?;
            let err = frobenius_sq(&(&analytic - &numeric)).sqrt();
            let scale = frobenius_sq(&analytic).sqrt().max(1e-12);
            worst = worst.max(err / scale);
        }
        Ok((worst <= FD_REL_TOL, format!("max relative error {worst:.3e}")))
    })
}

/// `I − C̄` agrees with the closed-form NOT on invertible correlations,
/// and NOT is an exact involution.
pub fn check_not_identity(seed: u64) -> CheckResult {
    timed("NOT identity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0003);
        let mut worst = 0.0_f64;
        let mut involution = true;
        for _ in 0..100 {
            let m = rng.random_range(1..=8);
            let z = random_evidence(&mut rng, m, 2 * m + 2);
            let alpha = rng.random_range(0.5..2.0);
            let c_bar = learn_conceptor(&z, alpha)?;
            let closed = negation_closed_form(&z.correlation(), alpha)?;
            worst = worst.max(negate(&c_bar).matrix().max_abs_diff(&closed).unwrap_or(f64::INFINITY));
            involution &= negate(&negate(&c_bar)) == c_bar;
        }
        Ok((
            worst <= NOT_TOL && involution,
            format!("max |(I - C̄) - closed form| {worst:.3e}, involution exact: {involution}"),
        ))
    })
}

/// At zero aperture the conceptor is an idempotent projector.
pub fn check_projector(seed: u64) -> CheckResult {
    timed("zero-aperture projector", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0004);
        let mut worst = 0.0_f64;
        for _ in 0..50 {
            let m = rng.random_range(1..=10);
            let k = rng.random_range(1..=10);
            let z = random_evidence(&mut rng, m, k);
            let c = learn_conceptor(&z, 0.0)?;
            let cc = c.matrix().matmul(c.matrix())?;
            worst = worst.max(cc.max_abs_diff(c.matrix()).unwrap_or(f64::INFINITY));
        }
        Ok((worst <= PROJECTOR_TOL, format!("max |C·C - C| {worst:.3e}")))
    })
}

pub fn run_all(seed: u64) -> VerifyReport {
    VerifyReport {
        seed,
        checks: vec![
            check_optimality(seed),
            check_reconstruction_minimizer(seed),
            check_gradient(seed),
            check_not_identity(seed),
            check_projector(seed),
        ],
    }
}
