//! Centralized conjugate gradients for `S λ = s` with `S` positive
//! semidefinite, plus the spectral quantities that govern its convergence.
//!
//! When `s ∈ range(S)` the iteration never moves the null-space component of
//! `λ̄⁰` and terminates (in exact arithmetic) after at most `rank(S)` steps.
//! The recursion is the textbook one with no restarts; the decentralized
//! variant is checked against it step by step.

use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError, SpectralStats};
use crate::simnet::CommStats;
use crate::trace::{ConvergenceTrace, ErrorReference, Method, TraceRecord};

/// `pᵀSp ≤ CURVATURE_TOL · ‖p‖²` is treated as a breakdown.
pub const CURVATURE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CgError {
    #[error("zero curvature pᵀSp = {curvature:e} at iteration {iteration}: s is not in range(S) or S is not PSD")]
    BreakdownZeroCurvature { iteration: usize, curvature: f64 },
    #[error("no convergence within {} iterations (residual {:e})", .0.iterations, .0.residual_norm)]
    MaxIterationsExceeded(Box<CgOutcome>),
    #[error("invalid condition number {0} (must be >= 1)")]
    InvalidKappa(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub trace: ConvergenceTrace,
}

/// Coefficients of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStep {
    pub alpha: f64,
    pub beta: f64,
}

/// Iterate state `(λ̄ⁿ, rⁿ, pⁿ)` of the centralized recursion.
#[derive(Debug, Clone)]
pub struct CentralCg<'a> {
    system: &'a DenseMatrix,
    lambda: Vec<f64>,
    residual: Vec<f64>,
    direction: Vec<f64>,
    sp: Vec<f64>,
    rr: f64,
    iteration: usize,
}

impl<'a> CentralCg<'a> {
    /// `r⁰ = p⁰ = s − S λ̄⁰`.
    pub fn new(system: &'a DenseMatrix, rhs: &[f64], lambda0: &[f64]) -> Result<Self, CgError> {
        let m = system.rows();
        if !system.is_square() {
            return Err(LinalgError::NotSquare {
                rows: m,
                cols: system.cols(),
            }
            .into());
        }
        for len in [rhs.len(), lambda0.len()] {
            if len != m {
                return Err(LinalgError::DimensionMismatch {
                    expected: m,
                    found: len,
                }
                .into());
            }
        }
        linalg::check_finite(rhs)?;
        linalg::check_finite(lambda0)?;
        system.check_finite()?;
        let residual = linalg::sub(rhs, &system.mul_vec(lambda0));
        let rr = linalg::dot(&residual, &residual);
        Ok(CentralCg {
            system,
            lambda: lambda0.to_vec(),
            direction: residual.clone(),
            residual,
            sp: vec![0.0; m],
            rr,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn residual_norm(&self) -> f64 {
        self.rr.sqrt()
    }

    /// One pass of the recursion: α, λ̄, r, β, p.
    pub fn step(&mut self) -> Result<CgStep, CgError> {
        self.system.mul_vec_into(&self.direction, &mut self.sp);
        let curvature = linalg::dot(&self.direction, &self.sp);
        let pp = linalg::dot(&self.direction, &self.direction);
        if !(curvature > CURVATURE_TOL * pp) {
            return Err(CgError::BreakdownZeroCurvature {
                iteration: self.iteration,
                curvature,
            });
        }
        let alpha = self.rr / curvature;
        linalg::axpy(alpha, &self.direction, &mut self.lambda);
        linalg::axpy(-alpha, &self.sp, &mut self.residual);
        let rr_next = linalg::dot(&self.residual, &self.residual);
        let beta = rr_next / self.rr;
        for (p, r) in self.direction.iter_mut().zip(&self.residual) {
            *p = r + beta * *p;
        }
        self.rr = rr_next;
        self.iteration += 1;
        Ok(CgStep { alpha, beta })
    }
}

/// Runs the recursion until `‖rⁿ‖ ≤ tol`.
///
/// With a reference, every trace record also carries the semi-norm error and
/// (if the reference knows κ) the rate bound.
pub fn cg_solve(
    system: &DenseMatrix,
    rhs: &[f64],
    lambda0: &[f64],
    opts: CgOptions,
    mut reference: Option<&mut ErrorReference>,
) -> Result<CgOutcome, CgError> {
    let mut cg = CentralCg::new(system, rhs, lambda0)?;
    let mut trace = ConvergenceTrace::new(Method::Cg);
    if let Some(r) = reference.as_deref_mut() {
        r.start(lambda0)?;
    }
    let record =
        |cg: &CentralCg, step: Option<CgStep>, reference: Option<&ErrorReference>| -> Result<TraceRecord, CgError> {
            let (seminorm_error, bound) = match reference {
                Some(r) => {
                    let (e, b) = r.observe(cg.iteration(), cg.lambda())?;
                    (Some(e), b)
                }
                None => (None, None),
            };
            Ok(TraceRecord {
                iteration: cg.iteration(),
                residual_norm: cg.residual_norm(),
                seminorm_error,
                bound,
                alpha: step.map(|s| s.alpha),
                beta: step.map(|s| s.beta),
                comm: CommStats::default(),
            })
        };
    trace.records.push(record(&cg, None, reference.as_deref())?);
    while cg.residual_norm() > opts.tol {
        if cg.iteration() >= opts.max_iter {
            return Err(CgError::MaxIterationsExceeded(Box::new(CgOutcome {
                residual_norm: cg.residual_norm(),
                iterations: cg.iteration(),
                solution: cg.lambda,
                trace,
            })));
        }
        let step = cg.step()?;
        trace.records.push(record(&cg, Some(step), reference.as_deref())?);
    }
    Ok(CgOutcome {
        residual_norm: cg.residual_norm(),
        iterations: cg.iteration(),
        solution: cg.lambda,
        trace,
    })
}

/// `2((√κ−1)/(√κ+1))ⁿ e₀²`, the upper bound on `‖λ̄ⁿ⁺¹ − λ̄*‖²_S`.
pub fn convergence_bound(kappa: f64, initial_sq_error: f64, n: usize) -> Result<f64, CgError> {
    if !(kappa >= 1.0) {
        return Err(CgError::InvalidKappa(kappa));
    }
    let factor = linalg::contraction_factor(kappa);
    let exp = i32::try_from(n).unwrap_or(i32::MAX);
    Ok(2.0 * factor.powi(exp) * initial_sq_error)
}

/// Spectrum summary used to annotate traces: κ over the nonzero eigenvalues
/// and the finite-termination budget `rank(S)`.
pub fn spectral_stats_of(system: &DenseMatrix, zero_tol: f64) -> Result<SpectralStats, CgError> {
    Ok(linalg::symmetric_eigen(system, zero_tol)?)
}
