//! Per-iteration convergence records shared by all solvers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cg::convergence_bound;
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::simnet::CommStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cg,
    Dcg,
    Dadmm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cg => "cg",
            Method::Dcg => "dcg",
            Method::Dadmm => "dadmm",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `‖rⁿ‖` for the CG variants, observer-measured `‖Sλ̄ⁿ − s‖` for ADMM.
    pub residual_norm: f64,
    /// `‖λ̄ⁿ − λ̄*‖_S`, when a reference solution is known.
    pub seminorm_error: Option<f64>,
    /// Square root of the CG rate estimate for `‖λ̄ⁿ − λ̄*‖²_S`.
    pub bound: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Cumulative counters after this iteration.
    pub comm: CommStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub method: Method,
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn new(method: Method) -> Self {
        ConvergenceTrace {
            method,
            records: Vec::new(),
        }
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Analysis-side observer holding the assembled system and a known solution.
///
/// It sits outside the communication model: evaluating it never touches
/// [`CommStats`].
#[derive(Debug, Clone)]
pub struct ErrorReference {
    system: DenseMatrix,
    lambda_star: Vec<f64>,
    kappa: Option<f64>,
    initial_sq_error: Option<f64>,
}

impl ErrorReference {
    pub fn new(system: DenseMatrix, lambda_star: Vec<f64>) -> Self {
        ErrorReference {
            system,
            lambda_star,
            kappa: None,
            initial_sq_error: None,
        }
    }

    /// Enables bound values; `kappa` is the effective condition number of the system.
    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn lambda_star(&self) -> &[f64] {
        &self.lambda_star
    }

    pub fn system(&self) -> &DenseMatrix {
        &self.system
    }

    pub fn seminorm_error(&self, lambda: &[f64]) -> Result<f64, LinalgError> {
        let diff = linalg::sub(lambda, &self.lambda_star);
        linalg::semi_norm(&self.system, &diff)
    }

    /// Fixes the initial error; must be called with `λ̄⁰` before [`Self::observe`].
    pub fn start(&mut self, lambda0: &[f64]) -> Result<f64, LinalgError> {
        let e0 = self.seminorm_error(lambda0)?;
        self.initial_sq_error = Some(e0 * e0);
        Ok(e0)
    }

    /// `(‖λ̄ⁿ − λ̄*‖_S, bound)` for the n-th iterate. The bound at `n ≥ 1` is
    /// `√(2 cⁿ⁻¹) ‖λ̄⁰ − λ̄*‖_S` with `c = (√κ−1)/(√κ+1)`; at `n = 0` it is the
    /// initial error itself.
    pub fn observe(&self, n: usize, lambda: &[f64]) -> Result<(f64, Option<f64>), LinalgError> {
        let err = self.seminorm_error(lambda)?;
        let bound = match (self.kappa, self.initial_sq_error) {
            (Some(kappa), Some(e0sq)) => Some(if n == 0 {
                e0sq.sqrt()
            } else {
                convergence_bound(kappa, e0sq, n - 1).map(f64::sqrt).unwrap_or(f64::NAN)
            }),
            _ => None,
        };
        Ok((err, bound))
    }
}
