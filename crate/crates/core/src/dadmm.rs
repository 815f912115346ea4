//! Decentralized ADMM on the consensus form of `Σᵢ Sᵢ λ = Σᵢ sᵢ`.
//!
//! Agent `i` minimizes `½λᵢᵀŜᵢλᵢ − ŝᵢᵀλᵢ` subject to `λᵢ = I_𝒞(i) λ̄`. Each
//! iteration is a local solve with the cached factor of `Ŝᵢ + ρI`, one
//! neighbor exchange to form the multiplicity-weighted average `λ̄ᵢ`, and a
//! dual update. No network-wide sums are needed.

use thiserror::Error;

use crate::dcg::exchange_and_gather;
use crate::linalg::{self, Cholesky, LinalgError};
use crate::problems::NetworkProblem;
use crate::simnet::{CommStats, NetError, Network};
use crate::trace::{ConvergenceTrace, ErrorReference, Method, TraceRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmmError {
    #[error("penalty parameter must be positive and finite, got {0}")]
    NonPositiveRho(f64),
    #[error("stopping tolerances must be positive, got eps_p = {eps_p}, eps_d = {eps_d}")]
    InvalidTolerance { eps_p: f64, eps_d: f64 },
    #[error("rho grid is empty")]
    EmptyGrid,
    #[error("no convergence within {} iterations (residual {:e})", .0.iterations, .0.residual_norm)]
    MaxIterationsExceeded(Box<AdmmOutcome>),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    pub rho: f64,
    pub eps_p: f64,
    pub eps_d: f64,
    pub max_iter: usize,
    /// When set, stop as soon as the observer-side residual `‖Sλ̄ⁿ − s‖`
    /// drops below this value instead of using `eps_p`/`eps_d`.
    pub residual_target: Option<f64>,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 1.0,
            eps_p: 1e-6,
            eps_d: 1e-6,
            max_iter: 1000,
            residual_target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    pub lambda_bar: Vec<f64>,
    pub iterations: usize,
    /// Observer-side `‖Sλ̄ − s‖` of the returned iterate.
    pub residual_norm: f64,
    pub comm: CommStats,
    pub trace: ConvergenceTrace,
}

/// Local state of one agent. `(λᵢ, γᵢ)` is the iterated pair; `λ̄ᵢ` is the
/// average formed in the latest exchange.
#[derive(Debug, Clone)]
pub struct AdmmAgent {
    factor: Cholesky,
    rhs: Vec<f64>,
    inv_mult: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_bar: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Largest per-agent gaps observed in one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmStep {
    /// `maxᵢ ‖λᵢⁿ⁺¹ − λ̄ᵢⁿ⁺¹‖`.
    pub primal_gap: f64,
    /// `maxᵢ ‖λ̄ᵢⁿ⁺¹ − λ̄ᵢⁿ‖`.
    pub dual_gap: f64,
}

#[derive(Debug, Clone)]
pub struct Dadmm<'a> {
    problem: &'a NetworkProblem,
    net: Network,
    agents: Vec<AdmmAgent>,
    rho: f64,
    iteration: usize,
}

impl<'a> Dadmm<'a> {
    /// Zero start: `λᵢ = λ̄ᵢ = γᵢ = 0`. Factorizes `Ŝᵢ + ρI` once per agent.
    pub fn new(problem: &'a NetworkProblem, rho: f64) -> Result<Self, AdmmError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(AdmmError::NonPositiveRho(rho));
        }
        let agents = problem
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let k = b.support().len();
                Ok(AdmmAgent {
                    factor: Cholesky::factor(&b.matrix().shifted(rho))?,
                    rhs: b.rhs().to_vec(),
                    inv_mult: problem.multiplicity().agent_inverse(i).to_vec(),
                    lambda: vec![0.0; k],
                    lambda_bar: vec![0.0; k],
                    gamma: vec![0.0; k],
                })
            })
            .collect::<Result<Vec<_>, AdmmError>>()?;
        Ok(Dadmm {
            problem,
            net: Network::new(problem.topology().clone()),
            agents,
            rho,
            iteration: 0,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn agents(&self) -> &[AdmmAgent] {
        &self.agents
    }

    /// Mutable access, e.g. to place the iteration at a chosen state.
    pub fn agents_mut(&mut self) -> &mut [AdmmAgent] {
        &mut self.agents
    }

    pub fn stats(&self) -> CommStats {
        self.net.stats()
    }

    /// Local solve, averaging exchange, dual update.
    pub fn step(&mut self) -> Result<AdmmStep, AdmmError> {
        let rho = self.rho;
        for a in &mut self.agents {
            let mut x: Vec<f64> = a
                .rhs
                .iter()
                .zip(&a.gamma)
                .zip(&a.lambda_bar)
                .map(|((s, g), lb)| s - g + rho * lb)
                .collect();
            a.factor.solve_in_place(&mut x)?;
            a.lambda = x;
        }
        let lambdas: Vec<Vec<f64>> = self.agents.iter().map(|a| a.lambda.clone()).collect();
        let sums = exchange_and_gather(&mut self.net, self.problem.overlap(), &lambdas)?;
        let mut step = AdmmStep {
            primal_gap: 0.0,
            dual_gap: 0.0,
        };
        for (a, sum) in self.agents.iter_mut().zip(sums) {
            let avg: Vec<f64> = sum.iter().zip(&a.inv_mult).map(|(v, w)| v * w).collect();
            step.dual_gap = step.dual_gap.max(linalg::norm(&linalg::sub(&avg, &a.lambda_bar)));
            let diff = linalg::sub(&a.lambda, &avg);
            step.primal_gap = step.primal_gap.max(linalg::norm(&diff));
            linalg::axpy(rho, &diff, &mut a.gamma);
            a.lambda_bar = avg;
        }
        self.iteration += 1;
        Ok(step)
    }

    /// `λ̄` with each coordinate read from its lowest-id owner.
    pub fn lambda_bar(&self) -> Vec<f64> {
        let m = self.problem.m();
        let mut out = vec![0.0; m];
        let mut seen = vec![false; m];
        for (a, b) in self.agents.iter().zip(self.problem.blocks()) {
            for (&c, &v) in b.support().indices().iter().zip(&a.lambda_bar) {
                if !seen[c] {
                    seen[c] = true;
                    out[c] = v;
                }
            }
        }
        out
    }

    /// `Σᵢ lift(γᵢ)`.
    pub fn dual_sum(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.problem.m()];
        for (a, b) in self.agents.iter().zip(self.problem.blocks()) {
            for (&c, &g) in b.support().indices().iter().zip(&a.gamma) {
                out[c] += g;
            }
        }
        out
    }

    fn into_outcome(self, residual_norm: f64, trace: ConvergenceTrace) -> AdmmOutcome {
        AdmmOutcome {
            lambda_bar: self.lambda_bar(),
            iterations: self.iteration,
            residual_norm,
            comm: self.net.stats(),
            trace,
        }
    }
}

/// Runs decentralized ADMM from the zero state.
///
/// The residual `‖Sλ̄ⁿ − s‖` recorded in the trace is measured by an outside
/// observer and does not count as communication.
pub fn dadmm_solve(
    problem: &NetworkProblem,
    opts: AdmmOptions,
    mut reference: Option<&mut ErrorReference>,
) -> Result<AdmmOutcome, AdmmError> {
    if !(opts.eps_p > 0.0 && opts.eps_d > 0.0) {
        return Err(AdmmError::InvalidTolerance {
            eps_p: opts.eps_p,
            eps_d: opts.eps_d,
        });
    }
    let mut admm = Dadmm::new(problem, opts.rho)?;
    let mut trace = ConvergenceTrace::new(Method::Dadmm);
    let mut lambda_bar = admm.lambda_bar();
    if let Some(r) = reference.as_deref_mut() {
        r.start(&lambda_bar)?;
    }
    let mut residual = problem.residual_norm(&lambda_bar);
    trace
        .records
        .push(record(&admm, &lambda_bar, residual, reference.as_deref())?);
    loop {
        if opts.residual_target.is_some_and(|t| residual < t) {
            break;
        }
        if admm.iteration() >= opts.max_iter {
            return Err(AdmmError::MaxIterationsExceeded(Box::new(
                admm.into_outcome(residual, trace),
            )));
        }
        let step = admm.step()?;
        lambda_bar = admm.lambda_bar();
        residual = problem.residual_norm(&lambda_bar);
        trace
            .records
            .push(record(&admm, &lambda_bar, residual, reference.as_deref())?);
        if opts.residual_target.is_none() && step.primal_gap < opts.eps_p && step.dual_gap < opts.eps_d {
            break;
        }
    }
    Ok(admm.into_outcome(residual, trace))
}

fn record(
    admm: &Dadmm,
    lambda_bar: &[f64],
    residual: f64,
    reference: Option<&ErrorReference>,
) -> Result<TraceRecord, AdmmError> {
    let seminorm_error = match reference {
        Some(r) => Some(r.seminorm_error(lambda_bar)?),
        None => None,
    };
    Ok(TraceRecord {
        iteration: admm.iteration(),
        residual_norm: residual,
        seminorm_error,
        bound: None,
        alpha: None,
        beta: None,
        comm: admm.stats(),
    })
}

/// Outcome of one ρ value in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub rho: f64,
    /// Iterations run: to reach the target, or the cap.
    pub iterations: usize,
    pub final_residual: f64,
    pub hit_cap: bool,
    pub error: Option<String>,
}

/// Iterations ADMM with penalty `rho` needs until `‖Sλ̄ⁿ − s‖ < target`.
pub fn sweep_point(problem: &NetworkProblem, rho: f64, target: f64, max_iter: usize) -> SweepPoint {
    let opts = AdmmOptions {
        rho,
        max_iter,
        residual_target: Some(target),
        ..AdmmOptions::default()
    };
    match dadmm_solve(problem, opts, None) {
        Ok(out) => SweepPoint {
            rho,
            iterations: out.iterations,
            final_residual: out.residual_norm,
            hit_cap: false,
            error: None,
        },
        Err(AdmmError::MaxIterationsExceeded(out)) => SweepPoint {
            rho,
            iterations: out.iterations,
            final_residual: out.residual_norm,
            hit_cap: true,
            error: None,
        },
        Err(e) => SweepPoint {
            rho,
            iterations: 0,
            final_residual: f64::NAN,
            hit_cap: false,
            error: Some(e.to_string()),
        },
    }
}

/// Runs [`sweep_point`] for every grid value; failures are recorded per point.
pub fn rho_sweep(
    problem: &NetworkProblem,
    rho_grid: &[f64],
    target: f64,
    max_iter: usize,
) -> Result<Vec<SweepPoint>, AdmmError> {
    if rho_grid.is_empty() {
        return Err(AdmmError::EmptyGrid);
    }
    Ok(rho_grid
        .iter()
        .map(|&rho| sweep_point(problem, rho, target, max_iter))
        .collect())
}

/// `points` values spaced evenly in log scale over `[min, max]`.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (a, b) = (min.log10(), max.log10());
            (0..points)
                .map(|k| match k {
                    0 => min,
                    _ if k == points - 1 => max,
                    _ => 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64),
                })
                .collect()
        }
    }
}
