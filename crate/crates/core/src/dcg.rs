//! Decentralized conjugate gradients over a simulated network.
//!
//! Every agent keeps `λᵢ`, `rᵢ`, `pᵢ` and `uᵢ = Ŝᵢpᵢ` on its own support
//! only. One iteration costs exactly one neighbor exchange (of `uᵢ`) and two
//! network-wide sums (of `σᵢ` and `ηᵢ`). The iterates are the projections of
//! the centralized CG iterates, so convergence properties carry over.
//!
//! Neighbor contributions are accumulated per coordinate in ascending agent
//! order, which makes every owner of a coordinate compute a bitwise-identical
//! value.

use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::problems::NetworkProblem;
use crate::simnet::{CommStats, Inbox, NetError, Network, Outbox};
use crate::sparsity::{OverlapTable, SparsityError};
use crate::trace::{ConvergenceTrace, ErrorReference, Method, TraceRecord};

/// `σ ≤ SIGMA_TOL · ‖p‖²` is treated as a breakdown.
pub const SIGMA_TOL: f64 = 1e-14;
/// Largest tolerated disagreement of an initial iterate on shared coordinates.
pub const CONSISTENCY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DcgError {
    #[error("initial iterates of agents {first} and {second} differ by {gap:e} at coordinate {index}")]
    InconsistentInitialIterate {
        first: usize,
        second: usize,
        index: usize,
        gap: f64,
    },
    #[error("zero curvature σ = {sigma:e} at iteration {iteration}: s is not in range(S) or S is not PSD")]
    ZeroSigma { iteration: usize, sigma: f64 },
    #[error("no convergence within {} iterations (residual {:e})", .0.iterations, .0.residual_norm)]
    MaxIterationsExceeded(Box<DcgOutcome>),
    #[error("initial iterate has {found} agents, expected {expected}")]
    AgentCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sparsity(#[from] SparsityError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DcgOptions {
    fn default() -> Self {
        DcgOptions {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcgOutcome {
    /// Consensus iterate assembled from the lowest-id owner of each coordinate.
    pub lambda_bar: Vec<f64>,
    /// Per-agent `λᵢ` on the agent's support.
    pub local: Vec<Vec<f64>>,
    pub iterations: usize,
    /// `√η`, the residual norm every agent knows after the last sum.
    pub residual_norm: f64,
    pub comm: CommStats,
    pub trace: ConvergenceTrace,
}

/// Local state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct DcgAgent {
    s_hat: DenseMatrix,
    inv_mult: Vec<f64>,
    pub lambda: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    /// `rᵢᵀΛᵢ⁻¹rᵢ`.
    pub eta: f64,
    /// `pᵢᵀŜᵢpᵢ`.
    pub sigma: f64,
    /// `pᵢᵀΛᵢ⁻¹pᵢ`, summed alongside `σᵢ` for the breakdown test.
    pub p_weight: f64,
}

impl DcgAgent {
    fn weighted(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.inv_mult).map(|(v, w)| v * v * w).sum()
    }

    fn refresh_direction_terms(&mut self) {
        self.s_hat.mul_vec_into(&self.p, &mut self.u);
        self.sigma = linalg::dot(&self.p, &self.u);
        self.p_weight = self.weighted(&self.p);
    }
}

/// Coefficients of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcgStep {
    pub alpha: f64,
    pub beta: f64,
    /// `√ηⁿ⁺¹`.
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Dcg<'a> {
    problem: &'a NetworkProblem,
    net: Network,
    agents: Vec<DcgAgent>,
    eta: f64,
    iteration: usize,
}

impl<'a> Dcg<'a> {
    /// Starts from the projections of a global `λ̄⁰` (consistent by construction).
    pub fn new(problem: &'a NetworkProblem, lambda0: &[f64]) -> Result<Self, DcgError> {
        if lambda0.len() != problem.m() {
            return Err(LinalgError::DimensionMismatch {
                expected: problem.m(),
                found: lambda0.len(),
            }
            .into());
        }
        let local = problem
            .blocks()
            .iter()
            .map(|b| b.support().project(lambda0))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_local(problem, local)
    }

    /// Starts from per-agent `λᵢ⁰`, which must agree on shared coordinates.
    ///
    /// Initialization costs one neighbor exchange of `ŝⱼ − Ŝⱼλⱼ⁰` and one
    /// network-wide sum of `ηᵢ⁰`.
    pub fn from_local(problem: &'a NetworkProblem, lambda0: Vec<Vec<f64>>) -> Result<Self, DcgError> {
        let n = problem.agent_count();
        if lambda0.len() != n {
            return Err(DcgError::AgentCountMismatch {
                expected: n,
                found: lambda0.len(),
            });
        }
        for (b, l) in problem.blocks().iter().zip(&lambda0) {
            if l.len() != b.support().len() {
                return Err(LinalgError::DimensionMismatch {
                    expected: b.support().len(),
                    found: l.len(),
                }
                .into());
            }
            linalg::check_finite(l)?;
        }
        check_consistency(problem, &lambda0)?;

        let mut net = Network::new(problem.topology().clone());
        let mut agents: Vec<DcgAgent> = problem
            .blocks()
            .iter()
            .zip(lambda0)
            .enumerate()
            .map(|(i, (b, lambda))| {
                let k = lambda.len();
                DcgAgent {
                    s_hat: b.matrix().clone(),
                    inv_mult: problem.multiplicity().agent_inverse(i).to_vec(),
                    lambda,
                    r: vec![0.0; k],
                    p: vec![0.0; k],
                    u: vec![0.0; k],
                    eta: 0.0,
                    sigma: 0.0,
                    p_weight: 0.0,
                }
            })
            .collect();
        let w: Vec<Vec<f64>> = agents
            .iter()
            .zip(problem.blocks())
            .map(|(a, b)| linalg::sub(b.rhs(), &a.s_hat.mul_vec(&a.lambda)))
            .collect();
        let gathered = exchange_and_gather(&mut net, problem.overlap(), &w)?;
        for (a, r) in agents.iter_mut().zip(gathered) {
            a.p.clone_from(&r);
            a.r = r;
            a.eta = a.weighted(&a.r);
            a.refresh_direction_terms();
        }
        let etas: Vec<f64> = agents.iter().map(|a| a.eta).collect();
        let eta = net.global_sum_scalar(&etas)?;
        Ok(Dcg {
            problem,
            net,
            agents,
            eta,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn agents(&self) -> &[DcgAgent] {
        &self.agents
    }

    /// Mutable access, meant for fault-injection tests.
    pub fn agents_mut(&mut self) -> &mut [DcgAgent] {
        &mut self.agents
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn stats(&self) -> CommStats {
        self.net.stats()
    }

    /// `ηⁿ = Σᵢ rᵢᵀΛᵢ⁻¹rᵢ`, as known to every agent.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn residual_norm(&self) -> f64 {
        self.eta.max(0.0).sqrt()
    }

    /// One iteration: sum σ, exchange u, update r and λ, sum η, update p and u.
    pub fn step(&mut self) -> Result<DcgStep, DcgError> {
        let tuples: Vec<Vec<f64>> = self.agents.iter().map(|a| vec![a.sigma, a.p_weight]).collect();
        let sums = self.net.global_sum(&tuples)?;
        let (sigma, pp) = (sums.value()[0], sums.value()[1]);
        if !(sigma > SIGMA_TOL * pp) {
            return Err(DcgError::ZeroSigma {
                iteration: self.iteration,
                sigma,
            });
        }
        let alpha = self.eta / sigma;

        let u: Vec<Vec<f64>> = self.agents.iter().map(|a| a.u.clone()).collect();
        let su = exchange_and_gather(&mut self.net, self.problem.overlap(), &u)?;
        for (a, su) in self.agents.iter_mut().zip(su) {
            linalg::axpy(-alpha, &su, &mut a.r);
            a.eta = a.weighted(&a.r);
            linalg::axpy(alpha, &a.p, &mut a.lambda);
        }

        let etas: Vec<f64> = self.agents.iter().map(|a| a.eta).collect();
        let eta_next = self.net.global_sum_scalar(&etas)?;
        let beta = eta_next / self.eta;
        for a in &mut self.agents {
            for (p, r) in a.p.iter_mut().zip(&a.r) {
                *p = r + beta * *p;
            }
            a.refresh_direction_terms();
        }
        self.eta = eta_next;
        self.iteration += 1;
        Ok(DcgStep {
            alpha,
            beta,
            residual_norm: self.residual_norm(),
        })
    }

    /// `λ̄` with each coordinate read from its lowest-id owner.
    pub fn lambda_bar(&self) -> Vec<f64> {
        self.assemble(|a| &a.lambda)
    }

    /// Assembled residual `rⁿ`.
    pub fn residual(&self) -> Vec<f64> {
        self.assemble(|a| &a.r)
    }

    /// Assembled search direction `pⁿ`.
    pub fn direction(&self) -> Vec<f64> {
        self.assemble(|a| &a.p)
    }

    fn assemble(&self, field: impl Fn(&DcgAgent) -> &Vec<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.problem.m()];
        let mut seen = vec![false; self.problem.m()];
        for (a, b) in self.agents.iter().zip(self.problem.blocks()) {
            for (&c, &v) in b.support().indices().iter().zip(field(a)) {
                if !seen[c] {
                    seen[c] = true;
                    out[c] = v;
                }
            }
        }
        out
    }

    /// Largest disagreement `|λᵢ[c] − λⱼ[c]|` over all shared coordinates.
    pub fn consensus_residual(&self) -> f64 {
        let locals: Vec<&[f64]> = self.agents.iter().map(|a| a.lambda.as_slice()).collect();
        max_disagreement(self.problem.overlap(), &locals).map_or(0.0, |d| d.gap)
    }

    fn into_outcome(self, trace: ConvergenceTrace) -> DcgOutcome {
        DcgOutcome {
            lambda_bar: self.lambda_bar(),
            iterations: self.iteration,
            residual_norm: self.residual_norm(),
            comm: self.net.stats(),
            local: self.agents.into_iter().map(|a| a.lambda).collect(),
            trace,
        }
    }
}

/// Runs decentralized CG from `λ̄⁰` until `√η ≤ tol`.
pub fn dcg_solve(
    problem: &NetworkProblem,
    lambda0: &[f64],
    opts: DcgOptions,
    mut reference: Option<&mut ErrorReference>,
) -> Result<DcgOutcome, DcgError> {
    let mut dcg = Dcg::new(problem, lambda0)?;
    if let Some(r) = reference.as_deref_mut() {
        r.start(&dcg.lambda_bar())?;
    }
    let mut trace = ConvergenceTrace::new(Method::Dcg);
    trace.records.push(record(&dcg, None, reference.as_deref())?);
    while dcg.residual_norm() > opts.tol {
        if dcg.iteration() >= opts.max_iter {
            return Err(DcgError::MaxIterationsExceeded(Box::new(dcg.into_outcome(trace))));
        }
        let step = dcg.step()?;
        trace.records.push(record(&dcg, Some(step), reference.as_deref())?);
    }
    Ok(dcg.into_outcome(trace))
}

/// Iterations from `λ̄⁰ = 0` until the assembled residual `‖Sλ̄ − s‖` drops
/// below `target`, measured by an outside observer as in the ADMM sweeps.
/// Returns the count and the residual reached; stops at `max_iter`.
pub fn iterations_to_target(problem: &NetworkProblem, target: f64, max_iter: usize) -> Result<(usize, f64), DcgError> {
    let mut dcg = Dcg::new(problem, &vec![0.0; problem.m()])?;
    loop {
        let res = problem.residual_norm(&dcg.lambda_bar());
        if res < target || dcg.iteration() >= max_iter {
            return Ok((dcg.iteration(), res));
        }
        dcg.step()?;
    }
}

fn record(dcg: &Dcg, step: Option<DcgStep>, reference: Option<&ErrorReference>) -> Result<TraceRecord, DcgError> {
    let (seminorm_error, bound) = match reference {
        Some(r) => {
            let (e, b) = r.observe(dcg.iteration(), &dcg.lambda_bar())?;
            (Some(e), b)
        }
        None => (None, None),
    };
    Ok(TraceRecord {
        iteration: dcg.iteration(),
        residual_norm: dcg.residual_norm(),
        seminorm_error,
        bound,
        alpha: step.map(|s| s.alpha),
        beta: step.map(|s| s.beta),
        comm: dcg.stats(),
    })
}

/// One neighbor exchange followed by `outᵢ = Σ_{j∈𝒩(i)} I_ij vⱼ`, with the
/// sum over `j` taken in ascending order. Only shared coordinates travel.
pub(crate) fn exchange_and_gather(
    net: &mut Network,
    overlap: &OverlapTable,
    values: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, NetError> {
    let n = values.len();
    let outboxes: Vec<Outbox> = (0..n)
        .map(|j| {
            overlap
                .neighbors(j)
                .iter()
                .filter(|&&i| i != j)
                .map(|&i| (i, overlap.pairs(j, i).iter().map(|&(pj, _)| values[j][pj]).collect()))
                .collect()
        })
        .collect();
    let inboxes = net.neighbor_exchange(outboxes)?;
    Ok(inboxes
        .into_iter()
        .enumerate()
        .map(|(i, inbox)| gather(overlap, i, &values[i], inbox))
        .collect())
}

fn gather(overlap: &OverlapTable, i: usize, own: &[f64], inbox: Inbox) -> Vec<f64> {
    let mut out = vec![0.0; own.len()];
    let mut messages = inbox.into_iter().peekable();
    for &j in overlap.neighbors(i) {
        if j == i {
            for (o, v) in out.iter_mut().zip(own) {
                *o += v;
            }
            continue;
        }
        while messages.peek().is_some_and(|(from, _)| *from < j) {
            messages.next();
        }
        if let Some((_, payload)) = messages.next_if(|(from, _)| *from == j) {
            for (&(pi, _), v) in overlap.pairs(i, j).iter().zip(payload) {
                out[pi] += v;
            }
        }
    }
    out
}

pub(crate) struct Disagreement {
    pub first: usize,
    pub second: usize,
    pub position: usize,
    pub gap: f64,
}

pub(crate) fn max_disagreement(overlap: &OverlapTable, locals: &[&[f64]]) -> Option<Disagreement> {
    let mut worst: Option<Disagreement> = None;
    for (i, j) in overlap.adjacent_pairs() {
        for &(pi, pj) in overlap.pairs(i, j) {
            let gap = (locals[i][pi] - locals[j][pj]).abs();
            if worst.as_ref().is_none_or(|w| gap > w.gap) {
                worst = Some(Disagreement {
                    first: i,
                    second: j,
                    position: pi,
                    gap,
                });
            }
        }
    }
    worst
}

fn check_consistency(problem: &NetworkProblem, lambda0: &[Vec<f64>]) -> Result<(), DcgError> {
    let locals: Vec<&[f64]> = lambda0.iter().map(Vec::as_slice).collect();
    match max_disagreement(problem.overlap(), &locals) {
        Some(d) if d.gap > CONSISTENCY_TOL => Err(DcgError::InconsistentInitialIterate {
            first: d.first,
            second: d.second,
            index: problem.block(d.first).support().indices()[d.position],
            gap: d.gap,
        }),
        _ => Ok(()),
    }
}
