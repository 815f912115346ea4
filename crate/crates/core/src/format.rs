//! On-disk formats: the JSON problem file and the CSV trace and sweep tables.
//!
//! Floats are written in their shortest round-trip representation (scientific
//! notation in CSV), so a problem read back from disk is bit-identical to the
//! one written.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dadmm::SweepPoint;
use crate::linalg::DenseMatrix;
use crate::problems::{NetworkProblem, ProblemError, SparseBlock};
use crate::simnet::{NetError, Topology};
use crate::sparsity::SupportSet;
use crate::trace::ConvergenceTrace;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<NetError> for FormatError {
    fn from(e: NetError) -> Self {
        FormatError::Problem(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: usize,
    pub support: Vec<usize>,
    #[serde(rename = "S_hat")]
    pub s_hat_matrix: Vec<f64>,
    pub s_hat: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub noise_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_y: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub m: usize,
    pub topology: TopologyRecord,
    pub ntheta: usize,
    pub agents: Vec<AgentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<Vec<f64>>,
    #[serde(default)]
    pub meta: ProblemMeta,
}

impl ProblemFile {
    pub fn from_problem(problem: &NetworkProblem, ntheta: usize, meta: ProblemMeta) -> Self {
        ProblemFile {
            m: problem.m(),
            topology: TopologyRecord {
                nodes: problem.topology().node_count(),
                edges: problem.topology().edges().iter().map(|&(a, b)| [a, b]).collect(),
            },
            ntheta,
            agents: problem
                .blocks()
                .iter()
                .enumerate()
                .map(|(id, b)| AgentRecord {
                    id,
                    support: b.support().indices().to_vec(),
                    s_hat_matrix: b.matrix().as_slice().to_vec(),
                    s_hat: b.rhs().to_vec(),
                })
                .collect(),
            lambda_star: problem.lambda_star().map(<[f64]>::to_vec),
            meta,
        }
    }

    /// Validates and rebuilds the in-memory problem.
    pub fn to_problem(&self) -> Result<NetworkProblem, FormatError> {
        let topology = Topology::new(self.topology.nodes, self.topology.edges.iter().map(|e| (e[0], e[1])))?;
        let mut agents: Vec<&AgentRecord> = self.agents.iter().collect();
        agents.sort_by_key(|a| a.id);
        if agents.iter().enumerate().any(|(k, a)| a.id != k) {
            return Err(FormatError::Invalid("agent ids must be 0..n without gaps".into()));
        }
        let blocks = agents
            .iter()
            .map(|a| {
                let k = a.support.len();
                let support = SupportSet::new(self.m, a.support.clone()).map_err(ProblemError::from)?;
                let matrix = DenseMatrix::from_row_major(k, k, a.s_hat_matrix.clone()).map_err(|_| {
                    FormatError::Invalid(format!(
                        "agent {}: S_hat has {} entries, expected {}",
                        a.id,
                        a.s_hat_matrix.len(),
                        k * k
                    ))
                })?;
                Ok(SparseBlock::new(support, matrix, a.s_hat.clone()).map_err(|e| match e {
                    ProblemError::InvalidBlock { reason, .. } => ProblemError::InvalidBlock { agent: a.id, reason },
                    other => other,
                })?)
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        let mut problem = NetworkProblem::new(self.m, blocks, Some(topology))?;
        if let Some(ls) = &self.lambda_star {
            if ls.len() != self.m {
                return Err(FormatError::Invalid(format!(
                    "lambda_star has length {}, expected {}",
                    ls.len(),
                    self.m
                )));
            }
            problem.set_lambda_star(Some(ls.clone()));
        }
        Ok(problem)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

pub const TRACE_HEADER: &str = "method,iter,residual_norm,seminorm_error,bound,global_sums,neighbor_msgs,rounds";
pub const SWEEP_HEADER: &str = "method,rho,iterations,final_residual,hit_cap,error";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

/// One row per trace record; optional columns are left blank.
pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{:e},{},{},{},{},{}",
            trace.method,
            r.iteration,
            r.residual_norm,
            opt(r.seminorm_error),
            opt(r.bound),
            r.comm.global_sum_invocations,
            r.comm.neighbor_messages,
            r.comm.rounds
        );
    }
    out
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// The ADMM points in the given order, then a `dcg` reference row with a blank `rho`.
pub fn sweep_csv(points: &[SweepPoint], dcg_iterations: usize, dcg_residual: f64) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "dadmm,{:e},{},{:e},{},{}",
            p.rho,
            p.iterations,
            p.final_residual,
            p.hit_cap,
            quote(p.error.as_deref().unwrap_or(""))
        );
    }
    let _ = writeln!(out, "dcg,,{dcg_iterations},{dcg_residual:e},false,");
    out
}
