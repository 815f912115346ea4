//! Network-structured linear systems `Σᵢ Sᵢ λ = Σᵢ sᵢ` and their generators.
//!
//! Each agent stores only its compressed block `(𝒞(i), Ŝᵢ, ŝᵢ)`. Generators
//! cover the communication graphs used in experiments, the sensor-fusion
//! reduction and the general KKT-to-Schur-complement path.

mod kkt;
mod sensor;
mod topology;

pub use kkt::{schur_from_kkt, QpAgent, QpBlocks};
pub use sensor::{incidence_coupling, sensor_problem, SensorNetwork};
pub use topology::{make_topology, TopologyKind};

use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError, SpectralStats, SymmetricEigen};
use crate::simnet::{NetError, Topology};
use crate::sparsity::{self, Multiplicity, OverlapTable, SparsityError, SupportSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("topology needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("requested {requested} edges but at most {max} fit")]
    TooManyEdges { requested: usize, max: usize },
    #[error("measurement matrix of node {node} stayed rank deficient after {attempts} draws")]
    RankDeficientMeasurement { node: usize, attempts: usize },
    #[error("local KKT matrix of agent {0} is singular")]
    SingularLocalKkt(usize),
    #[error("invalid block for agent {agent}: {reason}")]
    InvalidBlock { agent: usize, reason: String },
    #[error("topology has {nodes} nodes but the problem has {agents} agents")]
    AgentCountMismatch { nodes: usize, agents: usize },
    #[error("agents {0} and {1} share coordinates but are not linked in the topology")]
    UnlinkedNeighbors(usize, usize),
    #[error("entry ({row}, {col}) of the coupling terms is not owned by any agent")]
    UnownedEntry { row: usize, col: usize },
    #[error(transparent)]
    Sparsity(#[from] SparsityError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One agent's compressed data: support `𝒞(i)`, `Ŝᵢ = I_𝒞 Sᵢ I_𝒞ᵀ`, `ŝᵢ = I_𝒞 sᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBlock {
    support: SupportSet,
    matrix: DenseMatrix,
    rhs: Vec<f64>,
}

impl SparseBlock {
    pub fn new(support: SupportSet, matrix: DenseMatrix, rhs: Vec<f64>) -> Result<Self, ProblemError> {
        let k = support.len();
        if matrix.rows() != k || matrix.cols() != k || rhs.len() != k {
            return Err(ProblemError::InvalidBlock {
                agent: usize::MAX,
                reason: format!(
                    "support has {k} indices but block is {}x{} with rhs of length {}",
                    matrix.rows(),
                    matrix.cols(),
                    rhs.len()
                ),
            });
        }
        matrix.check_symmetric()?;
        matrix.check_finite()?;
        linalg::check_finite(&rhs)?;
        Ok(SparseBlock { support, matrix, rhs })
    }

    /// Compresses a full `m×m` block onto its structural support.
    pub fn from_dense(full: &DenseMatrix, rhs: &[f64], tol: f64) -> Result<Self, ProblemError> {
        let support = sparsity::support_of(full, rhs, tol)?;
        let idx = support.indices();
        let matrix = full.submatrix(idx, idx);
        let rhs = support.project(rhs)?;
        SparseBlock::new(support, matrix, rhs)
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    /// `Ŝᵢ`.
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// `ŝᵢ`.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }
}

#[derive(Debug, Clone)]
pub struct NetworkProblem {
    m: usize,
    blocks: Vec<SparseBlock>,
    topology: Topology,
    multiplicity: Multiplicity,
    overlap: OverlapTable,
    lambda_star: Option<Vec<f64>>,
    theta_star: Option<Vec<f64>>,
}

impl NetworkProblem {
    /// Validates coverage and, when a topology is given, that every pair of
    /// agents with overlapping supports is linked. Without a topology the
    /// overlap graph is used as the communication graph.
    pub fn new(m: usize, blocks: Vec<SparseBlock>, topology: Option<Topology>) -> Result<Self, ProblemError> {
        if blocks.is_empty() {
            return Err(ProblemError::AgentCountMismatch {
                nodes: topology.map_or(0, |t| t.node_count()),
                agents: 0,
            });
        }
        for (agent, b) in blocks.iter().enumerate() {
            if b.support.global_dim() != m {
                return Err(ProblemError::InvalidBlock {
                    agent,
                    reason: format!("support dimension {} differs from m = {m}", b.support.global_dim()),
                });
            }
        }
        let supports: Vec<SupportSet> = blocks.iter().map(|b| b.support.clone()).collect();
        let multiplicity = Multiplicity::new(&supports)?;
        let overlap = OverlapTable::new(&supports)?;
        let topology = match topology {
            Some(t) => {
                if t.node_count() != blocks.len() {
                    return Err(ProblemError::AgentCountMismatch {
                        nodes: t.node_count(),
                        agents: blocks.len(),
                    });
                }
                if let Some((a, b)) = overlap.adjacent_pairs().find(|&(a, b)| !t.are_adjacent(a, b)) {
                    return Err(ProblemError::UnlinkedNeighbors(a, b));
                }
                t
            }
            None => Topology::new(blocks.len(), overlap.adjacent_pairs())?,
        };
        Ok(NetworkProblem {
            m,
            blocks,
            topology,
            multiplicity,
            overlap,
            lambda_star: None,
            theta_star: None,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn agent_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[SparseBlock] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &SparseBlock {
        &self.blocks[i]
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn multiplicity(&self) -> &Multiplicity {
        &self.multiplicity
    }

    pub fn overlap(&self) -> &OverlapTable {
        &self.overlap
    }

    pub fn lambda_star(&self) -> Option<&[f64]> {
        self.lambda_star.as_deref()
    }

    pub fn set_lambda_star(&mut self, lambda_star: Option<Vec<f64>>) {
        self.lambda_star = lambda_star;
    }

    pub fn theta_star(&self) -> Option<&[f64]> {
        self.theta_star.as_deref()
    }

    pub fn set_theta_star(&mut self, theta_star: Option<Vec<f64>>) {
        self.theta_star = theta_star;
    }

    /// `S = Σᵢ I_𝒞(i)ᵀ Ŝᵢ I_𝒞(i)` as a dense matrix.
    pub fn assemble_matrix(&self) -> DenseMatrix {
        let mut s = DenseMatrix::zeros(self.m, self.m);
        for b in &self.blocks {
            let idx = b.support.indices();
            for (a, &r) in idx.iter().enumerate() {
                for (c, &col) in idx.iter().enumerate() {
                    s[(r, col)] += b.matrix[(a, c)];
                }
            }
        }
        s
    }

    /// `s = Σᵢ I_𝒞(i)ᵀ ŝᵢ`.
    pub fn assemble_rhs(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.m];
        for b in &self.blocks {
            for (&c, &v) in b.support.indices().iter().zip(&b.rhs) {
                s[c] += v;
            }
        }
        s
    }

    /// `S x` evaluated blockwise.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for b in &self.blocks {
            let local: Vec<f64> = b.support.indices().iter().map(|&c| x[c]).collect();
            let y = b.matrix.mul_vec(&local);
            for (&c, v) in b.support.indices().iter().zip(y) {
                out[c] += v;
            }
        }
        out
    }

    /// `‖S λ − s‖`, evaluated blockwise.
    pub fn residual_norm(&self, lambda: &[f64]) -> f64 {
        let mut r = self.apply(lambda);
        for b in &self.blocks {
            for (&c, &v) in b.support.indices().iter().zip(&b.rhs) {
                r[c] -= v;
            }
        }
        linalg::norm(&r)
    }

    pub fn spectral_stats(&self, zero_tol: f64) -> Result<SpectralStats, ProblemError> {
        Ok(linalg::symmetric_eigen(&self.assemble_matrix(), zero_tol)?)
    }

    /// Minimum-norm solution `Q (QᵀSQ)⁻¹ Qᵀ s` via the range basis of `S`.
    pub fn reference_solution(&self, zero_tol: f64) -> Result<Vec<f64>, ProblemError> {
        let s = self.assemble_matrix();
        let eig = SymmetricEigen::compute(&s)?;
        reference_from_eigen(&s, &self.assemble_rhs(), &eig, zero_tol)
    }
}

pub(crate) fn reference_from_eigen(
    s: &DenseMatrix,
    rhs: &[f64],
    eig: &SymmetricEigen,
    zero_tol: f64,
) -> Result<Vec<f64>, ProblemError> {
    let q = eig.range_basis(zero_tol);
    if q.cols() == 0 {
        return Ok(vec![0.0; s.rows()]);
    }
    let qt = q.transpose();
    let reduced = qt.matmul(s).matmul(&q);
    // Symmetrize away the roundoff of the triple product before factorizing.
    let reduced = reduced.add(&reduced.transpose()).scaled(0.5);
    let y = linalg::solve_spd(&reduced, &qt.mul_vec(rhs))?;
    Ok(q.mul_vec(&y))
}

/// True iff `‖(I − QQᵀ) s‖ ≤ tol · max(1, ‖s‖)` with `Q` a range basis of `S`.
pub fn verify_range(problem: &NetworkProblem, tol: f64) -> Result<bool, ProblemError> {
    let s = problem.assemble_matrix();
    let rhs = problem.assemble_rhs();
    let q = linalg::range_basis(&s, linalg::DEFAULT_ZERO_TOL)?;
    let coeffs = q.transpose().mul_vec(&rhs);
    let projected = q.mul_vec(&coeffs);
    let off = linalg::norm(&linalg::sub(&rhs, &projected));
    Ok(off <= tol * linalg::norm(&rhs).max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_problem(blocks: &[(DenseMatrix, Vec<f64>)]) -> NetworkProblem {
        let m = blocks[0].0.rows();
        let bs = blocks
            .iter()
            .map(|(s, r)| SparseBlock::from_dense(s, r, 0.0).unwrap())
            .collect();
        NetworkProblem::new(m, bs, None).unwrap()
    }

    #[test]
    fn verify_range_examples() {
        let p = dense_problem(&[(DenseMatrix::from_diagonal(&[1.0, 0.0]), vec![1.0, 1.0])]);
        assert!(!verify_range(&p, 1e-9).unwrap());
        let p = dense_problem(&[(DenseMatrix::from_diagonal(&[1.0, 1.0]), vec![0.0, 0.0])]);
        assert!(verify_range(&p, 1e-9).unwrap());
    }

    #[test]
    fn assemble_and_apply_agree() {
        let b1 = DenseMatrix::from_rows(&[[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.0]]);
        let b2 = DenseMatrix::from_rows(&[[0.0, 0.0, 0.0], [0.0, 1.0, -1.0], [0.0, -1.0, 3.0]]);
        let p = dense_problem(&[(b1, vec![1.0, 0.0, 0.0]), (b2, vec![0.0, 0.0, 2.0])]);
        assert_eq!(p.block(0).support().indices(), &[0, 1]);
        assert_eq!(p.block(1).support().indices(), &[1, 2]);
        assert_eq!(p.topology().edges(), &[(0, 1)]);
        let x = [1.0, -2.0, 0.5];
        let s = p.assemble_matrix();
        assert_eq!(s.mul_vec(&x), p.apply(&x));
        assert_eq!(p.assemble_rhs(), vec![1.0, 0.0, 2.0]);
        let lam = p.reference_solution(1e-9).unwrap();
        assert!(p.residual_norm(&lam) < 1e-12);
    }

    #[test]
    fn topology_must_link_overlapping_agents() {
        let e = DenseMatrix::identity(1);
        let blocks = vec![
            SparseBlock::new(SupportSet::new(2, vec![0]).unwrap(), e.clone(), vec![1.0]).unwrap(),
            SparseBlock::new(
                SupportSet::new(2, vec![0, 1]).unwrap(),
                DenseMatrix::identity(2),
                vec![1.0, 1.0],
            )
            .unwrap(),
            SparseBlock::new(SupportSet::new(2, vec![1]).unwrap(), e, vec![1.0]).unwrap(),
        ];
        let chain = Topology::new(3, [(0, 2), (2, 1)]).unwrap();
        assert_eq!(
            NetworkProblem::new(2, blocks.clone(), Some(chain)).unwrap_err(),
            ProblemError::UnlinkedNeighbors(0, 1)
        );
        let ok = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
        assert!(NetworkProblem::new(2, blocks.clone(), Some(ok)).is_ok());
        let wrong = Topology::new(2, [(0, 1)]).unwrap();
        assert!(matches!(
            NetworkProblem::new(2, blocks, Some(wrong)),
            Err(ProblemError::AgentCountMismatch { nodes: 2, agents: 3 })
        ));
    }

    #[test]
    fn block_shape_is_checked() {
        let err = SparseBlock::new(
            SupportSet::new(3, vec![0, 1]).unwrap(),
            DenseMatrix::identity(3),
            vec![0.0; 2],
        );
        assert!(matches!(err, Err(ProblemError::InvalidBlock { .. })));
    }
}
