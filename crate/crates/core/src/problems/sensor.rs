use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::kkt::{QpAgent, QpBlocks};
use super::{reference_from_eigen, NetworkProblem, ProblemError, SparseBlock};
use crate::linalg::{self, Cholesky, DenseMatrix, SymmetricEigen, DEFAULT_ZERO_TOL};
use crate::simnet::Topology;
use crate::sparsity::SupportSet;

const MAX_MEASUREMENT_DRAWS: usize = 100;
const MIN_SINGULAR_VALUE: f64 = 1e-8;

/// Per-node coupling matrices `Aᵢ` (each `|ℰ|·n_θ × n_θ`) of `A = I_G ⊗ I`.
///
/// Edge `e = (i, j)` with `i < j` contributes `+I` to block-row `e` of `Aᵢ`
/// and `−I` to block-row `e` of `Aⱼ`. Edges follow the canonical order of
/// [`Topology::edges`].
pub fn incidence_coupling(topology: &Topology, n_theta: usize) -> Vec<DenseMatrix> {
    let m = topology.edge_count() * n_theta;
    let mut blocks = vec![DenseMatrix::zeros(m, n_theta); topology.node_count()];
    for (e, &(i, j)) in topology.edges().iter().enumerate() {
        for k in 0..n_theta {
            blocks[i][(e * n_theta + k, k)] = 1.0;
            blocks[j][(e * n_theta + k, k)] = -1.0;
        }
    }
    blocks
}

/// Linear least-squares estimation of a common parameter `θ` from local
/// measurements `yᵢ = Mᵢθ + vᵢ`, with consensus enforced along every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorNetwork {
    topology: Topology,
    n_theta: usize,
    n_y: usize,
    measurements: Vec<DenseMatrix>,
    observations: Vec<Vec<f64>>,
    theta_true: Vec<f64>,
    noise_var: f64,
}

impl SensorNetwork {
    /// Draws `θ_true` and every `Mᵢ` uniformly from `[0, 1]`, then adds
    /// Gaussian noise of variance `noise_var` to `Mᵢ θ_true`.
    pub fn generate(
        topology: Topology,
        n_theta: usize,
        n_y: usize,
        noise_var: f64,
        seed: u64,
    ) -> Result<Self, ProblemError> {
        if n_theta == 0 || n_y < n_theta {
            return Err(ProblemError::InvalidBlock {
                agent: 0,
                reason: format!("need n_y >= n_theta >= 1, got n_y = {n_y}, n_theta = {n_theta}"),
            });
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(ProblemError::InvalidBlock {
                agent: 0,
                reason: format!("noise variance must be finite and >= 0, got {noise_var}"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta_true: Vec<f64> = (0..n_theta).map(|_| rng.random::<f64>()).collect();
        let noise = Normal::new(0.0, noise_var.sqrt()).expect("finite non-negative std");
        let mut measurements = Vec::with_capacity(topology.node_count());
        let mut observations = Vec::with_capacity(topology.node_count());
        for node in 0..topology.node_count() {
            let m = draw_measurement(&mut rng, n_y, n_theta).ok_or(ProblemError::RankDeficientMeasurement {
                node,
                attempts: MAX_MEASUREMENT_DRAWS,
            })?;
            let mut y = m.mul_vec(&theta_true);
            if noise_var > 0.0 {
                for v in &mut y {
                    *v += noise.sample(&mut rng);
                }
            }
            measurements.push(m);
            observations.push(y);
        }
        Ok(SensorNetwork {
            topology,
            n_theta,
            n_y,
            measurements,
            observations,
            theta_true,
            noise_var,
        })
    }

    /// Builds an instance from explicit data; every `Mᵢ` must have full column rank.
    pub fn from_parts(
        topology: Topology,
        measurements: Vec<DenseMatrix>,
        observations: Vec<Vec<f64>>,
        theta_true: Vec<f64>,
        noise_var: f64,
    ) -> Result<Self, ProblemError> {
        let n_theta = theta_true.len();
        let n_y = measurements.first().map_or(0, DenseMatrix::rows);
        if measurements.len() != topology.node_count() || observations.len() != topology.node_count() {
            return Err(ProblemError::AgentCountMismatch {
                nodes: topology.node_count(),
                agents: measurements.len().min(observations.len()),
            });
        }
        for (node, (m, y)) in measurements.iter().zip(&observations).enumerate() {
            if m.rows() != n_y || m.cols() != n_theta || y.len() != n_y {
                return Err(ProblemError::InvalidBlock {
                    agent: node,
                    reason: format!(
                        "measurement is {}x{} with {} observations, expected {n_y}x{n_theta}",
                        m.rows(),
                        m.cols(),
                        y.len()
                    ),
                });
            }
            if !has_full_column_rank(m) {
                return Err(ProblemError::RankDeficientMeasurement { node, attempts: 1 });
            }
        }
        Ok(SensorNetwork {
            topology,
            n_theta,
            n_y,
            measurements,
            observations,
            theta_true,
            noise_var,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Multiplier dimension `|ℰ|·n_θ`.
    pub fn m(&self) -> usize {
        self.topology.edge_count() * self.n_theta
    }

    pub fn measurement(&self, i: usize) -> &DenseMatrix {
        &self.measurements[i]
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i]
    }

    pub fn theta_true(&self) -> &[f64] {
        &self.theta_true
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    fn gram(&self, i: usize) -> DenseMatrix {
        let m = &self.measurements[i];
        m.transpose().matmul(m)
    }

    fn gram_inverse(&self, i: usize) -> Result<DenseMatrix, ProblemError> {
        let chol = Cholesky::factor(&self.gram(i))?;
        let n = self.n_theta;
        let mut inv = DenseMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            chol.solve_in_place(&mut e)?;
            for (r, v) in e.into_iter().enumerate() {
                inv[(r, c)] = v;
            }
        }
        Ok(inv.add(&inv.transpose()).scaled(0.5))
    }

    fn mty(&self, i: usize) -> Vec<f64> {
        self.measurements[i].transpose().mul_vec(&self.observations[i])
    }

    // Incident edges of node i in ascending edge order, with the sign of the
    // node's incidence entry.
    fn incident_edges(&self, i: usize) -> Vec<(usize, f64)> {
        self.topology
            .edges()
            .iter()
            .enumerate()
            .filter_map(|(e, &(a, b))| match i {
                _ if i == a => Some((e, 1.0)),
                _ if i == b => Some((e, -1.0)),
                _ => None,
            })
            .collect()
    }

    /// Direct assembly of `Ŝᵢ = Â (MᵢᵀMᵢ)⁻¹ Âᵀ` and `ŝᵢ = −Â (MᵢᵀMᵢ)⁻¹ Mᵢᵀyᵢ`
    /// on the incident-edge blocks. Attaches the minimum-norm `λ̄*` and the
    /// centralized least-squares estimate as ground truth.
    pub fn to_problem(&self) -> Result<NetworkProblem, ProblemError> {
        let n = self.n_theta;
        let m = self.m();
        let mut blocks = Vec::with_capacity(self.topology.node_count());
        for i in 0..self.topology.node_count() {
            let p = self.gram_inverse(i)?;
            let w = p.mul_vec(&self.mty(i));
            let edges = self.incident_edges(i);
            let indices: Vec<usize> = edges.iter().flat_map(|&(e, _)| (e * n)..(e * n + n)).collect();
            let k = indices.len();
            let mut s_hat = DenseMatrix::zeros(k, k);
            let mut rhs = vec![0.0; k];
            for (a, &(_, sa)) in edges.iter().enumerate() {
                for r in 0..n {
                    rhs[a * n + r] = -sa * w[r];
                    for (b, &(_, sb)) in edges.iter().enumerate() {
                        for c in 0..n {
                            s_hat[(a * n + r, b * n + c)] = sa * sb * p[(r, c)];
                        }
                    }
                }
            }
            blocks.push(SparseBlock::new(SupportSet::new(m, indices)?, s_hat, rhs)?);
        }
        let mut problem = NetworkProblem::new(m, blocks, Some(self.topology.clone()))?;
        self.attach_ground_truth(&mut problem)?;
        Ok(problem)
    }

    pub(crate) fn attach_ground_truth(&self, problem: &mut NetworkProblem) -> Result<(), ProblemError> {
        let s = problem.assemble_matrix();
        let eig = SymmetricEigen::compute(&s)?;
        let lambda_star = reference_from_eigen(&s, &problem.assemble_rhs(), &eig, DEFAULT_ZERO_TOL)?;
        problem.set_lambda_star(Some(lambda_star));
        problem.set_theta_star(Some(self.centralized_estimate()?));
        Ok(())
    }

    /// The same instance as an equality-constrained QP: Hessian `MᵢᵀMᵢ`,
    /// gradient `−Mᵢᵀyᵢ`, coupling `−Aᵢ`. The negated coupling makes the
    /// Schur complement multiplier coincide with `λ` of the Lagrangian
    /// `Σ ½‖yᵢ − Mᵢθᵢ‖² + λᵀ Σ Aᵢθᵢ`.
    pub fn kkt_blocks(&self) -> QpBlocks {
        let agents = incidence_coupling(&self.topology, self.n_theta)
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                let gradient: Vec<f64> = self.mty(i).into_iter().map(|v| -v).collect();
                QpAgent::unconstrained(self.gram(i), gradient, a.scaled(-1.0))
            })
            .collect();
        QpBlocks::new(self.m(), agents)
    }

    /// `θ = (Σ MᵢᵀMᵢ)⁻¹ Σ Mᵢᵀyᵢ`.
    pub fn centralized_estimate(&self) -> Result<Vec<f64>, ProblemError> {
        let n = self.n_theta;
        let mut gram = DenseMatrix::zeros(n, n);
        let mut rhs = vec![0.0; n];
        for i in 0..self.topology.node_count() {
            gram = gram.add(&self.gram(i));
            for (acc, v) in rhs.iter_mut().zip(self.mty(i)) {
                *acc += v;
            }
        }
        Ok(linalg::solve_spd(&gram, &rhs)?)
    }

    /// Local estimates `θᵢ = (MᵢᵀMᵢ)⁻¹(Mᵢᵀyᵢ + Aᵢᵀλ̄)`.
    pub fn back_substitute(&self, lambda: &[f64]) -> Result<Vec<Vec<f64>>, ProblemError> {
        if lambda.len() != self.m() {
            return Err(linalg::LinalgError::DimensionMismatch {
                expected: self.m(),
                found: lambda.len(),
            }
            .into());
        }
        let n = self.n_theta;
        (0..self.topology.node_count())
            .map(|i| {
                let mut rhs = self.mty(i);
                for (e, sign) in self.incident_edges(i) {
                    for k in 0..n {
                        rhs[k] += sign * lambda[e * n + k];
                    }
                }
                Ok(Cholesky::factor(&self.gram(i))?.solve(&rhs)?)
            })
            .collect()
    }
}

fn draw_measurement(rng: &mut ChaCha8Rng, n_y: usize, n_theta: usize) -> Option<DenseMatrix> {
    for _ in 0..MAX_MEASUREMENT_DRAWS {
        let m = DenseMatrix::from_fn(n_y, n_theta, |_, _| rng.random::<f64>());
        if has_full_column_rank(&m) {
            return Some(m);
        }
    }
    None
}

fn has_full_column_rank(m: &DenseMatrix) -> bool {
    let gram = m.transpose().matmul(m);
    match SymmetricEigen::compute(&gram) {
        Ok(eig) => {
            let smallest = eig.eigenvalues.first().copied().unwrap_or(0.0);
            smallest.max(0.0).sqrt() > MIN_SINGULAR_VALUE && Cholesky::factor(&gram).is_ok()
        }
        Err(_) => false,
    }
}

/// Generates a sensor instance on `topology` and its reduced multiplier system.
pub fn sensor_problem(
    topology: Topology,
    n_theta: usize,
    n_y: usize,
    noise_var: f64,
    seed: u64,
) -> Result<(SensorNetwork, NetworkProblem), ProblemError> {
    let net = SensorNetwork::generate(topology, n_theta, n_y, noise_var, seed)?;
    let problem = net.to_problem()?;
    Ok((net, problem))
}
