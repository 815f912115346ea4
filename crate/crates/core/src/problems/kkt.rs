use super::{NetworkProblem, ProblemError, SparseBlock};
use crate::linalg::{DenseMatrix, Lu};
use crate::sparsity::SupportSet;

/// Local data of one agent in the saddle-point system
///
/// ```text
/// [ H  Aᵀ ] [p]   [−h]        H = blkdiag([Bᵢ Gᵢᵀ; Gᵢ 0]),
/// [ A  D  ] [λ] = [ d]        h = (gradient, constraint residual).
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct QpAgent {
    /// `Bᵢ`, `n_x × n_x`.
    pub hessian: DenseMatrix,
    /// `Gᵢ`, `n_c × n_x` (may have zero rows).
    pub constraint_jacobian: DenseMatrix,
    /// First block of `hᵢ`, length `n_x`.
    pub gradient: Vec<f64>,
    /// Second block of `hᵢ`, length `n_c`.
    pub constraint_residual: Vec<f64>,
    /// `Aᵢ`, `m × n_x`.
    pub coupling: DenseMatrix,
}

impl QpAgent {
    pub fn unconstrained(hessian: DenseMatrix, gradient: Vec<f64>, coupling: DenseMatrix) -> Self {
        let n_x = hessian.cols();
        QpAgent {
            hessian,
            constraint_jacobian: DenseMatrix::zeros(0, n_x),
            gradient,
            constraint_residual: Vec::new(),
            coupling,
        }
    }

    fn kkt_matrix(&self) -> DenseMatrix {
        let n_x = self.hessian.cols();
        let n_c = self.constraint_jacobian.rows();
        let g = &self.constraint_jacobian;
        DenseMatrix::from_fn(n_x + n_c, n_x + n_c, |r, c| match (r < n_x, c < n_x) {
            (true, true) => self.hessian[(r, c)],
            (true, false) => g[(c - n_x, r)],
            (false, true) => g[(r - n_x, c)],
            (false, false) => 0.0,
        })
    }

    fn check(&self, agent: usize, m: usize) -> Result<(), ProblemError> {
        let n_x = self.hessian.cols();
        let n_c = self.constraint_jacobian.rows();
        let bad = |reason: String| Err(ProblemError::InvalidBlock { agent, reason });
        if self.hessian.rows() != n_x {
            return bad(format!("hessian is {}x{n_x}", self.hessian.rows()));
        }
        if self.constraint_jacobian.cols() != n_x {
            return bad(format!(
                "constraint jacobian has {} columns, expected {n_x}",
                self.constraint_jacobian.cols()
            ));
        }
        if self.gradient.len() != n_x || self.constraint_residual.len() != n_c {
            return bad(format!(
                "right-hand side has lengths ({}, {}), expected ({n_x}, {n_c})",
                self.gradient.len(),
                self.constraint_residual.len()
            ));
        }
        if self.coupling.rows() != m || self.coupling.cols() != n_x {
            return bad(format!(
                "coupling is {}x{}, expected {m}x{n_x}",
                self.coupling.rows(),
                self.coupling.cols()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpBlocks {
    pub m: usize,
    pub agents: Vec<QpAgent>,
    /// `D` (`m × m`); `None` means zero.
    pub regularization: Option<DenseMatrix>,
    /// `d` (length `m`).
    pub coupling_rhs: Vec<f64>,
}

impl QpBlocks {
    pub fn new(m: usize, agents: Vec<QpAgent>) -> Self {
        QpBlocks {
            m,
            agents,
            regularization: None,
            coupling_rhs: vec![0.0; m],
        }
    }
}

/// Eliminates the primal variables of the saddle-point system.
///
/// Agent `i` contributes `Sᵢ = Ãᵢ Hᵢ⁻¹ Ãᵢᵀ` and `sᵢ = −Ãᵢ Hᵢ⁻¹ hᵢ` with
/// `Ãᵢ = [Aᵢ 0]`, so that `Σ Sᵢ λ = Σ sᵢ` is `(A H⁻¹ Aᵀ − D) λ = −A H⁻¹ h − d`.
/// Each entry of `−D` and `−d` goes to the lowest-numbered agent whose
/// support contains it. Supports are the nonzero rows of `Aᵢ`.
pub fn schur_from_kkt(blocks: &QpBlocks) -> Result<NetworkProblem, ProblemError> {
    let m = blocks.m;
    if blocks.coupling_rhs.len() != m {
        return Err(ProblemError::InvalidBlock {
            agent: usize::MAX,
            reason: format!("coupling rhs has length {}, expected {m}", blocks.coupling_rhs.len()),
        });
    }
    if let Some(d) = &blocks.regularization {
        if d.rows() != m || d.cols() != m {
            return Err(ProblemError::InvalidBlock {
                agent: usize::MAX,
                reason: format!("regularization is {}x{}, expected {m}x{m}", d.rows(), d.cols()),
            });
        }
    }
    let mut supports = Vec::with_capacity(blocks.agents.len());
    let mut matrices = Vec::with_capacity(blocks.agents.len());
    let mut rhss = Vec::with_capacity(blocks.agents.len());
    for (i, agent) in blocks.agents.iter().enumerate() {
        agent.check(i, m)?;
        let rows: Vec<usize> = (0..m)
            .filter(|&r| agent.coupling.row(r).iter().any(|&v| v != 0.0))
            .collect();
        if rows.is_empty() {
            return Err(ProblemError::InvalidBlock {
                agent: i,
                reason: "coupling matrix is zero".into(),
            });
        }
        let lu = Lu::factor(&agent.kkt_matrix()).map_err(|_| ProblemError::SingularLocalKkt(i))?;
        let n_x = agent.hessian.cols();
        let n = n_x + agent.constraint_jacobian.rows();
        // Ãᵀ restricted to the support rows: n × k.
        let at = DenseMatrix::from_fn(
            n,
            rows.len(),
            |r, c| if r < n_x { agent.coupling[(rows[c], r)] } else { 0.0 },
        );
        let x = lu.solve_matrix(&at)?;
        let a = at.transpose();
        let s = a.matmul(&x);
        let s = s.add(&s.transpose()).scaled(0.5);
        let h: Vec<f64> = agent
            .gradient
            .iter()
            .chain(&agent.constraint_residual)
            .copied()
            .collect();
        let rhs: Vec<f64> = a.mul_vec(&lu.solve(&h)?).into_iter().map(|v| -v).collect();
        supports.push(SupportSet::new(m, rows)?);
        matrices.push(s);
        rhss.push(rhs);
    }
    if let Some(d) = &blocks.regularization {
        for r in 0..m {
            for c in 0..m {
                let v = d[(r, c)];
                if v == 0.0 {
                    continue;
                }
                let owner = supports
                    .iter()
                    .position(|s| s.contains(r) && s.contains(c))
                    .ok_or(ProblemError::UnownedEntry { row: r, col: c })?;
                let (pr, pc) = (
                    supports[owner].position(r).unwrap(),
                    supports[owner].position(c).unwrap(),
                );
                matrices[owner][(pr, pc)] -= v;
            }
        }
    }
    for (c, &v) in blocks.coupling_rhs.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let owner = supports
            .iter()
            .position(|s| s.contains(c))
            .ok_or(ProblemError::UnownedEntry { row: c, col: c })?;
        let pc = supports[owner].position(c).unwrap();
        rhss[owner][pc] -= v;
    }
    let blocks = supports
        .into_iter()
        .zip(matrices)
        .zip(rhss)
        .map(|((s, mat), rhs)| SparseBlock::new(s, mat, rhs))
        .collect::<Result<Vec<_>, _>>()?;
    NetworkProblem::new(m, blocks, None)
}
