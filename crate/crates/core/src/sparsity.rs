//! Support sets, projectors, multiplicities and overlap maps.
//!
//! A projector `I_𝒞` is never stored as a matrix: it is the sorted index list of
//! its support, and `project`/`lift` are gather/scatter over that list.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SparsityError {
    #[error("support set is empty")]
    EmptySupport,
    #[error("index {index} out of range for global dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("support indices must be strictly increasing")]
    NotSorted,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("global index {0} is not covered by any agent")]
    UncoveredIndex(usize),
}

/// Sorted, duplicate-free global indices owned by one agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportSet {
    global_dim: usize,
    indices: Vec<usize>,
}

/// The projector `I_𝒞(i)` is represented by its support.
pub type Projector = SupportSet;

impl SupportSet {
    pub fn new(global_dim: usize, indices: Vec<usize>) -> Result<Self, SparsityError> {
        if indices.is_empty() {
            return Err(SparsityError::EmptySupport);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SparsityError::NotSorted);
        }
        if let Some(&last) = indices.last() {
            if last >= global_dim {
                return Err(SparsityError::IndexOutOfRange {
                    index: last,
                    dim: global_dim,
                });
            }
        }
        Ok(SupportSet { global_dim, indices })
    }

    /// The full index range `{0, …, m−1}`.
    pub fn full(global_dim: usize) -> Self {
        SupportSet {
            global_dim,
            indices: (0..global_dim).collect(),
        }
    }

    pub fn global_dim(&self) -> usize {
        self.global_dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn position(&self, global: usize) -> Option<usize> {
        self.indices.binary_search(&global).ok()
    }

    pub fn contains(&self, global: usize) -> bool {
        self.position(global).is_some()
    }

    /// `I_𝒞 x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, SparsityError> {
        if x.len() != self.global_dim {
            return Err(SparsityError::DimensionMismatch {
                expected: self.global_dim,
                found: x.len(),
            });
        }
        Ok(self.indices.iter().map(|&c| x[c]).collect())
    }

    /// `I_𝒞ᵀ xc`.
    pub fn lift(&self, xc: &[f64]) -> Result<Vec<f64>, SparsityError> {
        let mut out = vec![0.0; self.global_dim];
        self.lift_add(xc, &mut out)?;
        Ok(out)
    }

    /// `out += I_𝒞ᵀ xc`.
    pub fn lift_add(&self, xc: &[f64], out: &mut [f64]) -> Result<(), SparsityError> {
        if xc.len() != self.len() {
            return Err(SparsityError::DimensionMismatch {
                expected: self.len(),
                found: xc.len(),
            });
        }
        if out.len() != self.global_dim {
            return Err(SparsityError::DimensionMismatch {
                expected: self.global_dim,
                found: out.len(),
            });
        }
        for (&c, &v) in self.indices.iter().zip(xc) {
            out[c] += v;
        }
        Ok(())
    }
}

/// Indices of the nonzero rows of a symmetric `S_i` or nonzero entries of `s_i`.
///
/// `tol = 0.0` gives the exact structural support.
pub fn support_of(s_i: &DenseMatrix, rhs: &[f64], tol: f64) -> Result<SupportSet, SparsityError> {
    let m = s_i.rows();
    if s_i.cols() != m {
        return Err(SparsityError::DimensionMismatch {
            expected: m,
            found: s_i.cols(),
        });
    }
    if rhs.len() != m {
        return Err(SparsityError::DimensionMismatch {
            expected: m,
            found: rhs.len(),
        });
    }
    let indices: Vec<usize> = (0..m)
        .filter(|&c| rhs[c].abs() > tol || s_i.row(c).iter().any(|v| v.abs() > tol))
        .collect();
    SupportSet::new(m, indices)
}

/// The diagonal multiplicity matrices `Λ` (global) and `Λᵢ` (per agent).
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplicity {
    global: Vec<u32>,
    per_agent: Vec<Vec<u32>>,
    per_agent_inv: Vec<Vec<f64>>,
}

impl Multiplicity {
    pub fn new(supports: &[SupportSet]) -> Result<Self, SparsityError> {
        let m = common_dim(supports)?;
        let mut global = vec![0u32; m];
        for s in supports {
            for &c in s.indices() {
                global[c] += 1;
            }
        }
        if let Some(c) = global.iter().position(|&k| k == 0) {
            return Err(SparsityError::UncoveredIndex(c));
        }
        // Λᵢ = I_𝒞(i) Λ I_𝒞(i)ᵀ is the restriction of a diagonal matrix, so its
        // inverse is the restriction of the elementwise reciprocal.
        let per_agent: Vec<Vec<u32>> = supports
            .iter()
            .map(|s| s.indices().iter().map(|&c| global[c]).collect())
            .collect();
        let per_agent_inv = per_agent
            .iter()
            .map(|d| d.iter().map(|&k| 1.0 / f64::from(k)).collect())
            .collect();
        Ok(Multiplicity {
            global,
            per_agent,
            per_agent_inv,
        })
    }

    /// Diagonal of `Λ`.
    pub fn global(&self) -> &[u32] {
        &self.global
    }

    /// Diagonal of `Λᵢ`.
    pub fn agent(&self, i: usize) -> &[u32] {
        &self.per_agent[i]
    }

    /// Diagonal of `Λᵢ⁻¹`.
    pub fn agent_inverse(&self, i: usize) -> &[f64] {
        &self.per_agent_inv[i]
    }
}

/// Shared-index tables `I_ij` and neighbor lists `𝒩(i)` (which include `i`).
#[derive(Debug, Clone)]
pub struct OverlapTable {
    neighbors: Vec<Vec<usize>>,
    maps: BTreeMap<(usize, usize), Vec<(usize, usize)>>,
}

impl OverlapTable {
    pub fn new(supports: &[SupportSet]) -> Result<Self, SparsityError> {
        let m = common_dim(supports)?;
        // owners[c] lists (agent, local position) in ascending agent order.
        let mut owners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
        for (i, s) in supports.iter().enumerate() {
            for (pos, &c) in s.indices().iter().enumerate() {
                owners[c].push((i, pos));
            }
        }
        let mut maps: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (i, s) in supports.iter().enumerate() {
            maps.insert((i, i), (0..s.len()).map(|p| (p, p)).collect());
        }
        for own in &owners {
            for &(a, pa) in own {
                for &(b, pb) in own {
                    if a != b {
                        maps.entry((a, b)).or_default().push((pa, pb));
                    }
                }
            }
        }
        let mut neighbors = vec![Vec::new(); supports.len()];
        for &(a, b) in maps.keys() {
            neighbors[a].push(b);
        }
        Ok(OverlapTable { neighbors, maps })
    }

    pub fn agent_count(&self) -> usize {
        self.neighbors.len()
    }

    /// `𝒩(i)` in ascending order, including `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `(position in i, position in j)` for every shared global index, ascending
    /// in the global index. Empty when the supports are disjoint.
    pub fn pairs(&self, i: usize, j: usize) -> &[(usize, usize)] {
        self.maps.get(&(i, j)).map_or(&[], Vec::as_slice)
    }

    /// Undirected adjacency pairs `(i, j)`, `i < j`, with overlapping supports.
    pub fn adjacent_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.maps.keys().copied().filter(|(a, b)| a < b)
    }

    /// `out_i += I_ij v_j`.
    pub fn gather_add(&self, i: usize, j: usize, v_j: &[f64], out_i: &mut [f64]) {
        for &(pi, pj) in self.pairs(i, j) {
            out_i[pi] += v_j[pj];
        }
    }
}

fn common_dim(supports: &[SupportSet]) -> Result<usize, SparsityError> {
    let m = supports.first().map_or(0, SupportSet::global_dim);
    for s in supports {
        if s.global_dim() != m {
            return Err(SparsityError::DimensionMismatch {
                expected: m,
                found: s.global_dim(),
            });
        }
    }
    Ok(m)
}
