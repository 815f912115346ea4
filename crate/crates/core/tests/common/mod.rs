//! Shared fixtures for the integration and acceptance tests.

#![allow(dead_code)]

use dcg_core::linalg::{self, DenseMatrix, SymmetricEigen, DEFAULT_ZERO_TOL};
use dcg_core::problems::{make_topology, sensor_problem, NetworkProblem, SensorNetwork, TopologyKind};
use dcg_core::simnet::Network;
use dcg_core::trace::ErrorReference;

/// Measurements per node relative to the parameter dimension.
pub const NY_PER_THETA: usize = 10;

pub struct Instance {
    pub label: String,
    pub net: SensorNetwork,
    pub problem: NetworkProblem,
    pub system: DenseMatrix,
    pub eigen: SymmetricEigen,
}

impl Instance {
    pub fn sensor(kind: TopologyKind, nodes: usize, extra: usize, n_theta: usize, seed: u64) -> Self {
        let topology = make_topology(kind, nodes, seed, extra).expect("topology");
        let (net, problem) =
            sensor_problem(topology, n_theta, NY_PER_THETA * n_theta, 1e-3, seed).expect("sensor instance");
        let system = problem.assemble_matrix();
        let eigen = SymmetricEigen::compute(&system).expect("eigen");
        Instance {
            label: format!("{kind}/n_theta={n_theta}/seed={seed}"),
            net,
            problem,
            system,
            eigen,
        }
    }

    pub fn rank(&self) -> usize {
        self.eigen.stats(DEFAULT_ZERO_TOL).rank
    }

    pub fn kappa(&self) -> f64 {
        self.eigen.stats(DEFAULT_ZERO_TOL).kappa
    }

    pub fn reference(&self) -> ErrorReference {
        ErrorReference::new(
            self.system.clone(),
            self.problem.lambda_star().expect("lambda star").to_vec(),
        )
        .with_kappa(self.kappa())
    }
}

/// Four fixed 10-node topologies times the given seeds.
pub fn ten_node_family(n_theta: usize, seeds: &[u64]) -> Vec<Instance> {
    let mut out = Vec::new();
    for kind in TopologyKind::ALL_FIXED {
        for &seed in seeds {
            out.push(Instance::sensor(kind, 10, 0, n_theta, seed));
        }
    }
    out
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    linalg::norm(&linalg::sub(a, b)) / linalg::norm(b).max(1.0)
}

fn weighted(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(v, w)| v * v * w).sum()
}

/// Centralized CG on the assembled vectors that evaluates `S p` as the block
/// sum `Σᵢ lift(Ŝᵢ pᵢ)` in ascending agent order and forms every inner
/// product as a tree-reduced sum of per-block terms. No local copies and no
/// messages, but the same floating-point association as the decentralized run.
pub struct BlockCg<'a> {
    problem: &'a NetworkProblem,
    reducer: Network,
    lambda: Vec<f64>,
    r: Vec<f64>,
    p: Vec<f64>,
    sp: Vec<f64>,
    eta: f64,
    curvature: Vec<f64>,
    p_weight: Vec<f64>,
    iteration: usize,
}

impl<'a> BlockCg<'a> {
    pub fn new(problem: &'a NetworkProblem, lambda0: &[f64]) -> Self {
        let m = problem.m();
        let mut r = vec![0.0; m];
        for b in problem.blocks() {
            let li = b.support().project(lambda0).unwrap();
            let wi = linalg::sub(b.rhs(), &b.matrix().mul_vec(&li));
            b.support().lift_add(&wi, &mut r).unwrap();
        }
        let mut cg = BlockCg {
            problem,
            reducer: Network::new(problem.topology().clone()),
            lambda: lambda0.to_vec(),
            p: r.clone(),
            r,
            sp: vec![0.0; m],
            eta: 0.0,
            curvature: Vec::new(),
            p_weight: Vec::new(),
            iteration: 0,
        };
        cg.eta = cg.residual_sum();
        cg.refresh();
        cg
    }

    fn residual_sum(&mut self) -> f64 {
        let terms: Vec<f64> = (0..self.problem.agent_count())
            .map(|i| {
                let ri = self.problem.block(i).support().project(&self.r).unwrap();
                weighted(&ri, self.problem.multiplicity().agent_inverse(i))
            })
            .collect();
        self.reducer.global_sum_scalar(&terms).unwrap()
    }

    fn refresh(&mut self) {
        self.sp.iter_mut().for_each(|v| *v = 0.0);
        self.curvature.clear();
        self.p_weight.clear();
        for (i, b) in self.problem.blocks().iter().enumerate() {
            let pi = b.support().project(&self.p).unwrap();
            let ui = b.matrix().mul_vec(&pi);
            b.support().lift_add(&ui, &mut self.sp).unwrap();
            self.curvature.push(linalg::dot(&pi, &ui));
            self.p_weight
                .push(weighted(&pi, self.problem.multiplicity().agent_inverse(i)));
        }
    }

    pub fn step(&mut self) {
        let tuples: Vec<Vec<f64>> = self
            .curvature
            .iter()
            .zip(&self.p_weight)
            .map(|(&a, &b)| vec![a, b])
            .collect();
        let sigma = self.reducer.global_sum(&tuples).unwrap().value()[0];
        let alpha = self.eta / sigma;
        linalg::axpy(-alpha, &self.sp, &mut self.r);
        linalg::axpy(alpha, &self.p, &mut self.lambda);
        let eta_next = self.residual_sum();
        let beta = eta_next / self.eta;
        for (p, r) in self.p.iter_mut().zip(&self.r) {
            *p = r + beta * *p;
        }
        self.eta = eta_next;
        self.refresh();
        self.iteration += 1;
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn residual(&self) -> &[f64] {
        &self.r
    }

    pub fn direction(&self) -> &[f64] {
        &self.p
    }

    pub fn residual_norm(&self) -> f64 {
        self.eta.sqrt()
    }
}
