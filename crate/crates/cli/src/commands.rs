use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use dcg_core::dadmm::{log_grid, sweep_point};
use dcg_core::dcg::iterations_to_target;
use dcg_core::format::{sweep_csv, trace_csv, ProblemFile, ProblemMeta};
use dcg_core::linalg::DEFAULT_ZERO_TOL;
use dcg_core::problems::{make_topology, sensor_problem, NetworkProblem};
use dcg_core::{
    cg_solve, dadmm_solve, dcg_solve, AdmmError, AdmmOptions, CgError, CgOptions, ConvergenceTrace, DcgError,
    DcgOptions, ErrorReference, TopologyKind,
};

use crate::{GenerateArgs, MethodArg, SolveArgs, SpectrumArgs, SweepArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Generation(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn load(path: &Path) -> Result<(ProblemFile, NetworkProblem)> {
    let file = ProblemFile::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let problem = file
        .to_problem()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((file, problem))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    if args.nodes < 2 {
        return Err(CliError::Usage("--nodes must be at least 2".into()));
    }
    if args.ntheta == 0 {
        return Err(CliError::Usage("--ntheta must be at least 1".into()));
    }
    let n_y = args.ny.unwrap_or(args.ntheta);
    if n_y < args.ntheta {
        return Err(CliError::Usage(format!(
            "--ny ({n_y}) must be at least --ntheta ({})",
            args.ntheta
        )));
    }
    if !(args.noise_var >= 0.0 && args.noise_var.is_finite()) {
        return Err(CliError::Usage(format!(
            "--noise-var must be non-negative, got {}",
            args.noise_var
        )));
    }
    let extra = match (args.topology, args.edges) {
        (TopologyKind::Random, Some(e)) if e < args.nodes - 1 => {
            return Err(CliError::Usage(format!(
                "--edges ({e}) must be at least nodes - 1 ({}) for a connected graph",
                args.nodes - 1
            )))
        }
        (TopologyKind::Random, Some(e)) => e - (args.nodes - 1),
        (TopologyKind::Random, None) => {
            return Err(CliError::Usage("--edges is required for random topologies".into()))
        }
        (_, Some(_)) => return Err(CliError::Usage("--edges only applies to random topologies".into())),
        (_, None) => 0,
    };

    let topology =
        make_topology(args.topology, args.nodes, args.seed, extra).map_err(|e| CliError::Generation(e.to_string()))?;
    let edges = topology.edge_count();
    let (_, problem) = sensor_problem(topology, args.ntheta, n_y, args.noise_var, args.seed)
        .map_err(|e| CliError::Generation(e.to_string()))?;
    let stats = problem.spectral_stats(DEFAULT_ZERO_TOL).map_err(numerical)?;

    if let Some(path) = &args.output {
        let meta = ProblemMeta {
            seed: Some(args.seed),
            kind: Some(args.topology.name().to_string()),
            noise_var: Some(args.noise_var),
            n_y: Some(n_y),
        };
        let file = ProblemFile::from_problem(&problem, args.ntheta, meta);
        file.write(path)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    println!(
        "m={} edges={edges} rank={} n0={} kappa={:.6e}",
        problem.m(),
        stats.rank,
        stats.num_zero,
        stats.kappa
    );
    Ok(())
}

enum Finish {
    Converged,
    Capped,
}

pub fn solve(args: &SolveArgs) -> Result<()> {
    positive("--tol", args.tol)?;
    let (_, problem) = load(&args.problem)?;
    let m = problem.m();
    let max_iter = args.max_iter.unwrap_or(10 * m);
    let lambda0 = vec![0.0; m];
    let start = Instant::now();

    let system = problem.lambda_star().map(|_| problem.assemble_matrix());
    let mut reference = match (&system, problem.lambda_star()) {
        (Some(s), Some(star)) => {
            let mut r = ErrorReference::new(s.clone(), star.to_vec());
            if args.method != MethodArg::Dadmm {
                let kappa = problem.spectral_stats(DEFAULT_ZERO_TOL).map_err(numerical)?.kappa;
                r = r.with_kappa(kappa);
            }
            Some(r)
        }
        _ => None,
    };

    let (trace, residual, finish): (ConvergenceTrace, f64, Finish) = match args.method {
        MethodArg::Cg => {
            let s = system.unwrap_or_else(|| problem.assemble_matrix());
            let opts = CgOptions {
                tol: args.tol,
                max_iter,
            };
            match cg_solve(&s, &problem.assemble_rhs(), &lambda0, opts, reference.as_mut()) {
                Ok(o) => (o.trace, o.residual_norm, Finish::Converged),
                Err(CgError::MaxIterationsExceeded(o)) => (o.trace, o.residual_norm, Finish::Capped),
                Err(e) => return Err(numerical(e)),
            }
        }
        MethodArg::Dcg => {
            let opts = DcgOptions {
                tol: args.tol,
                max_iter,
            };
            match dcg_solve(&problem, &lambda0, opts, reference.as_mut()) {
                Ok(o) => (o.trace, o.residual_norm, Finish::Converged),
                Err(DcgError::MaxIterationsExceeded(o)) => (o.trace, o.residual_norm, Finish::Capped),
                Err(e) => return Err(numerical(e)),
            }
        }
        MethodArg::Dadmm => {
            positive("--rho", args.rho)?;
            let opts = AdmmOptions {
                rho: args.rho,
                max_iter,
                residual_target: Some(args.tol),
                ..AdmmOptions::default()
            };
            match dadmm_solve(&problem, opts, reference.as_mut()) {
                Ok(o) => (o.trace, o.residual_norm, Finish::Converged),
                Err(AdmmError::MaxIterationsExceeded(o)) => (o.trace, o.residual_norm, Finish::Capped),
                Err(e) => return Err(numerical(e)),
            }
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    if let Some(path) = &args.trace {
        write(path, &trace_csv(&trace))?;
    }
    let comm = trace.last().map(|r| r.comm).unwrap_or_default();
    let note = match finish {
        Finish::Converged => String::new(),
        Finish::Capped => format!(" (hit iteration cap {max_iter})"),
    };
    println!(
        "method={} iterations={} residual={residual:.6e} global_sums={} neighbor_msgs={} time={elapsed:.3}s{note}",
        trace.method,
        trace.iterations(),
        comm.global_sum_invocations,
        comm.neighbor_messages
    );
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    positive("--rho-min", args.rho_min)?;
    positive("--rho-max", args.rho_max)?;
    positive("--target", args.target)?;
    if args.rho_max < args.rho_min {
        return Err(CliError::Usage("--rho-max must not be below --rho-min".into()));
    }
    if args.points == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    let (_, problem) = load(&args.problem)?;
    let max_iter = args.max_iter.unwrap_or(10 * problem.m());
    let grid = log_grid(args.rho_min, args.rho_max, args.points);

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    let points = pool.install(|| {
        grid.par_iter()
            .map(|&rho| sweep_point(&problem, rho, args.target, max_iter))
            .collect::<Vec<_>>()
    });
    let (dcg_iters, dcg_res) = iterations_to_target(&problem, args.target, max_iter).map_err(numerical)?;

    let csv = sweep_csv(&points, dcg_iters, dcg_res);
    match &args.output {
        Some(path) => {
            write(path, &csv)?;
            let best = points
                .iter()
                .filter(|p| !p.hit_cap && p.error.is_none())
                .min_by_key(|p| p.iterations);
            match best {
                Some(b) => println!(
                    "dcg iterations={dcg_iters}; best dadmm iterations={} at rho={:.6e}",
                    b.iterations, b.rho
                ),
                None => println!("dcg iterations={dcg_iters}; no dadmm point reached the target"),
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn spectrum(args: &SpectrumArgs) -> Result<()> {
    let (_, problem) = load(&args.problem)?;
    let stats = problem.spectral_stats(DEFAULT_ZERO_TOL).map_err(numerical)?;
    println!("m={}", problem.m());
    println!("rank={}", stats.rank);
    println!("n0={}", stats.num_zero);
    println!("omega_min={:.6e}", stats.omega_min_nonzero);
    println!("omega_max={:.6e}", stats.omega_max);
    println!("kappa={:.6e}", stats.kappa);
    println!("contraction={:.6e}", stats.contraction_factor());
    if args.eigenvalues {
        for (k, w) in stats.eigenvalues.iter().enumerate() {
            println!("eigenvalue[{k}]={w:e}");
        }
    }
    if let Some(path) = &args.output {
        let mut csv = String::from("index,eigenvalue\n");
        for (k, w) in stats.eigenvalues.iter().enumerate() {
            csv.push_str(&format!("{k},{w:e}\n"));
        }
        write(path, &csv)?;
    }
    Ok(())
}
