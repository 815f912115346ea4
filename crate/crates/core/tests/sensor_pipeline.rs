use dcg_core::dcg::{dcg_solve, DcgOptions};
use dcg_core::format::{ProblemFile, ProblemMeta};
use dcg_core::linalg::{self, DenseMatrix};
use dcg_core::problems::{make_topology, schur_from_kkt, sensor_problem, verify_range, SensorNetwork, TopologyKind};
use dcg_core::simnet::Topology;

#[test]
fn file_round_trip_then_solve_recovers_least_squares_estimate() {
    let topology = make_topology(TopologyKind::WeakMesh, 8, 3, 0).unwrap();
    let (net, problem) = sensor_problem(topology, 3, 12, 1e-3, 3).unwrap();
    let meta = ProblemMeta {
        seed: Some(3),
        kind: Some("weak-mesh".into()),
        noise_var: Some(1e-3),
        n_y: Some(12),
    };
    let text = ProblemFile::from_problem(&problem, 3, meta).to_json();
    let loaded = ProblemFile::from_json(&text).unwrap().to_problem().unwrap();
    assert_eq!(loaded.lambda_star(), problem.lambda_star());

    let out = dcg_solve(
        &loaded,
        &vec![0.0; loaded.m()],
        DcgOptions {
            tol: 1e-12,
            max_iter: 500,
        },
        None,
    )
    .unwrap();
    let ls = net.centralized_estimate().unwrap();
    for theta in net.back_substitute(&out.lambda_bar).unwrap() {
        assert!(linalg::norm(&linalg::sub(&theta, &ls)) < 1e-8);
    }
    // Small noise keeps the estimate close to the generating parameters.
    assert!(linalg::norm(&linalg::sub(&ls, net.theta_true())) < 0.5);
}

#[test]
fn kkt_reduction_reproduces_direct_assembly() {
    for kind in TopologyKind::ALL_FIXED {
        let topology = make_topology(kind, 6, 1, 0).unwrap();
        let net = SensorNetwork::generate(topology, 2, 4, 1e-3, 9).unwrap();
        let direct = net.to_problem().unwrap();
        let reduced = schur_from_kkt(&net.kkt_blocks()).unwrap();
        let (a, b) = (direct.assemble_matrix(), reduced.assemble_matrix());
        assert!(a.sub(&b).max_abs() <= 1e-12 * a.max_abs(), "{kind}");
        let (sa, sb) = (direct.assemble_rhs(), reduced.assemble_rhs());
        assert!(
            linalg::norm(&linalg::sub(&sa, &sb)) <= 1e-12 * linalg::norm(&sa).max(1.0),
            "{kind}"
        );
    }
}

#[test]
fn right_hand_side_lies_in_range() {
    for kind in TopologyKind::ALL_FIXED {
        let topology = make_topology(kind, 10, 5, 0).unwrap();
        let (_, problem) = sensor_problem(topology, 2, 2, 1e-3, 5).unwrap();
        assert!(verify_range(&problem, 1e-9).unwrap(), "{kind}");
    }
}

#[test]
fn exact_data_gives_exact_parameters() {
    let topology = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
    let theta = vec![0.5, -1.25];
    let measurements: Vec<DenseMatrix> = (0..3)
        .map(|i| DenseMatrix::from_fn(3, 2, |r, c| 1.0 + ((i + r * 2 + c) % 4) as f64))
        .collect();
    let observations: Vec<Vec<f64>> = measurements.iter().map(|m| m.mul_vec(&theta)).collect();
    let net = SensorNetwork::from_parts(topology, measurements, observations, theta.clone(), 0.0).unwrap();
    let problem = net.to_problem().unwrap();
    let out = dcg_solve(&problem, &vec![0.0; problem.m()], DcgOptions::default(), None).unwrap();
    for est in net.back_substitute(&out.lambda_bar).unwrap() {
        assert!(linalg::norm(&linalg::sub(&est, &theta)) < 1e-9);
    }
}
