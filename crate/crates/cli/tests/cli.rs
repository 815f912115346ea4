use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcg"))
        .args(args)
        .output()
        .expect("spawn dcg")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Value of `key=` in whitespace- or line-separated output.
fn field(text: &str, key: &str) -> String {
    text.split_whitespace()
        .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text:?}"))
        .to_string()
}

fn generate(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut all = vec!["generate"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["-o", path.to_str().unwrap()]);
    let out = dcg(&all);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn write_problem(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

// Three nodes on a path with unit measurements: S = [[2,-1],[-1,2]].
const PATH3_UNIT: &str = r#"{
  "m": 2,
  "topology": {"nodes": 3, "edges": [[0, 1], [1, 2]]},
  "ntheta": 1,
  "agents": [
    {"id": 0, "support": [0], "S_hat": [1.0], "s_hat": [-1.0]},
    {"id": 1, "support": [0, 1], "S_hat": [1.0, -1.0, -1.0, 1.0], "s_hat": [-2.0, 2.0]},
    {"id": 2, "support": [1], "S_hat": [1.0], "s_hat": [-3.0]}
  ],
  "meta": {"seed": null, "kind": "path", "noise_var": null}
}"#;

#[test]
fn generate_reports_rank_and_kernel_dimension() {
    let out = dcg(&[
        "generate",
        "--topology",
        "strong-mesh",
        "--nodes",
        "10",
        "--ntheta",
        "10",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(field(&text, "m"), "240");
    assert_eq!(field(&text, "edges"), "24");
    assert_eq!(field(&text, "rank"), "90");
    assert_eq!(field(&text, "n0"), "150");

    let out = dcg(&[
        "generate",
        "--topology",
        "path",
        "--nodes",
        "10",
        "--ntheta",
        "10",
        "--seed",
        "1",
    ]);
    assert_eq!(field(&stdout(&out), "rank"), "90");
    assert_eq!(field(&stdout(&out), "n0"), "0");

    let out = dcg(&[
        "generate",
        "--topology",
        "random",
        "--nodes",
        "200",
        "--edges",
        "300",
        "--seed",
        "7",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(field(&stdout(&out), "edges"), "300");
}

#[test]
fn problem_file_schema() {
    let dir = TempDir::new().unwrap();
    let path = generate(
        dir.path(),
        "p.json",
        &[
            "--topology",
            "star",
            "--nodes",
            "4",
            "--ntheta",
            "2",
            "--ny",
            "3",
            "--seed",
            "5",
        ],
    );
    let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["m"], 6);
    assert_eq!(v["ntheta"], 2);
    assert_eq!(v["topology"]["nodes"], 4);
    assert_eq!(v["topology"]["edges"].as_array().unwrap().len(), 3);
    let agents = v["agents"].as_array().unwrap();
    assert_eq!(agents.len(), 4);
    for a in agents {
        let k = a["support"].as_array().unwrap().len();
        assert_eq!(a["S_hat"].as_array().unwrap().len(), k * k);
        assert_eq!(a["s_hat"].as_array().unwrap().len(), k);
    }
    assert_eq!(v["lambda_star"].as_array().unwrap().len(), 6);
    assert_eq!(v["meta"]["seed"], 5);
    assert_eq!(v["meta"]["kind"], "star");
    assert_eq!(v["meta"]["noise_var"], 1e-3);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let args = [
        "--topology",
        "weak-mesh",
        "--nodes",
        "6",
        "--ntheta",
        "2",
        "--ny",
        "6",
        "--seed",
        "3",
    ];
    let a = generate(dir.path(), "a.json", &args);
    let b = generate(dir.path(), "b.json", &args);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    for method in ["cg", "dcg", "dadmm"] {
        let mut traces = Vec::new();
        for run in 0..2 {
            let t = dir.path().join(format!("{method}{run}.csv"));
            let out = dcg(&[
                "solve",
                "--method",
                method,
                "--problem",
                a.to_str().unwrap(),
                "--rho",
                "0.3",
                "--trace",
                t.to_str().unwrap(),
            ]);
            assert_eq!(code(&out), 0);
            traces.push(fs::read(&t).unwrap());
        }
        assert_eq!(traces[0], traces[1], "{method}");
    }

    let mut sweeps = Vec::new();
    for threads in ["1", "3"] {
        let s = dir.path().join(format!("sweep{threads}.csv"));
        let out = dcg(&[
            "sweep",
            "--problem",
            a.to_str().unwrap(),
            "--points",
            "6",
            "--threads",
            threads,
            "-o",
            s.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        sweeps.push(fs::read(&s).unwrap());
    }
    assert_eq!(sweeps[0], sweeps[1]);
}

#[test]
fn central_and_decentralized_cg_take_the_same_iterations() {
    let dir = TempDir::new().unwrap();
    let p = generate(
        dir.path(),
        "p.json",
        &[
            "--topology",
            "strong-mesh",
            "--nodes",
            "8",
            "--ntheta",
            "2",
            "--ny",
            "20",
            "--seed",
            "2",
        ],
    );
    let rank: usize = field(&stdout(&dcg(&["spectrum", "--problem", p.to_str().unwrap()])), "rank")
        .parse()
        .unwrap();
    let cg = stdout(&dcg(&[
        "solve",
        "--method",
        "cg",
        "--problem",
        p.to_str().unwrap(),
        "--tol",
        "1e-5",
    ]));
    let dist = stdout(&dcg(&[
        "solve",
        "--method",
        "dcg",
        "--problem",
        p.to_str().unwrap(),
        "--tol",
        "1e-5",
    ]));
    let n: usize = field(&dist, "iterations").parse().unwrap();
    assert_eq!(field(&cg, "iterations"), n.to_string());
    assert!(n <= rank, "{n} > {rank}");
    assert_eq!(field(&dist, "global_sums"), (2 * n + 1).to_string());
}

#[test]
fn trace_columns() {
    let dir = TempDir::new().unwrap();
    let p = generate(
        dir.path(),
        "p.json",
        &[
            "--topology",
            "path",
            "--nodes",
            "4",
            "--ntheta",
            "1",
            "--ny",
            "4",
            "--seed",
            "1",
        ],
    );
    for (method, has_bound) in [("dcg", true), ("cg", true), ("dadmm", false)] {
        let t = dir.path().join(format!("{method}.csv"));
        let out = dcg(&[
            "solve",
            "--method",
            method,
            "--problem",
            p.to_str().unwrap(),
            "--trace",
            t.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        let text = fs::read_to_string(&t).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,iter,residual_norm,seminorm_error,bound,global_sums,neighbor_msgs,rounds"
        );
        for (k, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 8);
            assert_eq!(cols[0], method);
            assert_eq!(cols[1], k.to_string());
            assert!(!cols[3].is_empty());
            assert_eq!(!cols[4].is_empty(), has_bound, "{line}");
            if has_bound {
                let (e, b): (f64, f64) = (cols[3].parse().unwrap(), cols[4].parse().unwrap());
                assert!(e * e <= b * b + 1e-9, "{line}");
            }
        }
    }
}

#[test]
fn admm_cap_is_reported_not_fatal() {
    let dir = TempDir::new().unwrap();
    let p = generate(
        dir.path(),
        "p.json",
        &["--topology", "star", "--nodes", "5", "--seed", "1"],
    );
    let out = dcg(&[
        "solve",
        "--method",
        "dadmm",
        "--problem",
        p.to_str().unwrap(),
        "--rho",
        "1.0",
        "--max-iter",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("hit iteration cap 3"));
    assert_eq!(field(&stdout(&out), "global_sums"), "0");
}

#[test]
fn sweep_rows_and_reference() {
    let dir = TempDir::new().unwrap();
    let p = generate(
        dir.path(),
        "p.json",
        &[
            "--topology",
            "star",
            "--nodes",
            "10",
            "--ntheta",
            "10",
            "--ny",
            "100",
            "--seed",
            "1",
        ],
    );
    let s = dir.path().join("s.csv");
    let out = dcg(&[
        "sweep",
        "--problem",
        p.to_str().unwrap(),
        "--rho-min",
        "1e-2",
        "--rho-max",
        "1e2",
        "--points",
        "20",
        "-o",
        s.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&s).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 21);
    let dcg_row = rows.last().unwrap();
    assert_eq!(dcg_row[0], "dcg");
    let dcg_iters: usize = dcg_row[2].parse().unwrap();
    let best = rows[..20]
        .iter()
        .filter(|r| r[4] == "false")
        .map(|r| r[2].parse::<usize>().unwrap())
        .min()
        .unwrap();
    assert!(dcg_iters < best, "{dcg_iters} vs {best}");
    assert!(
        rows[..20].iter().any(|r| r[4] == "true"),
        "extreme penalties should hit the cap"
    );

    let out = dcg(&[
        "sweep",
        "--problem",
        p.to_str().unwrap(),
        "--rho-min",
        "0.5",
        "--rho-max",
        "0.5",
        "--points",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("dadmm,5e-1,"));
}

#[test]
fn spectrum_of_hand_built_problems() {
    let dir = TempDir::new().unwrap();
    let p = write_problem(dir.path(), "path3.json", PATH3_UNIT);
    let e = dir.path().join("eig.csv");
    let out = dcg(&[
        "spectrum",
        "--problem",
        p.to_str().unwrap(),
        "--eigenvalues",
        "-o",
        e.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let eig: Vec<f64> = fs::read_to_string(&e)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(eig.len(), 2);
    assert!((eig[0] - 1.0).abs() < 1e-12 && (eig[1] - 3.0).abs() < 1e-12);
    let factor: f64 = field(&text, "contraction").parse().unwrap();
    let expected = (3f64.sqrt() - 1.0) / (3f64.sqrt() + 1.0);
    assert!((factor - expected).abs() < 1e-6);
    assert_eq!(field(&text, "n0"), "0");

    let single = r#"{"m": 2, "topology": {"nodes": 1, "edges": []}, "ntheta": 1,
        "agents": [{"id": 0, "support": [0, 1], "S_hat": [1.0, 0.0, 0.0, 1.0], "s_hat": [1.0, 1.0]}]}"#;
    let p = write_problem(dir.path(), "single.json", single);
    let text = stdout(&dcg(&["spectrum", "--problem", p.to_str().unwrap()]));
    assert_eq!(field(&text, "kappa").parse::<f64>().unwrap(), 1.0);
    assert_eq!(field(&text, "contraction").parse::<f64>().unwrap(), 0.0);

    let out = dcg(&[
        "generate",
        "--topology",
        "strong-mesh",
        "--nodes",
        "10",
        "--seed",
        "1",
        "-o",
        dir.path().join("s.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&dcg(&[
        "spectrum",
        "--problem",
        dir.path().join("s.json").to_str().unwrap(),
    ]));
    assert!(field(&text, "n0").parse::<usize>().unwrap() > 0);
}

#[test]
fn hand_built_path_solves_exactly() {
    let dir = TempDir::new().unwrap();
    let p = write_problem(dir.path(), "path3.json", PATH3_UNIT);
    let out = dcg(&[
        "solve",
        "--method",
        "dcg",
        "--problem",
        p.to_str().unwrap(),
        "--tol",
        "1e-12",
    ]);
    assert_eq!(code(&out), 0);
    assert!(field(&stdout(&out), "iterations").parse::<usize>().unwrap() <= 2);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    // Usage errors.
    assert_eq!(code(&dcg(&["generate", "--topology", "ring", "--nodes", "4"])), 2);
    assert_eq!(
        code(&dcg(&[
            "generate",
            "--topology",
            "path",
            "--nodes",
            "4",
            "--edges",
            "5"
        ])),
        2
    );
    assert_eq!(
        code(&dcg(&[
            "generate",
            "--topology",
            "path",
            "--nodes",
            "4",
            "--ntheta",
            "3",
            "--ny",
            "2"
        ])),
        2
    );
    assert_eq!(code(&dcg(&["generate", "--topology", "random", "--nodes", "4"])), 2);
    assert_eq!(
        code(&dcg(&[
            "solve",
            "--method",
            "dcg",
            "--problem",
            d.join("missing.json").to_str().unwrap()
        ])),
        2
    );
    let bad = write_problem(d, "bad.json", "{\"m\": 2,");
    assert_eq!(
        code(&dcg(&["solve", "--method", "dcg", "--problem", bad.to_str().unwrap()])),
        2
    );
    let wrong = write_problem(
        d,
        "wrong.json",
        &PATH3_UNIT.replace("[1.0, -1.0, -1.0, 1.0]", "[1.0, -1.0, -1.0]"),
    );
    assert_eq!(code(&dcg(&["spectrum", "--problem", wrong.to_str().unwrap()])), 2);
    let good = write_problem(d, "good.json", PATH3_UNIT);
    assert_eq!(
        code(&dcg(&[
            "solve",
            "--method",
            "dadmm",
            "--problem",
            good.to_str().unwrap(),
            "--rho",
            "-1"
        ])),
        2
    );
    assert_eq!(
        code(&dcg(&["sweep", "--problem", good.to_str().unwrap(), "--points", "0"])),
        2
    );
    assert_eq!(
        code(&dcg(&["solve", "--method", "sor", "--problem", good.to_str().unwrap()])),
        2
    );

    // Generation failure: more edges than the complete graph holds.
    assert_eq!(
        code(&dcg(&[
            "generate",
            "--topology",
            "random",
            "--nodes",
            "5",
            "--edges",
            "11"
        ])),
        3
    );

    // Numerical failure: right-hand side outside the range of S.
    let inconsistent = r#"{"m": 2, "topology": {"nodes": 1, "edges": []}, "ntheta": 1,
        "agents": [{"id": 0, "support": [0, 1], "S_hat": [1.0, 0.0, 0.0, 0.0], "s_hat": [0.0, 1.0]}]}"#;
    let p = write_problem(d, "inconsistent.json", inconsistent);
    for method in ["cg", "dcg"] {
        let out = dcg(&["solve", "--method", method, "--problem", p.to_str().unwrap()]);
        assert_eq!(code(&out), 4, "{method}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("curvature"));
    }
}

#[test]
fn trace_without_reference_leaves_error_blank() {
    let dir = TempDir::new().unwrap();
    let p = write_problem(dir.path(), "path3.json", PATH3_UNIT);
    let t = dir.path().join("t.csv");
    let out = dcg(&[
        "solve",
        "--method",
        "dcg",
        "--problem",
        p.to_str().unwrap(),
        "--trace",
        t.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    for line in fs::read_to_string(&t).unwrap().lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!((cols[3], cols[4]), ("", ""), "{line}");
    }
}
