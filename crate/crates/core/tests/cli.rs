use std::fs;
use std::path::Path;
use std::process::Command;

use tomocg::cli::cli_main;
use tomocg::experiment::read_trials;
use tomocg::io::{read_coarse_counts, read_counts, read_operator, read_setup};
use tomocg::qops::{purity, DensityMatrix};

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("tomocg").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let pom = tmp.path().join("pom");
    let sim = tmp.path().join("sim");
    assert_eq!(run(&["gen-povm", "--m-well", "2", "--seed", "9", "--out", p(&pom)]), 0);
    let setup = read_setup(&pom).unwrap();
    assert_eq!((setup.dim, setup.m_total, setup.m_well), (4, 16, 2));

    assert_eq!(
        run(&["simulate", "--povm", p(&pom), "--mu", "0.3", "--n-copies", "4000", "--seed", "3", "--out", p(&sim)]),
        0
    );
    let counts = read_counts(&sim.join("counts.csv")).unwrap();
    assert_eq!(counts.total(), 4000);
    assert_eq!(counts.well.len(), 2);
    let truth = DensityMatrix::from_matrix(read_operator(&sim.join("true_state.txt")).unwrap()).unwrap();
    assert!((purity(&truth) - 1.0).abs() < 1e-10);

    let coarse = sim.join("coarse.csv");
    assert_eq!(run(&["mwe", "--counts", p(&sim.join("counts.csv")), "--out", p(&coarse)]), 0);
    let cg = read_coarse_counts(&coarse).unwrap();
    let total: f64 = cg.well.iter().chain(&cg.ill).sum();
    assert!((total - 4000.0).abs() < 1e-6);

    let estimate = |strategy: &str, out: &Path| {
        run(&[
            "estimate",
            "--povm",
            p(&sim.join("setup")),
            "--counts",
            p(&sim.join("counts.csv")),
            "--strategy",
            strategy,
            "--out",
            p(out),
        ])
    };
    // Two rank-one outcomes span a singular outcome sum.
    assert_ne!(estimate("2", &sim.join("rho_2.txt")), 0);
    for strategy in ["1", "3", "ref"] {
        let out = sim.join(format!("rho_{strategy}.txt"));
        assert_eq!(estimate(strategy, &out), 0, "strategy {strategy}");
        let rho = DensityMatrix::from_matrix(read_operator(&out).unwrap()).unwrap();
        assert!((rho.op().trace() - 1.0).abs() < 1e-10);
        assert!(fs::read_to_string(&out).unwrap().contains("converged=true"));
    }
}

#[test]
fn run_and_summarize() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("campaign.cfg");
    fs::write(
        &cfg,
        "# tiny campaign\nn_states = 2\nn_experiments = 2\nmu_list = 0.0, 0.3\ngamma_list = 0.0\nn_copies = 2000\nmaster_seed = 5\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&["run", "--config", p(&cfg), "--out", p(&out)]), 0);
    let trials = read_trials(fs::File::open(out.join("trials.csv")).unwrap()).unwrap();
    assert_eq!(trials.len(), 2 * 2 * 2);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let again = tmp.path().join("summary2.csv");
    assert_eq!(run(&["summarize", "--trials", p(&out.join("trials.csv")), "--out", p(&again)]), 0);
    assert_eq!(fs::read_to_string(again).unwrap(), summary);
}

#[test]
fn bad_input_fails_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ne!(run(&["estimate", "--povm", p(&tmp.path().join("missing")), "--counts", "nope.csv"]), 0);
    assert_ne!(run(&["simulate", "--povm", "x", "--mu", "not-a-number", "--out", "y"]), 0);
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "mu_list = 0.1, 1.5\n").unwrap();
    assert_ne!(run(&["run", "--config", p(&cfg), "--out", p(tmp.path())]), 0);
    assert_ne!(run(&["no-such-command"]), 0);
}

#[test]
fn binary_prints_help() {
    let out = Command::new(env!("CARGO_BIN_EXE_tomocg")).arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["gen-povm", "simulate", "mwe", "estimate", "run", "summarize"] {
        assert!(text.contains(sub));
    }
    let bad = Command::new(env!("CARGO_BIN_EXE_tomocg")).arg("estimate").output().unwrap();
    assert!(!bad.status.success());
}
