//! End-to-end runs of the `ctmcgp` binary: the simulate → infer pipeline,
//! grad-check and bench outputs, and the documented exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctmcgp"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ctmcgp-e2e-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &PathBuf, content: &str) {
    std::fs::write(path, content).unwrap();
}

#[test]
fn simulate_then_infer_pipeline() {
    let dir = workdir("pipeline");
    let sim_out = dir.join("sim");
    let sim_cfg = dir.join("sim.cfg");
    write(
        &sim_cfg,
        &format!(
            "regime = tree\nstates = 3\ntree_tips = 12\ntree_height = 3\n\
             covariate_gen = l1\nseed = 5\nout = {}\n",
            sim_out.display()
        ),
    );
    let status = bin().args(["simulate", "--config", sim_cfg.to_str().unwrap()]).status().unwrap();
    assert!(status.success());
    for f in ["tree.nwk", "tips.csv", "theta_true.csv", "rates_true.csv", "covariate_x.csv"] {
        assert!(sim_out.join(f).exists(), "missing {f}");
    }

    let infer_out = dir.join("infer");
    let infer_cfg = dir.join("infer.cfg");
    write(
        &infer_cfg,
        &format!(
            "regime = tree\nstates = 3\ntree = {t}\ntips = {d}\ncovariates = {c}\n\
             truth_csv = {th}\nwarmup = 150\niterations = 300\nleapfrog = 8\n\
             step_size = 0.2\nseed = 6\nout = {o}\n",
            t = sim_out.join("tree.nwk").display(),
            d = sim_out.join("tips.csv").display(),
            c = sim_out.join("covariate_x.csv").display(),
            th = sim_out.join("theta_true.csv").display(),
            o = infer_out.display()
        ),
    );
    let out = bin().args(["infer", "--config", infer_cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let samples = std::fs::read_to_string(infer_out.join("samples.csv")).unwrap();
    let header_cols = samples.lines().next().unwrap().split(',').count();
    // 2 + 2 hypers (one covariate) + S²−S
    assert_eq!(header_cols, 2 + 2 + 6);
    assert_eq!(samples.lines().count(), 1 + 300);
    assert!(infer_out.join("summary.csv").exists());
    assert!(infer_out.join("rmse.csv").exists());

    // flags override the config file: a different seed changes the samples
    let out2 = bin()
        .args(["infer", "--config", infer_cfg.to_str().unwrap(), "--seed", "7"])
        .output()
        .unwrap();
    assert!(out2.status.success());
    let samples2 = std::fs::read_to_string(infer_out.join("samples.csv")).unwrap();
    assert_ne!(samples, samples2);
}

#[test]
fn bench_emits_points_and_slopes() {
    let dir = workdir("bench");
    let cfg = dir.join("bench.cfg");
    write(
        &cfg,
        &format!(
            "bench_states = 4,8,16\nbench_methods = approx\nbench_reps = 5\n\
             bench_tips = 10\nseed = 3\nout = {}\n",
            dir.join("out").display()
        ),
    );
    let out = bin().args(["bench", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let points = std::fs::read_to_string(dir.join("out/bench.csv")).unwrap();
    assert_eq!(points.lines().count(), 1 + 3);
    let slopes = std::fs::read_to_string(dir.join("out/bench_slopes.csv")).unwrap();
    assert!(slopes.lines().nth(1).unwrap().starts_with("approx,"));
}

#[test]
fn input_errors_exit_with_code_1() {
    let status = bin()
        .args(["infer", "--config", "/nonexistent/config.cfg"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn numerical_abort_exits_with_code_2() {
    // impossible tips under a one-hot root on zero branches: the initial
    // log-posterior is -inf and the chain refuses to start
    let dir = workdir("numeric");
    write(&dir.join("tree.nwk"), "(A:0.0,B:0.0);\n");
    write(&dir.join("tips.csv"), "taxon,state\nA,1\nB,2\n");
    write(&dir.join("cov.csv"), "from,to,value\n1,2,0.0\n2,1,1.0\n");
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!(
            "regime = tree\nstates = 2\ntree = {t}\ntips = {d}\ncovariates = {c}\n\
             root_dist = 1,0\nwarmup = 10\niterations = 10\nout = {o}\n",
            t = dir.join("tree.nwk").display(),
            d = dir.join("tips.csv").display(),
            c = dir.join("cov.csv").display(),
            o = dir.join("out").display()
        ),
    );
    let out = bin().args(["infer", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn guard_refusals_exit_with_code_3() {
    let dir = workdir("guard");
    let cfg = dir.join("gc.cfg");
    write(
        &cfg,
        &format!(
            "regime = tree\nstates = 20\ntree_tips = 3\nout = {}\n",
            dir.join("out").display()
        ),
    );
    let out = bin()
        .args(["grad-check", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn polytomy_parse_error_exits_with_code_1() {
    let dir = workdir("polytomy");
    write(&dir.join("tree.nwk"), "(A:1,B:1,C:1);\n");
    write(&dir.join("tips.csv"), "taxon,state\nA,1\nB,2\nC,1\n");
    write(&dir.join("cov.csv"), "from,to,value\n1,2,0.0\n2,1,1.0\n");
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!(
            "regime = tree\nstates = 2\ntree = {t}\ntips = {d}\ncovariates = {c}\nout = {o}\n",
            t = dir.join("tree.nwk").display(),
            d = dir.join("tips.csv").display(),
            c = dir.join("cov.csv").display(),
            o = dir.join("out").display()
        ),
    );
    let out = bin().args(["infer", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
}
