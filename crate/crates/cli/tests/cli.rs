use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fsagp::inducing::{select, InducingMethod};
use fsagp::kernels::{cross_cov, CovParams, KernelSpec, LocationSet};
use fsagp::linalg::{dot, Cholesky, DenseMatrix};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fsagp"));
    c.env_remove("FSAGP_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Header and rows of a plain comma-separated file.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = table(path);
    let k = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn toml_value(path: &Path, key: &str) -> toml::Value {
    let v: toml::Table = std::fs::read_to_string(path).unwrap().parse().unwrap();
    v[key].clone()
}

fn toml_f64(path: &Path, key: &str) -> f64 {
    toml_value(path, key).as_float().unwrap()
}

fn simulate(dir: &Path, name: &str, n: usize, extra: &[&str]) -> PathBuf {
    let out = p(dir, name);
    let n = n.to_string();
    let mut args = vec!["simulate", "--out", s(&out), "--n", &n];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn simulate_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv", 300, &["--seed", "5", "--set", "simulate.test_fraction=0.2"]);
    let b = simulate(dir.path(), "b.csv", 300, &["--seed", "5", "--set", "simulate.test_fraction=0.2"]);
    let c = simulate(dir.path(), "c.csv", 300, &["--seed", "6"]);
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert_ne!(text, std::fs::read(&c).unwrap());

    let (h, rows) = table(&a);
    assert_eq!(h, ["x1", "x2", "y", "split"]);
    assert_eq!(rows.len(), 300);
    assert_eq!(rows.iter().filter(|r| r[3] == "test").count(), 60);
    for r in &rows {
        for v in &r[..3] {
            let x: f64 = v.parse().unwrap();
            assert_eq!(format!("{x:.16e}"), *v, "values carry 17 significant digits");
        }
    }
}

#[test]
fn variogram_has_twenty_bins_and_a_monotone_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    let vg = p(dir.path(), "v.csv");
    ok(&["simulate", "--out", s(&data), "--n", "600", "--variogram", s(&vg)]);
    let (h, rows) = table(&vg);
    assert_eq!(h, ["distance", "empirical", "model", "pairs"]);
    assert_eq!(rows.len(), 20);
    let model = column(&vg, "model");
    assert!(model.windows(2).all(|w| w[1] >= w[0] - 1e-12), "model semivariogram is nondecreasing");
    assert!(column(&vg, "empirical").iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn too_large_dense_simulation_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--out", s(&p(dir.path(), "x.csv")), "--n", "30000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("20000"));
}

#[test]
fn schema_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let no_y = p(dir.path(), "no_y.csv");
    std::fs::write(&no_y, "x1,x2\n0.1,0.2\n0.3,0.4\n").unwrap();
    let out = run(&["fit", "--data", s(&no_y), "--out", s(&p(dir.path(), "f.toml"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'y'"));

    let cfg = p(dir.path(), "c.toml");
    std::fs::write(&cfg, "[model]\nm = 10\nbogus = 1\n").unwrap();
    let out = run(&["--config", s(&cfg), "simulate", "--out", s(&p(dir.path(), "x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = run(&["simulate", "--out", s(&p(dir.path(), "x.csv")), "--set", "cg.tol=-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["--threads", "0", "simulate", "--out", s(&p(dir.path(), "x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

fn without_timing(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let (head, tail) = text.split_once("[timing]").expect("timing table");
    assert_eq!(tail.trim().lines().count(), 1, "timing is the last table");
    head.to_string()
}

const FIT_ARGS: [&str; 4] = ["--set", "model.m=20", "--set", "fit.max_evals=60"];

#[test]
fn fit_is_reproducible_and_backends_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 400, &[]);
    let fit = |name: &str, backend: &str| {
        let out = p(dir.path(), name);
        let mut args = vec!["fit", "--data", s(&data), "--out", s(&out), "--backend", backend, "--seed", "3"];
        args.extend_from_slice(&FIT_ARGS);
        ok(&args);
        out
    };
    let c1 = fit("c1.toml", "cholesky");
    let c2 = fit("c2.toml", "cholesky");
    assert_eq!(without_timing(&c1), without_timing(&c2));
    let it = fit("it.toml", "iterative");
    assert_eq!(toml_value(&it, "backend").as_str(), Some("iterative"));
    for key in ["sigma2", "sigma1_2", "rho"] {
        let (a, b) = (toml_f64(&c1, key), toml_f64(&it, key));
        assert!((a - b).abs() <= 0.1 * a.abs(), "{key}: cholesky {a} vs iterative {b}");
    }
    let (a, b) = (toml_f64(&c1, "nll"), toml_f64(&it, "nll"));
    assert!((a - b).abs() <= 1e-2 * a.abs(), "nll: {a} vs {b}");
}

#[test]
fn predict_produces_full_outputs_for_each_variance_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 400, &["--set", "simulate.test_fraction=0.25"]);
    let fit = p(dir.path(), "f.toml");
    let mut args = vec!["fit", "--data", s(&data), "--out", s(&fit)];
    args.extend_from_slice(&FIT_ARGS);
    ok(&args);

    let mut means = Vec::new();
    for (method, backend) in [("exact", "cholesky"), ("sim", "iterative"), ("lanczos", "iterative")] {
        let out = p(dir.path(), &format!("{method}.csv"));
        let scores = p(dir.path(), &format!("{method}.toml"));
        ok(&[
            "predict",
            "--fit",
            s(&fit),
            "--train",
            s(&data),
            "--test",
            s(&data),
            "--out",
            s(&out),
            "--scores",
            s(&scores),
            "--var-method",
            method,
            "--mean-backend",
            backend,
            "--set",
            "predict.num_probes=100",
            "--set",
            "predict.lanczos_rank=50",
        ]);
        let (h, rows) = table(&out);
        assert_eq!(h, ["x1", "x2", "mean", "var"]);
        assert_eq!(rows.len(), 100, "{method}");
        let var = column(&out, "var");
        assert!(var.iter().all(|v| v.is_finite() && *v > 0.0), "{method}");
        assert_eq!(toml_value(&scores, "n_p").as_integer(), Some(100));
        for key in ["rmse", "log_score", "crps"] {
            assert!(toml_f64(&scores, key).is_finite(), "{method} {key}");
        }
        means.push(column(&out, "mean"));
    }
    for m in &means[1..] {
        let diff = m.iter().zip(&means[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-3, "iterative mean differs from Cholesky by {diff}");
    }
}

#[test]
fn predicting_training_points_with_small_noise_interpolates() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 300, &["--set", "params.sigma2=1e-4"]);
    let fit = p(dir.path(), "f.toml");
    // the fit file fixes every parameter the prediction reads
    let text = format!(
        "nu = 1.5\nm = 30\ninducing = \"kmeans++\"\ninducing_seed = 0\ntaper_gamma = {}\nintercept = false\n\
         covariates = []\nsigma2 = 1e-4\nsigma1_2 = 1.0\nrho = 0.0730227771410512\nbeta = []\n",
        0.1
    );
    std::fs::write(&fit, text).unwrap();
    let out = p(dir.path(), "pred.csv");
    ok(&["predict", "--fit", s(&fit), "--train", s(&data), "--test", s(&data), "--out", s(&out)]);
    let y = column(&data, "y");
    let mean = column(&out, "mean");
    let var = column(&out, "var");
    let worst = y.iter().zip(&mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.05, "max |y - mean| = {worst}");
    assert!(var.iter().all(|v| *v < 2e-4 + 1e-3), "latent variance is near zero at the data");
}

#[test]
fn predict_rejects_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 200, &[]);
    let fit = p(dir.path(), "f.toml");
    let mut args = vec!["fit", "--data", s(&data), "--out", s(&fit)];
    args.extend_from_slice(&FIT_ARGS);
    ok(&args);
    let test = p(dir.path(), "t3.csv");
    std::fs::write(&test, "x1,x2,x3\n0.1,0.2,0.3\n").unwrap();
    let out = run(&["predict", "--fit", s(&fit), "--train", s(&data), "--test", s(&test), "--out", s(&p(dir.path(), "o.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_fitc_is_exact_when_the_taper_is_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "b.csv");
    let md = p(dir.path(), "b.md");
    ok(&[
        "bench-precond",
        "--out",
        s(&out),
        "--markdown",
        s(&md),
        "--set",
        "bench.n=[600]",
        "--set",
        "bench.m=[30]",
        "--set",
        "bench.n_gamma=[1, 10]",
    ]);
    let (h, rows) = table(&out);
    assert_eq!(h.len(), 11);
    assert_eq!(rows.len(), 4);
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    for r in &rows {
        assert_eq!(r[col("converged")], "true");
        if r[col("n_gamma")] == "1" && r[col("precond")] == "fitc" {
            let it: usize = r[col("iterations")].parse().unwrap();
            assert!(it <= 2, "FITC needs {it} iterations on a diagonal residual");
        }
    }
    let table_md = std::fs::read_to_string(&md).unwrap();
    assert_eq!(table_md.lines().count(), 6);
    assert!(table_md.starts_with("| effective_range |"));
}

/// Negative log-likelihood of y under the dense FITC covariance.
fn fitc_nll(locs: &LocationSet, y: &[f64], params: &CovParams, m: usize) -> f64 {
    let kernel = KernelSpec::new(1.5).unwrap();
    let ind = select(locs, m, InducingMethod::KmeansPlusPlus, 0).unwrap();
    let k_mm = cross_cov(&ind.locs, &ind.locs, &kernel, params).unwrap();
    let k_mn = cross_cov(&ind.locs, locs, &kernel, params).unwrap();
    let ch = Cholesky::new(k_mm.as_ref(), "K_mm").unwrap();
    let mut a = k_mn.clone();
    ch.solve_lower_in_place(a.as_mut());
    let n = locs.len();
    let mut cov = DenseMatrix::from_fn(n, n, |i, j| (0..m).map(|k| a[(k, i)] * a[(k, j)]).sum());
    for i in 0..n {
        cov[(i, i)] = params.sigma1_2 + params.sigma2;
    }
    let c = Cholesky::new(cov.as_ref(), "FITC").unwrap();
    0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + c.logdet() + dot(y, &c.solve_vec(y)))
}

#[test]
fn sweep_with_a_diagonal_taper_reproduces_fitc() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 300, &[]);
    let out = p(dir.path(), "s.csv");
    let report = ok(&[
        "sweep-fsa",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--set",
        "params.rho=0.07",
        "--set",
        "sweep.m=[15]",
        "--set",
        "sweep.n_gamma=[1, 10]",
    ]);
    assert!(report.contains("2 cells"), "{report}");
    let nll = column(&out, "nll");
    assert_eq!(nll.len(), 2);
    let x1 = column(&data, "x1");
    let x2 = column(&data, "x2");
    let coords: Vec<f64> = x1.iter().zip(&x2).flat_map(|(a, b)| [*a, *b]).collect();
    let locs = LocationSet::new(coords, 2).unwrap();
    let params = CovParams::new(1.0, 1.0, 0.07).unwrap();
    let oracle = fitc_nll(&locs, &column(&data, "y"), &params, 15);
    assert!((nll[0] - oracle).abs() <= 1e-6 * oracle.abs(), "sweep {} vs dense FITC {oracle}", nll[0]);
    assert!(nll[1] <= nll[0] + 1e-6, "a wider taper does not hurt on data from the model");
}

#[test]
fn vecchia_bench_writes_every_task() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "v.csv");
    ok(&[
        "vecchia-bench",
        "--out",
        s(&out),
        "--set",
        "vecchia.n=300",
        "--set",
        "vecchia.m_v=[5]",
        "--set",
        "vecchia.num_probes=[10]",
        "--set",
        "vecchia.reps=3",
        "--set",
        "vecchia.m=20",
    ]);
    let (h, rows) = table(&out);
    assert_eq!(h.len(), 9);
    let tasks: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    for t in ["observable_nll", "latent_nll", "latent_nll_dense", "solve_precision", "solve_covariance"] {
        assert!(tasks.contains(&t), "missing {t}");
    }
    let dense: f64 = rows.iter().find(|r| r[1] == "latent_nll_dense").unwrap()[4].parse().unwrap();
    for r in rows.iter().filter(|r| r[1] == "latent_nll") {
        let mean: f64 = r[4].parse().unwrap();
        assert!((mean - dense).abs() < 0.05 * dense.abs(), "{} SLQ {mean} vs dense {dense}", r[2]);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = p(dir.path(), "a.csv");
    let b = p(dir.path(), "b.csv");
    ok(&["--threads", "1", "simulate", "--out", s(&a), "--n", "200", "--variogram", s(&p(dir.path(), "va.csv"))]);
    let out = bin()
        .env("FSAGP_THREADS", "2")
        .args(["simulate", "--out", s(&b), "--n", "200", "--variogram", s(&p(dir.path(), "vb.csv"))])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(p(dir.path(), "va.csv")).unwrap(),
        std::fs::read(p(dir.path(), "vb.csv")).unwrap()
    );
    let bad = bin()
        .env("FSAGP_THREADS", "many")
        .args(["simulate", "--out", s(&b)])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
