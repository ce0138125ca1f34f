use std::path::Path;
use std::process::{Command, Output};

use cesgeo::estimation::scm;
use cesgeo::geometry::geodesic_between;
use cesgeo::matrix::relative_error;
use cesgeo::models::sample_batch;
use cesgeo::{CesModel, HpdMatrix, SeededRng};
use cesgeo_cli::config::{self, CrbSimConfig};
use cesgeo_cli::formats::{format_batch, format_matrix, parse_hpd};

fn cesgeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cesgeo")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn gaussian_estimate_is_the_sample_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = HpdMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
    let batch = sample_batch(&sigma, &CesModel::gaussian(3), 40, &mut SeededRng::new(5, 0)).unwrap();
    write(dir.path(), "x.batch", &format_batch(&batch));
    let cfg = write(dir.path(), "est.toml", "input = \"x.batch\"\nout = \"est.hpd\"\n");
    let out = cesgeo(&["estimate", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 iterations"));
    let est = parse_hpd(&std::fs::read_to_string(dir.path().join("est.hpd")).unwrap()).unwrap();
    assert!(relative_error(est.matrix(), scm(&batch).unwrap().matrix()) < 1e-14);
}

#[test]
fn student_t_estimate_writes_a_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = HpdMatrix::from_diagonal(&[1.0, 4.0]).unwrap();
    let model = CesModel::student_t(2, 3.0).unwrap();
    let batch = sample_batch(&sigma, &model, 200, &mut SeededRng::new(6, 0)).unwrap();
    write(dir.path(), "x.batch", &format_batch(&batch));
    let cfg = write(
        dir.path(),
        "est.toml",
        "input = \"x.batch\"\nmodel = \"student_t\"\ndof = 3.0\n",
    );
    let target = dir.path().join("cli.hpd");
    let out = cesgeo(&[
        "estimate",
        "--config",
        &cfg,
        "--out",
        target.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let est = parse_hpd(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(est.dim(), 2);
}

#[test]
fn malformed_batch_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.batch", "batch 2 3\n1 0 0 0\n1 0 zz 0\n");
    let cfg = write(dir.path(), "est.toml", "input = \"bad.batch\"\nout = \"est.hpd\"\n");
    let out = cesgeo(&["estimate", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("error:"));
    assert!(!dir.path().join("est.hpd").exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn too_few_samples_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "x.batch", "batch 2 2\n1 0 0 0\n0 0 1 0\n");
    let cfg = write(dir.path(), "est.toml", "input = \"x.batch\"\nout = \"est.hpd\"\n");
    let out = cesgeo(&["estimate", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(!dir.path().join("est.hpd").exists());
}

#[test]
fn mean_of_one_matrix_is_itself() {
    let dir = tempfile::tempdir().unwrap();
    let a = HpdMatrix::from_diagonal(&[2.0, 5.0]).unwrap();
    write(dir.path(), "set.hpd", &format_matrix(a.matrix()));
    let cfg = write(dir.path(), "mean.toml", "input = \"set.hpd\"\nout = \"mean.hpd\"\n");
    let out = cesgeo(&["mean", "--config", &cfg, "--quiet"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = parse_hpd(&std::fs::read_to_string(dir.path().join("mean.hpd")).unwrap()).unwrap();
    assert!(relative_error(m.matrix(), a.matrix()) < 1e-14);
}

#[test]
fn mean_of_two_matrices_is_the_midpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(7, 0);
    let make = |rng: &mut SeededRng| {
        let x = rng.complex_normal_matrix(3, 3);
        HpdMatrix::from_matrix(&x * x.adjoint()).unwrap()
    };
    let (a, b) = (make(&mut rng), make(&mut rng));
    let text = format_matrix(a.matrix()) + &format_matrix(b.matrix());
    write(dir.path(), "set.hpd", &text);
    let cfg = write(dir.path(), "mean.toml", "input = \"set.hpd\"\nout = \"mean.hpd\"\n");
    let out = cesgeo(&["mean", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = parse_hpd(&std::fs::read_to_string(dir.path().join("mean.hpd")).unwrap()).unwrap();
    let mid = geodesic_between(&a, &b, 0.5).unwrap();
    assert!(relative_error(m.matrix(), mid.matrix()) < 1e-8);
}

#[test]
fn non_hpd_entry_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "set.hpd",
        "hpd 2\n1 0 0 0\n0 0 1 0\nhpd 2\n1 0 2 0\n2 0 1 0\n",
    );
    let cfg = write(dir.path(), "mean.toml", "input = \"set.hpd\"\nout = \"mean.hpd\"\n");
    let out = cesgeo(&["mean", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("matrix 1"), "{}", stderr(&out));
    assert!(!dir.path().join("mean.hpd").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "crb.toml", "p = 4\ntrails = 60\n");
    let out = cesgeo(&["crb-sim", "--config", &cfg, "--out", "x.csv"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("trails"), "{}", stderr(&out));
}

fn crb_csv(dir: &Path, config: &str, extra: &[&str]) -> String {
    let out_path = dir.join("crb.csv");
    let mut args = vec![
        "crb-sim",
        "--config",
        config,
        "--out",
        out_path.to_str().unwrap(),
        "--quiet",
    ];
    args.extend_from_slice(extra);
    let out = cesgeo(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    std::fs::read_to_string(out_path).unwrap()
}

#[test]
fn crb_sim_table_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "crb.toml",
        "p = 3\nmodel = \"gaussian\"\nestimators = [\"scm\", \"mle\"]\nn_grid = [6, 30]\ntrials = 50\nseed = 1\n",
    );
    let base = crb_csv(dir.path(), &cfg, &[]);
    let mut lines = base.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,estimator,n,distance,mean_sq_dist,std_err,bound,trials,failures"
    );
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 2 * 2 * 3);
    for r in rows.iter().filter(|r| r[3] == "fisher_rao") {
        let n: f64 = r[2].parse().unwrap();
        assert_eq!(r[6].parse::<f64>().unwrap(), 9.0 / n);
    }
    assert_eq!(crb_csv(dir.path(), &cfg, &[]), base);
    let reseeded = crb_csv(dir.path(), &cfg, &["--seed", "2"]);
    assert_ne!(reseeded, base);
    // the override equals writing the seed into the config
    let cfg2 = write(
        dir.path(),
        "crb2.toml",
        "p = 3\nmodel = \"gaussian\"\nestimators = [\"scm\", \"mle\"]\nn_grid = [6, 30]\ntrials = 50\nseed = 2\n",
    );
    assert_eq!(crb_csv(dir.path(), &cfg2, &[]), reseeded);
}

#[test]
fn config_round_trip_gives_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: CrbSimConfig = config::parse("p = 3\nn_grid = [8]\ntrials = 50\nseed = 4\n").unwrap();
    let text = config::to_toml(&cfg).unwrap();
    assert_eq!(config::parse::<CrbSimConfig>(&text).unwrap(), cfg);
    let a = write(dir.path(), "a.toml", "p = 3\nn_grid = [8]\ntrials = 50\nseed = 4\n");
    let b = write(dir.path(), "b.toml", &text);
    assert_eq!(crb_csv(dir.path(), &a, &[]), crb_csv(dir.path(), &b, &[]));
}

#[test]
fn classify_sim_writes_both_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cls.toml",
        "p = 3\ntrain_per_class = 5\ntest_per_class = 10\nout = \"cls.csv\"\n",
    );
    let out = cesgeo(&["classify-sim", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("cls.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "experiment,pipeline,n,accuracy,std_err,test_batches,failures");
    assert!(lines[1].starts_with("classify_sim,gaussian,30,"));
    assert!(lines[2].starts_with("classify_sim,student_t,30,"));
    assert!(!String::from_utf8_lossy(&out.stdout).is_empty());
}
