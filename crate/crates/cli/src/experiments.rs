//! Subcommand runners. Each returns the files to write and a console summary;
//! nothing touches the filesystem until every result is ready.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use cesgeo::classify::{
    estimate_features, evaluate_accuracy, karcher_mean, mdm_train, synthetic_batches, MixtureScenario,
};
use cesgeo::estimation::{fixed_point_residual, Estimator};
use cesgeo::icrb::{mc_mse_experiment, DistanceKind, McScenario};
use cesgeo::models::coefficients;
use cesgeo::{CMatrix, CesModel, Generator, HpdMatrix, MetricParams};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{
    resolve_relative, ClassifySimConfig, CrbSimConfig, EstimateConfig, EstimatorKind, MeanConfig, ScatterKind,
    ScatterSpec,
};
use crate::formats::{format_matrix, parse_batch, parse_hpd, parse_hpd_list};

/// Exact header of the `crb-sim` CSV.
pub const CRB_CSV_HEADER: &str = "experiment,estimator,n,distance,mean_sq_dist,std_err,bound,trials,failures";
/// Exact header of the `classify-sim` CSV.
pub const CLASSIFY_CSV_HEADER: &str = "experiment,pipeline,n,accuracy,std_err,test_batches,failures";

/// What a runner produced.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Data file contents, written only after the run succeeds.
    pub output: Option<(PathBuf, String)>,
    pub summary: String,
}

/// Hermitian Toeplitz matrix with entry `ρ^{j−i}` above the diagonal and its
/// conjugate below.
pub fn build_toeplitz_scatter(p: usize, rho: Complex64) -> cesgeo::Result<HpdMatrix> {
    if !(rho.norm() < 1.0) {
        return Err(cesgeo::Error::InvalidArgument(format!(
            "|rho| = {} must be below 1",
            rho.norm()
        )));
    }
    let m = CMatrix::from_fn(p, p, |i, j| {
        if j >= i {
            rho.powu((j - i) as u32)
        } else {
            rho.powu((i - j) as u32).conj()
        }
    });
    HpdMatrix::from_matrix(m)
}

fn build_scatter(spec: &ScatterSpec, p: usize, config_path: Option<&Path>) -> Result<HpdMatrix> {
    let base = match spec.kind {
        ScatterKind::Identity => HpdMatrix::identity(p),
        ScatterKind::Toeplitz => build_toeplitz_scatter(p, Complex64::new(spec.rho_re, spec.rho_im))?,
        ScatterKind::File => {
            let file = resolve_relative(config_path, spec.file.as_deref().context("scatter file missing")?);
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let m = parse_hpd(&text).with_context(|| format!("in {}", file.display()))?;
            ensure!(
                m.dim() == p,
                "scatter file has dimension {}, config says p={p}",
                m.dim()
            );
            m
        }
    };
    if spec.scale == 1.0 {
        Ok(base)
    } else {
        Ok(HpdMatrix::new(base.as_hermitian().scale(spec.scale))?)
    }
}

fn output_path(out: Option<&Path>, config_path: Option<&Path>) -> Option<PathBuf> {
    out.map(|o| resolve_relative(config_path, o))
}

#[derive(Serialize)]
struct CrbRow<'a> {
    experiment: &'a str,
    estimator: &'a str,
    n: usize,
    distance: &'a str,
    mean_sq_dist: f64,
    std_err: f64,
    bound: f64,
    trials: usize,
    failures: usize,
}

#[derive(Serialize)]
struct ClassifyRow<'a> {
    experiment: &'a str,
    pipeline: &'a str,
    n: usize,
    accuracy: f64,
    std_err: f64,
    test_batches: usize,
    failures: usize,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn require_out(out: Option<PathBuf>) -> Result<PathBuf> {
    out.context("no output file: set `out` in the config or pass --out")
}

fn estimator_name(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Scm => "scm",
        EstimatorKind::Mle => "mle",
        EstimatorKind::MleMismatched => "mle_mismatched",
    }
}

/// MSE of each estimator against the intrinsic bounds over the n grid.
pub fn run_crb_sim(config: &CrbSimConfig, config_path: Option<&Path>) -> Result<Outcome> {
    config.validate()?;
    let out = require_out(output_path(config.out.as_deref(), config_path))?;
    let p = config.p;
    let model = config.data_model()?;
    let sigma = build_scatter(&config.scatter_spec(), p, config_path)?;

    // Distinct estimators in config order, each with the name of its first request.
    let mut estimators: Vec<(Estimator, &'static str)> = Vec::new();
    for &kind in &config.estimators {
        let est = match kind {
            EstimatorKind::Scm => Estimator::Scm,
            EstimatorKind::Mle => Estimator::Mle(model.generator()),
            EstimatorKind::MleMismatched => Estimator::Mle(Generator::StudentT {
                dof: config.mismatched_dof,
            }),
        };
        if !estimators.iter().any(|(e, _)| *e == est) {
            estimators.push((est, estimator_name(kind)));
        }
    }

    let scenario = McScenario {
        sigma_true: sigma,
        model_true: model,
        estimators: estimators.iter().map(|(e, _)| *e).collect(),
        n_grid: config.n_values(),
        trials: config.trials,
        seed: config.seed,
        workers: config.workers,
        estimation: config.estimation()?,
    };
    let table = mc_mse_experiment(&scenario)?;
    let name_of = |label: &str| {
        estimators
            .iter()
            .find(|(e, _)| e.label() == label)
            .map(|(_, n)| *n)
            .expect("every row comes from a requested estimator")
    };
    let csv = to_csv(table.rows.iter().map(|r| CrbRow {
        experiment: &config.experiment,
        estimator: name_of(&r.estimator),
        n: r.n,
        distance: r.distance.label(),
        mean_sq_dist: r.mean_sq_dist,
        std_err: r.std_err,
        bound: r.bound,
        trials: r.trials,
        failures: r.failures,
    }))?;

    let mut summary = String::new();
    writeln!(
        summary,
        "{}: p={p}, {} trials, seed {}; mean squared distance / bound",
        config.experiment, config.trials, config.seed
    )?;
    writeln!(
        summary,
        "{:>16} {:>6} {:>10} {:>10} {:>10}",
        "estimator", "n", "euclidean", "natural", "fisher_rao"
    )?;
    for &n in &scenario.n_grid {
        for (est, name) in &estimators {
            let ratio = |d| {
                table
                    .get(&est.label(), n, d)
                    .map_or(f64::NAN, |r| r.mean_sq_dist / r.bound)
            };
            writeln!(
                summary,
                "{:>16} {:>6} {:>10.4} {:>10.4} {:>10.4}",
                name,
                n,
                ratio(DistanceKind::Euclidean),
                ratio(DistanceKind::Natural),
                ratio(DistanceKind::FisherRao)
            )?;
        }
    }
    writeln!(summary, "wrote {}", out.display())?;
    Ok(Outcome {
        output: Some((out, csv)),
        summary,
    })
}

/// Accuracy of the Gaussian and Student-t MDM pipelines on one synthetic split.
pub fn run_classify_sim(config: &ClassifySimConfig, config_path: Option<&Path>) -> Result<Outcome> {
    config.validate()?;
    let out = require_out(output_path(config.out.as_deref(), config_path))?;
    let p = config.p;
    let model = config.data_model()?;
    let scatters = config
        .class_specs()
        .iter()
        .map(|s| build_scatter(s, p, config_path))
        .collect::<Result<Vec<_>>>()?;
    let class_count = scatters.len();
    let scenario = MixtureScenario {
        n: config.batch_size(),
        train_per_class: config.train_per_class,
        test_per_class: config.test_per_class,
        models: vec![model; class_count],
        scatters,
        estimator: Estimator::Scm,
        seed: config.seed,
        workers: config.workers,
    };
    let batches = synthetic_batches(&scenario)?;
    let estimation = config.estimation()?;

    let t_model = CesModel::new(p, config.pipeline_generator())?;
    let pipelines = [
        ("gaussian", Estimator::Scm, MetricParams::NATURAL),
        (
            "student_t",
            Estimator::Mle(config.pipeline_generator()),
            coefficients(&t_model).metric_params(),
        ),
    ];

    let mut rows = Vec::new();
    let mut summary = String::new();
    writeln!(
        summary,
        "{}: p={p}, {class_count} classes, n={}, {} train / {} test batches per class, seed {}",
        config.experiment,
        config.batch_size(),
        config.train_per_class,
        config.test_per_class,
        config.seed
    )?;
    for (name, estimator, params) in pipelines {
        let data = estimate_features(&batches, class_count, estimator, &estimation, config.workers)?;
        let centers = mdm_train(
            &data.train,
            params,
            config.karcher_tolerance,
            config.karcher_max_iterations,
        )
        .with_context(|| format!("training the {name} pipeline"))?;
        let accuracy = evaluate_accuracy(&centers, &data.test)?;
        let tests = data.test.len();
        let std_err = (accuracy * (1.0 - accuracy) / tests as f64).sqrt();
        writeln!(
            summary,
            "{name:>10}: accuracy {accuracy:.4} ± {std_err:.4} over {tests} test batches"
        )?;
        rows.push((name, accuracy, std_err, tests, data.dropped));
    }
    let csv = to_csv(
        rows.iter()
            .map(|&(pipeline, accuracy, std_err, test_batches, failures)| ClassifyRow {
                experiment: &config.experiment,
                pipeline,
                n: config.batch_size(),
                accuracy,
                std_err,
                test_batches,
                failures,
            }),
    )?;
    writeln!(summary, "wrote {}", out.display())?;
    Ok(Outcome {
        output: Some((out, csv)),
        summary,
    })
}

/// Scatter estimate of one batch file.
pub fn run_estimate(config: &EstimateConfig, config_path: Option<&Path>) -> Result<Outcome> {
    config.validate()?;
    let input = resolve_relative(config_path, config.input.as_deref().expect("validated"));
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let batch = parse_batch(&text).with_context(|| format!("in {}", input.display()))?;
    let model = config.model_for(batch.dim())?;
    let result = Estimator::Mle(model.generator()).estimate(&batch, &config.estimation()?)?;
    if !result.converged {
        bail!("fixed point did not converge within {} iterations", result.iterations);
    }
    let residual = fixed_point_residual(&batch, &model, &result.estimate)?;
    let matrix = format_matrix(result.estimate.matrix());

    let mut summary = format!(
        "estimate: p={}, n={}, {} iterations, fixed-point residual {residual:.3e}\n",
        batch.dim(),
        batch.count(),
        result.iterations
    );
    let out = output_path(config.out.as_deref(), config_path);
    match &out {
        Some(path) => writeln!(summary, "wrote {}", path.display())?,
        None => summary.push_str(&matrix),
    }
    Ok(Outcome {
        output: out.map(|o| (o, matrix)),
        summary,
    })
}

/// Karcher mean of a matrix file.
pub fn run_mean(config: &MeanConfig, config_path: Option<&Path>) -> Result<Outcome> {
    config.validate()?;
    let input = resolve_relative(config_path, config.input.as_deref().expect("validated"));
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let set = parse_hpd_list(&text).with_context(|| format!("in {}", input.display()))?;
    let r = karcher_mean(&set, config.tolerance, config.max_iterations)?;
    if !r.converged {
        bail!(
            "Karcher mean did not converge: gradient norm {:.3e} after {} iterations",
            r.grad_norm,
            r.iterations
        );
    }
    let matrix = format_matrix(r.mean.matrix());
    let mut summary = format!(
        "mean: {} matrices, p={}, {} iterations, gradient norm {:.3e}\n",
        set.len(),
        r.mean.dim(),
        r.iterations,
        r.grad_norm
    );
    let out = output_path(config.out.as_deref(), config_path);
    match &out {
        Some(path) => writeln!(summary, "wrote {}", path.display())?,
        None => summary.push_str(&matrix),
    }
    Ok(Outcome {
        output: out.map(|o| (o, matrix)),
        summary,
    })
}
