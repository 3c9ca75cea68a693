//! Replicated toy and logistic-regression runs with CSV output.
//!
//! Replicate `r` runs from `child_seed(master_seed, Replicate, r)`; every method
//! in a run shares these seeds, so comparisons are paired. Replicates execute in
//! parallel and are assembled in replicate order, so output does not depend on
//! scheduling. Floats are written with 17 significant digits; `wall_ms` stays
//! empty unless `record_timing` is set, keeping reruns byte-identical.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;

use crate::baselines::run_ais_observed;
use crate::divergence::AlphaParam;
use crate::error::{Error, Result};
use crate::exploration::{
    run_phases, ExplorationSchedule, OuterOptions, OuterRecord, OuterRun, Weighting,
};
use crate::harness::config::{ExperimentConfig, Method, MethodSpec};
use crate::harness::libsvm::{load_libsvm, LabelMap, Standardization};
use crate::mixture::{GaussianKernel, ParticleMixture};
use crate::rng::{child_seed, seeded, Stream};
use crate::simplex;
use crate::targets::{
    blr_predict_weighted, log_sigmoid, toy_gaussian_mixture, BlrData, BlrPrior, BlrPriorSampler,
    BlrTarget, InitialSampler, IsotropicGaussian, TargetModel,
};
use crate::transforms::validate_convergence;

pub const TOY_HEADER: [&str; 5] = [
    "replicate",
    "t",
    "renyi_bound",
    "log_likelihood_estimate",
    "wall_ms",
];
pub const TOY_SUMMARY_HEADER: [&str; 4] =
    ["t", "renyi_bound", "log_likelihood_estimate", "replicates"];
pub const BLR_HEADER: [&str; 5] = [
    "replicate",
    "t",
    "accuracy",
    "predictive_log_likelihood",
    "wall_ms",
];
pub const TRACE_HEADER: [&str; 7] = ["replicate", "t", "n", "metric", "value", "seed", "wall_ms"];

/// Round-trip exact rendering with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// One metric value from a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    /// Inner step; 0 for phase-level metrics.
    pub n: usize,
    pub metric: &'static str,
    pub value: f64,
    pub seed: u64,
    pub wall_ms: Option<f64>,
}

/// Long-format record of a run, ordered by `(t, n)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescentTrace {
    pub rows: Vec<TraceRow>,
}

impl DescentTrace {
    /// Rows for each phase: atom count and bandwidth, the bound at uniform
    /// weights, every inner step, then the phase's final bound and evidence.
    pub fn from_records(records: &[OuterRecord], wall_ms: &[Option<f64>]) -> Self {
        let mut rows = Vec::new();
        for (i, r) in records.iter().enumerate() {
            let wall = wall_ms.get(i).copied().flatten();
            let mut phase = |metric, value: Option<f64>| {
                if let Some(value) = value {
                    rows.push(TraceRow {
                        t: r.t,
                        n: 0,
                        metric,
                        value,
                        seed: r.seed,
                        wall_ms: wall,
                    });
                }
            };
            phase("particles", Some(r.particles as f64));
            phase("bandwidth", Some(r.bandwidth));
            phase("bound_before", r.bound_before);
            let last = r.inner.as_ref().map_or(0, |inner| inner.steps.len());
            if let Some(inner) = &r.inner {
                for s in &inner.steps {
                    let mut step = |metric, value: f64| {
                        rows.push(TraceRow {
                            t: r.t,
                            n: s.step,
                            metric,
                            value,
                            seed: s.seed,
                            wall_ms: wall,
                        })
                    };
                    step("eta", s.eta);
                    if let Some(b) = s.bound {
                        step("bound", b);
                    }
                    step("mean_gradient", s.mean_gradient);
                    step("max_abs_gradient", s.max_abs_gradient);
                    step("skipped", if s.skipped { 1.0 } else { 0.0 });
                }
            }
            for (metric, value) in [
                ("bound_after", r.bound_after),
                ("log_evidence", r.log_evidence_after),
            ] {
                if let Some(value) = value {
                    rows.push(TraceRow {
                        t: r.t,
                        n: last,
                        metric,
                        value,
                        seed: r.seed,
                        wall_ms: wall,
                    });
                }
            }
        }
        Self { rows }
    }

    pub fn is_ordered(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| (w[0].t, w[0].n) <= (w[1].t, w[1].n))
    }
}

/// One replicate of one method.
#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub replicate: usize,
    pub seed: u64,
    pub records: Vec<OuterRecord>,
    /// Milliseconds since the replicate started, per completed phase.
    pub wall_ms: Vec<Option<f64>>,
    /// Held-out accuracy per phase (logistic regression only).
    pub accuracy: Vec<f64>,
    /// Mean held-out predictive log-likelihood per phase (logistic regression only).
    pub predictive_log_likelihood: Vec<f64>,
    pub failure: Option<Error>,
}

impl ReplicateRun {
    /// Bound after each phase, `None` where it was not evaluated or undefined.
    pub fn bounds(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.bound_after).collect()
    }
}

/// All replicates of one method (and dimension, for the toy problem).
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub spec: MethodSpec,
    pub dim: usize,
    pub replicates: Vec<ReplicateRun>,
}

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub runs: Vec<MethodRun>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn run(&self, spec: &MethodSpec, dim: usize) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.spec == *spec && r.dim == dim)
    }

    fn first_failure(&self) -> Option<Error> {
        self.runs
            .iter()
            .flat_map(|r| &r.replicates)
            .find_map(|r| r.failure.clone())
    }
}

/// Seed of replicate `r`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    child_seed(master, Stream::Replicate, r as u64)
}

type Observer<'a> = dyn FnMut(usize, &ParticleMixture, &GaussianKernel) -> Result<()> + 'a;

#[allow(clippy::too_many_arguments)]
fn run_method(
    spec: &MethodSpec,
    config: &ExperimentConfig,
    target: &dyn TargetModel,
    initial: &dyn InitialSampler,
    schedule: &ExplorationSchedule,
    seed: u64,
    observer: &mut Observer<'_>,
) -> OuterRun {
    let failed = |e| OuterRun {
        mixture: None,
        kernel: None,
        records: Vec::new(),
        failure: Some(e),
    };
    let alpha = match AlphaParam::new(spec.alpha) {
        Ok(a) => a,
        Err(e) => return failed(e),
    };
    let options = OuterOptions {
        alpha,
        eval_samples: config.eval_samples,
    };
    match spec.method {
        Method::Ais => run_ais_observed(target, schedule, initial, options, seed, observer),
        Method::PowerDescent | Method::MirrorDescent => {
            let transform = match config.transform(spec) {
                Ok(t) => t,
                Err(e) => return failed(e),
            };
            run_phases(
                target,
                schedule,
                Weighting::Descent {
                    config: &transform,
                    flag_policy: config.flag_policy,
                },
                initial,
                options,
                seed,
                observer,
            )
        }
    }
}

/// Runs one replicate, timing each phase and passing it to `extra`.
#[allow(clippy::too_many_arguments)]
fn run_replicate(
    replicate: usize,
    spec: &MethodSpec,
    config: &ExperimentConfig,
    target: &dyn TargetModel,
    initial: &dyn InitialSampler,
    schedule: &ExplorationSchedule,
    extra: &mut Observer<'_>,
) -> ReplicateRun {
    let seed = replicate_seed(config.master_seed, replicate);
    let start = Instant::now();
    let mut wall_ms = Vec::new();
    let run = {
        let mut observer =
            |t: usize, mix: &ParticleMixture, kernel: &GaussianKernel| -> Result<()> {
                extra(t, mix, kernel)?;
                wall_ms.push(
                    config
                        .record_timing
                        .then(|| start.elapsed().as_secs_f64() * 1e3),
                );
                Ok(())
            };
        run_method(spec, config, target, initial, schedule, seed, &mut observer)
    };
    ReplicateRun {
        replicate,
        seed,
        records: run.records,
        wall_ms,
        accuracy: Vec::new(),
        predictive_log_likelihood: Vec::new(),
        failure: run.failure,
    }
}

/// Exponential transforms with `alpha != 1` and no configured gradient bound
/// are checked against the largest gradient seen.
fn observed_bound_warnings(config: &ExperimentConfig, run: &MethodRun) -> Result<Vec<String>> {
    if run.spec.method != Method::MirrorDescent || run.spec.alpha == 1.0 || config.b_inf.is_some() {
        return Ok(Vec::new());
    }
    let b_max = run
        .replicates
        .iter()
        .flat_map(|r| &r.records)
        .map(|r| r.max_abs_gradient)
        .fold(0.0, f64::max);
    let report = validate_convergence(&config.transform(&run.spec)?, b_max);
    Ok(if report.is_violation() {
        vec![format!(
            "{} (d = {}): observed max |b| = {}: {report}",
            run.spec, run.dim, b_max
        )]
    } else {
        Vec::new()
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io(format!("{}: {e}", path.display()))
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(path: &Path, run: &MethodRun) -> Result<()> {
    let rows = run.replicates.iter().flat_map(|r| {
        DescentTrace::from_records(&r.records, &r.wall_ms)
            .rows
            .into_iter()
            .map(move |row| {
                vec![
                    r.replicate.to_string(),
                    row.t.to_string(),
                    row.n.to_string(),
                    row.metric.to_string(),
                    format_float(row.value),
                    row.seed.to_string(),
                    format_opt(row.wall_ms),
                ]
            })
    });
    write_rows(path, &TRACE_HEADER, rows)
}

fn toy_rows(run: &MethodRun) -> Vec<Vec<String>> {
    run.replicates
        .iter()
        .flat_map(|r| {
            r.records.iter().enumerate().map(move |(i, rec)| {
                vec![
                    r.replicate.to_string(),
                    rec.t.to_string(),
                    format_opt(rec.bound_after),
                    format_opt(rec.log_evidence_after),
                    format_opt(r.wall_ms.get(i).copied().flatten()),
                ]
            })
        })
        .collect()
}

fn toy_summary_rows(run: &MethodRun) -> Vec<Vec<String>> {
    let phases = run
        .replicates
        .iter()
        .map(|r| r.records.len())
        .max()
        .unwrap_or(0);
    let mean = |values: Vec<f64>| {
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    (0..phases)
        .map(|t| {
            let at: Vec<&OuterRecord> = run
                .replicates
                .iter()
                .filter_map(|r| r.records.get(t))
                .collect();
            vec![
                t.to_string(),
                format_opt(mean(at.iter().filter_map(|r| r.bound_after).collect())),
                format_opt(mean(
                    at.iter().filter_map(|r| r.log_evidence_after).collect(),
                )),
                at.len().to_string(),
            ]
        })
        .collect()
}

fn blr_rows(run: &MethodRun) -> Vec<Vec<String>> {
    run.replicates
        .iter()
        .flat_map(|r| {
            r.records.iter().enumerate().map(move |(i, rec)| {
                vec![
                    r.replicate.to_string(),
                    rec.t.to_string(),
                    format_float(r.accuracy[i]),
                    format_float(r.predictive_log_likelihood[i]),
                    format_opt(r.wall_ms.get(i).copied().flatten()),
                ]
            })
        })
        .collect()
}

fn write_meta(
    config: &ExperimentConfig,
    extra: &[(String, String)],
    warnings: &[String],
) -> Result<PathBuf> {
    let path = config.output_dir.join("meta.txt");
    let mut f = BufWriter::new(
        File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
    );
    writeln!(f, "config_hash = {}", config.hash())?;
    writeln!(f, "master_seed = {}", config.master_seed)?;
    writeln!(
        f,
        "version = {} {}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    )?;
    for (k, v) in extra {
        writeln!(f, "{k} = {v}")?;
    }
    for w in warnings {
        writeln!(f, "warning = {w}")?;
    }
    writeln!(f, "# configuration")?;
    write!(f, "{}", config.canonical())?;
    f.flush()?;
    Ok(path)
}

fn prepare_output(config: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", config.output_dir.display())))
}

/// Gaussian-mixture toy problem for every method and dimension.
///
/// Writes `toy_<label>_d<d>.csv` (one row per replicate and phase),
/// `toy_<label>_d<d>_summary.csv` (per-phase means) and
/// `toy_<label>_d<d>_trace.csv` (long-format trace) plus `meta.txt`.
/// `renyi_bound` is the method's bound after each phase and
/// `log_likelihood_estimate` is `log mean(p / mu k)` over the same samples,
/// the order-0 bound, comparable to the known `log Z` recorded in `meta.txt`.
/// On failure, completed rows are written before the error is returned.
pub fn run_toy_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut warnings = config.check()?;
    let schedule = config.schedule()?;
    prepare_output(config)?;
    let mut report = ExperimentReport::default();
    let mut meta = Vec::new();
    for &d in &config.dims {
        let target = toy_gaussian_mixture(d, config.separation, config.scale)?;
        if let Some(z) = target.log_normalizer() {
            meta.push((format!("log_z_d{d}"), format_float(z)));
        }
        let initial = IsotropicGaussian {
            dim: d,
            variance: config.initial_variance,
        };
        for spec in &config.methods {
            let replicates: Vec<ReplicateRun> = (0..config.replicates)
                .into_par_iter()
                .map(|r| {
                    run_replicate(
                        r,
                        spec,
                        config,
                        &target,
                        &initial,
                        &schedule,
                        &mut |_, _, _| Ok(()),
                    )
                })
                .collect();
            let run = MethodRun {
                spec: *spec,
                dim: d,
                replicates,
            };
            let stem = format!("toy_{}_d{d}", spec.label());
            let main = config.output_dir.join(format!("{stem}.csv"));
            write_rows(&main, &TOY_HEADER, toy_rows(&run))?;
            let summary = config.output_dir.join(format!("{stem}_summary.csv"));
            write_rows(&summary, &TOY_SUMMARY_HEADER, toy_summary_rows(&run))?;
            let trace = config.output_dir.join(format!("{stem}_trace.csv"));
            write_trace(&trace, &run)?;
            report.files.extend([main, summary, trace]);
            warnings.extend(observed_bound_warnings(config, &run)?);
            let failed = run.replicates.iter().any(|r| r.failure.is_some());
            report.runs.push(run);
            if failed {
                break;
            }
        }
        if report.first_failure().is_some() {
            break;
        }
    }
    report.files.push(write_meta(config, &meta, &warnings)?);
    report.warnings = warnings;
    match report.first_failure() {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Train and test sets after subsampling, splitting and standardization.
#[derive(Debug, Clone)]
pub struct BlrSplit {
    pub train: BlrData,
    pub test: BlrData,
    /// Statistics of the training rows, applied to both sets.
    pub standardization: Standardization,
    pub source_rows: usize,
}

/// Keeps `subsample` rows (drawn with `subsample_seed`), shuffles them with
/// the master seed's split stream, holds out `test_fraction` of them and
/// standardizes both parts with the training statistics.
pub fn prepare_blr_data(data: &BlrData, config: &ExperimentConfig) -> Result<BlrSplit> {
    let n = data.len();
    let mut rows: Vec<usize> = if config.subsample == 0 || config.subsample >= n {
        (0..n).collect()
    } else {
        let mut rows =
            index::sample(&mut seeded(config.subsample_seed), n, config.subsample).into_vec();
        rows.sort_unstable();
        rows
    };
    rows.shuffle(&mut seeded(child_seed(
        config.master_seed,
        Stream::Split,
        0,
    )));
    let test_count = ((rows.len() as f64) * config.test_fraction).round() as usize;
    if test_count == 0 || test_count >= rows.len() {
        return Err(Error::Config(format!(
            "test_fraction {} leaves {test_count} of {} rows for testing",
            config.test_fraction,
            rows.len()
        )));
    }
    let (test_rows, train_rows) = rows.split_at(test_count);
    let train = data.subset(train_rows);
    let test = data.subset(test_rows);
    let standardization = Standardization::fit(&train);
    Ok(BlrSplit {
        train: standardization.apply(&train)?,
        test: standardization.apply(&test)?,
        standardization,
        source_rows: n,
    })
}

/// Accuracy of `sum_j lambda_j sigma(w_j^T x) >= 1/2` against the labels, and
/// the mean of `log sum_j lambda_j sigma(c w_j^T x)`.
pub fn blr_test_metrics(mix: &ParticleMixture, test: &BlrData) -> Result<(f64, f64)> {
    let l = test.feature_count();
    let log_w: Vec<f64> = mix.weights().iter().map(|w| w.ln()).collect();
    let mut correct = 0usize;
    let mut total_ll = 0.0;
    for (x, c) in test.features().iter().zip(test.labels()) {
        let p = blr_predict_weighted(mix.atoms(), mix.weights(), x)?;
        if (p >= 0.5) == (*c > 0.0) {
            correct += 1;
        }
        let terms: Vec<f64> = mix
            .atoms()
            .iter()
            .zip(&log_w)
            .map(|(a, lw)| {
                lw + log_sigmoid(c * a[..l].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            })
            .collect();
        total_ll += simplex::log_sum_exp(&terms);
    }
    let n = test.len() as f64;
    Ok((correct as f64 / n, total_ll / n))
}

/// Logistic regression on the dataset at `dataset_path` (covtype label map).
/// See [`run_blr_on_data`].
pub fn run_blr_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.check()?;
    let path = config
        .dataset_path
        .as_ref()
        .ok_or_else(|| Error::Config("blr experiment needs dataset_path".into()))?;
    let data = load_libsvm(path, &LabelMap::covtype(), None)?;
    run_blr_on_data(config, &data)
}

/// Logistic regression on `data`. Writes `blr_<label>.csv` with held-out
/// accuracy and predictive log-likelihood per phase, `blr_<label>_trace.csv`
/// and `meta.txt` (which records the standardization). Every method sees the
/// same split and the same replicate seeds.
pub fn run_blr_on_data(config: &ExperimentConfig, data: &BlrData) -> Result<ExperimentReport> {
    let mut warnings = config.check()?;
    let schedule = config.schedule()?;
    let split = prepare_blr_data(data, config)?;
    prepare_output(config)?;
    let prior = BlrPrior {
        shape: config.prior_shape,
        rate: config.prior_rate,
    };
    let batch = (config.minibatch > 0).then_some(config.minibatch);
    let target = BlrTarget::new(&split.train, prior, batch)?;
    let initial = BlrPriorSampler {
        features: split.train.feature_count(),
        prior,
    };
    let dim = target.dim();
    let mut report = ExperimentReport::default();
    for spec in &config.methods {
        let replicates: Vec<ReplicateRun> = (0..config.replicates)
            .into_par_iter()
            .map(|r| {
                let mut metrics = Vec::new();
                let mut observer =
                    |_: usize, mix: &ParticleMixture, _: &GaussianKernel| -> Result<()> {
                        metrics.push(blr_test_metrics(mix, &split.test)?);
                        Ok(())
                    };
                let mut run =
                    run_replicate(r, spec, config, &target, &initial, &schedule, &mut observer);
                metrics.truncate(run.records.len());
                (run.accuracy, run.predictive_log_likelihood) = metrics.into_iter().unzip();
                run
            })
            .collect();
        let run = MethodRun {
            spec: *spec,
            dim,
            replicates,
        };
        let stem = format!("blr_{}", spec.label());
        let main = config.output_dir.join(format!("{stem}.csv"));
        write_rows(&main, &BLR_HEADER, blr_rows(&run))?;
        let trace = config.output_dir.join(format!("{stem}_trace.csv"));
        write_trace(&trace, &run)?;
        report.files.extend([main, trace]);
        warnings.extend(observed_bound_warnings(config, &run)?);
        let failed = run.replicates.iter().any(|r| r.failure.is_some());
        report.runs.push(run);
        if failed {
            break;
        }
    }
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format_float(*x))
            .collect::<Vec<_>>()
            .join(",")
    };
    let meta = vec![
        ("source_rows".to_string(), split.source_rows.to_string()),
        ("train_rows".to_string(), split.train.len().to_string()),
        ("test_rows".to_string(), split.test.len().to_string()),
        (
            "standardization".to_string(),
            "features shifted and scaled by training mean and standard deviation".to_string(),
        ),
        (
            "standardization_mean".to_string(),
            join(&split.standardization.mean),
        ),
        (
            "standardization_scale".to_string(),
            join(&split.standardization.scale),
        ),
    ];
    report.files.push(write_meta(config, &meta, &warnings)?);
    report.warnings = warnings;
    match report.first_failure() {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
