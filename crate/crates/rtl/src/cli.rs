//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rtl_core::estimator::{fit_sources_with_validation, fit_target, Dataset, TargetFit};
use rtl_core::evaluation::{align_demo, desk_network, desk_training, replication_data, AlignDemoConfig, CoverageConfig};
use rtl_core::inference::{
    coordinate_intervals, identifiability_diagnostics, infer_target, linear_combination_inference, IdentifiabilityReport,
};
use rtl_core::linalg::{Matrix, SolveOptions};
use rtl_core::repnet::{self, NetworkParams};
use rtl_core::rng::{Purpose, SeedStream};
use rtl_core::simgen::{CoefficientSet, SimulationDesign};
use serde::{Deserialize, Serialize};

use crate::csv_io::{export_csv, load_csv, write_intervals, write_records, ColumnRoles};
use crate::error::{exit, CliError, Result};
use crate::files;
use crate::harness;
use crate::split::{split_csv_file, SplitSpec};

#[derive(Debug, Parser)]
#[command(name = "rtl", version, about = "Representation transfer learning for partially linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw one replication of a scenario and write its datasets as CSV.
    Simulate(SimulateArgs),
    /// Fit the shared representation on source files and the target model.
    Fit(FitArgs),
    /// Confidence intervals for the target coefficients of a saved fit.
    Infer(InferArgs),
    /// Replicated method comparison on a simulated scenario.
    Benchmark(StudyArgs),
    /// Replicated interval coverage study on a simulated scenario.
    Coverage(CoverageArgs),
    /// Learn a toy representation and align it with the true one on a grid.
    AlignDemo(AlignArgs),
    /// Seeded train/validation/test split of a CSV file.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Replication index to draw.
    #[arg(long, default_value_t = 0)]
    replication: usize,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Comma-separated source CSV files.
    #[arg(long, value_delimiter = ',', required = true)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    roles: PathBuf,
    /// Network fields overriding the defaults; `output_dim` is required.
    #[arg(long)]
    net: PathBuf,
    /// Training fields overriding the defaults.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Also report `αᵀβ₀` for these comma-separated weights.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Coverage settings (`alpha`, `target_value`, `level`, `histogram_bins`).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Fields overriding the two-dimensional toy defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Contents of `design.json` written by `simulate`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub design: SimulationDesign,
    pub coefficients: CoefficientSet,
    pub replication: usize,
}

/// Saved fit. The network lives in a sibling file named by `rep_file`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub roles: ColumnRoles,
    pub rep_file: String,
    pub solve: SolveOptions,
    pub beta0: Vec<f64>,
    pub gamma0: Vec<f64>,
    /// Target primary covariates `X₀`.
    pub target_x: Matrix,
    pub target_fit: TargetFit,
    pub source_ids: Vec<String>,
    pub source_betas: Vec<Vec<f64>>,
    pub source_gammas: Vec<Vec<f64>>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub identifiability: IdentifiabilityReport,
}

impl FitRecord {
    /// Reads a fit and the network it references.
    pub fn load(path: &Path) -> Result<(FitRecord, NetworkParams)> {
        let rec: FitRecord = files::read_json(path)?;
        let rep_path = path.with_file_name(&rec.rep_file);
        let rep: NetworkParams = files::read_json(&rep_path)?;
        Ok((rec, rep))
    }
}

/// Runs the command line on `argv` (program name first) and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Infer(a) => infer(&a),
        Command::Benchmark(a) => benchmark(&a),
        Command::Coverage(a) => coverage(&a),
        Command::AlignDemo(a) => align(&a),
        Command::Split(a) => split(&a),
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let scenario = harness::load_scenario(&a.scenario)?;
    let data = replication_data(&scenario, a.replication, None)?;
    let roles = ColumnRoles::generic(scenario.design.d, scenario.design.q);
    files::ensure_dir(&a.out)?;
    for (k, ds) in data.sources.iter().enumerate() {
        export_csv(&a.out.join(format!("source{}.csv", k + 1)), ds, &roles)?;
    }
    export_csv(&a.out.join("target.csv"), &data.target, &roles)?;
    files::write_json(&a.out.join("roles.json"), &roles)?;
    let record = SimulationRecord {
        design: scenario.design.clone(),
        coefficients: data.coefficients,
        replication: a.replication,
    };
    files::write_json(&a.out.join("design.json"), &record)
}

fn fit(a: &FitArgs) -> Result<()> {
    let roles: ColumnRoles = files::read_json(&a.roles)?;
    roles.validate()?;
    let q = roles.z.len();
    let seed = files::seed_override()?;
    let mut net = files::read_json_over(&a.net, &desk_network(q, 0))?;
    if net.input_dim != q {
        return Err(CliError::config(
            a.net.display().to_string(),
            format!("input_dim {} does not match the {q} z columns", net.input_dim),
        ));
    }
    let mut train = match &a.train {
        Some(p) => files::read_json_over(p, &desk_training())?,
        None => desk_training(),
    };
    if let Some(s) = seed {
        net.seed = s;
        train.seed = s;
    }
    net.validate().map_err(|e| CliError::config(a.net.display().to_string(), e.to_string()))?;
    train.validate().map_err(|e| CliError::config("train", e.to_string()))?;

    let sources = a.sources.iter().map(|p| load_csv(p, &roles)).collect::<Result<Vec<_>>>()?;
    let target = load_csv(&a.target, &roles)?;
    let split_root = SeedStream::new(train.seed).purpose(Purpose::Validation);
    let (fit_rows, val_rows): (Vec<Dataset>, Vec<Dataset>) = sources
        .iter()
        .enumerate()
        .map(|(k, ds)| ds.holdout_split(train.val_fraction, split_root.child(k as u64)))
        .unzip();
    let sf = fit_sources_with_validation(&fit_rows, &val_rows, &net, &train)?;
    let tf = fit_target(&target, &sf.rep, &train.ridge)?;
    // Confirms the sandwich covariance is computable before anything is written.
    infer_target(&target.x, &tf, &train.ridge)?;
    let pooled_z = Matrix::vstack(&sources.iter().map(|ds| &ds.z).collect::<Vec<_>>())?;
    let identifiability = identifiability_diagnostics(&sf.gammas, &repnet::forward(&sf.rep, &pooled_z)?)?;

    let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "fit".into());
    let rep_file = format!("{stem}.rep.json");
    let record = FitRecord {
        roles,
        rep_file: rep_file.clone(),
        solve: train.ridge,
        beta0: tf.beta0.clone(),
        gamma0: tf.gamma0.clone(),
        target_x: target.x.clone(),
        target_fit: tf,
        source_ids: sources.iter().map(|s| s.domain_id.clone()).collect(),
        source_betas: sf.betas,
        source_gammas: sf.gammas,
        best_epoch: sf.best_epoch,
        stopped_epoch: sf.stopped_epoch,
        identifiability,
    };
    files::write_json(&a.out.with_file_name(rep_file), &sf.rep)?;
    files::write_json(&a.out, &record)
}

fn infer(a: &InferArgs) -> Result<()> {
    let (rec, _) = FitRecord::load(&a.fit)?;
    let inf = infer_target(&rec.target_x, &rec.target_fit, &rec.solve)?;
    let cis = coordinate_intervals(&rec.beta0, &inf, a.level)?;
    let mut rows: Vec<(String, _)> = rec.roles.x.iter().cloned().zip(cis).collect();
    if let Some(alpha) = &a.alpha {
        let ci = linear_combination_inference(&rec.beta0, &inf.sigma_hat, inf.n0, alpha, a.level)?;
        rows.push(("alpha".into(), ci));
    }
    files::write_atomic(&a.out, |w| write_intervals(w, &rows))
}

fn benchmark(a: &StudyArgs) -> Result<()> {
    let scenario = harness::load_scenario(&a.scenario)?;
    let pool = harness::pool(a.threads)?;
    let report = harness::run_benchmark(&scenario, &pool)?;
    harness::write_benchmark(&report, &a.out)
}

fn coverage(a: &CoverageArgs) -> Result<()> {
    let scenario = harness::load_scenario(&a.study.scenario)?;
    let config = match &a.config {
        Some(p) => files::read_json_over(p, &CoverageConfig::default())?,
        None => CoverageConfig::default(),
    };
    let pool = harness::pool(a.study.threads)?;
    let report = harness::run_coverage(&scenario, &config, &pool)?;
    harness::write_coverage(&report, &a.study.out)
}

/// One grid point of the alignment output.
#[derive(Debug, Serialize)]
struct AlignRow {
    t: f64,
    component: usize,
    truth: f64,
    aligned: f64,
}

fn align(a: &AlignArgs) -> Result<()> {
    let seed = files::seed_override()?;
    let defaults = AlignDemoConfig::desk(seed.unwrap_or(0));
    let mut config = match &a.config {
        Some(p) => files::read_json_over(p, &defaults)?,
        None => defaults,
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let result = align_demo(&config)?;
    let mut rows = Vec::with_capacity(result.grid.len() * config.r);
    for (i, &t) in result.grid.iter().enumerate() {
        for j in 0..config.r {
            rows.push(AlignRow {
                t,
                component: j + 1,
                truth: result.truth[(i, j)],
                aligned: result.alignment.aligned[(i, j)],
            });
        }
    }
    files::write_atomic(&a.out, |w| write_records(w, &rows))?;
    for (j, e) in result.alignment.component_rel_errors.iter().enumerate() {
        println!("component {}: relative L2 error {e:.4}", j + 1);
    }
    Ok(())
}

fn split(a: &SplitArgs) -> Result<()> {
    let mut spec: SplitSpec = files::read_json(&a.spec)?;
    if let Some(s) = files::seed_override()? {
        spec.seed = s;
    }
    let [train, val, test] = split_csv_file(&a.data, &spec, &a.out)?;
    println!("train {train} val {val} test {test}");
    Ok(())
}
