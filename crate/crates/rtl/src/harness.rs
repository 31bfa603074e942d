//! Scenario files and the parallel replication harness.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use rtl_core::baselines::{Method, DEFAULT_KNOT_GRID};
use rtl_core::estimator::TrainConfig;
use rtl_core::evaluation::{
    check_coverage_scenario, coverage_theta, desk_network, desk_training, run_coverage_replication, run_replication,
    summarize_coverage, BenchmarkReport, Clock, CoverageConfig, CoverageReport, Scenario, DEFAULT_N_TEST,
};
use rtl_core::repnet::NetworkConfig;
use rtl_core::simgen::{make_design, CoefficientRegime, DesignDims, DesignFamily};
use serde::{Deserialize, Serialize};

use crate::csv_io::write_records;
use crate::error::{CliError, Result};
use crate::files;

fn default_noise_sd() -> f64 {
    0.3
}

/// Design recipe; the function assignment is drawn from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub family: DesignFamily,
    pub d: usize,
    pub q: usize,
    pub r_true: usize,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    pub seed: u64,
}

/// Scenario file schema. Omitted `net` and `train` fields take the
/// desk-scale defaults; omitted `methods` means every computable method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub design: DesignSpec,
    pub regime: CoefficientRegime,
    #[serde(rename = "K")]
    pub k: usize,
    pub n_k: usize,
    pub n0: usize,
    pub r_working: usize,
    #[serde(default)]
    pub net: Option<serde_json::Value>,
    #[serde(default)]
    pub train: Option<serde_json::Value>,
    pub replications: usize,
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default)]
    pub knot_grid: Option<Vec<usize>>,
    pub seed: u64,
}

impl ScenarioFile {
    /// Resolves defaults; `seed_override` replaces the master and design
    /// seeds.
    pub fn resolve(self, origin: &str, seed_override: Option<u64>) -> Result<Scenario> {
        let seed = seed_override.unwrap_or(self.seed);
        let design_seed = seed_override.unwrap_or(self.design.seed);
        let dims = DesignDims {
            d: self.design.d,
            q: self.design.q,
            r_true: self.design.r_true,
            noise_sd: self.design.noise_sd,
        };
        let design = make_design(self.design.family, dims, design_seed)?;
        let net: NetworkConfig = match self.net {
            Some(v) => files::overlay(&desk_network(dims.q, self.r_working), v, &format!("{origin} (net)"))?,
            None => desk_network(dims.q, self.r_working),
        };
        let train: TrainConfig = match self.train {
            Some(v) => files::overlay(&desk_training(), v, &format!("{origin} (train)"))?,
            None => desk_training(),
        };
        let scenario = Scenario {
            design,
            regime: self.regime,
            k: self.k,
            n_k: self.n_k,
            n0: self.n0,
            r_working: self.r_working,
            net,
            train,
            replications: self.replications,
            methods: self
                .methods
                .unwrap_or_else(|| vec![Method::Rtl, Method::Stl, Method::Pool, Method::Meta, Method::Oracle]),
            n_test: self.n_test.unwrap_or(DEFAULT_N_TEST),
            knot_grid: self.knot_grid.unwrap_or_else(|| DEFAULT_KNOT_GRID.to_vec()),
            seed,
        };
        scenario.validate().map_err(|e| CliError::config(origin, e.to_string()))?;
        Ok(scenario)
    }
}

/// Reads and resolves a scenario file, honoring the seed override.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let file: ScenarioFile = files::read_json(path)?;
    file.resolve(&path.display().to_string(), files::seed_override()?)
}

/// Seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Worker pool of `threads` workers, or one per logical core.
pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| CliError::config("--threads", e.to_string()))
}

/// Benchmark with replications spread over `pool`. Rows come back in
/// replication order, so the report does not depend on the pool size.
pub fn run_benchmark(scenario: &Scenario, pool: &rayon::ThreadPool) -> Result<BenchmarkReport> {
    scenario.validate()?;
    let clock = WallClock::start();
    let per_rep = pool.install(|| {
        (0..scenario.replications)
            .into_par_iter()
            .map(|r| run_replication(scenario, r, &clock))
            .collect::<rtl_core::Result<Vec<_>>>()
    })?;
    Ok(BenchmarkReport::from_rows(scenario.clone(), per_rep.into_iter().flatten().collect()))
}

/// Coverage study with replications spread over `pool`.
pub fn run_coverage(scenario: &Scenario, config: &CoverageConfig, pool: &rayon::ThreadPool) -> Result<CoverageReport> {
    check_coverage_scenario(scenario, config)?;
    let clock = WallClock::start();
    let rows = pool.install(|| {
        (0..scenario.replications)
            .into_par_iter()
            .map(|r| run_coverage_replication(scenario, config, r, &clock))
            .collect::<rtl_core::Result<Vec<_>>>()
    })?;
    let theta = coverage_theta(scenario, config)?;
    let summary = summarize_coverage(&rows, theta, config.level, config.histogram_bins)?;
    Ok(CoverageReport {
        scenario: scenario.clone(),
        config: config.clone(),
        rows,
        summary,
    })
}

/// `rows.csv` and `aggregates.json` under `dir`.
pub fn write_benchmark(report: &BenchmarkReport, dir: &Path) -> Result<()> {
    files::ensure_dir(dir)?;
    files::write_atomic(&dir.join("rows.csv"), |w| write_records(w, &report.rows))?;
    files::write_json(&dir.join("aggregates.json"), &report.aggregates)
}

/// `rows.csv`, `summary.json` and `histogram.csv` under `dir`.
pub fn write_coverage(report: &CoverageReport, dir: &Path) -> Result<()> {
    files::ensure_dir(dir)?;
    files::write_atomic(&dir.join("rows.csv"), |w| write_records(w, &report.rows))?;
    files::write_json(&dir.join("summary.json"), &report.summary)?;
    files::write_atomic(&dir.join("histogram.csv"), |w| write_records(w, &report.summary.histogram))
}
