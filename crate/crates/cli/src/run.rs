//! Command execution. Every command writes `report.json` into the output
//! directory, plus command-specific data files. Files are written only after
//! the computation has finished.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sps_core::experiments::{
    enumerate_exact_coverage, generate_input, rank_uniformity, run_consistency, run_coverage, run_shape,
    ExactCoverage, TrialSeeds,
};
use sps_core::io::{dataset_csv, json_string, read_dataset_csv, region_csv, trials_csv};
use sps_core::regions::{
    asymptotic_ellipsoid, region_metrics, sps_region_grid_capped, NoiseVariance, RegionMetrics,
};
use sps_core::{
    ar_poly_stable, rng, simulate_arx, Confidence, Dataset, SpsSetup, Stability,
};

use crate::config::{Command, RunConfig};
use crate::CliError;

/// Output files, in the order they were written, with their contents.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(PathBuf, String)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, contents: String) {
        self.files.push((PathBuf::from(name), contents));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(p, _)| p == Path::new(name))
            .map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

const TOOL: Tool = Tool {
    name: env!("CARGO_PKG_NAME"),
    version: env!("CARGO_PKG_VERSION"),
};

#[derive(Serialize)]
struct Report<'a, T> {
    tool: Tool,
    command: Command,
    config: &'a RunConfig,
    result: T,
}

#[derive(Serialize)]
struct SimulateResult {
    n: usize,
    noise_seed: u64,
    system_stability: Stability,
}

#[derive(Serialize)]
struct RegionResult {
    m: usize,
    q: usize,
    n: usize,
    setup_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_seed: Option<u64>,
    lse: Vec<f64>,
    sigma_sq_hat: f64,
    ellipsoid_mu: f64,
    metrics: RegionMetrics,
}

#[derive(Serialize)]
struct EnumerateResult {
    m: usize,
    q: usize,
    n: usize,
    u: Vec<f64>,
    coverage: ExactCoverage,
}

/// Runs a validated configuration and returns the files it produces.
pub fn execute(config: &RunConfig) -> Result<Artifacts, CliError> {
    config.validate()?;
    let command = config.command()?;
    let mut out = Artifacts::default();
    match command {
        Command::Simulate => {
            let (ds, seeds) = simulate(config)?;
            out.add("dataset.csv", dataset_csv(&ds)?);
            let result = SimulateResult {
                n: ds.len(),
                noise_seed: seeds.noise,
                system_stability: ar_poly_stable(&config.system),
            };
            out.add("report.json", report(config, command, result)?);
        }
        Command::Region => {
            let (m, q) = config.mq()?;
            let (ds, noise_seed) = match &config.dataset {
                Some(path) => (read_dataset(config, path)?, None),
                None => {
                    let (ds, seeds) = simulate(config)?;
                    (ds, Some(seeds.noise))
                }
            };
            let order = config.system.order();
            let setup_seed = TrialSeeds::derive(config.master_seed, 0).setup;
            let setup = SpsSetup::generate(m, q, ds.len(), setup_seed)?;
            let grid = config.grid.as_ref().expect("validated");
            let region = sps_region_grid_capped(&ds, order, &setup, grid, config.grid_cap())?;
            let p = 1.0 - q as f64 / m as f64;
            let asym = asymptotic_ellipsoid(&ds, order, p, NoiseVariance::Estimate)?;
            let ellipsoid = asym.ellipsoid();
            out.add("region.csv", region_csv(&region)?);
            out.add("ellipsoid.json", json_string(&ellipsoid.to_record())?);
            let result = RegionResult {
                m,
                q,
                n: ds.len(),
                setup_seed,
                noise_seed,
                lse: asym.theta_hat.as_slice().to_vec(),
                sigma_sq_hat: asym.sigma_sq,
                ellipsoid_mu: asym.mu,
                metrics: region_metrics(&region, Some(&ellipsoid)),
            };
            out.add("report.json", report(config, command, result)?);
        }
        Command::Coverage => {
            let (m, q) = config.mq()?;
            let run = run_coverage(&config.scenario()?, m, q, config.trials.expect("validated"))?;
            out.add("trials.csv", trials_csv(&run.records)?);
            out.add("report.json", report(config, command, run.report)?);
        }
        Command::RankUniformity => {
            let (m, q) = config.mq()?;
            let run = run_coverage(&config.scenario()?, m, q, config.trials.expect("validated"))?;
            out.add("report.json", report(config, command, rank_uniformity(&run.report.rank_histogram))?);
        }
        Command::Consistency => {
            let (m, q) = config.mq()?;
            let rep = run_consistency(
                &config.scenario()?,
                config.n_list.as_deref().expect("validated"),
                m,
                q,
                config.trials.expect("validated"),
                config.grid.as_ref().expect("validated"),
            )?;
            out.add("report.json", report(config, command, rep)?);
        }
        Command::Shape => {
            let (m, _) = config.mq()?;
            let p: Confidence = config.p.expect("validated");
            let rep = run_shape(
                &config.scenario()?,
                p,
                m,
                config.trials.expect("validated"),
                config.shape_grid.as_ref().expect("validated"),
                config.inflation.unwrap_or(0.05),
            )?;
            out.add("report.json", report(config, command, rep)?);
        }
        Command::Enumerate => {
            let (m, q) = config.mq()?;
            let abs_noise = config.abs_noise.as_deref().expect("validated");
            let n = abs_noise.len();
            let nb = config.system.order().nb;
            let mut input = generate_input(config.input.as_ref().expect("validated"), n, nb)?;
            if let Some(u_init) = config.u_init() {
                input.u_init = u_init;
            }
            let coverage =
                enumerate_exact_coverage(abs_noise, &config.system, &input.u, &input.u_init, &config.y_init(), m, q)?;
            let result = EnumerateResult {
                m,
                q,
                n,
                u: input.u,
                coverage,
            };
            out.add("report.json", report(config, command, result)?);
        }
    }
    Ok(out)
}

/// Dataset of trial 0: the configured input, noise drawn from the master seed.
fn simulate(config: &RunConfig) -> Result<(Dataset, TrialSeeds), CliError> {
    let n = config.n.expect("validated");
    let order = config.system.order();
    let seeds = TrialSeeds::derive(config.master_seed, 0);
    let mut input = generate_input(config.input.as_ref().expect("validated"), n, order.nb)?;
    if let Some(u_init) = config.u_init() {
        input.u_init = u_init;
    }
    let noise = config
        .noise
        .as_ref()
        .expect("validated")
        .sample(n, &mut rng::stream(seeds.noise));
    let y_init = config.y_init();
    let y = simulate_arx(&config.system, &input.u, &noise, &y_init, &input.u_init)?;
    Ok((Dataset::new(input.u, y, y_init, input.u_init)?, seeds))
}

fn read_dataset(config: &RunConfig, path: &Path) -> Result<Dataset, CliError> {
    let order = config.system.order();
    let u_init = config.u_init().unwrap_or_else(|| vec![0.0; order.nb]);
    Ok(read_dataset_csv(path, config.y_init(), u_init)?)
}

fn report<T: Serialize>(config: &RunConfig, command: Command, result: T) -> Result<String, CliError> {
    Ok(json_string(&Report {
        tool: TOOL,
        command,
        config,
        result,
    })?)
}
