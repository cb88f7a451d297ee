//! Validation harness: Monte Carlo coverage, rank uniformity, consistency and
//! asymptotic-shape experiments, and the exhaustive coverage enumerator.
//!
//! Trials are independent. Trial `k` draws its noise and SPS randomness from
//! seeds derived from `(master_seed, k)`, so results do not depend on the
//! order in which trials run.

mod enumerate;
mod signals;

pub use enumerate::{enumerate_exact_coverage, ExactCoverage, ENUMERATION_BUDGET};
pub use signals::{
    generate_input, generate_noise, InputModel, InputSignal, InputSpec, NoiseModel, NoiseSpec, ScaleProfile,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arx::{least_squares, simulate_arx, Dataset, ParamVector};
use crate::error::{config_err, Result};
use crate::numerics::{chi2_sf, SymMatrix, psd_inv_sqrt};
use crate::regions::{
    asymptotic_ellipsoid, evaluate_points, point_metrics, sps_region_grid, GridSpec, NoiseVariance,
};
use crate::rng;
use crate::sps::{rank_under_pi, Confidence, SpsEvaluator, SpsSetup};

/// Data-generating system and signal models shared by all trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub theta_star: ParamVector,
    pub input: InputSpec,
    pub noise: NoiseModel,
    pub n: usize,
    pub master_seed: u64,
    /// Redraw the input in every trial. This leaves the deterministic-input
    /// setting under which the coverage guarantee is stated.
    #[serde(default)]
    pub regenerate_input: bool,
}

impl Scenario {
    /// Same scenario with a different sample size.
    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config_err("n must be positive"));
        }
        self.noise.validate()
    }

    fn fixed_input(&self) -> Result<InputSignal> {
        generate_input(&self.input, self.n, self.theta_star.order().nb)
    }

    /// Seeds of trial `k`: (noise, sps setup, input).
    pub fn trial_seeds(&self, k: u64) -> TrialSeeds {
        TrialSeeds::derive(self.master_seed, k)
    }

    /// Simulated dataset of trial `k`, using `input` unless inputs are redrawn.
    pub fn trial_dataset(&self, k: u64, input: &InputSignal) -> Result<Dataset> {
        let seeds = self.trial_seeds(k);
        let fresh;
        let input = if self.regenerate_input {
            let spec = InputSpec {
                seed: seeds.input,
                ..self.input.clone()
            };
            fresh = generate_input(&spec, self.n, self.theta_star.order().nb)?;
            &fresh
        } else {
            input
        };
        let noise = self.noise.sample(self.n, &mut rng::stream(seeds.noise));
        let order = self.theta_star.order();
        let y_init = vec![0.0; order.na];
        let y = simulate_arx(&self.theta_star, &input.u, &noise, &y_init, &input.u_init)?;
        Dataset::new(input.u.clone(), y, y_init, input.u_init.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub trial: u64,
    pub noise: u64,
    pub setup: u64,
    pub input: u64,
}

impl TrialSeeds {
    pub fn derive(master_seed: u64, k: u64) -> Self {
        let base = rng::mix(master_seed, k);
        Self {
            trial: base,
            noise: rng::mix(base, 1),
            setup: rng::mix(base, 2),
            input: rng::mix(base, 3),
        }
    }
}

/// One coverage trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    /// `R(theta*)`.
    pub rank: usize,
    pub included: bool,
    /// `R(theta_hat_n)`.
    pub lse_rank: usize,
    pub lse_included: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: u64,
    pub hits: u64,
    pub empirical: f64,
    pub nominal: f64,
    /// `sqrt(p_hat (1 - p_hat) / trials)`.
    pub std_err: f64,
    /// Count of trials with `R(theta*) = r` at index `r - 1`.
    pub rank_histogram: Vec<u64>,
    /// Trials in which the least-squares estimate was in the region.
    pub lse_hits: u64,
    pub m: usize,
    pub q: usize,
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct CoverageRun {
    pub report: CoverageReport,
    pub records: Vec<TrialRecord>,
}

/// Monte Carlo coverage of `theta*` by the SPS region.
pub fn run_coverage(scenario: &Scenario, m: usize, q: usize, trials: u64) -> Result<CoverageRun> {
    run_coverage_with(scenario, m, q, trials, rank_under_pi)
}

/// [`run_coverage`] with a replaceable ranking rule.
pub fn run_coverage_with<F>(scenario: &Scenario, m: usize, q: usize, trials: u64, rank_fn: F) -> Result<CoverageRun>
where
    F: Fn(&[f64], &[usize]) -> usize + Sync,
{
    scenario.validate()?;
    if trials == 0 {
        return Err(config_err("trials must be at least 1"));
    }
    SpsSetup::generate(m, q, 1, 0)?;
    let input = scenario.fixed_input()?;
    let order = scenario.theta_star.order();
    let records = (0..trials)
        .into_par_iter()
        .map(|k| {
            let ds = scenario.trial_dataset(k, &input)?;
            let seeds = scenario.trial_seeds(k);
            let setup = SpsSetup::generate(m, q, scenario.n, seeds.setup)?;
            let eval = SpsEvaluator::new(&ds, order, &setup)?;
            let rank = rank_fn(&eval.s_vectors(&scenario.theta_star)?.sq_norms, setup.perm());
            let (theta_hat, _) = least_squares(&ds, order)?;
            let lse_rank = rank_fn(&eval.s_vectors(&theta_hat)?.sq_norms, setup.perm());
            Ok(TrialRecord {
                trial: k,
                seed: seeds.trial,
                rank,
                included: rank <= m - q,
                lse_rank,
                lse_included: lse_rank <= m - q,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rank_histogram = vec![0u64; m];
    let mut hits = 0;
    let mut lse_hits = 0;
    for r in &records {
        rank_histogram[r.rank - 1] += 1;
        hits += u64::from(r.included);
        lse_hits += u64::from(r.lse_included);
    }
    let empirical = hits as f64 / trials as f64;
    let report = CoverageReport {
        trials,
        hits,
        empirical,
        nominal: 1.0 - q as f64 / m as f64,
        std_err: (empirical * (1.0 - empirical) / trials as f64).sqrt(),
        rank_histogram,
        lse_hits,
        m,
        q,
        n: scenario.n,
    };
    Ok(CoverageRun { report, records })
}

/// Pearson goodness-of-fit of the ranks at `theta*` against the uniform law on `1..=m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub trials: u64,
    pub m: usize,
    pub rank_histogram: Vec<u64>,
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
}

pub fn rank_uniformity(histogram: &[u64]) -> UniformityReport {
    let m = histogram.len();
    let trials: u64 = histogram.iter().sum();
    let expected = trials as f64 / m as f64;
    let statistic = histogram
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum::<f64>();
    let dof = (m - 1) as u32;
    UniformityReport {
        trials,
        m,
        rank_histogram: histogram.to_vec(),
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
    }
}

pub fn run_rank_uniformity(scenario: &Scenario, m: usize, q: usize, trials: u64) -> Result<UniformityReport> {
    let run = run_coverage(scenario, m, q, trials)?;
    Ok(rank_uniformity(&run.report.rank_histogram))
}

/// Region diameters for one sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub diameters: Vec<f64>,
    pub included_counts: Vec<usize>,
    pub median_diameter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub m: usize,
    pub q: usize,
    pub grid: GridSpec,
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median_diameter < w[0].median_diameter)
    }
}

/// SPS region diameters on a fixed grid for each sample size in `n_list`.
pub fn run_consistency(
    scenario: &Scenario,
    n_list: &[usize],
    m: usize,
    q: usize,
    trials: u64,
    grid: &GridSpec,
) -> Result<ConsistencyReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_err("n_list must be non-empty and strictly increasing"));
    }
    if trials == 0 {
        return Err(config_err("trials must be at least 1"));
    }
    let order = scenario.theta_star.order();
    grid.validate(order.dim(), crate::regions::DEFAULT_GRID_CAP)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let sc = scenario.with_n(n);
        sc.validate()?;
        let input = sc.fixed_input()?;
        let per_trial = (0..trials)
            .into_par_iter()
            .map(|k| {
                let ds = sc.trial_dataset(k, &input)?;
                let setup = SpsSetup::generate(m, q, n, sc.trial_seeds(k).setup)?;
                let region = sps_region_grid(&ds, order, &setup, grid)?;
                let metrics = crate::regions::region_metrics(&region, None);
                Ok((metrics.diameter, metrics.included))
            })
            .collect::<Result<Vec<_>>>()?;
        let diameters: Vec<f64> = per_trial.iter().map(|p| p.0).collect();
        rows.push(ConsistencyRow {
            n,
            median_diameter: median(&diameters),
            included_counts: per_trial.iter().map(|p| p.1).collect(),
            diameters,
        });
    }
    Ok(ConsistencyReport {
        m,
        q,
        grid: grid.clone(),
        rows,
    })
}

/// Points at which the shape experiment evaluates the region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeGrid {
    /// A fixed lattice in parameter space.
    Fixed { grid: GridSpec },
    /// A lattice in the coordinates of each trial's inflated ellipsoid:
    /// `theta = theta_hat + r R_n^{-1/2} z`, `z` on `[-half_width, half_width]^d`,
    /// with `r^2` the inflated radius. `|z| <= 1` is exactly the inflated ellipsoid.
    Aligned { points_per_axis: usize, half_width: f64 },
}

impl ShapeGrid {
    fn points(&self, center: &[f64], shape: &SymMatrix, radius_sq: f64) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
        match self {
            ShapeGrid::Fixed { grid } => {
                let total = grid.total_points();
                let pts: Vec<Vec<f64>> = (0..total).map(|i| grid.node(i)).collect();
                let edge = (0..total).map(|i| on_edge(i, &grid.points_per_axis)).collect();
                Ok((pts, edge))
            }
            ShapeGrid::Aligned {
                points_per_axis,
                half_width,
            } => {
                let d = center.len();
                if *points_per_axis == 0 || half_width.is_nan() || *half_width <= 0.0 {
                    return Err(config_err("aligned grid needs points_per_axis > 0 and half_width > 0"));
                }
                let unit = GridSpec::centered(&vec![0.0; d], &vec![*half_width; d], *points_per_axis)?;
                let factor = psd_inv_sqrt(shape)?;
                let r = radius_sq.sqrt();
                let total = unit.total_points();
                let dims = vec![*points_per_axis; d];
                let pts = (0..total)
                    .map(|i| {
                        let z = unit.node(i);
                        let w = factor.apply(&z);
                        center.iter().zip(&w).map(|(c, wi)| c + r * wi).collect()
                    })
                    .collect();
                let edge = (0..total).map(|i| on_edge(i, &dims)).collect();
                Ok((pts, edge))
            }
        }
    }
}

fn on_edge(mut index: usize, dims: &[usize]) -> bool {
    let mut edge = false;
    for &p in dims.iter().rev() {
        let k = index % p;
        index /= p;
        edge |= k == 0 || k + 1 == p;
    }
    edge
}

/// Excess of the SPS region over the ellipsoid in one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeTrial {
    pub trial: u64,
    pub included: usize,
    /// Fraction of region nodes outside the un-inflated ellipsoid.
    pub excess_raw: f64,
    /// Fraction of region nodes outside the inflated ellipsoid.
    pub excess_inflated: f64,
    /// Region nodes on the outer layer of the lattice (truncation warning).
    pub boundary_hits: usize,
    pub sigma_sq_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub n: usize,
    pub p: f64,
    pub m: usize,
    pub q: usize,
    /// `eta = inflation * mu * sigma_hat^2`.
    pub inflation: f64,
    pub trials: Vec<ShapeTrial>,
    pub median_excess_raw: f64,
    pub median_excess_inflated: f64,
    /// Fixed large `n` with finite `m` stands in for the double limit.
    pub note: String,
}

/// Compares the SPS region (with `q = floor((1 - p) m)`) to the asymptotic
/// ellipsoid with estimated noise variance.
pub fn run_shape(
    scenario: &Scenario,
    p: Confidence,
    m: usize,
    trials: u64,
    grid: &ShapeGrid,
    inflation: f64,
) -> Result<ShapeReport> {
    scenario.validate()?;
    if trials == 0 {
        return Err(config_err("trials must be at least 1"));
    }
    if inflation.is_nan() || inflation < 0.0 {
        return Err(config_err("inflation must be non-negative"));
    }
    let q = p.floor_q(m);
    SpsSetup::generate(m, q, 1, 0)?;
    let order = scenario.theta_star.order();
    let input = scenario.fixed_input()?;
    let results = (0..trials)
        .into_par_iter()
        .map(|k| {
            let ds = scenario.trial_dataset(k, &input)?;
            let asym = asymptotic_ellipsoid(&ds, order, p.value(), NoiseVariance::Estimate)?;
            let eta = inflation * asym.mu * asym.sigma_sq;
            let raw = asym.ellipsoid();
            let inflated = asym.inflated(eta);
            let (points, edge) = grid.points(&raw.center, &raw.shape, inflated.radius_sq)?;
            let setup = SpsSetup::generate(m, q, scenario.n, scenario.trial_seeds(k).setup)?;
            let eval = SpsEvaluator::new(&ds, order, &setup)?;
            let ranks = evaluate_points(&eval, order, &points)?;
            let verdicts: Vec<bool> = ranks.iter().map(|&r| r <= m - q).collect();
            let raw_metrics = point_metrics(&points, &verdicts, Some(&raw));
            let inflated_metrics = point_metrics(&points, &verdicts, Some(&inflated));
            Ok(ShapeTrial {
                trial: k,
                included: raw_metrics.included,
                excess_raw: raw_metrics.excess_fraction().unwrap_or(0.0),
                excess_inflated: inflated_metrics.excess_fraction().unwrap_or(0.0),
                boundary_hits: verdicts.iter().zip(&edge).filter(|(&v, &e)| v && e).count(),
                sigma_sq_hat: asym.sigma_sq,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = results.iter().map(|t| t.excess_raw).collect();
    let infl: Vec<f64> = results.iter().map(|t| t.excess_inflated).collect();
    Ok(ShapeReport {
        n: scenario.n,
        p: p.value(),
        m,
        q,
        inflation,
        median_excess_raw: median(&raw),
        median_excess_inflated: median(&infl),
        trials: results,
        note: "finite-m, fixed-n proxy for the asymptotic shape property".into(),
    })
}

/// Median with the midpoint convention for even lengths; 0 for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
