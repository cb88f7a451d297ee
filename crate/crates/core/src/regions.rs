//! Region geometry: grid evaluation of the SPS region, the asymptotic
//! confidence ellipsoid and its inflated variant, and size metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arx::{build_regressors, least_squares, residuals, ArxOrder, Dataset, ParamVector};
use crate::error::{config_err, Result, SpsError};
use crate::numerics::{chi2_quantile, SymMatrix};
use crate::sps::{SpsEvaluator, SpsSetup};

/// Default cap on the number of grid nodes.
pub const DEFAULT_GRID_CAP: usize = 1_000_000;

/// Axis-aligned lattice over the parameter space. Nodes are the cell centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points_per_axis: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points_per_axis: Vec<usize>) -> Result<Self> {
        let g = Self {
            lower,
            upper,
            points_per_axis,
        };
        g.validate(g.lower.len(), usize::MAX)?;
        Ok(g)
    }

    /// Square lattice `center +- half_width` with `points` nodes per axis.
    pub fn centered(center: &[f64], half_width: &[f64], points: usize) -> Result<Self> {
        Self::new(
            center.iter().zip(half_width).map(|(c, h)| c - h).collect(),
            center.iter().zip(half_width).map(|(c, h)| c + h).collect(),
            vec![points; center.len()],
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis
            .iter()
            .try_fold(1usize, |acc, &p| acc.checked_mul(p))
            .unwrap_or(usize::MAX)
    }

    pub fn validate(&self, d: usize, cap: usize) -> Result<()> {
        if self.lower.len() != d || self.upper.len() != d || self.points_per_axis.len() != d {
            return Err(config_err(format!("grid must have dimension {d}")));
        }
        if d == 0 {
            return Err(config_err("grid must have at least one axis"));
        }
        for j in 0..d {
            if self.lower[j] >= self.upper[j] || !self.lower[j].is_finite() || !self.upper[j].is_finite() {
                return Err(config_err(format!("grid axis {}: need lower < upper", j + 1)));
            }
            if self.points_per_axis[j] == 0 {
                return Err(config_err(format!("grid axis {}: need at least one point", j + 1)));
            }
        }
        let total = self.total_points();
        if total > cap {
            return Err(config_err(format!("grid has {total} nodes, cap is {cap}")));
        }
        Ok(())
    }

    /// Coordinates of node `index` in lexicographic order (first axis slowest).
    pub fn node(&self, mut index: usize) -> Vec<f64> {
        let d = self.dim();
        let mut coords = vec![0.0; d];
        for j in (0..d).rev() {
            let p = self.points_per_axis[j];
            let k = index % p;
            index /= p;
            let step = (self.upper[j] - self.lower[j]) / p as f64;
            coords[j] = self.lower[j] + (k as f64 + 0.5) * step;
        }
        coords
    }

    /// Cell widths along each axis.
    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| (self.upper[j] - self.lower[j]) / self.points_per_axis[j] as f64)
            .collect()
    }
}

/// Verdicts and ranks of the SPS indicator on every grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorGrid {
    pub spec: GridSpec,
    pub verdicts: Vec<bool>,
    pub ranks: Vec<usize>,
    pub m: usize,
    pub q: usize,
}

impl IndicatorGrid {
    pub fn node(&self, index: usize) -> Vec<f64> {
        self.spec.node(index)
    }

    pub fn included_count(&self) -> usize {
        self.verdicts.iter().filter(|&&v| v).count()
    }

    /// Nodes of the region, in lattice order.
    pub fn included_nodes(&self) -> Vec<Vec<f64>> {
        self.verdicts
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| self.node(i))
            .collect()
    }

    /// Region for a larger `q` from the stored ranks (same randomness).
    pub fn with_q(&self, q: usize) -> Result<Self> {
        if !(q > 0 && q < self.m) {
            return Err(config_err(format!("need 0 < q < m = {}", self.m)));
        }
        Ok(Self {
            verdicts: self.ranks.iter().map(|&r| r <= self.m - q).collect(),
            q,
            ..self.clone()
        })
    }
}

/// Evaluates the indicator at every node of `spec`, in parallel over nodes.
pub fn sps_region_grid(ds: &Dataset, order: ArxOrder, setup: &SpsSetup, spec: &GridSpec) -> Result<IndicatorGrid> {
    sps_region_grid_capped(ds, order, setup, spec, DEFAULT_GRID_CAP)
}

pub fn sps_region_grid_capped(
    ds: &Dataset,
    order: ArxOrder,
    setup: &SpsSetup,
    spec: &GridSpec,
    cap: usize,
) -> Result<IndicatorGrid> {
    spec.validate(order.dim(), cap)?;
    let eval = SpsEvaluator::new(ds, order, setup)?;
    let nodes: Vec<Vec<f64>> = (0..spec.total_points()).map(|i| spec.node(i)).collect();
    let ranks = evaluate_points(&eval, order, &nodes)?;
    let limit = setup.m() - setup.q();
    Ok(IndicatorGrid {
        spec: spec.clone(),
        verdicts: ranks.iter().map(|&r| r <= limit).collect(),
        ranks,
        m: setup.m(),
        q: setup.q(),
    })
}

/// Ranks `R(theta)` at arbitrary points, in parallel.
pub fn evaluate_points(eval: &SpsEvaluator<'_>, order: ArxOrder, points: &[Vec<f64>]) -> Result<Vec<usize>> {
    points
        .par_iter()
        .map(|p| {
            let theta = ParamVector::from_slice(order, p)?;
            Ok(eval.evaluate(&theta)?.rank)
        })
        .collect()
}

/// `sigma_hat^2 = (1/(n-d)) sum_t (Y_t - phi_t' theta_hat)^2`.
pub fn noise_variance_estimate(ds: &Dataset, theta_hat: &ParamVector) -> Result<f64> {
    let n = ds.len();
    let d = theta_hat.dim();
    if n <= d {
        return Err(SpsError::Domain(format!("noise variance needs n > d (n = {n}, d = {d})")));
    }
    let phi = build_regressors(ds, theta_hat.order())?;
    let ss: f64 = residuals(&phi, &ds.y, theta_hat.as_slice()).iter().map(|e| e * e).sum();
    Ok(ss / (n - d) as f64)
}

/// Set `{theta : (theta - center)' shape (theta - center) <= radius_sq}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    pub shape: SymMatrix,
    pub radius_sq: f64,
}

/// JSON form of an [`Ellipsoid`] with the shape matrix row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidRecord {
    pub center: Vec<f64>,
    pub shape: Vec<f64>,
    pub radius_sq: f64,
}

impl Ellipsoid {
    pub fn to_record(&self) -> EllipsoidRecord {
        EllipsoidRecord {
            center: self.center.clone(),
            shape: self.shape.as_slice().to_vec(),
            radius_sq: self.radius_sq,
        }
    }

    pub fn from_record(r: &EllipsoidRecord) -> Result<Self> {
        let d = r.center.len();
        Ok(Self {
            center: r.center.clone(),
            shape: SymMatrix::new(d, r.shape.clone())?,
            radius_sq: r.radius_sq,
        })
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        ellipsoid_contains(self, theta)
    }
}

/// Membership test; the boundary counts as inside.
pub fn ellipsoid_contains(e: &Ellipsoid, theta: &[f64]) -> bool {
    let diff: Vec<f64> = theta.iter().zip(&e.center).map(|(t, c)| t - c).collect();
    e.shape.quad_form(&diff) <= e.radius_sq
}

/// The chi-square calibrated ellipsoid around the least-squares estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticEllipsoid {
    pub theta_hat: ParamVector,
    /// `R_n`.
    pub shape: SymMatrix,
    /// `mu` with `F_chi2(mu) = p`, `d` degrees of freedom.
    pub mu: f64,
    pub sigma_sq: f64,
    pub n: usize,
}

impl AsymptoticEllipsoid {
    /// Radius `mu sigma^2 / n`.
    pub fn ellipsoid(&self) -> Ellipsoid {
        self.inflated(0.0)
    }

    /// Radius `(mu sigma^2 + eta) / n`.
    pub fn inflated(&self, eta: f64) -> Ellipsoid {
        Ellipsoid {
            center: self.theta_hat.as_slice().to_vec(),
            shape: self.shape.clone(),
            radius_sq: (self.mu * self.sigma_sq + eta) / self.n as f64,
        }
    }
}

/// Noise variance used by [`asymptotic_ellipsoid`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseVariance {
    Known(f64),
    Estimate,
}

/// Builds the asymptotic ellipsoid; refuses a rank-deficient `R_n`.
pub fn asymptotic_ellipsoid(
    ds: &Dataset,
    order: ArxOrder,
    p: f64,
    sigma_sq: NoiseVariance,
) -> Result<AsymptoticEllipsoid> {
    let n = ds.len();
    let d = order.dim();
    if n <= d {
        return Err(SpsError::Domain(format!("ellipsoid needs n > d (n = {n}, d = {d})")));
    }
    let (theta_hat, report) = least_squares(ds, order)?;
    if report.degenerate {
        return Err(SpsError::Degenerate(format!(
            "R_n has rank {} < {d}; the asymptotic ellipsoid is undefined",
            report.rank
        )));
    }
    let shape = SymMatrix::outer_mean(&build_regressors(ds, order)?);
    let mu = chi2_quantile(p, d as u32)?;
    let sigma_sq = match sigma_sq {
        NoiseVariance::Known(v) if v >= 0.0 => v,
        NoiseVariance::Known(v) => return Err(SpsError::Domain(format!("noise variance {v} is negative"))),
        NoiseVariance::Estimate => noise_variance_estimate(ds, &theta_hat)?,
    };
    Ok(AsymptoticEllipsoid {
        theta_hat,
        shape,
        mu,
        sigma_sq,
        n,
    })
}

/// Size and containment summary of a sampled region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub total_nodes: usize,
    pub included: usize,
    /// Largest distance between two included nodes.
    pub diameter: f64,
    /// Included nodes outside the ellipsoid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outside_ellipsoid: Option<usize>,
    /// Ellipsoid-member nodes outside the region.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ellipsoid_not_in_region: Option<usize>,
}

impl RegionMetrics {
    /// Fraction of region nodes outside the ellipsoid, 0 for an empty region.
    pub fn excess_fraction(&self) -> Option<f64> {
        self.outside_ellipsoid
            .map(|k| if self.included == 0 { 0.0 } else { k as f64 / self.included as f64 })
    }
}

pub fn region_metrics(grid: &IndicatorGrid, e: Option<&Ellipsoid>) -> RegionMetrics {
    let nodes: Vec<Vec<f64>> = (0..grid.verdicts.len()).map(|i| grid.node(i)).collect();
    point_metrics(&nodes, &grid.verdicts, e)
}

/// Metrics over arbitrary evaluated points.
pub fn point_metrics(points: &[Vec<f64>], verdicts: &[bool], e: Option<&Ellipsoid>) -> RegionMetrics {
    let included: Vec<&Vec<f64>> = points.iter().zip(verdicts).filter(|(_, &v)| v).map(|(p, _)| p).collect();
    let mut diameter_sq: f64 = 0.0;
    for (i, a) in included.iter().enumerate() {
        for b in &included[i + 1..] {
            let d: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            diameter_sq = diameter_sq.max(d);
        }
    }
    let (outside, missing) = match e {
        Some(e) => {
            let mut outside = 0;
            let mut missing = 0;
            for (p, &v) in points.iter().zip(verdicts) {
                let inside = e.contains(p);
                if v && !inside {
                    outside += 1;
                }
                if inside && !v {
                    missing += 1;
                }
            }
            (Some(outside), Some(missing))
        }
        None => (None, None),
    };
    RegionMetrics {
        total_nodes: points.len(),
        included: included.len(),
        diameter: diameter_sq.sqrt(),
        outside_ellipsoid: outside,
        ellipsoid_not_in_region: missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arx::simulate_arx;
    use crate::rng;
    use rand::Rng;

    fn fixture(n: usize, seed: u64) -> (ParamVector, Dataset) {
        let theta = ParamVector::new(vec![-0.7], vec![1.0]).unwrap();
        let mut r = rng::stream(seed);
        let mut u = vec![0.0; n];
        let mut prev = 0.0;
        for v in u.iter_mut() {
            prev = 0.75 * prev + r.random::<f64>() * 2.0 - 1.0;
            *v = prev;
        }
        let noise: Vec<f64> = (0..n).map(|_| (r.random::<f64>() - 0.5) * 0.8).collect();
        let y = simulate_arx(&theta, &u, &noise, &[0.0], &[0.0]).unwrap();
        (theta.clone(), Dataset::with_zero_init(u, y, theta.order()).unwrap())
    }

    #[test]
    fn grid_nodes_are_cell_centers_in_lexicographic_order() {
        let g = GridSpec::new(vec![0.0, 10.0], vec![1.0, 20.0], vec![2, 2]).unwrap();
        assert_eq!(g.total_points(), 4);
        assert_eq!(g.node(0), vec![0.25, 12.5]);
        assert_eq!(g.node(1), vec![0.25, 17.5]);
        assert_eq!(g.node(2), vec![0.75, 12.5]);
        assert_eq!(g.node(3), vec![0.75, 17.5]);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(vec![1.0], vec![0.0], vec![3]).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], vec![0]).is_err());
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![2000, 2000]).unwrap();
        assert!(g.validate(2, DEFAULT_GRID_CAP).is_err());
        assert!(g.validate(3, usize::MAX).is_err());
    }

    #[test]
    fn single_node_grid_at_lse_is_included() {
        let (theta, ds) = fixture(40, 5);
        let (theta_hat, _) = least_squares(&ds, theta.order()).unwrap();
        let setup = SpsSetup::generate(20, 1, 40, 9).unwrap();
        let spec = GridSpec::centered(theta_hat.as_slice(), &[0.01, 0.01], 1).unwrap();
        let grid = sps_region_grid(&ds, theta.order(), &setup, &spec).unwrap();
        assert_eq!(grid.verdicts, vec![true]);
        assert_eq!(grid.ranks, vec![1]);
    }

    #[test]
    fn grid_too_large_is_refused() {
        let (theta, ds) = fixture(10, 5);
        let setup = SpsSetup::generate(4, 1, 10, 9).unwrap();
        let spec = GridSpec::centered(theta.as_slice(), &[0.5, 0.5], 50).unwrap();
        assert!(sps_region_grid_capped(&ds, theta.order(), &setup, &spec, 100).is_err());
    }

    #[test]
    fn raising_q_shrinks_region() {
        let (theta, ds) = fixture(30, 6);
        let setup = SpsSetup::generate(20, 1, 30, 1).unwrap();
        let spec = GridSpec::centered(theta.as_slice(), &[0.5, 0.8], 15).unwrap();
        let grid = sps_region_grid(&ds, theta.order(), &setup, &spec).unwrap();
        let mut prev = grid.verdicts.clone();
        for q in 2..10 {
            let smaller = grid.with_q(q).unwrap();
            for (a, b) in smaller.verdicts.iter().zip(&prev) {
                assert!(!a || *b);
            }
            let direct = sps_region_grid(&ds, theta.order(), &setup.with_q(q).unwrap(), &spec).unwrap();
            assert_eq!(direct.verdicts, smaller.verdicts);
            prev = smaller.verdicts;
        }
    }

    #[test]
    fn variance_estimate_formula() {
        let (theta, ds) = fixture(40, 2);
        let (theta_hat, _) = least_squares(&ds, theta.order()).unwrap();
        let phi = build_regressors(&ds, theta.order()).unwrap();
        let ss: f64 = residuals(&phi, &ds.y, theta_hat.as_slice()).iter().map(|e| e * e).sum();
        assert_eq!(noise_variance_estimate(&ds, &theta_hat).unwrap(), ss / 38.0);

        let zero_noise = Dataset::with_zero_init(
            ds.u.clone(),
            simulate_arx(&theta, &ds.u, &[0.0; 40], &[0.0], &[0.0]).unwrap(),
            theta.order(),
        )
        .unwrap();
        assert!(noise_variance_estimate(&zero_noise, &theta).unwrap() == 0.0);

        let tiny = Dataset::with_zero_init(vec![1.0, 2.0], vec![0.5, 0.1], theta.order()).unwrap();
        assert!(noise_variance_estimate(&tiny, &theta).is_err());
    }

    #[test]
    fn variance_estimate_constant_residuals() {
        // FIR with theta = 0: residuals are the outputs
        let theta = ParamVector::new(vec![], vec![0.0]).unwrap();
        let ds = Dataset::new(vec![0.0; 5], vec![0.3; 5], vec![], vec![0.0]).unwrap();
        let v = noise_variance_estimate(&ds, &theta).unwrap();
        assert!((v - 5.0 * 0.09 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn ellipsoid_radius_and_inflation() {
        let (theta, ds) = fixture(40, 3);
        let e = asymptotic_ellipsoid(&ds, theta.order(), 0.95, NoiseVariance::Known(0.1)).unwrap();
        assert!((e.mu - 5.991_464_547_107_979).abs() < 1e-9);
        assert!((e.ellipsoid().radius_sq - e.mu * 0.1 / 40.0).abs() < 1e-15);
        assert!((e.inflated(0.3).radius_sq - (e.mu * 0.1 + 0.3) / 40.0).abs() < 1e-15);
        let doubled = AsymptoticEllipsoid { n: 80, ..e.clone() };
        assert!((doubled.ellipsoid().radius_sq * 2.0 - e.ellipsoid().radius_sq).abs() < 1e-18);
        assert!(e.ellipsoid().contains(e.theta_hat.as_slice()));
    }

    #[test]
    fn ellipsoid_refused_when_degenerate() {
        let order = ArxOrder::new(1, 1).unwrap();
        let ds = Dataset::with_zero_init(vec![0.0; 10], vec![0.0; 10], order).unwrap();
        let err = asymptotic_ellipsoid(&ds, order, 0.95, NoiseVariance::Estimate).unwrap_err();
        assert!(matches!(err, SpsError::Degenerate(_)));
    }

    #[test]
    fn contains_cases() {
        let e = Ellipsoid {
            center: vec![1.0, 2.0],
            shape: SymMatrix::identity(2),
            radius_sq: 1.0,
        };
        assert!(e.contains(&[1.0, 2.0]));
        assert!(e.contains(&[2.0, 2.0]));
        assert!(!e.contains(&[3.0, 2.0]));
        let point = Ellipsoid { radius_sq: 0.0, ..e.clone() };
        assert!(point.contains(&[1.0, 2.0]));
        assert!(!point.contains(&[1.0, 2.0 + 1e-9]));
    }

    #[test]
    fn metrics_cases() {
        let pts = vec![vec![0.0, 0.0], vec![0.3, 0.0], vec![5.0, 5.0]];
        let m = point_metrics(&pts, &[false, false, false], None);
        assert_eq!((m.included, m.diameter), (0, 0.0));
        let m = point_metrics(&pts, &[true, true, false], None);
        assert_eq!(m.included, 2);
        assert!((m.diameter - 0.3).abs() < 1e-15);
        let e = Ellipsoid {
            center: vec![0.0, 0.0],
            shape: SymMatrix::identity(2),
            radius_sq: 0.01,
        };
        let m = point_metrics(&pts, &[true, true, false], Some(&e));
        assert_eq!(m.outside_ellipsoid, Some(1));
        assert_eq!(m.ellipsoid_not_in_region, Some(0));
        assert_eq!(m.excess_fraction(), Some(0.5));
        let big = Ellipsoid { radius_sq: 1.0, ..e };
        let m = point_metrics(&pts, &[true, true, false], Some(&big));
        assert_eq!(m.outside_ellipsoid, Some(0));
    }

    #[test]
    fn ellipsoid_record_round_trip() {
        let e = Ellipsoid {
            center: vec![-0.7, 1.0],
            shape: SymMatrix::new(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap(),
            radius_sq: 0.02,
        };
        let json = serde_json::to_string(&e.to_record()).unwrap();
        assert_eq!(json, r#"{"center":[-0.7,1.0],"shape":[2.0,0.5,0.5,1.0],"radius_sq":0.02}"#);
        let back = Ellipsoid::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
