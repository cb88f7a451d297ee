//! ARX model representation, simulation, regressors and prediction errors.
//!
//! The system is
//!
//! ```text
//! Y_t + a_1 Y_{t-1} + ... + a_na Y_{t-na} = b_1 U_{t-1} + ... + b_nb U_{t-nb} + N_t
//! ```
//!
//! written in regression form as `Y_t = phi_t' theta + N_t` with
//! `phi_t = [-Y_{t-1}, ..., -Y_{t-na}, U_{t-1}, ..., U_{t-nb}]` and
//! `theta = [a_1, ..., a_na, b_1, ..., b_nb]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::numerics::{solve_least_squares, LsReport};

/// Model orders `(n_a, n_b)`. `n_a = 0` is the FIR case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArxOrder {
    pub na: usize,
    pub nb: usize,
}

impl ArxOrder {
    pub fn new(na: usize, nb: usize) -> Result<Self> {
        if nb == 0 {
            return Err(config_err("exogenous order n_b must be positive"));
        }
        Ok(Self { na, nb })
    }

    /// Parameter dimension `d = n_a + n_b`.
    pub fn dim(&self) -> usize {
        self.na + self.nb
    }
}

/// Parameter vector `theta = [a_1..a_na, b_1..b_nb]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AbForm", into = "AbForm")]
pub struct ParamVector {
    order: ArxOrder,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AbForm {
    #[serde(default)]
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TryFrom<AbForm> for ParamVector {
    type Error = crate::SpsError;
    fn try_from(f: AbForm) -> Result<Self> {
        ParamVector::new(f.a, f.b)
    }
}

impl From<ParamVector> for AbForm {
    fn from(p: ParamVector) -> Self {
        AbForm {
            a: p.a().to_vec(),
            b: p.b().to_vec(),
        }
    }
}

impl ParamVector {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let order = ArxOrder::new(a.len(), b.len())?;
        let mut values = a;
        values.extend(b);
        Ok(Self { order, values })
    }

    pub fn from_slice(order: ArxOrder, values: &[f64]) -> Result<Self> {
        if values.len() != order.dim() {
            return Err(config_err(format!(
                "parameter vector has length {}, expected {}",
                values.len(),
                order.dim()
            )));
        }
        Ok(Self {
            order,
            values: values.to_vec(),
        })
    }

    pub fn zeros(order: ArxOrder) -> Self {
        Self {
            order,
            values: vec![0.0; order.dim()],
        }
    }

    pub fn order(&self) -> ArxOrder {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Autoregressive coefficients `a_1..a_na`.
    pub fn a(&self) -> &[f64] {
        &self.values[..self.order.na]
    }

    /// Exogenous coefficients `b_1..b_nb`.
    pub fn b(&self) -> &[f64] {
        &self.values[self.order.na..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Observed sample: inputs, outputs and initial conditions.
///
/// `y_init[k]` holds `Y_{-k}` (so `y_init[0] = Y_0`), likewise for `u_init`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default)]
    pub y_init: Vec<f64>,
    #[serde(default)]
    pub u_init: Vec<f64>,
}

impl Dataset {
    pub fn new(u: Vec<f64>, y: Vec<f64>, y_init: Vec<f64>, u_init: Vec<f64>) -> Result<Self> {
        if u.len() != y.len() {
            return Err(config_err(format!(
                "input length {} differs from output length {}",
                u.len(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(config_err("dataset must contain at least one sample"));
        }
        Ok(Self {
            u,
            y,
            y_init,
            u_init,
        })
    }

    /// Dataset with zero initial conditions sized for `order`.
    pub fn with_zero_init(u: Vec<f64>, y: Vec<f64>, order: ArxOrder) -> Result<Self> {
        Self::new(u, y, vec![0.0; order.na], vec![0.0; order.nb])
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn check_order(&self, order: ArxOrder) -> Result<()> {
        if self.y_init.len() != order.na {
            return Err(config_err(format!(
                "y_init has length {}, order requires n_a = {}",
                self.y_init.len(),
                order.na
            )));
        }
        if self.u_init.len() != order.nb {
            return Err(config_err(format!(
                "u_init has length {}, order requires n_b = {}",
                self.u_init.len(),
                order.nb
            )));
        }
        if self.u.len() != self.y.len() || self.y.is_empty() {
            return Err(config_err("dataset input/output lengths are inconsistent"));
        }
        Ok(())
    }

    /// `Y_t` for `1 - n_a <= t <= n` (1-based time).
    pub fn y_at(&self, t: isize) -> f64 {
        lagged(&self.y, &self.y_init, t)
    }

    /// `U_t` for `1 - n_b <= t <= n` (1-based time).
    pub fn u_at(&self, t: isize) -> f64 {
        lagged(&self.u, &self.u_init, t)
    }
}

#[inline]
fn lagged(series: &[f64], init: &[f64], t: isize) -> f64 {
    if t >= 1 {
        series[(t - 1) as usize]
    } else {
        init[(-t) as usize]
    }
}

/// The regressors `phi_1..phi_n`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorSequence {
    dim: usize,
    data: Vec<f64>,
}

impl RegressorSequence {
    pub fn from_rows(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row for 0-based index `i`, i.e. `phi_{i+1}`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

/// Builds `phi_t` for `t = 1..n`, drawing pre-sample values from the initial conditions.
pub fn build_regressors(ds: &Dataset, order: ArxOrder) -> Result<RegressorSequence> {
    ds.check_order(order)?;
    let n = ds.len();
    let d = order.dim();
    let mut data = Vec::with_capacity(n * d);
    for t in 1..=n as isize {
        for k in 1..=order.na as isize {
            data.push(-ds.y_at(t - k));
        }
        for k in 1..=order.nb as isize {
            data.push(ds.u_at(t - k));
        }
    }
    Ok(RegressorSequence { dim: d, data })
}

/// Simulates the ARX recursion forward in time.
///
/// Unstable parameters are simulated as-is.
pub fn simulate_arx(
    theta: &ParamVector,
    u: &[f64],
    noise: &[f64],
    y_init: &[f64],
    u_init: &[f64],
) -> Result<Vec<f64>> {
    let order = theta.order();
    if u.len() != noise.len() {
        return Err(config_err(format!(
            "input length {} differs from noise length {}",
            u.len(),
            noise.len()
        )));
    }
    if y_init.len() != order.na || u_init.len() != order.nb {
        return Err(config_err(format!(
            "initial conditions ({}, {}) do not match order ({}, {})",
            y_init.len(),
            u_init.len(),
            order.na,
            order.nb
        )));
    }
    let n = u.len();
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; order.dim()];
    for t in 1..=n as isize {
        for k in 1..=order.na as isize {
            let s = t - k;
            row[(k - 1) as usize] = -if s >= 1 { y[(s - 1) as usize] } else { y_init[(-s) as usize] };
        }
        for k in 1..=order.nb as isize {
            row[order.na + (k - 1) as usize] = lagged(u, u_init, t - k);
        }
        y.push(dot(&row, theta.as_slice()) + noise[(t - 1) as usize]);
    }
    Ok(y)
}

/// Prediction errors `N_t(theta) = Y_t - phi_t' theta` for `t = 1..n`.
pub fn prediction_errors(theta: &ParamVector, ds: &Dataset) -> Result<Vec<f64>> {
    let phi = build_regressors(ds, theta.order())?;
    Ok(residuals(&phi, &ds.y, theta.as_slice()))
}

pub(crate) fn residuals(phi: &RegressorSequence, y: &[f64], theta: &[f64]) -> Vec<f64> {
    phi.rows().zip(y).map(|(row, &yt)| yt - dot(row, theta)).collect()
}

/// Least-squares estimate `theta_hat_n` for the given dataset and orders.
pub fn least_squares(ds: &Dataset, order: ArxOrder) -> Result<(ParamVector, LsReport)> {
    let phi = build_regressors(ds, order)?;
    let (theta, report) = solve_least_squares(&phi, &ds.y)?;
    Ok((ParamVector { order, values: theta }, report))
}

/// Outcome of the autoregressive stability check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    /// Largest modulus among the roots of `z^na A(z^-1; theta)`.
    pub spectral_radius: f64,
}

/// Checks whether all roots of `z^na + a_1 z^(na-1) + ... + a_na` lie strictly
/// inside the unit circle. Roots on the circle count as unstable.
pub fn ar_poly_stable(theta: &ParamVector) -> Stability {
    let a = theta.a();
    let na = a.len();
    if na == 0 {
        return Stability {
            stable: true,
            spectral_radius: 0.0,
        };
    }
    let mut companion = DMatrix::<f64>::zeros(na, na);
    for (j, &aj) in a.iter().enumerate() {
        companion[(0, j)] = -aj;
    }
    for i in 1..na {
        companion[(i, i - 1)] = 1.0;
    }
    let radius = companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    Stability {
        stable: radius < 1.0,
        spectral_radius: radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_order() -> ArxOrder {
        ArxOrder::new(1, 1).unwrap()
    }

    #[test]
    fn regressors_hand_example() {
        let ds = Dataset::new(vec![1.0, 1.0], vec![1.0, 1.7], vec![0.0], vec![1.0]).unwrap();
        let phi = build_regressors(&ds, first_order()).unwrap();
        assert_eq!(phi.row(0), &[0.0, 1.0]);
        assert_eq!(phi.row(1), &[-1.0, 1.0]);
    }

    #[test]
    fn fir_regressors_shift_inputs() {
        let order = ArxOrder::new(0, 2).unwrap();
        let ds = Dataset::new(vec![2.0, 4.0], vec![0.0, 0.0], vec![], vec![5.0, 3.0]).unwrap();
        let phi = build_regressors(&ds, order).unwrap();
        assert_eq!(phi.row(0), &[5.0, 3.0]);
        assert_eq!(phi.row(1), &[2.0, 5.0]);
    }

    #[test]
    fn zero_dataset_gives_zero_regressors() {
        let order = ArxOrder::new(2, 2).unwrap();
        let ds = Dataset::with_zero_init(vec![0.0; 5], vec![0.0; 5], order).unwrap();
        let phi = build_regressors(&ds, order).unwrap();
        assert!(phi.as_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn regressors_reject_bad_init() {
        let ds = Dataset::new(vec![1.0], vec![1.0], vec![], vec![0.0]).unwrap();
        assert!(build_regressors(&ds, first_order()).is_err());
        assert!(Dataset::new(vec![1.0], vec![1.0, 2.0], vec![], vec![]).is_err());
    }

    #[test]
    fn simulate_hand_recursion() {
        let theta = ParamVector::new(vec![-0.7], vec![1.0]).unwrap();
        let y = simulate_arx(&theta, &[1.0, 1.0], &[0.0, 0.0], &[0.0], &[1.0]).unwrap();
        assert_eq!(y[0], 1.0);
        assert!((y[1] - 1.7).abs() < 1e-15);
    }

    #[test]
    fn simulate_zero_everything() {
        let theta = ParamVector::new(vec![-0.7, 0.1], vec![1.0]).unwrap();
        let y = simulate_arx(&theta, &[0.0; 6], &[0.0; 6], &[0.0, 0.0], &[0.0]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simulate_fir_is_convolution() {
        let theta = ParamVector::new(vec![], vec![2.0, -1.0]).unwrap();
        let u = [1.0, 2.0, 3.0, 4.0];
        let noise = [0.1, -0.2, 0.3, 0.0];
        let y = simulate_arx(&theta, &u, &noise, &[], &[0.5, 0.25]).unwrap();
        let expected = [
            2.0 * 0.5 - 0.25 + 0.1,
            2.0 * 1.0 - 0.5 - 0.2,
            2.0 * 2.0 - 1.0 + 0.3,
            2.0 * 3.0 - 2.0,
        ];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn simulate_checks_lengths() {
        let theta = ParamVector::new(vec![-0.7], vec![1.0]).unwrap();
        assert!(simulate_arx(&theta, &[1.0, 1.0], &[0.0], &[0.0], &[0.0]).is_err());
        assert!(simulate_arx(&theta, &[1.0], &[0.0], &[], &[0.0]).is_err());
    }

    #[test]
    fn prediction_errors_cases() {
        let theta = ParamVector::new(vec![-0.7], vec![1.0]).unwrap();
        let u = vec![1.0, -0.5, 2.0, 0.3];
        let noise = vec![0.0; 4];
        let y = simulate_arx(&theta, &u, &noise, &[0.0], &[0.0]).unwrap();
        let ds = Dataset::with_zero_init(u, y.clone(), theta.order()).unwrap();
        assert!(prediction_errors(&theta, &ds).unwrap().iter().all(|e| e.abs() < 1e-15));

        let zero = ParamVector::zeros(theta.order());
        assert_eq!(prediction_errors(&zero, &ds).unwrap(), y);
    }

    #[test]
    fn stability_cases() {
        let s = ar_poly_stable(&ParamVector::new(vec![-0.7], vec![1.0]).unwrap());
        assert!(s.stable);
        assert!((s.spectral_radius - 0.7).abs() < 1e-12);

        let s = ar_poly_stable(&ParamVector::new(vec![], vec![1.0]).unwrap());
        assert!(s.stable);
        assert_eq!(s.spectral_radius, 0.0);

        let s = ar_poly_stable(&ParamVector::new(vec![-1.0], vec![1.0]).unwrap());
        assert!(!s.stable);
        assert!((s.spectral_radius - 1.0).abs() < 1e-12);

        // z^2 - 0.5 z + 0.06 = (z - 0.2)(z - 0.3)
        let s = ar_poly_stable(&ParamVector::new(vec![-0.5, 0.06], vec![1.0]).unwrap());
        assert!(s.stable);
        assert!((s.spectral_radius - 0.3).abs() < 1e-12);

        // complex pair with modulus sqrt(1.1)
        let s = ar_poly_stable(&ParamVector::new(vec![0.0, 1.1], vec![1.0]).unwrap());
        assert!(!s.stable);
        assert!((s.spectral_radius - 1.1_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn param_vector_json_uses_a_b_form() {
        let p = ParamVector::new(vec![-0.7], vec![1.0]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"a":[-0.7],"b":[1.0]}"#);
        let back: ParamVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<ParamVector>(r#"{"a":[1.0],"b":[]}"#).is_err());
    }
}
