//! Noise and input generators.
//!
//! Every noise draw is a magnitude followed by an independent fair sign, so
//! each law is exactly symmetric about zero regardless of the sampler used for
//! the magnitude.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::rng::{self, SpsRng};

/// Time-varying multiplier on the noise standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleProfile {
    /// Linear from `start` at `t = 1` to `end` at `t = n`.
    Ramp { start: f64, end: f64 },
    /// `1 + amplitude * sin(2 pi t / period)`.
    Sine { period: f64, amplitude: f64 },
    /// `before` for `t <= at * n`, `after` afterwards.
    Step { at: f64, before: f64, after: f64 },
}

impl ScaleProfile {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScaleProfile::Ramp { start, end } => start >= 0.0 && end >= 0.0 && start.is_finite() && end.is_finite(),
            ScaleProfile::Sine { period, amplitude } => period > 0.0 && (0.0..=1.0).contains(&amplitude),
            ScaleProfile::Step { at, before, after } => {
                (0.0..=1.0).contains(&at) && before >= 0.0 && after >= 0.0 && before.is_finite() && after.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(config_err(format!("invalid scale profile {self:?}")))
        }
    }

    /// Multiplier at 1-based time `t` of `n`.
    pub fn factor(&self, t: usize, n: usize) -> f64 {
        match *self {
            ScaleProfile::Ramp { start, end } => {
                if n <= 1 {
                    start
                } else {
                    start + (end - start) * (t - 1) as f64 / (n - 1) as f64
                }
            }
            ScaleProfile::Sine { period, amplitude } => {
                1.0 + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin()
            }
            ScaleProfile::Step { at, before, after } => {
                if (t as f64) <= at * n as f64 {
                    before
                } else {
                    after
                }
            }
        }
    }
}

/// Symmetric noise laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    Gaussian {
        variance: f64,
    },
    /// Scale `b = sqrt(variance / 2)`.
    Laplacian {
        variance: f64,
    },
    /// Uniform on `[-w, w]` with `w = sqrt(3 variance)`.
    UniformSymmetric {
        variance: f64,
    },
    /// `0` with probability `zero_prob`, otherwise `+-magnitude`.
    Ternary {
        zero_prob: f64,
        magnitude: f64,
    },
    /// `even` at even `t`, `odd` at odd `t` (1-based).
    Alternating {
        even: Box<NoiseModel>,
        odd: Box<NoiseModel>,
    },
    /// `base` with its standard deviation multiplied by a time profile.
    Scaled {
        base: Box<NoiseModel>,
        scale: ScaleProfile,
    },
}

impl NoiseModel {
    pub fn laplacian(variance: f64) -> Self {
        NoiseModel::Laplacian { variance }
    }

    pub fn gaussian(variance: f64) -> Self {
        NoiseModel::Gaussian { variance }
    }

    pub fn validate(&self) -> Result<()> {
        let check_var = |v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("noise variance must be positive and finite, got {v}")))
            }
        };
        match self {
            NoiseModel::Gaussian { variance }
            | NoiseModel::Laplacian { variance }
            | NoiseModel::UniformSymmetric { variance } => check_var(*variance),
            NoiseModel::Ternary { zero_prob, magnitude } => {
                if (0.0..1.0).contains(zero_prob) && *magnitude > 0.0 && magnitude.is_finite() {
                    Ok(())
                } else {
                    Err(config_err("ternary noise needs 0 <= zero_prob < 1 and magnitude > 0"))
                }
            }
            NoiseModel::Alternating { even, odd } => {
                even.validate()?;
                odd.validate()
            }
            NoiseModel::Scaled { base, scale } => {
                base.validate()?;
                scale.validate()
            }
        }
    }

    /// Variance at 1-based time `t` of `n`.
    pub fn variance_at(&self, t: usize, n: usize) -> f64 {
        match self {
            NoiseModel::Gaussian { variance }
            | NoiseModel::Laplacian { variance }
            | NoiseModel::UniformSymmetric { variance } => *variance,
            NoiseModel::Ternary { zero_prob, magnitude } => (1.0 - zero_prob) * magnitude * magnitude,
            NoiseModel::Alternating { even, odd } => {
                if t % 2 == 0 {
                    even.variance_at(t, n)
                } else {
                    odd.variance_at(t, n)
                }
            }
            NoiseModel::Scaled { base, scale } => base.variance_at(t, n) * scale.factor(t, n).powi(2),
        }
    }

    fn draw(&self, t: usize, n: usize, rng: &mut SpsRng) -> f64 {
        let magnitude = match self {
            NoiseModel::Gaussian { variance } => {
                let z: f64 = rng.sample(StandardNormal);
                variance.sqrt() * z.abs()
            }
            NoiseModel::Laplacian { variance } => {
                let e: f64 = rng.sample(Exp1);
                (variance / 2.0).sqrt() * e
            }
            NoiseModel::UniformSymmetric { variance } => (3.0 * variance).sqrt() * rng.random::<f64>(),
            NoiseModel::Ternary { zero_prob, magnitude } => {
                if rng.random::<f64>() < *zero_prob {
                    0.0
                } else {
                    *magnitude
                }
            }
            NoiseModel::Alternating { even, odd } => {
                return if t % 2 == 0 { even.draw(t, n, rng) } else { odd.draw(t, n, rng) };
            }
            NoiseModel::Scaled { base, scale } => return scale.factor(t, n) * base.draw(t, n, rng),
        };
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }

    /// `n` draws `N_1..N_n` from `rng`.
    pub fn sample(&self, n: usize, rng: &mut SpsRng) -> Vec<f64> {
        (1..=n).map(|t| self.draw(t, n, rng)).collect()
    }
}

/// A noise law with the seed of its stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub model: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

pub fn generate_noise(spec: &NoiseSpec, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(config_err("noise length must be positive"));
    }
    spec.model.validate()?;
    Ok(spec.model.sample(n, &mut rng::stream(spec.seed)))
}

/// Input signal families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputModel {
    /// `U_t = coeff U_{t-1} + V_t`, `V_t` i.i.d. Gaussian, `U_0 = 0`.
    Ar1 { coeff: f64, drive_variance: f64 },
    IidGaussian { variance: f64 },
    Constant { value: f64 },
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    #[serde(flatten)]
    pub model: InputModel,
    #[serde(default)]
    pub seed: u64,
}

/// `U_1..U_n` and the pre-sample inputs `U_0..U_{1-n_b}` (all zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSignal {
    pub u: Vec<f64>,
    pub u_init: Vec<f64>,
}

pub fn generate_input(spec: &InputSpec, n: usize, nb: usize) -> Result<InputSignal> {
    if n == 0 {
        return Err(config_err("input length must be positive"));
    }
    let mut rng = rng::stream(spec.seed);
    let u = match &spec.model {
        InputModel::Ar1 { coeff, drive_variance } => {
            if coeff.is_nan() || coeff.abs() >= 1.0 {
                return Err(config_err(format!("AR(1) input needs |coeff| < 1, got {coeff}")));
            }
            if !(*drive_variance > 0.0 && drive_variance.is_finite()) {
                return Err(config_err("AR(1) drive variance must be positive"));
            }
            let sd = drive_variance.sqrt();
            let mut prev = 0.0;
            (0..n)
                .map(|_| {
                    let v: f64 = rng.sample(StandardNormal);
                    prev = coeff * prev + sd * v;
                    prev
                })
                .collect()
        }
        InputModel::IidGaussian { variance } => {
            if !(*variance > 0.0 && variance.is_finite()) {
                return Err(config_err("input variance must be positive"));
            }
            let sd = variance.sqrt();
            (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        InputModel::Constant { value } => vec![*value; n],
        InputModel::Explicit { values } => {
            if values.len() < n {
                return Err(config_err(format!(
                    "explicit input has {} values, {n} required",
                    values.len()
                )));
            }
            values[..n].to_vec()
        }
    };
    Ok(InputSignal {
        u,
        u_init: vec![0.0; nb],
    })
}
