use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::arx::{simulate_arx, Dataset, ParamVector};
use crate::error::{config_err, Result};
use crate::sps::{rank_under_pi, SpsEvaluator, SpsSetup};

/// Largest number of (noise signs, perturbation signs, permutation) configurations enumerated.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

/// Reduced fraction `num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactCoverage {
    pub num: u64,
    pub den: u64,
}

impl ExactCoverage {
    fn reduced(num: u64, den: u64) -> Self {
        let g = num.gcd(&den).max(1);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for ExactCoverage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Exact probability that the SPS region contains `theta_star`, given fixed
/// noise magnitudes.
///
/// Every true-noise sign pattern, every perturbation sign matrix and every
/// permutation is visited once with equal weight. Norms are computed once per
/// (noise signs, sign matrix) pair and then ranked under each permutation.
pub fn enumerate_exact_coverage(
    abs_noise: &[f64],
    theta_star: &ParamVector,
    u: &[f64],
    u_init: &[f64],
    y_init: &[f64],
    m: usize,
    q: usize,
) -> Result<ExactCoverage> {
    let n = abs_noise.len();
    if n == 0 || u.len() != n {
        return Err(config_err("abs_noise and input must have the same positive length"));
    }
    if abs_noise.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(config_err("noise magnitudes must be positive and finite"));
    }
    SpsSetup::generate(m, q, 1, 0)?;
    let perms = permutations(m);
    let sign_bits = n * (m - 1);
    let total = 1u128
        .checked_shl((n + sign_bits) as u32)
        .and_then(|v| v.checked_mul(perms.len() as u128))
        .filter(|&v| v <= ENUMERATION_BUDGET)
        .ok_or_else(|| config_err(format!("enumeration exceeds {ENUMERATION_BUDGET} configurations")))?;

    let order = theta_star.order();
    let mut included = 0u64;
    for noise_mask in 0u64..(1 << n) {
        let noise: Vec<f64> = (0..n).map(|t| signed(abs_noise[t], noise_mask >> t & 1 == 1)).collect();
        let y = simulate_arx(theta_star, u, &noise, y_init, u_init)?;
        let ds = Dataset::new(u.to_vec(), y, y_init.to_vec(), u_init.to_vec())?;
        for sign_mask in 0u64..(1 << sign_bits) {
            let signs: Vec<i8> = (0..sign_bits)
                .map(|b| if sign_mask >> b & 1 == 1 { -1 } else { 1 })
                .collect();
            let setup = SpsSetup::from_parts(q, n, signs, (0..m).collect(), 0)?;
            let eval = SpsEvaluator::new(&ds, order, &setup)?;
            let norms = eval.s_vectors(theta_star)?.sq_norms;
            included += perms
                .iter()
                .filter(|perm| rank_under_pi(&norms, perm) <= m - q)
                .count() as u64;
        }
    }
    Ok(ExactCoverage::reduced(included, total as u64))
}

fn signed(v: f64, negative: bool) -> f64 {
    if negative {
        -v
    } else {
        v
    }
}

/// All permutations of `0..m` in lexicographic order.
fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..m).collect();
    let mut out = vec![current.clone()];
    loop {
        let Some(i) = (1..m).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..m).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta() -> ParamVector {
        ParamVector::new(vec![-0.7], vec![1.0]).unwrap()
    }

    #[test]
    fn permutation_listing() {
        assert_eq!(permutations(1), vec![vec![0]]);
        let p3 = permutations(3);
        assert_eq!(p3.len(), 6);
        assert_eq!(p3[0], vec![0, 1, 2]);
        assert_eq!(p3[5], vec![2, 1, 0]);
        let mut sorted = p3.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
    }

    #[test]
    fn two_steps_two_and_three_perturbations() {
        let u = [1.0, -0.5];
        let half = enumerate_exact_coverage(&[0.7, 1.3], &theta(), &u, &[0.4], &[0.0], 2, 1).unwrap();
        assert_eq!(half, ExactCoverage { num: 1, den: 2 });
        let two_thirds = enumerate_exact_coverage(&[0.7, 1.3], &theta(), &u, &[0.4], &[0.0], 3, 1).unwrap();
        assert_eq!(two_thirds, ExactCoverage { num: 2, den: 3 });
    }

    #[test]
    fn zero_initial_conditions() {
        // phi_1 = 0 here, so R_n is singular and the pseudoinverse path is used.
        let u = [1.0, -0.5];
        for (m, num, den) in [(2, 1, 2), (3, 2, 3)] {
            let r = enumerate_exact_coverage(&[0.7, 1.3], &theta(), &u, &[0.0], &[0.0], m, 1).unwrap();
            assert_eq!(r, ExactCoverage { num, den });
        }
    }

    #[test]
    fn three_steps() {
        let u = [1.0, -0.5, 0.8];
        let r = enumerate_exact_coverage(&[0.7, 1.3, 0.4], &theta(), &u, &[0.4], &[0.2], 2, 1).unwrap();
        assert_eq!(r, ExactCoverage { num: 1, den: 2 });
    }

    #[test]
    fn budget_and_input_checks() {
        let u = vec![1.0; 8];
        assert!(enumerate_exact_coverage(&[1.0; 8], &theta(), &u, &[0.0], &[0.0], 4, 1).is_err());
        assert!(enumerate_exact_coverage(&[1.0, 0.0], &theta(), &[1.0, 1.0], &[0.0], &[0.0], 2, 1).is_err());
        assert!(enumerate_exact_coverage(&[1.0], &theta(), &[1.0, 1.0], &[0.0], &[0.0], 2, 1).is_err());
    }

    #[test]
    fn display_and_json() {
        let r = ExactCoverage::reduced(6, 9);
        assert_eq!(r.to_string(), "2/3");
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"num":2,"den":3}"#);
    }
}
