//! Sign-perturbed sums for ARX systems.
//!
//! [`SpsSetup`] holds all randomness of the method (the sign matrix and the
//! tie-breaking permutation) and is fixed once per analysis. [`SpsEvaluator`]
//! evaluates the indicator for any number of candidate parameters against a
//! fixed dataset and setup.
//!
//! The perturbed outputs are computed in deviation form: `Ybar = Y + D` where
//! `A(theta) D_t = (alpha_t - 1) N_t(theta)` with zero initial conditions. This
//! is algebraically identical to simulating `A(theta) Ybar = B(theta) U +
//! alpha N(theta)` from the observed initial outputs, and makes an all-plus
//! sign row reproduce `S_0` bit for bit, so exact ties are resolved by the
//! permutation and not by rounding noise.

use std::fmt;

use num_integer::Integer;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::arx::{build_regressors, residuals, ArxOrder, Dataset, ParamVector, RegressorSequence};
use crate::error::{config_err, Result, SpsError};
use crate::numerics::{accumulate_outer, psd_inv_sqrt, PsdFactor, SymMatrix};
use crate::rng;

/// Largest `m` accepted when deriving `(m, q)` from a confidence level.
pub const DEFAULT_M_CAP: usize = 100_000;

/// A rational confidence probability `p = num / den` in `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Confidence {
    num: u64,
    den: u64,
}

impl Confidence {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(config_err(format!(
                "confidence {num}/{den} must lie strictly between 0 and 1"
            )));
        }
        let g = num.gcd(&den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    /// Parses `"0.95"` or `"19/20"`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse().map_err(|_| config_err(format!("bad confidence '{s}'")))?;
            let den = b.trim().parse().map_err(|_| config_err(format!("bad confidence '{s}'")))?;
            return Self::new(num, den);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.chars().any(|c| !c.is_ascii_digit())
            || frac.chars().any(|c| !c.is_ascii_digit())
            || frac.len() > 18
            || (int.is_empty() && frac.is_empty())
        {
            return Err(config_err(format!("bad confidence '{s}'")));
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| config_err(format!("bad confidence '{s}'")))? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().unwrap() };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(|| config_err(format!("bad confidence '{s}'")))?;
        Self::new(num, den)
    }

    /// Converts through the shortest decimal representation of `p`.
    pub fn from_f64(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(config_err(format!("confidence {p} must lie strictly between 0 and 1")));
        }
        Self::parse(&format!("{p}"))
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    /// Smallest `m` with `(1 - p) m` a positive integer, and that `q`.
    pub fn minimal_mq(&self) -> (usize, usize) {
        (self.den as usize, (self.den - self.num) as usize)
    }

    /// `q = (1 - p) m`, when it is an integer.
    pub fn q_for(&self, m: usize) -> Result<usize> {
        let prod = (self.den - self.num) as u128 * m as u128;
        if prod % self.den as u128 != 0 {
            return Err(config_err(format!(
                "(1 - p) * m = {}/{} * {m} is not an integer",
                self.den - self.num,
                self.den
            )));
        }
        Ok((prod / self.den as u128) as usize)
    }

    /// `floor((1 - p) m)`.
    pub fn floor_q(&self, m: usize) -> usize {
        ((self.den - self.num) as u128 * m as u128 / self.den as u128) as usize
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Serialize for Confidence {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Confidence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => Confidence::from_f64(p),
            Raw::Text(s) => Confidence::parse(&s),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Resolves `(m, q)` from a confidence level and optional explicit values.
///
/// Without overrides the minimal `m` is used. An explicit `m` determines `q`
/// through `p`; explicit `m` and `q` are checked against `p` when `p` is given.
pub fn resolve_mq(
    p: Option<Confidence>,
    m: Option<usize>,
    q: Option<usize>,
    m_cap: usize,
) -> Result<(usize, usize)> {
    let (m, q) = match (p, m, q) {
        (Some(p), None, None) => p.minimal_mq(),
        (Some(p), Some(m), None) => (m, p.q_for(m)?),
        (Some(p), Some(m), Some(q)) => {
            let expected = p.q_for(m)?;
            if expected != q {
                return Err(config_err(format!(
                    "q = {q} is inconsistent with p = {p} and m = {m} (expected q = {expected})"
                )));
            }
            (m, q)
        }
        (None, Some(m), Some(q)) => (m, q),
        (_, None, Some(_)) => return Err(config_err("q given without m")),
        (None, _, None) => return Err(config_err("either p or (m, q) is required")),
    };
    if m > m_cap {
        return Err(config_err(format!("m = {m} exceeds the cap of {m_cap}")));
    }
    if !(m > q && q > 0) {
        return Err(config_err(format!("need integers m > q > 0, got m = {m}, q = {q}")));
    }
    Ok((m, q))
}

/// The random objects of one SPS analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpsSetup {
    m: usize,
    q: usize,
    n: usize,
    /// `(m - 1) x n` row-major signs in `{-1, +1}`; row `i - 1` holds `alpha_{i, .}`.
    signs: Vec<i8>,
    /// `perm[k] = pi(k)`.
    perm: Vec<usize>,
    seed: u64,
}

impl SpsSetup {
    /// Initialization from a confidence level using the minimal `m`.
    pub fn initialize(p: Confidence, n: usize, seed: u64) -> Result<Self> {
        let (m, q) = resolve_mq(Some(p), None, None, DEFAULT_M_CAP)?;
        Self::generate(m, q, n, seed)
    }

    /// Draws `n (m - 1)` fair signs (row-major, `i` then `t`) and then a uniform
    /// permutation by Fisher-Yates, all from one stream seeded by `seed`.
    pub fn generate(m: usize, q: usize, n: usize, seed: u64) -> Result<Self> {
        check_mqn(m, q, n)?;
        let mut rng = rng::stream(seed);
        let signs = (0..(m - 1) * n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        Ok(Self {
            m,
            q,
            n,
            signs,
            perm,
            seed,
        })
    }

    /// Builds a setup from explicit signs and permutation.
    pub fn from_parts(q: usize, n: usize, signs: Vec<i8>, perm: Vec<usize>, seed: u64) -> Result<Self> {
        let m = perm.len();
        check_mqn(m, q, n)?;
        if signs.len() != (m - 1) * n {
            return Err(config_err(format!(
                "sign matrix has {} entries, expected {} x {n}",
                signs.len(),
                m - 1
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(config_err("signs must be +1 or -1"));
        }
        let mut seen = vec![false; m];
        for &p in &perm {
            if p >= m || std::mem::replace(&mut seen[p], true) {
                return Err(config_err("perm is not a permutation of 0..m"));
            }
        }
        Ok(Self {
            m,
            q,
            n,
            signs,
            perm,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Coverage probability `1 - q/m`.
    pub fn confidence(&self) -> f64 {
        1.0 - self.q as f64 / self.m as f64
    }

    /// Signs `alpha_{i, 1..n}` for `i` in `1..m`.
    pub fn signs_row(&self, i: usize) -> &[i8] {
        assert!(i >= 1 && i < self.m, "sign rows are indexed 1..m-1");
        &self.signs[(i - 1) * self.n..i * self.n]
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Same randomness with a different `q`.
    pub fn with_q(&self, q: usize) -> Result<Self> {
        check_mqn(self.m, q, self.n)?;
        Ok(Self { q, ..self.clone() })
    }

    pub fn to_record(&self, include_randomness: bool) -> SpsSetupRecord {
        SpsSetupRecord {
            m: self.m,
            q: self.q,
            n: self.n,
            seed: self.seed,
            signs: include_randomness.then(|| self.signs.chunks(self.n).map(<[i8]>::to_vec).collect()),
            perm: include_randomness.then(|| self.perm.clone()),
        }
    }
}

fn check_mqn(m: usize, q: usize, n: usize) -> Result<()> {
    if !(m > q && q > 0) {
        return Err(config_err(format!("need integers m > q > 0, got m = {m}, q = {q}")));
    }
    if n == 0 {
        return Err(config_err("sample size must be positive"));
    }
    Ok(())
}

/// JSON form of a setup. Without explicit randomness the signs and permutation
/// are regenerated from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpsSetupRecord {
    pub m: usize,
    pub q: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs: Option<Vec<Vec<i8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm: Option<Vec<usize>>,
}

impl SpsSetupRecord {
    pub fn into_setup(self) -> Result<SpsSetup> {
        match (self.signs, self.perm) {
            (None, None) => SpsSetup::generate(self.m, self.q, self.n, self.seed),
            (Some(rows), Some(perm)) => {
                if perm.len() != self.m {
                    return Err(config_err("perm length differs from m"));
                }
                if rows.iter().any(|r| r.len() != self.n) {
                    return Err(config_err("every sign row must have length n"));
                }
                SpsSetup::from_parts(self.q, self.n, rows.concat(), perm, self.seed)
            }
            _ => Err(config_err("signs and perm must be given together")),
        }
    }
}

/// Result of evaluating the indicator at one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpsEvaluation {
    /// `|S_0|^2, ..., |S_{m-1}|^2`.
    pub s_sq_norms: Vec<f64>,
    /// Position of `|S_0|^2` in the ascending order, in `1..=m`.
    pub rank: usize,
    pub included: bool,
    /// Number of `R` matrices that needed the pseudoinverse.
    pub rank_deficient: usize,
}

/// `1 + #{k >= 1 : Z_0 > Z_k, or Z_0 == Z_k and pi(0) > pi(k)}`.
pub fn rank_under_pi(s_sq_norms: &[f64], perm: &[usize]) -> usize {
    debug_assert_eq!(s_sq_norms.len(), perm.len());
    let z0 = s_sq_norms[0];
    let p0 = perm[0];
    1 + s_sq_norms[1..]
        .iter()
        .zip(&perm[1..])
        .filter(|&(&z, &p)| z0 > z || (z0 == z && p0 > p))
        .count()
}

/// The perturbed outputs `Ybar_{i,1..n}(theta)` driven by `alpha_{i,t} N_t(theta)`.
pub fn perturbed_trajectory(theta: &ParamVector, ds: &Dataset, signs_row: &[i8]) -> Result<Vec<f64>> {
    let order = theta.order();
    let phi = build_regressors(ds, order)?;
    check_signs(signs_row, ds.len())?;
    let nhat = residuals(&phi, &ds.y, theta.as_slice());
    let delta = deviation(theta.a(), &nhat, signs_row);
    Ok(ds.y.iter().zip(&delta).map(|(y, d)| y + d).collect())
}

/// The re-generated regressors built from the perturbed outputs and the observed inputs.
pub fn perturbed_regressors(theta: &ParamVector, ds: &Dataset, signs_row: &[i8]) -> Result<RegressorSequence> {
    let ybar = perturbed_trajectory(theta, ds, signs_row)?;
    let perturbed = Dataset {
        y: ybar,
        ..ds.clone()
    };
    build_regressors(&perturbed, theta.order())
}

fn check_signs(signs: &[i8], n: usize) -> Result<()> {
    if signs.len() != n {
        return Err(config_err(format!("sign row has length {}, expected {n}", signs.len())));
    }
    Ok(())
}

/// `D_t = -sum_k a_k D_{t-k} + (alpha_t - 1) N_t`, `D_t = 0` for `t <= 0`.
fn deviation(a: &[f64], nhat: &[f64], signs: &[i8]) -> Vec<f64> {
    let mut delta = vec![0.0; nhat.len()];
    for t in 0..nhat.len() {
        let mut acc = 0.0;
        for (k, &ak) in a.iter().enumerate() {
            if t > k {
                acc += -ak * delta[t - k - 1];
            }
        }
        delta[t] = acc + (signs[t] as f64 - 1.0) * nhat[t];
    }
    delta
}

/// `S_0, ..., S_{m-1}` at `theta`, row-major `m x d`.
pub fn compute_s_vectors(theta: &ParamVector, ds: &Dataset, setup: &SpsSetup) -> Result<Vec<Vec<f64>>> {
    let eval = SpsEvaluator::new(ds, theta.order(), setup)?;
    let s = eval.s_vectors(theta)?;
    Ok(s.vectors.chunks(s.dim).map(<[f64]>::to_vec).collect())
}

/// Full indicator pipeline at `theta`.
pub fn sps_indicator(theta: &ParamVector, ds: &Dataset, setup: &SpsSetup) -> Result<SpsEvaluation> {
    SpsEvaluator::new(ds, theta.order(), setup)?.evaluate(theta)
}

/// `S` vectors with their squared norms.
#[derive(Clone, Debug)]
pub struct SVectors {
    pub dim: usize,
    pub vectors: Vec<f64>,
    pub sq_norms: Vec<f64>,
    pub rank_deficient: usize,
}

/// Evaluates the indicator against a fixed dataset and setup.
///
/// Holds the regressors and `R_n^{-1/2}`, which do not depend on `theta`.
#[derive(Debug)]
pub struct SpsEvaluator<'a> {
    ds: &'a Dataset,
    order: ArxOrder,
    setup: &'a SpsSetup,
    phi: RegressorSequence,
    r0: PsdFactor,
}

impl<'a> SpsEvaluator<'a> {
    pub fn new(ds: &'a Dataset, order: ArxOrder, setup: &'a SpsSetup) -> Result<Self> {
        if setup.n() != ds.len() {
            return Err(config_err(format!(
                "setup was drawn for n = {}, dataset has n = {}",
                setup.n(),
                ds.len()
            )));
        }
        let phi = build_regressors(ds, order)?;
        let r0 = psd_inv_sqrt(&SymMatrix::outer_mean(&phi))?;
        Ok(Self {
            ds,
            order,
            setup,
            phi,
            r0,
        })
    }

    pub fn regressors(&self) -> &RegressorSequence {
        &self.phi
    }

    pub fn setup(&self) -> &SpsSetup {
        self.setup
    }

    /// `R_n^{-1/2}` with its rank diagnostics.
    pub fn r_n_factor(&self) -> &PsdFactor {
        &self.r0
    }

    pub fn s_vectors(&self, theta: &ParamVector) -> Result<SVectors> {
        if theta.order() != self.order {
            return Err(config_err("parameter order differs from the evaluator's order"));
        }
        let d = self.order.dim();
        let m = self.setup.m();
        let n = self.ds.len();
        let nhat = residuals(&self.phi, &self.ds.y, theta.as_slice());
        let mut vectors = vec![0.0; m * d];
        let mut rank_deficient = usize::from(!self.r0.is_full_rank());

        self.reference_statistic(&nhat, &mut vectors[..d]);
        let mut batch = Batch::new(d, n);
        let mut first = 1;
        while first < m {
            let lanes = LANES.min(m - first);
            self.perturbed_batch(theta.a(), &nhat, first, lanes, &mut batch);
            for l in 0..lanes {
                let out = &mut vectors[(first + l) * d..(first + l + 1) * d];
                if !batch.finish(l, n, out)? {
                    rank_deficient += 1;
                }
            }
            first += lanes;
        }
        let sq_norms = vectors.chunks(d).map(|s| s.iter().map(|v| v * v).sum()).collect();
        Ok(SVectors {
            dim: d,
            vectors,
            sq_norms,
            rank_deficient,
        })
    }

    pub fn evaluate(&self, theta: &ParamVector) -> Result<SpsEvaluation> {
        let s = self.s_vectors(theta)?;
        let rank = rank_under_pi(&s.sq_norms, self.setup.perm());
        Ok(SpsEvaluation {
            included: rank <= self.setup.m() - self.setup.q(),
            s_sq_norms: s.sq_norms,
            rank,
            rank_deficient: s.rank_deficient,
        })
    }

    /// `S_0 = R_n^{-1/2} (1/n) sum_t phi_t N_t`.
    fn reference_statistic(&self, nhat: &[f64], out: &mut [f64]) {
        let mut sum = vec![0.0; self.order.dim()];
        for (phi_t, &e) in self.phi.rows().zip(nhat) {
            for (acc, &x) in sum.iter_mut().zip(phi_t) {
                *acc += x * e;
            }
        }
        scale(&mut sum, nhat.len());
        self.r0.apply_into(&sum, out);
    }

    /// Accumulates `sum_t alpha_t phibar_t N_t` and `sum_t phibar_t phibar_t'` for
    /// sign rows `first..first + lanes`.
    ///
    /// The perturbed output is kept as `Ybar = Y + D` with
    /// `D_t = -sum_k a_k D_{t-k} + (alpha_t - 1) N_t`, so an all-plus row repeats the
    /// arithmetic of the reference statistic exactly. Rows are interleaved only to
    /// overlap their recursions; each lane performs the same operations in the same
    /// order as a single-row loop would.
    fn perturbed_batch(&self, a: &[f64], nhat: &[f64], first: usize, lanes: usize, b: &mut Batch) {
        let signs: Vec<&[i8]> = (0..lanes).map(|l| self.setup.signs_row(first + l)).collect();
        b.reset(lanes);
        macro_rules! fixed {
            ($($na:literal, $d:literal);*) => {
                match (self.order.na, self.order.dim()) {
                    $(($na, $d) => return self.fixed_kernel::<$na, $d>(a, nhat, &signs, b),)*
                    _ => {}
                }
            };
        }
        fixed!(0, 1; 0, 2; 0, 3; 1, 2; 1, 3; 1, 4; 2, 3; 2, 4; 2, 5; 2, 6; 3, 6);
        self.generic_kernel(a, nhat, &signs, b);
    }

    fn generic_kernel(&self, a: &[f64], nhat: &[f64], signs: &[&[i8]], b: &mut Batch) {
        let n = nhat.len();
        let na = self.order.na;
        let d = self.order.dim();
        let y = &self.ds.y;
        let y_init = &self.ds.y_init;
        let lanes = signs.len();
        let Batch {
            row,
            sum,
            outer,
            delta,
            ..
        } = b;
        for t in 0..n {
            let phi_t = self.phi.row(t);
            for l in 0..lanes {
                let row = &mut row[l * d..(l + 1) * d];
                for k in 0..na {
                    row[k] = if t > k {
                        -(y[t - k - 1] + delta[(t - k - 1) * LANES + l])
                    } else {
                        -y_init[k - t]
                    };
                }
                row[na..].copy_from_slice(&phi_t[na..]);
                let alpha = signs[l][t] as f64;
                let e = alpha * nhat[t];
                for (acc, &x) in sum[l * d..(l + 1) * d].iter_mut().zip(row.iter()) {
                    *acc += x * e;
                }
                accumulate_outer(&mut outer[l * d * d..(l + 1) * d * d], row);
                let mut acc = 0.0;
                for (k, &ak) in a.iter().enumerate().take(t) {
                    acc += -ak * delta[(t - k - 1) * LANES + l];
                }
                delta[t * LANES + l] = acc + (alpha - 1.0) * nhat[t];
            }
        }
    }

    /// [`Self::generic_kernel`] with the orders known at compile time.
    fn fixed_kernel<const NA: usize, const D: usize>(
        &self,
        a: &[f64],
        nhat: &[f64],
        signs: &[&[i8]],
        b: &mut Batch,
    ) {
        let n = nhat.len();
        let y = &self.ds.y;
        let y_init = &self.ds.y_init;
        let lanes = signs.len();
        let mut a_fixed = [0.0; NA];
        a_fixed.copy_from_slice(a);
        let mut sum = [[0.0; D]; LANES];
        let mut outer = [[[0.0; D]; D]; LANES];
        let mut row = [0.0; D];
        let delta = &mut b.delta;
        for t in 0..n {
            let phi_t = self.phi.row(t);
            let nt = nhat[t];
            for l in 0..lanes {
                for k in 0..NA {
                    row[k] = if t > k {
                        -(y[t - k - 1] + delta[(t - k - 1) * LANES + l])
                    } else {
                        -y_init[k - t]
                    };
                }
                row[NA..].copy_from_slice(&phi_t[NA..D]);
                let alpha = signs[l][t] as f64;
                let e = alpha * nt;
                for k in 0..D {
                    sum[l][k] += row[k] * e;
                }
                for i in 0..D {
                    for j in i..D {
                        outer[l][i][j] += row[i] * row[j];
                    }
                }
                let mut acc = 0.0;
                for k in 0..NA.min(t) {
                    acc += -a_fixed[k] * delta[(t - k - 1) * LANES + l];
                }
                delta[t * LANES + l] = acc + (alpha - 1.0) * nt;
            }
        }
        for l in 0..lanes {
            b.sum[l * D..(l + 1) * D].copy_from_slice(&sum[l]);
            for (i, r) in outer[l].iter().enumerate() {
                b.outer[(l * D + i) * D..(l * D + i + 1) * D].copy_from_slice(r);
            }
        }
    }
}

const LANES: usize = 4;

fn scale(v: &mut [f64], n: usize) {
    let inv = 1.0 / n as f64;
    v.iter_mut().for_each(|x| *x *= inv);
}

/// Accumulators for up to [`LANES`] perturbed statistics; deviations are stored
/// interleaved by time.
struct Batch {
    d: usize,
    row: Vec<f64>,
    sum: Vec<f64>,
    outer: Vec<f64>,
    delta: Vec<f64>,
}

impl Batch {
    fn new(d: usize, n: usize) -> Self {
        Self {
            d,
            row: vec![0.0; LANES * d],
            sum: vec![0.0; LANES * d],
            outer: vec![0.0; LANES * d * d],
            delta: vec![0.0; LANES * n],
        }
    }

    fn reset(&mut self, lanes: usize) {
        let d = self.d;
        self.sum[..lanes * d].iter_mut().for_each(|v| *v = 0.0);
        self.outer[..lanes * d * d].iter_mut().for_each(|v| *v = 0.0);
    }

    /// Writes `R_i^{-1/2} (1/n) sum` of lane `l` into `out`; returns whether `R_i` was full rank.
    fn finish(&mut self, l: usize, n: usize, out: &mut [f64]) -> Result<bool> {
        let d = self.d;
        let sum = &mut self.sum[l * d..(l + 1) * d];
        scale(sum, n);
        let r = SymMatrix::from_upper_sum(d, self.outer[l * d * d..(l + 1) * d * d].to_vec(), n);
        let factor = psd_inv_sqrt(&r).map_err(|e| match e {
            SpsError::NotPsd { .. } => SpsError::Degenerate(format!("perturbed R matrix: {e}")),
            other => other,
        })?;
        factor.apply_into(sum, out);
        Ok(factor.is_full_rank())
    }
}
