//! Centered-moment transport through one generation of the recursion.
//!
//! One step sends `X` to `Y = (1/b) Σ_i Z_i` with `Z = Π_j (1+X_j) [Π_ℓ D_ℓ] - 1`.
//! Moments of `Z` are accumulated one factor at a time: for independent
//! centered `U`, `V`, the product `(1+U)(1+V) - 1 = U + V(1+U)` has
//! `E[W^p] = Σ_q C(p,q) E[V^q] Σ_t C(q,t) E[U^{p-q+t}]`, which involves no
//! large alternating sums. The literal alternating form is kept in
//! double-double precision as [`moment_map_dd`] for cross-validation.

use serde::{Deserialize, Serialize};

use super::{RSolver, R_TOL};
use crate::dd::Dd;
use crate::disorder::{binomial, centered_weight_moments, DisorderSpec, WeightMoments};
use crate::error::{Error, Result};
use crate::Model;

/// Largest supported moment order.
pub const M_MAX_CAP: usize = 12;

/// Centered moments `μ_2..μ_m`; stored with `μ_0 = 1` and `μ_1 = 0` in front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    mu: Vec<f64>,
}

impl MomentVector {
    pub fn zero(m_max: usize) -> Result<Self> {
        check_m_max(m_max)?;
        let mut mu = vec![0.0; m_max + 1];
        mu[0] = 1.0;
        Ok(Self { mu })
    }

    /// From `[μ_2, ..., μ_m]`.
    pub fn from_centered(values: &[f64]) -> Result<Self> {
        let mut mv = Self::zero(values.len() + 1)?;
        mv.mu[2..].copy_from_slice(values);
        Ok(mv)
    }

    /// From a full vector `[1, 0, μ_2, ...]`.
    pub fn from_full(mu: Vec<f64>) -> Result<Self> {
        check_m_max(mu.len().saturating_sub(1))?;
        Ok(Self { mu })
    }

    /// Centered normal moments `(m-1)!! v^{m/2}`, zero for odd `m`.
    pub fn gaussian(v: f64, m_max: usize) -> Result<Self> {
        let mut mv = Self::zero(m_max)?;
        let mut dfact = 1.0;
        for m in (2..=m_max).step_by(2) {
            dfact *= (m - 1) as f64;
            mv.mu[m] = dfact * v.powi(m as i32 / 2);
        }
        Ok(mv)
    }

    pub fn m_max(&self) -> usize {
        self.mu.len() - 1
    }

    /// `μ_m`; `m = 0, 1` give 1 and 0.
    pub fn get(&self, m: usize) -> f64 {
        self.mu[m]
    }

    pub fn set(&mut self, m: usize, value: f64) {
        assert!(m >= 2, "μ_0 and μ_1 are fixed");
        self.mu[m] = value;
    }

    pub fn as_full(&self) -> &[f64] {
        &self.mu
    }

    /// `[μ_2, ..., μ_m]`.
    pub fn centered(&self) -> &[f64] {
        &self.mu[2..]
    }

    pub fn variance(&self) -> f64 {
        self.mu[2]
    }

    pub fn truncate(&self, m_max: usize) -> Result<Self> {
        check_m_max(m_max)?;
        if m_max > self.m_max() {
            return Err(Error::InvalidParameter(format!(
                "cannot extend moments from {} to {m_max}",
                self.m_max()
            )));
        }
        Ok(Self {
            mu: self.mu[..=m_max].to_vec(),
        })
    }

    /// Sign and Cauchy–Schwarz checks, with a small relative slack.
    pub fn is_admissible(&self) -> bool {
        let m = self.m_max();
        let even_ok = (2..=m).step_by(2).all(|k| self.mu[k] >= 0.0);
        let cs_ok = m < 4 || self.mu[3].powi(2) <= self.mu[2] * self.mu[4] * (1.0 + 1e-9);
        even_ok && cs_ok && self.mu.iter().all(|x| x.is_finite())
    }
}

fn check_m_max(m_max: usize) -> Result<()> {
    if (2..=M_MAX_CAP).contains(&m_max) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "m_max must lie in 2..={M_MAX_CAP}, got {m_max}"
        )))
    }
}

/// Raw moments `E[(1+X)^q]` from centered moments `[1, 0, μ_2, ...]` of `X`.
pub fn raw_from_centered_shifted(mu: &[f64]) -> Vec<f64> {
    (0..mu.len())
        .map(|q| (0..=q).map(|k| binomial(q, k) * mu[k]).sum())
        .collect()
}

/// Cumulants `κ_1..κ_m` (index 0 unused) from raw moments `[1, m_1, ...]`.
pub fn moments_to_cumulants(m: &[f64]) -> Vec<f64> {
    let n = m.len();
    let mut k = vec![0.0; n];
    for j in 1..n {
        let mut s = m[j];
        for i in 1..j {
            s -= binomial(j - 1, i - 1) * k[i] * m[j - i];
        }
        k[j] = s;
    }
    k
}

/// Inverse of [`moments_to_cumulants`]; returns `[1, m_1, ...]`.
pub fn cumulants_to_moments(k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let mut m = vec![0.0; n];
    m[0] = 1.0;
    for j in 1..n {
        m[j] = (1..=j).map(|i| binomial(j - 1, i - 1) * k[i] * m[j - i]).sum();
    }
    m
}

/// Centered moments of `(1+U)(1+V) - 1` for independent centered `U`, `V`.
fn product_step(u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    out[0] = 1.0;
    for (p, slot) in out.iter_mut().enumerate().skip(2) {
        let mut s = 0.0;
        for (q, vq) in v.iter().enumerate().take(p + 1) {
            if *vq == 0.0 {
                continue;
            }
            let inner: f64 = (0..=q).map(|t| binomial(q, t) * u[p - q + t]).sum();
            s += binomial(p, q) * vq * inner;
        }
        *slot = s;
    }
    out
}

/// Centered moments of the average of `b` i.i.d. copies of a centered variable.
fn average_of_copies(b: u32, z: &[f64]) -> Vec<f64> {
    let mut k = moments_to_cumulants(z);
    let bf = b as f64;
    for (p, kp) in k.iter_mut().enumerate().skip(2) {
        *kp /= bf.powi(p as i32 - 1);
    }
    k[1] = 0.0;
    cumulants_to_moments(&k)
}

fn site_factor(site: Option<&WeightMoments>, m_max: usize) -> Result<Option<Vec<f64>>> {
    match site {
        None => Ok(None),
        Some(w) if w.m_max() < m_max => Err(Error::InvalidParameter(format!(
            "site weight moments stop at {} but {m_max} are needed",
            w.m_max()
        ))),
        Some(w) => Ok(Some(w.mu[..=m_max].to_vec())),
    }
}

/// One generation of the moment recursion, bond (`site = None`) or site.
pub fn moment_map(b: u32, mv: &MomentVector, site: Option<&WeightMoments>) -> Result<MomentVector> {
    if b < 2 {
        return Err(Error::InvalidParameter(format!("b must be >= 2, got {b}")));
    }
    let m = mv.m_max();
    let d = site_factor(site, m)?;
    let x = mv.as_full();
    let mut z = x.to_vec();
    for _ in 1..b {
        z = product_step(&z, x);
    }
    if let Some(d) = d {
        for _ in 1..b {
            z = product_step(&z, &d);
        }
    }
    MomentVector::from_full(average_of_copies(b, &z))
}

/// [`moment_map`] through the literal alternating binomial sums, carried out
/// in double-double arithmetic.
pub fn moment_map_dd(b: u32, mv: &MomentVector, site: Option<&WeightMoments>) -> Result<MomentVector> {
    if b < 2 {
        return Err(Error::InvalidParameter(format!("b must be >= 2, got {b}")));
    }
    let m = mv.m_max();
    let d = site_factor(site, m)?;
    let raw_dd = |mu: &[f64]| -> Vec<Dd> {
        (0..mu.len())
            .map(|q| {
                (0..=q).fold(Dd::ZERO, |acc, k| acc + Dd::new(binomial(q, k)) * Dd::new(mu[k]))
            })
            .collect()
    };
    let mx = raw_dd(mv.as_full());
    let md = d.as_ref().map(|d| raw_dd(d));
    let mut ez = vec![Dd::ZERO; m + 1];
    for (p, slot) in ez.iter_mut().enumerate() {
        let mut s = Dd::ZERO;
        for q in 0..=p {
            let mut term = mx[q].powi(b);
            if let Some(md) = &md {
                term = term * md[q].powi(b - 1);
            }
            term = Dd::new(binomial(p, q)) * term;
            s = if (p - q) % 2 == 0 { s + term } else { s - term };
        }
        *slot = s;
    }
    // moments -> cumulants -> scale -> moments, all in Dd
    let mut k = vec![Dd::ZERO; m + 1];
    for j in 1..=m {
        let mut s = ez[j];
        for i in 1..j {
            s = s - Dd::new(binomial(j - 1, i - 1)) * k[i] * ez[j - i];
        }
        k[j] = s;
    }
    let bf = Dd::new(b as f64);
    for (p, kp) in k.iter_mut().enumerate().skip(2) {
        *kp = *kp / bf.powi(p as u32 - 1);
    }
    k[1] = Dd::ZERO;
    let mut out = vec![Dd::ZERO; m + 1];
    out[0] = Dd::ONE;
    for j in 1..=m {
        let mut s = Dd::ZERO;
        for i in 1..=j {
            s = s + Dd::new(binomial(j - 1, i - 1)) * k[i] * out[j - i];
        }
        out[j] = s;
    }
    let mut full: Vec<f64> = out.iter().map(|x| x.to_f64()).collect();
    full[1] = 0.0;
    MomentVector::from_full(full)
}

/// Exact centered moments of `W_n(β) - 1` (bond) or `Ŵ_n(β) - 1` (site).
pub fn exact_finite_n_moments(
    b: u32,
    n: u64,
    spec: &DisorderSpec,
    beta: f64,
    model: Model,
    m_max: usize,
) -> Result<MomentVector> {
    check_m_max(m_max)?;
    spec.validate()?;
    let w = centered_weight_moments(spec, beta, m_max)?;
    match model {
        Model::Bond => {
            let mut mv = MomentVector::from_full(w.mu.clone())?;
            for _ in 0..n {
                mv = moment_map(b, &mv, None)?;
            }
            Ok(mv)
        }
        Model::Site => {
            let mut mv = MomentVector::zero(m_max)?;
            for _ in 0..n {
                mv = moment_map(b, &mv, Some(&w))?;
            }
            Ok(mv)
        }
    }
}

/// Stopping rule and budget for [`limit_higher_moments_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    pub tol: f64,
    pub abs_floor: f64,
    pub max_depth: u64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            abs_floor: 1e-12,
            max_depth: 1 << 20,
        }
    }
}

/// `R^{(m)}(r)` for `m = 2..=m_max`, starting the moment recursion `depth`
/// generations back and doubling the depth until the result settles.
pub fn limit_higher_moments(b: u32, r: f64, m_max: usize, depth: u64) -> Result<MomentVector> {
    let solver = RSolver::new(b, R_TOL)?;
    limit_higher_moments_with(&solver, r, m_max, depth, LimitOptions::default())
}

/// The seed at `r - depth` is the centered normal law with variance
/// `R(r - depth)`: even moments `(m-1)!! R^{m/2}`, odd moments zero. This
/// matches the leading even-moment asymptotics and keeps the variance
/// coordinate exactly on the orbit, so the map need only contract the
/// higher-order seed error.
pub fn limit_higher_moments_with(
    solver: &RSolver,
    r: f64,
    m_max: usize,
    depth: u64,
    opts: LimitOptions,
) -> Result<MomentVector> {
    check_m_max(m_max)?;
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be positive".into()));
    }
    let run = |d: u64| -> Result<MomentVector> {
        let mut mv = MomentVector::gaussian(solver.r(r - d as f64)?, m_max)?;
        for _ in 0..d {
            mv = moment_map(solver.b, &mv, None)?;
        }
        Ok(mv)
    };
    let mut d = depth;
    let mut prev = run(d)?;
    loop {
        if d * 2 > opts.max_depth {
            return Err(Error::NoConvergence(format!(
                "limit moments at r = {r} unsettled at depth {d}"
            )));
        }
        d *= 2;
        let cur = run(d)?;
        let settled = (2..=m_max).all(|m| {
            let (a, c) = (prev.get(m), cur.get(m));
            (a - c).abs() <= (opts.tol * c.abs()).max(opts.abs_floor)
        });
        if settled {
            return Ok(cur);
        }
        prev = cur;
    }
}

/// `R`, `R'` and optionally `R^{(3)}..R^{(m)}` on a grid of `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitMomentTable {
    pub b: u32,
    pub m_max: usize,
    pub rows: Vec<LimitRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub r: f64,
    pub big_r: f64,
    pub r_prime: f64,
    /// `R^{(3)}, ..., R^{(m_max)}`.
    pub higher: Vec<f64>,
}

impl LimitMomentTable {
    /// `m_max = 2` skips the higher moments.
    pub fn build(b: u32, grid: &[f64], m_max: usize, depth: u64) -> Result<Self> {
        check_m_max(m_max)?;
        let solver = RSolver::new(b, R_TOL)?;
        let rows = grid
            .iter()
            .map(|&r| Self::row(&solver, r, m_max, depth))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { b, m_max, rows })
    }

    /// One row; failures stay local so callers can report them per `r`.
    pub fn row(solver: &RSolver, r: f64, m_max: usize, depth: u64) -> Result<LimitRow> {
        check_m_max(m_max)?;
        let higher = if m_max > 2 {
            let mv = limit_higher_moments_with(solver, r, m_max, depth, LimitOptions::default())?;
            mv.as_full()[3..].to_vec()
        } else {
            vec![]
        };
        Ok(LimitRow {
            r,
            big_r: solver.r(r)?,
            r_prime: solver.r_prime(r)?,
            higher,
        })
    }

    /// Strict monotonicity of `R` and the shift relation on unit-spaced pairs.
    pub fn check(&self, tol: f64) -> bool {
        let increasing = self.rows.windows(2).all(|w| w[0].r >= w[1].r || w[0].big_r < w[1].big_r);
        let shift = self.rows.iter().all(|a| {
            self.rows
                .iter()
                .filter(|c| c.r == a.r + 1.0)
                .all(|c| (super::m_map(self.b, a.big_r) - c.big_r).abs() <= tol * c.big_r.max(1.0))
        });
        increasing && shift
    }
}
