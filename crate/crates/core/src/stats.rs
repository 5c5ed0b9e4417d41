//! Empirical samples, one-dimensional Wasserstein distances, the two-variable
//! Stein auxiliary function with its derivative bounds, and CLT diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::disorder::{zero_bias_sample, DisorderSpec};
use crate::error::{Error, Result};
use crate::quad;
use crate::rng::CounterRng;

/// Smallest sample accepted by the centered-moment estimators.
pub const MIN_MOMENT_SAMPLE: usize = 10_000;

/// A sorted sample; sorting once makes every quantile coupling linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    values: Vec<f64>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sample value {bad}")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len().max(1) as f64
    }

    /// `E|X|^p` under the empirical law.
    pub fn abs_moment(&self, p: f64) -> f64 {
        self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / self.len().max(1) as f64
    }

    /// Plain (biased) centered moments `m_2..m_max`; needs `N ≥ 10⁴`.
    pub fn centered_moments(&self, m_max: usize) -> Result<Vec<f64>> {
        if self.len() < MIN_MOMENT_SAMPLE {
            return Err(Error::InvalidParameter(format!(
                "centered moments need N >= {MIN_MOMENT_SAMPLE}, got {}",
                self.len()
            )));
        }
        let mean = self.mean();
        let mut out = vec![0.0; m_max.saturating_sub(1)];
        for v in &self.values {
            let d = v - mean;
            let mut pw = d;
            for slot in out.iter_mut() {
                pw *= d;
                *slot += pw;
            }
        }
        let n = self.len() as f64;
        Ok(out.into_iter().map(|s| s / n).collect())
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.len().max(1) as f64
    }

    /// Deterministic quantile sample `σ Φ⁻¹((i + ½)/N)` of `N(0, σ²)`.
    pub fn normal_quantiles(size: usize, sigma: f64) -> Result<Self> {
        let nd = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let values = (0..size).map(|i| nd.inverse_cdf((i as f64 + 0.5) / size as f64)).collect();
        Ok(Self { values })
    }
}

fn need_two(x: &EmpiricalSample) -> Result<()> {
    match x.len() {
        0 => Err(Error::Empty),
        1 => Err(Error::InvalidParameter("distance needs at least two sample points".into())),
        _ => Ok(()),
    }
}

/// `ρ_p` between two empirical laws by the monotone (quantile) coupling.
///
/// Unequal sizes are handled exactly: both quantile functions are step
/// functions, so the integral over `u ∈ (0,1)` splits at the merged
/// breakpoints `i/N` and `j/M`.
pub fn wasserstein_p(x: &EmpiricalSample, y: &EmpiricalSample, p: f64) -> Result<f64> {
    need_two(x)?;
    need_two(y)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    let pow = |d: f64| if p == 1.0 { d } else if p == 2.0 { d * d } else { d.powf(p) };
    let (xs, ys) = (x.values(), y.values());
    let total = if xs.len() == ys.len() {
        xs.iter().zip(ys).map(|(a, b)| pow((a - b).abs())).sum::<f64>() / xs.len() as f64
    } else {
        // breakpoints in units of 1/(N M)
        let (n, m) = (xs.len() as u128, ys.len() as u128);
        let (mut i, mut j, mut at) = (0usize, 0usize, 0u128);
        let mut acc = 0.0;
        while i < xs.len() && j < ys.len() {
            let ex = (i as u128 + 1) * m;
            let ey = (j as u128 + 1) * n;
            let next = ex.min(ey);
            acc += (next - at) as f64 * pow((xs[i] - ys[j]).abs());
            at = next;
            if ex == next {
                i += 1;
            }
            if ey == next {
                j += 1;
            }
        }
        acc / (n * m) as f64
    };
    Ok(total.powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W2Bound {
    pub rho1: f64,
    pub rho2: f64,
    pub bound: f64,
}

impl W2Bound {
    pub fn holds(&self) -> bool {
        self.rho2 <= self.bound * (1.0 + 1e-12) + 1e-15
    }
}

/// `ρ₂ ≤ 2^{(m+1)/2m} ρ₁^{(m-1)/2m} (E|X|^{m+1}^{1/2m} + E|Y|^{m+1}^{1/2m})`,
/// evaluated with empirical moments, next to the measured `ρ₂`.
pub fn w2_from_w1_bound(x: &EmpiricalSample, y: &EmpiricalSample, m: u32) -> Result<W2Bound> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    let rho1 = wasserstein_p(x, y, 1.0)?;
    let rho2 = wasserstein_p(x, y, 2.0)?;
    let mf = m as f64;
    let tails = x.abs_moment(mf + 1.0).powf(0.5 / mf) + y.abs_moment(mf + 1.0).powf(0.5 / mf);
    let bound = 2f64.powf((mf + 1.0) / (2.0 * mf)) * rho1.powf((mf - 1.0) / (2.0 * mf)) * tails;
    Ok(W2Bound { rho1, rho2, bound })
}

/// Lipschitz-1 test functions with known kinks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Tanh,
    /// `clamp(x, -1, 1)`
    Clip,
    Identity,
    Constant(f64),
    /// Piecewise-linear through `knots`, flat beyond the ends.
    Ramp(Vec<(f64, f64)>),
}

impl TestFunction {
    /// A few ramps with slopes of both signs.
    pub fn ramps() -> Vec<TestFunction> {
        vec![
            TestFunction::Ramp(vec![(0.0, 0.0), (1.5, 1.5)]),
            TestFunction::Ramp(vec![(-2.0, 0.0), (-1.0, 1.0), (0.5, -0.5), (2.0, -0.5)]),
            TestFunction::Ramp(vec![(-0.3, 0.2), (0.2, 0.45), (3.0, 3.25)]),
        ]
    }

    pub fn builtin() -> Vec<TestFunction> {
        let mut all = vec![TestFunction::Tanh, TestFunction::Clip];
        all.extend(Self::ramps());
        all
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::Tanh => "tanh".into(),
            TestFunction::Clip => "clip".into(),
            TestFunction::Identity => "identity".into(),
            TestFunction::Constant(c) => format!("constant({c})"),
            TestFunction::Ramp(k) => format!("ramp({} knots)", k.len()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Tanh => x.tanh(),
            TestFunction::Clip => x.clamp(-1.0, 1.0),
            TestFunction::Identity => x,
            TestFunction::Constant(c) => *c,
            TestFunction::Ramp(k) => {
                if x <= k[0].0 {
                    return k[0].1;
                }
                for w in k.windows(2) {
                    if x <= w[1].0 {
                        let t = (x - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + t * (w[1].1 - w[0].1);
                    }
                }
                k[k.len() - 1].1
            }
        }
    }

    /// Derivative; at a kink either one-sided value may be returned.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            TestFunction::Tanh => {
                let c = x.cosh();
                1.0 / (c * c)
            }
            TestFunction::Clip => {
                if x.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Identity => 1.0,
            TestFunction::Constant(_) => 0.0,
            TestFunction::Ramp(k) => k
                .windows(2)
                .find(|w| x > w[0].0 && x < w[1].0)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                .unwrap_or(0.0),
        }
    }

    pub fn kinks(&self) -> Vec<f64> {
        match self {
            TestFunction::Clip => vec![-1.0, 1.0],
            TestFunction::Ramp(k) => k.iter().map(|p| p.0).collect(),
            _ => vec![],
        }
    }

    fn validate(&self) -> Result<()> {
        if let TestFunction::Ramp(k) = self {
            if k.len() < 2 || k.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::InvalidParameter("ramp knots must be strictly increasing".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// starting panel width, halved until two passes agree
    pub panel_width: f64,
    pub tol: f64,
    pub max_halvings: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            panel_width: 0.5,
            tol: 1e-8,
            max_halvings: 8,
        }
    }
}

/// `F_σ` for one test function `H`, solving
/// `σ ∂_z F - (z/σ) F = H(y+z) - E H(y + σ𝒩)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinAux {
    pub h: TestFunction,
    pub sigma: f64,
    pub quad: QuadConfig,
}

/// Range in units of σ beyond which Gaussian weights are below e^{-45}.
const GAUSS_CUT: f64 = 45.0;

impl SteinAux {
    /// Checks `σ > 0` and the Lipschitz constant of `H` on a grid over `[-20, 20]`.
    pub fn new(h: TestFunction, sigma: f64, quad: QuadConfig) -> Result<Self> {
        h.validate()?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("σ must be positive, got {sigma}")));
        }
        let pts = 8001;
        let step = 40.0 / (pts - 1) as f64;
        let mut lip: f64 = 0.0;
        let mut prev = h.eval(-20.0);
        for k in 1..pts {
            let cur = h.eval(-20.0 + k as f64 * step);
            lip = lip.max((cur - prev).abs() / step);
            prev = cur;
        }
        if lip > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!("{} has Lipschitz constant {lip} > 1", h.name())));
        }
        Ok(Self { h, sigma, quad })
    }

    /// `∫ g` over `[a, b]`, split at `breaks`, with panel halving until stable.
    fn integrate<G: Fn(f64) -> f64>(&self, g: G, a: f64, b: f64, breaks: &[f64]) -> Result<f64> {
        let mut pts = vec![a];
        pts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
        pts.push(b);
        pts.sort_by(f64::total_cmp);
        let pass = |width: f64| -> f64 {
            pts.windows(2)
                .map(|w| {
                    let panels = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
                    quad::composite(&g, w[0], w[1], panels)
                })
                .sum()
        };
        let mut width = self.quad.panel_width;
        let mut prev = pass(width);
        for _ in 0..self.quad.max_halvings {
            width *= 0.5;
            let cur = pass(width);
            if (cur - prev).abs() <= self.quad.tol {
                return Ok(cur);
            }
            prev = cur;
        }
        Err(Error::NoConvergence(format!("Stein quadrature for {} did not settle", self.h.name())))
    }

    /// `E f(y + σ𝒩)` for `f ∈ {H, H'}`.
    fn gaussian_average(&self, y: f64, deriv: bool) -> Result<f64> {
        let s = self.sigma;
        let cut = (2.0 * GAUSS_CUT).sqrt();
        let breaks: Vec<f64> = self.h.kinks().iter().map(|k| (k - y) / s).collect();
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        self.integrate(
            |u| {
                let x = y + s * u;
                let v = if deriv { self.h.derivative(x) } else { self.h.eval(x) };
                v * norm * (-0.5 * u * u).exp()
            },
            -cut,
            cut,
            &breaks,
        )
    }

    /// The Gaussian average `E H(y + σ𝒩)`.
    pub fn h_average(&self, y: f64) -> Result<f64> {
        self.gaussian_average(y, false)
    }

    /// `∫_0^∞ k(z + d s) e^{-(2|z|s + s²)/2σ²} ds` with `d = sign(z)`; the
    /// tail toward `±∞` on the side of `z` avoids the `e^{z²/2σ²}` blowup.
    fn tail<K: Fn(f64, f64) -> f64>(&self, y: f64, z: f64, k: K) -> Result<f64> {
        let s2 = self.sigma * self.sigma;
        let d = if z >= 0.0 { 1.0 } else { -1.0 };
        let az = z.abs();
        let s_max = -az + (az * az + 2.0 * GAUSS_CUT * s2).sqrt();
        let breaks: Vec<f64> = self.h.kinks().iter().map(|kk| d * (kk - y - z)).collect();
        self.integrate(
            |s| k(z + d * s, s) * (-(2.0 * az * s + s * s) / (2.0 * s2)).exp(),
            0.0,
            s_max,
            &breaks,
        )
    }

    pub fn f(&self, y: f64, z: f64) -> Result<f64> {
        let avg = self.h_average(y)?;
        let d = if z >= 0.0 { 1.0 } else { -1.0 };
        let t = self.tail(y, z, |t, _| self.h.eval(y + t) - avg)?;
        Ok(-d * t / self.sigma)
    }

    /// `∂_y F`, from the same representation with `H'` in place of `H`.
    pub fn f_y(&self, y: f64, z: f64) -> Result<f64> {
        let avg = self.gaussian_average(y, true)?;
        let d = if z >= 0.0 { 1.0 } else { -1.0 };
        let t = self.tail(y, z, |t, _| self.h.derivative(y + t) - avg)?;
        Ok(-d * t / self.sigma)
    }

    /// `∂_z F`, differentiating the tail representation under the integral.
    pub fn f_z(&self, y: f64, z: f64) -> Result<f64> {
        let avg = self.h_average(y)?;
        let s2 = self.sigma * self.sigma;
        let d = if z >= 0.0 { 1.0 } else { -1.0 };
        let t = self.tail(y, z, |t, s| self.h.derivative(y + t) - (self.h.eval(y + t) - avg) * d * s / s2)?;
        Ok(-d * t / self.sigma)
    }
}

/// Derivative step for the second-order difference quotients.
pub const STEIN_H: f64 = 1e-4;
/// Slack added to each analytic bound.
pub const STEIN_SLACK: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for SteinGrid {
    fn default() -> Self {
        Self {
            lo: -5.0,
            hi: 5.0,
            points: 41,
        }
    }
}

impl SteinGrid {
    fn coords(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteinReport {
    pub function: String,
    pub sigma: f64,
    pub residual: f64,
    pub max_f_y: f64,
    pub max_f_z: f64,
    pub max_f_yy: f64,
    pub max_f_yz: f64,
    pub max_f_zz: f64,
    pub bound_f_y: f64,
    pub bound_f_z: f64,
    pub bound_second: f64,
    pub pass: bool,
}

/// Largest `|σ ∂_z F - (z/σ) F - (H(y+z) - E H(y+σ𝒩))|` over the grid.
pub fn stein_pde_residual(aux: &SteinAux, grid: &SteinGrid) -> Result<f64> {
    let c = grid.coords();
    let rows: Vec<Result<f64>> = c
        .par_iter()
        .map(|&y| {
            let avg = aux.h_average(y)?;
            let mut worst: f64 = 0.0;
            for &z in &c {
                let r = aux.sigma * aux.f_z(y, z)? - z / aux.sigma * aux.f(y, z)? - (aux.h.eval(y + z) - avg);
                worst = worst.max(r.abs());
            }
            Ok(worst)
        })
        .collect();
    rows.into_iter().try_fold(0.0, |acc: f64, r| Ok(acc.max(r?)))
}

/// Derivative sup-norms on the grid against `√(π/2)`, `1` and `2/σ`.
///
/// First derivatives come from their own quadratures; second-order ones are
/// central differences of those with step [`STEIN_H`].
pub fn stein_bound_check(aux: &SteinAux, grid: &SteinGrid) -> Result<SteinReport> {
    let c = grid.coords();
    let h = STEIN_H;
    let rows: Vec<Result<[f64; 5]>> = c
        .par_iter()
        .map(|&y| {
            let mut m = [0.0f64; 5];
            for &z in &c {
                let fy = aux.f_y(y, z)?;
                let fz = aux.f_z(y, z)?;
                let fyy = (aux.f_y(y + h, z)? - aux.f_y(y - h, z)?) / (2.0 * h);
                let fyz = (aux.f_y(y, z + h)? - aux.f_y(y, z - h)?) / (2.0 * h);
                let fzz = (aux.f_z(y, z + h)? - aux.f_z(y, z - h)?) / (2.0 * h);
                for (slot, v) in m.iter_mut().zip([fy, fz, fyy, fyz, fzz]) {
                    *slot = slot.max(v.abs());
                }
            }
            Ok(m)
        })
        .collect();
    let mut m = [0.0f64; 5];
    for r in rows {
        for (slot, v) in m.iter_mut().zip(r?) {
            *slot = slot.max(v);
        }
    }
    let residual = stein_pde_residual(aux, grid)?;
    let bound_f_y = std::f64::consts::FRAC_PI_2.sqrt();
    let bound_second = 2.0 / aux.sigma;
    let pass = residual < 1e-6
        && m[0] <= bound_f_y + STEIN_SLACK
        && m[1] <= 1.0 + STEIN_SLACK
        && m[2..].iter().all(|&v| v <= bound_second + STEIN_SLACK);
    Ok(SteinReport {
        function: aux.h.name(),
        sigma: aux.sigma,
        residual,
        max_f_y: m[0],
        max_f_z: m[1],
        max_f_yy: m[2],
        max_f_yz: m[3],
        max_f_zz: m[4],
        bound_f_y,
        bound_f_z: 1.0,
        bound_second,
        pass,
    })
}

/// One line of a machine-readable diagnostics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl MetricReport {
    pub fn upper(metric: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            metric: metric.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltReport {
    pub spec: DisorderSpec,
    pub n: u32,
    pub draws: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub bound1: f64,
    pub bound2: f64,
    /// spread of `ρ₁` for an exact normal sample of the same size
    pub mc_error: f64,
}

impl CltReport {
    pub fn pass(&self) -> bool {
        self.rho1 <= self.bound1 + self.mc_error && self.rho2 <= self.bound2 + self.mc_error
    }

    pub fn metrics(&self) -> Vec<MetricReport> {
        let tag = format!("{}:n={}", self.spec.name(), self.n);
        vec![
            MetricReport::upper(format!("clt_rho1[{tag}]"), self.rho1, self.bound1 + self.mc_error),
            MetricReport::upper(format!("clt_rho2[{tag}]"), self.rho2, self.bound2 + self.mc_error),
        ]
    }
}

/// `3 E|X|³ / (σ² √n)`.
pub fn clt_w1_analytic(spec: &DisorderSpec, n: u32) -> f64 {
    3.0 * spec.abs_moment(3.0) / (spec.abs_moment(2.0) * (n as f64).sqrt())
}

/// `6 E[X⁴]^{5/12} / (σ^{2/3} n^{1/6})`.
pub fn clt_w2_analytic(spec: &DisorderSpec, n: u32) -> f64 {
    6.0 * spec.abs_moment(4.0).powf(5.0 / 12.0) / (spec.abs_moment(2.0).powf(1.0 / 3.0) * (n as f64).powf(1.0 / 6.0))
}

fn normalized_sums(spec: &DisorderSpec, n: u32, draws: usize, seed: u64) -> Result<EmpiricalSample> {
    let scale = 1.0 / (n as f64).sqrt();
    let values = (0..draws)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let mut rng = CounterRng::for_node(seed, i as u64, 0, 0);
            (0..n).map(|_| spec.sample(&mut rng)).sum::<f64>() * scale
        })
        .collect();
    EmpiricalSample::new(values)
}

/// Measured `ρ₁, ρ₂` between `(X₁+…+X_n)/√n` and the matched normal, with both bounds.
pub fn clt_report(spec: &DisorderSpec, n: u32, draws: usize, seed: u64) -> Result<CltReport> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let sums = normalized_sums(spec, n, draws, seed)?;
    let sigma = spec.abs_moment(2.0).sqrt();
    let reference = EmpiricalSample::normal_quantiles(draws, sigma)?;
    // the sampling floor: an exact normal sample of the same size
    let mut rng = CounterRng::for_node(seed ^ 0x5a5a, 0, 1, 0);
    let nd = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let exact = EmpiricalSample::new((0..draws).map(|_| nd.inverse_cdf(rng.random::<f64>())).collect())?;
    let mc_error = 3.0 * wasserstein_p(&exact, &reference, 2.0)?;
    Ok(CltReport {
        spec: *spec,
        n,
        draws,
        rho1: wasserstein_p(&sums, &reference, 1.0)?,
        rho2: wasserstein_p(&sums, &reference, 2.0)?,
        bound1: clt_w1_analytic(spec, n),
        bound2: clt_w2_analytic(spec, n),
        mc_error,
    })
}

pub fn clt_w1_bound(spec: &DisorderSpec, n: u32, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let r = clt_report(spec, n, draws, seed)?;
    Ok((r.rho1, r.bound1))
}

pub fn clt_w2_bound(spec: &DisorderSpec, n: u32, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let r = clt_report(spec, n, draws, seed)?;
    Ok((r.rho2, r.bound2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroBiasCheck {
    pub order: u32,
    /// Monte Carlo `E|X*|^{n-2}`
    pub measured: f64,
    /// `E|X|^n / (σ²(n-1))`
    pub exact: f64,
    pub std_error: f64,
}

impl ZeroBiasCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.measured - self.exact).abs() / self.exact
    }
}

/// Samples the zero-bias transform and compares `E|X*|^{n-2}` to its closed form.
pub fn zero_bias_moment_mc(spec: &DisorderSpec, order: u32, draws: usize, seed: u64) -> Result<ZeroBiasCheck> {
    if order < 3 {
        return Err(Error::InvalidParameter("order must be >= 3".into()));
    }
    if draws < 2 {
        return Err(Error::InvalidParameter("need at least two draws".into()));
    }
    let k = (order - 2) as i32;
    let (s, s2) = (0..draws)
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let mut rng = CounterRng::for_node(seed, i as u64, 0, 1);
            let v = zero_bias_sample(spec, &mut rng).abs().powi(k);
            (v, v * v)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = draws as f64;
    let measured = s / n;
    let var = (s2 / n - measured * measured).max(0.0);
    Ok(ZeroBiasCheck {
        order,
        measured,
        exact: spec.abs_moment(order as f64) / (spec.abs_moment(2.0) * (order - 1) as f64),
        std_error: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn sample(v: &[f64]) -> EmpiricalSample {
        EmpiricalSample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = sample(&[0.0, 1.0]);
        assert_eq!(wasserstein_p(&x, &x, 1.0).unwrap(), 0.0);
        let (a, b) = (sample(&[0.0, 0.0]), sample(&[1.0, 1.0]));
        assert_eq!(wasserstein_p(&a, &b, 1.0).unwrap(), 1.0);
        assert_eq!(wasserstein_p(&a, &b, 2.0).unwrap(), 1.0);
        let y = sample(&[0.0, 2.0]);
        assert!((wasserstein_p(&x, &y, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((wasserstein_p(&x, &y, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_errors() {
        let e = EmpiricalSample::new(vec![]).unwrap();
        let one = sample(&[1.0]);
        let x = sample(&[0.0, 1.0]);
        assert_eq!(wasserstein_p(&e, &x, 1.0), Err(Error::Empty));
        assert!(wasserstein_p(&one, &x, 1.0).is_err());
        assert!(wasserstein_p(&x, &x, 0.5).is_err());
        assert!(EmpiricalSample::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn unequal_sizes_match_replication() {
        // replicating each point k times leaves the law unchanged
        let x = sample(&[0.3, -1.0, 2.5]);
        let y = sample(&[0.0, 1.0]);
        let x6 = sample(&x.values().iter().flat_map(|&v| [v, v]).collect::<Vec<_>>());
        let y6 = sample(&y.values().iter().flat_map(|&v| [v, v, v]).collect::<Vec<_>>());
        for p in [1.0, 2.0, 3.0] {
            let direct = wasserstein_p(&x, &y, p).unwrap();
            let equal = wasserstein_p(&x6, &y6, p).unwrap();
            assert!((direct - equal).abs() < 1e-14, "p={p}: {direct} vs {equal}");
        }
    }

    #[test]
    fn w2_bound_examples() {
        let x = sample(&[0.0, 1.0, -2.0]);
        let b = w2_from_w1_bound(&x, &x, 3).unwrap();
        assert_eq!((b.rho1, b.rho2, b.bound), (0.0, 0.0, 0.0));
        // Gaussian vs shifted Gaussian trials
        let nd = Normal::new(0.0, 1.0).unwrap();
        for trial in 0..100u64 {
            let mut rng = CounterRng::new(trial);
            let shift = rng.random::<f64>() * 2.0;
            let a: Vec<f64> = (0..200).map(|_| nd.inverse_cdf(rng.random())).collect();
            let c: Vec<f64> = (0..150).map(|_| shift + nd.inverse_cdf(rng.random())).collect();
            let r = w2_from_w1_bound(&sample(&a), &sample(&c), 3).unwrap();
            assert!(r.holds(), "trial {trial}: {r:?}");
        }
    }

    #[test]
    fn centered_moments_need_large_samples() {
        assert!(sample(&[1.0, 2.0]).centered_moments(3).is_err());
        let xs: Vec<f64> = (0..20_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = sample(&xs).centered_moments(4).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12 && m[1].abs() < 1e-12 && (m[2] - 1.0).abs() < 1e-12);
    }

    fn aux(h: TestFunction, sigma: f64) -> SteinAux {
        SteinAux::new(h, sigma, QuadConfig::default()).unwrap()
    }

    #[test]
    fn constant_and_identity_have_closed_forms() {
        let grid = SteinGrid { lo: -5.0, hi: 5.0, points: 11 };
        let c = aux(TestFunction::Constant(0.7), 1.3);
        assert!(c.f(0.4, -2.0).unwrap().abs() < 1e-14);
        assert!(stein_pde_residual(&c, &grid).unwrap() < 1e-14);
        for sigma in [0.5, 1.0, 2.0] {
            let id = aux(TestFunction::Identity, sigma);
            for (y, z) in [(0.0, 0.0), (1.5, -3.0), (-4.0, 4.5)] {
                assert!((id.f(y, z).unwrap() + sigma).abs() < 1e-10, "σ={sigma}");
            }
            assert!(stein_pde_residual(&id, &grid).unwrap() < 1e-8);
        }
    }

    #[test]
    fn rejects_steep_functions() {
        let steep = TestFunction::Ramp(vec![(0.0, 0.0), (1.0, 2.0)]);
        assert!(SteinAux::new(steep, 1.0, QuadConfig::default()).is_err());
        assert!(SteinAux::new(TestFunction::Tanh, 0.0, QuadConfig::default()).is_err());
    }

    #[test]
    fn derivative_quadratures_match_differences() {
        let a = aux(TestFunction::Tanh, 0.7);
        let h = 1e-5;
        for (y, z) in [(0.2, 0.9), (-1.0, -2.5), (3.0, 0.1)] {
            let dy = (a.f(y + h, z).unwrap() - a.f(y - h, z).unwrap()) / (2.0 * h);
            let dz = (a.f(y, z + h).unwrap() - a.f(y, z - h).unwrap()) / (2.0 * h);
            assert!((dy - a.f_y(y, z).unwrap()).abs() < 1e-7);
            assert!((dz - a.f_z(y, z).unwrap()).abs() < 1e-7);
        }
    }

    #[test]
    fn tanh_bounds_at_unit_sigma() {
        let r = stein_bound_check(&aux(TestFunction::Tanh, 1.0), &SteinGrid::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_f_yy.max(r.max_f_yz).max(r.max_f_zz) <= 2.0 + STEIN_SLACK);
    }

    #[test]
    fn every_builtin_passes() {
        let grid = SteinGrid { lo: -5.0, hi: 5.0, points: 21 };
        for h in TestFunction::builtin() {
            for sigma in [0.5, 1.0, 2.0] {
                let r = stein_bound_check(&aux(h.clone(), sigma), &grid).unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn clt_examples() {
        let r = clt_report(&DisorderSpec::Rademacher, 16, 100_000, 1).unwrap();
        assert!((r.bound1 - 0.75).abs() < 1e-12);
        assert!(r.rho1 < 0.5 * r.bound1, "{r:?}");
        assert!(r.pass());
        // Gaussian summands are exactly normal
        let g = clt_report(&DisorderSpec::Gaussian, 7, 100_000, 2).unwrap();
        assert!(g.rho1 < g.mc_error, "{g:?}");
        // 1/√n decay: quadrupling n roughly halves ρ₁
        let r64 = clt_report(&DisorderSpec::Rademacher, 64, 100_000, 3).unwrap();
        let ratio = r64.rho1 / r.rho1;
        assert!(ratio > 0.35 && ratio < 0.65, "{ratio}");
    }

    #[test]
    fn zero_bias_moments() {
        for spec in [DisorderSpec::Rademacher, DisorderSpec::UniformCentered, DisorderSpec::Gaussian] {
            for order in [3, 4] {
                let c = zero_bias_moment_mc(&spec, order, 200_000, 5).unwrap();
                assert!((c.measured - c.exact).abs() < 4.0 * c.std_error + 1e-12, "{spec:?} {c:?}");
            }
        }
    }

    #[test]
    fn report_serializes() {
        let r = MetricReport::upper("rho1", 0.1, 0.75);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"metric":"rho1","value":0.1,"bound":0.75,"pass":true}"#);
    }

    fn arb_sample(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-50.0..50.0f64, len)
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(x in arb_sample(12), y in arb_sample(12), z in arb_sample(12), p in 1.0..3.0f64) {
            let (x, y, z) = (sample(&x), sample(&y), sample(&z));
            let dxy = wasserstein_p(&x, &y, p).unwrap();
            prop_assert_eq!(dxy, wasserstein_p(&y, &x, p).unwrap());
            prop_assert_eq!(wasserstein_p(&x, &x, p).unwrap(), 0.0);
            let dxz = wasserstein_p(&x, &z, p).unwrap();
            let dzy = wasserstein_p(&z, &y, p).unwrap();
            prop_assert!(dxy <= dxz + dzy + 1e-12);
        }

        #[test]
        fn rho1_below_rho2(x in arb_sample(9), y in arb_sample(14)) {
            let (x, y) = (sample(&x), sample(&y));
            let r1 = wasserstein_p(&x, &y, 1.0).unwrap();
            let r2 = wasserstein_p(&x, &y, 2.0).unwrap();
            prop_assert!(r1 <= r2 * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn w2_bound_holds_and_grows_with_rho1(x in arb_sample(10), y in arb_sample(10), m in 1u32..5) {
            let b = w2_from_w1_bound(&sample(&x), &sample(&y), m).unwrap();
            prop_assert!(b.holds(), "{:?}", b);
        }

        #[test]
        fn shift_moves_distance_exactly(x in arb_sample(8), c in -5.0..5.0f64) {
            let a = sample(&x);
            let b = sample(&x.iter().map(|v| v + c).collect::<Vec<_>>());
            prop_assert!((wasserstein_p(&a, &b, 2.0).unwrap() - c.abs()).abs() < 1e-9);
        }
    }
}
