//! Disorder laws with closed-form moment generating functions, moments of
//! the normalized weight `D = e^{βω}/E[e^{βω}]`, and the zero-bias transform.

use crate::error::{Error, Result};
use crate::quad;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// A mean-zero, variance-one disorder law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DisorderSpec {
    Gaussian,
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    UniformCentered,
    /// `√(q/p)` with probability `p`, `-√(p/q)` with probability `q = 1 - p`.
    TwoPoint { p: f64 },
}

impl DisorderSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DisorderSpec::TwoPoint { p } if !(p > 0.0 && p < 1.0) => Err(
                Error::InvalidParameter(format!("two-point probability must lie in (0,1), got {p}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DisorderSpec::Gaussian => "gaussian".into(),
            DisorderSpec::Rademacher => "rademacher".into(),
            DisorderSpec::UniformCentered => "uniform_centered".into(),
            DisorderSpec::TwoPoint { p } => format!("two_point({p})"),
        }
    }

    fn two_point_values(p: f64) -> (f64, f64) {
        let q = 1.0 - p;
        ((q / p).sqrt(), -(p / q).sqrt())
    }

    /// Atoms and probabilities for the discrete families.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            DisorderSpec::Rademacher => Some(vec![(1.0, 0.5), (-1.0, 0.5)]),
            DisorderSpec::TwoPoint { p } => {
                let (a, lo) = Self::two_point_values(p);
                Some(vec![(a, p), (lo, 1.0 - p)])
            }
            _ => None,
        }
    }

    /// `E[e^{tω}]`.
    pub fn mgf(&self, t: f64) -> f64 {
        self.log_mgf(t).exp()
    }

    /// `K(t) = log E[e^{tω}]`, accurate for small `|t|`.
    pub fn log_mgf(&self, t: f64) -> f64 {
        match *self {
            DisorderSpec::Gaussian => 0.5 * t * t,
            DisorderSpec::Rademacher => {
                let a = t.abs();
                if a < 1.0 {
                    let sh = (0.5 * a).sinh();
                    (2.0 * sh * sh).ln_1p()
                } else {
                    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
                }
            }
            DisorderSpec::UniformCentered => {
                let x = (SQRT3 * t).abs();
                if x < 0.5 {
                    let x2 = x * x;
                    // sinh(x)/x - 1
                    let s = x2
                        * (1.0 / 6.0
                            + x2 * (1.0 / 120.0
                                + x2 * (1.0 / 5040.0
                                    + x2 * (1.0 / 362_880.0
                                        + x2 * (1.0 / 39_916_800.0 + x2 / 6_227_020_800.0)))));
                    s.ln_1p()
                } else {
                    x - (2.0 * x).ln() + (-(-2.0 * x).exp()).ln_1p()
                }
            }
            DisorderSpec::TwoPoint { p } => {
                let q = 1.0 - p;
                let (a, lo) = Self::two_point_values(p);
                if t.abs() < 1.0 {
                    (p * (t * a).exp_m1() + q * (t * lo).exp_m1()).ln_1p()
                } else {
                    let (u, v) = ((p.ln() + t * a), (q.ln() + t * lo));
                    let m = u.max(v);
                    m + ((u - m).exp() + (v - m).exp()).ln()
                }
            }
        }
    }

    /// Third cumulant `τ = E[ω³]`.
    pub fn tau(&self) -> f64 {
        match *self {
            DisorderSpec::TwoPoint { p } => {
                let q = 1.0 - p;
                (q - p) / (p * q).sqrt()
            }
            _ => 0.0,
        }
    }

    /// Fourth cumulant `τ' = E[ω⁴] - 3`.
    pub fn tau_prime(&self) -> f64 {
        match *self {
            DisorderSpec::Gaussian => 0.0,
            DisorderSpec::Rademacher => -2.0,
            DisorderSpec::UniformCentered => -1.2,
            DisorderSpec::TwoPoint { p } => {
                let q = 1.0 - p;
                (1.0 - 6.0 * p * q) / (p * q)
            }
        }
    }

    /// `E|ω|^k` for real `k >= 0`.
    pub fn abs_moment(&self, k: f64) -> f64 {
        match *self {
            DisorderSpec::Gaussian => {
                2f64.powf(k / 2.0) * statrs::function::gamma::gamma((k + 1.0) / 2.0)
                    / std::f64::consts::PI.sqrt()
            }
            DisorderSpec::Rademacher => 1.0,
            DisorderSpec::UniformCentered => SQRT3.powf(k) / (k + 1.0),
            DisorderSpec::TwoPoint { .. } => self
                .atoms()
                .unwrap()
                .iter()
                .map(|(x, w)| w * x.abs().powf(k))
                .sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DisorderSpec::Gaussian => rng.sample(StandardNormal),
            DisorderSpec::Rademacher => {
                if rng.next_u64() >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            DisorderSpec::UniformCentered => SQRT3 * (2.0 * rng.random::<f64>() - 1.0),
            DisorderSpec::TwoPoint { p } => {
                let (a, lo) = Self::two_point_values(p);
                if rng.random::<f64>() < p {
                    a
                } else {
                    lo
                }
            }
        }
    }

    /// `E[g(ω)]` by exact enumeration or high-order quadrature.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F, hint_shift: f64) -> f64 {
        match *self {
            DisorderSpec::Gaussian => {
                let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                let lo = -40.0 + hint_shift.min(0.0);
                let hi = 40.0 + hint_shift.max(0.0);
                let panels = ((hi - lo) / 0.5).ceil() as usize;
                quad::composite(|z| inv * (-0.5 * z * z).exp() * g(z), lo, hi, panels)
            }
            DisorderSpec::UniformCentered => {
                quad::composite(|u| g(u) / (2.0 * SQRT3), -SQRT3, SQRT3, 32)
            }
            _ => self.atoms().unwrap().iter().map(|(x, w)| w * g(*x)).sum(),
        }
    }
}

/// `V(β) = Var(D) = E[e^{2βω}]/E[e^{βω}]^2 - 1`.
pub fn variance_of_weight(spec: &DisorderSpec, beta: f64) -> f64 {
    (spec.log_mgf(2.0 * beta) - 2.0 * spec.log_mgf(beta)).exp_m1()
}

/// One normalized leaf weight minus one, `e^{βω - K(β)} - 1`.
#[inline]
pub fn weight_minus_one(beta: f64, log_mgf_beta: f64, omega: f64) -> f64 {
    (beta * omega - log_mgf_beta).exp_m1()
}

/// Centered moments of `D - 1`; `mu[q]` holds `μ_q`, with `μ_0 = 1`, `μ_1 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMoments {
    pub beta: f64,
    pub mu: Vec<f64>,
}

impl WeightMoments {
    pub fn m_max(&self) -> usize {
        self.mu.len() - 1
    }

    /// Raw moments `E[D^q]`.
    pub fn raw(&self) -> Vec<f64> {
        crate::recursion::raw_from_centered_shifted(&self.mu)
    }
}

/// `μ_q = Σ_j C(q,j)(-1)^{q-j} E[D^j]` for `q = 0..=m_max`.
///
/// The alternating sum is taken over `expm1(K(jβ) - jK(β))` with Neumaier
/// summation. When its condition number says fewer than ~10 digits survive,
/// the moment is instead computed as a direct expectation of `(D - 1)^q`.
pub fn centered_weight_moments(spec: &DisorderSpec, beta: f64, m_max: usize) -> Result<WeightMoments> {
    if m_max < 2 {
        return Err(Error::InvalidParameter("m_max must be >= 2".into()));
    }
    let k1 = spec.log_mgf(beta);
    let c: Vec<f64> = (0..=m_max)
        .map(|j| (spec.log_mgf(j as f64 * beta) - j as f64 * k1).exp_m1())
        .collect();
    let mut mu = vec![0.0; m_max + 1];
    mu[0] = 1.0;
    for q in 2..=m_max {
        let mut acc = Neumaier::default();
        let mut mag = 0.0;
        for (j, cj) in c.iter().enumerate().take(q + 1) {
            let sign = if (q - j) % 2 == 0 { 1.0 } else { -1.0 };
            let term = sign * binomial(q, j) * cj;
            acc.add(term);
            mag += term.abs();
        }
        let value = acc.sum();
        let lost = mag * f64::EPSILON * 8.0;
        mu[q] = if beta == 0.0 {
            0.0
        } else if lost <= 1e-10 * value.abs() {
            value
        } else {
            spec.expect(|w| weight_minus_one(beta, k1, w).powi(q as i32), q as f64 * beta)
        };
    }
    Ok(WeightMoments { beta, mu })
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Neumaier's compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Draw from the zero-bias transform of `spec` (σ² = 1).
///
/// First `X` is drawn from `x² μ(dx)`, then `X* = U X` with `U` uniform on `[0,1]`.
pub fn zero_bias_sample<R: Rng + ?Sized>(spec: &DisorderSpec, rng: &mut R) -> f64 {
    let x = match *spec {
        DisorderSpec::Gaussian => {
            let r2: f64 = (0..3)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * z
                })
                .sum();
            let sign = if rng.next_u64() >> 63 == 0 { 1.0 } else { -1.0 };
            sign * r2.sqrt()
        }
        DisorderSpec::Rademacher => spec.sample(rng),
        DisorderSpec::UniformCentered => {
            let sign = if rng.next_u64() >> 63 == 0 { 1.0 } else { -1.0 };
            sign * SQRT3 * rng.random::<f64>().cbrt()
        }
        DisorderSpec::TwoPoint { p } => {
            // x² p_x reweights the atoms to probabilities (q, p)
            let (a, lo) = DisorderSpec::two_point_values(p);
            if rng.random::<f64>() < 1.0 - p {
                a
            } else {
                lo
            }
        }
    };
    rng.random::<f64>() * x
}

/// Zero-bias sampler for an empirical law.
#[derive(Debug, Clone)]
pub struct EmpiricalZeroBias {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EmpiricalZeroBias {
    pub fn new(values: &[f64]) -> Result<Self> {
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        let mut total = 0.0;
        let mut cumulative = Vec::with_capacity(values.len());
        for v in values {
            total += (v - mean) * (v - mean);
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Err(Error::InvalidParameter("zero variance".into()));
        }
        Ok(Self {
            values: values.iter().map(|v| v - mean).collect(),
            cumulative,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.values.len() - 1);
        rng.random::<f64>() * self.values[idx]
    }
}

/// Density of the zero-bias law, `p*(w) = E[ω 1{ω > w}]` (σ² = 1).
pub fn zero_bias_density(spec: &DisorderSpec, w: f64) -> f64 {
    match *spec {
        DisorderSpec::Gaussian => (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        DisorderSpec::UniformCentered => {
            if w.abs() >= SQRT3 {
                0.0
            } else {
                (3.0 - w * w) / (4.0 * SQRT3)
            }
        }
        _ => spec
            .atoms()
            .unwrap()
            .iter()
            .filter(|(x, _)| *x > w)
            .map(|(x, p)| x * p)
            .sum::<f64>()
            .max(0.0),
    }
}

/// `(E|X*|^{n-2}, E|X|^n / (σ²(n-1)))`, the left side by quadrature of the
/// zero-bias density and the right side from the absolute moment.
pub fn zero_bias_abs_moment_identity(spec: &DisorderSpec, n: u32) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidParameter("identity needs n >= 2".into()));
    }
    let k = (n - 2) as i32;
    let g = |w: f64| w.abs().powi(k) * zero_bias_density(spec, w);
    let lhs = match *spec {
        DisorderSpec::Gaussian => quad::composite(g, -40.0, 40.0, 160),
        DisorderSpec::UniformCentered => quad::composite(g, -SQRT3, SQRT3, 32),
        _ => {
            let mut pts: Vec<f64> = spec.atoms().unwrap().iter().map(|a| a.0).collect();
            pts.push(0.0);
            pts.sort_by(f64::total_cmp);
            pts.windows(2)
                .map(|w| quad::composite(g, w[0], w[1], 4))
                .sum()
        }
    };
    let rhs = spec.abs_moment(n as f64) / (n - 1) as f64;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    const ALL: [DisorderSpec; 5] = [
        DisorderSpec::Gaussian,
        DisorderSpec::Rademacher,
        DisorderSpec::UniformCentered,
        DisorderSpec::TwoPoint { p: 0.3 },
        DisorderSpec::TwoPoint { p: 0.5 },
    ];

    #[test]
    fn mgf_examples() {
        assert!((DisorderSpec::Gaussian.mgf(1.0) - 0.5f64.exp()).abs() < 1e-15);
        for t in [0.0, 0.3, 2.0, 7.0] {
            assert!((DisorderSpec::Rademacher.mgf(t) - f64::cosh(t)).abs() < 1e-13 * f64::cosh(t));
            let x = SQRT3 * t;
            let u = if t == 0.0 { 1.0 } else { x.sinh() / x };
            assert!((DisorderSpec::UniformCentered.mgf(t) - u).abs() < 1e-13 * u);
        }
        assert_eq!(DisorderSpec::TwoPoint { p: 0.2 }.mgf(0.0), 1.0);
    }

    #[test]
    fn mgf_derivatives_at_zero() {
        let h = 1e-4;
        for s in ALL {
            let d1 = (s.mgf(h) - s.mgf(-h)) / (2.0 * h);
            let d2 = (s.mgf(h) - 2.0 + s.mgf(-h)) / (h * h);
            let d3 = (s.log_mgf(2.0 * h) - 2.0 * s.log_mgf(h) + 2.0 * s.log_mgf(-h)
                - s.log_mgf(-2.0 * h))
                / (2.0 * h * h * h);
            assert!(d1.abs() < 1e-8, "{s:?}");
            assert!((d2 - 1.0).abs() < 1e-6, "{s:?}");
            assert!((d3 - s.tau()).abs() < 1e-4, "{s:?} {d3}");
        }
    }

    #[test]
    fn fourth_cumulant_matches_closed_form() {
        let h = 1e-2;
        for s in ALL {
            let k = |t: f64| s.log_mgf(t);
            let d4 = (k(2.0 * h) - 4.0 * k(h) + 6.0 * k(0.0) - 4.0 * k(-h) + k(-2.0 * h)) / h.powi(4);
            assert!((d4 - s.tau_prime()).abs() < 1e-3 * (1.0 + s.tau_prime().abs()), "{s:?} {d4}");
        }
    }

    #[test]
    fn variance_of_weight_examples() {
        for s in ALL {
            assert_eq!(variance_of_weight(&s, 0.0), 0.0);
        }
        for beta in [0.01, 0.3, 1.5] {
            let v = variance_of_weight(&DisorderSpec::Gaussian, beta);
            assert!((v - (beta * beta as f64).exp_m1()).abs() < 1e-14 * v);
        }
    }

    #[test]
    fn variance_small_beta_expansion() {
        for s in ALL {
            let (t, tp) = (s.tau(), s.tau_prime());
            let resid: Vec<f64> = [1e-1, 1e-2, 1e-3]
                .iter()
                .map(|&b: &f64| {
                    let series = b * b + t * b.powi(3) + (0.5 + 7.0 * tp / 12.0) * b.powi(4);
                    (variance_of_weight(&s, b) - series).abs() / b.powi(5)
                })
                .collect();
            // residual / β⁵ stays bounded
            assert!(resid.iter().all(|r| *r < 50.0), "{s:?} {resid:?}");
        }
    }

    #[test]
    fn weight_moment_examples() {
        let g = centered_weight_moments(&DisorderSpec::Gaussian, 0.0, 6).unwrap();
        assert!(g.mu[2..].iter().all(|&m| m == 0.0));
        for beta in [1e-3, 0.05, 0.4] {
            let g = centered_weight_moments(&DisorderSpec::Gaussian, beta, 4).unwrap();
            let v = variance_of_weight(&DisorderSpec::Gaussian, beta);
            assert!((g.mu[2] - v).abs() <= 1e-14 * v);
        }
        let r = centered_weight_moments(&DisorderSpec::Rademacher, 0.5, 3).unwrap();
        let c = 0.5f64.cosh();
        let direct = 0.5 * ((0.5f64.exp() / c - 1.0).powi(3) + ((-0.5f64).exp() / c - 1.0).powi(3));
        assert!((r.mu[3] - direct).abs() < 1e-15);
    }

    #[test]
    fn weight_moments_agree_with_direct_expectation() {
        for s in ALL {
            for beta in [1e-3, 0.02, 0.3, 1.0] {
                let wm = centered_weight_moments(&s, beta, 12).unwrap();
                let k1 = s.log_mgf(beta);
                for q in 2..=12 {
                    let direct = s.expect(|w| weight_minus_one(beta, k1, w).powi(q as i32), q as f64 * beta);
                    let scale = direct.abs().max(1e-300);
                    assert!((wm.mu[q] - direct).abs() <= 1e-9 * scale, "{s:?} β={beta} q={q}");
                }
            }
        }
    }

    #[test]
    fn weight_moments_match_monte_carlo() {
        let beta = 0.7;
        let n = 400_000;
        for s in ALL {
            let wm = centered_weight_moments(&s, beta, 4).unwrap();
            let k1 = s.log_mgf(beta);
            let mut rng = CounterRng::new(99);
            let xs: Vec<f64> = (0..n).map(|_| weight_minus_one(beta, k1, s.sample(&mut rng))).collect();
            for q in 2..=4 {
                let vals: Vec<f64> = xs.iter().map(|x| x.powi(q as i32)).collect();
                let m = vals.iter().sum::<f64>() / n as f64;
                let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
                // Rademacher makes X² constant, hence the absolute floor
                assert!((m - wm.mu[q]).abs() < 5.0 * sd / (n as f64).sqrt() + 1e-12, "{s:?} q={q}");
            }
        }
    }

    #[test]
    fn sample_mean_and_variance() {
        let n = 1_000_000;
        for s in ALL {
            let mut rng = CounterRng::new(5);
            let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            let kurt = s.tau_prime() + 3.0;
            assert!(m.abs() < 3.0 / (n as f64).sqrt(), "{s:?}");
            assert!((v - 1.0).abs() < 3.0 * ((kurt - 1.0) / n as f64).sqrt() + m * m + 1e-12, "{s:?}");
        }
    }

    #[test]
    fn zero_bias_rademacher_is_uniform() {
        let mut rng = CounterRng::new(11);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| zero_bias_sample(&DisorderSpec::Rademacher, &mut rng))
            .collect();
        assert!(xs.iter().all(|x| x.abs() <= 1.0));
        let m1 = xs.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((m1 - 0.5).abs() < 0.005);
        assert!((m2 - 1.0 / 3.0).abs() / (1.0 / 3.0) < 0.01);
    }

    #[test]
    fn zero_bias_identity_quadrature_and_mc() {
        for s in [
            DisorderSpec::Rademacher,
            DisorderSpec::Gaussian,
            DisorderSpec::UniformCentered,
            DisorderSpec::TwoPoint { p: 0.3 },
        ] {
            for n in 3..=6 {
                let (lhs, rhs) = zero_bias_abs_moment_identity(&s, n).unwrap();
                assert!((lhs - rhs).abs() < 1e-10 * rhs, "{s:?} n={n}: {lhs} vs {rhs}");
            }
        }
        let n_draws = 1_000_000;
        for s in [DisorderSpec::Rademacher, DisorderSpec::Gaussian] {
            let mut rng = CounterRng::new(12);
            let xs: Vec<f64> = (0..n_draws).map(|_| zero_bias_sample(&s, &mut rng)).collect();
            for n in 3..=6 {
                let mc = xs.iter().map(|x| x.abs().powi(n - 2)).sum::<f64>() / n_draws as f64;
                let (_, rhs) = zero_bias_abs_moment_identity(&s, n as u32).unwrap();
                assert!((mc - rhs).abs() / rhs < 0.01, "{s:?} n={n}: {mc} vs {rhs}");
            }
        }
    }

    #[test]
    fn empirical_zero_bias_of_rademacher() {
        let vals: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let zb = EmpiricalZeroBias::new(&vals).unwrap();
        let mut rng = CounterRng::new(3);
        let n = 200_000;
        let m2 = (0..n).map(|_| zb.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - 1.0 / 3.0).abs() < 0.01);
        assert!(EmpiricalZeroBias::new(&[2.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn variance_increases_in_beta(b1 in 0.0f64..3.0, db in 1e-3f64..1.0, p in 0.05f64..0.95) {
            for s in [DisorderSpec::Gaussian, DisorderSpec::Rademacher, DisorderSpec::UniformCentered, DisorderSpec::TwoPoint { p }] {
                prop_assert!(variance_of_weight(&s, b1 + db) > variance_of_weight(&s, b1));
            }
        }

        #[test]
        fn even_weight_moments_nonnegative(beta in 0.0f64..1.5, p in 0.05f64..0.95) {
            let wm = centered_weight_moments(&DisorderSpec::TwoPoint { p }, beta, 8).unwrap();
            for q in [2, 4, 6, 8] {
                prop_assert!(wm.mu[q] >= 0.0);
            }
        }
    }
}
