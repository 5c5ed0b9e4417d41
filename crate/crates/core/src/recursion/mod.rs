//! Scalar variance maps, the limiting variance `R`, its derivative, the
//! functions `D_k`, and (in [`moments`]) the full moment-map engine.

pub mod fatou;
pub mod moments;

pub use fatou::Fatou;
pub use moments::*;

use crate::disorder::binomial;
use crate::error::{Error, Result};
use crate::scaling::constants;

/// `M(x) = ((1+x)^b - 1)/b`, summed as positive binomial terms so that tiny
/// `x` loses no precision.
#[inline]
pub fn m_map(b: u32, x: f64) -> f64 {
    if b == 2 {
        return x + 0.5 * x * x;
    }
    x * positive_poly(b, x) / b as f64
}

/// `((1+x)^n - 1)/x` as a polynomial with positive coefficients.
#[inline]
fn positive_poly(n: u32, x: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..=n as usize).rev() {
        acc = acc * x + binomial(n as usize, k);
    }
    acc
}

/// `(1+x)^n - 1` without cancellation for `x >= 0`.
#[inline]
fn power_minus_one(n: u32, x: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        x * positive_poly(n, x)
    }
}

/// `M'(x) = (1+x)^{b-1}`.
#[inline]
pub fn m_prime(b: u32, x: f64) -> f64 {
    (1.0 + x).powi(b as i32 - 1)
}

/// Closed-form inverse `M^{-1}(y) = (1 + b y)^{1/b} - 1`.
#[inline]
pub fn m_inv(b: u32, y: f64) -> f64 {
    ((b as f64 * y).ln_1p() / b as f64).exp_m1()
}

/// `M̂_V(x) = ((1+x)^b (1+V)^{b-1} - 1)/b`.
#[inline]
pub fn mhat_map(b: u32, v: f64, x: f64) -> f64 {
    let a = power_minus_one(b, x);
    let c = power_minus_one(b - 1, v);
    (a + c + a * c) / b as f64
}

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be >= 0, got {x}")))
    }
}

fn check_b(b: u32) -> Result<()> {
    if b >= 2 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("b must be >= 2, got {b}")))
    }
}

pub fn map_m(b: u32, x: f64) -> Result<f64> {
    check_b(b)?;
    check_nonneg("x", x)?;
    Ok(m_map(b, x))
}

pub fn map_m_inv(b: u32, y: f64) -> Result<f64> {
    check_b(b)?;
    check_nonneg("y", y)?;
    Ok(m_inv(b, y))
}

pub fn map_mhat(b: u32, v: f64, x: f64) -> Result<f64> {
    check_b(b)?;
    check_nonneg("V", v)?;
    check_nonneg("x", x)?;
    Ok(mhat_map(b, v, x))
}

/// The bond map `M` (`v = 0`) or the site map `M̂_V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceMap {
    pub b: u32,
    pub v: f64,
}

impl VarianceMap {
    pub fn bond(b: u32) -> Self {
        Self { b, v: 0.0 }
    }

    pub fn site(b: u32, v: f64) -> Self {
        Self { b, v }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if self.v == 0.0 {
            m_map(self.b, x)
        } else {
            mhat_map(self.b, self.v, x)
        }
    }
}

/// Outcome of iterating a map; overflow is reported, not raised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orbit {
    pub value: f64,
    pub steps: u64,
    pub diverged: bool,
}

pub fn iterate_map(map: &VarianceMap, x0: f64, n: u64) -> Orbit {
    let mut x = x0;
    for step in 0..n {
        x = map.apply(x);
        if !x.is_finite() {
            return Orbit {
                value: f64::INFINITY,
                steps: step + 1,
                diverged: true,
            };
        }
    }
    Orbit {
        value: x,
        steps: n,
        diverged: false,
    }
}

/// Like [`iterate_map`] but also returns `x_0, ..., x_n` (truncated at divergence).
pub fn iterate_trajectory(map: &VarianceMap, x0: f64, n: u64) -> (Vec<f64>, Orbit) {
    let mut traj = Vec::with_capacity(n as usize + 1);
    traj.push(x0);
    let mut x = x0;
    for step in 0..n {
        x = map.apply(x);
        if !x.is_finite() {
            return (
                traj,
                Orbit {
                    value: f64::INFINITY,
                    steps: step + 1,
                    diverged: true,
                },
            );
        }
        traj.push(x);
    }
    (
        traj,
        Orbit {
            value: x,
            steps: n,
            diverged: false,
        },
    )
}

/// Evaluator for `R_b(r)`.
///
/// `R(r)` is the forward orbit `M^j(x_0)` of a point deep in the parabolic
/// basin, where `x_0` is found from the Fatou coordinate normalized so that
/// `φ(R(r)) = r + η log κ²`. The starting offset depends only on the
/// fractional part of `r`, so `R(r+1) = M(R(r))` holds in floating point too.
#[derive(Debug, Clone)]
pub struct RSolver {
    pub b: u32,
    pub fatou: Fatou,
    /// Number of forward steps used for `r` in `[0, 1)`. A few dozen already
    /// put the start where the truncated Fatou series is exact to rounding.
    pub base_depth: u64,
    shift: f64,
}

impl RSolver {
    pub fn new(b: u32, tol: f64) -> Result<Self> {
        check_b(b)?;
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        let c = constants(b)?;
        let mut solver = RSolver {
            b,
            fatou: Fatou::new(b),
            base_depth: 16,
            shift: c.eta * c.kappa2().ln(),
        };
        let mut prev = solver.value(0.0);
        loop {
            solver.base_depth *= 2;
            let cur = solver.value(0.0);
            if (cur - prev).abs() <= tol * cur.abs().max(1.0) {
                return Ok(solver);
            }
            // deeper starts only accumulate rounding along the orbit
            if solver.base_depth > 1 << 12 {
                return Err(Error::NoConvergence(format!(
                    "R_{b}(0) unstable under depth doubling: {prev} vs {cur}"
                )));
            }
            prev = cur;
        }
    }

    fn start(&self, r: f64) -> (f64, u64) {
        let j = (r.floor() + self.base_depth as f64).max(0.0) as u64;
        (self.fatou.inverse(r + self.shift - j as f64), j)
    }

    fn value(&self, r: f64) -> f64 {
        let (x0, j) = self.start(r);
        iterate_map(&VarianceMap::bond(self.b), x0, j).value
    }

    /// `R(r)`; infinite values (very large `r`) are an error.
    pub fn r(&self, r: f64) -> Result<f64> {
        let v = self.value(r);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NoConvergence(format!("R_{}({r}) overflows", self.b)))
        }
    }

    /// `R'(r)` by the chain rule along the same orbit: `(M^j)'(x_0) / φ'(x_0)`.
    pub fn r_prime(&self, r: f64) -> Result<f64> {
        let (mut x, j) = self.start(r);
        let mut log_d = -self.fatou.phi_prime(x).ln();
        for _ in 0..j {
            log_d += (self.b as f64 - 1.0) * x.ln_1p();
            x = m_map(self.b, x);
        }
        let d = log_d.exp();
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NoConvergence(format!("R'_{}({r}) overflows", self.b)))
        }
    }

    /// The parameter `r` with `R(r) = v`, by bisection.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("R^{{-1}} needs v > 0, got {v}")));
        }
        let (mut lo, mut hi) = (-1.0, 0.0);
        while self.value(lo) > v {
            lo *= 2.0;
            if lo < -1e15 {
                return Err(Error::NoBracket(v));
            }
        }
        while self.value(hi) < v {
            hi = 2.0 * hi + 1.0;
            if hi > 1e3 {
                return Err(Error::NoBracket(v));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.value(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `R(r - k)` for `k = 0..=count`, by the closed-form inverse map.
    pub fn backward(&self, r: f64, count: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count + 1);
        let mut y = self.r(r)?;
        out.push(y);
        for _ in 0..count {
            y = m_inv(self.b, y);
            out.push(y);
        }
        Ok(out)
    }
}

/// Default relative tolerance for [`compute_r`].
pub const R_TOL: f64 = 1e-13;

/// `R_b(r)`.
pub fn compute_r(b: u32, r: f64, tol: f64) -> Result<f64> {
    RSolver::new(b, tol)?.r(r)
}

/// The literal construction: seed `x^{n,r} = κ²(1/n + η log n/n² + r/n²)`,
/// iterate `n` times, double `n` until successive values differ by `< tol`.
///
/// Its error decays only like `log² n / n`, so this is kept as a slow
/// reference rather than the production path.
pub fn compute_r_seeded(b: u32, r: f64, tol: f64, max_n: u64) -> Result<(f64, u64)> {
    let c = constants(b)?;
    let seed = |n: u64| {
        let nf = n as f64;
        c.kappa2() * (1.0 / nf + c.eta * nf.ln() / (nf * nf) + r / (nf * nf))
    };
    let map = VarianceMap::bond(b);
    let mut n = 1024u64;
    let mut prev = iterate_map(&map, seed(n), n).value;
    while n < max_n {
        n *= 2;
        let cur = iterate_map(&map, seed(n), n).value;
        if (cur - prev).abs() < tol {
            return Ok((cur, n));
        }
        prev = cur;
    }
    Err(Error::NoConvergence(format!(
        "seeded R_{b}({r}) still moving at n = {n}: last value {prev}"
    )))
}

/// `(κ²/n²) Π_{k=1}^n (1 + R(r-k))^{b-1}` at `n = n_terms`.
pub fn compute_r_prime(b: u32, r: f64, n_terms: usize) -> Result<f64> {
    let solver = RSolver::new(b, R_TOL)?;
    r_prime_product(&solver, r, n_terms)
}

pub fn r_prime_product(solver: &RSolver, r: f64, n_terms: usize) -> Result<f64> {
    if n_terms == 0 {
        return Err(Error::InvalidParameter("n_terms must be positive".into()));
    }
    let b = solver.b;
    let vals = solver.backward(r, n_terms)?;
    let log_prod: f64 = vals[1..].iter().map(|v| v.ln_1p()).sum::<f64>() * (b as f64 - 1.0);
    let n = n_terms as f64;
    Ok(constants(b)?.kappa2() / (n * n) * log_prod.exp())
}

/// `D_k(y) = (k+1)^{-2} Π_{ℓ=1}^k (1 + M^{-ℓ}(y))^{b-1}`.
pub fn compute_dk(b: u32, k: u64, y: f64) -> Result<f64> {
    check_b(b)?;
    check_nonneg("y", y)?;
    let mut z = y;
    let mut log_prod = 0.0;
    for _ in 0..k {
        z = m_inv(b, z);
        log_prod += z.ln_1p();
    }
    let kp1 = (k + 1) as f64;
    Ok(((b as f64 - 1.0) * log_prod).exp() / (kp1 * kp1))
}

/// `|M̂_V^n(0) - M^L(M̂_V^{n-L}(0))|` with `L = ⌊log n⌋`.
pub fn site_reduction_gap(b: u32, n: u64, v: f64) -> Result<f64> {
    check_b(b)?;
    check_nonneg("V", v)?;
    let l = if n >= 1 { (n as f64).ln().floor() as u64 } else { 0 };
    let site = VarianceMap::site(b, v);
    let head = iterate_map(&site, 0.0, n - l);
    let full = iterate_map(&site, head.value, l);
    let reduced = iterate_map(&VarianceMap::bond(b), head.value, l);
    if full.diverged || reduced.diverged {
        return Err(Error::NoConvergence("site iteration overflowed".into()));
    }
    Ok((full.value - reduced.value).abs())
}

/// `r_k = (2/π) atan(2 𝐧 M̂_V^k(0) / (π κ²))` for `k = 0..=n`.
pub fn tan_transform_profile(b: u32, n: u64, v: f64) -> Result<Vec<f64>> {
    check_b(b)?;
    if !(v > 0.0) {
        return Err(Error::InvalidParameter("V must be positive".into()));
    }
    let c = constants(b)?;
    let bold_n = c.bold_n(v);
    let scale = 2.0 * bold_n / (std::f64::consts::PI * c.kappa2());
    let (traj, _) = iterate_trajectory(&VarianceMap::site(b, v), 0.0, n);
    Ok(traj
        .iter()
        .map(|x| std::f64::consts::FRAC_2_PI * (scale * x).atan())
        .collect())
}

/// Predicted `n (1 - r_{n-⌊log n⌋})`: `⌊log n⌋ - η log log n - r`.
pub fn flattened_target(b: u32, n: u64, r: f64) -> Result<f64> {
    let eta = constants(b)?.eta;
    let ln = (n as f64).ln();
    Ok(ln.floor() - eta * ln.ln() - r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn map_examples() {
        assert_eq!(map_m(2, 0.0).unwrap(), 0.0);
        assert_eq!(map_m(2, 1.0).unwrap(), 1.5);
        assert!(map_m(2, -0.1).is_err());
        assert!(map_m_inv(2, -0.1).is_err());
        for b in [2, 3, 7] {
            for i in 0..50 {
                let x = 1e-9 * 2f64.powi(i);
                let y = map_m_inv(b, map_m(b, x).unwrap()).unwrap();
                assert!((y - x).abs() <= 1e-14 * x.max(1e-300), "b={b} x={x}");
            }
        }
        let v = 0.3;
        assert!((mhat_map(3, v, 0.0) - ((1.0 + v) * (1.0 + v) - 1.0) / 3.0).abs() < 1e-16);
        assert_eq!(mhat_map(3, 0.0, 0.4), m_map(3, 0.4));
    }

    #[test]
    fn small_x_expansion() {
        for b in [2u32, 3, 4] {
            let ratios: Vec<f64> = [1e-2, 1e-3]
                .iter()
                .map(|&x| (m_map(b, x) - x - (b as f64 - 1.0) / 2.0 * x * x).abs() / x.powi(3))
                .collect();
            let c3 = (b as f64 - 1.0) * (b as f64 - 2.0) / 6.0;
            assert!(ratios.iter().all(|r| (r - c3).abs() < 0.1 + 0.1 * c3), "{ratios:?}");
        }
    }

    #[test]
    fn iterate_examples() {
        let m = VarianceMap::bond(2);
        assert_eq!(iterate_map(&m, 0.7, 0).value, 0.7);
        let blow = iterate_map(&m, 10.0, 100);
        assert!(blow.diverged && blow.steps < 100);
        let (traj, orbit) = iterate_trajectory(&m, 0.1, 5);
        assert_eq!(traj.len(), 6);
        assert_eq!(*traj.last().unwrap(), orbit.value);
    }

    #[test]
    fn r_fixed_shift_and_monotone() {
        for b in [2u32, 3] {
            let s = RSolver::new(b, R_TOL).unwrap();
            for r in -3..=3 {
                let (a, c) = (s.r(r as f64).unwrap(), s.r(r as f64 + 1.0).unwrap());
                assert_eq!(m_map(b, a), c);
            }
            assert!(s.r(-1.0).unwrap() < s.r(0.0).unwrap());
            assert!(s.r(0.0).unwrap() < s.r(1.0).unwrap());
            assert!(s.r(-0.5).unwrap() < s.r(-0.25).unwrap());
        }
    }

    #[test]
    fn r_independent_of_depth() {
        // a deeper start reproduces R up to rounding, away from the lattice
        let s = RSolver::new(2, R_TOL).unwrap();
        let mut deeper = s.clone();
        deeper.base_depth *= 4;
        for r in [-3.0, -0.3, 0.0, 1.7] {
            let (a, c) = (s.r(r).unwrap(), deeper.r(r).unwrap());
            assert!((a - c).abs() <= 1e-12 * a, "r={r}: {a} vs {c}");
        }
    }

    #[test]
    fn r_agrees_with_slow_seeded_construction() {
        // seeded value at n = 2^20 is within its O(log² n / n) error band
        let exact = compute_r(2, 0.0, R_TOL).unwrap();
        let n = 1u64 << 20;
        let nf = n as f64;
        let seed = 2.0 * (1.0 / nf + nf.ln() / (nf * nf));
        let slow = iterate_map(&VarianceMap::bond(2), seed, n).value;
        assert!((slow - exact).abs() < 0.01 * exact, "{slow} vs {exact}");
        assert!(slow < exact);
    }

    #[test]
    fn inverse_of_r() {
        let s = RSolver::new(3, R_TOL).unwrap();
        for r in [-500.0, -2.5, 0.0, 1.25] {
            let back = s.inverse(s.r(r).unwrap()).unwrap();
            assert!((back - r).abs() < 1e-9 * r.abs().max(1.0), "{r} -> {back}");
        }
        assert!(s.inverse(0.0).is_err());
    }

    #[test]
    fn r_asymptotics() {
        let s = RSolver::new(2, R_TOL).unwrap();
        let r = -1e4;
        let v = s.r(r).unwrap();
        let lead = v * (-r) / 2.0 - 1.0;
        let corrected = (v - 2.0 / (-r) - 2.0 * (-r as f64).ln() / (r * r)) * (-r) / 2.0;
        assert!(lead.abs() < 5e-3);
        assert!(corrected.abs() * 10.0 <= lead.abs());
    }

    #[test]
    fn r_prime_forms_agree() {
        let s = RSolver::new(2, R_TOL).unwrap();
        for r in [-5.0, 0.0, 2.0] {
            let exact = s.r_prime(r).unwrap();
            let h = 1e-4;
            let fd = (s.r(r + h).unwrap() - s.r(r - h).unwrap()) / (2.0 * h);
            assert!((exact - fd).abs() < 1e-6 * exact, "r={r}");
            let prod = r_prime_product(&s, r, 200_000).unwrap();
            assert!((prod - exact).abs() < 1e-3 * exact, "r={r}: {prod} vs {exact}");
        }
    }

    #[test]
    fn dk_examples() {
        assert_eq!(compute_dk(2, 0, 3.0).unwrap(), 1.0);
        // D_k(1) dips until k ≈ 48 before settling, so start past the dip
        let gaps: Vec<f64> = (7..18)
            .map(|j| 1u64 << j)
            .map(|k| (compute_dk(2, 2 * k, 1.0).unwrap() - compute_dk(2, k, 1.0).unwrap()).abs())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        let mut sup: f64 = 0.0;
        for k in 0..=64 {
            for i in 0..=20 {
                sup = sup.max(compute_dk(2, k, 0.1 * i as f64).unwrap());
            }
        }
        assert!(sup.is_finite() && sup >= 1.0);
    }

    #[test]
    fn telescoping_reconstructs_r() {
        let s = RSolver::new(2, R_TOL).unwrap();
        let r0 = s.r(0.0).unwrap();
        let vals = s.backward(0.0, 200_000).unwrap();
        let sum: f64 = vals[1..].iter().rev().map(|&v| m_map(2, v) - v).sum();
        assert!((sum + vals[200_000] - r0).abs() < 1e-9);
    }

    #[test]
    fn site_gap_basics() {
        assert_eq!(site_reduction_gap(2, 50, 0.0).unwrap(), 0.0);
        assert!(site_reduction_gap(2, 1000, 1e-6).unwrap() >= 0.0);
    }

    #[test]
    fn tan_profile_is_monotone_from_zero() {
        let v = crate::scaling::target_variance(crate::Model::Site, 2, 1000, 0.0).unwrap();
        let prof = tan_transform_profile(2, 1000, v).unwrap();
        assert_eq!(prof[0], 0.0);
        assert!(prof.windows(2).all(|w| w[1] >= w[0]));
    }

    proptest! {
        #[test]
        fn maps_are_increasing_convex_and_ordered(x in 0.0f64..5.0, dx in 1e-6f64..1.0, v in 0.0f64..1.0, b in 2u32..6) {
            let (m0, m1, m2) = (m_map(b, x), m_map(b, x + dx), m_map(b, x + 2.0 * dx));
            prop_assert!(m1 > m0);
            prop_assert!(m2 - m1 >= (m1 - m0) * (1.0 - 1e-12));
            prop_assert!(m0 >= x);
            prop_assert!(mhat_map(b, v, x) >= m0);
        }

        #[test]
        fn inverse_round_trip(y in 0.0f64..1e3, b in 2u32..6) {
            let x = m_inv(b, y);
            prop_assert!((m_map(b, x) - y).abs() <= 1e-13 * y.max(1e-300));
        }
    }
}
