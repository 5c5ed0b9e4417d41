//! Fatou coordinate of the variance map at its parabolic fixed point.
//!
//! Near zero, `M(x) = x + a x² + O(x³)` with `a = (b-1)/2`. The function
//! `φ(x) = -1/(a x) + η log x + Σ_k d_k x^k` satisfies `φ(M(x)) = φ(x) + 1` as
//! a formal series, with `η = (b+1)/(3(b-1))` forced by the `x¹` coefficient.
//! Truncating the sum leaves an `O(x^{K+1})` defect, which is negligible once
//! `x` is pushed close enough to zero.

use crate::disorder::binomial;

/// Number of correction coefficients `d_1..d_K` kept.
pub const TERMS: usize = 10;

#[derive(Debug, Clone)]
pub struct Fatou {
    pub b: u32,
    pub a: f64,
    pub eta: f64,
    pub d: Vec<f64>,
}

impl Fatou {
    pub fn new(b: u32) -> Self {
        let a = (b as f64 - 1.0) / 2.0;
        let eta = (b as f64 + 1.0) / (3.0 * (b as f64 - 1.0));
        let len = TERMS + 2;
        // M(x) = x (1 + u(x))
        let mut u = vec![0.0; len];
        for k in 1..(b as usize).min(len) {
            u[k] = binomial(b as usize, k + 1) / b as f64;
        }
        let inv = series_inv_one_plus(&u);
        // A(x) = -(1/a) (1/(1+u) - 1) / x
        let mut big_a = vec![0.0; len];
        for j in 0..len - 1 {
            big_a[j] = -inv[j + 1] / a;
        }
        let lg = series_log_one_plus(&u);
        // P_k(x) = x^k ((1+u)^k - 1)
        let mut p: Vec<Vec<f64>> = vec![vec![]; TERMS + 1];
        let mut pow = vec![0.0; len];
        pow[0] = 1.0;
        for (k, pk) in p.iter_mut().enumerate().skip(1) {
            pow = series_mul(&pow, &one_plus(&u));
            let mut s = vec![0.0; len];
            for j in 1..len {
                if j + k < len {
                    s[j + k] = pow[j];
                }
            }
            *pk = s;
        }
        let mut d = vec![0.0; TERMS + 1];
        for j in 2..len {
            let k = j - 1;
            if k > TERMS {
                break;
            }
            let mut rest = big_a[j] + eta * lg[j];
            for (kk, pk) in p.iter().enumerate().take(k).skip(1) {
                rest += d[kk] * pk[j];
            }
            d[k] = -rest / (k as f64 * a);
        }
        Fatou { b, a, eta, d }
    }

    pub fn phi(&self, x: f64) -> f64 {
        -1.0 / (self.a * x) + self.eta * x.ln() + self.correction(x)
    }

    pub fn phi_prime(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for k in (1..self.d.len()).rev() {
            s = s * x + k as f64 * self.d[k];
        }
        1.0 / (self.a * x * x) + self.eta / x + s
    }

    fn correction(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for k in (1..self.d.len()).rev() {
            s = (s + self.d[k]) * x;
        }
        s
    }

    /// Solves `φ(x) = t` for small positive `x`; requires `t` well below zero.
    pub fn inverse(&self, t: f64) -> f64 {
        debug_assert!(t < -10.0);
        let mut x = -1.0 / (self.a * t);
        for _ in 0..60 {
            let dx = (self.phi(x) - t) / self.phi_prime(x);
            let next = x - dx;
            let next = if next <= 0.0 { 0.5 * x } else { next };
            if (next - x).abs() <= 1e-17 * x {
                return next;
            }
            x = next;
        }
        x
    }
}

fn one_plus(u: &[f64]) -> Vec<f64> {
    let mut v = u.to_vec();
    v[0] += 1.0;
    v
}

fn series_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        for j in 0..n - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

/// `1/(1+u)` for a series `u` with zero constant term.
fn series_inv_one_plus(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    out[0] = 1.0;
    for j in 1..n {
        let mut s = 0.0;
        for k in 1..=j {
            s += u[k] * out[j - k];
        }
        out[j] = -s;
    }
    out
}

/// `log(1+u)` for a series `u` with zero constant term, via `L' = u'/(1+u)`.
fn series_log_one_plus(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let inv = series_inv_one_plus(u);
    let du: Vec<f64> = (0..n).map(|j| if j + 1 < n { (j + 1) as f64 * u[j + 1] } else { 0.0 }).collect();
    let q = series_mul(&du, &inv);
    let mut out = vec![0.0; n];
    for j in 1..n {
        out[j] = q[j - 1] / j as f64;
    }
    out
}
