//! Critical constants and inverse-temperature schedules.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::disorder::{variance_of_weight, DisorderSpec};
use crate::error::{Error, Result};
use crate::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalConstants {
    pub b: u32,
    pub kappa: f64,
    pub eta: f64,
    pub kappa_hat: f64,
}

impl CriticalConstants {
    pub fn kappa2(&self) -> f64 {
        self.kappa * self.kappa
    }

    /// `𝐧 = (πκ/2) √(b/(b-1)) V^{-1/2}`.
    pub fn bold_n(&self, v: f64) -> f64 {
        let b = self.b as f64;
        0.5 * PI * self.kappa * (b / (b - 1.0)).sqrt() / v.sqrt()
    }
}

pub fn constants(b: u32) -> Result<CriticalConstants> {
    if b < 2 {
        return Err(Error::InvalidParameter(format!("b must be >= 2, got {b}")));
    }
    let bf = b as f64;
    Ok(CriticalConstants {
        b,
        kappa: (2.0 / (bf - 1.0)).sqrt(),
        eta: (bf + 1.0) / (3.0 * (bf - 1.0)),
        kappa_hat: PI * bf.sqrt() / (2f64.sqrt() * (bf - 1.0)),
    })
}

fn check_n(n: u64) -> Result<f64> {
    if n >= 2 {
        Ok(n as f64)
    } else {
        Err(Error::InvalidParameter(format!("n must be >= 2, got {n}")))
    }
}

/// Bond: `κ²(1/n + η log n/n² + r/n²)`. Site: `κ̂²(1/n² + 2η log n/n³ + 2r/n³)`.
pub fn target_variance(model: Model, b: u32, n: u64, r: f64) -> Result<f64> {
    let c = constants(b)?;
    let nf = check_n(n)?;
    let ln = nf.ln();
    let v = match model {
        Model::Bond => c.kappa2() * (1.0 / nf + c.eta * ln / (nf * nf) + r / (nf * nf)),
        Model::Site => {
            let n3 = nf * nf * nf;
            c.kappa_hat * c.kappa_hat * (1.0 / (nf * nf) + 2.0 * c.eta * ln / n3 + 2.0 * r / n3)
        }
    };
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::NonPositiveTarget(v))
    }
}

/// Root of `V(β) = target` with `β > 0`, bisected to `1e-14` relative.
pub fn invert_variance(spec: &DisorderSpec, target: f64) -> Result<f64> {
    spec.validate()?;
    if !(target > 0.0) {
        return Err(Error::NonPositiveTarget(target));
    }
    let mut hi = target.sqrt().max(1e-300);
    let mut doublings = 0;
    while variance_of_weight(spec, hi) <= target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 64 || !hi.is_finite() {
            return Err(Error::NoBracket(target));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if variance_of_weight(spec, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn beta_exact(model: Model, spec: &DisorderSpec, b: u32, n: u64, r: f64) -> Result<f64> {
    invert_variance(spec, target_variance(model, b, n, r)?)
}

/// The truncated asymptotic series for `β_{n,r}` (bond) or `β̂_{n,r}` (site).
pub fn beta_series(model: Model, spec: &DisorderSpec, b: u32, n: u64, r: f64) -> Result<f64> {
    spec.validate()?;
    let c = constants(b)?;
    let nf = check_n(n)?;
    let (tau, tau_p) = (spec.tau(), spec.tau_prime());
    let ln = nf.ln();
    Ok(match model {
        Model::Bond => {
            let k = c.kappa;
            let n32 = nf * nf.sqrt();
            k / nf.sqrt() - k * k * tau / (2.0 * nf)
                + k * c.eta * ln / (2.0 * n32)
                + (k * r + k.powi(3) * (1.25 * tau * tau - 7.0 / 12.0 * tau_p - 0.5)) / (2.0 * n32)
        }
        Model::Site => {
            let k = c.kappa_hat;
            let n2 = nf * nf;
            k / nf + k * c.eta * ln / n2 + (k * r - 0.5 * k * k * tau) / n2
        }
    })
}

/// `υ_b(β̂) = β̂ (√2/√b) tan((π/2) β̂/κ̂_b)`, the subcritical site variance constant.
pub fn upsilon(b: u32, beta_hat: f64) -> Result<f64> {
    let c = constants(b)?;
    if !(0.0..c.kappa_hat).contains(&beta_hat) {
        return Err(Error::InvalidParameter(format!(
            "β̂ must lie in [0, {}), got {beta_hat}",
            c.kappa_hat
        )));
    }
    Ok(beta_hat * (2.0 / b as f64).sqrt() * (0.5 * PI * beta_hat / c.kappa_hat).tan())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    ExactInversion,
    Series,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSchedule {
    pub model: Model,
    pub b: u32,
    pub r: f64,
    pub spec: DisorderSpec,
    pub mode: ScheduleMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub n: u64,
    pub v_target: f64,
    pub beta_exact: f64,
    pub beta_series: f64,
    pub diff: f64,
}

impl ScalingSchedule {
    pub fn beta(&self, n: u64) -> Result<f64> {
        match self.mode {
            ScheduleMode::ExactInversion => beta_exact(self.model, &self.spec, self.b, n, self.r),
            ScheduleMode::Series => beta_series(self.model, &self.spec, self.b, n, self.r),
        }
    }

    pub fn row(&self, n: u64) -> Result<ScheduleRow> {
        let v_target = target_variance(self.model, self.b, n, self.r)?;
        let exact = invert_variance(&self.spec, v_target)?;
        let series = beta_series(self.model, &self.spec, self.b, n, self.r)?;
        Ok(ScheduleRow {
            n,
            v_target,
            beta_exact: exact,
            beta_series: series,
            diff: exact - series,
        })
    }

    pub fn table(&self, ns: &[u64]) -> Result<Vec<ScheduleRow>> {
        ns.iter().map(|&n| self.row(n)).collect()
    }
}
