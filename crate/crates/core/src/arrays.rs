//! The contraction map `Q`, its linearization `L` and remainder `E = Q - L`
//! on edge-indexed arrays of the symmetric graph (`s = b`).
//!
//! A level-`k` array holds `b^{2k}` values in serialized edge order. The
//! children `a x (i, j)` of a level-`(k-1)` edge `a` sit at
//! `a + (i b + j) b^{2(k-1)}` (0-based `i`, `j`), so each `(i, j)` block is
//! contiguous.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeArray {
    pub b: usize,
    pub level: u32,
    pub values: Vec<f64>,
}

impl EdgeArray {
    pub fn new(b: usize, level: u32, values: Vec<f64>) -> Result<Self> {
        if b < 2 {
            return Err(Error::InvalidParameter(format!("b must be >= 2, got {b}")));
        }
        let len = array_len(b, level)?;
        if values.len() != len {
            return Err(Error::InvalidParameter(format!(
                "level-{level} array for b={b} needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(Self { b, level, values })
    }

    pub fn zeros(b: usize, level: u32) -> Result<Self> {
        Self::new(b, level, vec![0.0; array_len(b, level)?])
    }

    pub fn filled(b: usize, level: u32, x: f64) -> Result<Self> {
        Self::new(b, level, vec![x; array_len(b, level)?])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn parent_len(&self) -> Result<usize> {
        if self.level == 0 {
            return Err(Error::LevelZero);
        }
        Ok(self.values.len() / (self.b * self.b))
    }
}

pub fn array_len(b: usize, level: u32) -> Result<usize> {
    (b * b)
        .checked_pow(level)
        .ok_or(Error::Overflow("array length"))
}

/// `w_a = (1/b) Σ_i (Π_j (1 + x_{a×(i,j)}) - 1)`.
pub fn apply_q(a: &EdgeArray) -> Result<EdgeArray> {
    let stride = a.parent_len()?;
    let b = a.b;
    let mut out = vec![0.0; stride];
    let mut terms = vec![0.0; b];
    for (idx, w) in out.iter_mut().enumerate() {
        for (i, t) in terms.iter_mut().enumerate() {
            let mut prod = 1.0;
            for j in 0..b {
                prod *= 1.0 + a.values[(i * b + j) * stride + idx];
            }
            *t = prod - 1.0;
        }
        *w = pairwise_sum(&terms) / b as f64;
    }
    Ok(EdgeArray {
        b,
        level: a.level - 1,
        values: out,
    })
}

/// `y_a = (1/b) Σ_{i,j} x_{a×(i,j)}`.
pub fn apply_l(a: &EdgeArray) -> Result<EdgeArray> {
    let stride = a.parent_len()?;
    let b = a.b;
    let mut out = vec![0.0; stride];
    let mut terms = vec![0.0; b * b];
    for (idx, y) in out.iter_mut().enumerate() {
        for (d, t) in terms.iter_mut().enumerate() {
            *t = a.values[d * stride + idx];
        }
        *y = pairwise_sum(&terms) / b as f64;
    }
    Ok(EdgeArray {
        b,
        level: a.level - 1,
        values: out,
    })
}

/// `E = Q - L`, evaluated entrywise from the two maps.
pub fn apply_e(a: &EdgeArray) -> Result<EdgeArray> {
    let q = apply_q(a)?;
    let l = apply_l(a)?;
    Ok(EdgeArray {
        b: a.b,
        level: q.level,
        values: q.values.iter().zip(&l.values).map(|(q, l)| q - l).collect(),
    })
}

/// Applies `Q` `times` times.
pub fn apply_q_n(a: &EdgeArray, times: u32) -> Result<EdgeArray> {
    if times > a.level {
        return Err(Error::LevelZero);
    }
    let mut cur = a.clone();
    for _ in 0..times {
        cur = apply_q(&cur)?;
    }
    Ok(cur)
}

pub fn apply_l_n(a: &EdgeArray, times: u32) -> Result<EdgeArray> {
    if times > a.level {
        return Err(Error::LevelZero);
    }
    let mut cur = a.clone();
    for _ in 0..times {
        cur = apply_l(&cur)?;
    }
    Ok(cur)
}

/// The tower `layer k = Q^{n-k}(generator)` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QPyramid {
    pub layers: Vec<EdgeArray>,
}

impl QPyramid {
    pub fn top(&self) -> f64 {
        self.layers[0].values[0]
    }

    pub fn depth(&self) -> u32 {
        (self.layers.len() - 1) as u32
    }
}

pub fn build_pyramid(generator: &EdgeArray) -> QPyramid {
    let n = generator.level as usize;
    let mut layers = Vec::with_capacity(n + 1);
    layers.push(generator.clone());
    for _ in 0..n {
        let next = apply_q(layers.last().unwrap()).expect("level checked");
        layers.push(next);
    }
    layers.reverse();
    QPyramid { layers }
}

/// `1 + Q^n{x}` for a level-`n` array of normalized weights minus one.
pub fn partition_from_disorder(weights: &EdgeArray) -> f64 {
    1.0 + apply_q_n(weights, weights.level).expect("level checked").values[0]
}

/// `Q^n` evaluated depth-first with leaves produced on demand.
///
/// `leaf(idx)` must return the level-`n` entry at serialized index `idx`.
/// Memory is `O(n b^2)`; leaves are requested in depth-first order.
pub fn q_depth_first<F: FnMut(u64) -> f64>(b: usize, n: u32, mut leaf: F) -> f64 {
    if n == 0 {
        return leaf(0);
    }
    q_node(b, n, 0, 1, &mut leaf)
}

fn q_node<F: FnMut(u64) -> f64>(b: usize, depth: u32, prefix: u64, place: u64, leaf: &mut F) -> f64 {
    let radix = (b * b) as u64;
    let mut acc = 0.0;
    for i in 0..b {
        let mut prod = 1.0;
        for j in 0..b {
            let idx = prefix + place * (i * b + j) as u64;
            let child = if depth == 1 {
                leaf(idx)
            } else {
                q_node(b, depth - 1, idx, place * radix, leaf)
            };
            prod *= 1.0 + child;
        }
        acc += prod - 1.0;
    }
    acc / b as f64
}

/// Pairwise summation; exact order is fixed so results are reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}
