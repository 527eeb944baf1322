//! Quadrature of 3-forms over a periodic box.

use crate::calc3::{FormField, Vec3};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The box `origin + [0, period_x] × [0, period_y] × [0, period_z]` with opposite faces identified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBox {
    pub origin: [f64; 3],
    pub period: [f64; 3],
}

impl Default for PeriodicBox {
    fn default() -> Self {
        PeriodicBox { origin: [0.0; 3], period: [1.0; 3] }
    }
}

impl PeriodicBox {
    pub fn cube(period: f64) -> Self {
        PeriodicBox { origin: [0.0; 3], period: [period; 3] }
    }

    pub fn volume(&self) -> f64 {
        self.period.iter().product()
    }

    /// Grid node `(i, j, k)` with `n` cells per side.
    pub fn node(&self, n: usize, i: usize, j: usize, k: usize) -> Vec3 {
        let t = |a: usize, idx: usize| self.origin[a] + self.period[a] * idx as f64 / n as f64;
        Vec3::new(t(0, i), t(1, j), t(2, k))
    }
}

/// Samples on the closed grid of `(n+1)³` nodes, `values[(i*(n+1) + j)*(n+1) + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicGrid {
    pub n: usize,
    pub values: Vec<f64>,
}

impl PeriodicGrid {
    pub fn sample(f: impl Fn(&Vec3) -> Result<f64> + Sync, bx: &PeriodicBox, n: usize) -> Result<Self> {
        let m = n + 1;
        let slabs = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::with_capacity(m * m);
                for j in 0..m {
                    for k in 0..m {
                        out.push(f(&bx.node(n, i, j, k))?);
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PeriodicGrid { n, values: slabs.concat() })
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let m = self.n + 1;
        self.values[(i * m + j) * m + k]
    }

    /// Largest difference between samples on opposite faces.
    pub fn boundary_mismatch(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                worst = worst
                    .max((self.get(0, a, b) - self.get(n, a, b)).abs())
                    .max((self.get(a, 0, b) - self.get(a, n, b)).abs())
                    .max((self.get(a, b, 0) - self.get(a, b, n)).abs());
            }
        }
        worst
    }
}

/// Sum in a fixed binary tree, independent of thread count.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// Rectangle rule over the `n³` distinct nodes. Fails if opposite faces
/// disagree by more than `tol·max(1, max|ω|)`.
pub fn integrate_periodic_grid(grid: &PeriodicGrid, bx: &PeriodicBox, tol: f64) -> Result<f64> {
    let scale = grid.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mismatch = grid.boundary_mismatch();
    if !(mismatch <= tol * scale) {
        return Err(Error::Periodicity { mismatch });
    }
    let n = grid.n;
    let mut inner = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                inner.push(grid.get(i, j, k));
            }
        }
    }
    Ok(pairwise_sum(&inner) * bx.volume() / (n * n * n) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusIntegral {
    pub value: f64,
    /// `|I_n − I_{n/2}|`.
    pub error_estimate: f64,
    pub n: usize,
    /// `max |ω|` over the samples, for scaling tolerances.
    pub max_abs: f64,
}

/// `∫ω` over the periodic box on an `n³` grid (`n` even), with an error
/// estimate from the half-resolution grid.
pub fn integrate_3form_torus(w: &dyn FormField, bx: &PeriodicBox, n: usize, periodicity_tol: f64) -> Result<TorusIntegral> {
    if w.grade() != 3 {
        return Err(Error::Grade(format!("torus integral needs a 3-form, got grade {}", w.grade())));
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("grid size must be even and at least 2, got {n}")));
    }
    let f = |x: &Vec3| w.value(x).map(|f| f.scalar().unwrap());
    let fine = PeriodicGrid::sample(f, bx, n)?;
    let value = integrate_periodic_grid(&fine, bx, periodicity_tol)?;
    // the coarse grid is every other fine node
    let h = n / 2;
    let coarse = PeriodicGrid {
        n: h,
        values: (0..=h)
            .flat_map(|i| (0..=h).flat_map(move |j| (0..=h).map(move |k| (i, j, k))))
            .map(|(i, j, k)| fine.get(2 * i, 2 * j, 2 * k))
            .collect(),
    };
    let half = integrate_periodic_grid(&coarse, bx, periodicity_tol)?;
    Ok(TorusIntegral {
        value,
        error_estimate: (value - half).abs(),
        n,
        max_abs: fine.values.iter().fold(0.0, |a, v| a.max(v.abs())),
    })
}
