//! Vector calculus and exterior algebra on three-dimensional chart domains.
//!
//! Everything here uses the Euclidean metric and the orientation
//! `dx∧dy∧dz`. Derivatives come from a pluggable backend: central finite
//! differences (order 2 or 4) or exact derivatives supplied by the field.

mod fields;
mod forms;

pub use fields::{Domain, ScalarField, ScalarFn, VectorField, VectorFn};
pub use forms::{
    contract, d_from_partials, ext_deriv, flat, form_directional, hodge, sharp, wedge, ExtDeriv, Form,
    FormField, FormFn,
};

use crate::error::{arr, Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Point3 = Vec3;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Which derivative source an operation should use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    FiniteDifference,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffConfig {
    pub backend: Backend,
    /// Finite-difference step in chart units.
    pub h: f64,
    /// Stencil order, 2 or 4.
    pub order: u8,
}

impl Default for DiffConfig {
    fn default() -> Self {
        DiffConfig {
            backend: Backend::FiniteDifference,
            h: 1e-4,
            order: 2,
        }
    }
}

impl DiffConfig {
    pub fn finite_difference(h: f64, order: u8) -> Result<Self> {
        let cfg = DiffConfig {
            backend: Backend::FiniteDifference,
            h,
            order,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn exact() -> Self {
        DiffConfig {
            backend: Backend::Exact,
            ..DiffConfig::default()
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step must be positive, got {}",
                self.h
            )));
        }
        if self.order != 2 && self.order != 4 {
            return Err(Error::InvalidArgument(format!(
                "stencil order must be 2 or 4, got {}",
                self.order
            )));
        }
        Ok(())
    }

    pub fn is_exact(&self) -> bool {
        self.backend == Backend::Exact
    }
}

/// Central-difference stencil around a point.
///
/// Points are laid out axis by axis: for order 2 `[x+h e_k, x-h e_k]`, for
/// order 4 `[x+h e_k, x-h e_k, x+2h e_k, x-2h e_k]`. Callers may evaluate the
/// points in any order (e.g. in parallel) and hand the values back to
/// [`Stencil::partials`].
#[derive(Clone, Debug)]
pub struct Stencil {
    pub center: Vec3,
    pub h: f64,
    pub order: u8,
}

impl Stencil {
    pub fn new(center: Vec3, cfg: &DiffConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Stencil {
            center,
            h: cfg.h,
            order: cfg.order,
        })
    }

    fn per_axis(&self) -> usize {
        if self.order == 4 {
            4
        } else {
            2
        }
    }

    pub fn points(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(3 * self.per_axis());
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = self.h;
            out.push(self.center + e);
            out.push(self.center - e);
            if self.order == 4 {
                out.push(self.center + 2.0 * e);
                out.push(self.center - 2.0 * e);
            }
        }
        out
    }

    /// Fails if any stencil point leaves `domain`.
    pub fn check(&self, domain: &Domain) -> Result<()> {
        for p in self.points() {
            if !domain.contains(&p) {
                return Err(Error::DomainBoundary { point: arr(&p) });
            }
        }
        Ok(())
    }

    /// Partial derivatives `[∂_x, ∂_y, ∂_z]` from values at [`Stencil::points`].
    pub fn partials<T>(&self, values: &[T]) -> [T; 3]
    where
        T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
    {
        let m = self.per_axis();
        assert_eq!(values.len(), 3 * m, "stencil value count mismatch");
        let d = |k: usize| {
            let v = &values[k * m..(k + 1) * m];
            if self.order == 4 {
                ((v[0] - v[1]) * 8.0 - (v[2] - v[3])) * (1.0 / (12.0 * self.h))
            } else {
                (v[0] - v[1]) * (0.5 / self.h)
            }
        };
        [d(0), d(1), d(2)]
    }
}

/// Central difference of `f` along a (not necessarily unit) direction.
pub fn directional<T, F>(f: F, domain: &Domain, x: &Vec3, dir: &Vec3, cfg: &DiffConfig) -> Result<T>
where
    F: Fn(&Vec3) -> Result<T>,
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    cfg.validate()?;
    let h = cfg.h;
    let offsets: &[f64] = if cfg.order == 4 { &[1.0, -1.0, 2.0, -2.0] } else { &[1.0, -1.0] };
    let mut vals = Vec::with_capacity(offsets.len());
    for &o in offsets {
        let p = x + dir * (o * h);
        if !domain.contains(&p) {
            return Err(Error::DomainBoundary { point: arr(&p) });
        }
        vals.push(f(&p)?);
    }
    Ok(if cfg.order == 4 {
        ((vals[0] - vals[1]) * 8.0 - (vals[2] - vals[3])) * (1.0 / (12.0 * h))
    } else {
        (vals[0] - vals[1]) * (0.5 / h)
    })
}

fn fd_partials<T, F>(f: F, domain: &Domain, x: &Vec3, cfg: &DiffConfig) -> Result<[T; 3]>
where
    F: Fn(&Vec3) -> Result<T>,
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    cfg.validate()?;
    let h = cfg.h;
    // evaluated in place; this sits in the innermost loop of the pair transport
    let at = |k: usize, t: f64| -> Result<T> {
        let mut p = *x;
        p[k] += t;
        if !domain.contains(&p) {
            return Err(Error::DomainBoundary { point: arr(&p) });
        }
        f(&p)
    };
    let d = |k: usize| -> Result<T> {
        let (a, b) = (at(k, h)?, at(k, -h)?);
        if cfg.order == 4 {
            let (a2, b2) = (at(k, 2.0 * h)?, at(k, -2.0 * h)?);
            Ok(((a - b) * 8.0 - (a2 - b2)) * (1.0 / (12.0 * h)))
        } else {
            Ok((a - b) * (0.5 / h))
        }
    };
    Ok([d(0)?, d(1)?, d(2)?])
}

pub fn grad(f: &dyn ScalarField, x: &Vec3, cfg: &DiffConfig) -> Result<Vec3> {
    if cfg.is_exact() {
        return f.exact_gradient(x).ok_or(Error::NoExactDerivative);
    }
    let p = fd_partials(|y| f.value(y), &f.domain(), x, cfg)?;
    Ok(Vec3::new(p[0], p[1], p[2]))
}

/// Jacobian `J[i][j] = ∂V_i/∂x_j`.
pub fn jacobian(v: &dyn VectorField, x: &Vec3, cfg: &DiffConfig) -> Result<Mat3> {
    if cfg.is_exact() {
        return v.exact_jacobian(x).ok_or(Error::NoExactDerivative);
    }
    let p = fd_partials(|y| v.value(y), &v.domain(), x, cfg)?;
    Ok(Mat3::from_columns(&p))
}

pub fn curl_of_jacobian(j: &Mat3) -> Vec3 {
    Vec3::new(
        j[(2, 1)] - j[(1, 2)],
        j[(0, 2)] - j[(2, 0)],
        j[(1, 0)] - j[(0, 1)],
    )
}

pub fn curl(v: &dyn VectorField, x: &Vec3, cfg: &DiffConfig) -> Result<Vec3> {
    Ok(curl_of_jacobian(&jacobian(v, x, cfg)?))
}

pub fn div(v: &dyn VectorField, x: &Vec3, cfg: &DiffConfig) -> Result<f64> {
    Ok(jacobian(v, x, cfg)?.trace())
}

/// Least-squares slope of `log(err)` against `log(step)`.
pub fn fitted_order(steps: &[f64], errors: &[f64]) -> f64 {
    assert_eq!(steps.len(), errors.len());
    let n = steps.len() as f64;
    let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.abs().max(f64::MIN_POSITIVE).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Richardson order estimate from values computed at steps `h`, `h/2`, `h/4`.
pub fn richardson_order(coarse: f64, mid: f64, fine: f64) -> f64 {
    ((coarse - mid).abs() / (mid - fine).abs()).log2()
}
