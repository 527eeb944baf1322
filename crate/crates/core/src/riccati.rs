//! Riccati equation for `μ` and scaling equation for `α` along a streamline.
//!
//! Coefficients are sampled on half nodes `s = j·Δs/2` so that a classic
//! fourth-order step from node `k` sees the values at `2k`, `2k+1`, `2k+2`.

use crate::calc3::{DiffConfig, Vec3};
use crate::error::{Error, Result};
use crate::flowline::Streamline;
use crate::framekit::{structure_from_jet, AdaptedFrame, Frame, StructureFunctions};
use rayon::prelude::*;

/// `|q|` below which `μ = p/q` is treated as undefined.
pub const EPS_Q: f64 = 1e-8;

/// Uniform arclength grid `s_k = k·step`, `k = 0..=n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SGrid {
    pub step: f64,
    pub n: usize,
}

impl SGrid {
    pub fn new(length: f64, ds: f64) -> Result<Self> {
        if !(length > 0.0 && ds > 0.0 && length.is_finite() && ds.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad grid L = {length}, Δs = {ds}")));
        }
        let n = crate::flowline::step_count(length, ds);
        Ok(SGrid { step: length / n as f64, n })
    }

    pub fn s(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    pub fn halves(&self) -> usize {
        2 * self.n + 1
    }
}

/// Everything the ODEs need at one point of the streamline.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CoefficientSample {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub c331: f64,
    pub c312: f64,
    pub speed: f64,
}

impl CoefficientSample {
    pub fn from_structure(sf: &StructureFunctions, speed: f64) -> Self {
        CoefficientSample {
            a: -sf.get(2, 3, 1),
            b: -(sf.get(3, 3, 1) + sf.get(2, 1, 2)),
            c: -sf.get(3, 1, 2),
            c331: sf.get(3, 3, 1),
            c312: sf.get(3, 1, 2),
            speed,
        }
    }

    /// From the brackets `[ê₁, ê₂]`, `[ê₁, ê₃]` and the frame.
    pub fn from_flow_brackets(frame: &Frame, b12: &Vec3, b13: &Vec3) -> Self {
        let (c212, c312) = (b12.dot(&frame.e2), b12.dot(&frame.e3));
        let (c231, c331) = (-b13.dot(&frame.e2), -b13.dot(&frame.e3));
        CoefficientSample {
            a: -c231,
            b: -(c331 + c212),
            c: -c312,
            c331,
            c312,
            speed: frame.speed,
        }
    }

    /// Riccati right-hand side.
    pub fn mu_rate(&self, mu: f64) -> f64 {
        self.a + self.b * mu + self.c * mu * mu
    }

    /// Right-hand side of the linear lift `(p, q)' = (Bp + Aq, −Cp)`.
    pub fn lift_rate(&self, p: f64, q: f64) -> (f64, f64) {
        (self.b * p + self.a * q, -self.c * p)
    }

    /// Right-hand side of `d/ds ln(α/‖v‖)`.
    pub fn log_alpha_rate(&self, mu: f64) -> f64 {
        self.c331 + mu * self.c312
    }
}

/// `dμ/ds = A + Bμ + Cμ²` coefficients with `A = −C²₃₁`, `B = −(C³₃₁ + C²₁₂)`,
/// `C = −C³₁₂`, plus the scaling-equation inputs, on half nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiCoefficients {
    pub grid: SGrid,
    pub samples: Vec<CoefficientSample>,
}

pub fn riccati_coeffs(grid: SGrid, sfs: &[StructureFunctions], speed: &[f64]) -> Result<RiccatiCoefficients> {
    if sfs.len() != grid.halves() || speed.len() != grid.halves() {
        return Err(Error::InvalidArgument(format!(
            "expected {} half-node samples, got {} structure and {} speed values",
            grid.halves(),
            sfs.len(),
            speed.len()
        )));
    }
    let samples = sfs
        .iter()
        .zip(speed)
        .map(|(sf, &v)| CoefficientSample::from_structure(sf, v))
        .collect::<Vec<_>>();
    if samples.iter().any(|c| ![c.a, c.b, c.c, c.speed].iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidArgument("non-finite Riccati coefficient".into()));
    }
    Ok(RiccatiCoefficients { grid, samples })
}

impl RiccatiCoefficients {
    pub fn from_fn(grid: SGrid, f: impl Fn(f64) -> CoefficientSample) -> Self {
        let samples = (0..grid.halves()).map(|j| f(j as f64 * grid.step / 2.0)).collect();
        RiccatiCoefficients { grid, samples }
    }

    /// Pure Riccati coefficients with `C³₁₂ = −C`, `C³₃₁ = 0` and unit speed.
    pub fn from_abc(grid: SGrid, f: impl Fn(f64) -> (f64, f64, f64)) -> Self {
        Self::from_fn(grid, |s| {
            let (a, b, c) = f(s);
            CoefficientSample { a, b, c, c331: 0.0, c312: -c, speed: 1.0 }
        })
    }

    /// Samples structure functions on the streamline nodes and Hermite midpoints.
    pub fn along(frame: &AdaptedFrame, line: &Streamline, cfg: &DiffConfig) -> Result<Self> {
        if !line.is_complete() || line.len() < 2 {
            return Err(Error::InvalidArgument("streamline is truncated or empty".into()));
        }
        let grid = SGrid { step: line.ds, n: line.len() - 1 };
        let points: Vec<_> = (0..grid.halves())
            .map(|j| {
                if j % 2 == 0 {
                    line.points[j / 2]
                } else {
                    line.position_at(j as f64 * grid.step / 2.0).unwrap()
                }
            })
            .collect();
        let jets = points
            .par_iter()
            .map(|x| frame.jet(x, cfg))
            .collect::<Result<Vec<_>>>()?;
        let sfs: Vec<_> = jets.iter().map(structure_from_jet).collect();
        let speed: Vec<_> = jets.iter().map(|j| j.frame.speed).collect();
        riccati_coeffs(grid, &sfs, &speed)
    }

    pub fn node(&self, k: usize) -> &CoefficientSample {
        &self.samples[2 * k]
    }
}

/// One fourth-order step of the linear lift from node `k`, normalized.
pub fn lift_step(c: &RiccatiCoefficients, k: usize, p: f64, q: f64) -> (f64, f64) {
    let h = c.grid.step;
    let (c0, cm, c1) = (&c.samples[2 * k], &c.samples[2 * k + 1], &c.samples[2 * k + 2]);
    let k1 = c0.lift_rate(p, q);
    let k2 = cm.lift_rate(p + 0.5 * h * k1.0, q + 0.5 * h * k1.1);
    let k3 = cm.lift_rate(p + 0.5 * h * k2.0, q + 0.5 * h * k2.1);
    let k4 = c1.lift_rate(p + h * k3.0, q + h * k3.1);
    let pn = p + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    let qn = q + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    normalize(pn, qn)
}

pub fn normalize(p: f64, q: f64) -> (f64, f64) {
    let r = p.hypot(q);
    (p / r, q / r)
}

/// Initial condition for the lift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MuInit {
    Value(f64),
    /// `(p, q)`; `q = 0` starts at `μ = ∞`.
    Projective(f64, f64),
}

impl MuInit {
    pub fn lift(self) -> Result<(f64, f64)> {
        let (p, q) = match self {
            MuInit::Value(m) => (m, 1.0),
            MuInit::Projective(p, q) => (p, q),
        };
        if !(p.is_finite() && q.is_finite()) || (p == 0.0 && q == 0.0) {
            return Err(Error::InvalidArgument(format!("invalid projective initial data {self:?}")));
        }
        Ok(normalize(p, q))
    }
}

/// `μ = p/q` with `(p, q)` on the unit circle.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectiveSolution {
    pub grid: SGrid,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Nodes with `|q| < EPS_Q`.
    pub markers: Vec<usize>,
    /// Intervals `[k, k+1]` across which `q` changes sign.
    pub crossings: Vec<usize>,
}

impl ProjectiveSolution {
    pub fn mu(&self, k: usize) -> Option<f64> {
        (self.q[k].abs() >= EPS_Q).then(|| self.p[k] / self.q[k])
    }

    /// First arclength at which `μ` leaves the finite chart, if any.
    pub fn first_blowup(&self) -> Option<f64> {
        let a = self.markers.first().map(|&k| self.grid.s(k));
        let b = self.crossings.first().map(|&k| self.grid.s(k) + 0.5 * self.grid.step);
        match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }

    /// `μ` on every node, or a span-split error at the first blow-up.
    pub fn mu_span(&self) -> Result<Vec<f64>> {
        if let Some(s) = self.first_blowup() {
            return Err(Error::SpanSplit { s });
        }
        Ok(self.p.iter().zip(&self.q).map(|(p, q)| p / q).collect())
    }
}

pub fn solve_mu(coeffs: &RiccatiCoefficients, init: MuInit) -> Result<ProjectiveSolution> {
    let (mut p, mut q) = init.lift()?;
    let n = coeffs.grid.n;
    let mut sol = ProjectiveSolution {
        grid: coeffs.grid,
        p: Vec::with_capacity(n + 1),
        q: Vec::with_capacity(n + 1),
        markers: Vec::new(),
        crossings: Vec::new(),
    };
    for k in 0..=n {
        sol.p.push(p);
        sol.q.push(q);
        if q.abs() < EPS_Q {
            sol.markers.push(k);
        }
        if k > 0 && sol.q[k - 1] * q < 0.0 {
            sol.crossings.push(k - 1);
        }
        if k < n {
            (p, q) = lift_step(coeffs, k, p, q);
        }
    }
    Ok(sol)
}

/// Direct fourth-order integration of the scalar equation; fails at blow-up.
pub fn solve_mu_direct(coeffs: &RiccatiCoefficients, mu0: f64) -> Result<Vec<f64>> {
    let h = coeffs.grid.step;
    let mut out = Vec::with_capacity(coeffs.grid.nodes());
    let mut m = mu0;
    out.push(m);
    for k in 0..coeffs.grid.n {
        let (c0, cm, c1) = (&coeffs.samples[2 * k], &coeffs.samples[2 * k + 1], &coeffs.samples[2 * k + 2]);
        let k1 = c0.mu_rate(m);
        let k2 = cm.mu_rate(m + 0.5 * h * k1);
        let k3 = cm.mu_rate(m + 0.5 * h * k2);
        let k4 = c1.mu_rate(m + h * k3);
        m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !m.is_finite() || m.abs() > 1.0 / EPS_Q {
            return Err(Error::SpanSplit { s: coeffs.grid.s(k + 1) });
        }
        out.push(m);
    }
    Ok(out)
}

/// `α` along the streamline with `α(0) = α0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingSolution {
    pub grid: SGrid,
    pub alpha: Vec<f64>,
    /// `ln(α/‖v‖)` on nodes.
    pub log_ratio: Vec<f64>,
}

/// Midpoint values of `μ` by cubic Hermite interpolation with Riccati slopes.
fn mu_midpoints(coeffs: &RiccatiCoefficients, mu: &[f64]) -> Vec<f64> {
    let h = coeffs.grid.step;
    (0..coeffs.grid.n)
        .map(|k| {
            let d0 = coeffs.node(k).mu_rate(mu[k]);
            let d1 = coeffs.node(k + 1).mu_rate(mu[k + 1]);
            0.5 * (mu[k] + mu[k + 1]) + h * (d0 - d1) / 8.0
        })
        .collect()
}

/// Cumulative Simpson integral of a half-node sequence.
fn simpson_cumulative(step: f64, half: &[f64]) -> Vec<f64> {
    let n = (half.len() - 1) / 2;
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..n {
        acc += step / 6.0 * (half[2 * k] + 4.0 * half[2 * k + 1] + half[2 * k + 2]);
        out.push(acc);
    }
    out
}

fn check_len(coeffs: &RiccatiCoefficients, xs: &[&[f64]]) -> Result<()> {
    for x in xs {
        if x.len() != coeffs.grid.nodes() {
            return Err(Error::InvalidArgument(format!(
                "expected {} node values, got {}",
                coeffs.grid.nodes(),
                x.len()
            )));
        }
    }
    Ok(())
}

pub fn solve_alpha(coeffs: &RiccatiCoefficients, mu: &ProjectiveSolution, alpha0: f64) -> Result<ScalingSolution> {
    solve_alpha_values(coeffs, &mu.mu_span()?, alpha0)
}

/// As [`solve_alpha`] for `μ` given as finite node values.
pub fn solve_alpha_values(coeffs: &RiccatiCoefficients, mu: &[f64], alpha0: f64) -> Result<ScalingSolution> {
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(Error::InvalidArgument(format!("α(0) must be positive, got {alpha0}")));
    }
    check_len(coeffs, &[mu])?;
    let mids = mu_midpoints(coeffs, mu);
    let f: Vec<f64> = (0..coeffs.grid.halves())
        .map(|j| {
            let m = if j % 2 == 0 { mu[j / 2] } else { mids[j / 2] };
            coeffs.samples[j].log_alpha_rate(m)
        })
        .collect();
    let l0 = (alpha0 / coeffs.samples[0].speed).ln();
    let log_ratio: Vec<f64> = simpson_cumulative(coeffs.grid.step, &f).into_iter().map(|x| l0 + x).collect();
    let alpha = log_ratio
        .iter()
        .enumerate()
        .map(|(k, l)| coeffs.node(k).speed * l.exp())
        .collect();
    Ok(ScalingSolution { grid: coeffs.grid, alpha, log_ratio })
}

/// Fourth-order derivative of node values, one-sided near the ends.
pub fn grid_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "grid derivative needs at least five nodes");
    (0..n)
        .map(|k| {
            let d = if k == 0 {
                -25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]
            } else if k == 1 {
                -3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]
            } else if k == n - 2 {
                3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]
            } else if k == n - 1 {
                25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]
            } else {
                f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]
            };
            d / (12.0 * h)
        })
        .collect()
}

/// `dμ/ds − (A + Bμ + Cμ²)` at the nodes.
pub fn riccati_residual(coeffs: &RiccatiCoefficients, mu: &[f64]) -> Result<Vec<f64>> {
    check_len(coeffs, &[mu])?;
    let d = grid_derivative(mu, coeffs.grid.step);
    Ok(d.iter().enumerate().map(|(k, dm)| dm - coeffs.node(k).mu_rate(mu[k])).collect())
}

/// `d/ds ln(α/‖v‖) − (C³₃₁ + μC³₁₂)` at the nodes.
pub fn scaling_residual(coeffs: &RiccatiCoefficients, mu: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    check_len(coeffs, &[mu, alpha])?;
    let l: Vec<f64> = alpha
        .iter()
        .enumerate()
        .map(|(k, a)| (a / coeffs.node(k).speed).ln())
        .collect();
    let d = grid_derivative(&l, coeffs.grid.step);
    Ok(d.iter().enumerate().map(|(k, dl)| dl - coeffs.node(k).log_alpha_rate(mu[k])).collect())
}

/// `d/ds ln(α₁/α₂) − C³₁₂(μ₁ − μ₂)` at the nodes.
pub fn compatibility_residual(
    coeffs: &RiccatiCoefficients,
    mu1: &[f64],
    mu2: &[f64],
    alpha1: &[f64],
    alpha2: &[f64],
) -> Result<Vec<f64>> {
    check_len(coeffs, &[mu1, mu2, alpha1, alpha2])?;
    let l: Vec<f64> = alpha1.iter().zip(alpha2).map(|(a, b)| (a / b).abs().ln()).collect();
    let d = grid_derivative(&l, coeffs.grid.step);
    Ok(d.iter()
        .enumerate()
        .map(|(k, dl)| dl - coeffs.node(k).c312 * (mu1[k] - mu2[k]))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralSolutionCheck {
    pub max_residual: f64,
    /// Nodes where `1 − K·E(s)` vanishes.
    pub markers: Vec<usize>,
    /// The constructed solution; `NaN` at markers.
    pub mu: Vec<f64>,
}

/// Builds `μ` from two solutions via `μ − μ₁ = K(μ − μ₂)·exp(∫C³₁₂(μ₂ − μ₁) ds)`
/// and returns its Riccati residual in projective form, `|p'q − pq' − (Aq² + Bpq + Cp²)|/(p² + q²)`
/// for `μ = p/q`, which stays finite where `μ` blows up.
pub fn lemma3_check(mu1: &[f64], mu2: &[f64], k: f64, coeffs: &RiccatiCoefficients) -> Result<GeneralSolutionCheck> {
    check_len(coeffs, &[mu1, mu2])?;
    let g = coeffs.grid;
    if let Some(i) = (0..g.nodes()).find(|&i| (mu1[i] - mu2[i]).abs() < 1e-12) {
        return Err(Error::DegeneratePair { point: [g.s(i), 0.0, 0.0], separation: (mu1[i] - mu2[i]).abs() });
    }
    let (m1, m2) = (mu_midpoints(coeffs, mu1), mu_midpoints(coeffs, mu2));
    let f: Vec<f64> = (0..g.halves())
        .map(|j| {
            let (a, b) = if j % 2 == 0 { (mu1[j / 2], mu2[j / 2]) } else { (m1[j / 2], m2[j / 2]) };
            coeffs.samples[j].c312 * (b - a)
        })
        .collect();
    let integral = simpson_cumulative(g.step, &f);
    let n = g.nodes();
    let e: Vec<f64> = integral.iter().map(|i| i.exp()).collect();
    // μ = p/q with p, q smooth through the poles of μ
    let p: Vec<f64> = (0..n).map(|i| mu1[i] - k * e[i] * mu2[i]).collect();
    let q: Vec<f64> = (0..n).map(|i| 1.0 - k * e[i]).collect();
    let mut markers = Vec::new();
    let mu: Vec<f64> = (0..n)
        .map(|i| {
            if q[i].abs() < EPS_Q {
                markers.push(i);
                f64::NAN
            } else {
                p[i] / q[i]
            }
        })
        .collect();
    let (dp, dq) = (grid_derivative(&p, g.step), grid_derivative(&q, g.step));
    let mut max_residual: f64 = 0.0;
    for i in 0..n {
        let c = coeffs.node(i);
        let r = dp[i] * q[i] - p[i] * dq[i] - (c.a * q[i] * q[i] + c.b * p[i] * q[i] + c.c * p[i] * p[i]);
        max_residual = max_residual.max(r.abs() / (p[i] * p[i] + q[i] * q[i]));
    }
    Ok(GeneralSolutionCheck { max_residual, markers, mu })
}

/// Cross ratio of four lift solutions, evaluated without forming `μ`.
pub fn cross_ratio(a: &ProjectiveSolution, b: &ProjectiveSolution, c: &ProjectiveSolution, d: &ProjectiveSolution) -> Vec<f64> {
    let det = |x: &ProjectiveSolution, y: &ProjectiveSolution, k: usize| x.p[k] * y.q[k] - y.p[k] * x.q[k];
    (0..a.grid.nodes())
        .map(|k| det(a, c, k) * det(b, d, k) / (det(a, d, k) * det(b, c, k)))
        .collect()
}
