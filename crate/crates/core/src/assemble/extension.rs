//! Characteristic extension of the pair off the base streamline.
//!
//! A point `x` of the tube is located by flowing back to the seed disc, which
//! gives disc coordinates `σ` and arclength `s`. Seed data on the disc is then
//! carried to `x` by integrating the position, the projective lifts of
//! `μ₁, μ₂` and `ln(α_i/‖v‖)` together with a fixed step count.

use super::{phi, PhiConvention, Seeding, EPS_SEP};
use crate::calc3::{DiffConfig, Mat3, Stencil, Vec3};
use crate::error::{arr, Error, Result};
use crate::flowline::step_count;
use crate::framekit::{AdaptedFrame, Frame};
use crate::riccati::{normalize, CoefficientSample, EPS_Q};
use nalgebra::SVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type State = SVector<f64, 9>;

/// Initial values of `μ_i` and `α_i` at the base point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialData {
    pub mu: [f64; 2],
    /// Defaults to `‖v(base)‖` for both.
    pub alpha: Option<[f64; 2]>,
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData { mu: [0.0, 1.0], alpha: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairConfig {
    pub ds: f64,
    pub length: f64,
    pub radius: f64,
    pub diff: DiffConfig,
    pub seeding: Seeding,
    pub convention: PhiConvention,
    /// Trapezoid segments on the disc ray when evaluating `H`.
    pub disc_segments: usize,
}

/// Seed data at a disc point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedState {
    pub sigma: (f64, f64),
    pub point: Vec3,
    pub frame: Frame,
    pub mu: [f64; 2],
    pub alpha: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub sigma: (f64, f64),
    /// Signed arclength from the disc.
    pub s: f64,
    /// Step count used for the flow map.
    pub steps: usize,
}

/// The pair and its Hamiltonians at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample {
    pub x: Vec3,
    pub frame: Frame,
    pub s: f64,
    pub sigma: (f64, f64),
    pub mu: [f64; 2],
    pub alpha: [f64; 2],
    pub j: [Vec3; 2],
    pub phi: f64,
    pub h: [f64; 2],
}

impl PairSample {
    pub fn v(&self) -> Vec3 {
        self.frame.e1 * self.frame.speed
    }

    /// Target gradient `(−1)^{i+1} J_i/φ`, 0-based `i`.
    pub fn g(&self, i: usize) -> Vec3 {
        let sign = if i == 0 { 1.0 } else { -1.0 };
        self.j[i] * (sign / self.phi)
    }
}

/// Pair field evaluable anywhere in the tube.
#[derive(Clone, Debug)]
pub struct PairField {
    pub frame: AdaptedFrame,
    pub base: Vec3,
    pub base_frame: Frame,
    pub init_mu: [f64; 2],
    pub init_alpha: [f64; 2],
    pub conf: PairConfig,
    /// Disc gradients of the seeded Hamiltonians in `(ê₂, ê₃)` coordinates.
    linear: [[f64; 2]; 2],
}

impl PairField {
    pub fn new(frame: AdaptedFrame, base: Vec3, init: InitialData, conf: PairConfig) -> Result<Self> {
        if !(conf.ds > 0.0 && conf.length > 0.0 && conf.radius > 0.0 && conf.disc_segments >= 1) {
            return Err(Error::InvalidArgument(format!("invalid extension parameters {conf:?}")));
        }
        conf.diff.validate()?;
        let bf = frame.at(&base)?;
        let alpha = init.alpha.unwrap_or([bf.speed; 2]);
        if !(alpha[0] > 0.0 && alpha[1] > 0.0) {
            return Err(Error::InvalidArgument(format!("initial α must be positive, got {alpha:?}")));
        }
        let [m1, m2] = init.mu;
        let phi0 = phi(alpha, init.mu, bf.speed, PhiConvention::Standard)
            .map_err(|_| Error::DegeneratePair { point: arr(&base), separation: (m1 - m2).abs() })?;
        let linear = [
            [alpha[0] / phi0, alpha[0] * m1 / phi0],
            [-alpha[1] / phi0, -alpha[1] * m2 / phi0],
        ];
        Ok(PairField {
            frame,
            base,
            base_frame: bf,
            init_mu: init.mu,
            init_alpha: alpha,
            conf,
            linear,
        })
    }

    pub fn disc_point(&self, sigma: (f64, f64)) -> Vec3 {
        self.base + self.base_frame.e2 * sigma.0 + self.base_frame.e3 * sigma.1
    }

    pub fn seed_state(&self, sigma: (f64, f64)) -> Result<SeedState> {
        let point = self.disc_point(sigma);
        let frame = self.frame.at(&point)?;
        let (mu, alpha) = match self.conf.seeding {
            Seeding::Constant => (self.init_mu, self.init_alpha),
            Seeding::LinearHamiltonian => {
                let t2 = self.base_frame.e2;
                let t3 = self.base_frame.e3;
                let m = Mat3::from_rows(&[t2.transpose(), t3.transpose(), frame.e1.transpose()]);
                let lu = m.lu();
                let solve = |a: [f64; 2]| {
                    lu.solve(&Vec3::new(a[0], a[1], 0.0))
                        .ok_or_else(|| Error::InvalidArgument(format!("flow is tangent to the seed disc at {point:?}")))
                };
                let g1 = solve(self.linear[0])?;
                let g2 = solve(self.linear[1])?;
                let c = g1.cross(&g2);
                let v = frame.e1 * frame.speed;
                let phi0 = v.dot(&c) / c.norm_squared();
                let j = [g1 * phi0, g2 * -phi0];
                let mut mu = [0.0; 2];
                let mut alpha = [0.0; 2];
                for i in 0..2 {
                    alpha[i] = j[i].dot(&frame.e2);
                    if !(alpha[i] > 1e-12 * j[i].norm()) {
                        return Err(Error::InvalidArgument(format!(
                            "seeded α_{} is not positive at {point:?}; shrink the disc",
                            i + 1
                        )));
                    }
                    mu[i] = j[i].dot(&frame.e3) / alpha[i];
                }
                (mu, alpha)
            }
        };
        Ok(SeedState { sigma, point, frame, mu, alpha })
    }

    /// `n` fourth-order steps of the unit flow, total signed time `tau`.
    fn flow(&self, x: &Vec3, tau: f64, n: usize) -> Result<Vec3> {
        let h = tau / n as f64;
        let dir = |y: &Vec3| self.frame.at(y).map(|f| f.e1);
        let mut y = *x;
        for _ in 0..n {
            let k1 = dir(&y)?;
            let k2 = dir(&(y + k1 * (h / 2.0)))?;
            let k3 = dir(&(y + k2 * (h / 2.0)))?;
            let k4 = dir(&(y + k3 * h))?;
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        Ok(y)
    }

    fn plane(&self, y: &Vec3) -> f64 {
        (y - self.base).dot(&self.base_frame.e1)
    }

    fn outside(&self, x: &Vec3) -> Error {
        Error::OutsideTube { point: arr(x) }
    }

    /// Disc coordinates and arclength of `x`. With `steps` given, the flow map
    /// uses exactly that many steps, which keeps nearby evaluations smooth.
    pub fn locate(&self, x: &Vec3, steps: Option<usize>, guess: Option<f64>) -> Result<Location> {
        let ds = self.conf.ds;
        let (n, mut tau) = match steps {
            Some(n) => (n.max(1), guess.unwrap_or_else(|| -self.plane(x))),
            None => {
                let g0 = self.plane(x);
                let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
                let max_steps = ((2.0 * (self.conf.length + self.conf.radius)) / ds).ceil() as usize + 8;
                let mut y = *x;
                let mut g = g0;
                let mut t = 0.0;
                let mut found = g0 == 0.0;
                for _ in 0..max_steps {
                    if found {
                        break;
                    }
                    let y1 = self.flow(&y, dir * ds, 1)?;
                    let g1 = self.plane(&y1);
                    if g1 == 0.0 || g1.signum() != g.signum() {
                        t += dir * ds * g / (g - g1);
                        found = true;
                        break;
                    }
                    y = y1;
                    g = g1;
                    t += dir * ds;
                }
                if !found {
                    return Err(self.outside(x));
                }
                (step_count(t.abs(), ds), t)
            }
        };
        let n_hat = self.base_frame.e1;
        let mut y = self.flow(x, tau, n)?;
        for _ in 0..40 {
            let g = self.plane(&y);
            if g == 0.0 {
                break;
            }
            let slope = self.frame.at(&y)?.e1.dot(&n_hat);
            if slope < 1e-3 {
                return Err(self.outside(x));
            }
            let next = tau - g / slope;
            let done = (next - tau).abs() <= 4.0 * f64::EPSILON * tau.abs().max(1.0);
            tau = next;
            y = self.flow(x, tau, n)?;
            if done {
                break;
            }
        }
        let d = y - self.base;
        let sigma = (d.dot(&self.base_frame.e2), d.dot(&self.base_frame.e3));
        let s = -tau;
        let r = sigma.0.hypot(sigma.1);
        if r > 2.0 * self.conf.radius || s < -self.conf.length || s > 2.0 * self.conf.length {
            return Err(self.outside(x));
        }
        Ok(Location { sigma, s, steps: n })
    }

    fn rate(&self, st: &State, s: f64) -> Result<State> {
        let x = Vec3::new(st[0], st[1], st[2]);
        let (frame, b12, b13) = self.frame.flow_brackets(&x, &self.conf.diff)?;
        let c = CoefficientSample::from_flow_brackets(&frame, &b12, &b13);
        let mut out = State::zeros();
        out[0] = frame.e1.x;
        out[1] = frame.e1.y;
        out[2] = frame.e1.z;
        for i in 0..2 {
            let (p, q) = (st[3 + 2 * i], st[4 + 2 * i]);
            if q.abs() < EPS_Q * p.hypot(q) {
                return Err(Error::SpanSplit { s });
            }
            let (dp, dq) = c.lift_rate(p, q);
            out[3 + 2 * i] = dp;
            out[4 + 2 * i] = dq;
            out[7 + i] = c.log_alpha_rate(p / q);
        }
        Ok(out)
    }

    fn initial_state(&self, seed: &SeedState) -> State {
        let mut st = State::zeros();
        st[0] = seed.point.x;
        st[1] = seed.point.y;
        st[2] = seed.point.z;
        for i in 0..2 {
            let (p, q) = normalize(seed.mu[i], 1.0);
            st[3 + 2 * i] = p;
            st[4 + 2 * i] = q;
            st[7 + i] = (seed.alpha[i] / seed.frame.speed).ln();
        }
        st
    }

    /// Carries seed data over signed arclength `s` in `n` steps; with
    /// `record`, every node is returned.
    fn carry(&self, seed: &SeedState, s: f64, n: usize, record: bool) -> Result<Vec<State>> {
        let h = s / n as f64;
        let mut st = self.initial_state(seed);
        let mut out = vec![st];
        for k in 0..n {
            let s0 = k as f64 * h;
            let k1 = self.rate(&st, s0)?;
            let k2 = self.rate(&(st + k1 * (h / 2.0)), s0 + h / 2.0)?;
            let k3 = self.rate(&(st + k2 * (h / 2.0)), s0 + h / 2.0)?;
            let k4 = self.rate(&(st + k3 * h), s0 + h)?;
            st += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            for i in 0..2 {
                let (p, q) = normalize(st[3 + 2 * i], st[4 + 2 * i]);
                st[3 + 2 * i] = p;
                st[4 + 2 * i] = q;
            }
            if record {
                out.push(st);
            } else {
                out[0] = st;
            }
        }
        Ok(out)
    }

    fn make_sample(&self, x: Vec3, frame: Frame, s: f64, sigma: (f64, f64), st: &State, h: [f64; 2]) -> Result<PairSample> {
        let mut mu = [0.0; 2];
        let mut alpha = [0.0; 2];
        for i in 0..2 {
            let (p, q) = (st[3 + 2 * i], st[4 + 2 * i]);
            if q.abs() < EPS_Q {
                return Err(Error::SpanSplit { s });
            }
            mu[i] = p / q;
            alpha[i] = frame.speed * st[7 + i].exp();
        }
        let sep = (mu[0] - mu[1]).abs();
        if sep < EPS_SEP {
            return Err(Error::DegeneratePair { point: arr(&x), separation: sep });
        }
        let j = [
            (frame.e2 + frame.e3 * mu[0]) * alpha[0],
            (frame.e2 + frame.e3 * mu[1]) * alpha[1],
        ];
        let phi = phi(alpha, mu, frame.speed, self.conf.convention)?;
        Ok(PairSample { x, frame, s, sigma, mu, alpha, j, phi, h })
    }

    fn seed_sample(&self, seed: &SeedState) -> Result<PairSample> {
        let st = self.initial_state(seed);
        self.make_sample(seed.point, seed.frame, 0.0, seed.sigma, &st, [0.0; 2])
    }

    /// Hamiltonians on the disc: trapezoid of `(−1)^{i+1}J_i/φ` along the ray from the base.
    pub fn disc_hamiltonians(&self, sigma: (f64, f64)) -> Result<[f64; 2]> {
        if sigma == (0.0, 0.0) {
            return Ok([0.0; 2]);
        }
        let m = self.conf.disc_segments;
        let d = self.base_frame.e2 * sigma.0 + self.base_frame.e3 * sigma.1;
        let mut h = [0.0; 2];
        for k in 0..=m {
            let t = k as f64 / m as f64;
            let w = if k == 0 || k == m { 0.5 } else { 1.0 } / m as f64;
            let smp = self.seed_sample(&self.seed_state((t * sigma.0, t * sigma.1))?)?;
            for (i, hi) in h.iter_mut().enumerate() {
                *hi += w * smp.g(i).dot(&d);
            }
        }
        Ok(h)
    }

    /// Samples at every node of the streamline from disc point `sigma`.
    pub fn trajectory(&self, sigma: (f64, f64), length: f64) -> Result<Vec<PairSample>> {
        let n = step_count(length, self.conf.ds);
        let seed = self.seed_state(sigma)?;
        let h = self.disc_hamiltonians(sigma)?;
        let states = self.carry(&seed, length, n, true)?;
        states
            .iter()
            .enumerate()
            .map(|(k, st)| {
                let x = Vec3::new(st[0], st[1], st[2]);
                let frame = self.frame.at(&x)?;
                self.make_sample(x, frame, length * k as f64 / n as f64, sigma, st, h)
            })
            .collect()
    }

    /// Sample at tube coordinates `(σ, s)`.
    pub fn point_at(&self, sigma: (f64, f64), s: f64) -> Result<PairSample> {
        let n = step_count(s.abs(), self.conf.ds);
        let seed = self.seed_state(sigma)?;
        let st = self.carry(&seed, s, n, false)?[0];
        let x = Vec3::new(st[0], st[1], st[2]);
        let frame = self.frame.at(&x)?;
        self.make_sample(x, frame, s, sigma, &st, self.disc_hamiltonians(sigma)?)
    }

    fn sample_located(&self, x: &Vec3, loc: &Location) -> Result<PairSample> {
        let frame = self.frame.at(x)?;
        let seed = self.seed_state(loc.sigma)?;
        let st = self.carry(&seed, loc.s, loc.steps, false)?[0];
        // flow-invariant, so only the disc leg contributes
        let h = self.disc_hamiltonians(loc.sigma)?;
        self.make_sample(*x, frame, loc.s, loc.sigma, &st, h)
    }

    pub fn sample(&self, x: &Vec3) -> Result<PairSample> {
        let loc = self.locate(x, None, None)?;
        self.sample_located(x, &loc)
    }

    /// Samples on a central-difference stencil around `x`, sharing one step count.
    pub fn stencil(&self, x: &Vec3, cfg: &DiffConfig) -> Result<PairStencil> {
        let st = Stencil::new(*x, cfg)?;
        let loc = self.locate(x, None, None)?;
        let center = self.sample_located(x, &loc)?;
        let e1 = center.frame.e1;
        let points = st
            .points()
            .par_iter()
            .map(|p| {
                let guess = -(loc.s + (p - x).dot(&e1));
                let l = self.locate(p, Some(loc.steps), Some(guess))?;
                self.sample_located(p, &l)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PairStencil { center, points, stencil: st })
    }
}

/// Pair samples on a stencil, with derivative helpers.
#[derive(Clone, Debug)]
pub struct PairStencil {
    pub center: PairSample,
    pub points: Vec<PairSample>,
    pub stencil: Stencil,
}

impl PairStencil {
    pub fn grad(&self, f: impl Fn(&PairSample) -> f64) -> Vec3 {
        let vals: Vec<f64> = self.points.iter().map(&f).collect();
        let p = self.stencil.partials(&vals);
        Vec3::new(p[0], p[1], p[2])
    }

    /// `J[i][j] = ∂F_i/∂x_j`.
    pub fn jacobian(&self, f: impl Fn(&PairSample) -> Vec3) -> Mat3 {
        let vals: Vec<Vec3> = self.points.iter().map(&f).collect();
        Mat3::from_columns(&self.stencil.partials(&vals))
    }

    /// Applies a transformation to every sample, e.g. to inject a fault.
    pub fn map(&self, f: impl Fn(&PairSample) -> PairSample) -> PairStencil {
        PairStencil {
            center: f(&self.center),
            points: self.points.iter().map(&f).collect(),
            stencil: self.stencil.clone(),
        }
    }
}
