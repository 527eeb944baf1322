//! Arclength streamlines and stream tubes seeded on a transverse disc.

use crate::calc3::{Vec3, VectorField};
use crate::error::{arr, Error, Result};
use crate::framekit::{AdaptedFrame, Frame, EPS_V};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    Forward,
    Backward,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Sense::Forward => 1.0,
            Sense::Backward => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub s: f64,
    pub kind: String,
    pub reason: String,
}

/// Samples of an arclength-parametrized integral curve of `±v/‖v‖`.
#[derive(Clone, Debug)]
pub struct Streamline {
    pub base: Vec3,
    pub sense: Sense,
    /// Actual step used, `L/round(L/Δs)`.
    pub ds: f64,
    pub s: Vec<f64>,
    pub points: Vec<Vec3>,
    /// Unit tangents `dx/ds` at the samples.
    pub tangents: Vec<Vec3>,
    pub truncation: Option<Truncation>,
}

/// Unit direction `±v/‖v‖`, or a truncation reason.
pub(crate) fn direction(v: &dyn VectorField, x: &Vec3, sign: f64) -> std::result::Result<Vec3, Error> {
    if !v.domain().contains(x) {
        return Err(Error::DomainBoundary { point: arr(x) });
    }
    let w = v.value(x)?;
    let n = w.norm();
    if !(n >= EPS_V) {
        return Err(Error::VanishingField { point: arr(x), norm: n });
    }
    Ok(w * (sign / n))
}

/// One classic fourth-order step of `dx/ds = sign·v/‖v‖`.
pub(crate) fn rk4_step(v: &dyn VectorField, x: &Vec3, h: f64, sign: f64) -> Result<Vec3> {
    let k1 = direction(v, x, sign)?;
    let k2 = direction(v, &(x + k1 * (h / 2.0)), sign)?;
    let k3 = direction(v, &(x + k2 * (h / 2.0)), sign)?;
    let k4 = direction(v, &(x + k3 * h), sign)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

pub fn step_count(length: f64, ds: f64) -> usize {
    ((length / ds).round() as usize).max(1)
}

pub fn integrate_streamline(v: &dyn VectorField, x0: Vec3, length: f64, ds: f64) -> Result<Streamline> {
    integrate_streamline_sense(v, x0, length, ds, Sense::Forward)
}

pub fn integrate_streamline_sense(
    v: &dyn VectorField,
    x0: Vec3,
    length: f64,
    ds: f64,
    sense: Sense,
) -> Result<Streamline> {
    if !(length >= 0.0 && length.is_finite() && ds > 0.0 && ds.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "streamline needs L ≥ 0 and Δs > 0, got L = {length}, Δs = {ds}"
        )));
    }
    let sign = sense.sign();
    let t0 = direction(v, &x0, sign)?;
    let n = if length == 0.0 { 0 } else { step_count(length, ds) };
    let step = if n == 0 { ds } else { length / n as f64 };
    let mut line = Streamline {
        base: x0,
        sense,
        ds: step,
        s: vec![0.0],
        points: vec![x0],
        tangents: vec![t0],
        truncation: None,
    };
    let mut x = x0;
    for k in 0..n {
        let next = rk4_step(v, &x, step, sign).and_then(|y| direction(v, &y, sign).map(|t| (y, t)));
        match next {
            Ok((y, t)) => {
                x = y;
                line.s.push((k + 1) as f64 * step);
                line.points.push(y);
                line.tangents.push(t);
            }
            Err(e) => {
                line.truncation = Some(Truncation {
                    s: k as f64 * step,
                    kind: e.kind().to_string(),
                    reason: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(line)
}

impl Streamline {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn end(&self) -> Vec3 {
        *self.points.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn is_complete(&self) -> bool {
        self.truncation.is_none()
    }

    fn locate(&self, s: f64) -> Option<(usize, f64)> {
        let n = self.len();
        if n < 2 || s < 0.0 || s > self.length() * (1.0 + 1e-14) {
            return None;
        }
        let k = ((s / self.ds).floor() as usize).min(n - 2);
        Some((k, (s - self.s[k]) / self.ds))
    }

    /// Cubic Hermite position between samples.
    pub fn position_at(&self, s: f64) -> Option<Vec3> {
        let (k, t) = self.locate(s)?;
        let (p0, p1) = (self.points[k], self.points[k + 1]);
        let (m0, m1) = (self.tangents[k] * self.ds, self.tangents[k + 1] * self.ds);
        let t2 = t * t;
        let t3 = t2 * t;
        Some(
            p0 * (2.0 * t3 - 3.0 * t2 + 1.0)
                + m0 * (t3 - 2.0 * t2 + t)
                + p1 * (-2.0 * t3 + 3.0 * t2)
                + m1 * (t3 - t2),
        )
    }

    /// Derivative of the Hermite interpolant.
    pub fn tangent_at(&self, s: f64) -> Option<Vec3> {
        let (k, t) = self.locate(s)?;
        let (p0, p1) = (self.points[k], self.points[k + 1]);
        let (m0, m1) = (self.tangents[k] * self.ds, self.tangents[k + 1] * self.ds);
        let t2 = t * t;
        let d = p0 * (6.0 * t2 - 6.0 * t) + m0 * (3.0 * t2 - 4.0 * t + 1.0) + p1 * (-6.0 * t2 + 6.0 * t) + m1 * (3.0 * t2 - 2.0 * t);
        Some(d / self.ds)
    }
}

/// Stream tube parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TubeParams {
    /// Seed disc radius `r_d`.
    pub radius: f64,
    /// Rings `n_r`.
    pub rings: usize,
    /// Spokes per ring `n_θ`.
    pub spokes: usize,
    /// Arclength horizon `L`.
    pub length: f64,
    /// Step `Δs`.
    pub ds: f64,
}

impl Default for TubeParams {
    fn default() -> Self {
        TubeParams {
            radius: 0.05,
            rings: 5,
            spokes: 8,
            length: 1.0,
            ds: 1e-3,
        }
    }
}

impl TubeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.radius > 0.0
            && self.radius.is_finite()
            && self.rings >= 1
            && self.spokes >= 3
            && self.length > 0.0
            && self.length.is_finite()
            && self.ds > 0.0
            && self.ds <= self.length;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid tube parameters {self:?}")))
        }
    }

    pub fn seed_count(&self) -> usize {
        1 + self.rings * self.spokes
    }

    /// Disc coordinates `(σ₂, σ₃)` of seed `(ring, spoke)`; ring 0 is the base.
    pub fn seed_offset(&self, ring: usize, spoke: usize) -> (f64, f64) {
        if ring == 0 {
            return (0.0, 0.0);
        }
        let r = self.radius * ring as f64 / self.rings as f64;
        let th = std::f64::consts::TAU * spoke as f64 / self.spokes as f64;
        (r * th.cos(), r * th.sin())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub ring: usize,
    pub spoke: usize,
    /// Coordinates in the `(ê₂, ê₃)` plane at the base.
    pub sigma: (f64, f64),
    pub point: Vec3,
}

#[derive(Clone, Debug)]
pub struct StreamTube {
    pub base: Vec3,
    /// Frame at the base; its `ê₂, ê₃` span the seed disc.
    pub base_frame: Frame,
    pub params: TubeParams,
    pub seeds: Vec<Seed>,
    pub lines: Vec<Streamline>,
}

/// Seeds in deterministic order: the base, then ring by ring, spoke by spoke.
pub fn disc_seeds(base: &Vec3, frame: &Frame, params: &TubeParams) -> Vec<Seed> {
    let mut out = Vec::with_capacity(params.seed_count());
    out.push(Seed {
        ring: 0,
        spoke: 0,
        sigma: (0.0, 0.0),
        point: *base,
    });
    for ring in 1..=params.rings {
        for spoke in 0..params.spokes {
            let sigma = params.seed_offset(ring, spoke);
            out.push(Seed {
                ring,
                spoke,
                sigma,
                point: base + frame.e2 * sigma.0 + frame.e3 * sigma.1,
            });
        }
    }
    out
}

pub fn build_tube(frame: &AdaptedFrame, base: Vec3, params: TubeParams) -> Result<StreamTube> {
    params.validate()?;
    let base_frame = frame.at(&base)?;
    let seeds = disc_seeds(&base, &base_frame, &params);
    let v = frame.field.as_ref();
    let results: Vec<Result<Streamline>> = seeds
        .par_iter()
        .map(|seed| integrate_streamline(v, seed.point, params.length, params.ds))
        .collect();
    let mut lines = Vec::with_capacity(seeds.len());
    let mut failed = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(l) => lines.push(l),
            Err(e) => failed.push(format!("({}, {}): {}", seed.ring, seed.spoke, e)),
        }
    }
    if !failed.is_empty() {
        return Err(Error::TubeConstruction(failed));
    }
    Ok(StreamTube {
        base,
        base_frame,
        params,
        seeds,
        lines,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transverse {
    E2,
    E3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransverseDerivative {
    pub value: f64,
    /// The stencil only reaches inward (outer ring).
    pub one_sided: bool,
}

impl StreamTube {
    pub fn seed_index(&self, ring: usize, spoke: usize) -> usize {
        if ring == 0 {
            0
        } else {
            1 + (ring - 1) * self.params.spokes + spoke % self.params.spokes
        }
    }

    pub fn is_complete(&self) -> bool {
        self.lines.iter().all(Streamline::is_complete)
    }

    /// Largest common sample count across streamlines.
    pub fn common_len(&self) -> usize {
        self.lines.iter().map(Streamline::len).min().unwrap_or(0)
    }

    fn neighbours(&self, seed: usize) -> (Vec<usize>, bool) {
        let sd = self.seeds[seed];
        let p = &self.params;
        if sd.ring == 0 {
            return ((0..p.spokes).map(|j| self.seed_index(1, j)).collect(), false);
        }
        let mut out = vec![
            self.seed_index(sd.ring, sd.spoke + 1),
            self.seed_index(sd.ring, sd.spoke + p.spokes - 1),
            self.seed_index(sd.ring - 1, sd.spoke),
        ];
        let one_sided = sd.ring == p.rings;
        if !one_sided {
            out.push(self.seed_index(sd.ring + 1, sd.spoke));
        }
        (out, one_sided)
    }

    /// Least-squares gradient of `q` in disc coordinates at sample `k` of `seed`,
    /// fitted over neighbouring streamlines at equal arclength.
    fn disc_gradient<T>(&self, q: &[Vec<T>], seed: usize, k: usize) -> Result<([T; 2], bool)>
    where
        T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let (nb, one_sided) = self.neighbours(seed);
        let c = self.seeds[seed].sigma;
        let q0 = *q[seed].get(k).ok_or_else(|| self.missing(seed, k))?;
        let mut m = [[0.0; 2]; 2];
        let mut rows = Vec::with_capacity(nb.len());
        for &n in &nb {
            let d = (self.seeds[n].sigma.0 - c.0, self.seeds[n].sigma.1 - c.1);
            m[0][0] += d.0 * d.0;
            m[0][1] += d.0 * d.1;
            m[1][1] += d.1 * d.1;
            let qn = *q[n].get(k).ok_or_else(|| self.missing(n, k))?;
            rows.push((d, qn - q0));
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[0][1] / det, m[0][0] / det]];
        let mut g: Option<[T; 2]> = None;
        for (d, dq) in rows {
            let w0 = inv[0][0] * d.0 + inv[0][1] * d.1;
            let w1 = inv[1][0] * d.0 + inv[1][1] * d.1;
            let term = [dq * w0, dq * w1];
            g = Some(match g {
                None => term,
                Some(a) => [a[0] + term[0], a[1] + term[1]],
            });
        }
        Ok((g.expect("seed has neighbours"), one_sided))
    }

    fn missing(&self, seed: usize, k: usize) -> Error {
        Error::InvalidArgument(format!("no sample {k} on streamline of seed {seed}"))
    }

    /// Derivative of a tube quantity with respect to a disc coordinate, at
    /// sample `k` of streamline `seed`.
    pub fn transverse_derivative(&self, q: &[Vec<f64>], dir: Transverse, seed: usize, k: usize) -> Result<TransverseDerivative> {
        let (g, one_sided) = self.disc_gradient(q, seed, k)?;
        let value = match dir {
            Transverse::E2 => g[0],
            Transverse::E3 => g[1],
        };
        Ok(TransverseDerivative { value, one_sided })
    }

    /// Spatial gradient of a tube quantity at a sample, through the tube
    /// coordinates `(σ₂, σ₃, s)`.
    pub fn tube_gradient(&self, q: &[Vec<f64>], seed: usize, k: usize) -> Result<(Vec3, bool)> {
        let (gq, one_sided) = self.disc_gradient(q, seed, k)?;
        let (gx, _) = self.disc_gradient(
            &self.lines.iter().map(|l| l.points.clone()).collect::<Vec<_>>(),
            seed,
            k,
        )?;
        let line = &self.lines[seed];
        let n = line.len();
        let dqds = if n < 3 {
            (q[seed][1] - q[seed][0]) / line.ds
        } else if k == 0 {
            (-3.0 * q[seed][0] + 4.0 * q[seed][1] - q[seed][2]) / (2.0 * line.ds)
        } else if k == n - 1 {
            (3.0 * q[seed][k] - 4.0 * q[seed][k - 1] + q[seed][k - 2]) / (2.0 * line.ds)
        } else {
            (q[seed][k + 1] - q[seed][k - 1]) / (2.0 * line.ds)
        };
        // rows of Mᵀ are ∂x/∂σ₂, ∂x/∂σ₃, ∂x/∂s
        let mt = crate::calc3::Mat3::from_rows(&[gx[0].transpose(), gx[1].transpose(), line.tangents[k].transpose()]);
        let rhs = Vec3::new(gq[0], gq[1], dqds);
        let grad = mt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("tube coordinates degenerate".into()))?;
        Ok((grad, one_sided))
    }

    /// CSV with columns `seed_i, seed_j, s, x, y, z`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "seed_i,seed_j,s,x,y,z")?;
        for (seed, line) in self.seeds.iter().zip(&self.lines) {
            for (s, p) in line.s.iter().zip(&line.points) {
                writeln!(w, "{},{},{:.17e},{:.17e},{:.17e},{:.17e}", seed.ring, seed.spoke, s, p.x, p.y, p.z)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calc3::{Domain, VectorFn};
    use std::sync::Arc;

    fn constant() -> Arc<dyn VectorField> {
        Arc::new(VectorFn::new(|_| Vec3::new(1.0, 0.0, 0.0)))
    }

    fn rotation() -> Arc<dyn VectorField> {
        Arc::new(VectorFn::new(|x: &Vec3| Vec3::new(-x.y, x.x, 0.0)))
    }

    fn abc() -> Arc<dyn VectorField> {
        Arc::new(VectorFn::new(|x: &Vec3| {
            Vec3::new(x.z.sin() + x.y.cos(), x.x.sin() + x.z.cos(), x.y.sin() + x.x.cos())
        }))
    }

    #[test]
    fn constant_field_endpoint() {
        let l = integrate_streamline(constant().as_ref(), Vec3::zeros(), 1.0, 1e-3).unwrap();
        assert!((l.end() - Vec3::x()).norm() <= 1e-12);
        assert!(l.is_complete());
        assert!(l.s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn circle_closes() {
        let tau = std::f64::consts::TAU;
        let l = integrate_streamline(rotation().as_ref(), Vec3::x(), tau, 1e-3).unwrap();
        assert!((l.end() - Vec3::x()).norm() <= 1e-8);
    }

    #[test]
    fn unit_speed_at_samples() {
        let f = abc();
        let l = integrate_streamline(f.as_ref(), Vec3::new(0.1, 0.2, 0.3), 1.0, 1e-3).unwrap();
        for (p, t) in l.points.iter().zip(&l.tangents) {
            let v = f.value(p).unwrap();
            assert!((t - v / v.norm()).norm() <= 1e-8);
            assert!((t.norm() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn hermite_tangent_tracks_flow_between_samples() {
        let f = abc();
        let l = integrate_streamline(f.as_ref(), Vec3::new(0.1, 0.2, 0.3), 1.0, 1e-3).unwrap();
        for k in (0..l.len() - 1).step_by(37) {
            let s = l.s[k] + 0.5 * l.ds;
            let x = l.position_at(s).unwrap();
            let v = f.value(&x).unwrap();
            assert!((l.tangent_at(s).unwrap() - v / v.norm()).norm() <= 1e-6);
        }
    }

    #[test]
    fn reversibility() {
        let f = abc();
        let ds = 1e-2;
        let x0 = Vec3::new(0.4, -0.3, 1.2);
        let fwd = integrate_streamline(f.as_ref(), x0, 1.0, ds).unwrap();
        let back = integrate_streamline_sense(f.as_ref(), fwd.end(), 1.0, ds, Sense::Backward).unwrap();
        assert!((back.end() - x0).norm() <= 100.0 * ds.powi(4));
    }

    #[test]
    fn vanishing_field_truncates() {
        let f = VectorFn::new(|x: &Vec3| Vec3::new(1.0 - x.x, 0.0, 0.0));
        let l = integrate_streamline(&f, Vec3::zeros(), 2.0, 1e-2).unwrap();
        let t = l.truncation.as_ref().unwrap();
        assert!(t.s < 1.0);
        assert!(!l.is_complete());
    }

    #[test]
    fn domain_exit_truncates() {
        let f = VectorFn::new(|_| Vec3::x()).with_domain(Domain::Box {
            min: [-1.0, -1.0, -1.0],
            max: [0.5, 1.0, 1.0],
        });
        let l = integrate_streamline(&f, Vec3::zeros(), 1.0, 1e-2).unwrap();
        assert_eq!(l.truncation.as_ref().unwrap().kind, "domain-boundary");
    }

    #[test]
    fn constant_tube_is_a_straight_cylinder() {
        let fr = AdaptedFrame::new(constant(), Vec3::z()).unwrap();
        let tube = build_tube(&fr, Vec3::zeros(), TubeParams { radius: 0.1, rings: 2, spokes: 6, length: 1.0, ds: 1e-2 }).unwrap();
        assert_eq!(tube.seeds.len(), 13);
        for (seed, line) in tube.seeds.iter().zip(&tube.lines) {
            for (s, p) in line.s.iter().zip(&line.points) {
                assert!((p - seed.point - Vec3::x() * *s).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn rotation_tube_stays_on_its_torus() {
        let fr = AdaptedFrame::new(rotation(), Vec3::z()).unwrap();
        let tube = build_tube(&fr, Vec3::x(), TubeParams { radius: 0.1, rings: 2, spokes: 6, length: 3.0, ds: 1e-2 }).unwrap();
        for (seed, line) in tube.seeds.iter().zip(&tube.lines) {
            let rho0 = seed.point.xy().norm();
            for p in &line.points {
                assert!((p.xy().norm() - rho0).abs() <= 1e-9);
                assert!((p.z - seed.point.z).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn failing_seed_is_reported() {
        let f: Arc<dyn VectorField> = Arc::new(
            VectorFn::new(|x: &Vec3| Vec3::new(1.0, 0.0, 0.0) * x.y.signum().max(0.0))
        );
        let fr = AdaptedFrame::new(f, Vec3::z()).unwrap();
        let err = build_tube(&fr, Vec3::new(0.0, 0.05, 0.0), TubeParams { radius: 0.1, rings: 1, spokes: 4, length: 1.0, ds: 1e-2 });
        match err {
            Err(Error::TubeConstruction(list)) => assert!(!list.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn transverse_derivatives_of_coordinates() {
        let fr = AdaptedFrame::new(abc(), Vec3::z()).unwrap();
        let tube = build_tube(&fr, Vec3::new(0.1, 0.2, 0.3), TubeParams { radius: 0.05, rings: 3, spokes: 8, length: 0.5, ds: 1e-2 }).unwrap();
        let n = tube.common_len();
        let constant: Vec<Vec<f64>> = tube.lines.iter().map(|_| vec![2.5; n]).collect();
        let sigma2: Vec<Vec<f64>> = tube.seeds.iter().map(|s| vec![s.sigma.0; n]).collect();
        for seed in 0..tube.seeds.len() {
            let d = tube.transverse_derivative(&constant, Transverse::E2, seed, 10).unwrap();
            assert_eq!(d.value, 0.0);
            let d2 = tube.transverse_derivative(&sigma2, Transverse::E2, seed, 10).unwrap();
            assert!((d2.value - 1.0).abs() <= 10.0 * tube.params.radius);
            let d3 = tube.transverse_derivative(&sigma2, Transverse::E3, seed, 10).unwrap();
            assert!(d3.value.abs() <= 10.0 * tube.params.radius);
            assert_eq!(d2.one_sided, tube.seeds[seed].ring == tube.params.rings);
        }
    }

    #[test]
    fn tube_gradient_of_linear_function() {
        let fr = AdaptedFrame::new(abc(), Vec3::z()).unwrap();
        let tube = build_tube(&fr, Vec3::new(0.1, 0.2, 0.3), TubeParams { radius: 0.02, rings: 2, spokes: 8, length: 0.5, ds: 1e-2 }).unwrap();
        let a = Vec3::new(0.3, -1.0, 2.0);
        let q: Vec<Vec<f64>> = tube.lines.iter().map(|l| l.points.iter().map(|p| a.dot(p)).collect()).collect();
        let (g, _) = tube.tube_gradient(&q, 3, 20).unwrap();
        assert!((g - a).norm() <= 1e-3, "{g}");
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let fr = AdaptedFrame::new(constant(), Vec3::z()).unwrap();
        let tube = build_tube(&fr, Vec3::zeros(), TubeParams { radius: 0.1, rings: 1, spokes: 3, length: 0.1, ds: 1e-2 }).unwrap();
        let mut buf = Vec::new();
        tube.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "seed_i,seed_j,s,x,y,z");
        assert_eq!(text.lines().count(), 1 + 4 * 11);
    }
}
