//! The Poisson pair `J_i = α_i(ê₂ + μ_iê₃)`, the factor `φ`, the Hamiltonians,
//! and the residuals of every local identity.
//!
//! Sign convention: `φ = α₁α₂(μ₁−μ₂)/‖v‖` and `∇H_i = (−1)^{i+1}J_i/φ`, which
//! makes `v = J₁×∇H₂ = J₂×∇H₁` and `ι_vΩ = φ dH₁∧dH₂` hold together under the
//! orientation `ê₁·(ê₂×ê₃) = +1`.

mod extension;
mod residuals;

pub use extension::{InitialData, Location, PairConfig, PairField, PairSample, PairStencil, SeedState};
pub use residuals::{
    bihamiltonian_from, bihamiltonian_residual, compatibility_from, compatibility_residual_vec, jacobi_from,
    jacobi_residual, lemma1_residual, point_residuals, two_form_check, two_form_from, Fault, JacobiResidual,
    PointResiduals,
};

use crate::calc3::{Domain, ScalarField, Vec3, VectorField};
use crate::error::{arr, Error, Result};
use crate::flowline::StreamTube;
use crate::framekit::{AdaptedFrame, Frame};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Minimum `|μ₁ − μ₂|`.
pub const EPS_SEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhiConvention {
    /// `φ = α₁α₂(μ₁−μ₂)/‖v‖`.
    #[default]
    Standard,
    /// `φ = α₁α₂(μ₂−μ₁)/‖v‖`, kept to show that it breaks the identities.
    Flipped,
}

/// How `μ_i, α_i` vary across the seed disc.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Seeding {
    /// Seed values chosen so the Hamiltonians are linear on the disc.
    #[default]
    LinearHamiltonian,
    /// Base values copied to every seed.
    Constant,
}

pub fn phi(alpha: [f64; 2], mu: [f64; 2], speed: f64, conv: PhiConvention) -> Result<f64> {
    let sep = mu[0] - mu[1];
    if !(sep.abs() >= EPS_SEP) {
        return Err(Error::DegeneratePair { point: [f64::NAN; 3], separation: sep.abs() });
    }
    let p = alpha[0] * alpha[1] * sep / speed;
    Ok(match conv {
        PhiConvention::Standard => p,
        PhiConvention::Flipped => -p,
    })
}

/// `α(ê₂ + μê₃)`.
pub fn poisson_vector(frame: &Frame, alpha: f64, mu: f64) -> Vec3 {
    (frame.e2 + frame.e3 * mu) * alpha
}

/// A Poisson field sampled on a tube, indexed `[seed][node]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonField {
    pub alpha: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub j: Vec<Vec<Vec3>>,
    /// `max |J·v| / (‖J‖‖v‖)`.
    pub transversality: f64,
}

/// Per-node `μ_i, α_i` on a tube, carried from the seeds.
#[derive(Clone, Debug)]
pub struct TubeSolution {
    pub samples: Vec<Vec<PairSample>>,
}

/// Carries the seed data of `pair` along every streamline of `tube`.
pub fn solve_tube(pair: &PairField, tube: &StreamTube) -> Result<TubeSolution> {
    let samples = tube
        .seeds
        .par_iter()
        .map(|seed| pair.trajectory(seed.sigma, tube.params.length))
        .collect::<Result<Vec<_>>>()?;
    Ok(TubeSolution { samples })
}

impl TubeSolution {
    pub fn field(&self, i: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mu = self.samples.iter().map(|l| l.iter().map(|p| p.mu[i]).collect()).collect();
        let alpha = self.samples.iter().map(|l| l.iter().map(|p| p.alpha[i]).collect()).collect();
        (mu, alpha)
    }

    pub fn frames(&self) -> Vec<Vec<Frame>> {
        self.samples.iter().map(|l| l.iter().map(|p| p.frame).collect()).collect()
    }
}

/// Assembles both Poisson fields from sampled `μ_i, α_i` and frames.
pub fn assemble_pair(
    frames: &[Vec<Frame>],
    mu: [&[Vec<f64>]; 2],
    alpha: [&[Vec<f64>]; 2],
) -> Result<(PoissonField, PoissonField)> {
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let mut j = Vec::with_capacity(frames.len());
        let mut worst: f64 = 0.0;
        for (l, line) in frames.iter().enumerate() {
            let mut row = Vec::with_capacity(line.len());
            for (k, f) in line.iter().enumerate() {
                let (m1, m2) = (mu[0][l][k], mu[1][l][k]);
                let sep = (m1 - m2).abs();
                if !(sep >= EPS_SEP) {
                    return Err(Error::DegeneratePair { point: [f64::NAN; 3], separation: sep });
                }
                let a = alpha[i][l][k];
                if a == 0.0 || !a.is_finite() {
                    return Err(Error::InvalidArgument(format!("α_{} vanishes at sample ({l}, {k})", i + 1)));
                }
                let jv = poisson_vector(f, a, mu[i][l][k]);
                worst = worst.max(jv.dot(&f.e1).abs() / jv.norm());
                row.push(jv);
            }
            j.push(row);
        }
        out.push(PoissonField {
            alpha: alpha[i].to_vec(),
            mu: mu[i].to_vec(),
            j,
            transversality: worst,
        });
    }
    let j2 = out.pop().unwrap();
    let j1 = out.pop().unwrap();
    Ok((j1, j2))
}

/// Smallest `‖J₁×J₂‖/(‖J₁‖‖J₂‖)` over the samples.
pub fn independence_certificate(j1: &PoissonField, j2: &PoissonField) -> f64 {
    j1.j.iter()
        .flatten()
        .zip(j2.j.iter().flatten())
        .map(|(a, b)| a.cross(b).norm() / (a.norm() * b.norm()))
        .fold(f64::INFINITY, f64::min)
}

/// `φ` on every sample.
pub fn phi_field(j1: &PoissonField, j2: &PoissonField, frames: &[Vec<Frame>], conv: PhiConvention) -> Result<Vec<Vec<f64>>> {
    frames
        .iter()
        .enumerate()
        .map(|(l, line)| {
            line.iter()
                .enumerate()
                .map(|(k, f)| phi([j1.alpha[l][k], j2.alpha[l][k]], [j1.mu[l][k], j2.mu[l][k]], f.speed, conv))
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonians {
    /// `h[i][seed][node]`, with `H_i(base) = 0`.
    pub h: [Vec<Vec<f64>>; 2],
}

/// Line integrals of `(−1)^{i+1}J_i/φ` along tube coordinate paths: out along
/// the spoke through the seeds to the seed, then along its streamline, both by
/// the trapezoid rule with exact unit tangents on the streamline leg.
pub fn reconstruct_hamiltonians(
    j1: &PoissonField,
    j2: &PoissonField,
    phi: &[Vec<f64>],
    frames: &[Vec<Frame>],
    tube: &StreamTube,
) -> Result<Hamiltonians> {
    let g = |i: usize, l: usize, k: usize| -> Vec3 {
        let (j, sign) = if i == 0 { (&j1.j, 1.0) } else { (&j2.j, -1.0) };
        j[l][k] * (sign / phi[l][k])
    };
    let mut h = [Vec::new(), Vec::new()];
    for (i, hi) in h.iter_mut().enumerate() {
        for (l, seed) in tube.seeds.iter().enumerate() {
            let mut acc = 0.0;
            let mut prev = 0usize;
            for ring in 1..=seed.ring {
                let cur = tube.seed_index(ring, seed.spoke);
                let d = tube.seeds[cur].point - tube.seeds[prev].point;
                acc += 0.5 * (g(i, prev, 0) + g(i, cur, 0)).dot(&d);
                prev = cur;
            }
            let line = &frames[l];
            let ds = tube.params.length / (line.len().max(2) - 1) as f64;
            let mut row = Vec::with_capacity(line.len());
            row.push(acc);
            for k in 1..line.len() {
                let a = g(i, l, k - 1).dot(&line[k - 1].e1);
                let b = g(i, l, k).dot(&line[k].e1);
                acc += 0.5 * (a + b) * ds;
                row.push(acc);
            }
            hi.push(row);
        }
    }
    Ok(Hamiltonians { h })
}

/// `H` at tube coordinates `(σ, s)` by the second path: up the base streamline
/// (where `H` stays 0), then across the level-`s` image of the disc ray. The
/// chord trapezoid is Richardson-extrapolated from `m` and `m/2` segments.
pub fn hamiltonians_other_path(pair: &PairField, sigma: (f64, f64), s: f64, segments: usize) -> Result<[f64; 2]> {
    let m = segments.max(2) & !1;
    let pts = (0..=m)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 / m as f64;
            pair.point_at((t * sigma.0, t * sigma.1), s)
        })
        .collect::<Result<Vec<_>>>()?;
    let chord = |stride: usize| {
        let mut h = [0.0; 2];
        let mut k = 0;
        while k + stride <= m {
            let (a, b) = (&pts[k], &pts[k + stride]);
            let d = b.x - a.x;
            for (i, hi) in h.iter_mut().enumerate() {
                *hi += 0.5 * (a.g(i) + b.g(i)).dot(&d);
            }
            k += stride;
        }
        h
    };
    let (fine, coarse) = (chord(1), chord(2));
    Ok([0, 1].map(|i| (4.0 * fine[i] - coarse[i]) / 3.0))
}

/// Component of a [`PairField`] exposed as an ordinary field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairComponent {
    J(usize),
    Alpha(usize),
    Mu(usize),
    H(usize),
    Phi,
    Arclength,
}

/// Adapter that evaluates one component of the pair, locating each point afresh.
#[derive(Clone)]
pub struct PairView {
    pub pair: Arc<PairField>,
    pub component: PairComponent,
}

impl PairView {
    pub fn new(pair: Arc<PairField>, component: PairComponent) -> Self {
        PairView { pair, component }
    }
}

impl VectorField for PairView {
    fn value(&self, x: &Vec3) -> Result<Vec3> {
        let s = self.pair.sample(x)?;
        match self.component {
            PairComponent::J(i) => Ok(s.j[i - 1]),
            _ => Err(Error::InvalidArgument("component is not a vector".into())),
        }
    }

    fn domain(&self) -> Domain {
        self.pair.frame.field.domain()
    }
}

impl ScalarField for PairView {
    fn value(&self, x: &Vec3) -> Result<f64> {
        let s = self.pair.sample(x)?;
        match self.component {
            PairComponent::Alpha(i) => Ok(s.alpha[i - 1]),
            PairComponent::Mu(i) => Ok(s.mu[i - 1]),
            PairComponent::H(i) => Ok(s.h[i - 1]),
            PairComponent::Phi => Ok(s.phi),
            PairComponent::Arclength => Ok(s.s),
            PairComponent::J(_) => Err(Error::InvalidArgument("component is not a scalar".into())),
        }
    }

    fn domain(&self) -> Domain {
        self.pair.frame.field.domain()
    }
}

/// Summary of one residual over a sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub max: f64,
    pub mean: f64,
    pub argmax: [f64; 3],
    pub count: usize,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualSummary {
    /// Summarizes `(value, location)` pairs. `pass` means `max ≤ tolerance`
    /// (or `min ≥ tolerance` with `at_least`).
    pub fn from_values(values: &[(f64, Vec3)], tolerance: f64, at_least: bool) -> Self {
        let count = values.len();
        let pick = |a: f64, b: f64| if at_least { b < a } else { b > a };
        let mut best = if at_least { f64::INFINITY } else { 0.0 };
        let mut argmax = [f64::NAN; 3];
        let mut sum = 0.0;
        let mut nan = false;
        for (v, x) in values {
            if !v.is_finite() {
                nan = true;
            }
            sum += v;
            if pick(best, *v) || argmax[0].is_nan() {
                best = *v;
                argmax = arr(x);
            }
        }
        let pass = !nan && count > 0 && if at_least { best >= tolerance } else { best <= tolerance };
        ResidualSummary {
            max: best,
            mean: if count > 0 { sum / count as f64 } else { 0.0 },
            argmax,
            count,
            tolerance,
            pass,
        }
    }
}

/// Scenario-level view of the frame that generated a pair.
pub fn frame_of(pair: &PairField) -> &AdaptedFrame {
    &pair.frame
}
