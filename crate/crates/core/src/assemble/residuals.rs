//! Residuals of the local identities, for arbitrary fields and for pair stencils.

use super::extension::{PairField, PairSample, PairStencil};
use crate::calc3::{curl, curl_of_jacobian, grad, jacobian, DiffConfig, Mat3, ScalarField, Vec3, VectorField};
use crate::error::Result;
use crate::framekit::AdaptedFrame;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobiResidual {
    /// `J·(∇×J)`.
    pub raw: f64,
    /// `|J·(∇×J)| / (‖J‖‖∇×J‖ + ε)`.
    pub normalized: f64,
}

pub fn jacobi_from(j: &Vec3, dj: &Mat3) -> JacobiResidual {
    let c = curl_of_jacobian(dj);
    let raw = j.dot(&c);
    JacobiResidual {
        raw,
        normalized: raw.abs() / (j.norm() * c.norm() + f64::MIN_POSITIVE),
    }
}

pub fn jacobi_residual(j: &dyn VectorField, x: &Vec3, cfg: &DiffConfig) -> Result<JacobiResidual> {
    Ok(jacobi_from(&j.value(x)?, &jacobian(j, x, cfg)?))
}

/// `(∇×J₂)·J₁ + (∇×J₁)·J₂`.
pub fn compatibility_from(j1: &Vec3, dj1: &Mat3, j2: &Vec3, dj2: &Mat3) -> f64 {
    curl_of_jacobian(dj2).dot(j1) + curl_of_jacobian(dj1).dot(j2)
}

pub fn compatibility_residual_vec(j1: &dyn VectorField, j2: &dyn VectorField, x: &Vec3, cfg: &DiffConfig) -> Result<f64> {
    Ok(curl(j2, x, cfg)?.dot(&j1.value(x)?) + curl(j1, x, cfg)?.dot(&j2.value(x)?))
}

/// `(‖v − J₁×∇H₂‖, ‖v − J₂×∇H₁‖) / ‖v‖`.
pub fn bihamiltonian_from(v: &Vec3, j1: &Vec3, j2: &Vec3, gh1: &Vec3, gh2: &Vec3) -> (f64, f64) {
    let n = v.norm();
    ((v - j1.cross(gh2)).norm() / n, (v - j2.cross(gh1)).norm() / n)
}

pub fn bihamiltonian_residual(
    v: &dyn VectorField,
    j1: &dyn VectorField,
    j2: &dyn VectorField,
    h1: &dyn ScalarField,
    h2: &dyn ScalarField,
    x: &Vec3,
    cfg: &DiffConfig,
) -> Result<(f64, f64)> {
    Ok(bihamiltonian_from(
        &v.value(x)?,
        &j1.value(x)?,
        &j2.value(x)?,
        &grad(h1, x, cfg)?,
        &grad(h2, x, cfg)?,
    ))
}

/// `ι_vΩ − φ dH₁∧dH₂` in the 2-form norm.
pub fn two_form_from(v: &Vec3, phi: f64, gh1: &Vec3, gh2: &Vec3) -> f64 {
    (v - gh1.cross(gh2) * phi).norm()
}

pub fn two_form_check(
    v: &dyn VectorField,
    phi: &dyn ScalarField,
    h1: &dyn ScalarField,
    h2: &dyn ScalarField,
    x: &Vec3,
    cfg: &DiffConfig,
) -> Result<f64> {
    Ok(two_form_from(&v.value(x)?, phi.value(x)?, &grad(h1, x, cfg)?, &grad(h2, x, cfg)?))
}

/// `∇·ê₁ − ê₁·∇ ln(|α₁α₂(μ₂−μ₁)|/‖v‖²)`.
pub fn lemma1_residual(
    frame: &AdaptedFrame,
    alpha1: &dyn ScalarField,
    alpha2: &dyn ScalarField,
    mu1: &dyn ScalarField,
    mu2: &dyn ScalarField,
    x: &Vec3,
    cfg: &DiffConfig,
) -> Result<f64> {
    let jet = frame.jet(x, cfg)?;
    let log_ratio = |y: &Vec3| -> Result<f64> {
        let prod = alpha1.value(y)? * alpha2.value(y)? * (mu2.value(y)? - mu1.value(y)?);
        Ok(prod.abs().ln() - 2.0 * frame.at(y)?.speed.ln())
    };
    let g = crate::calc3::directional(log_ratio, &frame.field.domain(), x, &jet.frame.e1, cfg)?;
    Ok(jet.div_e1() - g)
}

/// Fault injected into a stencil before evaluating residuals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// `α₂ → α₂·eˣ`.
    AlphaScaling,
    /// `H₁ ↔ H₂`.
    SwapHamiltonians,
    /// `φ → −φ` with the Hamiltonians kept.
    NegatePhi,
}

impl Fault {
    pub fn apply(self, s: &PairSample) -> PairSample {
        let mut out = *s;
        match self {
            Fault::AlphaScaling => {
                let f = s.x.x.exp();
                out.alpha[1] *= f;
                out.j[1] *= f;
            }
            Fault::SwapHamiltonians => out.h = [s.h[1], s.h[0]],
            Fault::NegatePhi => out.phi = -s.phi,
        }
        out
    }

    pub fn all() -> [Fault; 3] {
        [Fault::AlphaScaling, Fault::SwapHamiltonians, Fault::NegatePhi]
    }

    pub fn name(self) -> &'static str {
        match self {
            Fault::AlphaScaling => "alpha-scaling",
            Fault::SwapHamiltonians => "swap-hamiltonians",
            Fault::NegatePhi => "negate-phi",
        }
    }
}

/// Every pointwise identity at one point of the tube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointResiduals {
    pub x: Vec3,
    pub s: f64,
    pub jacobi: [f64; 2],
    pub jacobi_normalized: [f64; 2],
    pub compatibility: f64,
    pub bihamiltonian: [f64; 2],
    /// `‖J_i − (−1)^{i+1}φ∇H_i‖ / ‖J_i‖`.
    pub gradient_relation: [f64; 2],
    pub two_form: f64,
    pub divergence_identity: f64,
    /// `‖∇×(J_i/φ)‖`.
    pub closedness: [f64; 2],
    /// `|ê₁·∇H_i|`.
    pub invariance: [f64; 2],
    pub transversality: [f64; 2],
    /// `‖J₁×J₂‖ / (‖J₁‖‖J₂‖)`.
    pub independence: f64,
    /// `|J·∇×J|` for `J = J₁ + fJ₂` with flow-invariant `f`.
    pub dilatation_invariant: f64,
    /// Normalized Jacobi residual for `J = J₁ + sJ₂`.
    pub dilatation_arclength: f64,
}

pub fn point_residuals(st: &PairStencil, pair: &PairField) -> Result<PointResiduals> {
    let c = &st.center;
    let dj = [st.jacobian(|p| p.j[0]), st.jacobian(|p| p.j[1])];
    let jac = [jacobi_from(&c.j[0], &dj[0]), jacobi_from(&c.j[1], &dj[1])];
    let gh = [st.grad(|p| p.h[0]), st.grad(|p| p.h[1])];
    let v = c.v();
    let sign = [1.0, -1.0];
    let jet = pair.frame.jet(&c.x, &pair.conf.diff)?;
    let log_ratio = |p: &PairSample| (p.alpha[0] * p.alpha[1] * (p.mu[1] - p.mu[0])).abs().ln() - 2.0 * p.frame.speed.ln();
    let divergence_identity = jet.div_e1() - c.frame.e1.dot(&st.grad(log_ratio));
    let closedness = [
        curl_of_jacobian(&st.jacobian(|p| p.g(0))).norm(),
        curl_of_jacobian(&st.jacobian(|p| p.g(1))).norm(),
    ];
    let inv = |p: &PairSample| p.h[0] + p.h[1] + 1.0;
    let dil_inv = st.jacobian(|p| p.j[0] + p.j[1] * inv(p));
    let dil_s = st.jacobian(|p| p.j[0] + p.j[1] * p.s);
    let (b1, b2) = bihamiltonian_from(&v, &c.j[0], &c.j[1], &gh[0], &gh[1]);
    Ok(PointResiduals {
        x: c.x,
        s: c.s,
        jacobi: [jac[0].raw.abs(), jac[1].raw.abs()],
        jacobi_normalized: [jac[0].normalized, jac[1].normalized],
        compatibility: compatibility_from(&c.j[0], &dj[0], &c.j[1], &dj[1]).abs(),
        bihamiltonian: [b1, b2],
        gradient_relation: [0, 1].map(|i| (c.j[i] - gh[i] * (sign[i] * c.phi)).norm() / c.j[i].norm()),
        two_form: two_form_from(&v, c.phi, &gh[0], &gh[1]),
        divergence_identity: divergence_identity.abs(),
        closedness,
        invariance: [c.frame.e1.dot(&gh[0]).abs(), c.frame.e1.dot(&gh[1]).abs()],
        transversality: [0, 1].map(|i| c.j[i].dot(&c.frame.e1).abs() / c.j[i].norm()),
        independence: c.j[0].cross(&c.j[1]).norm() / (c.j[0].norm() * c.j[1].norm()),
        dilatation_invariant: jacobi_from(&(c.j[0] + c.j[1] * inv(c)), &dil_inv).raw.abs(),
        dilatation_arclength: jacobi_from(&(c.j[0] + c.j[1] * c.s), &dil_s).normalized,
    })
}
