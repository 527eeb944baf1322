//! Form-language view of a Poisson pair: unit forms, the connections `γ` and
//! `Γ_i`, curvature, the 3-form `Ξ`, and two global probes (the Chern number of
//! the normal bundle over a closed surface, and `∫Ξ` over a periodic box).

mod chern;
mod mesh;
mod torus;

pub use chern::{chern_number, chern_number_with_gauge, ChernResult};
pub use mesh::TriangulatedSurface;
pub use torus::{integrate_3form_torus, integrate_periodic_grid, pairwise_sum, PeriodicBox, PeriodicGrid, TorusIntegral};

use crate::assemble::PairStencil;
use crate::calc3::{curl_of_jacobian, ext_deriv, DiffConfig, Domain, Form, FormField, Mat3, Vec3, VectorField};
use crate::error::{arr, Error, Result};
use crate::framekit::EPS_V;
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Smallest `‖J‖` accepted when normalizing.
pub const EPS_J: f64 = 1e-12;

/// The plane `v^⊥` with the complex structure `u ↦ ê₁×u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalPlane {
    pub e1: Vec3,
    /// Unit vector in the plane.
    pub u: Vec3,
    /// `ê₁×u`.
    pub w: Vec3,
}

impl NormalPlane {
    pub fn at(v: &Vec3, x: &Vec3) -> Result<Self> {
        let n = v.norm();
        if !(n >= EPS_V) {
            return Err(Error::VanishingField { point: arr(x), norm: n });
        }
        let e1 = v / n;
        let a = crate::framekit::suggest_axis(&e1);
        let u = (a - e1 * a.dot(&e1)).normalize();
        Ok(NormalPlane { e1, u, w: e1.cross(&u) })
    }

    pub fn project(&self, x: &Vec3) -> Vec3 {
        x - self.e1 * self.e1.dot(x)
    }

    pub fn rotate(&self, x: &Vec3) -> Vec3 {
        self.e1.cross(x)
    }
}

/// Metric duals of `J_i/‖J_i‖`.
pub fn unit_poisson_forms(j1: &Vec3, j2: &Vec3) -> Result<[Form; 2]> {
    let unit = |j: &Vec3| {
        let n = j.norm();
        if !(n >= EPS_J) {
            return Err(Error::InvalidArgument(format!("Poisson vector has norm {n:e}")));
        }
        Ok(Form::One(j / n))
    };
    Ok([unit(j1)?, unit(j2)?])
}

/// A vector field viewed as a 1-form, optionally normalized.
#[derive(Clone)]
pub struct PoissonForm {
    pub field: Arc<dyn VectorField>,
    pub unit: bool,
}

impl FormField for PoissonForm {
    fn grade(&self) -> u8 {
        1
    }

    fn value(&self, x: &Vec3) -> Result<Form> {
        let j = self.field.value(x)?;
        if !self.unit {
            return Ok(Form::One(j));
        }
        let n = j.norm();
        if !(n >= EPS_J) {
            return Err(Error::InvalidArgument(format!("Poisson vector vanishes at {x:?}")));
        }
        Ok(Form::One(j / n))
    }

    fn exact_ext_deriv(&self, x: &Vec3) -> Option<Form> {
        let dj = self.field.exact_jacobian(x)?;
        let j = self.field.value(x).ok()?;
        if !self.unit {
            return Some(Form::Two(curl_of_jacobian(&dj)));
        }
        let n = j.norm();
        let jh = j / n;
        // D(J/|J|) = (I − ĵĵᵀ)DJ/|J|
        let d = (Mat3::identity() - jh * jh.transpose()) * dj / n;
        Some(Form::Two(curl_of_jacobian(&d)))
    }

    fn domain(&self) -> Domain {
        self.field.domain()
    }
}

/// Least-squares solution of `dK_i = γ∧K_i` for both `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma: [f64; 3],
    /// `max_i ‖dK_i − γ∧K_i‖`.
    pub residual: f64,
    pub rank: usize,
    /// Set when the system is rank deficient and `γ` is the minimal-norm choice.
    pub gauge_ambiguous: bool,
}

impl GammaFit {
    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.gamma[0], self.gamma[1], self.gamma[2])
    }
}

/// `γ∧K = γ×K = −[K]ₓγ` stacked for both forms.
pub fn fit_gamma_from(k1: &Vec3, dk1: &Vec3, k2: &Vec3, dk2: &Vec3) -> GammaFit {
    let cross = |k: &Vec3| -k.cross_matrix();
    let mut a = SMatrix::<f64, 6, 3>::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&cross(k1));
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&cross(k2));
    let mut b = SVector::<f64, 6>::zeros();
    b.fixed_rows_mut::<3>(0).copy_from(dk1);
    b.fixed_rows_mut::<3>(3).copy_from(dk2);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let cut = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|s| **s > cut).count();
    let g: Vec3 = if smax == 0.0 {
        Vec3::zeros()
    } else {
        let sol = svd.solve(&b, cut).expect("SVD computed with both factors");
        Vec3::new(sol[0], sol[1], sol[2])
    };
    let residual = (dk1 - g.cross(k1)).norm().max((dk2 - g.cross(k2)).norm());
    GammaFit { gamma: arr(&g), residual, rank, gauge_ambiguous: rank < 3 }
}

pub fn fit_gamma(k1: &dyn FormField, k2: &dyn FormField, x: &Vec3, cfg: &DiffConfig) -> Result<GammaFit> {
    let one = |k: &dyn FormField| -> Result<(Vec3, Vec3)> {
        if k.grade() != 1 {
            return Err(Error::Grade(format!("fit_gamma needs 1-forms, got grade {}", k.grade())));
        }
        let v = k.value(x)?.vector().unwrap();
        let d = ext_deriv(k, x, cfg)?.vector().unwrap();
        Ok((v, d))
    };
    let (a, da) = one(k1)?;
    let (b, db) = one(k2)?;
    Ok(fit_gamma_from(&a, &da, &b, &db))
}

/// Gauge-fixed connection of a single Poisson 1-form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigGammaFit {
    pub gamma: [f64; 3],
    /// `‖dĵ − Γ∧ĵ‖`.
    pub residual: f64,
    /// `|ĵ·∇×ĵ| / (‖ĵ‖‖∇×ĵ‖ + ε)`.
    pub jacobi: f64,
}

impl BigGammaFit {
    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.gamma[0], self.gamma[1], self.gamma[2])
    }
}

/// `Γ = −ι_{ĵ♯}dĵ / ‖ĵ‖²`, so that `Γ(ĵ♯) = 0`.
pub fn big_gamma_from(j: &Vec3, dj: &Vec3) -> BigGammaFit {
    let n2 = j.norm_squared();
    let g = j.cross(dj) / n2;
    BigGammaFit {
        gamma: arr(&g),
        residual: (dj - g.cross(j)).norm(),
        jacobi: j.dot(dj).abs() / (j.norm() * dj.norm() + f64::MIN_POSITIVE),
    }
}

/// Fits `Γ` at `x`; fails with [`Error::NotPoisson`] when the normalized Jacobi
/// residual exceeds `max_jacobi`.
pub fn fit_big_gamma(j: &dyn FormField, x: &Vec3, cfg: &DiffConfig, max_jacobi: f64) -> Result<BigGammaFit> {
    if j.grade() != 1 {
        return Err(Error::Grade(format!("fit_big_gamma needs a 1-form, got grade {}", j.grade())));
    }
    let v = j.value(x)?.vector().unwrap();
    let d = ext_deriv(j, x, cfg)?.vector().unwrap();
    let fit = big_gamma_from(&v, &d);
    if fit.jacobi > max_jacobi {
        return Err(Error::NotPoisson { point: arr(x), residual: fit.jacobi });
    }
    Ok(fit)
}

/// The field `x ↦ Γ(x)` of a Poisson 1-form.
pub struct BigGammaField<F: FormField> {
    pub form: F,
    pub cfg: DiffConfig,
}

impl<F: FormField> FormField for BigGammaField<F> {
    fn grade(&self) -> u8 {
        1
    }

    fn value(&self, x: &Vec3) -> Result<Form> {
        let v = self.form.value(x)?.vector().unwrap();
        let d = ext_deriv(&self.form, x, &self.cfg)?.vector().unwrap();
        Ok(Form::One(big_gamma_from(&v, &d).vector()))
    }

    fn domain(&self) -> Domain {
        self.form.domain()
    }
}

/// `κ = dΓ`.
pub fn curvature(gamma: &dyn FormField, x: &Vec3, cfg: &DiffConfig) -> Result<Form> {
    if gamma.grade() != 1 {
        return Err(Error::Grade("curvature needs a connection 1-form".into()));
    }
    ext_deriv(gamma, x, cfg)
}

/// `Ξ = (Γ₁ − Γ₂)∧κ`.
pub fn xi(gamma1: &Form, gamma2: &Form, kappa: &Form) -> Result<Form> {
    crate::calc3::wedge(&(*gamma1 - *gamma2), kappa)
}

/// The 3-form `Ξ = (Γ₁ − Γ₂)∧dΓ₁` of an analytic pair.
pub struct XiField {
    pub gamma: [BigGammaField<PoissonForm>; 2],
    pub cfg: DiffConfig,
}

impl XiField {
    pub fn new(j1: Arc<dyn VectorField>, j2: Arc<dyn VectorField>, cfg: DiffConfig) -> Self {
        let g = |j: Arc<dyn VectorField>| BigGammaField { form: PoissonForm { field: j, unit: true }, cfg };
        XiField { gamma: [g(j1), g(j2)], cfg }
    }
}

impl FormField for XiField {
    fn grade(&self) -> u8 {
        3
    }

    fn value(&self, x: &Vec3) -> Result<Form> {
        let kappa = curvature(&self.gamma[0], x, &self.cfg)?;
        xi(&self.gamma[0].value(x)?, &self.gamma[1].value(x)?, &kappa)
    }

    fn domain(&self) -> Domain {
        self.gamma[0].domain()
    }
}

/// `∫Ξ` over a periodic box. A nonzero value certifies an obstruction; zero is evidence only.
pub fn bott_integral(
    j1: Arc<dyn VectorField>,
    j2: Arc<dyn VectorField>,
    bx: &PeriodicBox,
    n: usize,
    cfg: &DiffConfig,
) -> Result<TorusIntegral> {
    integrate_3form_torus(&XiField::new(j1, j2, *cfg), bx, n, 1e-8)
}

/// Connection data of an analytic Poisson pair at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairConnection {
    pub gamma: GammaFit,
    pub big_gamma: [BigGammaFit; 2],
    /// `κ_i = dΓ_i`.
    pub kappa: [[f64; 3]; 2],
    /// `Ξ = (Γ₁ − Γ₂)∧κ₁`.
    pub xi: f64,
    /// `|κ_i∧ĵ_i|`, which vanishes because `d²ĵ_i = 0`.
    pub decomposability: [f64; 2],
    /// `max(|κ₁∧ĵ₂|, |κ₂∧ĵ₁|)`. This vanishes only once the `Γ_i` are
    /// regauged to share one curvature, which the fixed gauge does not do.
    pub cross_decomposability: f64,
    /// `‖(Γ_i − γ + d ln‖J_i‖)∧ĵ_i‖`.
    pub gauge_coherence: [f64; 2],
}

/// Every connection quantity of the pair `(J₁, J₂)` at `x`.
pub fn pair_connection(j1: Arc<dyn VectorField>, j2: Arc<dyn VectorField>, x: &Vec3, cfg: &DiffConfig) -> Result<PairConnection> {
    let raw = [PoissonForm { field: j1.clone(), unit: false }, PoissonForm { field: j2.clone(), unit: false }];
    let gamma = fit_gamma(&raw[0], &raw[1], x, cfg)?;
    let unit = [PoissonForm { field: j1, unit: true }, PoissonForm { field: j2, unit: true }];
    let mut big = Vec::with_capacity(2);
    let mut kappa = Vec::with_capacity(2);
    let mut coherence = [0.0; 2];
    for (i, u) in unit.iter().enumerate() {
        let fit = big_gamma_from(&u.value(x)?.vector().unwrap(), &ext_deriv(u, x, cfg)?.vector().unwrap());
        let field = BigGammaField { form: u.clone(), cfg: *cfg };
        kappa.push(curvature(&field, x, cfg)?.vector().unwrap());
        let log_norm = crate::calc3::ScalarFn::new({
            let f = u.field.clone();
            move |y: &Vec3| f.value(y).map(|j| j.norm().ln()).unwrap_or(f64::NAN)
        })
        .with_domain(u.domain());
        let dln = crate::calc3::grad(&log_norm, x, cfg)?;
        let jh = u.value(x)?.vector().unwrap();
        coherence[i] = (fit.vector() - gamma.vector() + dln).cross(&jh).norm();
        big.push(fit);
    }
    let jh = [unit[0].value(x)?.vector().unwrap(), unit[1].value(x)?.vector().unwrap()];
    let xi = (big[0].vector() - big[1].vector()).dot(&kappa[0]);
    Ok(PairConnection {
        gamma,
        big_gamma: [big[0], big[1]],
        kappa: [arr(&kappa[0]), arr(&kappa[1])],
        xi,
        decomposability: [kappa[0].dot(&jh[0]).abs(), kappa[1].dot(&jh[1]).abs()],
        cross_decomposability: kappa[0].dot(&jh[1]).abs().max(kappa[1].dot(&jh[0]).abs()),
        gauge_coherence: coherence,
    })
}

/// Connection residuals of a constructed pair, from one stencil.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StencilConnection {
    /// Fit of `dK_i = γ∧K_i` for `K_i = (−1)^{i+1}J_i/φ`.
    pub gamma_fit: f64,
    /// `|ι_{ê₁}γ|` for the same fit.
    pub gamma_contract: f64,
    /// `‖dĵ_i − Γ_i∧ĵ_i‖`.
    pub big_gamma_fit: [f64; 2],
    pub gauge_coherence: [f64; 2],
    /// `J₁∧dJ₂ + J₂∧dJ₁`.
    pub form_compatibility: f64,
}

pub fn stencil_connection(st: &PairStencil) -> StencilConnection {
    let c = &st.center;
    let dk = [0, 1].map(|i| curl_of_jacobian(&st.jacobian(|p| p.g(i))));
    let k = [c.g(0), c.g(1)];
    let fit_k = fit_gamma_from(&k[0], &dk[0], &k[1], &dk[1]);
    let dj = [0, 1].map(|i| curl_of_jacobian(&st.jacobian(|p| p.j[i])));
    let fit_j = fit_gamma_from(&c.j[0], &dj[0], &c.j[1], &dj[1]);
    let mut big = [0.0; 2];
    let mut coherence = [0.0; 2];
    for i in 0..2 {
        let jh = c.j[i] / c.j[i].norm();
        let djh = curl_of_jacobian(&st.jacobian(|p| p.j[i] / p.j[i].norm()));
        let fit = big_gamma_from(&jh, &djh);
        big[i] = fit.residual;
        let dln = st.grad(|p| p.j[i].norm().ln());
        coherence[i] = (fit.vector() - fit_j.vector() + dln).cross(&jh).norm();
    }
    StencilConnection {
        gamma_fit: fit_k.residual,
        gamma_contract: fit_k.vector().dot(&c.frame.e1).abs(),
        big_gamma_fit: big,
        gauge_coherence: coherence,
        form_compatibility: (c.j[0].dot(&dj[1]) + c.j[1].dot(&dj[0])).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calc3::{FormFn, VectorFn};

    fn cfg() -> DiffConfig {
        DiffConfig::finite_difference(1e-4, 4).unwrap()
    }

    /// `J_i = f∇h_i` with `h₁ = z + ε sin x`, `h₂ = y − δ cos z`: compatible,
    /// periodic, with non-constant directions.
    pub(crate) fn periodic_pair() -> (Arc<dyn VectorField>, Arc<dyn VectorField>) {
        let f = |x: &Vec3| (0.3 * (x.x + 2.0 * x.y).sin() + 0.2 * x.z.cos()).exp();
        let j1 = VectorFn::new(move |x: &Vec3| Vec3::new(0.4 * x.x.cos(), 0.0, 1.0) * f(x));
        let j2 = VectorFn::new(move |x: &Vec3| Vec3::new(0.0, 1.0, 0.5 * x.z.sin()) * f(x));
        (Arc::new(j1), Arc::new(j2))
    }

    #[test]
    fn normal_plane_structure() {
        let v = Vec3::new(0.3, -1.2, 0.7);
        let q = NormalPlane::at(&v, &Vec3::zeros()).unwrap();
        assert!(q.u.dot(&v).abs() <= 1e-12 && q.w.dot(&v).abs() <= 1e-12);
        let x = q.project(&Vec3::new(1.0, 2.0, 3.0));
        assert!((q.rotate(&q.rotate(&x)) + x).norm() <= 1e-12);
        assert!(q.rotate(&x).dot(&q.e1).abs() <= 1e-12);
        assert!(NormalPlane::at(&Vec3::zeros(), &Vec3::zeros()).is_err());
    }

    #[test]
    fn unit_forms() {
        let [a, b] = unit_poisson_forms(&Vec3::new(0.0, 3.0, 0.0), &Vec3::new(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(a, Form::One(Vec3::y()));
        assert!((b.norm() - 1.0).abs() <= 1e-12);
        assert!(unit_poisson_forms(&Vec3::zeros(), &Vec3::x()).is_err());
    }

    #[test]
    fn constant_pair_has_no_connection() {
        let k1 = FormFn::new(1, |_| Form::One(Vec3::y())).unwrap();
        let k2 = FormFn::new(1, |_| Form::One(Vec3::new(0.0, 1.0, 1.0))).unwrap();
        let fit = fit_gamma(&k1, &k2, &Vec3::new(0.2, 0.1, 0.0), &cfg()).unwrap();
        assert_eq!(fit.vector(), Vec3::zeros());
        assert_eq!(fit.rank, 3);
        let g = fit_big_gamma(&k1, &Vec3::zeros(), &cfg(), 1e-6).unwrap();
        assert_eq!(g.vector(), Vec3::zeros());
        let field = BigGammaField { form: k1, cfg: cfg() };
        assert_eq!(curvature(&field, &Vec3::zeros(), &cfg()).unwrap(), Form::Two(Vec3::zeros()));
        assert_eq!(xi(&Form::One(Vec3::x()), &Form::One(Vec3::x()), &Form::Two(Vec3::y())).unwrap(), Form::Three(0.0));
    }

    #[test]
    fn gamma_recovers_conformal_factor() {
        // J_i = f∇h_i ⇒ dJ_i = d ln f ∧ J_i, so γ = d ln f
        let (j1, j2) = periodic_pair();
        let x = Vec3::new(0.3, -0.8, 1.1);
        let fit = fit_gamma(
            &PoissonForm { field: j1, unit: false },
            &PoissonForm { field: j2, unit: false },
            &x,
            &cfg(),
        )
        .unwrap();
        let s = x.x + 2.0 * x.y;
        let dlnf = Vec3::new(0.3 * s.cos(), 0.6 * s.cos(), -0.2 * x.z.sin());
        assert!((fit.vector() - dlnf).norm() <= 1e-8, "{fit:?}");
        assert!(fit.residual <= 1e-8);
        assert!(!fit.gauge_ambiguous);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let fit = fit_gamma_from(&Vec3::x(), &Vec3::zeros(), &(Vec3::x() * 2.0), &Vec3::zeros());
        assert!(fit.gauge_ambiguous);
        assert_eq!(fit.rank, 2);
    }

    #[test]
    fn big_gamma_gauge_and_fit() {
        let (j1, _) = periodic_pair();
        let u = PoissonForm { field: j1, unit: true };
        for x in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(2.0, -1.0, 0.5)] {
            let g = fit_big_gamma(&u, &x, &cfg(), 1e-6).unwrap();
            let jh = u.value(&x).unwrap().vector().unwrap();
            assert!(g.vector().dot(&jh).abs() <= 1e-15);
            assert!(g.residual <= 1e-8);
        }
        let not_poisson = FormFn::new(1, |x: &Vec3| Form::One(Vec3::new(x.z, x.x, x.y))).unwrap();
        assert!(matches!(
            fit_big_gamma(&not_poisson, &Vec3::new(1.0, 1.0, 1.0), &cfg(), 1e-6),
            Err(Error::NotPoisson { .. })
        ));
    }

    #[test]
    fn exact_unit_derivative_matches_differences() {
        let j = VectorFn::new(|x: &Vec3| Vec3::new(x.y.sin(), 1.0 + x.z * x.z, x.x))
            .with_jacobian(|x: &Vec3| Mat3::new(0.0, x.y.cos(), 0.0, 0.0, 0.0, 2.0 * x.z, 1.0, 0.0, 0.0));
        let u = PoissonForm { field: Arc::new(j), unit: true };
        let x = Vec3::new(0.4, 0.5, -0.3);
        let a = ext_deriv(&u, &x, &DiffConfig::exact()).unwrap();
        let b = ext_deriv(&u, &x, &cfg()).unwrap();
        assert!((a - b).norm() <= 1e-9);
    }

    #[test]
    fn pair_connection_identities() {
        let (j1, j2) = periodic_pair();
        let c = pair_connection(j1, j2, &Vec3::new(0.7, 0.2, -0.4), &DiffConfig::finite_difference(1e-3, 4).unwrap()).unwrap();
        assert!(c.gamma.residual <= 1e-7);
        for i in 0..2 {
            assert!(c.gauge_coherence[i] <= 1e-7, "{c:?}");
        }
        assert!(c.decomposability[0] <= 1e-6 && c.decomposability[1] <= 1e-6, "{c:?}");
        assert!(c.cross_decomposability > 1e-4);
    }

    #[test]
    fn bott_integral_of_constant_pair_vanishes() {
        let j1: Arc<dyn VectorField> = Arc::new(VectorFn::new(|_| Vec3::y()));
        let j2: Arc<dyn VectorField> = Arc::new(VectorFn::new(|_| Vec3::new(0.0, 1.0, 1.0)));
        let r = bott_integral(j1, j2, &PeriodicBox::default(), 8, &cfg()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.max_abs, 0.0);
    }

    #[test]
    fn bott_integral_of_periodic_pair() {
        let (j1, j2) = periodic_pair();
        let bx = PeriodicBox::cube(std::f64::consts::TAU);
        let c = DiffConfig::finite_difference(1e-3, 4).unwrap();
        let r = bott_integral(j1, j2, &bx, 16, &c).unwrap();
        // Ξ is not zero pointwise, but its integral is
        assert!(r.max_abs > 1e-4);
        assert!(r.value.abs() <= 1e-8 * r.max_abs * bx.volume(), "{r:?}");
    }
}
