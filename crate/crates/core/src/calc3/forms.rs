use super::{directional, Domain, Stencil, Vec3};
use super::DiffConfig;
use crate::error::{arr, Error, Result};
use std::ops::{Add, Mul, Neg, Sub};

/// A differential form at a point, in the coordinate coframe.
///
/// Two-forms are stored as `(dy∧dz, dz∧dx, dx∧dy)` coefficients, which makes
/// the Hodge star the identity on coefficient arrays.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Form {
    Zero(f64),
    One(Vec3),
    Two(Vec3),
    Three(f64),
}

impl Form {
    pub fn grade(&self) -> u8 {
        match self {
            Form::Zero(_) => 0,
            Form::One(_) => 1,
            Form::Two(_) => 2,
            Form::Three(_) => 3,
        }
    }

    pub fn zero(grade: u8) -> Result<Form> {
        Ok(match grade {
            0 => Form::Zero(0.0),
            1 => Form::One(Vec3::zeros()),
            2 => Form::Two(Vec3::zeros()),
            3 => Form::Three(0.0),
            g => return Err(Error::Grade(format!("no {g}-forms in three dimensions"))),
        })
    }

    /// Volume form `dx∧dy∧dz`.
    pub fn volume() -> Form {
        Form::Three(1.0)
    }

    pub fn dx() -> Form {
        Form::One(Vec3::x())
    }

    pub fn dy() -> Form {
        Form::One(Vec3::y())
    }

    pub fn dz() -> Form {
        Form::One(Vec3::z())
    }

    /// Coefficients in the coordinate basis, `C(3, k)` of them.
    pub fn components(&self) -> Vec<f64> {
        match self {
            Form::Zero(a) | Form::Three(a) => vec![*a],
            Form::One(v) | Form::Two(v) => vec![v.x, v.y, v.z],
        }
    }

    /// Euclidean norm of the coefficient array.
    pub fn norm(&self) -> f64 {
        match self {
            Form::Zero(a) | Form::Three(a) => a.abs(),
            Form::One(v) | Form::Two(v) => v.norm(),
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            Form::Zero(a) | Form::Three(a) => Some(*a),
            _ => None,
        }
    }

    pub fn vector(&self) -> Option<Vec3> {
        match self {
            Form::One(v) | Form::Two(v) => Some(*v),
            _ => None,
        }
    }

    pub fn scale(&self, k: f64) -> Form {
        *self * k
    }

    fn same_grade(&self, other: &Form) {
        assert_eq!(self.grade(), other.grade(), "adding forms of different grade");
    }
}

impl Add for Form {
    type Output = Form;
    fn add(self, rhs: Form) -> Form {
        self.same_grade(&rhs);
        match (self, rhs) {
            (Form::Zero(a), Form::Zero(b)) => Form::Zero(a + b),
            (Form::One(a), Form::One(b)) => Form::One(a + b),
            (Form::Two(a), Form::Two(b)) => Form::Two(a + b),
            (Form::Three(a), Form::Three(b)) => Form::Three(a + b),
            _ => unreachable!(),
        }
    }
}

impl Neg for Form {
    type Output = Form;
    fn neg(self) -> Form {
        self * -1.0
    }
}

impl Sub for Form {
    type Output = Form;
    fn sub(self, rhs: Form) -> Form {
        self + (-rhs)
    }
}

impl Mul<f64> for Form {
    type Output = Form;
    fn mul(self, k: f64) -> Form {
        match self {
            Form::Zero(a) => Form::Zero(a * k),
            Form::One(a) => Form::One(a * k),
            Form::Two(a) => Form::Two(a * k),
            Form::Three(a) => Form::Three(a * k),
        }
    }
}

pub fn wedge(a: &Form, b: &Form) -> Result<Form> {
    use Form::*;
    Ok(match (a, b) {
        (Zero(f), other) | (other, Zero(f)) => *other * *f,
        (One(u), One(w)) => Two(u.cross(w)),
        (One(u), Two(w)) | (Two(w), One(u)) => Three(u.dot(w)),
        _ => {
            return Err(Error::Grade(format!(
                "wedge of grades {} and {} exceeds 3",
                a.grade(),
                b.grade()
            )))
        }
    })
}

/// Euclidean Hodge star with orientation `dx∧dy∧dz`.
pub fn hodge(a: &Form) -> Form {
    match *a {
        Form::Zero(f) => Form::Three(f),
        Form::One(v) => Form::Two(v),
        Form::Two(v) => Form::One(v),
        Form::Three(f) => Form::Zero(f),
    }
}

/// Interior product `ι_V ω`.
pub fn contract(v: &Vec3, a: &Form) -> Result<Form> {
    Ok(match *a {
        Form::Zero(_) => return Err(Error::Grade("cannot contract a 0-form".into())),
        Form::One(w) => Form::Zero(v.dot(&w)),
        Form::Two(w) => Form::One(w.cross(v)),
        Form::Three(f) => Form::Two(v * f),
    })
}

/// Metric dual 1-form of a vector.
pub fn flat(v: &Vec3) -> Form {
    Form::One(*v)
}

/// Metric dual vector of a 1-form.
pub fn sharp(a: &Form) -> Result<Vec3> {
    match a {
        Form::One(v) => Ok(*v),
        _ => Err(Error::Grade(format!("sharp needs a 1-form, got grade {}", a.grade()))),
    }
}

/// Exterior derivative at `x` assembled from the coordinate partials of a form.
pub fn d_from_partials(p: &[Form; 3]) -> Result<Form> {
    let grade = p[0].grade();
    let vec = |f: &Form| f.vector().unwrap();
    let sc = |f: &Form| f.scalar().unwrap();
    Ok(match grade {
        0 => Form::One(Vec3::new(sc(&p[0]), sc(&p[1]), sc(&p[2]))),
        1 => {
            let (a, b, c) = (vec(&p[0]), vec(&p[1]), vec(&p[2]));
            Form::Two(Vec3::new(b.z - c.y, c.x - a.z, a.y - b.x))
        }
        2 => Form::Three(vec(&p[0]).x + vec(&p[1]).y + vec(&p[2]).z),
        _ => return Err(Error::Grade("exterior derivative of a 3-form is zero-dimensional".into())),
    })
}

pub trait FormField: Send + Sync {
    fn grade(&self) -> u8;

    fn value(&self, x: &Vec3) -> Result<Form>;

    /// Closed-form exterior derivative, when available.
    fn exact_ext_deriv(&self, _x: &Vec3) -> Option<Form> {
        None
    }

    fn domain(&self) -> Domain {
        Domain::Everywhere
    }
}

type FormClosure = Box<dyn Fn(&Vec3) -> Form + Send + Sync>;

/// Form field backed by closures.
pub struct FormFn {
    grade: u8,
    f: FormClosure,
    d: Option<FormClosure>,
    domain: Domain,
}

impl FormFn {
    pub fn new(grade: u8, f: impl Fn(&Vec3) -> Form + Send + Sync + 'static) -> Result<Self> {
        if grade > 3 {
            return Err(Error::Grade(format!("no {grade}-forms in three dimensions")));
        }
        Ok(FormFn {
            grade,
            f: Box::new(f),
            d: None,
            domain: Domain::Everywhere,
        })
    }

    pub fn with_ext_deriv(mut self, d: impl Fn(&Vec3) -> Form + Send + Sync + 'static) -> Self {
        self.d = Some(Box::new(d));
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }
}

impl FormField for FormFn {
    fn grade(&self) -> u8 {
        self.grade
    }

    fn value(&self, x: &Vec3) -> Result<Form> {
        let f = (self.f)(x);
        if f.grade() != self.grade {
            return Err(Error::Grade(format!(
                "form field declared grade {} but produced grade {}",
                self.grade,
                f.grade()
            )));
        }
        Ok(f)
    }

    fn exact_ext_deriv(&self, x: &Vec3) -> Option<Form> {
        self.d.as_ref().map(|d| d(x))
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}

/// Exterior derivative of `ω` at `x`.
pub fn ext_deriv(w: &dyn FormField, x: &Vec3, cfg: &DiffConfig) -> Result<Form> {
    if w.grade() >= 3 {
        return Err(Error::Grade("exterior derivative of a 3-form is zero-dimensional".into()));
    }
    if cfg.is_exact() {
        return w.exact_ext_deriv(x).ok_or(Error::NoExactDerivative);
    }
    let st = Stencil::new(*x, cfg)?;
    st.check(&w.domain())?;
    let vals = st.points().iter().map(|p| w.value(p)).collect::<Result<Vec<_>>>()?;
    d_from_partials(&st.partials(&vals))
}

/// The field `dω`, differentiated on demand with a fixed configuration.
pub struct ExtDeriv<F: FormField> {
    pub inner: F,
    pub cfg: DiffConfig,
}

impl<F: FormField> FormField for ExtDeriv<F> {
    fn grade(&self) -> u8 {
        self.inner.grade() + 1
    }

    fn value(&self, x: &Vec3) -> Result<Form> {
        ext_deriv(&self.inner, x, &self.cfg)
    }

    fn domain(&self) -> Domain {
        self.inner.domain()
    }
}

/// Directional derivative of a form field.
pub fn form_directional(w: &dyn FormField, x: &Vec3, dir: &Vec3, cfg: &DiffConfig) -> Result<Form> {
    if !w.domain().contains(x) {
        return Err(Error::DomainBoundary { point: arr(x) });
    }
    directional(|p| w.value(p), &w.domain(), x, dir, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    fn form() -> impl Strategy<Value = Form> {
        prop_oneof![
            (-10.0..10.0f64).prop_map(Form::Zero),
            vec3().prop_map(Form::One),
            vec3().prop_map(Form::Two),
            (-10.0..10.0f64).prop_map(Form::Three),
        ]
    }

    #[test]
    fn contraction_of_volume() {
        assert_eq!(contract(&Vec3::x(), &Form::volume()).unwrap(), Form::Two(Vec3::x()));
    }

    #[test]
    fn hodge_of_dx() {
        assert_eq!(hodge(&Form::dx()), Form::Two(Vec3::x()));
    }

    #[test]
    fn basis_wedges() {
        assert_eq!(wedge(&Form::dx(), &Form::dy()).unwrap(), Form::Two(Vec3::z()));
        assert_eq!(wedge(&Form::dz(), &Form::dx()).unwrap(), Form::Two(Vec3::y()));
        let dxdy = wedge(&Form::dx(), &Form::dy()).unwrap();
        assert_eq!(wedge(&dxdy, &Form::dz()).unwrap(), Form::volume());
    }

    #[test]
    fn grade_overflow_is_an_error() {
        let two = Form::Two(Vec3::x());
        assert!(matches!(wedge(&two, &two), Err(Error::Grade(_))));
        assert!(matches!(contract(&Vec3::x(), &Form::Zero(1.0)), Err(Error::Grade(_))));
        assert!(FormFn::new(4, |_| Form::Zero(0.0)).is_err());
    }

    #[test]
    fn d_of_x_dy() {
        let w = FormFn::new(1, |x: &Vec3| Form::One(Vec3::new(0.0, x.x, 0.0))).unwrap();
        let d = ext_deriv(&w, &Vec3::new(0.3, 0.2, 0.1), &DiffConfig::default()).unwrap();
        assert!((d - Form::Two(Vec3::z())).norm() < 1e-10);
    }

    #[test]
    fn d_of_constant_dx() {
        let w = FormFn::new(1, |_| Form::dx()).unwrap();
        let d = ext_deriv(&w, &Vec3::new(1.0, 2.0, 3.0), &DiffConfig::default()).unwrap();
        assert_eq!(d, Form::Two(Vec3::zeros()));
    }

    #[test]
    fn d_of_three_form_rejected() {
        let w = FormFn::new(3, |_| Form::volume()).unwrap();
        assert!(matches!(ext_deriv(&w, &Vec3::zeros(), &DiffConfig::default()), Err(Error::Grade(_))));
    }

    #[test]
    fn exact_backend_uses_supplied_derivative() {
        let w = FormFn::new(0, |x: &Vec3| Form::Zero(x.y))
            .unwrap()
            .with_ext_deriv(|_| Form::dy());
        assert_eq!(ext_deriv(&w, &Vec3::zeros(), &DiffConfig::exact()).unwrap(), Form::dy());
    }

    #[test]
    fn dd_vanishes_on_smooth_forms() {
        let cfg = DiffConfig::finite_difference(1e-3, 2).unwrap();
        let f0 = FormFn::new(0, |x: &Vec3| Form::Zero((x.x * x.y).sin() + x.z * x.z * x.x)).unwrap();
        let f1 = FormFn::new(1, |x: &Vec3| {
            Form::One(Vec3::new(x.y * x.z.cos(), x.x * x.x * x.z, (x.x + x.y).exp()))
        })
        .unwrap();
        let x = Vec3::new(0.4, -0.3, 0.7);
        for f in [Box::new(f0) as Box<dyn FormField>, Box::new(f1)] {
            let df = ExtDeriv { inner: BoxedForm(f), cfg };
            let ddf = ext_deriv(&df, &x, &cfg).unwrap();
            assert!(ddf.norm() <= 10.0 * cfg.h * cfg.h, "{ddf:?}");
        }
    }

    struct BoxedForm(Box<dyn FormField>);
    impl FormField for BoxedForm {
        fn grade(&self) -> u8 {
            self.0.grade()
        }
        fn value(&self, x: &Vec3) -> Result<Form> {
            self.0.value(x)
        }
    }

    #[test]
    fn flat_wedge_matches_cross_product_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let b = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let lhs = wedge(&flat(&a), &flat(&b)).unwrap();
            // componentwise cross product, written out independently of nalgebra
            let c = Vec3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x);
            let rhs = contract(&c, &Form::volume()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn wedge_graded_anticommutes(a in form(), b in form()) {
            if a.grade() + b.grade() <= 3 {
                let sign = if (a.grade() * b.grade()) % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert_eq!(wedge(&a, &b).unwrap(), wedge(&b, &a).unwrap() * sign);
            }
        }

        #[test]
        fn hodge_is_an_involution(a in form()) {
            prop_assert_eq!(hodge(&hodge(&a)), a);
        }

        #[test]
        fn contraction_is_nilpotent(v in vec3(), a in form()) {
            if a.grade() >= 2 {
                let once = contract(&v, &a).unwrap();
                let twice = contract(&v, &once).unwrap();
                prop_assert!(twice.norm() <= 1e-12 * (1.0 + v.norm_squared() * a.norm()));
            }
        }

        #[test]
        fn sharp_inverts_flat(v in vec3()) {
            prop_assert_eq!(sharp(&flat(&v)).unwrap(), v);
        }

        #[test]
        fn component_count_is_binomial(a in form()) {
            let expected = [1, 3, 3, 1][a.grade() as usize];
            prop_assert_eq!(a.components().len(), expected);
        }
    }
}
