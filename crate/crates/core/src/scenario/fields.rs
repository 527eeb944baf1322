//! Named analytic vector fields.

use crate::calc3::{Domain, Mat3, Vec3, VectorField, VectorFn};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

fn one() -> f64 {
    1.0
}

fn x_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn core_radius() -> f64 {
    1e-3
}

fn rotation_eps() -> f64 {
    0.3
}

fn shear_rate() -> f64 {
    0.5
}

fn pair_a() -> f64 {
    0.3
}

fn pair_b() -> f64 {
    0.2
}

fn pair_eps() -> f64 {
    0.4
}

fn pair_delta() -> f64 {
    0.5
}

/// A field from the registry with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `v ≡ direction`.
    Constant {
        #[serde(default = "x_axis")]
        direction: [f64; 3],
    },
    /// `v = (x − c)/‖x − c‖`, undefined within `core_radius` of `c`.
    Radial {
        #[serde(default)]
        center: [f64; 3],
        #[serde(default = "core_radius")]
        core_radius: f64,
    },
    /// `v = (−ωy, ωx, ε)`.
    Rotation {
        #[serde(default = "one")]
        omega: f64,
        #[serde(default = "rotation_eps")]
        epsilon: f64,
    },
    /// `v = (1 + k y, 0, 1)`.
    Shear {
        #[serde(default = "shear_rate")]
        rate: f64,
    },
    /// `v = (A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)`.
    Abc {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "one")]
        c: f64,
    },
    /// `v = (sin kz, cos kz, 0)`, with `∇×v = k v`.
    Beltrami {
        #[serde(default = "one")]
        k: f64,
    },
    /// `v = f ∇h₁×∇h₂` on the `2π`-periodic box, with `f = exp(a sin(x+2y) + b cos z)`,
    /// `h₁ = z + ε sin x`, `h₂ = y − δ cos z`. It carries the global compatible
    /// pair `J_i = f∇h_i` with `H₁ = −h₁`, `H₂ = h₂`.
    PeriodicPair {
        #[serde(default = "pair_a")]
        a: f64,
        #[serde(default = "pair_b")]
        b: f64,
        #[serde(default = "pair_eps")]
        epsilon: f64,
        #[serde(default = "pair_delta")]
        delta: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegistryEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub defaults: FieldSpec,
}

pub fn registry() -> Vec<RegistryEntry> {
    let d = |name: &str| FieldSpec::from_name(name).expect("registered name");
    vec![
        RegistryEntry { name: "constant", description: "uniform flow; a global frame and pair exist", defaults: d("constant") },
        RegistryEntry { name: "radial", description: "unit radial flow on space minus a point", defaults: d("radial") },
        RegistryEntry { name: "rotation", description: "rigid rotation about z with axial drift", defaults: d("rotation") },
        RegistryEntry { name: "shear", description: "linear shear with a constant cross flow", defaults: d("shear") },
        RegistryEntry { name: "abc", description: "Arnold-Beltrami-Childress flow", defaults: d("abc") },
        RegistryEntry { name: "beltrami", description: "helical Beltrami flow on the periodic box", defaults: d("beltrami") },
        RegistryEntry { name: "periodic-pair", description: "periodic flow with a known global compatible pair", defaults: d("periodic-pair") },
    ]
}

impl FieldSpec {
    /// The field with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::json!({ "name": name }))
            .map_err(|_| Error::Scenario(format!("unknown field {name:?}; see the registry for known names")))
    }

    /// Accepts either a bare name or an object with `name` and parameters.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => Self::from_name(s),
            other => serde_json::from_value(other.clone()).map_err(|e| Error::Scenario(format!("bad field specification: {e}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FieldSpec::Constant { .. } => "constant",
            FieldSpec::Radial { .. } => "radial",
            FieldSpec::Rotation { .. } => "rotation",
            FieldSpec::Shear { .. } => "shear",
            FieldSpec::Abc { .. } => "abc",
            FieldSpec::Beltrami { .. } => "beltrami",
            FieldSpec::PeriodicPair { .. } => "periodic-pair",
        }
    }

    /// Reference axis used when the scenario does not give one. For the
    /// constant field it is chosen so that the default pair is `J₁ = ŷ`, `J₂ = ŷ + ẑ`.
    pub fn default_axis(&self) -> Vec3 {
        match self {
            FieldSpec::Constant { direction } => {
                let d = Vec3::from(*direction).normalize();
                if d.y.abs() < 0.9 {
                    Vec3::y()
                } else {
                    Vec3::z()
                }
            }
            _ => Vec3::z(),
        }
    }

    /// Period of the box on which the field is periodic, if any.
    pub fn period(&self) -> Option<[f64; 3]> {
        let tau = std::f64::consts::TAU;
        match *self {
            FieldSpec::Constant { .. } => Some([1.0; 3]),
            FieldSpec::Abc { .. } | FieldSpec::PeriodicPair { .. } => Some([tau; 3]),
            FieldSpec::Beltrami { k } => Some([1.0, 1.0, tau / k.abs()]),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        match *self {
            FieldSpec::Constant { direction } if Vec3::from(direction).norm() == 0.0 => bad("constant direction must be nonzero".into()),
            FieldSpec::Radial { core_radius, .. } if !(core_radius > 0.0) => bad("radial core_radius must be positive".into()),
            FieldSpec::Rotation { epsilon: 0.0, .. } => bad("rotation epsilon must be nonzero so the field does not vanish on the axis".into()),
            FieldSpec::Beltrami { k: 0.0 } => bad("beltrami k must be nonzero".into()),
            _ => Ok(()),
        }
    }

    /// The vector field with its exact Jacobian.
    pub fn build(&self) -> Result<Arc<dyn VectorField>> {
        self.validate()?;
        let f: VectorFn = match *self {
            FieldSpec::Constant { direction } => {
                let d = Vec3::from(direction);
                VectorFn::new(move |_| d).with_jacobian(|_| Mat3::zeros())
            }
            FieldSpec::Radial { center, core_radius } => {
                let c = Vec3::from(center);
                VectorFn::new(move |x: &Vec3| (x - c) / (x - c).norm())
                    .with_jacobian(move |x: &Vec3| {
                        let r = (x - c).norm();
                        let u = (x - c) / r;
                        (Mat3::identity() - u * u.transpose()) / r
                    })
                    .with_domain(Domain::Punctured { center, radius: core_radius })
            }
            FieldSpec::Rotation { omega, epsilon } => VectorFn::new(move |x: &Vec3| Vec3::new(-omega * x.y, omega * x.x, epsilon))
                .with_jacobian(move |_| Mat3::new(0.0, -omega, 0.0, omega, 0.0, 0.0, 0.0, 0.0, 0.0)),
            FieldSpec::Shear { rate } => VectorFn::new(move |x: &Vec3| Vec3::new(1.0 + rate * x.y, 0.0, 1.0))
                .with_jacobian(move |_| Mat3::new(0.0, rate, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
            FieldSpec::Abc { a, b, c } => VectorFn::new(move |x: &Vec3| {
                Vec3::new(a * x.z.sin() + c * x.y.cos(), b * x.x.sin() + a * x.z.cos(), c * x.y.sin() + b * x.x.cos())
            })
            .with_jacobian(move |x: &Vec3| {
                Mat3::new(
                    0.0,
                    -c * x.y.sin(),
                    a * x.z.cos(),
                    b * x.x.cos(),
                    0.0,
                    -a * x.z.sin(),
                    -b * x.x.sin(),
                    c * x.y.cos(),
                    0.0,
                )
            }),
            FieldSpec::Beltrami { k } => VectorFn::new(move |x: &Vec3| Vec3::new((k * x.z).sin(), (k * x.z).cos(), 0.0))
                .with_jacobian(move |x: &Vec3| Mat3::new(0.0, 0.0, k * (k * x.z).cos(), 0.0, 0.0, -k * (k * x.z).sin(), 0.0, 0.0, 0.0)),
            FieldSpec::PeriodicPair { a, b, epsilon, delta } => {
                let p = PeriodicPair { a, b, epsilon, delta };
                VectorFn::new(move |x: &Vec3| p.n(x) * p.f(x)).with_jacobian(move |x: &Vec3| p.n(x) * p.grad_f(x).transpose() + p.dn(x) * p.f(x))
            }
        };
        Ok(Arc::new(f))
    }

    /// A global Poisson pair for the field, when one is known in closed form.
    pub fn analytic_pair(&self, axis: &Vec3) -> Option<(Arc<dyn VectorField>, Arc<dyn VectorField>)> {
        match *self {
            FieldSpec::Constant { direction } => {
                let e1 = Vec3::from(direction).normalize();
                let e2 = (axis - e1 * axis.dot(&e1)).try_normalize(1e-12)?;
                let e3 = e1.cross(&e2);
                let j1 = VectorFn::new(move |_| e2).with_jacobian(|_| Mat3::zeros());
                let j2 = VectorFn::new(move |_| e2 + e3).with_jacobian(|_| Mat3::zeros());
                Some((Arc::new(j1), Arc::new(j2)))
            }
            FieldSpec::PeriodicPair { a, b, epsilon, delta } => {
                let p = PeriodicPair { a, b, epsilon, delta };
                let j1 = VectorFn::new(move |x: &Vec3| p.grad_h1(x) * p.f(x));
                let j2 = VectorFn::new(move |x: &Vec3| p.grad_h2(x) * p.f(x));
                Some((Arc::new(j1), Arc::new(j2)))
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct PeriodicPair {
    a: f64,
    b: f64,
    epsilon: f64,
    delta: f64,
}

impl PeriodicPair {
    fn f(&self, x: &Vec3) -> f64 {
        (self.a * (x.x + 2.0 * x.y).sin() + self.b * x.z.cos()).exp()
    }

    fn grad_f(&self, x: &Vec3) -> Vec3 {
        let c = self.a * (x.x + 2.0 * x.y).cos();
        Vec3::new(c, 2.0 * c, -self.b * x.z.sin()) * self.f(x)
    }

    fn grad_h1(&self, x: &Vec3) -> Vec3 {
        Vec3::new(self.epsilon * x.x.cos(), 0.0, 1.0)
    }

    fn grad_h2(&self, x: &Vec3) -> Vec3 {
        Vec3::new(0.0, 1.0, self.delta * x.z.sin())
    }

    fn n(&self, x: &Vec3) -> Vec3 {
        self.grad_h1(x).cross(&self.grad_h2(x))
    }

    fn dn(&self, x: &Vec3) -> Mat3 {
        let (e, d) = (self.epsilon, self.delta);
        Mat3::new(
            0.0,
            0.0,
            0.0,
            e * d * x.x.sin() * x.z.sin(),
            0.0,
            -e * d * x.x.cos() * x.z.cos(),
            -e * x.x.sin(),
            0.0,
            0.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemble::{bihamiltonian_residual, compatibility_residual_vec, jacobi_residual};
    use crate::calc3::{jacobian, DiffConfig, ScalarFn};

    #[test]
    fn registry_lookup() {
        let names: Vec<_> = registry().iter().map(|e| e.name).collect();
        assert_eq!(names, ["constant", "radial", "rotation", "shear", "abc", "beltrami", "periodic-pair"]);
        for e in registry() {
            assert_eq!(e.defaults.name(), e.name);
            e.defaults.build().unwrap();
        }
        assert!(FieldSpec::from_name("nope").is_err());
        let c = FieldSpec::from_json(&serde_json::json!("constant")).unwrap();
        assert_eq!(c, FieldSpec::Constant { direction: [1.0, 0.0, 0.0] });
        let v = c.build().unwrap();
        assert_eq!(v.value(&Vec3::new(3.0, -2.0, 1.0)).unwrap(), Vec3::x());
        let abc = FieldSpec::from_json(&serde_json::json!({"name": "abc"})).unwrap();
        assert_eq!(abc, FieldSpec::Abc { a: 1.0, b: 1.0, c: 1.0 });
        assert!(FieldSpec::from_json(&serde_json::json!({"name": "abc", "d": 1.0})).is_err());
    }

    #[test]
    fn radial_field() {
        let v = FieldSpec::from_name("radial").unwrap().build().unwrap();
        let x = Vec3::new(0.0, 3.0, 4.0);
        assert!((v.value(&x).unwrap() - x / 5.0).norm() <= 1e-15);
        assert!(!v.domain().contains(&Vec3::new(1e-4, 0.0, 0.0)));
    }

    #[test]
    fn exact_jacobians_match_differences() {
        let cfg = DiffConfig::finite_difference(1e-4, 4).unwrap();
        let x = Vec3::new(0.7, -0.4, 1.3);
        for e in registry() {
            let v = e.defaults.build().unwrap();
            let exact = v.exact_jacobian(&x).unwrap();
            let fd = jacobian(v.as_ref(), &x, &cfg).unwrap();
            assert!((exact - fd).amax() <= 1e-10, "{}", e.name);
        }
    }

    #[test]
    fn periodic_pair_is_bihamiltonian() {
        let spec = FieldSpec::from_name("periodic-pair").unwrap();
        let v = spec.build().unwrap();
        let (j1, j2) = spec.analytic_pair(&Vec3::z()).unwrap();
        let cfg = DiffConfig::finite_difference(1e-4, 4).unwrap();
        let h1 = ScalarFn::new(|x: &Vec3| -(x.z + 0.4 * x.x.sin()));
        let h2 = ScalarFn::new(|x: &Vec3| x.y - 0.5 * x.z.cos());
        for x in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(4.0, -1.0, 2.5)] {
            assert!(jacobi_residual(j1.as_ref(), &x, &cfg).unwrap().raw.abs() <= 1e-9);
            assert!(jacobi_residual(j2.as_ref(), &x, &cfg).unwrap().raw.abs() <= 1e-9);
            assert!(compatibility_residual_vec(j1.as_ref(), j2.as_ref(), &x, &cfg).unwrap().abs() <= 1e-9);
            let (r1, r2) = bihamiltonian_residual(v.as_ref(), j1.as_ref(), j2.as_ref(), &h1, &h2, &x, &cfg).unwrap();
            assert!(r1 <= 1e-9 && r2 <= 1e-9);
        }
    }

    #[test]
    fn beltrami_is_an_eigenfield_of_curl() {
        let v = FieldSpec::Beltrami { k: 2.0 }.build().unwrap();
        let x = Vec3::new(0.3, 0.1, 0.9);
        let c = crate::calc3::curl(v.as_ref(), &x, &DiffConfig::exact()).unwrap();
        assert!((c - v.value(&x).unwrap() * 2.0).norm() <= 1e-12);
    }
}
