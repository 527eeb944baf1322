use super::{Mat3, Vec3};
use crate::error::Result;
use serde::{Deserialize, Serialize};

/// Chart domain on which a field may be evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Domain {
    #[default]
    Everywhere,
    /// Closed axis-aligned box.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Everything except an open ball.
    Punctured { center: [f64; 3], radius: f64 },
}

impl Domain {
    pub fn contains(&self, x: &Vec3) -> bool {
        if !(x.x.is_finite() && x.y.is_finite() && x.z.is_finite()) {
            return false;
        }
        match self {
            Domain::Everywhere => true,
            Domain::Box { min, max } => (0..3).all(|k| x[k] >= min[k] && x[k] <= max[k]),
            Domain::Punctured { center, radius } => {
                (x - Vec3::from(*center)).norm() >= *radius
            }
        }
    }
}

pub trait ScalarField: Send + Sync {
    fn value(&self, x: &Vec3) -> Result<f64>;

    fn exact_gradient(&self, _x: &Vec3) -> Option<Vec3> {
        None
    }

    fn domain(&self) -> Domain {
        Domain::Everywhere
    }
}

pub trait VectorField: Send + Sync {
    fn value(&self, x: &Vec3) -> Result<Vec3>;

    /// `J[i][j] = ∂V_i/∂x_j`, when known in closed form.
    fn exact_jacobian(&self, _x: &Vec3) -> Option<Mat3> {
        None
    }

    fn domain(&self) -> Domain {
        Domain::Everywhere
    }
}

type ScalarClosure = Box<dyn Fn(&Vec3) -> f64 + Send + Sync>;
type VectorClosure = Box<dyn Fn(&Vec3) -> Vec3 + Send + Sync>;
type MatrixClosure = Box<dyn Fn(&Vec3) -> Mat3 + Send + Sync>;

/// Scalar field backed by closures.
pub struct ScalarFn {
    f: ScalarClosure,
    gradient: Option<VectorClosure>,
    domain: Domain,
}

impl ScalarFn {
    pub fn new(f: impl Fn(&Vec3) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn {
            f: Box::new(f),
            gradient: None,
            domain: Domain::Everywhere,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }
}

impl ScalarField for ScalarFn {
    fn value(&self, x: &Vec3) -> Result<f64> {
        Ok((self.f)(x))
    }

    fn exact_gradient(&self, x: &Vec3) -> Option<Vec3> {
        self.gradient.as_ref().map(|g| g(x))
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}

/// Vector field backed by closures.
pub struct VectorFn {
    f: VectorClosure,
    jacobian: Option<MatrixClosure>,
    domain: Domain,
}

impl VectorFn {
    pub fn new(f: impl Fn(&Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        VectorFn {
            f: Box::new(f),
            jacobian: None,
            domain: Domain::Everywhere,
        }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&Vec3) -> Mat3 + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Box::new(j));
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }
}

impl VectorField for VectorFn {
    fn value(&self, x: &Vec3) -> Result<Vec3> {
        Ok((self.f)(x))
    }

    fn exact_jacobian(&self, x: &Vec3) -> Option<Mat3> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}

impl<T: VectorField + ?Sized> VectorField for std::sync::Arc<T> {
    fn value(&self, x: &Vec3) -> Result<Vec3> {
        (**self).value(x)
    }
    fn exact_jacobian(&self, x: &Vec3) -> Option<Mat3> {
        (**self).exact_jacobian(x)
    }
    fn domain(&self) -> Domain {
        (**self).domain()
    }
}

impl<T: ScalarField + ?Sized> ScalarField for std::sync::Arc<T> {
    fn value(&self, x: &Vec3) -> Result<f64> {
        (**self).value(x)
    }
    fn exact_gradient(&self, x: &Vec3) -> Option<Vec3> {
        (**self).exact_gradient(x)
    }
    fn domain(&self) -> Domain {
        (**self).domain()
    }
}
