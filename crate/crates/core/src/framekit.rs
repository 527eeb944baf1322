//! Adapted orthonormal frames `(ê₁, ê₂, ê₃)` with `ê₁ = v/‖v‖`, and their
//! structure functions `C^k_ij = ⟨[ê_i, ê_j], ê_k⟩`.

use crate::calc3::{directional, jacobian, DiffConfig, Domain, Mat3, Vec3, VectorField};
use crate::error::{arr, Error, Result};
use rayon::prelude::*;
use std::sync::Arc;

/// Below this speed the flow direction is numerically meaningless.
pub const EPS_V: f64 = 1e-10;
/// Minimum angle between the reference axis and `±ê₁`.
pub const DEGENERACY_ANGLE: f64 = 1e-3;

/// Frame at a single point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub e3: Vec3,
    /// `‖v‖` at the point.
    pub speed: f64,
}

impl Frame {
    /// 1-based access, `e(1) = ê₁`.
    pub fn e(&self, i: usize) -> Vec3 {
        match i {
            1 => self.e1,
            2 => self.e2,
            3 => self.e3,
            _ => panic!("frame index {i} out of range"),
        }
    }

    /// Columns are `ê₁, ê₂, ê₃`.
    pub fn matrix(&self) -> Mat3 {
        Mat3::from_columns(&[self.e1, self.e2, self.e3])
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.matrix();
        let g = m.transpose() * m - Mat3::identity();
        g.amax().max((self.e1.cross(&self.e2) - self.e3).amax())
    }
}

/// Coordinate axis least aligned with `e1`, offered when the reference axis degenerates.
pub fn suggest_axis(e1: &Vec3) -> Vec3 {
    let k = e1.iamin();
    let mut a = Vec3::zeros();
    a[k] = 1.0;
    a
}

/// Frame from a field value and a unit reference axis.
pub fn frame_from_value(v: &Vec3, axis: &Vec3, x: &Vec3, eps_v: f64) -> Result<Frame> {
    let speed = v.norm();
    if !(speed >= eps_v) {
        return Err(Error::VanishingField { point: arr(x), norm: speed });
    }
    let e1 = v / speed;
    let c = axis.dot(&e1);
    let w = axis - e1 * c;
    let wn = w.norm();
    // angle between the axis and the line through ê₁ below the threshold
    if !(wn >= c.abs() * DEGENERACY_ANGLE.tan()) {
        return Err(Error::FrameDegeneracy {
            point: arr(x),
            axis: arr(axis),
            angle: wn.atan2(c.abs()),
            suggested: arr(&suggest_axis(&e1)),
        });
    }
    let e2 = w / wn;
    let e3 = e1.cross(&e2);
    Ok(Frame { e1, e2, e3, speed })
}

/// Sample set over which a frame is validated.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Points(Vec<Vec3>),
    /// Uniform grid with `n[k] ≥ 2` nodes per axis, bounds inclusive.
    Grid { min: Vec3, max: Vec3, n: [usize; 3] },
}

impl Region {
    pub fn points(&self) -> Vec<Vec3> {
        match self {
            Region::Points(p) => p.clone(),
            Region::Grid { min, max, n } => {
                let mut out = Vec::with_capacity(n[0] * n[1] * n[2]);
                let coord = |k: usize, i: usize| {
                    if n[k] <= 1 {
                        min[k]
                    } else {
                        min[k] + (max[k] - min[k]) * i as f64 / (n[k] - 1) as f64
                    }
                };
                for i in 0..n[0] {
                    for j in 0..n[1] {
                        for l in 0..n[2] {
                            out.push(Vec3::new(coord(0, i), coord(1, j), coord(2, l)));
                        }
                    }
                }
                out
            }
        }
    }

    /// Box bound for stencil checks, if the region has one.
    pub fn bounds(&self) -> Option<Domain> {
        match self {
            Region::Points(_) => None,
            Region::Grid { min, max, .. } => Some(Domain::Box {
                min: arr(min),
                max: arr(max),
            }),
        }
    }
}

/// Frame field `x ↦ (ê₁, ê₂, ê₃)` built from a vector field and a fixed reference axis.
#[derive(Clone)]
pub struct AdaptedFrame {
    pub field: Arc<dyn VectorField>,
    /// Unit reference axis used for Gram–Schmidt.
    pub axis: Vec3,
    pub eps_v: f64,
    bounds: Option<Domain>,
}

impl std::fmt::Debug for AdaptedFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdaptedFrame")
            .field("axis", &self.axis)
            .field("eps_v", &self.eps_v)
            .finish()
    }
}

/// First derivatives of the frame at a point.
#[derive(Clone, Copy, Debug)]
pub struct FrameJet {
    pub frame: Frame,
    /// `d[i]` has columns `∂_k ê_{i+1}`.
    pub d: [Mat3; 3],
    /// Jacobian of `v`.
    pub dv: Mat3,
}

impl FrameJet {
    /// Directional derivative `(Dê_i) u`, 1-based `i`.
    pub fn derivative(&self, i: usize, u: &Vec3) -> Vec3 {
        self.d[i - 1] * u
    }

    pub fn div_e1(&self) -> f64 {
        self.d[0].trace()
    }
}

/// Validates `v` over `region` and returns the frame field. `axis` defaults to `+z`.
pub fn build_frame(v: Arc<dyn VectorField>, region: &Region, axis: Option<Vec3>) -> Result<AdaptedFrame> {
    let frame = AdaptedFrame::new(v, axis.unwrap_or_else(Vec3::z))?;
    let frame = AdaptedFrame {
        bounds: region.bounds(),
        ..frame
    };
    region
        .points()
        .par_iter()
        .map(|x| frame.at(x).map(|_| ()))
        .collect::<Result<Vec<()>>>()?;
    Ok(frame)
}

impl AdaptedFrame {
    /// Unvalidated frame field with the default speed threshold.
    pub fn new(v: Arc<dyn VectorField>, axis: Vec3) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument("reference axis must be a nonzero finite vector".into()));
        }
        Ok(AdaptedFrame {
            field: v,
            axis: axis / n,
            eps_v: EPS_V,
            bounds: None,
        })
    }

    pub fn at(&self, x: &Vec3) -> Result<Frame> {
        if !self.field.domain().contains(x) {
            return Err(Error::DomainBoundary { point: arr(x) });
        }
        let v = self.field.value(x)?;
        frame_from_value(&v, &self.axis, x, self.eps_v)
    }

    fn check_stencil(&self, x: &Vec3, cfg: &DiffConfig) -> Result<()> {
        if let (Some(b), false) = (self.bounds, cfg.is_exact()) {
            let reach = if cfg.order == 4 { 2.0 * cfg.h } else { cfg.h };
            for k in 0..3 {
                for sgn in [-1.0, 1.0] {
                    let mut p = *x;
                    p[k] += sgn * reach;
                    if !b.contains(&p) {
                        return Err(Error::DomainBoundary { point: arr(&p) });
                    }
                }
            }
        }
        Ok(())
    }

    /// Frame and its derivatives, by the chain rule through `Dv`.
    pub fn jet(&self, x: &Vec3, cfg: &DiffConfig) -> Result<FrameJet> {
        self.check_stencil(x, cfg)?;
        let frame = self.at(x)?;
        let dv = jacobian(self.field.as_ref(), x, cfg)?;
        Ok(jet_from(&frame, &self.axis, &dv))
    }

    /// Frame with the brackets `[ê₁, ê₂]` and `[ê₁, ê₃]`, the only ones the
    /// transport along streamlines needs.
    pub fn flow_brackets(&self, x: &Vec3, cfg: &DiffConfig) -> Result<(Frame, Vec3, Vec3)> {
        self.check_stencil(x, cfg)?;
        let frame = self.at(x)?;
        let dv = jacobian(self.field.as_ref(), x, cfg)?;
        let (b12, b13) = flow_brackets(&frame, &self.axis, &dv);
        Ok((frame, b12, b13))
    }

    /// Directly differenced frame vector `(Dê_i) u`, without the chain rule.
    pub fn differenced(&self, i: usize, x: &Vec3, u: &Vec3, cfg: &DiffConfig) -> Result<Vec3> {
        self.check_stencil(x, cfg)?;
        directional(|p| self.at(p).map(|f| f.e(i)), &self.field.domain(), x, u, cfg)
    }
}

/// Frame derivatives from the frame, the reference axis and `Dv`.
pub fn jet_from(frame: &Frame, axis: &Vec3, dv: &Mat3) -> FrameJet {
    let (e1, e2) = (frame.e1, frame.e2);
    let p1 = Mat3::identity() - e1 * e1.transpose();
    let de1 = p1 * dv / frame.speed;
    let c = axis.dot(&e1);
    let w = axis - e1 * c;
    let dw = -(e1 * (axis.transpose() * de1)) - de1 * c;
    let p2 = Mat3::identity() - e2 * e2.transpose();
    let de2 = p2 * dw / w.norm();
    let de3 = Mat3::from_fn(|r, k| {
        let col = de1.column(k).into_owned().cross(&e2) + e1.cross(&de2.column(k).into_owned());
        col[r]
    });
    FrameJet {
        frame: *frame,
        d: [de1, de2, de3],
        dv: *dv,
    }
}

/// `[ê₁, ê₂]` and `[ê₁, ê₃]` from directional derivatives alone; agrees with
/// [`bracket`] on the full jet.
pub fn flow_brackets(frame: &Frame, axis: &Vec3, dv: &Mat3) -> (Vec3, Vec3) {
    let (e1, e2, e3) = (frame.e1, frame.e2, frame.e3);
    let c = axis.dot(&e1);
    let wn = (axis - e1 * c).norm();
    let de1 = |u: &Vec3| {
        let a = dv * u;
        (a - e1 * e1.dot(&a)) / frame.speed
    };
    let de2_from = |d1: &Vec3| {
        let dw = -(e1 * axis.dot(d1)) - d1 * c;
        (dw - e2 * e2.dot(&dw)) / wn
    };
    let d1_e1 = de1(&e1);
    let d2_e1 = de2_from(&d1_e1);
    let d3_e1 = d1_e1.cross(&e2) + e1.cross(&d2_e1);
    (d2_e1 - de1(&e2), d3_e1 - de1(&e3))
}

/// `C^k_ij` for a frame at a point, stored antisymmetrically in `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureFunctions {
    /// `c[k][i][j]`, 0-based.
    c: [[[f64; 3]; 3]; 3],
}

impl StructureFunctions {
    pub fn zero() -> Self {
        StructureFunctions { c: [[[0.0; 3]; 3]; 3] }
    }

    /// Builds from the nine values `C^k_ij`, `i < j`, as a function `f(k, i, j)` (1-based).
    pub fn from_fn(f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut c = [[[0.0; 3]; 3]; 3];
        for (k, ck) in c.iter_mut().enumerate() {
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let val = f(k + 1, i + 1, j + 1);
                ck[i][j] = val;
                ck[j][i] = -val;
            }
        }
        StructureFunctions { c }
    }

    /// `C^k_ij`, 1-based.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.c[k - 1][i - 1][j - 1]
    }

    /// The nine independent values `(k, i, j, C^k_ij)` with `i < j`.
    pub fn independent(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::with_capacity(9);
        for k in 1..=3 {
            for (i, j) in [(1, 2), (1, 3), (2, 3)] {
                out.push((k, i, j, self.get(k, i, j)));
            }
        }
        out
    }

    /// `[ê_i, ê_j]` rebuilt as `C^k_ij ê_k`.
    pub fn bracket(&self, frame: &Frame, i: usize, j: usize) -> Vec3 {
        (1..=3).map(|k| frame.e(k) * self.get(k, i, j)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Lie bracket `[ê_i, ê_j] = (Dê_j)ê_i − (Dê_i)ê_j` from a jet.
pub fn bracket(jet: &FrameJet, i: usize, j: usize) -> Vec3 {
    let f = &jet.frame;
    jet.derivative(j, &f.e(i)) - jet.derivative(i, &f.e(j))
}

pub fn structure_from_jet(jet: &FrameJet) -> StructureFunctions {
    let brackets = [bracket(jet, 1, 2), bracket(jet, 1, 3), bracket(jet, 2, 3)];
    StructureFunctions::from_fn(|k, i, j| {
        let b = match (i, j) {
            (1, 2) => brackets[0],
            (1, 3) => brackets[1],
            _ => brackets[2],
        };
        b.dot(&jet.frame.e(k))
    })
}

pub fn structure_functions(frame: &AdaptedFrame, x: &Vec3, cfg: &DiffConfig) -> Result<StructureFunctions> {
    Ok(structure_from_jet(&frame.jet(x, cfg)?))
}

/// Bracket computed by differencing the frame vectors themselves.
pub fn bracket_differenced(frame: &AdaptedFrame, i: usize, j: usize, x: &Vec3, cfg: &DiffConfig) -> Result<Vec3> {
    let f = frame.at(x)?;
    Ok(frame.differenced(j, x, &f.e(i), cfg)? - frame.differenced(i, x, &f.e(j), cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calc3::VectorFn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(dir: Vec3) -> Arc<dyn VectorField> {
        Arc::new(VectorFn::new(move |_| dir).with_jacobian(|_| Mat3::zeros()))
    }

    fn radial_planar() -> Arc<dyn VectorField> {
        Arc::new(VectorFn::new(|x: &Vec3| Vec3::new(x.x, x.y, 0.0)))
    }

    fn wobbly() -> Arc<dyn VectorField> {
        Arc::new(VectorFn::new(|x: &Vec3| {
            Vec3::new(1.5 + (x.y * x.z).sin(), 0.4 * x.x.cos() + 0.2 * x.z, 0.3 * (x.x + x.y).sin())
        }))
    }

    #[test]
    fn flow_brackets_match_full_jet() {
        let fr = AdaptedFrame::new(wobbly(), Vec3::new(0.2, 0.3, 1.0)).unwrap();
        let cfg = DiffConfig::default();
        for x in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.4, 0.7, 0.05)] {
            let jet = fr.jet(&x, &cfg).unwrap();
            let (_, b12, b13) = fr.flow_brackets(&x, &cfg).unwrap();
            assert!((b12 - bracket(&jet, 1, 2)).amax() < 1e-12);
            assert!((b13 - bracket(&jet, 1, 3)).amax() < 1e-12);
        }
    }

    #[test]
    fn constant_field_frame() {
        let fr = AdaptedFrame::new(constant(Vec3::x()), Vec3::z()).unwrap();
        let f = fr.at(&Vec3::zeros()).unwrap();
        assert_eq!(f.e1, Vec3::x());
        assert_eq!(f.e2, Vec3::z());
        assert_eq!(f.e3, -Vec3::y());
        assert_eq!(f.e1.dot(&f.e2.cross(&f.e3)), 1.0);
    }

    #[test]
    fn vanishing_field_is_an_error() {
        let region = Region::Points(vec![Vec3::zeros()]);
        let err = build_frame(constant(Vec3::zeros()), &region, None).unwrap_err();
        assert!(matches!(err, Error::VanishingField { .. }));
    }

    #[test]
    fn degenerate_axis_suggests_alternative() {
        let region = Region::Points(vec![Vec3::zeros()]);
        let err = build_frame(constant(Vec3::new(0.0, 1e-5, 1.0)), &region, None).unwrap_err();
        match err {
            Error::FrameDegeneracy { suggested, .. } => assert_eq!(suggested, [1.0, 0.0, 0.0]),
            e => panic!("unexpected {e:?}"),
        }
        assert!(build_frame(constant(Vec3::new(0.0, 1e-5, 1.0)), &region, Some(Vec3::x())).is_ok());
    }

    #[test]
    fn orthonormal_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..1000)
            .map(|_| Vec3::from_fn(|_, _| rng.gen_range(-2.0..2.0)))
            .collect();
        let fr = build_frame(wobbly(), &Region::Points(pts.clone()), Some(Vec3::z())).unwrap();
        for p in &pts {
            let f = fr.at(p).unwrap();
            assert!(f.orthonormality_defect() <= 1e-10);
            let v = fr.field.value(p).unwrap();
            assert!((f.e1 - v / v.norm()).amax() <= 1e-15);
        }
    }

    #[test]
    fn constant_frame_has_no_structure() {
        let fr = AdaptedFrame::new(constant(Vec3::new(1.0, 2.0, 3.0)), Vec3::z()).unwrap();
        let c = structure_functions(&fr, &Vec3::new(0.1, 0.2, 0.3), &DiffConfig::default()).unwrap();
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn antisymmetry_is_exact() {
        let fr = AdaptedFrame::new(wobbly(), Vec3::z()).unwrap();
        let c = structure_functions(&fr, &Vec3::new(0.3, -0.2, 0.5), &DiffConfig::default()).unwrap();
        for k in 1..=3 {
            for i in 1..=3 {
                for j in 1..=3 {
                    assert_eq!(c.get(k, i, j) + c.get(k, j, i), 0.0);
                }
            }
        }
    }

    /// Frame for `(x, y, 0)` with axis `z` is `(e_r, e_z, −e_θ)`; in cylindrical
    /// coordinates `[e_r, e_θ] = −e_θ / r` and every other bracket vanishes, so
    /// `C³₁₃ = −1/r` and `C³₃₁ = 1/r` are the only nonzero entries.
    #[test]
    fn cylindrical_oracle() {
        let fr = AdaptedFrame::new(radial_planar(), Vec3::z()).unwrap();
        let cfg = DiffConfig::finite_difference(1e-4, 2).unwrap();
        for (r, th, z) in [(1.0, 0.3, 0.0), (2.5, 2.0, 1.0), (0.7, -1.1, -0.4)] {
            let x = Vec3::new(r * f64::cos(th), r * f64::sin(th), z);
            let c = structure_functions(&fr, &x, &cfg).unwrap();
            for (k, i, j, val) in c.independent() {
                let expected = if (k, i, j) == (3, 1, 3) { -1.0 / r } else { 0.0 };
                assert!((val - expected).abs() < 1e-7, "C^{k}_{i}{j} = {val}, want {expected}");
            }
            assert!((c.get(3, 3, 1) - 1.0 / r).abs() < 1e-7);
        }
    }

    #[test]
    fn exact_jacobian_matches_differences() {
        let v: Arc<dyn VectorField> = Arc::new(
            VectorFn::new(|x: &Vec3| Vec3::new(1.0 + x.y * x.y, x.z.sin(), 0.5 * x.x))
                .with_jacobian(|x: &Vec3| {
                    Mat3::new(0.0, 2.0 * x.y, 0.0, 0.0, 0.0, x.z.cos(), 0.5, 0.0, 0.0)
                }),
        );
        let fr = AdaptedFrame::new(v, Vec3::z()).unwrap();
        let x = Vec3::new(0.2, 0.4, -0.3);
        let a = structure_functions(&fr, &x, &DiffConfig::exact()).unwrap();
        let b = structure_functions(&fr, &x, &DiffConfig::default()).unwrap();
        for ((_, _, _, p), (_, _, _, q)) in a.independent().into_iter().zip(b.independent()) {
            assert!((p - q).abs() < 1e-7);
        }
    }

    #[test]
    fn reconstructed_bracket_matches_differenced_bracket() {
        let fr = AdaptedFrame::new(wobbly(), Vec3::z()).unwrap();
        let cfg = DiffConfig::finite_difference(1e-3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let c = structure_functions(&fr, &x, &cfg).unwrap();
            let f = fr.at(&x).unwrap();
            for (i, j) in [(1, 2), (1, 3), (2, 3)] {
                let direct = bracket_differenced(&fr, i, j, &x, &cfg).unwrap();
                assert!((c.bracket(&f, i, j) - direct).amax() <= 10.0 * cfg.h * cfg.h);
            }
        }
    }

    #[test]
    fn frames_are_deterministic() {
        let fr = AdaptedFrame::new(wobbly(), Vec3::z()).unwrap();
        let x = Vec3::new(0.11, 0.22, 0.33);
        let cfg = DiffConfig::default();
        let a = fr.jet(&x, &cfg).unwrap();
        let b = fr.jet(&x, &cfg).unwrap();
        assert_eq!(a.frame, b.frame);
        assert_eq!(a.d, b.d);
    }

    #[test]
    fn grid_region_bounds_stencils() {
        let region = Region::Grid {
            min: Vec3::new(0.0, 0.0, 0.0),
            max: Vec3::new(1.0, 1.0, 1.0),
            n: [3, 3, 3],
        };
        assert_eq!(region.points().len(), 27);
        let fr = build_frame(wobbly(), &region, None).unwrap();
        let err = structure_functions(&fr, &Vec3::new(0.0, 0.5, 0.5), &DiffConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DomainBoundary { .. }));
    }
}
