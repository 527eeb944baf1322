//! Scenario files, reports, and the three batch runs.

mod fields;
mod report;
mod run;

pub use fields::{registry, FieldSpec, RegistryEntry};
pub use report::{exit_code, ChernProbeReport, BottProbeReport, Check, ConvergenceRow, ConvergenceTable, ErrorInfo, FaultReport, ObstructionReport, Provenance, Report, RunKind};
pub use run::{run_construct, run_convergence, run_obstruct, sample_points, write_samples, ConstructOutput};

use crate::assemble::{Fault, InitialData, PhiConvention, Seeding};
use crate::bundle::{PeriodicBox, TriangulatedSurface};
use crate::calc3::{DiffConfig, Vec3};
use crate::error::{Error, Result};
use crate::flowline::TubeParams;
use serde::{Deserialize, Deserializer, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

fn default_base() -> [f64; 3] {
    [0.1, 0.2, 0.3]
}

fn deserialize_field<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<FieldSpec, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    FieldSpec::from_json(&v).map_err(serde::de::Error::custom)
}

/// A batch run description. Every key except `field` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(deserialize_with = "deserialize_field")]
    pub field: FieldSpec,
    #[serde(default = "default_base")]
    pub base: [f64; 3],
    /// Reference axis for the frame; defaults per field.
    #[serde(default)]
    pub reference_axis: Option<[f64; 3]>,
    #[serde(default)]
    pub tube: TubeParams,
    #[serde(default)]
    pub diff: DiffConfig,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub seeding: Seeding,
    #[serde(default)]
    pub convention: PhiConvention,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub probes: Probes,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    /// Faults injected into copies of the evaluated stencils; each must be detected.
    #[serde(default)]
    pub faults: Vec<Fault>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    /// Use every `seed_stride`-th seed.
    pub seed_stride: usize,
    /// Evaluation nodes per streamline, evenly spaced over `[0, L]`.
    pub nodes_per_line: usize,
    /// Points on the outer ring used for the path-independence check.
    pub path_points: usize,
    /// Chord segments on the second integration path.
    pub path_segments: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { seed_stride: 1, nodes_per_line: 5, path_points: 4, path_segments: 16 }
    }
}

/// Tolerance table. Residuals driven by discretization use
/// `discretization_factor·(Δs⁴ + h²) + floor`; the rest are fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub discretization_factor: f64,
    pub floor: f64,
    pub transversality: f64,
    /// Lower bound on `‖J₁×J₂‖/(‖J₁‖‖J₂‖)`.
    pub independence_min: f64,
    pub path_independence: f64,
    /// Lower bound on the normalized Jacobi residual of `J₁ + sJ₂`.
    pub dilatation_arclength_min: f64,
    /// A fault counts as detected when some residual exceeds this multiple of its tolerance.
    pub fault_factor: f64,
    /// Largest `|real − integer|` accepted from the Chern probe.
    pub chern_defect: f64,
    /// Per-residual overrides by report key.
    pub overrides: BTreeMap<String, f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            discretization_factor: 50.0,
            floor: 1e-10,
            transversality: 1e-10,
            independence_min: 1e-6,
            path_independence: 1e-7,
            dilatation_arclength_min: 0.1,
            fault_factor: 10.0,
            chern_defect: 1e-3,
            overrides: BTreeMap::new(),
        }
    }
}

impl Tolerances {
    pub fn discretization(&self, ds: f64, h: f64) -> f64 {
        self.discretization_factor * (ds.powi(4) + h * h) + self.floor
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.discretization_factor,
            self.floor,
            self.transversality,
            self.independence_min,
            self.path_independence,
            self.dilatation_arclength_min,
            self.fault_factor,
            self.chern_defect,
        ];
        if all.iter().chain(self.overrides.values()).any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Scenario("all tolerances must be positive and finite".into()));
        }
        Ok(())
    }

    /// Multiplies every upper-bound tolerance by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Tolerances {
            discretization_factor: self.discretization_factor * k,
            floor: self.floor * k,
            transversality: self.transversality * k,
            path_independence: self.path_independence * k,
            chern_defect: self.chern_defect * k,
            overrides: self.overrides.iter().map(|(n, t)| (n.clone(), t * k)).collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Icosphere {
        #[serde(default = "default_level")]
        level: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    Torus {
        #[serde(default = "default_major")]
        major: f64,
        #[serde(default = "default_minor")]
        minor: f64,
        #[serde(default = "default_nu")]
        nu: usize,
        #[serde(default = "default_nv")]
        nv: usize,
    },
    /// An OFF or OBJ file, relative to the scenario file.
    File { path: String },
}

fn default_level() -> usize {
    4
}

fn default_radius() -> f64 {
    1.0
}

fn default_major() -> f64 {
    2.0
}

fn default_minor() -> f64 {
    0.5
}

fn default_nu() -> usize {
    48
}

fn default_nv() -> usize {
    24
}

impl SurfaceSpec {
    pub fn build(&self, dir: Option<&Path>) -> Result<TriangulatedSurface> {
        match self {
            SurfaceSpec::Icosphere { level, radius, center } => {
                if !(*radius > 0.0) || *level > 7 {
                    return Err(Error::Scenario(format!("icosphere needs radius > 0 and level ≤ 7, got {radius}, {level}")));
                }
                Ok(TriangulatedSurface::icosphere(*level, *radius, Vec3::from(*center)))
            }
            SurfaceSpec::Torus { major, minor, nu, nv } => TriangulatedSurface::torus(*major, *minor, *nu, *nv),
            SurfaceSpec::File { path } => {
                let p = Path::new(path);
                let full = match dir {
                    Some(d) if p.is_relative() => d.join(p),
                    _ => p.to_path_buf(),
                };
                TriangulatedSurface::load(&full)
            }
        }
    }

    /// The same surface one subdivision finer, when that is defined.
    pub fn refined(&self, surface: &TriangulatedSurface) -> TriangulatedSurface {
        match *self {
            SurfaceSpec::Icosphere { level, radius, center } => TriangulatedSurface::icosphere(level + 1, radius, Vec3::from(center)),
            SurfaceSpec::Torus { major, minor, nu, nv } => {
                TriangulatedSurface::torus(major, minor, 2 * nu, 2 * nv).expect("parameters validated by the coarse mesh")
            }
            SurfaceSpec::File { .. } => surface.subdivide(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChernProbe {
    /// Defaults per field: the unit icosphere about the radial center, a torus
    /// around the rotation axis, the unit icosphere about the base otherwise.
    pub surface: Option<SurfaceSpec>,
    /// Repeat on the refined surface and require the same integer.
    pub check_refinement: bool,
    pub expect: Option<i64>,
}

impl Default for ChernProbe {
    fn default() -> Self {
        ChernProbe { surface: None, check_refinement: true, expect: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BottProbe {
    /// Defaults to the field's period.
    pub domain: Option<PeriodicBox>,
    /// Cells per side, even.
    pub n: usize,
    pub diff: DiffConfig,
}

impl Default for BottProbe {
    fn default() -> Self {
        BottProbe { domain: None, n: 16, diff: DiffConfig { h: 1e-3, order: 4, ..DiffConfig::default() } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Probes {
    pub chern: Option<ChernProbe>,
    pub bott: Option<BottProbe>,
}

impl Default for Probes {
    fn default() -> Self {
        Probes { chern: Some(ChernProbe::default()), bott: Some(BottProbe::default()) }
    }
}

/// Joint refinement schedule: level `k` uses `start·ratio^k` for `Δs`, `h` and `r_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub ds: f64,
    pub h: f64,
    pub radius: f64,
    pub ratio: f64,
    /// Lower bound on the fitted slope of each residual.
    pub min_slope: f64,
    /// Residuals whose finest value is below this are reported as at round-off.
    pub roundoff: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig { ds: 8e-3, h: 4e-3, radius: 0.1, ratio: 0.5, min_slope: 1.9, roundoff: 1e-12 }
    }
}

impl Scenario {
    /// Minimal scenario for a named field.
    pub fn for_field(name: &str) -> Result<Self> {
        Self::from_json_str(&format!("{{\"field\": {}}}", serde_json::Value::String(name.into())))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s).map_err(|e| Error::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.tube.validate()?;
        self.diff.validate()?;
        self.tolerances.validate()?;
        if let Some(a) = self.reference_axis {
            if Vec3::from(a).norm() == 0.0 {
                return Err(Error::Scenario("reference_axis must be nonzero".into()));
            }
        }
        if self.sampling.seed_stride == 0 || self.sampling.nodes_per_line == 0 || self.sampling.path_segments < 2 {
            return Err(Error::Scenario("sampling counts must be positive, with at least two path segments".into()));
        }
        let c = &self.convergence;
        if !(c.ds > 0.0 && c.h > 0.0 && c.radius > 0.0 && c.ratio > 0.0 && c.ratio < 1.0) {
            return Err(Error::Scenario("convergence schedule needs positive starts and 0 < ratio < 1".into()));
        }
        Ok(())
    }

    pub fn axis(&self) -> Vec3 {
        self.reference_axis.map(Vec3::from).unwrap_or_else(|| self.field.default_axis())
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.field.name().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_json_str(r#"{"field": "abc"}"#).unwrap();
        assert_eq!(s.tube, TubeParams::default());
        assert_eq!(s.diff, DiffConfig::default());
        assert_eq!(s.base, [0.1, 0.2, 0.3]);
        assert_eq!(s.axis(), Vec3::z());
        assert_eq!(s.convention, PhiConvention::Standard);
        let c = Scenario::for_field("constant").unwrap();
        assert_eq!(c.axis(), Vec3::y());
    }

    #[test]
    fn invalid_files_are_rejected() {
        assert!(Scenario::from_json_str(r#"{"field": "nope"}"#).is_err());
        assert!(Scenario::from_json_str(r#"{"field": "abc", "typo": 1}"#).is_err());
        assert!(Scenario::from_json_str(r#"{"field": "abc", "tolerances": {"floor": 0}}"#).is_err());
        assert!(Scenario::from_json_str(r#"{"field": "abc", "tube": {"radius": -1}}"#).is_err());
        assert!(Scenario::from_json_str(r#"{}"#).is_err());
    }

    #[test]
    fn full_file_round_trips() {
        let s = Scenario::from_json_str(
            r#"{"name": "x", "field": {"name": "rotation", "omega": 2.0}, "faults": ["negate-phi"],
                "probes": {"chern": {"surface": {"kind": "torus", "nu": 16}}, "bott": null}}"#,
        )
        .unwrap();
        assert_eq!(s.field, FieldSpec::Rotation { omega: 2.0, epsilon: 0.3 });
        assert_eq!(s.faults, vec![Fault::NegatePhi]);
        assert!(s.probes.bott.is_none());
        let back = Scenario::from_json_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn tolerance_scaling() {
        let t = Tolerances::default();
        let s = t.scaled(2.0);
        assert_eq!(s.discretization(1e-3, 1e-4), 2.0 * t.discretization(1e-3, 1e-4));
        assert_eq!(s.independence_min, t.independence_min);
    }
}
