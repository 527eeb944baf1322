//! The construct, obstruct and converge runs.

use super::report::*;
use super::{Scenario, SurfaceSpec};
use crate::assemble::{
    assemble_pair, hamiltonians_other_path, independence_certificate, phi_field, point_residuals, reconstruct_hamiltonians,
    solve_tube, Hamiltonians, PairConfig, PairField, PairSample, PairStencil, PointResiduals, ResidualSummary,
};
use crate::bundle::{bott_integral, chern_number, stencil_connection, PeriodicBox, StencilConnection, TriangulatedSurface};
use crate::calc3::{fitted_order, jacobian, DiffConfig, Mat3, Vec3, VectorField};
use crate::error::{Error, Result};
use crate::flowline::{build_tube, integrate_streamline, StreamTube};
use crate::framekit::AdaptedFrame;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// Residual names whose tolerance is a lower bound.
const AT_LEAST: [&str; 2] = ["independence", "dilatation_arclength"];

/// Everything a construct run produces besides the report.
pub struct ConstructOutput {
    pub report: Report,
    pub tube: Option<StreamTube>,
    pub hamiltonians: Option<Hamiltonians>,
    /// Residuals at every evaluated stencil.
    pub points: Vec<(PointResiduals, StencilConnection)>,
}

fn pair_config(sc: &Scenario, ds: f64, radius: f64, diff: DiffConfig) -> PairConfig {
    PairConfig {
        ds,
        length: sc.tube.length,
        radius,
        diff,
        seeding: sc.seeding,
        convention: sc.convention,
        disc_segments: 8,
    }
}

fn frame(sc: &Scenario) -> Result<(Arc<dyn VectorField>, AdaptedFrame)> {
    let v = sc.field.build()?;
    let f = AdaptedFrame::new(v.clone(), sc.axis())?;
    Ok((v, f))
}

/// Named residual values at one stencil.
fn named_values(p: &PointResiduals, c: &StencilConnection) -> Vec<(&'static str, f64)> {
    vec![
        ("jacobi.1", p.jacobi[0]),
        ("jacobi.2", p.jacobi[1]),
        ("compatibility", p.compatibility),
        ("bihamiltonian.1", p.bihamiltonian[0]),
        ("bihamiltonian.2", p.bihamiltonian[1]),
        ("gradient_relation.1", p.gradient_relation[0]),
        ("gradient_relation.2", p.gradient_relation[1]),
        ("two_form", p.two_form),
        ("divergence_identity", p.divergence_identity),
        ("closedness.1", p.closedness[0]),
        ("closedness.2", p.closedness[1]),
        ("invariance.1", p.invariance[0]),
        ("invariance.2", p.invariance[1]),
        ("transversality.1", p.transversality[0]),
        ("transversality.2", p.transversality[1]),
        ("independence", p.independence),
        ("dilatation_invariant", p.dilatation_invariant),
        ("dilatation_arclength", p.dilatation_arclength),
        ("connection.gamma_fit", c.gamma_fit),
        ("connection.gamma_contract", c.gamma_contract),
        ("connection.big_gamma_fit.1", c.big_gamma_fit[0]),
        ("connection.big_gamma_fit.2", c.big_gamma_fit[1]),
        ("connection.gauge_coherence.1", c.gauge_coherence[0]),
        ("connection.gauge_coherence.2", c.gauge_coherence[1]),
        ("connection.form_compatibility", c.form_compatibility),
    ]
}

/// Tolerance for a residual name, honouring overrides.
fn tolerance(sc: &Scenario, name: &str, ds: f64, h: f64) -> f64 {
    let t = &sc.tolerances;
    if let Some(o) = t.overrides.get(name) {
        return *o;
    }
    match name {
        "independence" => t.independence_min,
        "dilatation_arclength" => t.dilatation_arclength_min,
        "path_independence" => t.path_independence,
        n if n.starts_with("transversality") => t.transversality,
        _ => t.discretization(ds, h),
    }
}

/// How far a value is past its tolerance; above 1 means failure.
fn excess(name: &str, value: f64, tol: f64) -> f64 {
    if AT_LEAST.contains(&name) {
        tol / value.max(f64::MIN_POSITIVE)
    } else {
        value / tol
    }
}

/// Tube samples at which stencils are evaluated: every `seed_stride`-th seed,
/// at `nodes_per_line` nodes spread evenly along each streamline.
pub fn sample_points(samples: &[Vec<PairSample>], seed_stride: usize, nodes_per_line: usize) -> Vec<PairSample> {
    let mut out = Vec::new();
    for line in samples.iter().step_by(seed_stride.max(1)) {
        let last = line.len() - 1;
        for k in 0..nodes_per_line {
            let idx = if nodes_per_line == 1 { 0 } else { k * last / (nodes_per_line - 1) };
            out.push(line[idx]);
        }
    }
    out
}

/// Builds the pair on the scenario tube and evaluates every identity.
pub fn run_construct(sc: &Scenario) -> ConstructOutput {
    let mut out = ConstructOutput { report: Report::new(RunKind::Construct, sc), tube: None, hamiltonians: None, points: Vec::new() };
    if let Err(e) = construct_into(sc, &mut out) {
        out.report = out.report.fail_with(&e);
        return out;
    }
    out.report = out.report.finish();
    out
}

fn construct_into(sc: &Scenario, out: &mut ConstructOutput) -> Result<()> {
    sc.validate()?;
    let (_, frame) = frame(sc)?;
    let tube = build_tube(&frame, Vec3::from(sc.base), sc.tube)?;
    let pair = PairField::new(frame, Vec3::from(sc.base), sc.initial, pair_config(sc, sc.tube.ds, sc.tube.radius, sc.diff))?;
    let sol = solve_tube(&pair, &tube)?;
    let frames = sol.frames();
    let (mu1, a1) = sol.field(0);
    let (mu2, a2) = sol.field(1);
    let (j1, j2) = assemble_pair(&frames, [&mu1, &mu2], [&a1, &a2])?;
    let phi = phi_field(&j1, &j2, &frames, sc.convention)?;
    let ham = reconstruct_hamiltonians(&j1, &j2, &phi, &frames, &tube)?;
    let report = &mut out.report;
    let tol = &sc.tolerances;
    report.checks.push(Check::at_most("tube.transversality", j1.transversality.max(j2.transversality), tol.transversality));
    report.checks.push(Check::at_least("tube.independence", independence_certificate(&j1, &j2), tol.independence_min));

    // second integration path at the far end of the outer ring
    let outer: Vec<usize> = (0..tube.seeds.len()).filter(|&l| tube.seeds[l].ring == sc.tube.rings).collect();
    let picks: Vec<usize> = (0..sc.sampling.path_points.min(outer.len()))
        .map(|k| outer[k * outer.len() / sc.sampling.path_points.min(outer.len())])
        .collect();
    let path = picks
        .par_iter()
        .map(|&l| {
            let other = hamiltonians_other_path(&pair, tube.seeds[l].sigma, sc.tube.length, sc.sampling.path_segments)?;
            let row = ham.h[0][l].len() - 1;
            let d = (0..2).map(|i| (ham.h[i][l][row] - other[i]).abs()).fold(0.0, f64::max);
            Ok((d, sol.samples[l][row].x))
        })
        .collect::<Result<Vec<_>>>()?;
    let pt = tolerance(sc, "path_independence", 0.0, 0.0);
    report.residuals.insert("path_independence".into(), ResidualSummary::from_values(&path, pt, false));

    let centers = sample_points(&sol.samples, sc.sampling.seed_stride, sc.sampling.nodes_per_line);
    let stencils = centers.par_iter().map(|c| pair.stencil(&c.x, &sc.diff)).collect::<Result<Vec<PairStencil>>>()?;
    let points = stencils
        .iter()
        .map(|st| Ok((point_residuals(st, &pair)?, stencil_connection(st))))
        .collect::<Result<Vec<_>>>()?;
    let mut by_name: BTreeMap<&str, Vec<(f64, Vec3)>> = BTreeMap::new();
    for (p, c) in &points {
        for (name, v) in named_values(p, c) {
            by_name.entry(name).or_default().push((v, p.x));
        }
    }
    let (ds, h) = (sc.tube.ds, sc.diff.h);
    for (name, values) in by_name {
        let t = tolerance(sc, name, ds, h);
        report.residuals.insert(name.into(), ResidualSummary::from_values(&values, t, AT_LEAST.contains(&name)));
    }
    if report.residuals.iter().any(|(n, r)| n.starts_with("closedness") && !r.pass) {
        report.warnings.push("J_i/φ is not closed to tolerance, so the reconstructed Hamiltonians are unreliable".into());
    }

    for &fault in &sc.faults {
        let (mut worst, mut which) = (0.0_f64, String::new());
        for st in &stencils {
            let faulty = st.map(|p| fault.apply(p));
            let p = point_residuals(&faulty, &pair)?;
            let c = stencil_connection(&faulty);
            for (name, v) in named_values(&p, &c) {
                let r = excess(name, v, tolerance(sc, name, ds, h));
                if r > worst || (r.is_nan() && !worst.is_nan()) {
                    worst = r;
                    which = name.to_string();
                }
            }
        }
        report.faults.push(FaultReport {
            fault: fault.name().into(),
            residual: which,
            ratio: worst,
            detected: worst.is_nan() || worst >= tol.fault_factor,
        });
    }
    out.points = points;
    out.tube = Some(tube);
    out.hamiltonians = Some(ham);
    Ok(())
}

/// Writes `tube.csv` and `residuals.csv` into `dir`.
pub fn write_samples(out: &ConstructOutput, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if let Some(tube) = &out.tube {
        let p = dir.join("tube.csv");
        tube.write_csv(std::io::BufWriter::new(std::fs::File::create(&p)?))?;
        written.push(p);
    }
    if let Some((p0, c0)) = out.points.first() {
        let p = dir.join("residuals.csv");
        let mut w = std::io::BufWriter::new(std::fs::File::create(&p)?);
        let names: Vec<&str> = named_values(p0, c0).into_iter().map(|(n, _)| n).collect();
        writeln!(w, "x,y,z,s,{}", names.join(","))?;
        for (r, c) in &out.points {
            let vals: Vec<String> = named_values(r, c).into_iter().map(|(_, v)| format!("{v:.9e}")).collect();
            writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e},{}", r.x.x, r.x.y, r.x.z, r.s, vals.join(","))?;
        }
        written.push(p);
    }
    Ok(written)
}

fn default_surface(sc: &Scenario) -> SurfaceSpec {
    use super::FieldSpec;
    match sc.field {
        FieldSpec::Radial { center, .. } => SurfaceSpec::Icosphere { level: 4, radius: 1.0, center },
        FieldSpec::Rotation { .. } => SurfaceSpec::Torus { major: 2.0, minor: 0.5, nu: 48, nv: 24 },
        _ => SurfaceSpec::Icosphere { level: 4, radius: 1.0, center: sc.base },
    }
}

fn describe(spec: &SurfaceSpec) -> String {
    match spec {
        SurfaceSpec::Icosphere { level, radius, center } => format!("icosphere(level {level}, radius {radius}, center {center:?})"),
        SurfaceSpec::Torus { major, minor, nu, nv } => format!("torus(R {major}, r {minor}, {nu}x{nv})"),
        SurfaceSpec::File { path } => format!("mesh file {path}"),
    }
}

/// Chern number of the normal bundle and the periodic `∫Ξ` probe.
/// `dir` resolves relative mesh paths.
pub fn run_obstruct(sc: &Scenario, dir: Option<&Path>) -> Report {
    let mut report = Report::new(RunKind::Obstruct, sc);
    match obstruct_into(sc, dir, &mut report) {
        Ok(()) => report.finish(),
        Err(e) => report.fail_with(&e),
    }
}

fn obstruct_into(sc: &Scenario, dir: Option<&Path>, report: &mut Report) -> Result<()> {
    sc.validate()?;
    let v = sc.field.build()?;
    let tol = &sc.tolerances;
    let mut ob = ObstructionReport::default();
    if let Some(probe) = &sc.probes.chern {
        let spec = probe.surface.clone().unwrap_or_else(|| default_surface(sc));
        let surface = spec.build(dir)?;
        let result = chern_number(v.as_ref(), &surface)?;
        report.checks.push(Check::at_most("chern.defect", result.defect, tol.chern_defect));
        let refined = if probe.check_refinement {
            let fine: TriangulatedSurface = spec.refined(&surface);
            let r = chern_number(v.as_ref(), &fine)?;
            report.checks.push(Check::at_most("chern.refinement_change", (r.number - result.number).abs() as f64, 0.0));
            Some(r)
        } else {
            None
        };
        if let Some(e) = probe.expect {
            report.checks.push(Check::at_most("chern.expected", (result.number - e).abs() as f64, 0.0));
        }
        let verdict = if result.number != 0 {
            "obstruction: normal bundle nontrivial, so no global pair of independent Poisson fields exists"
        } else {
            "no obstruction detected"
        };
        ob.chern = Some(ChernProbeReport {
            surface: describe(&spec),
            euler_characteristic: surface.euler_characteristic(),
            result,
            refined,
            verdict: verdict.into(),
        });
    }
    if let Some(probe) = &sc.probes.bott {
        let domain = probe.domain.or_else(|| sc.field.period().map(|p| PeriodicBox { origin: [0.0; 3], period: p }));
        match (sc.field.analytic_pair(&sc.axis()), domain) {
            (Some((j1, j2)), Some(bx)) => {
                let r = bott_integral(j1, j2, &bx, probe.n, &probe.diff)?;
                let t = (10.0 * r.error_estimate).max(1e-8 * r.max_abs * bx.volume()).max(1e-12);
                let pass = r.value.abs() <= t;
                report.checks.push(Check::at_most("bott.integral", r.value.abs(), t));
                let verdict = if pass {
                    "integral vanishes within quadrature tolerance: evidence for a compatible global pair, not a proof"
                } else {
                    "nonzero integral: the pair is obstructed from global compatibility"
                };
                ob.bott = Some(BottProbeReport { integral: r.value, error_estimate: r.error_estimate, tolerance: t, n: r.n, verdict: verdict.into() });
            }
            (None, _) => ob.skipped.push(format!("bott: no closed-form global pair is known for field {}", sc.field.name())),
            (_, None) => ob.skipped.push(format!("bott: field {} is not periodic", sc.field.name())),
        }
    }
    report.obstruction = Some(ob);
    Ok(())
}

/// `log₂(‖c − m‖/‖m − f‖)`, or `None` when both differences are at round-off.
fn richardson(c: &[f64], m: &[f64], f: &[f64]) -> Option<f64> {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let (d1, d2) = (d(c, m), d(m, f));
    let scale = c.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    if d1 <= 1e-13 * scale && d2 <= 1e-13 * scale {
        None
    } else {
        Some((d1 / d2).log2())
    }
}

fn mat(m: &Mat3) -> Vec<f64> {
    m.iter().copied().collect()
}

/// Residuals at 12 fixed tube coordinates over `levels` jointly refined
/// resolutions, with fitted slopes, plus integrator and difference orders.
pub fn run_convergence(sc: &Scenario, levels: usize) -> Report {
    let mut report = Report::new(RunKind::Converge, sc);
    match converge_into(sc, levels, &mut report) {
        Ok(()) => report.finish(),
        Err(e) => report.fail_with(&e),
    }
}

fn converge_into(sc: &Scenario, levels: usize, report: &mut Report) -> Result<()> {
    sc.validate()?;
    if levels < 3 {
        return Err(Error::Scenario(format!("convergence needs at least 3 levels, got {levels}")));
    }
    let (v, frame) = frame(sc)?;
    let base = Vec3::from(sc.base);
    let c = sc.convergence;
    let length = sc.tube.length;
    let mut rows = Vec::with_capacity(levels);
    for level in 0..levels {
        let f = c.ratio.powi(level as i32);
        let (ds, h, r) = (c.ds * f, c.h * f, c.radius * f);
        let diff = DiffConfig { h, ..sc.diff };
        let pair = PairField::new(frame.clone(), base, sc.initial, pair_config(sc, ds, r, diff))?;
        let q = r * std::f64::consts::FRAC_1_SQRT_2;
        let sigmas = [(0.0, 0.0), (r, 0.0), (0.0, -r), (-q, q)];
        let coords: Vec<((f64, f64), f64)> =
            sigmas.iter().flat_map(|&sg| [0.25, 0.5, 1.0].map(|t| (sg, t * length))).collect();
        let vals = coords
            .par_iter()
            .map(|&(sg, s)| {
                let p = pair.point_at(sg, s)?;
                let st = pair.stencil(&p.x, &diff)?;
                Ok((point_residuals(&st, &pair)?, stencil_connection(&st)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut residuals = BTreeMap::new();
        for (p, cn) in &vals {
            for (name, x) in named_values(p, cn) {
                if AT_LEAST.contains(&name) || name.starts_with("transversality") {
                    continue;
                }
                let e: &mut f64 = residuals.entry(name.to_string()).or_insert(0.0);
                *e = e.max(x);
            }
        }
        rows.push(ConvergenceRow { level, ds, h, radius: r, residuals });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let mut slopes = BTreeMap::new();
    let mut at_roundoff = Vec::new();
    for name in rows[0].residuals.keys() {
        let errs: Vec<f64> = rows.iter().map(|r| r.residuals[name]).collect();
        let slope = fitted_order(&hs, &errs);
        slopes.insert(name.clone(), slope);
        if errs.last().copied().unwrap_or(0.0) < c.roundoff || errs.iter().all(|e| *e < c.roundoff * 1e3) {
            at_roundoff.push(name.clone());
        } else {
            report.checks.push(Check::at_least(&format!("slope.{name}"), slope, c.min_slope));
        }
    }
    report.convergence = Some(ConvergenceTable { rows, slopes, at_roundoff });

    // streamline integrator order from three step sizes
    let ends = [0.05, 0.025, 0.0125]
        .iter()
        .map(|ds| integrate_streamline(v.as_ref(), base, length, *ds).map(|l| { let e = l.end(); vec![e.x, e.y, e.z] }))
        .collect::<Result<Vec<_>>>()?;
    match richardson(&ends[0], &ends[1], &ends[2]) {
        Some(o) => report.checks.push(Check::at_least("order.streamline", o, 3.9)),
        None => report.warnings.push("streamline integration is exact for this field; order not measured".into()),
    }
    for (order, min) in [(2u8, 1.9), (4u8, 3.8)] {
        let vals = [0.1, 0.05, 0.025]
            .iter()
            .map(|h| Ok(mat(&jacobian(v.as_ref(), &base, &DiffConfig::finite_difference(*h, order)?)?)))
            .collect::<Result<Vec<_>>>()?;
        match richardson(&vals[0], &vals[1], &vals[2]) {
            Some(o) => report.checks.push(Check::at_least(&format!("order.difference_{order}"), o, min)),
            None => report.warnings.push(format!("order-{order} differences are exact for this field; order not measured")),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scenario_passes_exactly() {
        let mut sc = Scenario::for_field("constant").unwrap();
        sc.faults = crate::assemble::Fault::all().to_vec();
        let out = run_construct(&sc);
        let r = &out.report;
        assert!(r.pass, "{}", r.to_text());
        for (name, s) in &r.residuals {
            if !AT_LEAST.contains(&name.as_str()) {
                assert!(s.max <= 1e-8, "{name} = {}", s.max);
            }
        }
        assert_eq!(r.residuals["jacobi.1"].count, 41 * 5);
        assert!(r.faults.iter().all(|f| f.detected));
    }

    #[test]
    fn radial_through_origin_is_an_error() {
        let mut sc = Scenario::for_field("radial").unwrap();
        sc.base = [0.0, 0.0, 0.0];
        let r = run_construct(&sc).report;
        assert_eq!(exit_code(&r), 2, "{}", r.to_text());
    }

    #[test]
    fn obstruction_verdicts() {
        let r = run_obstruct(&Scenario::for_field("constant").unwrap(), None);
        assert!(r.pass, "{}", r.to_text());
        let ob = r.obstruction.unwrap();
        assert_eq!(ob.chern.unwrap().result.number, 0);
        assert!(ob.bott.is_some());
        let r = run_obstruct(&Scenario::for_field("radial").unwrap(), None);
        let c = r.obstruction.unwrap().chern.unwrap();
        assert_eq!(c.result.number, 2);
        assert_eq!(c.refined.unwrap().number, 2);
        assert!(c.verdict.starts_with("obstruction"));
    }
}
