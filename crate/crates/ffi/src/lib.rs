//! C interface to `bihamil`.
//!
//! Objects cross the boundary as opaque handles created by `bhm_*_new`,
//! `bhm_*_load` or `bhm_run_*` and released by the matching `bhm_*_free`.
//! Fallible calls return a [`BhmStatus`]; on anything but `BHM_STATUS_OK`
//! the message is available from [`bhm_last_error_message`] on the same thread.

use bihamil::bundle::{chern_number, TriangulatedSurface};
use bihamil::calc3::{Vec3, VectorField};
use bihamil::framekit::AdaptedFrame;
use bihamil::scenario::{exit_code, run_construct, run_convergence, run_obstruct, FieldSpec, Report, Scenario};
use bihamil::Error;
use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BhmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Scenario = 4,
    Io = 5,
    /// A point left the field domain or the stream tube.
    Domain = 6,
    /// The field, frame or pair degenerated.
    Degenerate = 7,
    Mesh = 8,
    Panic = 9,
}

impl From<&Error> for BhmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Grade(_) | Error::NoExactDerivative => BhmStatus::InvalidArgument,
            Error::Scenario(_) => BhmStatus::Scenario,
            Error::Io(_) => BhmStatus::Io,
            Error::DomainBoundary { .. } | Error::OutsideTube { .. } | Error::Periodicity { .. } => BhmStatus::Domain,
            Error::Mesh(_) | Error::RefineMesh { .. } => BhmStatus::Mesh,
            Error::VanishingField { .. }
            | Error::FrameDegeneracy { .. }
            | Error::Truncated { .. }
            | Error::TubeConstruction(_)
            | Error::SpanSplit { .. }
            | Error::DegeneratePair { .. }
            | Error::NotPoisson { .. } => BhmStatus::Degenerate,
        }
    }
}

/// A loaded scenario.
pub struct BhmScenario {
    inner: Scenario,
    dir: Option<std::path::PathBuf>,
}

/// The report of one run.
pub struct BhmReport {
    inner: Report,
}

/// A named field with its adapted frame.
pub struct BhmField {
    field: Arc<dyn VectorField>,
    frame: AdaptedFrame,
}

/// Chern number of the normal bundle over a closed surface.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BhmChern {
    pub number: i64,
    /// Total holonomy over 2π before rounding.
    pub real: f64,
    pub defect: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(BhmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), e.to_string())
    }
}

/// Runs `f`, records its error message and turns panics into `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BhmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            BhmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BhmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail(BhmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Fail(BhmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(BhmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn vec_arg(p: *const f64, what: &str) -> Result<Vec3, Fail> {
    if p.is_null() {
        return Err(Fail(BhmStatus::NullPointer, format!("{what} is null")));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vec3::new(s[0], s[1], s[2]))
}

fn out_arg<T>(out: *mut T) -> Result<(), Fail> {
    if out.is_null() {
        Err(Fail(BhmStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bhm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn bhm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn bhm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn boxed_scenario(inner: Scenario, dir: Option<&Path>, out: *mut *mut BhmScenario) {
    let b = Box::new(BhmScenario { inner, dir: dir.map(Path::to_path_buf) });
    unsafe { *out = Box::into_raw(b) };
}

/// Parses a scenario from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhm_scenario_from_json(json: *const c_char, out: *mut *mut BhmScenario) -> BhmStatus {
    guard(|| {
        out_arg(out)?;
        let sc = Scenario::from_json_str(str_arg(json, "json")?)?;
        boxed_scenario(sc, None, out);
        Ok(())
    })
}

/// Loads a scenario file; relative surface paths resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhm_scenario_load(path: *const c_char, out: *mut *mut BhmScenario) -> BhmStatus {
    guard(|| {
        out_arg(out)?;
        let path = Path::new(str_arg(path, "path")?);
        let sc = Scenario::load(path)?;
        boxed_scenario(sc, path.parent(), out);
        Ok(())
    })
}

/// Default scenario for a registered field name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhm_scenario_for_field(name: *const c_char, out: *mut *mut BhmScenario) -> BhmStatus {
    guard(|| {
        out_arg(out)?;
        let sc = Scenario::for_field(str_arg(name, "name")?)?;
        boxed_scenario(sc, None, out);
        Ok(())
    })
}

/// Multiplies every upper-bound tolerance by `k > 0`.
///
/// # Safety
/// `sc` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn bhm_scenario_set_tolerance_scale(sc: *mut BhmScenario, k: f64) -> BhmStatus {
    guard(|| {
        let sc = sc.as_mut().ok_or_else(|| Fail(BhmStatus::NullPointer, "scenario is null".into()))?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(Fail(BhmStatus::InvalidArgument, format!("tolerance scale must be positive, got {k}")));
        }
        sc.inner.tolerances = sc.inner.tolerances.scaled(k);
        Ok(())
    })
}

/// # Safety
/// `sc` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bhm_scenario_free(sc: *mut BhmScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

unsafe fn run(sc: *const BhmScenario, out: *mut *mut BhmReport, f: impl FnOnce(&BhmScenario) -> Report) -> BhmStatus {
    guard(|| {
        out_arg(out)?;
        let sc = ref_arg(sc, "scenario")?;
        *out = Box::into_raw(Box::new(BhmReport { inner: f(sc) }));
        Ok(())
    })
}

/// Builds the pair and evaluates every identity. A run that fails its
/// tolerances or hits a construction error still returns `BHM_STATUS_OK`
/// with a report; see [`bhm_report_exit_code`].
///
/// # Safety
/// `sc` must be a live scenario handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhm_run_construct(sc: *const BhmScenario, out: *mut *mut BhmReport) -> BhmStatus {
    run(sc, out, |s| run_construct(&s.inner).report)
}

/// Chern-number and torus-integral probes.
///
/// # Safety
/// `sc` must be a live scenario handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhm_run_obstruct(sc: *const BhmScenario, out: *mut *mut BhmReport) -> BhmStatus {
    run(sc, out, |s| run_obstruct(&s.inner, s.dir.as_deref()))
}

/// Refinement study over `levels ≥ 3` levels.
///
/// # Safety
/// `sc` must be a live scenario handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhm_run_converge(sc: *const BhmScenario, levels: usize, out: *mut *mut BhmReport) -> BhmStatus {
    run(sc, out, |s| run_convergence(&s.inner, levels))
}

/// True iff the run passed; false for a null handle.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn bhm_report_pass(r: *const BhmReport) -> bool {
    r.as_ref().is_some_and(|r| r.inner.pass)
}

/// 0 on pass, 1 on a tolerance failure, 2 on an error, -1 for a null handle.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn bhm_report_exit_code(r: *const BhmReport) -> c_int {
    r.as_ref().map_or(-1, |r| exit_code(&r.inner))
}

/// The report as JSON; release with [`bhm_string_free`]. Null on failure.
///
/// # Safety
/// `r` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn bhm_report_json(r: *const BhmReport) -> *mut c_char {
    let mut s = ptr::null_mut();
    guard(|| {
        let r = ref_arg(r, "report")?;
        s = CString::new(r.inner.to_json()).map_err(|e| Fail(BhmStatus::InvalidUtf8, e.to_string()))?.into_raw();
        Ok(())
    });
    s
}

/// Largest value of a named residual and its tolerance.
///
/// # Safety
/// `r` must be a live report handle, `name` NUL-terminated, and the outputs
/// writable or null.
#[no_mangle]
pub unsafe extern "C" fn bhm_report_residual(r: *const BhmReport, name: *const c_char, max: *mut f64, tolerance: *mut f64) -> BhmStatus {
    guard(|| {
        let r = ref_arg(r, "report")?;
        let name = str_arg(name, "name")?;
        let s = r.inner.residuals.get(name).ok_or_else(|| Fail(BhmStatus::InvalidArgument, format!("no residual named {name:?}")))?;
        if !max.is_null() {
            *max = s.max;
        }
        if !tolerance.is_null() {
            *tolerance = s.tolerance;
        }
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bhm_report_free(r: *mut BhmReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// A registered field with its default parameters. `axis` is the frame's
/// reference axis, or null for the field's default.
///
/// # Safety
/// `name` must be NUL-terminated, `axis` null or three doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhm_field_new(name: *const c_char, axis: *const f64, out: *mut *mut BhmField) -> BhmStatus {
    guard(|| {
        out_arg(out)?;
        let spec = FieldSpec::from_name(str_arg(name, "name")?)?;
        let axis = if axis.is_null() { spec.default_axis() } else { vec_arg(axis, "axis")? };
        let field = spec.build()?;
        let frame = AdaptedFrame::new(field.clone(), axis)?;
        *out = Box::into_raw(Box::new(BhmField { field, frame }));
        Ok(())
    })
}

/// Field value at `x` into `out[0..3]`.
///
/// # Safety
/// `f` must be a live field handle, `x` three doubles, `out` room for three.
#[no_mangle]
pub unsafe extern "C" fn bhm_field_value(f: *const BhmField, x: *const f64, out: *mut f64) -> BhmStatus {
    guard(|| {
        let f = ref_arg(f, "field")?;
        let x = vec_arg(x, "x")?;
        out_arg(out)?;
        if !f.field.domain().contains(&x) {
            return Err(Error::DomainBoundary { point: [x.x, x.y, x.z] }.into());
        }
        let v = f.field.value(&x)?;
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Adapted frame at `x` into `out[0..9]` as `e1, e2, e3`.
///
/// # Safety
/// `f` must be a live field handle, `x` three doubles, `out` room for nine.
#[no_mangle]
pub unsafe extern "C" fn bhm_field_frame(f: *const BhmField, x: *const f64, out: *mut f64) -> BhmStatus {
    guard(|| {
        let f = ref_arg(f, "field")?;
        let x = vec_arg(x, "x")?;
        out_arg(out)?;
        let fr = f.frame.at(&x)?;
        let o = std::slice::from_raw_parts_mut(out, 9);
        for (k, e) in [fr.e1, fr.e2, fr.e3].iter().enumerate() {
            o[3 * k..3 * k + 3].copy_from_slice(e.as_slice());
        }
        Ok(())
    })
}

/// Chern number over an icosphere of the given subdivision level.
///
/// # Safety
/// `f` must be a live field handle, `center` three doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhm_chern_icosphere(f: *const BhmField, level: usize, radius: f64, center: *const f64, out: *mut BhmChern) -> BhmStatus {
    guard(|| {
        let f = ref_arg(f, "field")?;
        let center = vec_arg(center, "center")?;
        out_arg(out)?;
        if !(radius > 0.0 && radius.is_finite()) || level > 8 {
            return Err(Fail(BhmStatus::InvalidArgument, "need radius > 0 and level <= 8".into()));
        }
        let surface = TriangulatedSurface::icosphere(level, radius, center);
        let c = chern_number(f.field.as_ref(), &surface)?;
        *out = BhmChern { number: c.number, real: c.real, defect: c.defect };
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bhm_field_free(f: *mut BhmField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
