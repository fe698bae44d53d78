//! C interface to `gpcollapse`.
//!
//! Every fallible function returns a [`GpcStatus`] code; on failure the
//! message is kept per thread and read with [`gpc_last_error`]. Objects are
//! opaque handles released by their `*_free` function. Fields cross the
//! boundary as `n * n` doubles, row-major with the row index along `x`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use gpcollapse::energy::{DiscreteModel, EnergyBreakdown, ModelParams};
use gpcollapse::grid::{Field, Grid2D};
use gpcollapse::groundstate::{q0_constants, solve_q, RadialProfile};
use gpcollapse::minimizer::{minimize_model, InitSpec, MinimizeOptions, MinimizerResult};
use gpcollapse::potentials::{Envelope, PotentialSpec, SingularPoint};
use gpcollapse::Error;
use ndarray::Array2;

/// Status codes returned by every fallible call.
#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpcStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Domain = 3,
    Degenerate = 4,
    Resolution = 5,
    Solver = 6,
    GridMismatch = 7,
    BufferSize = 8,
    Panic = 9,
    Other = 10,
}

impl From<&Error> for GpcStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => GpcStatus::Config,
            Error::Domain(_) => GpcStatus::Domain,
            Error::Degenerate(_) => GpcStatus::Degenerate,
            Error::Resolution(_) => GpcStatus::Resolution,
            Error::Solver(_) => GpcStatus::Solver,
            Error::GridMismatch(_) => GpcStatus::GridMismatch,
            _ => GpcStatus::Other,
        }
    }
}

/// Kind of external potential in [`GpcModelDesc`].
#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpcPotentialKind {
    Zero = 0,
    /// `|x|^trap_q`.
    Trap = 1,
    /// `-h0 * sum_j |x - z_j|^{-p_j}`.
    Singular = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GpcSingularPoint {
    pub x: f64,
    pub y: f64,
    pub p: f64,
}

/// Grid, couplings and potential of a model.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GpcModelDesc {
    /// Half width `L` of the box `[-L, L)^2`.
    pub half_width: f64,
    /// Nodes per axis, a power of two.
    pub n: usize,
    pub a: f64,
    pub g: f64,
    /// A [`GpcPotentialKind`] value.
    pub kind: i32,
    pub trap_q: f64,
    pub h0: f64,
    pub points: *const GpcSingularPoint,
    pub n_points: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GpcEnergy {
    pub kinetic: f64,
    pub potential: f64,
    pub quartic: f64,
    pub gravity: f64,
    pub total: f64,
}

impl From<EnergyBreakdown> for GpcEnergy {
    fn from(e: EnergyBreakdown) -> Self {
        GpcEnergy { kinetic: e.kinetic, potential: e.potential, quartic: e.quartic, gravity: e.gravity, total: e.total }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GpcMinimizeOptions {
    pub energy_tol: f64,
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Critical strength for the domain check; computed when not positive.
    pub a_star: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GpcResultInfo {
    pub iterations: usize,
    pub converged: bool,
    pub mu: f64,
    pub residual: f64,
    pub peak_x: f64,
    pub peak_y: f64,
    pub width: f64,
}

/// Townes profile and its constants.
pub struct GpcProfile {
    profile: Arc<RadialProfile>,
    d0: f64,
}

pub struct GpcModel {
    model: DiscreteModel,
}

pub struct GpcResult {
    result: MinimizerResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn guard(f: impl FnOnce() -> Result<(), (GpcStatus, String)>) -> GpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GpcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            GpcStatus::Panic
        }
    }
}

fn lib(e: Error) -> (GpcStatus, String) {
    (GpcStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (GpcStatus, String) {
    (GpcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (GpcStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), (GpcStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn field_in(model: &DiscreteModel, u: *const f64, len: usize) -> Result<Field, (GpcStatus, String)> {
    let grid = model.grid();
    let n = grid.n();
    if u.is_null() {
        return Err(null("field"));
    }
    if len != n * n {
        return Err((GpcStatus::BufferSize, format!("field needs {} values, got {len}", n * n)));
    }
    let values = std::slice::from_raw_parts(u, len).to_vec();
    Field::new(grid, Array2::from_shape_vec((n, n), values).expect("n x n")).map_err(lib)
}

/// Copies the message of the last failure on this thread into `buf`
/// (NUL-terminated, truncated to `len`) and returns its full length.
#[no_mangle]
pub unsafe extern "C" fn gpc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let k = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gpc_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Solves for the Townes profile by shooting on `[0, r_max]` with step `dr`.
#[no_mangle]
pub unsafe extern "C" fn gpc_profile_solve(dr: f64, r_max: f64, tol: f64, out: *mut *mut GpcProfile) -> GpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let profile = Arc::new(solve_q(dr, r_max, tol).map_err(lib)?);
        let d0 = q0_constants(&profile, &[], 1.0).map_err(lib)?.d0;
        put(out, Box::into_raw(Box::new(GpcProfile { profile, d0 })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gpc_profile_free(profile: *mut GpcProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Critical contact strength `a*`.
#[no_mangle]
pub unsafe extern "C" fn gpc_profile_a_star(profile: *const GpcProfile, out: *mut f64) -> GpcStatus {
    guard(|| put(out, get(profile, "profile")?.profile.a_star(), "out"))
}

/// `D0`, the self-gravity of `Q0`.
#[no_mangle]
pub unsafe extern "C" fn gpc_profile_d0(profile: *const GpcProfile, out: *mut f64) -> GpcStatus {
    guard(|| put(out, get(profile, "profile")?.d0, "out"))
}

/// `int Q0^2 |x|^{-p}` for `0 < p < 2`.
#[no_mangle]
pub unsafe extern "C" fn gpc_profile_moment(profile: *const GpcProfile, p: f64, out: *mut f64) -> GpcStatus {
    guard(|| {
        let prof = get(profile, "profile")?;
        let m = gpcollapse::groundstate::singular_moment(&prof.profile, p).map_err(lib)?;
        put(out, m, "out")
    })
}

/// `Q0(r)`.
#[no_mangle]
pub unsafe extern "C" fn gpc_profile_eval(profile: *const GpcProfile, r: f64, out: *mut f64) -> GpcStatus {
    guard(|| put(out, get(profile, "profile")?.profile.q0_at(r), "out"))
}

unsafe fn potential(desc: &GpcModelDesc) -> Result<PotentialSpec, (GpcStatus, String)> {
    const ZERO: i32 = GpcPotentialKind::Zero as i32;
    const TRAP: i32 = GpcPotentialKind::Trap as i32;
    const SINGULAR: i32 = GpcPotentialKind::Singular as i32;
    Ok(match desc.kind {
        ZERO => PotentialSpec::Zero,
        TRAP => PotentialSpec::Trap { q: desc.trap_q },
        SINGULAR => {
            if desc.points.is_null() && desc.n_points > 0 {
                return Err(null("points"));
            }
            let pts = if desc.n_points == 0 { &[][..] } else { std::slice::from_raw_parts(desc.points, desc.n_points) };
            PotentialSpec::SingularSum {
                points: pts.iter().map(|p| SingularPoint { z: (p.x, p.y), p: p.p }).collect(),
                envelope: Envelope::Constant(desc.h0),
            }
        }
        k => return Err((GpcStatus::Config, format!("unknown potential kind {k}"))),
    })
}

/// Builds the discrete model described by `desc`.
#[no_mangle]
pub unsafe extern "C" fn gpc_model_new(desc: *const GpcModelDesc, out: *mut *mut GpcModel) -> GpcStatus {
    guard(|| {
        let d = get(desc, "desc")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = Grid2D::new(d.half_width, d.n).map_err(lib)?;
        let params = ModelParams::new(d.a, d.g, potential(d)?).map_err(lib)?;
        let model = DiscreteModel::new(&params, &grid).map_err(lib)?;
        put(out, Box::into_raw(Box::new(GpcModel { model })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gpc_model_free(model: *mut GpcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Nodes per axis of the model grid.
#[no_mangle]
pub unsafe extern "C" fn gpc_model_n(model: *const GpcModel, out: *mut usize) -> GpcStatus {
    guard(|| put(out, get(model, "model")?.model.grid().n(), "out"))
}

/// Energy of a unit-mass nonnegative field of `len = n * n` values.
#[no_mangle]
pub unsafe extern "C" fn gpc_model_energy(
    model: *const GpcModel,
    u: *const f64,
    len: usize,
    out: *mut GpcEnergy,
) -> GpcStatus {
    guard(|| {
        let m = &get(model, "model")?.model;
        let e = m.evaluate(&field_in(m, u, len)?).map_err(lib)?;
        put(out, e.into(), "out")
    })
}

/// Lagrange multiplier and relative Euler-Lagrange residual of a field.
#[no_mangle]
pub unsafe extern "C" fn gpc_model_residual(
    model: *const GpcModel,
    u: *const f64,
    len: usize,
    mu: *mut f64,
    residual: *mut f64,
) -> GpcStatus {
    guard(|| {
        let m = &get(model, "model")?.model;
        if mu.is_null() || residual.is_null() {
            return Err(null("output"));
        }
        let el = m.el_residual(&field_in(m, u, len)?).map_err(lib)?;
        put(mu, el.mu, "mu")?;
        put(residual, el.residual_norm, "residual")
    })
}

/// Library defaults for [`gpc_minimize`].
#[no_mangle]
pub extern "C" fn gpc_minimize_options_default() -> GpcMinimizeOptions {
    let d = MinimizeOptions::default();
    GpcMinimizeOptions { energy_tol: d.energy_tol, residual_tol: d.residual_tol, max_iter: d.max_iter, a_star: 0.0 }
}

/// Minimizes the energy from the default seed. `opts` may be null.
///
/// A run that stops without converging still returns `GPC_STATUS_OK`; check
/// `converged` in [`gpc_result_info`].
#[no_mangle]
pub unsafe extern "C" fn gpc_minimize(
    model: *const GpcModel,
    opts: *const GpcMinimizeOptions,
    out: *mut *mut GpcResult,
) -> GpcStatus {
    guard(|| {
        let m = &get(model, "model")?.model;
        if out.is_null() {
            return Err(null("out"));
        }
        let o = opts.as_ref().copied().unwrap_or_else(|| gpc_minimize_options_default());
        let options = MinimizeOptions {
            energy_tol: o.energy_tol,
            residual_tol: o.residual_tol,
            max_iter: o.max_iter,
            init: InitSpec::Auto,
            a_star: (o.a_star > 0.0).then_some(o.a_star),
            ..MinimizeOptions::default()
        };
        let result = minimize_model(m, &options).map_err(lib)?;
        put(out, Box::into_raw(Box::new(GpcResult { result })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gpc_result_free(result: *mut GpcResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gpc_result_energy(result: *const GpcResult, out: *mut GpcEnergy) -> GpcStatus {
    guard(|| put(out, get(result, "result")?.result.energy.into(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn gpc_result_info(result: *const GpcResult, out: *mut GpcResultInfo) -> GpcStatus {
    guard(|| {
        let r = &get(result, "result")?.result;
        let info = GpcResultInfo {
            iterations: r.iterations,
            converged: r.converged,
            mu: r.el.mu,
            residual: r.el.residual_norm,
            peak_x: r.peak.0,
            peak_y: r.peak.1,
            width: r.width,
        };
        put(out, info, "out")
    })
}

/// Copies the minimizer into `buf`, which must hold exactly `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn gpc_result_field(result: *const GpcResult, buf: *mut f64, len: usize) -> GpcStatus {
    guard(|| {
        let field = &get(result, "result")?.result.field;
        let values = field.values();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != values.len() {
            return Err((GpcStatus::BufferSize, format!("field has {} values, buffer holds {len}", values.len())));
        }
        let out = std::slice::from_raw_parts_mut(buf, len);
        for (o, v) in out.iter_mut().zip(values.iter()) {
            *o = *v;
        }
        Ok(())
    })
}
