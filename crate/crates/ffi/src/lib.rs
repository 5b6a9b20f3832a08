//! C ABI over `roar-core`.
//!
//! Every function returns a [`RoarStatus`]. On failure a message is kept per
//! thread and can be copied out with [`roar_last_error_message`]. Models are
//! opaque handles created by `roar_model_*` constructors and released with
//! [`roar_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use roar_core::cost::CostModel;
use roar_core::error::Error;
use roar_core::model::{Classifier, LinearModel, Model};
use roar_core::recourse::{cfe, roar, PerturbationSet, RecourseConfig, RecourseResult};
use roar_core::theory::{exact_invalidation_probability, theorem2_rhs, GaussianTheoryInput};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoarNorm {
    L2 = 0,
    Linf = 1,
    L1 = 2,
    Box = 3,
}

/// Opaque model handle.
pub struct RoarModel {
    inner: Model,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RoarRecourseConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub delta_max: f64,
    pub norm: RoarNorm,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RoarRecourseInfo {
    pub cost: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub valid_on_source: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RoarStatus {
    match e {
        e if e.is_numerical() => RoarStatus::NumericalError,
        Error::InvalidConfig(_) | Error::DimensionMismatch { .. } => RoarStatus::InvalidArgument,
        _ => RoarStatus::DataError,
    }
}

struct Fail(RoarStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RoarStatus::NullPointer, format!("null pointer: {what}"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RoarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RoarStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RoarStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Fail(RoarStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn model_ref<'a>(model: *const RoarModel) -> Result<&'a Model, Fail> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn emit(model: Model, out: *mut *mut RoarModel) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(RoarModel { inner: model }));
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn roar_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a model from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roar_model_from_json(json: *const c_char, out: *mut *mut RoarModel) -> RoarStatus {
    guard(|| emit(Model::from_json(str_arg(json, "json")?)?, out))
}

/// Loads a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roar_model_load(path: *const c_char, out: *mut *mut RoarModel) -> RoarStatus {
    guard(|| emit(Model::load(Path::new(str_arg(path, "path")?))?, out))
}

/// Builds a logistic model from weights and an intercept.
///
/// # Safety
/// `weights` must point to `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roar_model_linear(weights: *const f64, dim: usize, intercept: f64, out: *mut *mut RoarModel) -> RoarStatus {
    guard(|| {
        let w = slice(weights, dim, "weights")?.to_vec();
        emit(Model::Linear(LinearModel::new(w, intercept)?), out)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a `roar_model_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn roar_model_free(model: *mut RoarModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roar_model_dim(model: *const RoarModel, out: *mut usize) -> RoarStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.dim();
        Ok(())
    })
}

/// Probability of label 1 at `x`.
///
/// # Safety
/// `x` must point to `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roar_model_predict_proba(model: *const RoarModel, x: *const f64, dim: usize, out: *mut f64) -> RoarStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = m.predict_proba(slice(x, dim, "x")?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = p;
        Ok(())
    })
}

/// Defaults matching the library's recourse configuration.
#[no_mangle]
pub extern "C" fn roar_recourse_config_default() -> RoarRecourseConfig {
    let d = RecourseConfig::default();
    let delta_max = match d.perturbation {
        PerturbationSet::NormBall { delta_max, .. } | PerturbationSet::Box { delta_max, .. } => delta_max,
    };
    RoarRecourseConfig {
        lambda: d.lambda,
        learning_rate: d.learning_rate,
        max_iterations: d.max_iterations,
        tolerance: d.tolerance,
        delta_max,
        norm: RoarNorm::L2,
    }
}

fn recourse_config(c: &RoarRecourseConfig) -> RecourseConfig {
    let perturbation = match c.norm {
        RoarNorm::L2 => PerturbationSet::l2(c.delta_max),
        RoarNorm::Linf => PerturbationSet::NormBall {
            p: f64::INFINITY,
            delta_max: c.delta_max,
        },
        RoarNorm::L1 => PerturbationSet::NormBall { p: 1.0, delta_max: c.delta_max },
        RoarNorm::Box => PerturbationSet::symmetric_box(c.delta_max),
    };
    RecourseConfig {
        lambda: c.lambda,
        learning_rate: c.learning_rate,
        max_iterations: c.max_iterations,
        tolerance: c.tolerance,
        perturbation,
        ..RecourseConfig::default()
    }
}

#[derive(Clone, Copy)]
enum Which {
    Cfe,
    Roar,
}

#[allow(clippy::too_many_arguments)]
unsafe fn run_recourse(
    which: Which,
    model: *const RoarModel,
    x: *const f64,
    dim: usize,
    cost_weights: *const f64,
    config: *const RoarRecourseConfig,
    out_cf: *mut f64,
    out_len: usize,
    info: *mut RoarRecourseInfo,
) -> RoarStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = slice(x, dim, "x")?;
        let cfg = recourse_config(config.as_ref().ok_or_else(|| null("config"))?);
        let cost = if cost_weights.is_null() {
            CostModel::L1
        } else {
            CostModel::pfc(slice(cost_weights, dim, "cost_weights")?.to_vec())?
        };
        if out_cf.is_null() {
            return Err(null("out_cf"));
        }
        if out_len < dim {
            return Err(Fail(RoarStatus::BufferTooSmall, format!("output buffer holds {out_len} values, need {dim}")));
        }
        let r: RecourseResult = match which {
            Which::Cfe => cfe(m, x, &cost, &cfg)?,
            Which::Roar => {
                let lin = m
                    .as_linear()
                    .ok_or_else(|| Fail(RoarStatus::InvalidArgument, "roar needs a linear model".into()))?;
                roar(lin, x, &cost, &cfg)?
            }
        };
        std::slice::from_raw_parts_mut(out_cf, dim).copy_from_slice(&r.counterfactual);
        if let Some(info) = info.as_mut() {
            *info = RoarRecourseInfo {
                cost: r.cost,
                objective: r.objective,
                iterations: r.iterations,
                converged: r.converged,
                valid_on_source: r.valid_on_source,
            };
        }
        Ok(())
    })
}

/// Counterfactual explanation for `x`. `cost_weights` may be null for the
/// L1 cost, or point to `dim` nonnegative feature weights. `info` may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn roar_cfe(
    model: *const RoarModel,
    x: *const f64,
    dim: usize,
    cost_weights: *const f64,
    config: *const RoarRecourseConfig,
    out_cf: *mut f64,
    out_len: usize,
    info: *mut RoarRecourseInfo,
) -> RoarStatus {
    run_recourse(Which::Cfe, model, x, dim, cost_weights, config, out_cf, out_len, info)
}

/// Recourse robust to model shifts in the configured set; needs a linear model.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn roar_robust_recourse(
    model: *const RoarModel,
    x: *const f64,
    dim: usize,
    cost_weights: *const f64,
    config: *const RoarRecourseConfig,
    out_cf: *mut f64,
    out_len: usize,
    info: *mut RoarRecourseInfo,
) -> RoarStatus {
    run_recourse(Which::Roar, model, x, dim, cost_weights, config, out_cf, out_len, info)
}

/// Probability that a recourse drawn from N(mu, sigma) and valid under `w`
/// is invalid under `w + delta`. `sigma` is row-major `dim * dim`.
///
/// # Safety
/// `w`, `delta`, `mu` must hold `dim` values and `sigma` `dim * dim`.
#[no_mangle]
pub unsafe extern "C" fn roar_invalidation_probability(
    w: *const f64,
    delta: *const f64,
    mu: *const f64,
    sigma: *const f64,
    dim: usize,
    out: *mut f64,
) -> RoarStatus {
    guard(|| {
        let s = slice(sigma, dim * dim, "sigma")?;
        let input = GaussianTheoryInput::new(
            slice(w, dim, "w")?.to_vec(),
            slice(delta, dim, "delta")?.to_vec(),
            slice(mu, dim, "mu")?.to_vec(),
            s.chunks(dim.max(1)).map(<[f64]>::to_vec).collect(),
        )?;
        let p = exact_invalidation_probability(&input)?;
        *out.as_mut().ok_or_else(|| null("out"))? = p;
        Ok(())
    })
}

/// Upper bound on the extra cost of robust recourse.
///
/// # Safety
/// `w`, `delta`, `mu` must hold `dim` values.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn roar_cost_increase_bound(
    lambda: f64,
    w: *const f64,
    delta: *const f64,
    mu: *const f64,
    dim: usize,
    diameter: f64,
    eta: f64,
    alpha: f64,
    out: *mut f64,
) -> RoarStatus {
    guard(|| {
        let v = theorem2_rhs(lambda, slice(w, dim, "w")?, slice(delta, dim, "delta")?, slice(mu, dim, "mu")?, diameter, eta, alpha)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}
