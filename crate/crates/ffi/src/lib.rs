//! C ABI over `fan-core`.
//!
//! Objects are opaque heap handles created by `fan_*_new` (or a loader) and
//! released with the matching `fan_*_free`. Every fallible call returns a
//! [`FanStatus`]; on failure `fan_last_error_message` describes the error
//! for the calling thread. Outputs are written only on success.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fan_core::control::{compute_command, reset, ControllerConfig, ControllerMode, ControllerState};
use fan_core::detection::{classify_regions, coarse_detect, DetectionConfig};
use fan_core::providers::{load_descriptor_field, load_masks};
use fan_core::types::QueryKind;
use fan_core::{DescriptorField, FanError, LabeledRegion, Mask, QueryDescriptor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FanStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Shape = 3,
    EmptyRegion = 4,
    Range = 5,
    Format = 6,
    NoMemory = 7,
    DegenerateQuery = 8,
    Config = 9,
    Io = 10,
    Json = 11,
    InvalidUtf8 = 12,
    Panic = 13,
}

impl From<&FanError> for FanStatus {
    fn from(e: &FanError) -> Self {
        match e {
            FanError::Dimension { .. } => Self::Dimension,
            FanError::Shape { .. } => Self::Shape,
            FanError::EmptyRegion => Self::EmptyRegion,
            FanError::Range(_) => Self::Range,
            FanError::Format { .. } => Self::Format,
            FanError::NoMemory => Self::NoMemory,
            FanError::DegenerateQuery => Self::DegenerateQuery,
            FanError::Config(_) => Self::Config,
            FanError::Io(_) => Self::Io,
            FanError::Json(_) => Self::Json,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

struct Failure(FanStatus, String);

impl From<FanError> for Failure {
    fn from(e: FanError) -> Self {
        Failure(FanStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FanStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FanStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FanStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FanStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn fan_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Cosine similarity `a.b / (|a||b| + epsilon)` clamped to [-1, 1].
#[no_mangle]
pub unsafe extern "C" fn fan_cosine_similarity(
    a: *const f32,
    b: *const f32,
    len: usize,
    epsilon: f64,
    out: *mut f32,
) -> FanStatus {
    guard(|| {
        let (a, b) = (slice(a, len, "a")?, slice(b, len, "b")?);
        let out = handle_mut(out, "out")?;
        *out = fan_core::cosine_similarity(a, b, epsilon)?;
        Ok(())
    })
}

/// Descriptor field of `height x width` pixels with `dim` values each.
pub struct FanField(DescriptorField);

/// Copies `height * width * dim` row-major values into a new field.
#[no_mangle]
pub unsafe extern "C" fn fan_field_new(
    height: usize,
    width: usize,
    dim: usize,
    data: *const f32,
    out: *mut *mut FanField,
) -> FanStatus {
    guard(|| {
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Failure(FanStatus::Range, "field size overflows".into()))?;
        let values = slice(data, n, "data")?.to_vec();
        put(out, FanField(DescriptorField::new(height, width, dim, values)?))
    })
}

/// Reads a `.fand` descriptor field file.
#[no_mangle]
pub unsafe extern "C" fn fan_field_load(path: *const c_char, out: *mut *mut FanField) -> FanStatus {
    guard(|| {
        let path = text(path, "path")?;
        put(out, FanField(load_descriptor_field(path)?))
    })
}

/// Writes height, width and dim of `field`; any output may be null.
#[no_mangle]
pub unsafe extern "C" fn fan_field_shape(
    field: *const FanField,
    height: *mut usize,
    width: *mut usize,
    dim: *mut usize,
) -> FanStatus {
    guard(|| {
        let f = &handle(field, "field")?.0;
        for (p, v) in [(height, f.height()), (width, f.width()), (dim, f.dim())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fan_field_free(field: *mut FanField) {
    free(field)
}

/// Ordered list of binary masks.
pub struct FanMasks(Vec<Mask>);

#[no_mangle]
pub extern "C" fn fan_masks_new() -> *mut FanMasks {
    Box::into_raw(Box::new(FanMasks(Vec::new())))
}

/// Reads a `.fanm` mask file.
#[no_mangle]
pub unsafe extern "C" fn fan_masks_load(path: *const c_char, out: *mut *mut FanMasks) -> FanStatus {
    guard(|| {
        let path = text(path, "path")?;
        put(out, FanMasks(load_masks(path)?))
    })
}

/// Appends a mask given as `height * width` row-major bytes, 0 or 1.
#[no_mangle]
pub unsafe extern "C" fn fan_masks_push(
    masks: *mut FanMasks,
    height: usize,
    width: usize,
    values: *const u8,
) -> FanStatus {
    guard(|| {
        let masks = handle_mut(masks, "masks")?;
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Failure(FanStatus::Range, "mask size overflows".into()))?;
        let values = slice(values, n, "values")?.to_vec();
        masks.0.push(Mask::from_values(height, width, values)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fan_masks_len(masks: *const FanMasks) -> usize {
    masks.as_ref().map_or(0, |m| m.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn fan_masks_free(masks: *mut FanMasks) {
    free(masks)
}

/// Ordered list of labeled query vectors.
pub struct FanQueries(Vec<QueryDescriptor>);

#[no_mangle]
pub extern "C" fn fan_queries_new() -> *mut FanQueries {
    Box::into_raw(Box::new(FanQueries(Vec::new())))
}

/// Appends a query; `label` is NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn fan_queries_push(
    queries: *mut FanQueries,
    label: *const c_char,
    vector: *const f32,
    dim: usize,
) -> FanStatus {
    guard(|| {
        let queries = handle_mut(queries, "queries")?;
        let label = text(label, "label")?;
        let v = slice(vector, dim, "vector")?.to_vec();
        queries.0.push(QueryDescriptor::new(label, v, QueryKind::Precomputed)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fan_queries_len(queries: *const FanQueries) -> usize {
    queries.as_ref().map_or(0, |q| q.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn fan_queries_free(queries: *mut FanQueries) {
    free(queries)
}

/// Detection result list.
pub struct FanRegions(Vec<LabeledRegion>);

/// Summary of one region. `query` is the winning query index or -1 when the
/// region is unlabeled; the box is zero for an empty mask.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FanRegionInfo {
    pub query: i64,
    pub score: f32,
    pub area: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

fn detection_config(alpha: f32) -> Result<DetectionConfig, Failure> {
    let cfg = DetectionConfig::default().with_alpha(alpha);
    cfg.validate()?;
    Ok(cfg)
}

/// Labels each mask with its most similar query when the similarity reaches
/// `alpha`. Results follow the mask order.
#[no_mangle]
pub unsafe extern "C" fn fan_classify_regions(
    field: *const FanField,
    masks: *const FanMasks,
    queries: *const FanQueries,
    alpha: f32,
    out: *mut *mut FanRegions,
) -> FanStatus {
    guard(|| {
        let field = &handle(field, "field")?.0;
        let masks = &handle(masks, "masks")?.0;
        let queries = &handle(queries, "queries")?.0;
        let regions = classify_regions(field, masks, queries, &detection_config(alpha)?)?;
        put(out, FanRegions(regions))
    })
}

/// Segmenter-free detection: connected regions of pixels whose most similar
/// query is `target` with similarity at least `alpha`.
#[no_mangle]
pub unsafe extern "C" fn fan_coarse_detect(
    field: *const FanField,
    queries: *const FanQueries,
    target: usize,
    alpha: f32,
    out: *mut *mut FanRegions,
) -> FanStatus {
    guard(|| {
        let field = &handle(field, "field")?.0;
        let queries = &handle(queries, "queries")?.0;
        let regions = coarse_detect(field, queries, target, &detection_config(alpha)?)?;
        put(out, FanRegions(regions))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fan_regions_len(regions: *const FanRegions) -> usize {
    regions.as_ref().map_or(0, |r| r.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn fan_regions_get(
    regions: *const FanRegions,
    index: usize,
    out: *mut FanRegionInfo,
) -> FanStatus {
    guard(|| {
        let r = region(regions, index)?;
        let out = handle_mut(out, "out")?;
        let b = r.mask.bbox();
        *out = FanRegionInfo {
            query: r.query.map_or(-1, |q| q as i64),
            score: r.score,
            area: r.mask.count(),
            x: b.map_or(0, |b| b.x),
            y: b.map_or(0, |b| b.y),
            w: b.map_or(0, |b| b.w),
            h: b.map_or(0, |b| b.h),
        };
        Ok(())
    })
}

/// Copies region `index`'s mask into `values` (`len` must equal height * width).
#[no_mangle]
pub unsafe extern "C" fn fan_regions_mask(
    regions: *const FanRegions,
    index: usize,
    values: *mut u8,
    len: usize,
) -> FanStatus {
    guard(|| {
        let r = region(regions, index)?;
        let src = r.mask.values();
        if len != src.len() {
            return Err(Failure(
                FanStatus::Range,
                format!("buffer holds {len} values, mask has {}", src.len()),
            ));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), values, len);
        Ok(())
    })
}

unsafe fn region<'a>(regions: *const FanRegions, index: usize) -> Result<&'a LabeledRegion, Failure> {
    let regions = &handle(regions, "regions")?.0;
    regions
        .get(index)
        .ok_or_else(|| Failure(FanStatus::Range, format!("region {index} of {}", regions.len())))
}

#[no_mangle]
pub unsafe extern "C" fn fan_regions_free(regions: *mut FanRegions) {
    free(regions)
}

/// Controller mode for [`fan_controller_new`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FanControllerMode {
    P = 0,
    Pid = 1,
}

/// Gains and limits; [`fan_controller_default_config`] fills the defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FanControllerConfig {
    pub mode: FanControllerMode,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub beta: f64,
    pub v_max: f64,
    pub integral_clamp: f64,
    pub dt: f64,
}

impl From<ControllerConfig> for FanControllerConfig {
    fn from(c: ControllerConfig) -> Self {
        Self {
            mode: match c.mode {
                ControllerMode::P => FanControllerMode::P,
                ControllerMode::Pid => FanControllerMode::Pid,
            },
            kp: c.kp,
            ki: c.ki,
            kd: c.kd,
            beta: c.beta,
            v_max: c.v_max,
            integral_clamp: c.integral_clamp,
            dt: c.dt,
        }
    }
}

impl From<FanControllerConfig> for ControllerConfig {
    fn from(c: FanControllerConfig) -> Self {
        Self {
            mode: match c.mode {
                FanControllerMode::P => ControllerMode::P,
                FanControllerMode::Pid => ControllerMode::Pid,
            },
            kp: c.kp,
            ki: c.ki,
            kd: c.kd,
            beta: c.beta,
            v_max: c.v_max,
            integral_clamp: c.integral_clamp,
            dt: c.dt,
        }
    }
}

/// Stateful pixel-error to velocity controller.
pub struct FanController {
    cfg: ControllerConfig,
    state: ControllerState,
}

#[no_mangle]
pub extern "C" fn fan_controller_default_config() -> FanControllerConfig {
    ControllerConfig::default().into()
}

#[no_mangle]
pub unsafe extern "C" fn fan_controller_new(
    config: *const FanControllerConfig,
    out: *mut *mut FanController,
) -> FanStatus {
    guard(|| {
        let cfg: ControllerConfig = (*handle(config, "config")?).into();
        cfg.validate()?;
        put(
            out,
            FanController {
                cfg,
                state: ControllerState::default(),
            },
        )
    })
}

/// Feeds one pixel error and writes the velocity command. A non-finite
/// error yields a zero command and resets the controller; `faulted` (may be
/// null) reports that case.
#[no_mangle]
pub unsafe extern "C" fn fan_controller_step(
    controller: *mut FanController,
    error_x: f64,
    error_y: f64,
    vx: *mut f64,
    vy: *mut f64,
    faulted: *mut bool,
) -> FanStatus {
    guard(|| {
        let c = handle_mut(controller, "controller")?;
        if vx.is_null() || vy.is_null() {
            return Err(null("command output"));
        }
        let (cmd, next) = compute_command(&c.state, (error_x, error_y), &c.cfg);
        c.state = next;
        *vx = cmd.vx;
        *vy = cmd.vy;
        if let Some(f) = faulted.as_mut() {
            *f = c.state.faulted;
        }
        Ok(())
    })
}

/// Clears integral, derivative memory and the filtered command.
#[no_mangle]
pub unsafe extern "C" fn fan_controller_reset(controller: *mut FanController) -> FanStatus {
    guard(|| {
        let c = handle_mut(controller, "controller")?;
        c.state = reset(&c.state);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fan_controller_free(controller: *mut FanController) {
    free(controller)
}
