//! C ABI over the `affordance-vqa` core.
//!
//! Functions return an [`AvqaStatus`]; results go through out-pointers.
//! On failure a message is kept per thread and can be read with
//! [`avqa_last_error`]. Strings returned to the caller are owned by the
//! caller and released with [`avqa_string_free`]. Masks and scenes are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use affordance_vqa::evalkit::{self, Heatmap};
use affordance_vqa::geometry::{self, ImageRef, NormBBox, PixelBBox};
use affordance_vqa::mask::{mask_iou, Raster, RleMask};
use affordance_vqa::policy::{contact_point, ContactPlan, PlanSource};
use affordance_vqa::sim::{evaluate_plan, oracle_plan, ArticulatedScene, TrialReason};
use affordance_vqa::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvqaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    ParseError = 4,
    EmptyMask = 5,
    DimensionMismatch = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvqaTrialReason {
    Success = 0,
    OffPart = 1,
    BadDirection = 2,
}

/// Run-length encoded binary mask.
pub struct AvqaMask {
    inner: RleMask,
}

/// Articulated scene for the contact-plan simulator.
pub struct AvqaScene {
    inner: ArticulatedScene,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(AvqaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NoBBox | Error::MalformedBBox(_) | Error::Parse { .. } | Error::Json(_) => AvqaStatus::ParseError,
            Error::EmptyMask => AvqaStatus::EmptyMask,
            Error::DimensionMismatch(_) => AvqaStatus::DimensionMismatch,
            _ => AvqaStatus::InvalidInput,
        };
        Fail(status, e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(AvqaStatus::ParseError, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AvqaStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AvqaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AvqaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AvqaStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(AvqaStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn read4(p: *const f64, what: &str) -> Result<[f64; 4], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, 4);
    Ok([s[0], s[1], s[2], s[3]])
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn owned_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Fail(AvqaStatus::InvalidInput, e.to_string()))
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn avqa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn avqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn avqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Formats a normalized box as `[x0, y0, x1, y1]` with three decimals.
///
/// # Safety
/// `bbox` points to 4 doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn avqa_bbox_format(bbox: *const f64, out: *mut *mut c_char) -> AvqaStatus {
    guard(|| {
        let b = NormBBox::from_f64(read4(bbox, "bbox")?)?;
        put(out, owned_string(geometry::format_bbox(&b))?, "out")
    })
}

/// Reads the first bracketed 4-tuple in `text` into `out` (4 doubles).
///
/// # Safety
/// `text` is a NUL-terminated string; `out` has room for 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn avqa_bbox_parse(text: *const c_char, out: *mut f64) -> AvqaStatus {
    guard(|| {
        let b = geometry::parse_bbox(read_str(text, "text")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&b.to_array());
        Ok(())
    })
}

/// Converts a pixel box (exclusive max) to normalized coordinates on a
/// 1/1000 grid.
///
/// # Safety
/// `pixel_box` points to 4 doubles; `out` has room for 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn avqa_bbox_normalize(
    pixel_box: *const f64,
    width: u32,
    height: u32,
    out: *mut f64,
) -> AvqaStatus {
    guard(|| {
        let [x0, y0, x1, y1] = read4(pixel_box, "pixel_box")?;
        let image = ImageRef::new("ffi", width, height, "")?;
        let b = geometry::normalize_bbox(&PixelBBox::new(x0, y0, x1, y1), &image)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&b.to_array());
        Ok(())
    })
}

/// IoU of two normalized boxes.
///
/// # Safety
/// `a` and `b` point to 4 doubles each; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn avqa_bbox_iou(a: *const f64, b: *const f64, out: *mut f64) -> AvqaStatus {
    guard(|| {
        let a = NormBBox::from_f64(read4(a, "a")?)?;
        let b = NormBBox::from_f64(read4(b, "b")?)?;
        put(out, a.iou(&b), "out")
    })
}

/// Parses `{"size": [h, w], "counts": ...}` into a new mask handle.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn avqa_mask_from_json(json: *const c_char, out: *mut *mut AvqaMask) -> AvqaStatus {
    guard(|| {
        let inner: RleMask = serde_json::from_str(read_str(json, "json")?)?;
        put(out, Box::into_raw(Box::new(AvqaMask { inner })), "out")
    })
}

/// Builds a mask from `width * height` row-major bytes; non-zero is
/// foreground.
///
/// # Safety
/// `pixels` points to `width * height` bytes; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn avqa_mask_from_raster(
    pixels: *const u8,
    width: u32,
    height: u32,
    out: *mut *mut AvqaMask,
) -> AvqaStatus {
    guard(|| {
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let px = std::slice::from_raw_parts(pixels, width as usize * height as usize);
        let r = Raster::from_fn(width, height, |x, y| px[(y * width + x) as usize] != 0);
        let inner = RleMask::from_raster(&r);
        put(out, Box::into_raw(Box::new(AvqaMask { inner })), "out")
    })
}

/// Serializes a mask back to its JSON form.
///
/// # Safety
/// `mask` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn avqa_mask_to_json(mask: *const AvqaMask, out: *mut *mut c_char) -> AvqaStatus {
    guard(|| {
        let m = mask.as_ref().ok_or_else(|| null("mask"))?;
        put(out, owned_string(serde_json::to_string(&m.inner)?)?, "out")
    })
}

/// Foreground pixel count; 0 for NULL.
///
/// # Safety
/// `mask` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn avqa_mask_area(mask: *const AvqaMask) -> u64 {
    mask.as_ref().map_or(0, |m| m.inner.area())
}

/// # Safety
/// `a` and `b` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn avqa_mask_iou(a: *const AvqaMask, b: *const AvqaMask, out: *mut f64) -> AvqaStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| null("a"))?;
        let b = b.as_ref().ok_or_else(|| null("b"))?;
        put(out, mask_iou(&a.inner, &b.inner)?, "out")
    })
}

/// Contact pixel of a mask: the rounded centroid of its largest
/// component, or the nearest foreground pixel to it.
///
/// # Safety
/// `mask` is a live handle; `out_xy` has room for 2 values.
#[no_mangle]
pub unsafe extern "C" fn avqa_mask_contact_point(mask: *const AvqaMask, out_xy: *mut u32) -> AvqaStatus {
    guard(|| {
        let m = mask.as_ref().ok_or_else(|| null("mask"))?;
        let p = contact_point(&m.inner)?;
        if out_xy.is_null() {
            return Err(null("out_xy"));
        }
        std::slice::from_raw_parts_mut(out_xy, 2).copy_from_slice(&p);
        Ok(())
    })
}

/// # Safety
/// `mask` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn avqa_mask_free(mask: *mut AvqaMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

unsafe fn maps(gt: *const f64, pred: *const f64, width: u32, height: u32) -> Result<(Heatmap, Heatmap), Fail> {
    if gt.is_null() || pred.is_null() {
        return Err(null("map"));
    }
    let n = width as usize * height as usize;
    let g = Heatmap::new(width, height, std::slice::from_raw_parts(gt, n).to_vec())?;
    let p = Heatmap::new(width, height, std::slice::from_raw_parts(pred, n).to_vec())?;
    Ok((g, p))
}

/// KL divergence of the normalized prediction from the normalized ground
/// truth.
///
/// # Safety
/// `gt` and `pred` each point to `width * height` doubles.
#[no_mangle]
pub unsafe extern "C" fn avqa_kld(
    gt: *const f64,
    pred: *const f64,
    width: u32,
    height: u32,
    out: *mut f64,
) -> AvqaStatus {
    guard(|| {
        let (g, p) = maps(gt, pred, width, height)?;
        put(out, evalkit::kld(&g, &p)?, "out")
    })
}

/// Histogram intersection of the two normalized maps.
///
/// # Safety
/// As [`avqa_kld`].
#[no_mangle]
pub unsafe extern "C" fn avqa_sim(
    gt: *const f64,
    pred: *const f64,
    width: u32,
    height: u32,
    out: *mut f64,
) -> AvqaStatus {
    guard(|| {
        let (g, p) = maps(gt, pred, width, height)?;
        put(out, evalkit::sim(&g, &p)?, "out")
    })
}

/// Mean standardized prediction over the ground-truth fixation pixels.
///
/// # Safety
/// As [`avqa_kld`].
#[no_mangle]
pub unsafe extern "C" fn avqa_nss(
    gt: *const f64,
    pred: *const f64,
    width: u32,
    height: u32,
    out: *mut f64,
) -> AvqaStatus {
    guard(|| {
        let (g, p) = maps(gt, pred, width, height)?;
        put(out, evalkit::nss(&g, &p)?, "out")
    })
}

/// Parses and validates a scene description.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn avqa_scene_from_json(json: *const c_char, out: *mut *mut AvqaScene) -> AvqaStatus {
    guard(|| {
        let inner: ArticulatedScene = serde_json::from_str(read_str(json, "json")?)?;
        inner.check()?;
        put(out, Box::into_raw(Box::new(AvqaScene { inner })), "out")
    })
}

/// Runs one contact plan. `approach` need not be unit length.
///
/// # Safety
/// `scene` is a live handle; `approach` points to 2 doubles; outputs are
/// writable.
#[no_mangle]
pub unsafe extern "C" fn avqa_scene_evaluate(
    scene: *const AvqaScene,
    x: u32,
    y: u32,
    approach: *const f64,
    cos_threshold: f64,
    out_success: *mut bool,
    out_reason: *mut AvqaTrialReason,
) -> AvqaStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        if approach.is_null() {
            return Err(null("approach"));
        }
        let a = std::slice::from_raw_parts(approach, 2);
        let plan = ContactPlan {
            contact: [x, y],
            approach: [a[0], a[1]],
            source: PlanSource::MaskCentroid,
        };
        let r = evaluate_plan(&s.inner, &plan, cos_threshold);
        let reason = match r.reason {
            TrialReason::Ok => AvqaTrialReason::Success,
            TrialReason::OffPart => AvqaTrialReason::OffPart,
            TrialReason::BadDirection => AvqaTrialReason::BadDirection,
        };
        put(out_success, r.success, "out_success")?;
        put(out_reason, reason, "out_reason")
    })
}

/// Ground-truth plan: handle contact pixel and pulling direction.
///
/// # Safety
/// `scene` is a live handle; `out_xy` has room for 2 values and
/// `out_approach` for 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn avqa_scene_oracle(
    scene: *const AvqaScene,
    out_xy: *mut u32,
    out_approach: *mut f64,
) -> AvqaStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        let p = oracle_plan(&s.inner)?;
        if out_xy.is_null() || out_approach.is_null() {
            return Err(null("output"));
        }
        std::slice::from_raw_parts_mut(out_xy, 2).copy_from_slice(&p.contact);
        std::slice::from_raw_parts_mut(out_approach, 2).copy_from_slice(&p.approach);
        Ok(())
    })
}

/// # Safety
/// `scene` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn avqa_scene_free(scene: *mut AvqaScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}
