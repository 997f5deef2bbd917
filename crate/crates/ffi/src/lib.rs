//! C ABI over the `deepframe` engine.
//!
//! Every function returns a [`DfStatus`]. On failure the message is kept per
//! thread and can be read with [`df_last_error`]. Objects are opaque handles
//! created by `df_*_new`/`df_*_load` and released with the matching `_free`.
//! Images are `[channels, height, width]` row-major doubles in [0, 1]; flows
//! are `[height, width, 2]` interleaved (dx, dy) pairs.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use deepframe::data::{load_image, save_image};
use deepframe::flow::{average_frames, warp_middle};
use deepframe::metrics::{gradient_energy, mse_metric, psnr, ssim};
use deepframe::{Error, FlowField, Model, Tensor};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Format = 4,
    Io = 5,
    NonFinite = 6,
    Checkpoint = 7,
    Panic = 8,
}

/// An image tensor.
pub struct DfTensor(Tensor);

/// A dense optical-flow field.
pub struct DfFlow(FlowField);

/// A trained generator.
pub struct DfModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DfStatus {
    match e {
        Error::ShapeMismatch { .. } => DfStatus::ShapeMismatch,
        Error::NonFinite { .. } | Error::Diverged { .. } => DfStatus::NonFinite,
        Error::InvalidArgument(_) | Error::InvalidConfig(_) | Error::MissingGradient(_) => DfStatus::InvalidArgument,
        Error::Format { .. } => DfStatus::Format,
        Error::VersionMismatch { .. } | Error::MissingParameter(_) | Error::UnexpectedParameter(_) => {
            DfStatus::Checkpoint
        }
        Error::Io { .. } => DfStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DfStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer passed for `{what}`"));
            DfStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            DfStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_f64(out: *mut f64, value: f64) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = value;
    Ok(())
}

/// Message of the last failed call on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `channels * height * width` values from `data` into a new tensor.
///
/// # Safety
/// `data` must point to that many readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_tensor_new(
    channels: usize,
    height: usize,
    width: usize,
    data: *const f64,
    out: *mut *mut DfTensor,
) -> DfStatus {
    guard(|| {
        if data.is_null() {
            return Err(Fail::Null("data"));
        }
        let n = channels
            .checked_mul(height)
            .and_then(|x| x.checked_mul(width))
            .ok_or_else(|| Error::InvalidArgument("tensor extent overflows".into()))?;
        let v = std::slice::from_raw_parts(data, n).to_vec();
        put(out, DfTensor(Tensor::from_vec(&[channels, height, width], v)?))
    })
}

/// # Safety
/// `t` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn df_tensor_free(t: *mut DfTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Writes the three extents of an image tensor.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_tensor_shape(
    t: *const DfTensor,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> DfStatus {
    guard(|| {
        let t = borrow(t, "tensor")?;
        if channels.is_null() || height.is_null() || width.is_null() {
            return Err(Fail::Null("extent"));
        }
        match t.0.shape() {
            [c, h, w] => {
                *channels = *c;
                *height = *h;
                *width = *w;
                Ok(())
            }
            s => Err(Error::InvalidArgument(format!("tensor has shape {s:?}, not [C, H, W]")).into()),
        }
    })
}

/// Copies the tensor's values into `buf`, which holds `len` doubles.
///
/// # Safety
/// `buf` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn df_tensor_copy_data(t: *const DfTensor, buf: *mut f64, len: usize) -> DfStatus {
    guard(|| {
        let t = borrow(t, "tensor")?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        if len != t.0.len() {
            return Err(Error::InvalidArgument(format!("buffer holds {len} values, tensor has {}", t.0.len())).into());
        }
        ptr::copy_nonoverlapping(t.0.data().as_ptr(), buf, len);
        Ok(())
    })
}

/// Reads a PNG or binary PPM image.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_image_load(path: *const c_char, out: *mut *mut DfTensor) -> DfStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        put(out, DfTensor(load_image(&p)?))
    })
}

/// Writes an image; PNG when the path ends in `.png`, PPM otherwise.
///
/// # Safety
/// `t` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn df_image_save(t: *const DfTensor, path: *const c_char) -> DfStatus {
    guard(|| {
        let t = borrow(t, "tensor")?;
        let p = path_arg(path, "path")?;
        Ok(save_image(&t.0, &p)?)
    })
}

/// Builds a flow field from `height * width` interleaved (dx, dy) pairs.
///
/// # Safety
/// `data` must hold `2 * width * height` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_flow_new(width: usize, height: usize, data: *const f64, out: *mut *mut DfFlow) -> DfStatus {
    guard(|| {
        if data.is_null() {
            return Err(Fail::Null("data"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidArgument("flow extent overflows".into()))?;
        let raw = std::slice::from_raw_parts(data, 2 * n);
        let vectors = raw.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        put(out, DfFlow(FlowField::new(width, height, vectors)?))
    })
}

/// # Safety
/// `f` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn df_flow_free(f: *mut DfFlow) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_flow_extent(f: *const DfFlow, width: *mut usize, height: *mut usize) -> DfStatus {
    guard(|| {
        let f = borrow(f, "flow")?;
        if width.is_null() || height.is_null() {
            return Err(Fail::Null("extent"));
        }
        *width = f.0.width;
        *height = f.0.height;
        Ok(())
    })
}

/// Copies the interleaved (dx, dy) pairs into `buf` of `len` doubles.
///
/// # Safety
/// `buf` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn df_flow_copy_data(f: *const DfFlow, buf: *mut f64, len: usize) -> DfStatus {
    guard(|| {
        let f = borrow(f, "flow")?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        if len != 2 * f.0.vectors.len() {
            return Err(Error::InvalidArgument(format!("buffer holds {len} values, flow has {}", 2 * f.0.vectors.len())).into());
        }
        let out = std::slice::from_raw_parts_mut(buf, len);
        for (dst, v) in out.chunks_exact_mut(2).zip(&f.0.vectors) {
            dst.copy_from_slice(v);
        }
        Ok(())
    })
}

/// Reads a Middlebury `.flo` file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_flow_load(path: *const c_char, out: *mut *mut DfFlow) -> DfStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        put(out, DfFlow(FlowField::load(&p)?))
    })
}

/// Writes a Middlebury `.flo` file.
///
/// # Safety
/// `f` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn df_flow_save(f: *const DfFlow, path: *const c_char) -> DfStatus {
    guard(|| {
        let f = borrow(f, "flow")?;
        let p = path_arg(path, "path")?;
        Ok(f.0.save(&p)?)
    })
}

/// Loads a generator from a training checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_model_load(path: *const c_char, out: *mut *mut DfModel) -> DfStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        put(out, DfModel(Model::load(&p)?))
    })
}

/// # Safety
/// `m` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn df_model_free(m: *mut DfModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// 1 if the model consumes an external flow, else 0.
///
/// # Safety
/// `m` must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_model_needs_flow(m: *const DfModel, out: *mut i32) -> DfStatus {
    guard(|| {
        let m = borrow(m, "model")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = i32::from(matches!(m.0.flow_mode(), Some(deepframe::networks::FlowMode::External)));
        Ok(())
    })
}

/// Predicts the frame halfway between `first` and `second`. `flow` may be null
/// unless the model was trained on external flow.
///
/// # Safety
/// Handles must be valid (`flow` may be null); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_model_interpolate(
    m: *const DfModel,
    first: *const DfTensor,
    second: *const DfTensor,
    flow: *const DfFlow,
    out: *mut *mut DfTensor,
) -> DfStatus {
    guard(|| {
        let m = borrow(m, "model")?;
        let a = borrow(first, "first")?;
        let b = borrow(second, "second")?;
        let f = flow.as_ref().map(|f| &f.0);
        put(out, DfTensor(m.0.interpolate(&a.0, &b.0, f)?))
    })
}

/// Pixelwise mean of two frames.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_average(first: *const DfTensor, second: *const DfTensor, out: *mut *mut DfTensor) -> DfStatus {
    guard(|| {
        let a = borrow(first, "first")?;
        let b = borrow(second, "second")?;
        put(out, DfTensor(average_frames(&a.0, &b.0)?))
    })
}

/// Symmetric flow warp: both frames are sampled half a flow step toward the
/// middle and averaged.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_warp_middle(
    first: *const DfTensor,
    second: *const DfTensor,
    flow: *const DfFlow,
    out: *mut *mut DfTensor,
) -> DfStatus {
    guard(|| {
        let a = borrow(first, "first")?;
        let b = borrow(second, "second")?;
        let f = borrow(flow, "flow")?;
        put(out, DfTensor(warp_middle(&a.0, &b.0, &f.0)?))
    })
}

/// Mean squared error between two images of equal shape.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_mse(a: *const DfTensor, b: *const DfTensor, out: *mut f64) -> DfStatus {
    guard(|| {
        let (a, b) = (borrow(a, "a")?, borrow(b, "b")?);
        put_f64(out, mse_metric(&a.0, &b.0)?)
    })
}

/// PSNR in dB for unit peak; +inf for identical images.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_psnr(a: *const DfTensor, b: *const DfTensor, out: *mut f64) -> DfStatus {
    guard(|| {
        let (a, b) = (borrow(a, "a")?, borrow(b, "b")?);
        put_f64(out, psnr(mse_metric(&a.0, &b.0)?))
    })
}

/// Mean SSIM on luma with an 11x11 Gaussian window.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_ssim(a: *const DfTensor, b: *const DfTensor, out: *mut f64) -> DfStatus {
    guard(|| {
        let (a, b) = (borrow(a, "a")?, borrow(b, "b")?);
        put_f64(out, ssim(&a.0, &b.0)?)
    })
}

/// Mean squared finite-difference gradient, a sharpness measure.
///
/// # Safety
/// `t` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_gradient_energy(t: *const DfTensor, out: *mut f64) -> DfStatus {
    guard(|| {
        let t = borrow(t, "tensor")?;
        put_f64(out, gradient_energy(&t.0)?)
    })
}
