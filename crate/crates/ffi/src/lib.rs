//! C ABI over the enhancement, metrics and footprint functions.
//!
//! Conventions:
//! - every function returns an [`SgStatus`]; results go through out-pointers
//! - on failure, [`sg_last_error`] describes the most recent error on the
//!   calling thread
//! - a generator is an opaque handle from [`sg_generator_load`], released
//!   with [`sg_generator_free`]
//! - panics never cross the boundary; they surface as `SG_STATUS_PANIC`

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sasegan::attention::attn_footprint;
use sasegan::metrics::{ssnr_samples, stoi_samples};
use sasegan::model::{enhance_samples, Generator};
use sasegan::rng::{stream, Stream};
use sasegan::train::load_checkpoint;
use sasegan::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Checkpoint = 6,
    Shape = 7,
    Metric = 8,
    Panic = 9,
}

/// Opaque trained generator.
pub struct SgGenerator {
    gen: Generator,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SgFootprint {
    pub layer: usize,
    pub time_dim: usize,
    pub raw_map_elems: usize,
    pub pooled_keys: usize,
    pub pooled_map_elems: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> SgStatus {
    match err.root() {
        Error::Io { .. } => SgStatus::Io,
        Error::UnsupportedFormat(_) | Error::MalformedHeader(_) => SgStatus::Format,
        Error::InvalidConfig(_) | Error::IndivisibleChannels { .. } | Error::OutOfRangeLayer { .. } => {
            SgStatus::Config
        }
        Error::VersionMismatch { .. } | Error::ConfigMismatch(_) | Error::CorruptFile(_) => SgStatus::Checkpoint,
        Error::ShapeMismatch(_) | Error::LengthMismatch(..) | Error::InvalidPadLen { .. } => SgStatus::Shape,
        Error::AllSilent | Error::TooShort(_) => SgStatus::Metric,
        _ => SgStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Run `f`, translating errors and panics into a status and the
/// thread's last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SgStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            SgStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(&msg);
            SgStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            SgStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

fn out<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers promise out-pointers are valid when non-null.
    unsafe { ptr.as_mut() }.ok_or(Failure::Null(what))
}

/// Message for the last failed call on this thread; empty after a
/// success. The pointer stays valid until the next call on the thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load the generator from a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_generator_load(path: *const c_char, out_handle: *mut *mut SgGenerator) -> SgStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let slot = out(out_handle, "out_handle")?;
        *slot = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::Invalid("path is not UTF-8".into()))?;
        let gen = load_checkpoint(path)?.gen;
        *slot = Box::into_raw(Box::new(SgGenerator { gen }));
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `handle` must come from [`sg_generator_load`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn sg_generator_free(handle: *mut SgGenerator) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Window length, in samples, the generator processes at a time.
///
/// # Safety
/// `handle` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_generator_window(handle: *const SgGenerator, out_len: *mut usize) -> SgStatus {
    guard(|| {
        let h = handle.as_ref().ok_or(Failure::Null("handle"))?;
        *out(out_len, "out_len")? = h.gen.config().window();
        Ok(())
    })
}

/// Enhance `len` samples of 16 kHz audio in [-1, 1] into `output`
/// (same length). Latents are drawn from a stream seeded by `seed`.
///
/// # Safety
/// `input` and `output` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sg_enhance(
    handle: *const SgGenerator,
    input: *const f64,
    len: usize,
    seed: u64,
    output: *mut f64,
) -> SgStatus {
    guard(|| {
        let h = handle.as_ref().ok_or(Failure::Null("handle"))?;
        let x = slice(input, len, "input")?;
        if output.is_null() {
            return Err(Failure::Null("output"));
        }
        if len == 0 {
            return Err(Failure::Invalid("input is empty".into()));
        }
        let y = enhance_samples(&h.gen, x, &mut stream(seed, Stream::Latent))?;
        std::slice::from_raw_parts_mut(output, len).copy_from_slice(&y);
        Ok(())
    })
}

/// Segmental SNR in dB of `test` against `clean`, both 16 kHz.
///
/// # Safety
/// `clean` and `test` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sg_ssnr(clean: *const f64, test: *const f64, len: usize, out_db: *mut f64) -> SgStatus {
    guard(|| {
        let v = ssnr_samples(slice(clean, len, "clean")?, slice(test, len, "test")?)?;
        *out(out_db, "out_db")? = v;
        Ok(())
    })
}

/// STOI in [0, 1] of `test` against `clean` at `sample_rate` Hz.
///
/// # Safety
/// `clean` and `test` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sg_stoi(
    clean: *const f64,
    test: *const f64,
    len: usize,
    sample_rate: u32,
    out_score: *mut f64,
) -> SgStatus {
    guard(|| {
        let v = stoi_samples(slice(clean, len, "clean")?, slice(test, len, "test")?, sample_rate)?;
        *out(out_score, "out_score")? = v;
        Ok(())
    })
}

/// Attention-map memory at encoder `layer` for windows of `input_len`
/// samples and key pooling `p`.
///
/// # Safety
/// `out_fp` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_attn_footprint(input_len: usize, layer: usize, p: usize, out_fp: *mut SgFootprint) -> SgStatus {
    guard(|| {
        let f = attn_footprint(input_len, layer, p)?;
        *out(out_fp, "out_fp")? = SgFootprint {
            layer: f.layer,
            time_dim: f.time_dim,
            raw_map_elems: f.raw_map_elems,
            pooled_keys: f.pooled_keys,
            pooled_map_elems: f.pooled_map_elems,
        };
        Ok(())
    })
}
