//! C ABI over `satd_link`.
//!
//! Every function returns a [`SatdStatus`]. On failure a description is
//! available from [`satd_last_error_message`] on the same thread until the
//! next failing call. Strings returned through out-parameters are owned by
//! the caller and must be released with [`satd_string_free`]; model handles
//! with [`satd_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use satd_link::detect::PatternSet;
use satd_link::eval::cohens_kappa;
use satd_link::linker::{extract_references, ReferencePattern};
use satd_link::pairgen::{cosine_similarity, tokenize, TokenizerConfig};
use satd_link::textnn::Classifier;
use satd_link::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    ModelFormat = 4,
    NotTrained = 5,
    InvalidArgument = 6,
    Internal = 7,
}

/// Opaque handle to a loaded relation classifier.
pub struct SatdModel {
    inner: Classifier,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(SatdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => SatdStatus::Io,
            Error::NotTrained => SatdStatus::NotTrained,
            Error::ModelFormat(_) | Error::UnsupportedVersion { .. } | Error::DimensionMismatch { .. } => {
                SatdStatus::ModelFormat
            }
            _ => SatdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SatdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SatdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SatdStatus::Internal
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(SatdStatus::NullArgument, format!("`{name}` is null"))
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn text<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(SatdStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

/// # Safety
/// `out` must be null or valid for a pointer write.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure(SatdStatus::Internal, "string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn satd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn satd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file written by `satd-link train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn satd_model_load(path: *const c_char, out: *mut *mut SatdModel) -> SatdStatus {
    guard(|| {
        let path = text(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Classifier::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(SatdModel { inner }));
        Ok(())
    })
}

/// Loads a model from an in-memory copy of a model file.
///
/// # Safety
/// `bytes` must be valid for `len` bytes and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn satd_model_from_bytes(bytes: *const u8, len: usize, out: *mut *mut SatdModel) -> SatdStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Classifier::from_bytes(std::slice::from_raw_parts(bytes, len))?;
        *out = Box::into_raw(Box::new(SatdModel { inner }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from a `satd_model_*` loader that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn satd_model_free(model: *mut SatdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Classifies one (origin, target) text pair. `label` receives 0 (none),
/// 1 (duplication) or 2 (repayment); `probabilities` receives three values in
/// the same order and may be null.
///
/// # Safety
/// `model` must be a live handle, the texts NUL-terminated, `label` valid for
/// a write and `probabilities` null or valid for three writes.
#[no_mangle]
pub unsafe extern "C" fn satd_model_predict_pair(
    model: *const SatdModel,
    origin: *const c_char,
    target: *const c_char,
    label: *mut u32,
    probabilities: *mut f64,
) -> SatdStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let origin = text(origin, "origin")?;
        let target = text(target, "target")?;
        if label.is_null() {
            return Err(null("label"));
        }
        if model.inner.architecture.inputs != 2 || model.inner.architecture.classes != 3 {
            return Err(Failure(SatdStatus::InvalidArgument, "model is not a pair classifier".into()));
        }
        let p = model.inner.predict_pair(origin, target)?;
        *label = p.label.index() as u32;
        if !probabilities.is_null() {
            std::slice::from_raw_parts_mut(probabilities, 3).copy_from_slice(&p.probabilities);
        }
        Ok(())
    })
}

/// Term-frequency cosine similarity of two texts under the default tokenizer.
///
/// # Safety
/// The texts must be NUL-terminated and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn satd_cosine_similarity(a: *const c_char, b: *const c_char, out: *mut f64) -> SatdStatus {
    guard(|| {
        let a = text(a, "a")?;
        let b = text(b, "b")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let tok = TokenizerConfig::default();
        *out = cosine_similarity(&tokenize(a, &tok), &tokenize(b, &tok));
        Ok(())
    })
}

/// Cohen's kappa of two label sequences of length `len`.
///
/// # Safety
/// `a` and `b` must be valid for `len` reads and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn satd_cohens_kappa(a: *const u32, b: *const u32, len: usize, out: *mut f64) -> SatdStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("a/b"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let a = std::slice::from_raw_parts(a, len);
        let b = std::slice::from_raw_parts(b, len);
        *out = cohens_kappa(a, b)?;
        Ok(())
    })
}

/// JSON array of the built-in SATD keyword patterns found in `text`.
///
/// # Safety
/// `text` must be NUL-terminated and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn satd_detect_keywords(input: *const c_char, out: *mut *mut c_char) -> SatdStatus {
    guard(|| {
        let input = text(input, "text")?;
        let matches = PatternSet::default().matches(input);
        write_string(out, serde_json::to_string(&matches).expect("strings serialize"))
    })
}

/// JSON array of the `#N`, commit-hash and `KEY-N` references in `text`,
/// each with `kind`, `raw`, `normalized` and a byte `span`.
///
/// # Safety
/// `text` must be NUL-terminated and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn satd_extract_references(input: *const c_char, out: *mut *mut c_char) -> SatdStatus {
    guard(|| {
        let input = text(input, "text")?;
        let patterns = [
            ReferencePattern::hash_number(),
            ReferencePattern::hex_hash(),
            ReferencePattern::project_key(None),
        ];
        let refs = extract_references(input, &patterns);
        write_string(out, serde_json::to_string(&refs).expect("references serialize"))
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn satd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
