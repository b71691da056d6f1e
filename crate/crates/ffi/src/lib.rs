//! C ABI over the autotune toolkit.
//!
//! Every fallible function returns an [`AtStatus`]; on failure a message is
//! kept per thread and read with [`at_last_error`]. Models are opaque
//! [`AtModel`] handles released with [`at_model_free`]. Audio crosses the
//! boundary as mono `float` samples at [`AT_WORKING_RATE`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use autotune::audio::{AudioBuffer, WORKING_RATE};
use autotune::error::Error;
use autotune::nn::{cents_from_mse, load_checkpoint, AutotunerNet};
use autotune::pipeline::{
    baseline_correct, baseline_shift_cents, correct_performance, CorrectionReport,
};
use autotune::pitch::{hz_to_midi, midi_to_hz};

/// Sample rate of all audio passed through this interface.
pub const AT_WORKING_RATE: u32 = 22_050;

const _: () = assert!(AT_WORKING_RATE == WORKING_RATE);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Checkpoint = 5,
    Shape = 6,
    Range = 7,
    Domain = 8,
    Numeric = 9,
    BufferTooSmall = 10,
    Panic = 11,
    Other = 12,
}

/// A loaded network. Create with [`at_model_load`], release with
/// [`at_model_free`].
pub struct AtModel {
    net: AutotunerNet<f32>,
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

fn status_of(err: &Error) -> AtStatus {
    match err {
        Error::Io { .. } => AtStatus::Io,
        Error::Format(_) | Error::Unsupported(_) | Error::Json(_) => AtStatus::Format,
        Error::IncompatibleCheckpoint(_) | Error::CorruptCheckpoint(_) => AtStatus::Checkpoint,
        Error::Shape(_) | Error::Size(_) => AtStatus::Shape,
        Error::Range(_) => AtStatus::Range,
        Error::Domain(_) | Error::SilentInput => AtStatus::Domain,
        Error::Numeric(_) => AtStatus::Numeric,
        _ => AtStatus::Other,
    }
}

struct Failure(AtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            AtStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AtStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AtStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn audio(p: *const f32, len: usize, what: &str) -> Result<AudioBuffer, Failure> {
    Ok(AudioBuffer::new(
        slice(p, len, what)?.to_vec(),
        WORKING_RATE,
    )?)
}

/// Copies `audio` into `out` and up to `shifts_capacity` per-note shifts
/// (cents) into `shifts`.
unsafe fn emit(
    audio: &AudioBuffer,
    report: &CorrectionReport,
    out: *mut f32,
    out_len: usize,
    shifts: *mut f64,
    shifts_capacity: usize,
    n_notes: *mut usize,
) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if out_len < audio.len() {
        return Err(Failure(
            AtStatus::BufferTooSmall,
            format!("output holds {out_len} samples, need {}", audio.len()),
        ));
    }
    std::slice::from_raw_parts_mut(out, audio.len()).copy_from_slice(&audio.samples);
    if !n_notes.is_null() {
        *n_notes = report.notes.len();
    }
    if !shifts.is_null() {
        let k = shifts_capacity.min(report.notes.len());
        let dst = std::slice::from_raw_parts_mut(shifts, k);
        for (d, n) in dst.iter_mut().zip(&report.notes) {
            *d = n.shift_cents;
        }
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn at_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn at_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by `autotune train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_model_load(path: *const c_char, out: *mut *mut AtModel) -> AtStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| Failure(AtStatus::InvalidUtf8, e.to_string()))?;
        let ck = load_checkpoint(&PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(AtModel { net: ck.net }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`at_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn at_model_free(model: *mut AtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable scalars in the model, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn at_model_param_count(model: *const AtModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.param_count())
}

/// Corrects a vocal against its backing track. `out` receives `vocal_len`
/// samples. Per-note shifts in cents go to `shifts` (up to
/// `shifts_capacity`) and the note count to `n_notes`; both may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn at_correct(
    model: *const AtModel,
    vocal: *const f32,
    vocal_len: usize,
    backing: *const f32,
    backing_len: usize,
    out: *mut f32,
    out_len: usize,
    shifts: *mut f64,
    shifts_capacity: usize,
    n_notes: *mut usize,
) -> AtStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let vocal = audio(vocal, vocal_len, "vocal")?;
        let backing = audio(backing, backing_len, "backing")?;
        let (corrected, report) = correct_performance(&vocal, &backing, &model.net)?;
        emit(
            &corrected,
            &report,
            out,
            out_len,
            shifts,
            shifts_capacity,
            n_notes,
        )
    })
}

/// Snaps every detected note to the nearest equal-tempered degree.
/// Arguments as for [`at_correct`] without the model and backing.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn at_baseline(
    vocal: *const f32,
    vocal_len: usize,
    out: *mut f32,
    out_len: usize,
    shifts: *mut f64,
    shifts_capacity: usize,
    n_notes: *mut usize,
) -> AtStatus {
    guard(|| {
        let vocal = audio(vocal, vocal_len, "vocal")?;
        let (corrected, report) = baseline_correct(&vocal)?;
        emit(
            &corrected,
            &report,
            out,
            out_len,
            shifts,
            shifts_capacity,
            n_notes,
        )
    })
}

/// Cents from `f0_hz` to the nearest equal-tempered pitch.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_baseline_shift_cents(f0_hz: f64, out: *mut f64) -> AtStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = baseline_shift_cents(f0_hz)?;
        Ok(())
    })
}

/// Root-mean-square error in cents for an MSE in squared semitones.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_cents_from_mse(mse: f64, out: *mut f64) -> AtStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = cents_from_mse(mse)?;
        Ok(())
    })
}

/// Frequency of a (possibly fractional) MIDI pitch.
#[no_mangle]
pub extern "C" fn at_midi_to_hz(pitch: f64) -> f64 {
    midi_to_hz(pitch)
}

/// MIDI pitch of a positive frequency.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_hz_to_midi(hz: f64, out: *mut f64) -> AtStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = hz_to_midi(hz)?;
        Ok(())
    })
}
