//! C ABI over the driftbench library.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a [`DbStatus`];
//! on failure the message is available through [`db_last_error`] on the
//! same thread. No call unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use driftbench::adapt::{evaluate, train_run, AdaptConfig};
use driftbench::bench::{eval_seed, init_model, split_episodes};
use driftbench::model::{ArchitectureSpec, Model, VariantTag};
use driftbench::synthgen::{generate, Dataset, DatasetSpec, Variant};
use driftbench::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DbStatus {
    Ok = 0,
    NullArgument = 1,
    Config = 2,
    Dimension = 3,
    Contract = 4,
    Incomplete = 5,
    Io = 6,
    Json = 7,
    InvalidUtf8 = 8,
    Panic = 9,
}

/// Dataset variant selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DbDatasetVariant {
    S1 = 1,
    S2 = 2,
    S3 = 3,
}

/// Model variant selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DbModelVariant {
    Dynamic = 0,
    Static = 1,
    InitAll = 2,
    Lora = 3,
}

/// Opaque dataset handle.
pub struct DbDataset(Dataset);

/// Opaque model handle.
pub struct DbModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DbStatus {
    match e {
        Error::Config { .. } => DbStatus::Config,
        Error::Dimension(_) => DbStatus::Dimension,
        Error::Contract(_) => DbStatus::Contract,
        Error::Incomplete(_) => DbStatus::Incomplete,
        Error::Io { .. } => DbStatus::Io,
        Error::Json(_) => DbStatus::Json,
    }
}

enum Fail {
    Null(&'static str),
    Utf8(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DbStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer passed for {what}"));
            DbStatus::NullArgument
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(&format!("{what} is not valid UTF-8"));
            DbStatus::InvalidUtf8
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            DbStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(what))
}

unsafe fn opt_config(p: *const c_char) -> Result<AdaptConfig, Fail> {
    if p.is_null() {
        Ok(AdaptConfig::default())
    } else {
        Ok(AdaptConfig::from_json(cstr(p, "config_json")?)?)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn db_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn db_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Generates `episodes` episodes with the default window lengths.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn db_dataset_generate(
    variant: DbDatasetVariant,
    seed: u64,
    episodes: usize,
    out: *mut *mut DbDataset,
) -> DbStatus {
    guard(|| {
        let v = match variant {
            DbDatasetVariant::S1 => Variant::S1,
            DbDatasetVariant::S2 => Variant::S2,
            DbDatasetVariant::S3 => Variant::S3,
        };
        put(out, DbDataset(generate(&DatasetSpec::new(v, seed), episodes)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn db_dataset_load(path: *const c_char, out: *mut *mut DbDataset) -> DbStatus {
    guard(|| {
        let p = PathBuf::from(cstr(path, "path")?);
        put(out, DbDataset(Dataset::load(&p)?))
    })
}

/// # Safety
/// `dataset` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn db_dataset_save(dataset: *const DbDataset, path: *const c_char) -> DbStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        Ok(ds.0.save(&PathBuf::from(cstr(path, "path")?))?)
    })
}

/// # Safety
/// `dataset` must be a live handle; `len` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn db_dataset_len(dataset: *const DbDataset, len: *mut usize) -> DbStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        *handle_mut(len, "len")? = ds.0.episodes.len();
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn db_dataset_free(dataset: *mut DbDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Fresh model with the default architecture (60-sample input, 30-sample
/// output). LoRA needs a trained base: use [`db_model_lora_from`].
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn db_model_new(variant: DbModelVariant, seed: u64, out: *mut *mut DbModel) -> DbStatus {
    guard(|| {
        let tag = match variant {
            DbModelVariant::Dynamic => VariantTag::Dynamic,
            DbModelVariant::Static => VariantTag::Static,
            DbModelVariant::InitAll => VariantTag::InitAll,
            DbModelVariant::Lora => {
                return Err(Error::config("variant", "create LoRA models with db_model_lora_from").into())
            }
        };
        let arch = ArchitectureSpec::kunet(60, 30);
        put(out, DbModel(init_model(&arch, tag, &AdaptConfig::default(), seed, None)?))
    })
}

/// LoRA model over a frozen copy of a static `base`.
///
/// # Safety
/// `base` must be a live handle; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn db_model_lora_from(base: *const DbModel, seed: u64, out: *mut *mut DbModel) -> DbStatus {
    guard(|| {
        let b = handle(base, "base")?;
        let arch = b.0.arch.clone();
        put(out, DbModel(init_model(&arch, VariantTag::Lora, &AdaptConfig::default(), seed, Some(&b.0))?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn db_model_load(path: *const c_char, out: *mut *mut DbModel) -> DbStatus {
    guard(|| {
        let p = PathBuf::from(cstr(path, "path")?);
        put(out, DbModel(Model::load(&p)?))
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn db_model_save(model: *const DbModel, path: *const c_char) -> DbStatus {
    guard(|| {
        let m = handle(model, "model")?;
        Ok(m.0.save(&PathBuf::from(cstr(path, "path")?))?)
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn db_model_free(model: *mut DbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Forward pass on one window with the model's current parameters.
///
/// # Safety
/// `input` must hold `input_len` doubles and `output` room for `output_len`.
#[no_mangle]
pub unsafe extern "C" fn db_model_predict(
    model: *const DbModel,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> DbStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if input.is_null() {
            return Err(Fail::Null("input"));
        }
        if output.is_null() {
            return Err(Fail::Null("output"));
        }
        if output_len != m.0.arch.output_len {
            return Err(Error::dim(format!("output buffer holds {output_len}, model emits {}", m.0.arch.output_len)).into());
        }
        let x = std::slice::from_raw_parts(input, input_len).to_vec();
        let y = m.0.predict(&[x])?;
        std::slice::from_raw_parts_mut(output, output_len).copy_from_slice(&y[0]);
        Ok(())
    })
}

/// Trains in place on the leading episodes of `dataset`. `config_json` may
/// be null for defaults. Writes the last epoch's mean query MSE.
///
/// # Safety
/// Handles must be live; `config_json` null or NUL-terminated; `final_query_mse` null or writable.
#[no_mangle]
pub unsafe extern "C" fn db_train(
    model: *mut DbModel,
    dataset: *const DbDataset,
    config_json: *const c_char,
    seed: u64,
    final_query_mse: *mut f64,
) -> DbStatus {
    guard(|| {
        let m = handle_mut(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        let cfg = opt_config(config_json)?;
        let log = train_run(&ds.0.episodes, &mut m.0, &cfg, seed)?;
        if let Some(out) = final_query_mse.as_mut() {
            *out = log.epochs.last().map_or(f64::NAN, |e| e.mean_query_mse);
        }
        Ok(())
    })
}

/// Evaluates on the trailing `episodes` episodes without modifying the model.
///
/// # Safety
/// Handles must be live; `config_json` null or NUL-terminated; `mean_mse` writable.
#[no_mangle]
pub unsafe extern "C" fn db_evaluate(
    model: *const DbModel,
    dataset: *const DbDataset,
    episodes: usize,
    config_json: *const c_char,
    seed: u64,
    mean_mse: *mut f64,
) -> DbStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        let out = handle_mut(mean_mse, "mean_mse")?;
        let cfg = opt_config(config_json)?;
        let (_, eval) = split_episodes(&ds.0.episodes, episodes)?;
        let label = m.0.variant().to_string();
        let r = evaluate(eval, &m.0, &cfg, &ds.0.spec.variant.to_string(), &label, eval_seed(seed))?;
        *out = r.mean_mse;
        Ok(())
    })
}
