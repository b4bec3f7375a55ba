//! C ABI over `pu-rank`.
//!
//! Objects are opaque heap handles created by `*_load`/`*_train` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`PuStatus`]; on failure a message is available from
//! [`pu_last_error_message`] on the same thread until the next failing call.
//! Handles are not synchronised: do not use one handle from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use pu_rank::corpus::{load_corpus, Dataset, Request, SplitTag};
use pu_rank::encoder::EmbeddingTable;
use pu_rank::objective::{ramp_loss, rank_weight};
use pu_rank::pipeline::{evaluate, predict, train, TrainConfig, TrainMode, TrainedModel};
use pu_rank::propagation::similarity;
use pu_rank::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PuStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidConfig = 5,
    InvalidData = 6,
    DimensionMismatch = 7,
    NonFinite = 8,
    Checkpoint = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PuSplit {
    Train = 0,
    Valid = 1,
    Test = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PuMode {
    Pn = 0,
    PuNearest = 1,
    PuMean = 2,
}

/// Ranking metrics of one evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PuMetrics {
    pub accuracy: f64,
    pub recall_at_k: f64,
    pub mrr: f64,
    pub k: usize,
    pub n: usize,
}

/// Opaque embedding table.
pub struct PuEmbeddings(EmbeddingTable);

/// Opaque corpus split.
pub struct PuDataset(Dataset);

/// Opaque trained model.
pub struct PuModel(TrainedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PuStatus {
    match e {
        Error::Io { .. } => PuStatus::Io,
        Error::Parse { .. } => PuStatus::Parse,
        Error::InvalidConfig(_) | Error::InfeasibleSplit(_) => PuStatus::InvalidConfig,
        Error::DimensionMismatch { .. } | Error::LengthMismatch(_) => PuStatus::DimensionMismatch,
        Error::NonFinite(_) => PuStatus::NonFinite,
        Error::Checkpoint(_) => PuStatus::Checkpoint,
        _ => PuStatus::InvalidData,
    }
}

struct Fail(PuStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Fail>;

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> PuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PuStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            set_error(format!("internal panic: {message}"));
            PuStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PuStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(PuStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pu_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a text embedding table (`dim D count N` header, then `token v1 .. vD`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pu_embeddings_load(path: *const c_char, out: *mut *mut PuEmbeddings) -> PuStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        write_out(out, PuEmbeddings(EmbeddingTable::read_text(path)?))
    })
}

/// # Safety
/// `table` must be NULL or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pu_embeddings_free(table: *mut PuEmbeddings) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Embedding dimension, or 0 for a NULL handle.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pu_embeddings_dim(table: *const PuEmbeddings) -> usize {
    table.as_ref().map_or(0, |t| t.0.dim())
}

/// Loads a JSON-lines corpus split with its categories file.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pu_dataset_load(
    corpus_path: *const c_char,
    categories_path: *const c_char,
    split: PuSplit,
    out: *mut *mut PuDataset,
) -> PuStatus {
    guard(|| {
        let corpus = PathBuf::from(str_arg(corpus_path, "corpus_path")?);
        let categories = PathBuf::from(str_arg(categories_path, "categories_path")?);
        let split = match split {
            PuSplit::Train => SplitTag::Train,
            PuSplit::Valid => SplitTag::Valid,
            PuSplit::Test => SplitTag::Test,
        };
        write_out(out, PuDataset(load_corpus(corpus, categories, split)?))
    })
}

/// # Safety
/// `dataset` must be NULL or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pu_dataset_free(dataset: *mut PuDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of requests, or 0 for a NULL handle.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pu_dataset_len(dataset: *const PuDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Number of categories, or 0 for a NULL handle.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pu_dataset_category_count(dataset: *const PuDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.category_count())
}

/// Trains a model. `config_json` is a TrainConfig JSON object or NULL for
/// defaults; `mode` and `seed` override the corresponding fields.
///
/// # Safety
/// Handles must be live, `config_json` NULL or a valid string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pu_model_train(
    train_set: *const PuDataset,
    valid_set: *const PuDataset,
    table: *const PuEmbeddings,
    config_json: *const c_char,
    mode: PuMode,
    seed: u64,
    out: *mut *mut PuModel,
) -> PuStatus {
    guard(|| {
        let train_set = &handle(train_set, "train_set")?.0;
        let valid_set = &handle(valid_set, "valid_set")?.0;
        let table = &handle(table, "table")?.0;
        let mut cfg: TrainConfig = if config_json.is_null() {
            TrainConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| Fail(PuStatus::Parse, format!("config_json: {e}")))?
        };
        cfg.mode = match mode {
            PuMode::Pn => TrainMode::Pn,
            PuMode::PuNearest => TrainMode::PuNearest,
            PuMode::PuMean => TrainMode::PuMean,
        };
        cfg.seed = seed;
        write_out(out, PuModel(train(train_set, valid_set, table, &cfg)?))
    })
}

/// Writes a JSON checkpoint.
///
/// # Safety
/// `model` must be live and `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn pu_model_save(model: *const PuModel, path: *const c_char) -> PuStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        Ok(model.save(str_arg(path, "path")?)?)
    })
}

/// Loads a checkpoint. `table` may be NULL when the checkpoint stores its own
/// (trainable-encoder) table.
///
/// # Safety
/// `path` must be a valid string, `table` NULL or live, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pu_model_load(
    path: *const c_char,
    table: *const PuEmbeddings,
    out: *mut *mut PuModel,
) -> PuStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let table = table.as_ref().map(|t| &t.0);
        write_out(out, PuModel(TrainedModel::load(path, table)?))
    })
}

/// # Safety
/// `model` must be NULL or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pu_model_free(model: *mut PuModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of categories the model ranks, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pu_model_category_count(model: *const PuModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.params.category_count)
}

/// Ranks all categories for a tokenised request. `out_ids` and `out_scores`
/// receive `C` entries in rank order; `capacity` below `C` fails with
/// `BUFFER_TOO_SMALL` and writes nothing. `out_scores` may be NULL.
///
/// # Safety
/// `tokens` must point to `n_tokens` valid strings; output buffers must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn pu_model_predict(
    model: *const PuModel,
    tokens: *const *const c_char,
    n_tokens: usize,
    out_ids: *mut usize,
    out_scores: *mut f64,
    capacity: usize,
) -> PuStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        if out_ids.is_null() {
            return Err(null("out_ids"));
        }
        if tokens.is_null() && n_tokens > 0 {
            return Err(null("tokens"));
        }
        let c = model.params.category_count;
        if capacity < c {
            return Err(Fail(
                PuStatus::BufferTooSmall,
                format!("capacity {capacity} < {c} categories"),
            ));
        }
        let tokens = (0..n_tokens)
            .map(|i| str_arg(*tokens.add(i), "token").map(str::to_owned))
            .collect::<FfiResult<Vec<_>>>()?;
        let request = Request {
            id: String::new(),
            tokens,
            given_category: 0,
            gold_categories: None,
        };
        let ranked = predict(model, &request)?;
        for (i, (id, score)) in ranked.into_iter().enumerate() {
            *out_ids.add(i) = id;
            if !out_scores.is_null() {
                *out_scores.add(i) = score;
            }
        }
        Ok(())
    })
}

/// Accuracy, recall@k and MRR of `model` on `dataset`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pu_model_evaluate(
    model: *const PuModel,
    dataset: *const PuDataset,
    k: usize,
    out: *mut PuMetrics,
) -> PuStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let dataset = &handle(dataset, "dataset")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = evaluate(model, dataset, k)?.metrics;
        *out = PuMetrics {
            accuracy: m.accuracy,
            recall_at_k: m.recall_at_k,
            mrr: m.mrr,
            k: m.k,
            n: m.n,
        };
        Ok(())
    })
}

/// Ramp loss `min(1 - m, max(0, 1 - t))`.
#[no_mangle]
pub extern "C" fn pu_ramp_loss(t: f64, margin: f64) -> f64 {
    ramp_loss(t, margin)
}

/// Rank weight `sum_{j=1..r} 1/j`; `r` must be at least 1.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pu_rank_weight(r: usize, out: *mut f64) -> PuStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = rank_weight(r)?;
        Ok(())
    })
}

/// Propagation similarity `exp(-(d / mean_d) * C / (C - 1))`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pu_similarity(
    distance: f64,
    mean_distance: f64,
    category_count: usize,
    out: *mut f64,
) -> PuStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = similarity(distance, mean_distance, category_count)?;
        Ok(())
    })
}
