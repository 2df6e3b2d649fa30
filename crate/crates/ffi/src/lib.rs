//! C ABI for the `seltune` library.
//!
//! Conventions:
//! * Every fallible function returns a [`SeltuneStatus`]; on failure a
//!   message is available from [`seltune_last_error`] on the same thread.
//! * Objects are opaque handles created by `*_new` / `*_run` functions and
//!   released with the matching `*_free`. Passing NULL to a `*_free`
//!   function is a no-op.
//! * Output arrays are caller-allocated; their length is passed explicitly
//!   and checked.
//! * Panics never cross the boundary; they are reported as
//!   [`SeltuneStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;
use std::time::Duration;

use seltune::engine::{Engine, EngineConfig, EngineError};
use seltune::fitness::{FitnessError, FitnessRecord, TrainingBudget};
use seltune::genotype::{self, BlockSpec, FineTuneConfig, Genotype};
use seltune::orchestrator::{self, RunError, RunOptions};
use seltune::partition::{self, Labels, PartitionPlan};
use seltune::protocol::{EndpointKind, EndpointSettings, EvalJob, EvaluateResponse, Trainer, TrainerError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeltuneStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Config = 4,
    Trainer = 5,
    Checkpoint = 6,
    Io = 7,
    Internal = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: SeltuneStatus, message: impl Into<String>) -> SeltuneStatus {
    set_error(message);
    status
}

/// Runs `f`, turning panics into [`SeltuneStatus::Panic`].
fn guard(f: impl FnOnce() -> SeltuneStatus) -> SeltuneStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SeltuneStatus::Panic, format!("panic: {msg}"))
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SeltuneStatus::NullPointer, concat!("argument `", stringify!($p), "` is NULL"));
        })+
    };
}

/// Message describing the last failure on the calling thread, or NULL.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn seltune_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seltune_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `ptr` must point to `len` readable values (or be NULL with `len == 0`).
unsafe fn input<'a, T>(ptr: *const T, len: usize) -> &'a [T] {
    if len == 0 {
        &[]
    } else {
        slice::from_raw_parts(ptr, len)
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, SeltuneStatus> {
    if p.is_null() {
        return Err(fail(SeltuneStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SeltuneStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

// ------------------------------------------------------------ block spec

/// Opaque list of blocks with their base learning rates.
pub struct SeltuneBlockSpec(BlockSpec);

/// Creates a block spec with `count` blocks named `block0..`; `base_rates`
/// holds one positive rate per block.
///
/// # Safety
/// `base_rates` must point to `count` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_block_spec_new(
    base_rates: *const f64,
    count: usize,
    out: *mut *mut SeltuneBlockSpec,
) -> SeltuneStatus {
    guard(|| {
        non_null!(base_rates, out);
        let rates = input(base_rates, count).to_vec();
        let names = (0..count).map(|i| format!("block{i}")).collect();
        match BlockSpec::new(names, rates) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(SeltuneBlockSpec(spec)));
                SeltuneStatus::Ok
            }
            Err(e) => fail(SeltuneStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `spec` must be NULL or a handle from [`seltune_block_spec_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seltune_block_spec_free(spec: *mut SeltuneBlockSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of blocks, or 0 for NULL.
///
/// # Safety
/// `spec` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seltune_block_spec_block_count(spec: *const SeltuneBlockSpec) -> usize {
    spec.as_ref().map_or(0, |s| s.0.block_count())
}

/// Genotype length (blocks + 1 threshold gene), or 0 for NULL.
///
/// # Safety
/// `spec` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seltune_block_spec_genotype_len(spec: *const SeltuneBlockSpec) -> usize {
    spec.as_ref().map_or(0, |s| s.0.genotype_len())
}

// --------------------------------------------------------------- decoding

/// Learning-rate multiplier `10^(2(gene - 0.5))` of one importance gene.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_importance_weight(gene: f64, out: *mut f64) -> SeltuneStatus {
    guard(|| {
        non_null!(out);
        if !(0.0..=1.0).contains(&gene) {
            return fail(SeltuneStatus::InvalidArgument, format!("gene {gene} outside [0, 1]"));
        }
        *out = genotype::importance_weight(gene);
        SeltuneStatus::Ok
    })
}

/// Decodes a genotype. `genes` holds `genes_len` values in `[0, 1]` (one
/// per block, then the threshold). Each output array must hold
/// `out_len >= block count` entries; any output pointer may be NULL to skip
/// it. `mask_out[b]` is 1 when block `b` is fine-tuned, 0 when frozen.
///
/// # Safety
/// Non-NULL pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn seltune_decode(
    spec: *const SeltuneBlockSpec,
    genes: *const f64,
    genes_len: usize,
    mask_out: *mut u8,
    weights_out: *mut f64,
    eta_out: *mut f64,
    rates_out: *mut f64,
    out_len: usize,
) -> SeltuneStatus {
    guard(|| {
        non_null!(spec, genes);
        let spec = &(*spec).0;
        let g = match Genotype::new(input(genes, genes_len).to_vec()) {
            Ok(g) => g,
            Err(e) => return fail(SeltuneStatus::InvalidArgument, e.to_string()),
        };
        let cfg = match genotype::decode(&g, spec) {
            Ok(c) => c,
            Err(e) => return fail(SeltuneStatus::InvalidArgument, e.to_string()),
        };
        let n = cfg.block_count();
        if out_len < n {
            return fail(
                SeltuneStatus::BufferTooSmall,
                format!("output buffers hold {out_len}, need {n}"),
            );
        }
        copy_out(mask_out, &cfg.mask);
        copy_out(weights_out, &cfg.weights);
        copy_out(eta_out, &cfg.eta);
        copy_out(rates_out, &cfg.rates);
        SeltuneStatus::Ok
    })
}

unsafe fn copy_out<T: Copy>(dst: *mut T, src: &[T]) {
    if !dst.is_null() {
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
}

/// Fraction of parameters in fine-tuned blocks. `mask[b]` is 1 for
/// fine-tuned blocks, 0 for frozen ones.
///
/// # Safety
/// `mask` and `param_counts` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_trainable_fraction(
    mask: *const u8,
    param_counts: *const u64,
    len: usize,
    out: *mut f64,
) -> SeltuneStatus {
    guard(|| {
        non_null!(mask, param_counts, out);
        let mask = input(mask, len).to_vec();
        if mask.iter().any(|&m| m > 1) {
            return fail(SeltuneStatus::InvalidArgument, "mask entries must be 0 or 1");
        }
        let cfg = FineTuneConfig {
            eta: vec![0.0; len],
            weights: vec![1.0; len],
            rates: vec![0.0; len],
            mask,
        };
        match genotype::trainable_fraction(&cfg, input(param_counts, len)) {
            Ok(f) => {
                *out = f;
                SeltuneStatus::Ok
            }
            Err(e) => fail(SeltuneStatus::InvalidArgument, e.to_string()),
        }
    })
}

// -------------------------------------------------------------- partition

/// Opaque stratified fold assignment.
pub struct SeltunePartition {
    plan: PartitionPlan,
    ids: Vec<Vec<CString>>,
}

/// Splits `n` samples (`ids[i]` with class `classes[i]`) into `fold_count`
/// stratified folds using `seed`.
///
/// # Safety
/// `ids` and `classes` must each point to `n` NUL-terminated strings;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_partition_new(
    ids: *const *const c_char,
    classes: *const *const c_char,
    n: usize,
    fold_count: usize,
    seed: u64,
    out: *mut *mut SeltunePartition,
) -> SeltuneStatus {
    guard(|| {
        non_null!(ids, classes, out);
        let mut labels = Labels::new();
        for (i, (&id, &class)) in input(ids, n).iter().zip(input(classes, n)).enumerate() {
            let id = match c_str(id, &format!("ids[{i}]")) {
                Ok(s) => s.to_string(),
                Err(status) => return status,
            };
            let class = match c_str(class, &format!("classes[{i}]")) {
                Ok(s) => s.to_string(),
                Err(status) => return status,
            };
            if labels.insert(id.clone(), class).is_some() {
                return fail(SeltuneStatus::InvalidArgument, format!("duplicate sample id {id:?}"));
            }
        }
        match partition::build_partition(&labels, fold_count, seed) {
            Ok(plan) => {
                let ids = plan
                    .folds
                    .iter()
                    .map(|f| f.iter().map(|s| CString::new(s.as_str()).expect("ids came from C strings")).collect())
                    .collect();
                *out = Box::into_raw(Box::new(SeltunePartition { plan, ids }));
                SeltuneStatus::Ok
            }
            Err(e) => fail(SeltuneStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `p` must be NULL or a live handle from [`seltune_partition_new`].
#[no_mangle]
pub unsafe extern "C" fn seltune_partition_free(p: *mut SeltunePartition) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of folds, or 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seltune_partition_fold_count(p: *const SeltunePartition) -> usize {
    p.as_ref().map_or(0, |p| p.plan.fold_count)
}

/// Number of samples in fold `fold`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_partition_fold_len(
    p: *const SeltunePartition,
    fold: usize,
    out: *mut usize,
) -> SeltuneStatus {
    guard(|| {
        non_null!(p, out);
        match (&*p).ids.get(fold) {
            Some(f) => {
                *out = f.len();
                SeltuneStatus::Ok
            }
            None => fail(SeltuneStatus::InvalidArgument, format!("fold {fold} out of range")),
        }
    })
}

/// Sample id at `index` of fold `fold` (folds are sorted by id). The
/// string is owned by the partition and valid until it is freed.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_partition_sample_id(
    p: *const SeltunePartition,
    fold: usize,
    index: usize,
    out: *mut *const c_char,
) -> SeltuneStatus {
    guard(|| {
        non_null!(p, out);
        match (&*p).ids.get(fold).and_then(|f| f.get(index)) {
            Some(s) => {
                *out = s.as_ptr();
                SeltuneStatus::Ok
            }
            None => fail(
                SeltuneStatus::InvalidArgument,
                format!("fold {fold} index {index} out of range"),
            ),
        }
    })
}

/// Fold used at `generation`: `generation mod fold_count`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_fold_for_generation(
    generation: usize,
    fold_count: usize,
    out: *mut usize,
) -> SeltuneStatus {
    guard(|| {
        non_null!(out);
        if fold_count == 0 {
            return fail(SeltuneStatus::InvalidArgument, "fold_count must be at least 1");
        }
        *out = partition::fold_for_generation(generation, fold_count);
        SeltuneStatus::Ok
    })
}

// ----------------------------------------------------------------- search

/// One training trial handed to the evaluation callback. All pointers are
/// valid only for the duration of the callback.
#[repr(C)]
pub struct SeltuneTrial {
    pub request_id: *const c_char,
    pub genotype_id: u64,
    pub block_count: usize,
    /// Effective learning rate per block; 0 for frozen blocks.
    pub block_rates: *const f64,
    /// 1 = fine-tuned, 0 = frozen.
    pub mask: *const u8,
    pub gene_count: usize,
    /// Raw genotype (importance genes, then threshold).
    pub genes: *const f64,
    pub generation_fold: usize,
    pub seed: u64,
    pub max_epochs: u32,
    pub patience: u32,
}

/// Evaluation callback: trains the configuration in `trial` and writes the
/// validation accuracy in `[0, 1]` to `accuracy_out`. Returns 0 on success;
/// any other value marks the trial as failed (it is retried, then scored 0).
/// With `capacity > 1` the callback is invoked from several threads at once.
pub type SeltuneEvaluateFn =
    Option<unsafe extern "C" fn(user_data: *mut c_void, trial: *const SeltuneTrial, accuracy_out: *mut f64) -> i32>;

/// Search settings. Fill with [`seltune_search_config_default`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SeltuneSearchConfig {
    pub population_size: usize,
    pub elite_count: usize,
    pub max_generations: usize,
    pub seed_count: usize,
    pub perturbation_scale: f64,
    pub mutation_rate: f64,
    pub adaptation_count: usize,
    pub rng_seed: u64,
    pub trial_seed_offset: u64,
    pub max_epochs: u32,
    pub patience: u32,
    /// Maximum concurrent callback invocations.
    pub capacity: usize,
    /// Extra attempts for a failed trial.
    pub retry_budget: u32,
}

/// Writes the default settings (population 10, 3 elites, 10 generations,
/// 3 seeds, 30 epochs, patience 3, perturbation 0.25).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_search_config_default(out: *mut SeltuneSearchConfig) -> SeltuneStatus {
    guard(|| {
        non_null!(out);
        let e = EngineConfig::default();
        let b = TrainingBudget::default();
        *out = SeltuneSearchConfig {
            population_size: e.population_size,
            elite_count: e.elite_count,
            max_generations: e.max_generations,
            seed_count: e.seed_count,
            perturbation_scale: e.perturbation_scale,
            mutation_rate: e.mutation_rate,
            adaptation_count: e.adaptation_count,
            rng_seed: e.rng_seed,
            trial_seed_offset: e.trial_seed_offset,
            max_epochs: b.max_epochs,
            patience: b.patience,
            capacity: 1,
            retry_budget: EndpointSettings::default().retry_budget,
        };
        SeltuneStatus::Ok
    })
}

struct CallbackTrainer {
    callback: unsafe extern "C" fn(*mut c_void, *const SeltuneTrial, *mut f64) -> i32,
    user_data: *mut c_void,
    settings: EndpointSettings,
}

// SAFETY: the caller of `seltune_search_run` promises that the callback and
// `user_data` may be used from `capacity` threads at once.
unsafe impl Send for CallbackTrainer {}
unsafe impl Sync for CallbackTrainer {}

impl Trainer for CallbackTrainer {
    fn kind(&self) -> EndpointKind {
        EndpointKind::Callback
    }

    fn settings(&self) -> &EndpointSettings {
        &self.settings
    }

    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvaluateResponse, TrainerError> {
        let req = job.request;
        req.validate()?;
        let request_id = CString::new(req.request_id.replace('\0', " ")).expect("NULs replaced");
        let trial = SeltuneTrial {
            request_id: request_id.as_ptr(),
            genotype_id: req.genotype_id.parse().unwrap_or(0),
            block_count: req.block_rates.len(),
            block_rates: req.block_rates.as_ptr(),
            mask: req.frozen_mask.as_ptr(),
            gene_count: job.genes.len(),
            genes: job.genes.as_ptr(),
            generation_fold: req.fold_index,
            seed: req.seed,
            max_epochs: req.max_epochs,
            patience: req.patience,
        };
        let mut accuracy = f64::NAN;
        // SAFETY: every pointer in `trial` outlives the call.
        let code = unsafe { (self.callback)(self.user_data, &trial, &mut accuracy) };
        if code != 0 {
            return Err(TrainerError::Failed {
                code: format!("callback_{code}"),
                message: format!("evaluation callback returned {code}"),
            });
        }
        let resp = EvaluateResponse::ok(req.request_id.clone(), accuracy, req.max_epochs);
        resp.validate()?;
        Ok(resp)
    }
}

/// Ranked outcome of a search.
pub struct SeltuneSearchResult {
    ranked: Vec<(Genotype, FitnessRecord)>,
    generation_best: Vec<f64>,
    generation_mean: Vec<f64>,
}

fn engine_status(e: &EngineError) -> SeltuneStatus {
    match e {
        EngineError::Fitness(FitnessError::Endpoint { .. }) => SeltuneStatus::Trainer,
        EngineError::Config(_) | EngineError::FoldMismatch { .. } => SeltuneStatus::Config,
        _ => SeltuneStatus::Internal,
    }
}

/// Runs a full search, calling `evaluate` for every training trial. Folds
/// rotate through `partition` (its fold count is used). On success `*out`
/// receives a result handle to release with [`seltune_search_result_free`].
///
/// # Safety
/// Handles must be live; `evaluate` must be non-NULL and, with
/// `capacity > 1`, safe to call concurrently with `user_data`.
#[no_mangle]
pub unsafe extern "C" fn seltune_search_run(
    config: *const SeltuneSearchConfig,
    spec: *const SeltuneBlockSpec,
    partition: *const SeltunePartition,
    evaluate: SeltuneEvaluateFn,
    user_data: *mut c_void,
    out: *mut *mut SeltuneSearchResult,
) -> SeltuneStatus {
    guard(|| {
        non_null!(config, spec, partition, out);
        let Some(callback) = evaluate else {
            return fail(SeltuneStatus::NullPointer, "argument `evaluate` is NULL");
        };
        let c = *config;
        let plan = &(*partition).plan;
        let engine_config = EngineConfig {
            population_size: c.population_size,
            elite_count: c.elite_count,
            max_generations: c.max_generations,
            seed_count: c.seed_count,
            perturbation_scale: c.perturbation_scale,
            mutation_rate: c.mutation_rate,
            adaptation_count: c.adaptation_count,
            rng_seed: c.rng_seed,
            fold_count: plan.fold_count,
            trial_seed_offset: c.trial_seed_offset,
        };
        let budget = match TrainingBudget::new(c.max_epochs, c.patience) {
            Ok(b) => b,
            Err(e) => return fail(SeltuneStatus::Config, e.to_string()),
        };
        if c.capacity == 0 {
            return fail(SeltuneStatus::Config, "capacity must be at least 1");
        }
        let trainer = CallbackTrainer {
            callback,
            user_data,
            settings: EndpointSettings {
                capacity: c.capacity,
                timeout: Duration::MAX,
                retry_budget: c.retry_budget,
            },
        };
        let mut engine = match Engine::new(engine_config, &(*spec).0, plan, &trainer) {
            Ok(e) => e.with_budget(budget),
            Err(e) => return fail(engine_status(&e), e.to_string()),
        };
        match engine.run() {
            Ok(ranked) => {
                let reports = &engine.state().reports;
                *out = Box::into_raw(Box::new(SeltuneSearchResult {
                    ranked,
                    generation_best: reports.iter().map(|r| r.best_phi).collect(),
                    generation_mean: reports.iter().map(|r| r.mean_phi).collect(),
                }));
                SeltuneStatus::Ok
            }
            Err(e) => fail(engine_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `r` must be NULL or a live handle from [`seltune_search_run`].
#[no_mangle]
pub unsafe extern "C" fn seltune_search_result_free(r: *mut SeltuneSearchResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of distinct evaluated configurations, or 0 for NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seltune_search_result_count(r: *const SeltuneSearchResult) -> usize {
    r.as_ref().map_or(0, |r| r.ranked.len())
}

/// Configuration at `rank` (0 = best, lowest phi). `genes_out` (may be NULL)
/// receives the genotype and must hold `genes_len >= genotype length`.
/// `accuracy_out` receives `1 - phi`.
///
/// # Safety
/// `r` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_search_result_get(
    r: *const SeltuneSearchResult,
    rank: usize,
    genotype_id_out: *mut u64,
    phi_out: *mut f64,
    accuracy_out: *mut f64,
    genes_out: *mut f64,
    genes_len: usize,
) -> SeltuneStatus {
    guard(|| {
        non_null!(r);
        let Some((g, rec)) = (&*r).ranked.get(rank) else {
            return fail(SeltuneStatus::InvalidArgument, format!("rank {rank} out of range"));
        };
        if !genes_out.is_null() && genes_len < g.len() {
            return fail(
                SeltuneStatus::BufferTooSmall,
                format!("genes buffer holds {genes_len}, need {}", g.len()),
            );
        }
        copy_out(genes_out, g.genes());
        if !genotype_id_out.is_null() {
            *genotype_id_out = rec.genotype_id;
        }
        if !phi_out.is_null() {
            *phi_out = rec.phi;
        }
        if !accuracy_out.is_null() {
            *accuracy_out = 1.0 - rec.phi;
        }
        SeltuneStatus::Ok
    })
}

/// Number of completed generations, or 0 for NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seltune_search_result_generations(r: *const SeltuneSearchResult) -> usize {
    r.as_ref().map_or(0, |r| r.generation_best.len())
}

/// Best and mean phi of the surviving population after `generation`.
///
/// # Safety
/// `r` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn seltune_search_result_generation(
    r: *const SeltuneSearchResult,
    generation: usize,
    best_phi_out: *mut f64,
    mean_phi_out: *mut f64,
) -> SeltuneStatus {
    guard(|| {
        non_null!(r);
        let r = &*r;
        if generation >= r.generation_best.len() {
            return fail(SeltuneStatus::InvalidArgument, format!("generation {generation} out of range"));
        }
        if !best_phi_out.is_null() {
            *best_phi_out = r.generation_best[generation];
        }
        if !mean_phi_out.is_null() {
            *mean_phi_out = r.generation_mean[generation];
        }
        SeltuneStatus::Ok
    })
}

// ----------------------------------------------------------- orchestrator

fn run_status(e: &RunError) -> SeltuneStatus {
    match e {
        RunError::Config(_) => SeltuneStatus::Config,
        RunError::Trainer(_) => SeltuneStatus::Trainer,
        RunError::Checkpoint { .. } => SeltuneStatus::Checkpoint,
        RunError::Io { .. } => SeltuneStatus::Io,
        RunError::Internal(_) => SeltuneStatus::Internal,
    }
}

/// Runs the search described by a TOML config file, writing artifacts to
/// its output directory (same as `seltune run`).
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn seltune_run_config(config_path: *const c_char) -> SeltuneStatus {
    guard(|| {
        let path = match c_str(config_path, "config_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match orchestrator::run_command(Path::new(path), &RunOptions::default()) {
            Ok(_) => SeltuneStatus::Ok,
            Err(e) => fail(run_status(&e), e.to_string()),
        }
    })
}

/// Continues a run from its checkpoint file (same as `seltune resume`).
///
/// # Safety
/// `checkpoint_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn seltune_resume(checkpoint_path: *const c_char) -> SeltuneStatus {
    guard(|| {
        let path = match c_str(checkpoint_path, "checkpoint_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match orchestrator::resume_command(Path::new(path), &RunOptions::default()) {
            Ok(_) => SeltuneStatus::Ok,
            Err(e) => fail(run_status(&e), e.to_string()),
        }
    })
}
