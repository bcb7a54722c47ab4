//! C ABI over the smartcert client: header storage, certificate
//! verification, trie proof checks and scenario runs.
//!
//! Every fallible call returns an [`ScStatus`]. On failure a message is
//! available from [`sc_last_error`] on the same thread until the next call.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use smartcert::chain::{log as chain_log, BlockHeader};
use smartcert::client::{HeaderStore, RejectReason, TrustAnchors, Validator, Verdict};
use smartcert::contracts;
use smartcert::domain::SmartCertCertificate;
use smartcert::hash::Digest;
use smartcert::scenario;
use smartcert::trie::{self, InclusionProof};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Decode = 3,
    BrokenChain = 4,
    ScenarioInvalid = 5,
    Panic = 6,
}

/// Verification outcome; `SC_VERDICT_OK` or the first failed check.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScVerdict {
    Ok = 0,
    DecodeError = 1,
    UnknownRoot = 2,
    ProofInconsistent = 3,
    BadCode = 4,
    BadStorageProof = 5,
    NameMismatch = 6,
    Invalid = 7,
    Stale = 8,
}

impl From<&Verdict> for ScVerdict {
    fn from(v: &Verdict) -> Self {
        match v {
            Verdict::Ok(_) => ScVerdict::Ok,
            Verdict::Fail(r) => match r {
                RejectReason::DecodeError => ScVerdict::DecodeError,
                RejectReason::UnknownRoot => ScVerdict::UnknownRoot,
                RejectReason::ProofInconsistent => ScVerdict::ProofInconsistent,
                RejectReason::BadCode => ScVerdict::BadCode,
                RejectReason::BadStorageProof => ScVerdict::BadStorageProof,
                RejectReason::NameMismatch => ScVerdict::NameMismatch,
                RejectReason::Invalid => ScVerdict::Invalid,
                RejectReason::Stale => ScVerdict::Stale,
                // Handshake-level reasons never come out of certificate checks.
                RejectReason::BadSkeSig | RejectReason::NoCert => ScVerdict::DecodeError,
            },
        }
    }
}

/// Recent block headers, pruned to a horizon.
pub struct ScHeaderStore(HeaderStore);

/// A decoded certificate.
pub struct ScCertificate(SmartCertCertificate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: ScStatus, msg: impl Into<String>) -> ScStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> ScStatus) -> ScStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(ScStatus::Panic, "internal panic"))
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Option<&'a [u8]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(data, len))
    }
}

unsafe fn digest(p: *const u8) -> Option<Digest> {
    bytes(p, 32).map(|b| Digest(b.try_into().expect("32 bytes")))
}

/// Last error message on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn sc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Writes the pinned SmartCert template code hash (32 bytes) to `out`.
///
/// # Safety
/// `out` must point to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sc_smartcert_code_hash(out: *mut u8) -> ScStatus {
    guard(|| {
        if out.is_null() {
            return fail(ScStatus::NullPointer, "out is null");
        }
        ptr::copy_nonoverlapping(contracts::smartcert_code_hash().0.as_ptr(), out, 32);
        ScStatus::Ok
    })
}

/// Starts a header store at a trusted checkpoint header (112 bytes).
///
/// # Safety
/// `header` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_header_store_new(
    header: *const u8,
    len: usize,
    prune_horizon: u64,
    out: *mut *mut ScHeaderStore,
) -> ScStatus {
    guard(|| {
        let (Some(h), false) = (bytes(header, len), out.is_null()) else {
            return fail(ScStatus::NullPointer, "null argument");
        };
        match BlockHeader::decode(h) {
            Ok(h) => {
                *out = Box::into_raw(Box::new(ScHeaderStore(HeaderStore::new(h, prune_horizon))));
                ScStatus::Ok
            }
            Err(e) => fail(ScStatus::Decode, format!("checkpoint header: {e}")),
        }
    })
}

/// Builds a header store from a chain log: genesis as checkpoint, then
/// every recorded header.
///
/// # Safety
/// `log` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_header_store_from_chain_log(
    log: *const u8,
    len: usize,
    prune_horizon: u64,
    out: *mut *mut ScHeaderStore,
) -> ScStatus {
    guard(|| {
        let (Some(b), false) = (bytes(log, len), out.is_null()) else {
            return fail(ScStatus::NullPointer, "null argument");
        };
        let log = match chain_log::read_log_headers(b) {
            Ok(l) => l,
            Err(e) => return fail(ScStatus::Decode, e.to_string()),
        };
        let mut store = HeaderStore::new(log.genesis, prune_horizon);
        if let Err(e) = store.sync(log.headers) {
            return fail(ScStatus::BrokenChain, e.to_string());
        }
        *out = Box::into_raw(Box::new(ScHeaderStore(store)));
        ScStatus::Ok
    })
}

/// Appends one encoded header (112 bytes) that extends the newest one.
///
/// # Safety
/// `store` must be a live handle; `header` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn sc_header_store_append(store: *mut ScHeaderStore, header: *const u8, len: usize) -> ScStatus {
    guard(|| {
        let (Some(store), Some(h)) = (store.as_mut(), bytes(header, len)) else {
            return fail(ScStatus::NullPointer, "null argument");
        };
        let h = match BlockHeader::decode(h) {
            Ok(h) => h,
            Err(e) => return fail(ScStatus::Decode, e.to_string()),
        };
        match store.0.append(h) {
            Ok(_) => ScStatus::Ok,
            Err(e) => fail(ScStatus::BrokenChain, e.to_string()),
        }
    })
}

/// Number of stored headers; 0 for a null handle.
///
/// # Safety
/// `store` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_header_store_len(store: *const ScHeaderStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `store` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_header_store_free(store: *mut ScHeaderStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Decodes certificate bytes.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_certificate_parse(data: *const u8, len: usize, out: *mut *mut ScCertificate) -> ScStatus {
    guard(|| {
        let (Some(b), false) = (bytes(data, len), out.is_null()) else {
            return fail(ScStatus::NullPointer, "null argument");
        };
        match SmartCertCertificate::decode(b) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(ScCertificate(c)));
                ScStatus::Ok
            }
            Err(e) => fail(ScStatus::Decode, e.to_string()),
        }
    })
}

/// Anchor block number; 0 for a null handle.
///
/// # Safety
/// `cert` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_certificate_anchor(cert: *const ScCertificate) -> u64 {
    cert.as_ref().map_or(0, |c| c.0.anchor)
}

/// # Safety
/// `cert` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_certificate_free(cert: *mut ScCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// Checks `cert` for domain `name` at unix time `now`. `code_hash` (32
/// bytes) may be null to pin the built-in template. The outcome goes to
/// `verdict`; the return value only reports argument errors.
///
/// # Safety
/// Handles must be live; `name` must be a NUL-terminated string; `code_hash`
/// must be null or point to 32 bytes; `verdict` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_verify_certificate(
    store: *const ScHeaderStore,
    cert: *const ScCertificate,
    name: *const c_char,
    now: u64,
    code_hash: *const u8,
    max_stale: u64,
    verdict: *mut ScVerdict,
) -> ScStatus {
    guard(|| {
        let (Some(store), Some(cert), false, false) =
            (store.as_ref(), cert.as_ref(), name.is_null(), verdict.is_null())
        else {
            return fail(ScStatus::NullPointer, "null argument");
        };
        let Ok(name) = CStr::from_ptr(name).to_str() else {
            return fail(ScStatus::InvalidUtf8, "name is not UTF-8");
        };
        let code_hash = if code_hash.is_null() {
            contracts::smartcert_code_hash()
        } else {
            digest(code_hash).expect("non-null")
        };
        let v = Validator::new(&store.0, TrustAnchors { code_hash, max_stale }).verify(name, &cert.0, now);
        *verdict = ScVerdict::from(&v);
        ScStatus::Ok
    })
}

/// Verifies an encoded inclusion proof against a 32-byte root.
///
/// # Safety
/// `root` must point to 32 bytes, `proof` to `len` bytes; `valid` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sc_trie_verify_proof(
    root: *const u8,
    proof: *const u8,
    len: usize,
    valid: *mut bool,
) -> ScStatus {
    guard(|| {
        let (Some(root), Some(p), false) = (digest(root), bytes(proof, len), valid.is_null()) else {
            return fail(ScStatus::NullPointer, "null argument");
        };
        match InclusionProof::decode(p) {
            Ok(p) => {
                *valid = trie::verify(&root, &p);
                ScStatus::Ok
            }
            Err(e) => fail(ScStatus::Decode, e.to_string()),
        }
    })
}

/// Runs a scenario given as JSON. `passed` receives whether every assertion
/// held; if `report` is non-null it receives the JSON report, to be freed
/// with [`sc_string_free`].
///
/// # Safety
/// `json` must be a NUL-terminated string; `passed` must be writable;
/// `report` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sc_scenario_run(json: *const c_char, passed: *mut bool, report: *mut *mut c_char) -> ScStatus {
    guard(|| {
        if json.is_null() || passed.is_null() {
            return fail(ScStatus::NullPointer, "null argument");
        }
        let Ok(json) = CStr::from_ptr(json).to_str() else {
            return fail(ScStatus::InvalidUtf8, "scenario is not UTF-8");
        };
        let r = match scenario::parse(json).and_then(scenario::run) {
            Ok(r) => r,
            Err(e) => return fail(ScStatus::ScenarioInvalid, e.to_string()),
        };
        *passed = r.passed;
        if !report.is_null() {
            let text = serde_json::to_string(&r).expect("report serializes");
            *report = CString::new(text).map_or(ptr::null_mut(), CString::into_raw);
        }
        ScStatus::Ok
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
