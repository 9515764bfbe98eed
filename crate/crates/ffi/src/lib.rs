//! C ABI over `mobility-core`.
//!
//! Every fallible call returns a [`MobStatus`]; on failure the message is
//! available from [`mob_last_error`] on the same thread. Results are written
//! through out-pointers. Variable-length results come back as opaque handles
//! that must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;
use std::slice;

use mobility_core::colocation::{expected_colocation_duration, expected_colocation_prob, DurationFormula};
use mobility_core::geo::{haversine, LatLon};
use mobility_core::metrics::{location_entropy, radius_of_gyration};
use mobility_core::model::{psis_loo, LooResult};
use mobility_core::routines::{compression_ratio, sequitur};
use mobility_core::trajectory::{cluster_stop_locations, detect_stop_events_chunked, GpsPing, StopConfig};
use mobility_core::Error;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    /// The quantity is mathematically undefined for the arguments.
    Undefined = 3,
    OutOfRange = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: MobStatus, msg: impl Into<String>) -> MobStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> MobStatus {
    let status = match e {
        Error::Undefined(_) => MobStatus::Undefined,
        _ => MobStatus::InvalidInput,
    };
    fail(status, e.to_string())
}

/// Runs `f`, clearing the last error first and mapping panics.
fn guard(f: impl FnOnce() -> MobStatus + UnwindSafe) -> MobStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(f).unwrap_or_else(|_| fail(MobStatus::Internal, "internal panic"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(MobStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// # Safety
/// `p` must be null or point to `n` readable values.
unsafe fn view<'a, T>(p: *const T, n: usize) -> &'a [T] {
    if n == 0 {
        &[]
    } else {
        slice::from_raw_parts(p, n)
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn mob_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Great-circle distance in meters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mob_haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out: *mut f64) -> MobStatus {
    guard(|| {
        non_null!(out);
        if ![lat1, lon1, lat2, lon2].iter().all(|v| v.is_finite()) {
            return fail(MobStatus::InvalidInput, "coordinates must be finite");
        }
        *out = haversine(LatLon::new(lat1, lon1), LatLon::new(lat2, lon2));
        MobStatus::Ok
    })
}

/// One detected stop event and the stop location it was grouped into.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobStopEvent {
    pub start_time: i64,
    pub end_time: i64,
    pub medoid_lat: f64,
    pub medoid_lon: f64,
    pub n_pings: u64,
    pub location_id: u32,
}

/// Opaque list of stop events.
pub struct MobStopEvents {
    events: Vec<MobStopEvent>,
}

/// Detects stop events in one user's time-ordered pings and groups them into
/// stop locations with the default DBSCAN settings for `delta_s`.
///
/// # Safety
/// `timestamps`, `lats` and `lons` must each hold `n` values; `out` must be
/// a valid pointer. Release the handle with [`mob_stop_events_free`].
#[no_mangle]
pub unsafe extern "C" fn mob_detect_stops(
    timestamps: *const i64,
    lats: *const f64,
    lons: *const f64,
    n: usize,
    delta_s: f64,
    delta_t: i64,
    out: *mut *mut MobStopEvents,
) -> MobStatus {
    guard(|| {
        non_null!(out);
        *out = ptr::null_mut();
        if n > 0 {
            non_null!(timestamps, lats, lons);
        }
        let (ts, la, lo) = (view(timestamps, n), view(lats, n), view(lons, n));
        let pings: Vec<GpsPing> = (0..n).map(|i| GpsPing::new(ts[i], la[i], lo[i])).collect();
        let cfg = StopConfig::with_thresholds(delta_s, delta_t);
        if let Err(e) = cfg.validate() {
            return from_error(e);
        }
        let events = match detect_stop_events_chunked("", &pings, &cfg) {
            Ok(e) => e,
            Err(e) => return from_error(e),
        };
        let mut flat: Vec<MobStopEvent> = if events.is_empty() {
            Vec::new()
        } else {
            cluster_stop_locations(&events, &cfg)
                .into_iter()
                .flat_map(|l| {
                    let id = l.location_id;
                    l.member_events.into_iter().map(move |e| MobStopEvent {
                        start_time: e.start_time,
                        end_time: e.end_time,
                        medoid_lat: e.medoid_lat,
                        medoid_lon: e.medoid_lon,
                        n_pings: e.n_pings as u64,
                        location_id: id,
                    })
                })
                .collect()
        };
        flat.sort_by_key(|e| e.start_time);
        *out = Box::into_raw(Box::new(MobStopEvents { events: flat }));
        MobStatus::Ok
    })
}

/// Number of events in the handle; 0 for null.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mob_stop_events_len(h: *const MobStopEvents) -> usize {
    h.as_ref().map_or(0, |h| h.events.len())
}

/// Copies event `i` into `out`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mob_stop_events_get(h: *const MobStopEvents, i: usize, out: *mut MobStopEvent) -> MobStatus {
    guard(|| {
        non_null!(h, out);
        let h = &*h;
        match h.events.get(i) {
            Some(e) => {
                *out = *e;
                MobStatus::Ok
            }
            None => fail(MobStatus::OutOfRange, format!("index {i} out of range")),
        }
    })
}

/// # Safety
/// `h` must be null or a handle from [`mob_detect_stops`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mob_stop_events_free(h: *mut MobStopEvents) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Symbol count over grammar size of the Sequitur grammar of `symbols`.
///
/// # Safety
/// `symbols` must hold `n` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mob_compression_ratio(symbols: *const u32, n: usize, out: *mut f64) -> MobStatus {
    guard(|| {
        non_null!(out);
        if n > 0 {
            non_null!(symbols);
        }
        let seq = view(symbols, n);
        match compression_ratio(seq, &sequitur(seq)) {
            Ok(r) => {
                *out = r;
                MobStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Null-model probability that two stays of `duration` minutes overlap by at
/// least `eps` minutes on a circular day of `day_len` minutes.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mob_colocation_prob(duration: f64, eps: f64, day_len: f64, out: *mut f64) -> MobStatus {
    guard(|| {
        non_null!(out);
        if !(duration >= 0.0 && eps >= 0.0 && day_len > 0.0) {
            return fail(MobStatus::InvalidInput, "durations must be non-negative and the day positive");
        }
        *out = expected_colocation_prob(duration, eps, day_len);
        MobStatus::Ok
    })
}

/// Expected overlap in minutes given co-location. `half_excess` selects the
/// `(d - 15) / 2` approximation instead of the exact conditional mean.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mob_colocation_duration(
    duration: f64,
    eps: f64,
    day_len: f64,
    half_excess: bool,
    out: *mut f64,
) -> MobStatus {
    guard(|| {
        non_null!(out);
        if !(eps >= 0.0 && day_len > 0.0) {
            return fail(MobStatus::InvalidInput, "eps must be non-negative and the day positive");
        }
        let f = if half_excess {
            DurationFormula::HalfExcess
        } else {
            DurationFormula::Conditional
        };
        match expected_colocation_duration(duration, eps, day_len, f) {
            Ok(v) => {
                *out = v;
                MobStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Opaque PSIS-LOO result.
pub struct MobLoo {
    inner: LooResult,
}

/// PSIS-LOO from a draw-major log-likelihood matrix: entry `s * n_obs + i`
/// is draw `s`, observation `i`.
///
/// # Safety
/// `log_lik` must hold `n_draws * n_obs` values and `out` must be valid.
/// Release the handle with [`mob_loo_free`].
#[no_mangle]
pub unsafe extern "C" fn mob_psis_loo(log_lik: *const f64, n_draws: usize, n_obs: usize, out: *mut *mut MobLoo) -> MobStatus {
    guard(|| {
        non_null!(log_lik, out);
        *out = ptr::null_mut();
        let Some(len) = n_draws.checked_mul(n_obs) else {
            return fail(MobStatus::InvalidInput, "matrix too large");
        };
        let m = view(log_lik, len);
        let by_obs: Vec<Vec<f64>> = (0..n_obs).map(|i| (0..n_draws).map(|s| m[s * n_obs + i]).collect()).collect();
        match psis_loo(&by_obs) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(MobLoo { inner: r }));
                MobStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Total, standard error and whether any Pareto k exceeds 0.7.
///
/// # Safety
/// `h` must be a live handle; each out-pointer must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn mob_loo_summary(h: *const MobLoo, loo: *mut f64, se: *mut f64, warning: *mut bool) -> MobStatus {
    guard(|| {
        non_null!(h);
        let r = &(*h).inner;
        if !loo.is_null() {
            *loo = r.loo;
        }
        if !se.is_null() {
            *se = r.se;
        }
        if !warning.is_null() {
            *warning = r.warning;
        }
        MobStatus::Ok
    })
}

/// Number of observations in the result; 0 for null.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mob_loo_len(h: *const MobLoo) -> usize {
    h.as_ref().map_or(0, |h| h.inner.pointwise.len())
}

/// Copies the pointwise values and Pareto k of every observation. Either
/// buffer may be null; non-null buffers must hold `len` values, which must
/// equal [`mob_loo_len`].
///
/// # Safety
/// As above.
#[no_mangle]
pub unsafe extern "C" fn mob_loo_pointwise(h: *const MobLoo, pointwise: *mut f64, pareto_k: *mut f64, len: usize) -> MobStatus {
    guard(|| {
        non_null!(h);
        let r = &(*h).inner;
        if len != r.pointwise.len() {
            return fail(MobStatus::OutOfRange, format!("buffer holds {len}, result has {}", r.pointwise.len()));
        }
        if !pointwise.is_null() {
            ptr::copy_nonoverlapping(r.pointwise.as_ptr(), pointwise, len);
        }
        if !pareto_k.is_null() {
            ptr::copy_nonoverlapping(r.pareto_k.as_ptr(), pareto_k, len);
        }
        MobStatus::Ok
    })
}

/// # Safety
/// `h` must be null or a handle from [`mob_psis_loo`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mob_loo_free(h: *mut MobLoo) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Normalised location entropy of the weights, in [0, 1].
///
/// # Safety
/// `weights` must hold `n` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mob_location_entropy(weights: *const f64, n: usize, out: *mut f64) -> MobStatus {
    guard(|| {
        non_null!(out);
        if n > 0 {
            non_null!(weights);
        }
        let w = view(weights, n);
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return fail(MobStatus::InvalidInput, "weights must be finite and non-negative");
        }
        *out = location_entropy(w);
        MobStatus::Ok
    })
}

/// Weighted radius of gyration in meters.
///
/// # Safety
/// `lats`, `lons` and `weights` must each hold `n` values; `out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn mob_radius_of_gyration(
    lats: *const f64,
    lons: *const f64,
    weights: *const f64,
    n: usize,
    out: *mut f64,
) -> MobStatus {
    guard(|| {
        non_null!(lats, lons, weights, out);
        let (la, lo, w) = (view(lats, n), view(lons, n), view(weights, n));
        let points: Vec<(LatLon, f64)> = (0..n).map(|i| (LatLon::new(la[i], lo[i]), w[i])).collect();
        match radius_of_gyration(&points) {
            Ok(v) => {
                *out = v;
                MobStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
