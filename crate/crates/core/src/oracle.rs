//! Value-oracle access to set functions.
//!
//! A [`ValueOracle`] answers evaluation queries `f(S)` for a set function
//! `f: 2^U -> [0,1]`. Answers are memoized so that repeated queries on the
//! same mask return bit-identical values, and a call counter tracks how much
//! work a consumer performed. An oracle may be *tolerant*: its answers are
//! only guaranteed within `tolerance` of the underlying function.
//!
//! Derived oracles (restrictions, shifts, complements) are lightweight views
//! that share the cache and counter of the oracle they were derived from.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::mask::SubsetMask;

/// Absolute tolerance used by the exhaustive structural checks.
pub const STRUCT_TOL: f64 = 1e-9;

type BaseFn = dyn Fn(&SubsetMask) -> Result<f64> + Send + Sync;

struct OracleCore {
    d: usize,
    base: Box<BaseFn>,
    tolerance: f64,
    cache: Mutex<HashMap<SubsetMask, f64>>,
    calls: AtomicU64,
}

/// An affine reindexing of mask arguments: `S -> add ∪ (keep ∩ S)`, with the
/// argument complemented first when `flip` is set. Closed under the
/// restriction/shift/complement operations used by the decompositions, so a
/// chain of derived oracles stays a single table lookup deep.
#[derive(Clone, Debug, PartialEq, Eq)]
struct MaskMap {
    add: SubsetMask,
    keep: SubsetMask,
    flip: bool,
}

impl MaskMap {
    fn identity(d: usize) -> Self {
        MaskMap {
            add: SubsetMask::empty(d),
            keep: SubsetMask::full(d),
            flip: false,
        }
    }

    fn apply(&self, s: &SubsetMask) -> SubsetMask {
        let arg = if self.flip { s.complement() } else { s.clone() };
        self.add.union(&self.keep.intersection(&arg))
    }

    /// Map evaluating `self.apply(B ∪ (V ∩ S))`.
    fn then_restrict_shift(&self, shift: &SubsetMask, domain: &SubsetMask) -> Self {
        if !self.flip {
            MaskMap {
                add: self.add.union(&self.keep.intersection(shift)),
                keep: self.keep.intersection(domain),
                flip: false,
            }
        } else {
            let kept = self.keep.difference(shift);
            MaskMap {
                add: self.add.union(&kept.difference(domain)),
                keep: kept,
                flip: true,
            }
        }
    }

    /// Map evaluating `self.apply(V \ S)`.
    fn then_complement_within(&self, domain: &SubsetMask) -> Self {
        if !self.flip {
            MaskMap {
                add: self.add.clone(),
                keep: self.keep.intersection(domain),
                flip: true,
            }
        } else {
            MaskMap {
                add: self.add.union(&self.keep.difference(domain)),
                keep: self.keep.intersection(domain),
                flip: false,
            }
        }
    }
}

/// Snapshot of an oracle's work counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct OracleStats {
    /// Evaluation requests, including cache hits, across all derived views.
    pub calls: u64,
    /// Distinct masks evaluated against the base function.
    pub distinct: u64,
}

/// Memoizing, thread-safe oracle for a set function `f: 2^U -> [0,1]`.
#[derive(Clone)]
pub struct ValueOracle {
    core: Arc<OracleCore>,
    view: MaskMap,
}

impl ValueOracle {
    /// Oracle for an exactly-known function (`tolerance = 0`).
    pub fn exact<F>(d: usize, f: F) -> Self
    where
        F: Fn(&SubsetMask) -> f64 + Send + Sync + 'static,
    {
        Self::with_tolerance(d, 0.0, move |s| Ok(f(s)))
    }

    /// Oracle whose base function may fail (e.g. a budgeted private oracle)
    /// and whose answers carry the declared tolerance.
    pub fn with_tolerance<F>(d: usize, tolerance: f64, f: F) -> Self
    where
        F: Fn(&SubsetMask) -> Result<f64> + Send + Sync + 'static,
    {
        assert!(d > 0, "universe must be non-empty");
        assert!(tolerance >= 0.0, "tolerance must be nonnegative");
        ValueOracle {
            core: Arc::new(OracleCore {
                d,
                base: Box::new(f),
                tolerance,
                cache: Mutex::new(HashMap::new()),
                calls: AtomicU64::new(0),
            }),
            view: MaskMap::identity(d),
        }
    }

    /// Test-harness oracle: answers `f(S)` plus uniform noise in `[-tau, tau]`,
    /// clamped back to `[0,1]`. The noise draw is a pure function of the mask
    /// and `seed`, so answers are consistent regardless of query order.
    pub fn tolerant<F>(d: usize, tau: f64, seed: u64, f: F) -> Self
    where
        F: Fn(&SubsetMask) -> f64 + Send + Sync + 'static,
    {
        assert!(tau >= 0.0, "tolerance must be nonnegative");
        Self::with_tolerance(d, tau, move |s| {
            let clean = f(s);
            if tau == 0.0 {
                return Ok(clean);
            }
            let mut rng = ChaCha12Rng::seed_from_u64(s.fingerprint(seed));
            let noise = rng.gen_range(-tau..=tau);
            Ok((clean + noise).clamp(0.0, 1.0))
        })
    }

    pub fn universe_size(&self) -> usize {
        self.core.d
    }

    pub fn tolerance(&self) -> f64 {
        self.core.tolerance
    }

    pub fn stats(&self) -> OracleStats {
        OracleStats {
            calls: self.core.calls.load(Ordering::Relaxed),
            distinct: self.core.cache.lock().unwrap().len() as u64,
        }
    }

    /// Evaluate `f(S)`.
    pub fn eval(&self, s: &SubsetMask) -> Result<f64> {
        if s.universe_size() != self.core.d {
            return Err(Error::InvalidArgument(format!(
                "mask universe size {} does not match oracle universe size {}",
                s.universe_size(),
                self.core.d
            )));
        }
        self.core.calls.fetch_add(1, Ordering::Relaxed);
        let arg = self.view.apply(s);
        let mut cache = self.core.cache.lock().unwrap();
        if let Some(&v) = cache.get(&arg) {
            return Ok(v);
        }
        let raw = (self.core.base)(&arg)?;
        if !(-1e-12..=1.0 + 1e-12).contains(&raw) {
            return Err(Error::Contract(format!(
                "oracle returned {} outside [0,1] for mask {}",
                raw, arg
            )));
        }
        let v = raw.clamp(0.0, 1.0);
        cache.insert(arg, v);
        Ok(v)
    }

    /// Marginal value of element `x` at `S`: `f(S ∪ {x}) - f(S)`.
    /// Exactly zero when `x ∈ S`, since both queries hit the same cache entry.
    pub fn marginal(&self, s: &SubsetMask, x: usize) -> Result<f64> {
        if x >= self.core.d {
            return Err(Error::InvalidArgument(format!(
                "element index {} out of range for universe size {}",
                x, self.core.d
            )));
        }
        Ok(self.eval(&s.with(x))? - self.eval(s)?)
    }

    /// View evaluating the restriction-shift `S -> f((S ∩ domain) ∪ shift)`.
    pub fn restricted_shift(&self, shift: &SubsetMask, domain: &SubsetMask) -> Self {
        ValueOracle {
            core: Arc::clone(&self.core),
            view: self.view.then_restrict_shift(shift, domain),
        }
    }

    /// View evaluating `S -> f(domain \ S)`. Shares cache and counter with
    /// `self`, so querying the view advances the underlying counters.
    pub fn complemented_within(&self, domain: &SubsetMask) -> Result<Self> {
        if domain.universe_size() != self.core.d {
            return Err(Error::InvalidArgument(
                "complement domain from a different universe".into(),
            ));
        }
        Ok(ValueOracle {
            core: Arc::clone(&self.core),
            view: self.view.then_complement_within(domain),
        })
    }
}

/// Subsets of `domain`, enumerated in ascending integer order of their
/// compressed index pattern.
pub fn enumerate_subsets_of(domain: &SubsetMask) -> Result<Vec<SubsetMask>> {
    let indices: Vec<usize> = domain.iter().collect();
    let k = indices.len();
    if k > 25 {
        return Err(Error::Capacity(format!(
            "exhaustive enumeration over 2^{} subsets refused",
            k
        )));
    }
    let d = domain.universe_size();
    let mut out = Vec::with_capacity(1 << k);
    for bits in 0u64..(1u64 << k) {
        let mut m = SubsetMask::empty(d);
        for (pos, &idx) in indices.iter().enumerate() {
            if bits >> pos & 1 == 1 {
                m.insert(idx);
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Exhaustive submodularity check: marginals never grow when the base set
/// grows. Intended as a test oracle for small universes.
pub fn check_submodular(oracle: &ValueOracle) -> Result<bool> {
    let d = oracle.universe_size();
    if d > 20 {
        return Err(Error::Capacity(format!(
            "submodularity check on universe size {} refused",
            d
        )));
    }
    for t_bits in 0u64..(1u64 << d) {
        let t = SubsetMask::from_u64(d, t_bits);
        // Proper subsets of T, then the empty set.
        let mut s_bits = t_bits;
        loop {
            s_bits = s_bits.wrapping_sub(1) & t_bits;
            let s = SubsetMask::from_u64(d, s_bits);
            for x in 0..d {
                if s.contains(x) {
                    continue;
                }
                if oracle.marginal(&s, x)? < oracle.marginal(&t, x)? - STRUCT_TOL {
                    return Ok(false);
                }
            }
            if s_bits == 0 {
                break;
            }
        }
    }
    Ok(true)
}

/// Exhaustive monotonicity check.
pub fn check_monotone(oracle: &ValueOracle) -> Result<bool> {
    let d = oracle.universe_size();
    if d > 20 {
        return Err(Error::Capacity(format!(
            "monotonicity check on universe size {} refused",
            d
        )));
    }
    for bits in 0u64..(1u64 << d) {
        let s = SubsetMask::from_u64(d, bits);
        for x in 0..d {
            if !s.contains(x) && oracle.marginal(&s, x)? < -STRUCT_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Exhaustive Lipschitz check over the subsets of `domain`.
///
/// With `signed` set, requires `|∂_x f(S)| <= gamma` for every `x` in the
/// domain; otherwise only the upper bound `∂_x f(S) <= gamma`.
pub fn check_lipschitz_over(
    oracle: &ValueOracle,
    domain: &SubsetMask,
    gamma: f64,
    signed: bool,
) -> Result<bool> {
    let indices: Vec<usize> = domain.iter().collect();
    for s in enumerate_subsets_of(domain)? {
        for &x in &indices {
            let m = oracle.marginal(&s, x)?;
            let violation = if signed { m.abs() } else { m };
            if violation > gamma + STRUCT_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// [`check_lipschitz_over`] on the full universe.
pub fn check_lipschitz(oracle: &ValueOracle, gamma: f64, signed: bool) -> Result<bool> {
    let full = SubsetMask::full(oracle.universe_size());
    check_lipschitz_over(oracle, &full, gamma, signed)
}
