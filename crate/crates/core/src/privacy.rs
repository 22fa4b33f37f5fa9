//! Laplace mechanism and privacy-budget accounting.
//!
//! A counting query has sensitivity `1/n` on adjacent databases, so
//! answering `k` declared queries with `Lap(k / (n * epsilon))` noise is
//! epsilon-differentially private under sequential composition. The budget
//! counts *distinct* queries: answers are memoized upstream, so repeats cost
//! nothing and return identical values.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::SubsetMask;
use crate::oracle::ValueOracle;

const NOISE_SEED_TAG: u64 = 0x6c61_706c_6163_6531;

/// Draw from the Laplace density `(1/2b) exp(-|x|/b)` via inverse CDF.
pub fn laplace_sample<R: Rng>(scale: f64, rng: &mut R) -> Result<f64> {
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "laplace scale must be positive, got {}",
            scale
        )));
    }
    loop {
        let u = rng.gen::<f64>() - 0.5;
        if u > -0.5 {
            return Ok(if u < 0.0 {
                scale * (1.0 + 2.0 * u).ln()
            } else {
                -scale * (1.0 - 2.0 * u).ln()
            });
        }
    }
}

/// A noisy release of a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisyAnswer {
    pub value: f64,
    pub scale: f64,
}

pub fn laplace_mechanism<R: Rng>(true_value: f64, scale: f64, rng: &mut R) -> Result<NoisyAnswer> {
    Ok(NoisyAnswer {
        value: true_value + laplace_sample(scale, rng)?,
        scale,
    })
}

/// Declared query budget for one private run. `used` never exceeds the
/// declared count; the overflow path errors before any noise is drawn.
#[derive(Debug)]
pub struct PrivacyBudget {
    epsilon: Option<f64>,
    declared: u64,
    n: u64,
    used: AtomicU64,
}

/// Snapshot for reports and CLI output.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    pub epsilon: Option<f64>,
    pub declared_queries: u64,
    pub used_queries: u64,
    pub database_size: u64,
    pub noise_scale: f64,
    pub noise_off: bool,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, declared_queries: u64, database_size: u64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                epsilon
            )));
        }
        if declared_queries == 0 || database_size == 0 {
            return Err(Error::InvalidArgument(
                "query count and database size must be positive".into(),
            ));
        }
        Ok(PrivacyBudget {
            epsilon: Some(epsilon),
            declared: declared_queries,
            n: database_size,
            used: AtomicU64::new(0),
        })
    }

    /// Noise-free accounting, for test harnesses and diagnostics runs. The
    /// output is *not* private; reports carry a prominent `noise_off` flag.
    pub fn noise_off(declared_queries: u64, database_size: u64) -> Self {
        PrivacyBudget {
            epsilon: None,
            declared: declared_queries.max(1),
            n: database_size.max(1),
            used: AtomicU64::new(0),
        }
    }

    pub fn is_noise_off(&self) -> bool {
        self.epsilon.is_none()
    }

    /// Laplace scale `k / (n * epsilon)`; zero in noise-off mode.
    pub fn scale(&self) -> f64 {
        match self.epsilon {
            Some(eps) => self.declared as f64 / (self.n as f64 * eps),
            None => 0.0,
        }
    }

    pub fn declared(&self) -> u64 {
        self.declared
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    pub fn database_size(&self) -> u64 {
        self.n
    }

    pub(crate) fn charge(&self) -> Result<()> {
        self.used
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |u| {
                if u < self.declared {
                    Some(u + 1)
                } else {
                    None
                }
            })
            .map(|_| ())
            .map_err(|_| Error::BudgetExhausted {
                used: self.declared,
                declared: self.declared,
            })
    }

    /// Union-bound feasibility of answering all declared queries within
    /// `tau`: `k * exp(-tau * n * epsilon / k) <= beta`.
    pub fn tail_check(&self, tau: f64, beta: f64) -> bool {
        match self.epsilon {
            None => true,
            Some(_) => self.declared as f64 * (-tau / self.scale()).exp() <= beta,
        }
    }

    pub fn report(&self) -> BudgetReport {
        BudgetReport {
            epsilon: self.epsilon,
            declared_queries: self.declared,
            used_queries: self.used(),
            database_size: self.n,
            noise_scale: self.scale(),
            noise_off: self.is_noise_off(),
        }
    }
}

/// Smallest database size at which the declared queries can all be answered
/// within `tau` with probability `1 - beta`:
/// `ceil(k (ln k + ln(1/beta)) / (epsilon * tau))`.
pub fn min_database_size(k: u64, tau: f64, beta: f64, epsilon: f64) -> Result<u64> {
    let bad = |x: f64| x.is_nan() || x <= 0.0;
    if k == 0 || bad(tau) || bad(epsilon) || bad(beta) || beta >= 1.0 {
        return Err(Error::InvalidArgument(
            "min_database_size requires k >= 1, tau > 0, epsilon > 0, 0 < beta < 1".into(),
        ));
    }
    let kf = k as f64;
    let bound = kf * (kf.ln() + (1.0 / beta).ln()) / (epsilon * tau);
    Ok(bound.ceil().max(1.0) as u64)
}

/// Wrap an exact counting-query function as a budgeted, noisy value oracle.
///
/// Each distinct mask charges one unit of budget and receives an independent
/// Laplace draw at the budget's scale; the oracle cache then pins that
/// answer. Noise is derived from `(noise_seed, mask)`, so answers do not
/// depend on query order. Answers are clamped to `[0,1]`, which never
/// increases their distance from the true value.
pub fn private_sq_oracle<F>(
    d: usize,
    declared_tolerance: f64,
    budget: Arc<PrivacyBudget>,
    noise_seed: u64,
    query: F,
) -> ValueOracle
where
    F: Fn(&SubsetMask) -> f64 + Send + Sync + 'static,
{
    ValueOracle::with_tolerance(d, declared_tolerance, move |mask| {
        budget.charge()?;
        let exact = query(mask);
        let value = if budget.is_noise_off() {
            exact
        } else {
            let mut rng = ChaCha12Rng::seed_from_u64(mask.fingerprint(noise_seed ^ NOISE_SEED_TAG));
            exact + laplace_sample(budget.scale(), &mut rng)?
        };
        Ok(value.clamp(0.0, 1.0))
    })
}

/// Upper bound on the distinct counting queries any memoized pipeline can
/// issue over a `d`-attribute universe: one per mask.
pub fn max_distinct_queries(d: usize) -> u64 {
    if d >= 63 {
        u64::MAX
    } else {
        1u64 << d
    }
}
