//! Multiplicative-weights query release driven by a weak agnostic learner.
//!
//! The engine maintains an explicit distribution over a finite universe of
//! points. Each round, a learner is handed two labeled mixtures (data
//! against the current synthetic distribution, with both label
//! orientations) and returns the concept that best distinguishes them. While
//! the reported advantage stays above a threshold, the synthetic
//! distribution is reweighted toward the data along that concept; once no
//! concept distinguishes them, the expectations of every concept under the
//! synthetic distribution are released as the answers.
//!
//! The reverse direction is also provided: any release routine that answers
//! a whole concept family through statistical queries yields an agnostic
//! learner via two label-conditioned runs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::splitmix64;
use crate::privacy::{laplace_sample, PrivacyBudget};

/// Explicit nonnegative weights over points `0..len`, normalized to sum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDistribution {
    weights: Vec<f64>,
}

impl WeightedDistribution {
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "universe must be non-empty");
        WeightedDistribution {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty weight table".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        Ok(WeightedDistribution {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Empirical distribution of a list of observed points.
    pub fn empirical<I: IntoIterator<Item = usize>>(n: usize, points: I) -> Result<Self> {
        let mut weights = vec![0.0; n];
        let mut count = 0u64;
        for p in points {
            if p >= n {
                return Err(Error::InvalidArgument(format!(
                    "point {} outside universe of size {}",
                    p, n
                )));
            }
            weights[p] += 1.0;
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidArgument("no observed points".into()));
        }
        Self::from_weights(weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self, x: usize) -> f64 {
        self.weights[x]
    }

    pub fn expectation<F: Fn(usize) -> bool>(&self, pred: F) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|&(x, _)| pred(x))
            .map(|(_, w)| w)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `RE(P || Q) = sum_x P(x) ln(P(x)/Q(x))`; requires `supp(P) ⊆ supp(Q)`.
pub fn relative_entropy(p: &WeightedDistribution, q: &WeightedDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(
            "distributions over different universes".into(),
        ));
    }
    let mut total = 0.0;
    for x in 0..p.len() {
        let px = p.weight(x);
        if px == 0.0 {
            continue;
        }
        let qx = q.weight(x);
        if qx == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "support violation at point {}",
                x
            )));
        }
        total += px * (px / qx).ln();
    }
    Ok(total)
}

/// One multiplicative-weights step: multiply by `exp(eta * penalty(x))` and
/// renormalize. The support never shrinks.
pub fn mw_update<F: Fn(usize) -> bool>(
    prev: &WeightedDistribution,
    penalty: F,
    eta: f64,
) -> WeightedDistribution {
    let boost = eta.exp();
    let mut weights: Vec<f64> = prev
        .weights
        .iter()
        .enumerate()
        .map(|(x, &w)| if penalty(x) { w * boost } else { w })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    WeightedDistribution { weights }
}

/// An indexed family of `{0,1}`-valued concepts over points `0..`.
pub trait ConceptFamily: Send + Sync {
    fn len(&self) -> usize;
    fn eval(&self, concept: usize, point: usize) -> bool;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All monotone conjunctions over `d` binary attributes. Points and
/// concepts are both bit patterns in `0..2^d`; concept `c` holds on `x`
/// when every attribute of `c` is set in `x`. Concept 0 is identically
/// true.
#[derive(Debug, Clone, Copy)]
pub struct MonotoneConjunctions {
    d: usize,
}

impl MonotoneConjunctions {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d > 22 {
            return Err(Error::InvalidArgument(format!(
                "conjunction universe dimension {} out of range 1..=22",
                d
            )));
        }
        Ok(MonotoneConjunctions { d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_points(&self) -> usize {
        1 << self.d
    }
}

impl ConceptFamily for MonotoneConjunctions {
    fn len(&self) -> usize {
        1 << self.d
    }

    fn eval(&self, concept: usize, point: usize) -> bool {
        point & concept == concept
    }
}

/// Statistical-query access to the hidden data distribution: answers
/// `E_{x~D}[q_c(x)]` within `tolerance()`.
pub trait DataSqOracle: Send + Sync {
    fn concept_expectation(&self, concept: usize) -> Result<f64>;
    fn tolerance(&self) -> f64;
    fn calls(&self) -> u64;
}

/// Exact statistical queries against a known table; tolerance zero.
pub struct ExactSqOracle<F: ConceptFamily> {
    family: Arc<F>,
    dist: WeightedDistribution,
    calls: AtomicU64,
}

impl<F: ConceptFamily> ExactSqOracle<F> {
    pub fn new(family: Arc<F>, dist: WeightedDistribution) -> Self {
        ExactSqOracle {
            family,
            dist,
            calls: AtomicU64::new(0),
        }
    }

    pub fn distribution(&self) -> &WeightedDistribution {
        &self.dist
    }
}

impl<F: ConceptFamily> DataSqOracle for ExactSqOracle<F> {
    fn concept_expectation(&self, concept: usize) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.dist.expectation(|x| self.family.eval(concept, x)))
    }

    fn tolerance(&self) -> f64 {
        0.0
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Budgeted noisy statistical queries against a concept family. Each
/// distinct concept charges one unit of budget and receives Laplace noise at
/// the budget's scale; repeats are memoized, so they cost nothing and stay
/// consistent. Noise is keyed by `(seed, concept)`, independent of query
/// order.
pub struct BudgetedSqOracle<F: ConceptFamily> {
    family: Arc<F>,
    dist: WeightedDistribution,
    budget: Arc<PrivacyBudget>,
    seed: u64,
    declared_tolerance: f64,
    memo: Mutex<HashMap<usize, f64>>,
    calls: AtomicU64,
}

impl<F: ConceptFamily> BudgetedSqOracle<F> {
    pub fn new(
        family: Arc<F>,
        dist: WeightedDistribution,
        budget: Arc<PrivacyBudget>,
        declared_tolerance: f64,
        seed: u64,
    ) -> Self {
        BudgetedSqOracle {
            family,
            dist,
            budget,
            seed,
            declared_tolerance,
            memo: Mutex::new(HashMap::new()),
            calls: AtomicU64::new(0),
        }
    }

    pub fn budget(&self) -> &PrivacyBudget {
        &self.budget
    }
}

impl<F: ConceptFamily> DataSqOracle for BudgetedSqOracle<F> {
    fn concept_expectation(&self, concept: usize) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut memo = self.memo.lock().unwrap();
        if let Some(&v) = memo.get(&concept) {
            return Ok(v);
        }
        self.budget.charge()?;
        let exact = self.dist.expectation(|x| self.family.eval(concept, x));
        let value = if self.budget.is_noise_off() {
            exact
        } else {
            let mut rng =
                ChaCha12Rng::seed_from_u64(splitmix64(self.seed ^ concept as u64));
            (exact + laplace_sample(self.budget.scale(), &mut rng)?).clamp(0.0, 1.0)
        };
        memo.insert(concept, value);
        Ok(value)
    }

    fn tolerance(&self) -> f64 {
        self.declared_tolerance
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// A labeled mixture: the hidden data distribution carrying `data_label`
/// and the known synthetic distribution carrying the complement, mixed
/// half-and-half.
pub struct LabeledMixture<'a> {
    pub synthetic: &'a WeightedDistribution,
    pub data_label: bool,
}

/// `Pr[q_c(x) = b]` on the mixture: one statistical query for the data side,
/// the synthetic side is known exactly.
pub fn agreement<F: ConceptFamily>(
    family: &F,
    concept: usize,
    mixture: &LabeledMixture<'_>,
    sq: &dyn DataSqOracle,
) -> Result<f64> {
    let e_data = sq.concept_expectation(concept)?;
    let e_syn = mixture.synthetic.expectation(|x| family.eval(concept, x));
    Ok(if mixture.data_label {
        0.5 * e_data + 0.5 * (1.0 - e_syn)
    } else {
        0.5 * (1.0 - e_data) + 0.5 * e_syn
    })
}

/// A weak agnostic learner: returns a concept index with agreement at least
/// `1/2 + beta` on the mixture whenever some concept reaches `1/2 + alpha`.
pub trait WeakLearner<F: ConceptFamily> {
    fn learn(&self, family: &F, mixture: &LabeledMixture<'_>, sq: &dyn DataSqOracle)
        -> Result<usize>;
}

/// Deterministic brute-force learner: scans the whole family and returns
/// the concept with the best oracle-reported agreement, lowest index
/// winning ties. Meets the weak-learning contract with zero failure
/// probability, losing at most the oracle tolerance per scan entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustiveWeakLearner;

impl<F: ConceptFamily> WeakLearner<F> for ExhaustiveWeakLearner {
    fn learn(
        &self,
        family: &F,
        mixture: &LabeledMixture<'_>,
        sq: &dyn DataSqOracle,
    ) -> Result<usize> {
        let mut best = 0usize;
        let mut best_value = f64::NEG_INFINITY;
        for c in 0..family.len() {
            let v = agreement(family, c, mixture, sq)?;
            if v > best_value {
                best_value = v;
                best = c;
            }
        }
        Ok(best)
    }
}

/// Failure amplification by independent repetition: run the inner learner
/// several times and keep the hypothesis with the best reported agreement.
pub struct RepeatedLearner<L> {
    pub inner: L,
    pub repeats: usize,
}

impl<F: ConceptFamily, L: WeakLearner<F>> WeakLearner<F> for RepeatedLearner<L> {
    fn learn(
        &self,
        family: &F,
        mixture: &LabeledMixture<'_>,
        sq: &dyn DataSqOracle,
    ) -> Result<usize> {
        let mut best = None;
        for _ in 0..self.repeats.max(1) {
            let c = self.inner.learn(family, mixture, sq)?;
            let v = agreement(family, c, mixture, sq)?;
            match best {
                None => best = Some((c, v)),
                Some((_, bv)) if v > bv => best = Some((c, v)),
                _ => {}
            }
        }
        Ok(best.expect("at least one repetition").0)
    }
}

/// Parameters of one multiplicative-weights run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MwConfig {
    /// The learner's advantage guarantee.
    pub beta: f64,
    /// Statistical-query tolerance; at most `beta / 8`.
    pub tau: f64,
    /// Penalty parameter `beta / 2`.
    pub eta: f64,
    /// Round cap `ceil(8 ln|X| / beta^2) + 1`.
    pub rounds_cap: usize,
    /// Stop once the reported advantage is at most `beta/2 - tau`.
    pub termination: f64,
}

impl MwConfig {
    pub fn new(beta: f64, tau: f64, n_points: usize) -> Result<Self> {
        if beta.is_nan() || beta <= 0.0 || beta >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "beta must be in (0,1), got {}",
                beta
            )));
        }
        if tau.is_nan() || tau < 0.0 || tau > beta / 8.0 + 1e-15 {
            return Err(Error::InvalidArgument(format!(
                "tau must satisfy 0 <= tau <= beta/8, got {}",
                tau
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidArgument(
                "universe must have at least two points".into(),
            ));
        }
        Ok(MwConfig {
            beta,
            tau,
            eta: beta / 2.0,
            rounds_cap: (8.0 * (n_points as f64).ln() / (beta * beta)).ceil() as usize + 1,
            termination: beta / 2.0 - tau,
        })
    }

    /// Calibration for the exhaustive learner at release accuracy `alpha`:
    /// the scan guarantees advantage `alpha/2 - 2 tau`, and `tau = alpha/20`
    /// makes that exactly `8 tau`.
    pub fn for_exhaustive_release(alpha: f64, n_points: usize) -> Result<Self> {
        if alpha.is_nan() || alpha <= 0.0 || alpha > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in (0,1], got {}",
                alpha
            )));
        }
        let tau = alpha / 20.0;
        let beta = alpha / 2.0 - 2.0 * tau;
        Self::new(beta, tau, n_points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Plus,
    Minus,
}

/// Per-round diagnostics of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    pub v: f64,
    pub orientation: Orientation,
    pub concept: usize,
    pub updated: bool,
    /// Relative entropy of the data distribution to the synthetic one after
    /// this round; present when the true distribution was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential_drop: Option<f64>,
}

/// Result of a multiplicative-weights release.
#[derive(Debug)]
pub struct MwOutcome {
    /// `E_{x ~ final}[q_c(x)]` for every concept `c`.
    pub answers: Vec<f64>,
    pub final_dist: WeightedDistribution,
    pub rounds: usize,
    pub trace: Vec<RoundTrace>,
}

/// Run the multiplicative-weights release loop.
///
/// `sq` answers statistical queries about the hidden data distribution;
/// `diagnostics`, when supplied (exact-mode runs), enables the relative
/// entropy trace. Errors with a contract violation if the round cap is
/// reached, which cannot happen when the learner and oracle honor their
/// guarantees.
pub fn mw_release<F: ConceptFamily>(
    family: &F,
    learner: &dyn WeakLearner<F>,
    sq: &dyn DataSqOracle,
    cfg: &MwConfig,
    n_points: usize,
    diagnostics: Option<&WeightedDistribution>,
) -> Result<MwOutcome> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty concept family".into()));
    }
    if sq.tolerance() > cfg.tau + 1e-15 {
        return Err(Error::InvalidArgument(format!(
            "oracle tolerance {} exceeds configured tau {}",
            sq.tolerance(),
            cfg.tau
        )));
    }
    let mut dist = WeightedDistribution::uniform(n_points);
    let mut trace = Vec::new();
    let mut potential = diagnostics
        .map(|d| relative_entropy(d, &dist))
        .transpose()?;

    for round in 1..=cfg.rounds_cap {
        let plus = LabeledMixture {
            synthetic: &dist,
            data_label: true,
        };
        let minus = LabeledMixture {
            synthetic: &dist,
            data_label: false,
        };
        let q_plus = learner.learn(family, &plus, sq)?;
        let q_minus = learner.learn(family, &minus, sq)?;
        if q_plus >= family.len() || q_minus >= family.len() {
            return Err(Error::Contract(format!(
                "learner returned concept index outside the family (round {})",
                round
            )));
        }
        let v_plus = agreement(family, q_plus, &plus, sq)?;
        let v_minus = agreement(family, q_minus, &minus, sq)?;
        let (value, concept, orientation) = if v_plus >= v_minus {
            (v_plus, q_plus, Orientation::Plus)
        } else {
            (v_minus, q_minus, Orientation::Minus)
        };
        let v = value - 0.5;

        if v <= cfg.termination {
            trace.push(RoundTrace {
                round,
                v,
                orientation,
                concept,
                updated: false,
                potential,
                potential_drop: potential.map(|_| 0.0),
            });
            let answers = (0..family.len())
                .map(|c| dist.expectation(|x| family.eval(c, x)))
                .collect();
            return Ok(MwOutcome {
                answers,
                final_dist: dist,
                rounds: round,
                trace,
            });
        }

        let wants = orientation == Orientation::Plus;
        let next = mw_update(&dist, |x| family.eval(concept, x) == wants, cfg.eta);
        let next_potential = diagnostics
            .map(|d| relative_entropy(d, &next))
            .transpose()?;
        let drop = match (potential, next_potential) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        trace.push(RoundTrace {
            round,
            v,
            orientation,
            concept,
            updated: true,
            potential: next_potential,
            potential_drop: drop,
        });
        dist = next;
        potential = next_potential;
    }

    let tail: Vec<String> = trace
        .iter()
        .rev()
        .take(3)
        .map(|t| format!("round {}: v={:.4}", t.round, t.v))
        .collect();
    Err(Error::Contract(format!(
        "round cap {} reached without termination; the learner or oracle \
         broke its contract (last rounds: {})",
        cfg.rounds_cap,
        tail.join(", ")
    )))
}

/// Statistical queries over a labeled distribution on `points x {0,1}`:
/// answers `Pr[q_c(x) = 1 and label = b]` within the declared tolerance.
pub trait LabeledSqOracle {
    fn query_conjunct(&self, concept: usize, label: bool) -> Result<f64>;
    fn tolerance(&self) -> f64;
    fn calls(&self) -> u64;
}

/// Table-backed labeled oracle. With a nonzero tolerance it perturbs each
/// answer by a deterministic per-(concept, label) offset, staying within
/// the declared tolerance.
pub struct TableLabeledOracle<F: ConceptFamily> {
    family: Arc<F>,
    /// Mass of `(x, 1)` per point; `neg` analogously for label 0. Sums to 1
    /// jointly.
    pos: Vec<f64>,
    neg: Vec<f64>,
    tolerance: f64,
    seed: u64,
    calls: AtomicU64,
}

impl<F: ConceptFamily> TableLabeledOracle<F> {
    pub fn new(family: Arc<F>, pos: Vec<f64>, neg: Vec<f64>, tolerance: f64, seed: u64) -> Result<Self> {
        if pos.len() != neg.len() {
            return Err(Error::InvalidArgument(
                "labeled tables of different sizes".into(),
            ));
        }
        let total: f64 = pos.iter().chain(neg.iter()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "labeled mass sums to {}, expected 1",
                total
            )));
        }
        Ok(TableLabeledOracle {
            family,
            pos,
            neg,
            tolerance,
            seed,
            calls: AtomicU64::new(0),
        })
    }

    /// True agreement `Pr[q_c(x) = b]` of a concept, for test comparisons.
    pub fn true_agreement(&self, concept: usize) -> f64 {
        let mut total = 0.0;
        for x in 0..self.pos.len() {
            if self.family.eval(concept, x) {
                total += self.pos[x];
            } else {
                total += self.neg[x];
            }
        }
        total
    }
}

impl<F: ConceptFamily> LabeledSqOracle for TableLabeledOracle<F> {
    fn query_conjunct(&self, concept: usize, label: bool) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let table = if label { &self.pos } else { &self.neg };
        let exact: f64 = (0..table.len())
            .filter(|&x| self.family.eval(concept, x))
            .map(|x| table[x])
            .sum();
        if self.tolerance == 0.0 {
            return Ok(exact);
        }
        let key = splitmix64(self.seed ^ (concept as u64) << 1 ^ label as u64);
        let mut rng = ChaCha12Rng::seed_from_u64(key);
        Ok(exact + rng.gen_range(-self.tolerance..=self.tolerance))
    }

    fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// A release routine answering every concept in an indexed family through a
/// per-concept statistical query interface.
pub trait Releaser {
    fn release(
        &self,
        n_concepts: usize,
        stat: &mut dyn FnMut(usize) -> Result<f64>,
    ) -> Result<Vec<f64>>;
}

/// Answers each concept with one direct statistical query; the trivial
/// releaser with `k = |C|` calls.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustiveReleaser;

impl Releaser for ExhaustiveReleaser {
    fn release(
        &self,
        n_concepts: usize,
        stat: &mut dyn FnMut(usize) -> Result<f64>,
    ) -> Result<Vec<f64>> {
        (0..n_concepts).map(stat).collect()
    }
}

/// Outcome of the release-to-learning reduction.
#[derive(Debug, Clone, Serialize)]
pub struct AgnosticPick {
    pub concept: usize,
    /// Estimated `Pr[q=1, b=1] - Pr[q=1, b=0]`, the agreement up to a
    /// concept-independent constant.
    pub score: f64,
    pub sq_calls: u64,
}

/// Turn a releaser into an agnostic learner: release the family once
/// conditioned on each label and return the concept maximizing the
/// difference of the answers. Uses at most twice the releaser's query count.
pub fn release_to_agnostic(
    releaser: &dyn Releaser,
    n_concepts: usize,
    oracle: &dyn LabeledSqOracle,
) -> Result<AgnosticPick> {
    if n_concepts == 0 {
        return Err(Error::InvalidArgument("empty concept family".into()));
    }
    let before = oracle.calls();
    let pos = releaser.release(n_concepts, &mut |c| oracle.query_conjunct(c, true))?;
    let neg = releaser.release(n_concepts, &mut |c| oracle.query_conjunct(c, false))?;
    if pos.len() != n_concepts || neg.len() != n_concepts {
        return Err(Error::Contract(format!(
            "releaser returned {}/{} answers for {} concepts",
            pos.len(),
            neg.len(),
            n_concepts
        )));
    }
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for c in 0..n_concepts {
        let score = pos[c] - neg[c];
        if score > best_score {
            best_score = score;
            best = c;
        }
    }
    Ok(AgnosticPick {
        concept: best,
        score: best_score,
        sq_calls: oracle.calls() - before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mw_update_fixed_point_arithmetic() {
        let d = WeightedDistribution::from_weights(vec![0.5, 0.5]).unwrap();
        let updated = mw_update(&d, |x| x == 0, 2.0f64.ln());
        assert!((updated.weight(0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((updated.weight(1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_penalties_leave_distribution_unchanged() {
        let d = WeightedDistribution::from_weights(vec![0.1, 0.2, 0.7]).unwrap();
        for constant in [false, true] {
            let updated = mw_update(&d, |_| constant, 0.3);
            for x in 0..3 {
                assert!((updated.weight(x) - d.weight(x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn updates_preserve_normalization_and_support() {
        let mut d = WeightedDistribution::uniform(17);
        for step in 0..200 {
            d = mw_update(&d, |x| (x + step) % 3 == 0, 0.05);
            assert!((d.total() - 1.0).abs() < 1e-12);
            assert!((0..17).all(|x| d.weight(x) > 0.0));
        }
    }

    #[test]
    fn relative_entropy_basics() {
        let u = WeightedDistribution::uniform(8);
        assert_eq!(relative_entropy(&u, &u).unwrap(), 0.0);
        let mut point = vec![0.0; 8];
        point[3] = 1.0;
        let p = WeightedDistribution::from_weights(point).unwrap();
        assert!((relative_entropy(&p, &u).unwrap() - (8.0f64).ln()).abs() < 1e-12);
        // Support violation.
        let mut hole = vec![1.0; 8];
        hole[3] = 0.0;
        let q = WeightedDistribution::from_weights(hole).unwrap();
        assert!(relative_entropy(&p, &q).is_err());
        assert!(relative_entropy(&u, &q).is_err());
    }

    #[test]
    fn agreement_identity_against_exact_expectations() {
        let family = Arc::new(MonotoneConjunctions::new(6).unwrap());
        let n = family.n_points();
        let data =
            WeightedDistribution::empirical(n, (0..40).map(|i| (i * 37 + 11) % n)).unwrap();
        let sq = ExactSqOracle::new(Arc::clone(&family), data.clone());
        let mut synth = WeightedDistribution::uniform(n);
        for round in 0..5 {
            synth = mw_update(&synth, |x| x % (round + 2) == 0, 0.1);
            let plus = LabeledMixture {
                synthetic: &synth,
                data_label: true,
            };
            let minus = LabeledMixture {
                synthetic: &synth,
                data_label: false,
            };
            for c in (0..family.len()).step_by(5) {
                let a_plus = agreement(family.as_ref(), c, &plus, &sq).unwrap();
                let e_data = data.expectation(|x| family.eval(c, x));
                let e_syn = synth.expectation(|x| family.eval(c, x));
                let identity = 0.5 + 0.5 * (e_data - e_syn);
                assert!((a_plus - identity).abs() < 1e-12);
                // Label flip.
                let a_minus = agreement(family.as_ref(), c, &minus, &sq).unwrap();
                assert!((a_minus - (1.0 - a_plus)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_means_give_half_agreement() {
        let family = Arc::new(MonotoneConjunctions::new(3).unwrap());
        let u = WeightedDistribution::uniform(8);
        let sq = ExactSqOracle::new(Arc::clone(&family), u.clone());
        let mixture = LabeledMixture {
            synthetic: &u,
            data_label: true,
        };
        // Concept 0 is identically 1 on both sides.
        let a = agreement(family.as_ref(), 0, &mixture, &sq).unwrap();
        assert!((a - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_data_terminates_immediately() {
        let family = Arc::new(MonotoneConjunctions::new(5).unwrap());
        let n = family.n_points();
        let data = WeightedDistribution::uniform(n);
        let sq = ExactSqOracle::new(Arc::clone(&family), data.clone());
        let cfg = MwConfig::for_exhaustive_release(0.2, n).unwrap();
        let out = mw_release(
            family.as_ref(),
            &ExhaustiveWeakLearner,
            &sq,
            &cfg,
            n,
            Some(&data),
        )
        .unwrap();
        assert_eq!(out.rounds, 1);
        assert!(!out.trace[0].updated);
        for c in 0..family.len() {
            let expected = data.expectation(|x| family.eval(c, x));
            assert!((out.answers[c] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn concentrated_data_release_meets_final_error() {
        let family = Arc::new(MonotoneConjunctions::new(6).unwrap());
        let n = family.n_points();
        let data =
            WeightedDistribution::empirical(n, (0..20).map(|i| (i * 29 + 3) % n)).unwrap();
        let sq = ExactSqOracle::new(Arc::clone(&family), data.clone());
        let alpha = 0.25;
        let cfg = MwConfig::for_exhaustive_release(alpha, n).unwrap();
        let out = mw_release(
            family.as_ref(),
            &ExhaustiveWeakLearner,
            &sq,
            &cfg,
            n,
            Some(&data),
        )
        .unwrap();
        assert!(out.rounds <= cfg.rounds_cap);
        let mut sup: f64 = 0.0;
        for c in 0..family.len() {
            let truth = data.expectation(|x| family.eval(c, x));
            sup = sup.max((out.answers[c] - truth).abs());
        }
        assert!(sup <= alpha, "sup error {}", sup);
        // Potential drops on every update round.
        for t in &out.trace {
            if t.updated {
                let drop = t.potential_drop.unwrap();
                assert!(
                    drop >= cfg.beta * cfg.beta / 4.0 - 1e-12,
                    "round {} drop {}",
                    t.round,
                    drop
                );
            }
        }
    }

    #[test]
    fn learner_returning_bad_index_is_a_contract_error() {
        struct OutOfRange;
        impl<F: ConceptFamily> WeakLearner<F> for OutOfRange {
            fn learn(
                &self,
                family: &F,
                _mixture: &LabeledMixture<'_>,
                _sq: &dyn DataSqOracle,
            ) -> Result<usize> {
                Ok(family.len())
            }
        }
        let family = Arc::new(MonotoneConjunctions::new(3).unwrap());
        let data = WeightedDistribution::empirical(8, [1usize, 3, 3, 7]).unwrap();
        let sq = ExactSqOracle::new(Arc::clone(&family), data);
        let cfg = MwConfig::new(0.2, 0.0, 8).unwrap();
        let err = mw_release(family.as_ref(), &OutOfRange, &sq, &cfg, 8, None).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn lying_oracle_hits_round_cap() {
        struct Liar;
        impl DataSqOracle for Liar {
            fn concept_expectation(&self, concept: usize) -> Result<f64> {
                // Claims the all-true concept never holds on the data.
                Ok(if concept == 0 { 0.0 } else { 0.5 })
            }
            fn tolerance(&self) -> f64 {
                0.0
            }
            fn calls(&self) -> u64 {
                0
            }
        }
        struct Stubborn;
        impl<F: ConceptFamily> WeakLearner<F> for Stubborn {
            fn learn(
                &self,
                _family: &F,
                _mixture: &LabeledMixture<'_>,
                _sq: &dyn DataSqOracle,
            ) -> Result<usize> {
                Ok(0)
            }
        }
        let family = MonotoneConjunctions::new(3).unwrap();
        let cfg = MwConfig::new(0.2, 0.0, 8).unwrap();
        let err = mw_release(&family, &Stubborn, &Liar, &cfg, 8, None).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn config_enforces_tau_bound_and_cap_formula() {
        assert!(MwConfig::new(0.2, 0.2 / 8.0, 256).is_ok());
        assert!(MwConfig::new(0.2, 0.2 / 8.0 + 0.01, 256).is_err());
        let cfg = MwConfig::new(0.1, 0.01, 256).unwrap();
        let expected = (8.0 * 256.0f64.ln() / 0.01).ceil() as usize + 1;
        assert_eq!(cfg.rounds_cap, expected);
        assert_eq!(cfg.eta, 0.05);
    }

    #[test]
    fn exhaustive_learner_finds_planted_distinguisher() {
        let family = Arc::new(MonotoneConjunctions::new(4).unwrap());
        let n = family.n_points();
        // Data concentrated on points satisfying concept 0b1010.
        let planted = 0b1010usize;
        let points: Vec<usize> = (0..n).filter(|&x| x & planted == planted).collect();
        let data = WeightedDistribution::empirical(n, points).unwrap();
        let sq = ExactSqOracle::new(Arc::clone(&family), data.clone());
        let synth = WeightedDistribution::uniform(n);
        let mixture = LabeledMixture {
            synthetic: &synth,
            data_label: true,
        };
        let got = ExhaustiveWeakLearner
            .learn(family.as_ref(), &mixture, &sq)
            .unwrap();
        let got_agreement = agreement(family.as_ref(), got, &mixture, &sq).unwrap();
        let planted_agreement = agreement(family.as_ref(), planted, &mixture, &sq).unwrap();
        assert!(got_agreement >= planted_agreement - 1e-12);
    }

    #[test]
    fn singleton_family_learner_and_reduction() {
        struct Singleton;
        impl ConceptFamily for Singleton {
            fn len(&self) -> usize {
                1
            }
            fn eval(&self, _c: usize, point: usize) -> bool {
                point.is_multiple_of(2)
            }
        }
        let family = Arc::new(Singleton);
        let oracle =
            TableLabeledOracle::new(Arc::clone(&family), vec![0.25; 2], vec![0.25; 2], 0.0, 0)
                .unwrap();
        let pick = release_to_agnostic(&ExhaustiveReleaser, 1, &oracle).unwrap();
        assert_eq!(pick.concept, 0);
        assert_eq!(pick.sq_calls, 2);
    }

    #[test]
    fn reduction_recovers_planted_concept_within_tolerance() {
        let family = Arc::new(MonotoneConjunctions::new(5).unwrap());
        let n = family.n_points();
        let planted = 0b10100usize;
        // Mass 1/n per point, labeled by the planted concept.
        let mut pos = vec![0.0; n];
        let mut neg = vec![0.0; n];
        for x in 0..n {
            if family.eval(planted, x) {
                pos[x] = 1.0 / n as f64;
            } else {
                neg[x] = 1.0 / n as f64;
            }
        }
        let tau = 0.01;
        let oracle = TableLabeledOracle::new(Arc::clone(&family), pos, neg, tau, 9).unwrap();
        let pick = release_to_agnostic(&ExhaustiveReleaser, family.len(), &oracle).unwrap();
        assert_eq!(pick.sq_calls, 2 * family.len() as u64);
        let best = (0..family.len())
            .map(|c| oracle.true_agreement(c))
            .fold(f64::NEG_INFINITY, f64::max);
        // Each answer is off by at most tau, so the argmax loses at most 2tau
        // per side.
        assert!(oracle.true_agreement(pick.concept) >= best - 4.0 * tau);
    }
}
