//! Learning a release structure from a decomposition.
//!
//! For each bucket of a decomposition, the expectation of the bucket's piece
//! under the base product distribution restricted to the bucket's routing
//! cell is estimated by Monte Carlo. The finished [`ReleaseStructure`]
//! answers a query by routing it and returning the stored mean; no oracle
//! access is needed at query time.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{
    decompose_general, decompose_tolerant, DoubleDecomposition, DoubleDoc, MonotoneDecomposition,
    MonotoneDoc, RoutingCell, FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::mask::SubsetMask;
use crate::oracle::ValueOracle;
use crate::queries::WidthSampler;

const LEARN_SEED_TAG: u64 = 0x6c65_6172_6e00_0001;

/// A product distribution over subsets: element `x` is included
/// independently with probability `probs[x]`. May carry a box restriction
/// that forces some elements in or out.
#[derive(Debug, Clone)]
pub struct ProductDistribution {
    probs: Vec<f64>,
    restriction: Option<Restriction>,
}

#[derive(Debug, Clone)]
struct Restriction {
    forced_in: SubsetMask,
    forced_out: SubsetMask,
    free: Vec<usize>,
}

impl ProductDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty probability vector".into()));
        }
        for &p in &probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "inclusion probability {} outside [0,1]",
                    p
                )));
            }
        }
        Ok(ProductDistribution {
            probs,
            restriction: None,
        })
    }

    pub fn uniform(d: usize) -> Self {
        Self::new(vec![0.5; d]).unwrap()
    }

    /// Every element included with rate `p`; the learning distribution used
    /// for width-`w` queries is `rate(d, w/d)`.
    pub fn rate(d: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; d])
    }

    pub fn universe_size(&self) -> usize {
        self.probs.len()
    }

    pub fn inclusion_prob(&self, x: usize) -> f64 {
        self.probs[x]
    }

    pub fn is_restricted(&self) -> bool {
        self.restriction.is_some()
    }

    /// Restrict to a box: forced elements are pinned, the rest keep their
    /// product marginals. The forced sets must be disjoint.
    pub fn restrict(&self, forced_in: &SubsetMask, forced_out: &SubsetMask) -> Result<Self> {
        if self.restriction.is_some() {
            return Err(Error::InvalidArgument(
                "distribution is already restricted".into(),
            ));
        }
        if !forced_in.is_disjoint_from(forced_out) {
            return Err(Error::InvalidArgument(
                "forced-in and forced-out sets overlap".into(),
            ));
        }
        let d = self.probs.len();
        if forced_in.universe_size() != d {
            return Err(Error::InvalidArgument(
                "restriction masks from a different universe".into(),
            ));
        }
        let pinned = forced_in.union(forced_out);
        let free = pinned.complement().iter().collect();
        Ok(ProductDistribution {
            probs: self.probs.clone(),
            restriction: Some(Restriction {
                forced_in: forced_in.clone(),
                forced_out: forced_out.clone(),
                free,
            }),
        })
    }

    pub fn restrict_to_cell(&self, cell: &RoutingCell) -> Result<Self> {
        self.restrict(&cell.forced_in, &cell.forced_out)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> SubsetMask {
        let d = self.probs.len();
        match &self.restriction {
            None => {
                let mut s = SubsetMask::empty(d);
                for x in 0..d {
                    if rng.gen::<f64>() < self.probs[x] {
                        s.insert(x);
                    }
                }
                s
            }
            Some(r) => {
                let mut s = r.forced_in.clone();
                for &x in &r.free {
                    if rng.gen::<f64>() < self.probs[x] {
                        s.insert(x);
                    }
                }
                s
            }
        }
    }

    /// Probability mass of an individual subset.
    pub fn mass_of(&self, s: &SubsetMask) -> f64 {
        let mut mass = 1.0;
        match &self.restriction {
            None => {
                for x in 0..self.probs.len() {
                    mass *= if s.contains(x) {
                        self.probs[x]
                    } else {
                        1.0 - self.probs[x]
                    };
                }
            }
            Some(r) => {
                if !r.forced_in.is_subset_of(s) || !s.is_disjoint_from(&r.forced_out) {
                    return 0.0;
                }
                for &x in &r.free {
                    mass *= if s.contains(x) {
                        self.probs[x]
                    } else {
                        1.0 - self.probs[x]
                    };
                }
            }
        }
        mass
    }

    fn free_indices(&self) -> Vec<usize> {
        match &self.restriction {
            None => (0..self.probs.len()).collect(),
            Some(r) => r.free.clone(),
        }
    }

    fn base_mask(&self) -> SubsetMask {
        match &self.restriction {
            None => SubsetMask::empty(self.probs.len()),
            Some(r) => r.forced_in.clone(),
        }
    }
}

/// Monte Carlo estimate of `E[g(S)]` for `S` from `dist`, within `accuracy`
/// with the given confidence. Sample count follows the two-sided Hoeffding
/// bound for a `[0,1]`-valued function.
pub fn estimate_mean(
    g: &ValueOracle,
    dist: &ProductDistribution,
    accuracy: f64,
    confidence: f64,
    seed: u64,
) -> Result<f64> {
    if accuracy.is_nan() || accuracy <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "accuracy must be positive, got {}",
            accuracy
        )));
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::InvalidArgument(format!(
            "confidence must be in [0,1), got {}",
            confidence
        )));
    }
    let m = hoeffding_samples(accuracy, confidence);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..m {
        sum += g.eval(&dist.sample(&mut rng))?;
    }
    Ok((sum / m as f64).clamp(0.0, 1.0))
}

/// `ceil(ln(2 / (1 - confidence)) / (2 accuracy^2))`.
pub fn hoeffding_samples(accuracy: f64, confidence: f64) -> u64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * accuracy * accuracy)).ceil() as u64
}

/// Exact expectation of `g` under `dist` by enumerating the free elements.
/// Independent of the sampling path; intended for tests and diagnostics.
pub fn exact_mean(g: &ValueOracle, dist: &ProductDistribution) -> Result<f64> {
    let free = dist.free_indices();
    if free.len() > 25 {
        return Err(Error::Capacity(format!(
            "exact mean over 2^{} assignments refused",
            free.len()
        )));
    }
    let base = dist.base_mask();
    let mut total = 0.0;
    for bits in 0u64..(1u64 << free.len()) {
        let mut s = base.clone();
        let mut mass = 1.0;
        for (pos, &x) in free.iter().enumerate() {
            if bits >> pos & 1 == 1 {
                s.insert(x);
                mass *= dist.inclusion_prob(x);
            } else {
                mass *= 1.0 - dist.inclusion_prob(x);
            }
        }
        total += mass * g.eval(&s)?;
    }
    Ok(total)
}

/// Which transform the structure applies to stored means at query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryFamily {
    Generic,
    Disjunction,
    /// Served through the negated-data disjunction structure; answers are
    /// reported as `1 - mean`.
    Conjunction,
    Cut,
}

impl QueryFamily {
    fn transform(self, mu: f64) -> f64 {
        match self {
            QueryFamily::Conjunction => 1.0 - mu,
            _ => mu,
        }
    }
}

/// Key of one stored mean.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum BucketKey {
    Single(SubsetMask),
    Pair(SubsetMask, SubsetMask),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReleaseParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub samples_per_bucket: u64,
    pub seed: u64,
    pub family: QueryFamily,
    pub universe_size: usize,
}

/// Decomposition plus per-bucket means: the queryable artifact.
#[derive(Clone)]
pub struct ReleaseStructure {
    decomposition: AnyDecomposition,
    means: BTreeMap<BucketKey, f64>,
    params: ReleaseParams,
}

#[derive(Clone)]
pub enum AnyDecomposition {
    Monotone(MonotoneDecomposition),
    Double(DoubleDecomposition),
}

/// Lipschitz parameter the learner decomposes at: `alpha^2 / (6 ln(2/beta))`.
pub fn gamma_for(alpha: f64, beta: f64) -> f64 {
    alpha * alpha / (6.0 * (2.0 / beta).ln())
}

fn validate_learn_args(alpha: f64, beta: f64, dist: &ProductDistribution, d: usize) -> Result<()> {
    if alpha.is_nan() || alpha <= 0.0 || alpha > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0,1], got {}",
            alpha
        )));
    }
    if beta.is_nan() || beta <= 0.0 || beta > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "beta must be in (0,1], got {}",
            beta
        )));
    }
    if dist.is_restricted() {
        return Err(Error::InvalidArgument(
            "the base distribution must be unrestricted".into(),
        ));
    }
    if dist.universe_size() != d {
        return Err(Error::InvalidArgument(
            "distribution universe does not match the oracle".into(),
        ));
    }
    Ok(())
}

/// Build a release structure for a monotone submodular oracle.
///
/// The oracle tolerance must be at most `alpha^2 / (72 ln(2/beta))`. With
/// probability at least `1 - beta` over the sampling, all but a `beta`
/// fraction of queries drawn from `dist` are answered within `alpha`.
pub fn learn(
    oracle: &ValueOracle,
    alpha: f64,
    beta: f64,
    dist: &ProductDistribution,
    seed: u64,
) -> Result<ReleaseStructure> {
    let d = oracle.universe_size();
    validate_learn_args(alpha, beta, dist, d)?;
    let gamma = gamma_for(alpha, beta);
    let dec = decompose_tolerant(oracle, gamma)?;
    let n_buckets = dec.len() as f64;
    let confidence = 1.0 - (beta / n_buckets).min(1.0);
    let mut means = BTreeMap::new();
    for idx in dec.sorted_indices() {
        let node = dec.node(idx);
        let cell = dec.cell(idx);
        let restricted = dist.restrict_to_cell(&cell)?;
        let piece = dec.piece(idx)?;
        let bucket_seed = node.bucket().fingerprint(seed ^ LEARN_SEED_TAG);
        let mu = estimate_mean(&piece, &restricted, alpha / 6.0, confidence, bucket_seed)?;
        means.insert(BucketKey::Single(node.bucket().clone()), mu);
    }
    let samples_per_bucket = hoeffding_samples(alpha / 6.0, confidence);
    Ok(ReleaseStructure {
        decomposition: AnyDecomposition::Monotone(dec),
        means,
        params: ReleaseParams {
            alpha,
            beta,
            gamma,
            samples_per_bucket,
            seed,
            family: QueryFamily::Generic,
            universe_size: d,
        },
    })
}

/// [`learn`] for arbitrary (possibly non-monotone) submodular oracles, over
/// the double decomposition.
pub fn learn_general(
    oracle: &ValueOracle,
    alpha: f64,
    beta: f64,
    dist: &ProductDistribution,
    seed: u64,
) -> Result<ReleaseStructure> {
    let d = oracle.universe_size();
    validate_learn_args(alpha, beta, dist, d)?;
    let gamma = gamma_for(alpha, beta);
    let dec = decompose_general(oracle, gamma)?;
    let n_pieces = dec.len() as f64;
    let confidence = 1.0 - (beta / n_pieces).min(1.0);
    let mut means = BTreeMap::new();
    for key in dec.sorted_pairs() {
        let cell = dec.cell(key);
        // Pairs no query routes to can have contradictory boxes; pin the
        // overlap out so the sampler stays well-defined.
        let forced_in = cell.forced_in.difference(&cell.forced_out);
        let restricted = dist.restrict(&forced_in, &cell.forced_out)?;
        let piece = dec.piece(key)?;
        let (b, c) = dec.bucket_masks(key);
        let pair_seed = c.fingerprint(b.fingerprint(seed ^ LEARN_SEED_TAG));
        let mu = estimate_mean(&piece, &restricted, alpha / 6.0, confidence, pair_seed)?;
        means.insert(BucketKey::Pair(b.clone(), c.clone()), mu);
    }
    let samples_per_bucket = hoeffding_samples(alpha / 6.0, confidence);
    Ok(ReleaseStructure {
        decomposition: AnyDecomposition::Double(dec),
        means,
        params: ReleaseParams {
            alpha,
            beta,
            gamma,
            samples_per_bucket,
            seed,
            family: QueryFamily::Generic,
            universe_size: d,
        },
    })
}

impl ReleaseStructure {
    pub fn params(&self) -> &ReleaseParams {
        &self.params
    }

    pub fn decomposition(&self) -> &AnyDecomposition {
        &self.decomposition
    }

    pub fn with_family(mut self, family: QueryFamily) -> Self {
        self.params.family = family;
        self
    }

    pub fn bucket_count(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> impl Iterator<Item = (&BucketKey, f64)> {
        self.means.iter().map(|(k, &v)| (k, v))
    }

    fn route_key(&self, s: &SubsetMask) -> Result<BucketKey> {
        match &self.decomposition {
            AnyDecomposition::Monotone(dec) => {
                let idx = dec.route(s)?;
                Ok(BucketKey::Single(dec.node(idx).bucket().clone()))
            }
            AnyDecomposition::Double(dec) => {
                let key = dec.route(s)?;
                let (b, c) = dec.bucket_masks(key);
                Ok(BucketKey::Pair(b.clone(), c.clone()))
            }
        }
    }

    /// Answer a query: route and return the stored mean. Pure table lookup.
    pub fn evaluate(&self, s: &SubsetMask) -> Result<f64> {
        let key = self.route_key(s)?;
        let mu = self
            .means
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Contract("routed bucket has no stored mean".into()))?;
        Ok(self.params.family.transform(mu))
    }

    pub fn to_doc(&self) -> ReleaseDoc {
        let decomposition = match &self.decomposition {
            AnyDecomposition::Monotone(dec) => DecompositionDoc::Monotone(dec.to_doc()),
            AnyDecomposition::Double(dec) => DecompositionDoc::Double(dec.to_doc()),
        };
        let means = self
            .means
            .iter()
            .map(|(k, &mu)| match k {
                BucketKey::Single(b) => MeanDoc {
                    b: b.to_hex(),
                    c: None,
                    mu,
                },
                BucketKey::Pair(b, c) => MeanDoc {
                    b: b.to_hex(),
                    c: Some(c.to_hex()),
                    mu,
                },
            })
            .collect();
        ReleaseDoc {
            format_version: FORMAT_VERSION,
            params: self.params.clone(),
            decomposition,
            means,
        }
    }

    pub fn from_doc(doc: &ReleaseDoc) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported release format version {}",
                doc.format_version
            )));
        }
        let d = doc.params.universe_size;
        let decomposition = match &doc.decomposition {
            DecompositionDoc::Monotone(m) => {
                AnyDecomposition::Monotone(MonotoneDecomposition::from_doc(m)?)
            }
            DecompositionDoc::Double(m) => AnyDecomposition::Double(DoubleDecomposition::from_doc(m)?),
        };
        let mut means = BTreeMap::new();
        for entry in &doc.means {
            let b = SubsetMask::from_hex(d, &entry.b)?;
            let key = match &entry.c {
                None => BucketKey::Single(b),
                Some(c) => BucketKey::Pair(b, SubsetMask::from_hex(d, c)?),
            };
            if means.insert(key, entry.mu).is_some() {
                return Err(Error::Parse(format!("duplicate mean entry {}", entry.b)));
            }
        }
        let structure = ReleaseStructure {
            decomposition,
            means,
            params: doc.params.clone(),
        };
        structure.check_means_complete()?;
        Ok(structure)
    }

    fn check_means_complete(&self) -> Result<()> {
        let expected: usize = match &self.decomposition {
            AnyDecomposition::Monotone(dec) => dec.len(),
            AnyDecomposition::Double(dec) => dec.len(),
        };
        if self.means.len() != expected {
            return Err(Error::Parse(format!(
                "release has {} means for {} buckets",
                self.means.len(),
                expected
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanDoc {
    pub b: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<String>,
    pub mu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecompositionDoc {
    Monotone(MonotoneDoc),
    Double(DoubleDoc),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReleaseDoc {
    pub format_version: u32,
    pub params: ReleaseParams,
    pub decomposition: DecompositionDoc,
    pub means: Vec<MeanDoc>,
}

/// Distribution queries are drawn from when auditing a structure.
pub enum CensusDistribution<'a> {
    Product(&'a ProductDistribution),
    /// Uniform over masks of one fixed weight.
    WidthUniform(WidthSampler),
}

#[derive(Debug, Clone, Copy)]
pub enum CensusMode {
    Exhaustive,
    Sampled { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramBin {
    pub upper: f64,
    pub mass: f64,
}

/// Empirical distribution of `|f(S) - h(S)|` under an evaluation
/// distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CensusReport {
    pub alpha: f64,
    pub points: u64,
    pub total_mass: f64,
    pub prob_exceeding_alpha: f64,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    pub histogram: Vec<HistogramBin>,
}

const HISTOGRAM_BINS: usize = 64;

/// Compare a structure's answers with ground truth over a distribution.
pub fn error_census(
    h: &ReleaseStructure,
    truth: &ValueOracle,
    dist: CensusDistribution<'_>,
    mode: CensusMode,
) -> Result<CensusReport> {
    let d = h.params().universe_size;
    if truth.universe_size() != d {
        return Err(Error::InvalidArgument(
            "truth oracle universe does not match the structure".into(),
        ));
    }
    let alpha = h.params().alpha;
    let mut hist = vec![0.0f64; HISTOGRAM_BINS];
    let mut total_mass = 0.0;
    let mut exceeding = 0.0;
    let mut mean_abs = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut points = 0u64;

    let mut tally = |mass: f64, err: f64| {
        let bin = ((err * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        hist[bin] += mass;
        total_mass += mass;
        if err > alpha {
            exceeding += mass;
        }
        mean_abs += mass * err;
        max_abs = max_abs.max(err);
    };

    match mode {
        CensusMode::Exhaustive => {
            if d > 20 {
                return Err(Error::Capacity(format!(
                    "exhaustive census on universe size {} refused",
                    d
                )));
            }
            match dist {
                CensusDistribution::Product(p) => {
                    if p.universe_size() != d {
                        return Err(Error::InvalidArgument(
                            "census distribution universe mismatch".into(),
                        ));
                    }
                    for mask in SubsetMask::enumerate_all(d)? {
                        let mass = p.mass_of(&mask);
                        if mass == 0.0 {
                            continue;
                        }
                        let err = (truth.eval(&mask)? - h.evaluate(&mask)?).abs();
                        tally(mass, err);
                        points += 1;
                    }
                }
                CensusDistribution::WidthUniform(ws) => {
                    let masks = ws.enumerate(d)?;
                    let mass = 1.0 / masks.len() as f64;
                    for mask in masks {
                        let err = (truth.eval(&mask)? - h.evaluate(&mask)?).abs();
                        tally(mass, err);
                        points += 1;
                    }
                }
            }
        }
        CensusMode::Sampled { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidArgument(
                    "sampled census needs at least one sample".into(),
                ));
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mass = 1.0 / samples as f64;
            for _ in 0..samples {
                let mask = match &dist {
                    CensusDistribution::Product(p) => p.sample(&mut rng),
                    CensusDistribution::WidthUniform(ws) => ws.sample(d, &mut rng)?,
                };
                let err = (truth.eval(&mask)? - h.evaluate(&mask)?).abs();
                tally(mass, err);
                points += 1;
            }
        }
    }

    Ok(CensusReport {
        alpha,
        points,
        total_mass,
        prob_exceeding_alpha: exceeding,
        mean_abs_error: if total_mass > 0.0 {
            mean_abs / total_mass
        } else {
            0.0
        },
        max_abs_error: max_abs,
        histogram: hist
            .into_iter()
            .enumerate()
            .map(|(i, mass)| HistogramBin {
                upper: (i + 1) as f64 / HISTOGRAM_BINS as f64,
                mass,
            })
            .collect(),
    })
}

/// One tail comparison from [`concentration_tails`].
#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub t: f64,
    pub threshold: f64,
    pub empirical: f64,
    pub bound: f64,
    /// Three-sigma binomial slack at the bound's rate.
    pub slack: f64,
}

impl TailCheck {
    pub fn passes(&self) -> bool {
        self.empirical <= (self.bound + self.slack).min(1.0) + 1e-12
    }
}

/// Empirical deviation tails of a `gamma`-Lipschitz piece against the
/// sub-Gamma style bound `2 exp(-t^2 / (2 (1/gamma + 5t/6)))` for deviations
/// of size `gamma * t` around `mu`.
pub fn concentration_tails(
    piece: &ValueOracle,
    dist: &ProductDistribution,
    gamma: f64,
    mu: f64,
    ts: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<TailCheck>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut deviations = Vec::with_capacity(samples as usize);
    for _ in 0..samples {
        let v = piece.eval(&dist.sample(&mut rng))?;
        deviations.push((v - mu).abs());
    }
    Ok(ts
        .iter()
        .map(|&t| {
            let threshold = gamma * t;
            let hits = deviations.iter().filter(|&&dev| dev >= threshold).count();
            let empirical = hits as f64 / samples as f64;
            let bound = (2.0 * (-t * t / (2.0 * (1.0 / gamma + 5.0 * t / 6.0))).exp()).min(1.0);
            let slack = 3.0 * (bound * (1.0 - bound) / samples as f64).sqrt();
            TailCheck {
                t,
                threshold,
                empirical,
                bound,
                slack,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoeffding_sample_count_fixed_point() {
        // accuracy 0.05, confidence 0.99 -> ceil(ln(200) / 0.005)
        assert_eq!(hoeffding_samples(0.05, 0.99), 1060);
    }

    #[test]
    fn estimate_mean_of_constant() {
        let g = ValueOracle::exact(4, |_| 0.5);
        let dist = ProductDistribution::uniform(4);
        let mu = estimate_mean(&g, &dist, 0.05, 0.95, 3).unwrap();
        assert!((mu - 0.5).abs() < 1e-12);
    }

    #[test]
    fn estimate_mean_of_modular_under_uniform() {
        let d = 10;
        let g = ValueOracle::exact(d, move |s| s.len() as f64 / d as f64);
        let dist = ProductDistribution::uniform(d);
        let mu = estimate_mean(&g, &dist, 0.02, 0.999, 11).unwrap();
        assert!((mu - 0.5).abs() < 0.02);
        // The enumeration route agrees with the closed form exactly.
        let exact = exact_mean(&g, &dist).unwrap();
        assert!((exact - 0.5).abs() < 1e-12);
    }

    #[test]
    fn restriction_pins_elements() {
        let d = 6;
        let dist = ProductDistribution::uniform(d);
        let forced_in = SubsetMask::from_indices(d, [0]);
        let forced_out = SubsetMask::from_indices(d, [1, 2]);
        let r = dist.restrict(&forced_in, &forced_out).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = r.sample(&mut rng);
            assert!(s.contains(0));
            assert!(!s.contains(1) && !s.contains(2));
        }
        assert!(dist.restrict(&forced_in, &forced_in).is_err());
    }

    #[test]
    fn learn_modular_answers_every_mask_exactly() {
        // Small gamma forces every subset into its own bucket, so each cell
        // is a single point and the estimate is exact.
        let d = 8;
        let oracle = ValueOracle::exact(d, move |s| s.len() as f64 / d as f64);
        let dist = ProductDistribution::uniform(d);
        let h = learn(&oracle, 0.5, 0.5, &dist, 42).unwrap();
        // gamma = 0.25 / (6 ln 4)
        assert!((h.params().gamma - 0.0300561467).abs() < 1e-9);
        for bits in (0..256u64).step_by(7) {
            let s = SubsetMask::from_u64(d, bits);
            let err = (h.evaluate(&s).unwrap() - oracle.eval(&s).unwrap()).abs();
            assert!(err < 1e-12, "err {}", err);
        }
    }

    #[test]
    fn learn_query_count_stays_within_build_plus_sampling() {
        let d = 6;
        let sets: [u64; 6] = [0b000011, 0b001100, 0b110000, 0b010101, 0b101010, 0b000001];
        let oracle = ValueOracle::exact(d, move |s| {
            let covered = s.iter().fold(0u64, |acc, i| acc | sets[i]);
            covered.count_ones() as f64 / 6.0
        });
        let dist = ProductDistribution::uniform(d);
        let h = learn(&oracle, 0.4, 0.3, &dist, 9).unwrap();
        let buckets = h.bucket_count() as u64;
        let build_bound = 3 * d as u64 * buckets;
        let sampling = buckets * h.params().samples_per_bucket;
        assert!(oracle.stats().calls <= build_bound + sampling);
    }

    #[test]
    fn learn_general_zero_function_has_zero_means() {
        let oracle = ValueOracle::exact(5, |_| 0.0);
        let dist = ProductDistribution::uniform(5);
        let h = learn_general(&oracle, 0.4, 0.3, &dist, 2).unwrap();
        for (_, mu) in h.means() {
            assert_eq!(mu, 0.0);
        }
    }

    #[test]
    fn learn_constant_function() {
        let oracle = ValueOracle::exact(6, |_| 0.37);
        let dist = ProductDistribution::uniform(6);
        let h = learn(&oracle, 0.3, 0.2, &dist, 1).unwrap();
        let s = SubsetMask::from_indices(6, [2, 4]);
        assert!((h.evaluate(&s).unwrap() - 0.37).abs() < 1e-9);
    }

    #[test]
    fn learn_rejects_bad_arguments() {
        let oracle = ValueOracle::exact(4, |_| 0.0);
        let dist = ProductDistribution::uniform(4);
        assert!(learn(&oracle, 0.0, 0.5, &dist, 0).is_err());
        assert!(learn(&oracle, 0.5, 0.0, &dist, 0).is_err());
        // Tolerance above gamma/12 violates the oracle contract.
        let noisy = ValueOracle::tolerant(4, 0.2, 0, |_| 0.0);
        assert!(learn(&noisy, 0.5, 0.5, &dist, 0).is_err());
    }

    #[test]
    fn evaluate_is_constant_on_routing_cells() {
        let d = 6;
        let sets: [u64; 6] = [0b000011, 0b001100, 0b110000, 0b010101, 0b101010, 0b000001];
        let oracle = ValueOracle::exact(d, move |s| {
            let covered = s.iter().fold(0u64, |acc, i| acc | sets[i]);
            covered.count_ones() as f64 / 6.0
        });
        let dist = ProductDistribution::uniform(d);
        let h = learn(&oracle, 0.4, 0.3, &dist, 9).unwrap();
        let dec = match h.decomposition() {
            AnyDecomposition::Monotone(dec) => dec.clone(),
            _ => unreachable!(),
        };
        for bits in 0..(1u64 << d) {
            for other in 0..(1u64 << d) {
                let (s, s2) = (SubsetMask::from_u64(d, bits), SubsetMask::from_u64(d, other));
                if dec.route(&s).unwrap() == dec.route(&s2).unwrap() {
                    assert_eq!(h.evaluate(&s).unwrap(), h.evaluate(&s2).unwrap());
                }
            }
        }
    }

    #[test]
    fn learn_general_on_cut_census_passes() {
        // Cut of the 4-cycle.
        let n = 4;
        let oracle = ValueOracle::exact(n, move |s| {
            let mut crossing = 0;
            for u in 0..n {
                let v = (u + 1) % n;
                if s.contains(u) != s.contains(v) {
                    crossing += 1;
                }
            }
            crossing as f64 / (n * n) as f64
        });
        let dist = ProductDistribution::uniform(n);
        let h = learn_general(&oracle, 0.3, 0.2, &dist, 17).unwrap();
        let report = error_census(
            &h,
            &oracle,
            CensusDistribution::Product(&dist),
            CensusMode::Exhaustive,
        )
        .unwrap();
        assert!((report.total_mass - 1.0).abs() < 1e-9);
        assert!(report.prob_exceeding_alpha <= 0.2);
    }

    #[test]
    fn monotone_and_general_structures_agree_on_monotone_input() {
        let d = 6;
        let sets: [u64; 6] = [0b000111, 0b011000, 0b100001, 0b000010, 0b111000, 0b001001];
        let oracle = ValueOracle::exact(d, move |s| {
            let covered = s.iter().fold(0u64, |acc, i| acc | sets[i]);
            covered.count_ones() as f64 / 6.0
        });
        let dist = ProductDistribution::uniform(d);
        let (alpha, beta) = (0.4, 0.3);
        let h1 = learn(&oracle, alpha, beta, &dist, 3).unwrap();
        let h2 = learn_general(&oracle, alpha, beta, &dist, 4).unwrap();
        // Each is within alpha of the truth on at least 1-beta mass, so they
        // agree to 2*alpha outside at most 2*beta mass.
        let mut bad_mass = 0.0;
        for bits in 0..(1u64 << d) {
            let s = SubsetMask::from_u64(d, bits);
            if (h1.evaluate(&s).unwrap() - h2.evaluate(&s).unwrap()).abs() > 2.0 * alpha {
                bad_mass += dist.mass_of(&s);
            }
        }
        assert!(bad_mass <= 2.0 * beta);
    }

    #[test]
    fn census_mass_sums_to_one() {
        let oracle = ValueOracle::exact(5, |_| 0.0);
        let dist = ProductDistribution::uniform(5);
        let h = learn(&oracle, 0.5, 0.5, &dist, 0).unwrap();
        let report = error_census(
            &h,
            &oracle,
            CensusDistribution::Product(&dist),
            CensusMode::Exhaustive,
        )
        .unwrap();
        assert!((report.total_mass - 1.0).abs() < 1e-9);
        assert_eq!(report.max_abs_error, 0.0);
        let hist_mass: f64 = report.histogram.iter().map(|b| b.mass).sum();
        assert!((hist_mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn release_doc_round_trip() {
        let d = 5;
        let oracle = ValueOracle::exact(d, move |s| s.len() as f64 / d as f64);
        let dist = ProductDistribution::uniform(d);
        let h = learn(&oracle, 0.4, 0.4, &dist, 77).unwrap();
        let json = serde_json::to_string(&h.to_doc()).unwrap();
        let loaded = ReleaseStructure::from_doc(&serde_json::from_str(&json).unwrap()).unwrap();
        for bits in 0..(1u64 << d) {
            let s = SubsetMask::from_u64(d, bits);
            assert_eq!(h.evaluate(&s).unwrap(), loaded.evaluate(&s).unwrap());
        }
    }

    #[test]
    fn same_seed_same_structure_bytes() {
        let d = 6;
        let oracle = || ValueOracle::exact(d, move |s| s.len() as f64 / d as f64);
        let dist = ProductDistribution::uniform(d);
        let a = learn(&oracle(), 0.4, 0.4, &dist, 5).unwrap();
        let b = learn(&oracle(), 0.4, 0.4, &dist, 5).unwrap();
        assert_eq!(
            serde_json::to_vec(&a.to_doc()).unwrap(),
            serde_json::to_vec(&b.to_doc()).unwrap()
        );
    }
}
