//! Concrete query families and their release pipelines.
//!
//! A dataset of `d`-bit records induces the monotone disjunction family: the
//! query for mask `S` counts the records with at least one selected
//! attribute set. Conjunction queries are served by releasing disjunctions
//! over the negated dataset and complementing the answers. A graph induces
//! the (non-monotone) normalized cut function over vertex subsets.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::approximator::{
    gamma_for, learn, learn_general, ProductDistribution, QueryFamily, ReleaseStructure,
};
use crate::error::{Error, Result};
use crate::mask::SubsetMask;
use crate::oracle::{check_monotone, check_submodular, ValueOracle};
use crate::privacy::{
    max_distinct_queries, min_database_size, private_sq_oracle, BudgetReport, PrivacyBudget,
};

const RELEASE_NOISE_TAG: u64 = 0x7265_6c65_6173_6531;

/// Binary dataset: `n` records over `d` attributes.
#[derive(Debug, Clone)]
pub struct BitDataset {
    d: usize,
    rows: Vec<SubsetMask>,
    sha256: String,
}

impl BitDataset {
    pub fn new(d: usize, rows: Vec<SubsetMask>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dataset needs d >= 1".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("dataset needs at least one record".into()));
        }
        for r in &rows {
            if r.universe_size() != d {
                return Err(Error::InvalidArgument(
                    "dataset row width does not match attribute count".into(),
                ));
            }
        }
        let mut ds = BitDataset {
            d,
            rows,
            sha256: String::new(),
        };
        ds.sha256 = ds.compute_hash();
        Ok(ds)
    }

    /// Parse the header-less CSV format: one record per line, `d` characters
    /// from `{0,1}` per record.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut d = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let width = line.chars().count();
            match d {
                None => d = Some(width),
                Some(w) if w != width => {
                    return Err(Error::Parse(format!(
                        "line {}: record has {} attributes, expected {}",
                        lineno + 1,
                        width,
                        w
                    )))
                }
                _ => {}
            }
            let mut mask = SubsetMask::empty(width);
            for (i, c) in line.chars().enumerate() {
                match c {
                    '1' => mask.insert(i),
                    '0' => {}
                    other => {
                        return Err(Error::Parse(format!(
                            "line {}: unexpected character '{}'",
                            lineno + 1,
                            other
                        )))
                    }
                }
            }
            rows.push(mask);
        }
        let d = d.ok_or_else(|| Error::Parse("dataset file is empty".into()))?;
        Self::new(d, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * (self.d + 1));
        for row in &self.rows {
            for i in 0..self.d {
                out.push(if row.contains(i) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    fn compute_hash(&self) -> String {
        let digest = Sha256::digest(self.to_csv_string().as_bytes());
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }

    /// SHA-256 of the canonical CSV encoding; stable provenance id.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    pub fn random(n: usize, d: usize, p: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let mut m = SubsetMask::empty(d);
                for i in 0..d {
                    if rng.gen::<f64>() < p {
                        m.insert(i);
                    }
                }
                m
            })
            .collect();
        Self::new(d, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        false // validated at construction
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> &[SubsetMask] {
        &self.rows
    }

    /// Flip every bit of every record.
    pub fn negated(&self) -> Self {
        let rows = self.rows.iter().map(|r| r.complement()).collect();
        Self::new(self.d, rows).expect("negation preserves validity")
    }
}

/// Fraction of records with at least one attribute from `s` set.
pub fn disjunction_value(data: &BitDataset, s: &SubsetMask) -> Result<f64> {
    if s.universe_size() != data.d {
        return Err(Error::InvalidArgument(format!(
            "query mask width {} does not match dataset attribute count {}",
            s.universe_size(),
            data.d
        )));
    }
    let hits = data.rows.iter().filter(|r| !r.is_disjoint_from(s)).count();
    Ok(hits as f64 / data.rows.len() as f64)
}

/// Fraction of records with every attribute from `s` set, computed through
/// the negation identity: a conjunction is the complement of a disjunction
/// over negated records. The empty conjunction is identically one.
pub fn conjunction_value(data: &BitDataset, s: &SubsetMask) -> Result<f64> {
    Ok(1.0 - disjunction_value(&data.negated(), s)?)
}

/// Exact oracle for the disjunction family of a dataset.
pub fn disjunction_oracle(data: &BitDataset) -> ValueOracle {
    let rows: Arc<[SubsetMask]> = data.rows.clone().into();
    let n = rows.len() as f64;
    ValueOracle::exact(data.d, move |s| {
        rows.iter().filter(|r| !r.is_disjoint_from(s)).count() as f64 / n
    })
}

/// Regression guard: the disjunction family of any dataset is monotone
/// submodular. Exhaustive, so restricted to small attribute counts.
pub fn verify_fdisj_submodular(data: &BitDataset) -> Result<bool> {
    if data.d > 12 {
        return Err(Error::Capacity(format!(
            "exhaustive disjunction verification at d={} refused",
            data.d
        )));
    }
    let oracle = disjunction_oracle(data);
    Ok(check_monotone(&oracle)? && check_submodular(&oracle)?)
}

/// Undirected graph without self-loops or duplicate edges.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({},{}) out of range for {} vertices",
                    u, v, n
                )));
            }
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {}", u)));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate edge".into()));
        }
        Ok(Graph {
            n,
            edges: normalized,
        })
    }

    /// Parse the edge-list format: first line is the vertex count, each
    /// following line one `u v` pair.
    pub fn from_edge_list_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("graph file is empty".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad vertex count: {}", e)))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let u: usize = parts
                .next()
                .ok_or_else(|| Error::Parse("missing edge endpoint".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad endpoint: {}", e)))?;
            let v: usize = parts
                .next()
                .ok_or_else(|| Error::Parse("missing edge endpoint".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad endpoint: {}", e)))?;
            if parts.next().is_some() {
                return Err(Error::Parse(format!("trailing tokens on edge line '{}'", line)));
            }
            edges.push((u, v));
        }
        Self::new(n, edges)
    }

    pub fn to_edge_list_string(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (u, v) in &self.edges {
            out.push_str(&format!("{} {}\n", u, v));
        }
        out
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.to_edge_list_string().as_bytes());
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn random(n: usize, p: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, u: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == u || b == u).count()
    }

    /// Vertices whose degree exceeds `threshold * n^2`; only these can ever
    /// have a cut marginal above `threshold`, so every decomposition bucket
    /// is a subset of this set.
    pub fn high_influence_vertices(&self, threshold: f64) -> SubsetMask {
        let scale = (self.n * self.n) as f64;
        let mut mask = SubsetMask::empty(self.n);
        for u in 0..self.n {
            if self.degree(u) as f64 / scale > threshold {
                mask.insert(u);
            }
        }
        mask
    }
}

/// Cut value `|{(u,v) in E : u in S, v not in S}| / |V|^2`, each undirected
/// edge counted once.
pub fn cut_value(graph: &Graph, s: &SubsetMask) -> Result<f64> {
    if s.universe_size() != graph.n {
        return Err(Error::InvalidArgument(format!(
            "cut mask width {} does not match vertex count {}",
            s.universe_size(),
            graph.n
        )));
    }
    let crossing = graph
        .edges
        .iter()
        .filter(|&&(u, v)| s.contains(u) != s.contains(v))
        .count();
    Ok(crossing as f64 / (graph.n * graph.n) as f64)
}

pub fn cut_oracle(graph: &Graph) -> ValueOracle {
    let edges: Arc<[(usize, usize)]> = graph.edges.clone().into();
    let scale = (graph.n * graph.n) as f64;
    ValueOracle::exact(graph.n, move |s| {
        edges
            .iter()
            .filter(|&&(u, v)| s.contains(u) != s.contains(v))
            .count() as f64
            / scale
    })
}

/// Coverage of a set system over a ground set of at most 64 elements,
/// normalized by the ground size. The canonical monotone submodular test
/// function.
#[derive(Debug, Clone)]
pub struct CoverageFunction {
    sets: Vec<u64>,
    ground_size: usize,
}

impl CoverageFunction {
    pub fn new(sets: Vec<u64>, ground_size: usize) -> Result<Self> {
        if !(1..=64).contains(&ground_size) {
            return Err(Error::InvalidArgument(
                "coverage ground size must be in 1..=64".into(),
            ));
        }
        if sets.is_empty() {
            return Err(Error::InvalidArgument("coverage needs at least one set".into()));
        }
        let ground_mask = if ground_size == 64 {
            u64::MAX
        } else {
            (1u64 << ground_size) - 1
        };
        if sets.iter().any(|&s| s & !ground_mask != 0) {
            return Err(Error::InvalidArgument(
                "coverage set exceeds the ground universe".into(),
            ));
        }
        Ok(CoverageFunction { sets, ground_size })
    }

    pub fn random(d: usize, ground_size: usize, p: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let sets = (0..d)
            .map(|_| {
                let mut bits = 0u64;
                for i in 0..ground_size {
                    if rng.gen::<f64>() < p {
                        bits |= 1 << i;
                    }
                }
                bits
            })
            .collect();
        Self::new(sets, ground_size)
    }

    pub fn dim(&self) -> usize {
        self.sets.len()
    }

    pub fn value(&self, s: &SubsetMask) -> f64 {
        let covered = s.iter().fold(0u64, |acc, i| acc | self.sets[i]);
        covered.count_ones() as f64 / self.ground_size as f64
    }

    pub fn oracle(&self) -> ValueOracle {
        let f = self.clone();
        ValueOracle::exact(self.sets.len(), move |s| f.value(s))
    }
}

/// Uniform sampler over masks of one fixed weight.
#[derive(Debug, Clone, Copy)]
pub struct WidthSampler {
    w: usize,
    d: usize,
}

impl WidthSampler {
    pub fn new(w: usize, d: usize) -> Result<Self> {
        if w == 0 || w > d {
            return Err(Error::InvalidArgument(format!(
                "width {} out of range 1..={}",
                w, d
            )));
        }
        Ok(WidthSampler { w, d })
    }

    pub fn width(&self) -> usize {
        self.w
    }

    fn check_universe(&self, d: usize) -> Result<()> {
        if d != self.d {
            return Err(Error::InvalidArgument(format!(
                "width sampler built for universe {}, used with {}",
                self.d, d
            )));
        }
        Ok(())
    }

    /// Uniform weight-`w` mask via a partial shuffle.
    pub fn sample<R: Rng>(&self, d: usize, rng: &mut R) -> Result<SubsetMask> {
        self.check_universe(d)?;
        let mut indices: Vec<usize> = (0..self.d).collect();
        for i in 0..self.w {
            let j = rng.gen_range(i..self.d);
            indices.swap(i, j);
        }
        Ok(SubsetMask::from_indices(self.d, indices[..self.w].iter().copied()))
    }

    /// All weight-`w` masks in lexicographic index order.
    pub fn enumerate(&self, d: usize) -> Result<Vec<SubsetMask>> {
        self.check_universe(d)?;
        let count = binomial(self.d, self.w);
        if count > 1 << 24 {
            return Err(Error::Capacity(format!(
                "enumerating {} weight-{} masks refused",
                count, self.w
            )));
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut combo: Vec<usize> = (0..self.w).collect();
        loop {
            out.push(SubsetMask::from_indices(self.d, combo.iter().copied()));
            // Advance to the next combination.
            let mut i = self.w;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                if combo[i] != i + self.d - self.w {
                    break;
                }
            }
            combo[i] += 1;
            for j in (i + 1)..self.w {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

/// Noise regime of a release run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrivacyMode {
    /// Diagnostics mode: exact answers, budget accounting only.
    NoiseOff,
    /// Laplace noise calibrated for epsilon-differential privacy.
    Laplace { epsilon: f64 },
}

/// A finished release: the queryable structure plus its budget trail.
pub struct ReleaseOutput {
    pub structure: ReleaseStructure,
    pub budget: BudgetReport,
}

fn budget_for(
    privacy: PrivacyMode,
    declared: u64,
    inverse_sensitivity: u64,
    tau: f64,
    beta: f64,
    what: &str,
) -> Result<PrivacyBudget> {
    match privacy {
        PrivacyMode::NoiseOff => Ok(PrivacyBudget::noise_off(declared, inverse_sensitivity)),
        PrivacyMode::Laplace { epsilon } => {
            let needed = min_database_size(declared, tau, beta, epsilon)?;
            if inverse_sensitivity < needed {
                return Err(Error::InvalidArgument(format!(
                    "{} too small for a private release: need size at least {}, have {}",
                    what, needed, inverse_sensitivity
                )));
            }
            PrivacyBudget::new(epsilon, declared, inverse_sensitivity)
        }
    }
}

/// Privately release the monotone disjunction family of a dataset.
pub fn release_disjunctions(
    data: &BitDataset,
    alpha: f64,
    beta: f64,
    privacy: PrivacyMode,
    dist: &ProductDistribution,
    seed: u64,
) -> Result<ReleaseOutput> {
    release_disjunctions_inner(data, alpha, beta, privacy, dist, seed, QueryFamily::Disjunction)
}

/// Privately release the monotone conjunction family: disjunctions over the
/// negated records, with answers complemented at evaluation time.
pub fn release_conjunctions(
    data: &BitDataset,
    alpha: f64,
    beta: f64,
    privacy: PrivacyMode,
    dist: &ProductDistribution,
    seed: u64,
) -> Result<ReleaseOutput> {
    let negated = data.negated();
    release_disjunctions_inner(
        &negated,
        alpha,
        beta,
        privacy,
        dist,
        seed,
        QueryFamily::Conjunction,
    )
}

fn release_disjunctions_inner(
    data: &BitDataset,
    alpha: f64,
    beta: f64,
    privacy: PrivacyMode,
    dist: &ProductDistribution,
    seed: u64,
    family: QueryFamily,
) -> Result<ReleaseOutput> {
    let d = data.dim();
    let gamma = gamma_for(alpha, beta);
    let tau = gamma / 12.0;
    let declared = max_distinct_queries(d);
    let budget = Arc::new(budget_for(
        privacy,
        declared,
        data.len() as u64,
        tau,
        beta,
        "database",
    )?);
    let declared_tau = if budget.is_noise_off() { 0.0 } else { tau };
    let rows: Arc<[SubsetMask]> = data.rows().to_vec().into();
    let n = rows.len() as f64;
    let oracle = private_sq_oracle(d, declared_tau, Arc::clone(&budget), seed ^ RELEASE_NOISE_TAG, move |s| {
        rows.iter().filter(|r| !r.is_disjoint_from(s)).count() as f64 / n
    });
    let structure = learn(&oracle, alpha, beta, dist, seed)?.with_family(family);
    Ok(ReleaseOutput {
        structure,
        budget: budget.report(),
    })
}

/// Privately release the cut function of a graph. Each individual is one
/// edge; the cut value moves by at most `1/|V|^2` between adjacent edge
/// sets, so `|V|^2` plays the role of the database size in the noise scale.
pub fn release_cuts(
    graph: &Graph,
    alpha: f64,
    beta: f64,
    privacy: PrivacyMode,
    dist: &ProductDistribution,
    seed: u64,
) -> Result<ReleaseOutput> {
    let d = graph.n_vertices();
    let gamma = gamma_for(alpha, beta);
    let tau = gamma / 12.0;
    let declared = max_distinct_queries(d);
    let inverse_sensitivity = (d as u64).saturating_mul(d as u64);
    let budget = Arc::new(budget_for(
        privacy,
        declared,
        inverse_sensitivity,
        tau,
        beta,
        "graph (|V|^2)",
    )?);
    let declared_tau = if budget.is_noise_off() { 0.0 } else { tau };
    let edges: Arc<[(usize, usize)]> = graph.edges().to_vec().into();
    let scale = (d * d) as f64;
    let oracle = private_sq_oracle(d, declared_tau, Arc::clone(&budget), seed ^ RELEASE_NOISE_TAG, move |s| {
        edges
            .iter()
            .filter(|&&(u, v)| s.contains(u) != s.contains(v))
            .count() as f64
            / scale
    });
    let structure = learn_general(&oracle, alpha, beta, dist, seed)?.with_family(QueryFamily::Cut);

    // Every bucket can only contain vertices whose degree supports a
    // marginal above the expansion threshold, even through oracle noise.
    let effective_threshold = gamma / 3.0 - 2.0 * declared_tau;
    let high = graph.high_influence_vertices(effective_threshold);
    if let crate::approximator::AnyDecomposition::Double(dec) = structure.decomposition() {
        for key in dec.pairs() {
            let (b, c) = dec.bucket_masks(key);
            if !b.is_subset_of(&high) || !c.is_subset_of(&high) {
                return Err(Error::Contract(
                    "cut decomposition bucket contains a low-degree vertex".into(),
                ));
            }
        }
    }
    Ok(ReleaseOutput {
        structure,
        budget: budget.report(),
    })
}
