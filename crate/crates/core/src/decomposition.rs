//! Decomposition of a bounded submodular function into Lipschitz pieces.
//!
//! A decomposition grows a family of *buckets* from the empty set: whenever
//! an element still has a large marginal on a bucket, a child bucket
//! including that element is added. Each bucket `B` carries an admissible set
//! `V(B)` of low-marginal elements, and the restricted shift
//! `g_B(S) = f(S ∪ B)` on `2^{V(B)}` has small one-sided marginals. A
//! deterministic routing map sends every subset to the unique bucket whose
//! box `{S : B ⊆ S ⊆ V(B), S ∩ T(B) = ∅}` contains it, where `T(B)` is the
//! set of elements rejected on the root-to-`B` path.
//!
//! Two threshold profiles are supported: `Exact` for noiseless oracles and
//! `Tolerant` for oracles with answers within `gamma/12` of the truth. The
//! double decomposition composes a tolerant pass over `f` with a pass over
//! each complemented restriction, yielding pieces with small marginals in
//! absolute value even for non-monotone `f`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::SubsetMask;
use crate::oracle::ValueOracle;

/// Threshold profile of a decomposition build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMode {
    /// Expansion and admissibility both thresholded at `gamma`; requires an
    /// exact oracle.
    Exact,
    /// Expansion at `gamma/3`, admissibility at `2*gamma/3`; sound for
    /// oracles with tolerance up to `gamma/12`.
    Tolerant,
}

impl DecompositionMode {
    fn expand_threshold(self, gamma: f64) -> f64 {
        match self {
            DecompositionMode::Exact => gamma,
            DecompositionMode::Tolerant => gamma / 3.0,
        }
    }

    fn admissible_threshold(self, gamma: f64) -> f64 {
        match self {
            DecompositionMode::Exact => gamma,
            DecompositionMode::Tolerant => 2.0 * gamma / 3.0,
        }
    }

    /// Bucket-size bound guaranteed for genuinely submodular input; exceeding
    /// it during a build means the oracle broke its contract.
    pub fn depth_cap(self, gamma: f64) -> usize {
        let ratio = match self {
            DecompositionMode::Exact => 1.0 / gamma,
            DecompositionMode::Tolerant => 6.0 / gamma,
        };
        ratio.ceil().min(1e9) as usize
    }
}

/// Hard limits on a build, guarding against non-submodular oracles.
#[derive(Debug, Clone, Copy, Default)]
pub struct DecompositionLimits {
    /// Overrides the default bucket-count cap `|domain|^depth_cap`.
    pub max_buckets: Option<usize>,
}

/// One bucket of a decomposition.
#[derive(Debug, Clone)]
pub struct DecompositionNode {
    bucket: SubsetMask,
    admissible: SubsetMask,
    selectable: SubsetMask,
    rejected: SubsetMask,
    depth: usize,
}

impl DecompositionNode {
    /// The bucket identifier `B`.
    pub fn bucket(&self) -> &SubsetMask {
        &self.bucket
    }

    /// `V(B)`: elements whose marginal at `B` is at most the admissibility
    /// threshold.
    pub fn admissible(&self) -> &SubsetMask {
        &self.admissible
    }

    /// Elements whose marginal at `B` is at most the expansion threshold;
    /// the routing procedure steps on elements outside this set. Coincides
    /// with [`Self::admissible`] in exact mode.
    pub fn selectable(&self) -> &SubsetMask {
        &self.selectable
    }

    /// `T(B)`: elements rejected on the path from the root to `B`.
    pub fn rejected(&self) -> &SubsetMask {
        &self.rejected
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
}

/// Counters recorded while building a decomposition.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BuildStats {
    pub oracle_calls: u64,
    pub distinct_queries: u64,
    pub buckets: usize,
}

/// The box of subsets routed to one bucket: `forced_in ⊆ S` and
/// `S ∩ forced_out = ∅`, with the remaining elements free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingCell {
    pub forced_in: SubsetMask,
    pub forced_out: SubsetMask,
}

impl RoutingCell {
    pub fn free(&self) -> SubsetMask {
        self.forced_in
            .union(&self.forced_out)
            .complement()
    }

    /// False when the forced sets overlap; such a cell contains no subset.
    pub fn is_consistent(&self) -> bool {
        self.forced_in.is_disjoint_from(&self.forced_out)
    }

    pub fn contains(&self, s: &SubsetMask) -> bool {
        self.forced_in.is_subset_of(s) && s.is_disjoint_from(&self.forced_out)
    }
}

/// Decomposition of a single oracle over a domain, with routing maps.
#[derive(Clone)]
pub struct MonotoneDecomposition {
    d: usize,
    gamma: f64,
    mode: DecompositionMode,
    domain: SubsetMask,
    nodes: Vec<DecompositionNode>,
    index: HashMap<SubsetMask, usize>,
    root: usize,
    stats: BuildStats,
    oracle: Option<ValueOracle>,
}

fn default_bucket_cap(domain_size: usize, depth_cap: usize) -> usize {
    let base = domain_size.max(1) as u128;
    let capped = base.saturating_pow(depth_cap.min(u32::MAX as usize) as u32);
    capped.min(usize::MAX as u128).max(1) as usize
}

fn scan_node(
    oracle: &ValueOracle,
    domain: &SubsetMask,
    bucket: &SubsetMask,
    expand_thr: f64,
    admissible_thr: f64,
) -> Result<(SubsetMask, SubsetMask)> {
    let d = domain.universe_size();
    let mut admissible = SubsetMask::empty(d);
    let mut selectable = SubsetMask::empty(d);
    for x in domain.iter() {
        let m = oracle.marginal(bucket, x)?;
        if m <= admissible_thr {
            admissible.insert(x);
        }
        if m <= expand_thr {
            selectable.insert(x);
        }
    }
    Ok((admissible, selectable))
}

fn build(
    oracle: &ValueOracle,
    domain: &SubsetMask,
    gamma: f64,
    mode: DecompositionMode,
    limits: DecompositionLimits,
) -> Result<MonotoneDecomposition> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {}",
            gamma
        )));
    }
    let d = oracle.universe_size();
    if domain.universe_size() != d {
        return Err(Error::InvalidArgument(
            "decomposition domain from a different universe".into(),
        ));
    }
    let expand_thr = mode.expand_threshold(gamma);
    let admissible_thr = mode.admissible_threshold(gamma);
    let depth_cap = mode.depth_cap(gamma);
    let bucket_cap = limits
        .max_buckets
        .unwrap_or_else(|| default_bucket_cap(domain.len(), depth_cap));

    let calls_before = oracle.stats().calls;

    let root_mask = SubsetMask::empty(d);
    let (adm, sel) = scan_node(oracle, domain, &root_mask, expand_thr, admissible_thr)?;
    let mut nodes = vec![DecompositionNode {
        bucket: root_mask.clone(),
        admissible: adm,
        selectable: sel,
        rejected: SubsetMask::empty(d),
        depth: 0,
    }];
    let mut index = HashMap::new();
    index.insert(root_mask, 0usize);

    for x in domain.iter() {
        let snapshot = nodes.len();
        for i in 0..snapshot {
            if nodes[i].selectable.contains(x) {
                continue;
            }
            let child_depth = nodes[i].depth + 1;
            if child_depth > depth_cap {
                return Err(Error::Capacity(format!(
                    "bucket depth exceeded {} during build; the oracle is not \
                     submodular within the declared tolerance",
                    depth_cap
                )));
            }
            if nodes.len() >= bucket_cap {
                return Err(Error::Capacity(format!(
                    "bucket count exceeded cap {}; the oracle is not \
                     submodular within the declared tolerance",
                    bucket_cap
                )));
            }
            let child_mask = nodes[i].bucket.with(x);
            let (adm, sel) = scan_node(oracle, domain, &child_mask, expand_thr, admissible_thr)?;
            let previous = index.insert(child_mask.clone(), nodes.len());
            debug_assert!(previous.is_none(), "duplicate bucket chain");
            nodes.push(DecompositionNode {
                bucket: child_mask,
                admissible: adm,
                selectable: sel,
                rejected: SubsetMask::empty(d),
                depth: child_depth,
            });
        }
    }

    // Rejected sets: replay each bucket's root-to-leaf path and collect the
    // elements that were steppable but absent from the bucket.
    let rejected: Vec<SubsetMask> = nodes
        .iter()
        .map(|node| {
            let mut cur = 0usize;
            let mut r = SubsetMask::empty(d);
            for x in domain.iter() {
                if nodes[cur].selectable.contains(x) {
                    continue;
                }
                if node.bucket.contains(x) {
                    cur = index[&nodes[cur].bucket.with(x)];
                } else {
                    r.insert(x);
                }
            }
            debug_assert_eq!(nodes[cur].bucket, node.bucket, "bucket not on its own path");
            r
        })
        .collect();
    for (node, r) in nodes.iter_mut().zip(rejected) {
        node.rejected = r;
    }

    let after = oracle.stats();
    let stats = BuildStats {
        oracle_calls: after.calls - calls_before,
        distinct_queries: after.distinct,
        buckets: nodes.len(),
    };

    Ok(MonotoneDecomposition {
        d,
        gamma,
        mode,
        domain: domain.clone(),
        nodes,
        index,
        root: 0,
        stats,
        oracle: Some(oracle.clone()),
    })
}

/// Decompose an exactly-known submodular function.
pub fn decompose_monotone(oracle: &ValueOracle, gamma: f64) -> Result<MonotoneDecomposition> {
    decompose_monotone_limited(oracle, gamma, DecompositionLimits::default())
}

pub fn decompose_monotone_limited(
    oracle: &ValueOracle,
    gamma: f64,
    limits: DecompositionLimits,
) -> Result<MonotoneDecomposition> {
    if oracle.tolerance() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "exact decomposition requires an exact oracle, tolerance is {}",
            oracle.tolerance()
        )));
    }
    let full = SubsetMask::full(oracle.universe_size());
    build(oracle, &full, gamma, DecompositionMode::Exact, limits)
}

/// Decompose from a tolerant oracle; sound when the oracle tolerance is at
/// most `gamma / 12`.
pub fn decompose_tolerant(oracle: &ValueOracle, gamma: f64) -> Result<MonotoneDecomposition> {
    decompose_tolerant_limited(oracle, gamma, DecompositionLimits::default())
}

pub fn decompose_tolerant_limited(
    oracle: &ValueOracle,
    gamma: f64,
    limits: DecompositionLimits,
) -> Result<MonotoneDecomposition> {
    check_tolerance(oracle, gamma)?;
    let full = SubsetMask::full(oracle.universe_size());
    build(oracle, &full, gamma, DecompositionMode::Tolerant, limits)
}

fn check_tolerance(oracle: &ValueOracle, gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {}",
            gamma
        )));
    }
    if oracle.tolerance() > gamma / 12.0 + 1e-15 {
        return Err(Error::InvalidArgument(format!(
            "oracle tolerance {} exceeds the admissible {} (gamma/12)",
            oracle.tolerance(),
            gamma / 12.0
        )));
    }
    Ok(())
}

impl MonotoneDecomposition {
    pub fn universe_size(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mode(&self) -> DecompositionMode {
        self.mode
    }

    pub fn domain(&self) -> &SubsetMask {
        &self.domain
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the root bucket always exists
    }

    pub fn nodes(&self) -> impl Iterator<Item = &DecompositionNode> {
        self.nodes.iter()
    }

    pub fn node(&self, idx: usize) -> &DecompositionNode {
        &self.nodes[idx]
    }

    pub fn node_by_bucket(&self, bucket: &SubsetMask) -> Result<usize> {
        self.index
            .get(bucket)
            .copied()
            .ok_or_else(|| Error::UnknownKey(format!("bucket {}", bucket)))
    }

    /// Bucket indices sorted by bucket mask; the canonical iteration order.
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| self.nodes[a].bucket.cmp(&self.nodes[b].bucket));
        order
    }

    /// Deterministic routing: walk the element order, stepping whenever the
    /// current bucket finds the element high-marginal and present in `s`.
    /// Makes no oracle calls.
    pub fn route(&self, s: &SubsetMask) -> Result<usize> {
        if s.universe_size() != self.d {
            return Err(Error::InvalidArgument(
                "routed mask from a different universe".into(),
            ));
        }
        let mut cur = self.root;
        for x in self.domain.iter() {
            if !self.nodes[cur].selectable.contains(x) && s.contains(x) {
                let next = self.nodes[cur].bucket.with(x);
                cur = *self.index.get(&next).ok_or_else(|| {
                    Error::Contract(format!("routing reached unknown bucket {}", next))
                })?;
            }
        }
        Ok(cur)
    }

    /// `T(B)` for a bucket given by mask.
    pub fn rejected_set(&self, bucket: &SubsetMask) -> Result<&SubsetMask> {
        let idx = self.node_by_bucket(bucket)?;
        Ok(&self.nodes[idx].rejected)
    }

    /// The box of subsets routed to bucket `idx`.
    pub fn cell(&self, idx: usize) -> RoutingCell {
        let node = &self.nodes[idx];
        let outside_domain = self.domain.complement();
        RoutingCell {
            forced_in: node.bucket.clone(),
            forced_out: node
                .rejected
                .union(&node.admissible.complement().intersection(&self.domain))
                .union(&outside_domain),
        }
    }

    /// The piece `g_B(S) = f((S ∩ V(B)) ∪ B)` as a derived oracle.
    pub fn piece(&self, idx: usize) -> Result<ValueOracle> {
        let oracle = self.oracle.as_ref().ok_or_else(|| {
            Error::Contract("decomposition was loaded without an oracle".into())
        })?;
        let node = &self.nodes[idx];
        Ok(oracle.restricted_shift(&node.bucket, &node.admissible))
    }

    /// The complemented piece over `V(B)`, used by the double decomposition.
    pub fn complemented_piece(&self, idx: usize) -> Result<ValueOracle> {
        let node = &self.nodes[idx];
        self.piece(idx)?.complemented_within(&node.admissible)
    }

    pub fn to_doc(&self) -> MonotoneDoc {
        let mut buckets: Vec<BucketDoc> = self
            .nodes
            .iter()
            .map(|n| BucketDoc {
                b: n.bucket.to_hex(),
                v: n.admissible.to_hex(),
                dom: n.selectable.to_hex(),
                t: n.rejected.to_hex(),
                depth: n.depth,
            })
            .collect();
        buckets.sort_by(|a, b| a.b.len().cmp(&b.b.len()).then_with(|| a.b.cmp(&b.b)));
        MonotoneDoc {
            format_version: FORMAT_VERSION,
            mode: self.mode,
            gamma: self.gamma,
            universe_size: self.d,
            ordering: (0..self.d).collect(),
            domain: self.domain.to_hex(),
            stats: self.stats,
            buckets,
        }
    }

    /// Rebuild from a document. The result routes and reports cells but has
    /// no oracle attached, so pieces cannot be evaluated.
    pub fn from_doc(doc: &MonotoneDoc) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported decomposition format version {}",
                doc.format_version
            )));
        }
        let d = doc.universe_size;
        if d == 0 {
            return Err(Error::Parse("universe size must be positive".into()));
        }
        if doc.ordering != (0..d).collect::<Vec<_>>() {
            return Err(Error::Parse(
                "decomposition ordering must be ascending element indices".into(),
            ));
        }
        let domain = SubsetMask::from_hex(d, &doc.domain)?;
        let mut nodes = Vec::with_capacity(doc.buckets.len());
        let mut index = HashMap::new();
        for b in &doc.buckets {
            let bucket = SubsetMask::from_hex(d, &b.b)?;
            let admissible = SubsetMask::from_hex(d, &b.v)?;
            let selectable = SubsetMask::from_hex(d, &b.dom)?;
            let rejected = SubsetMask::from_hex(d, &b.t)?;
            if !bucket.is_subset_of(&admissible) {
                return Err(Error::Parse(format!("bucket {} not admissible", b.b)));
            }
            if !rejected.is_disjoint_from(&bucket) {
                return Err(Error::Parse(format!(
                    "bucket {} intersects its rejected set",
                    b.b
                )));
            }
            if index.insert(bucket.clone(), nodes.len()).is_some() {
                return Err(Error::Parse(format!("duplicate bucket {}", b.b)));
            }
            nodes.push(DecompositionNode {
                bucket,
                admissible,
                selectable,
                rejected,
                depth: b.depth,
            });
        }
        let root = *index
            .get(&SubsetMask::empty(d))
            .ok_or_else(|| Error::Parse("decomposition has no root bucket".into()))?;
        Ok(MonotoneDecomposition {
            d,
            gamma: doc.gamma,
            mode: doc.mode,
            domain,
            nodes,
            index,
            root,
            stats: doc.stats,
            oracle: None,
        })
    }
}

/// Two-level decomposition whose pieces have small marginals in absolute
/// value, for non-monotone submodular functions.
#[derive(Clone)]
pub struct DoubleDecomposition {
    d: usize,
    gamma: f64,
    outer: MonotoneDecomposition,
    inner: Vec<MonotoneDecomposition>,
    stats: BuildStats,
}

/// Key of one piece of a double decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairKey {
    pub outer: usize,
    pub inner: usize,
}

pub fn decompose_general(oracle: &ValueOracle, gamma: f64) -> Result<DoubleDecomposition> {
    decompose_general_limited(oracle, gamma, DecompositionLimits::default())
}

pub fn decompose_general_limited(
    oracle: &ValueOracle,
    gamma: f64,
    limits: DecompositionLimits,
) -> Result<DoubleDecomposition> {
    check_tolerance(oracle, gamma)?;
    let d = oracle.universe_size();
    let full = SubsetMask::full(d);
    let calls_before = oracle.stats().calls;
    let outer = build(oracle, &full, gamma, DecompositionMode::Tolerant, limits)?;
    let mut inner = Vec::with_capacity(outer.len());
    for idx in 0..outer.len() {
        let complemented = outer.complemented_piece(idx)?;
        let domain = outer.node(idx).admissible.clone();
        inner.push(build(
            &complemented,
            &domain,
            gamma,
            DecompositionMode::Tolerant,
            limits,
        )?);
    }
    let after = oracle.stats();
    let stats = BuildStats {
        oracle_calls: after.calls - calls_before,
        distinct_queries: after.distinct,
        buckets: inner.iter().map(|i| i.len()).sum(),
    };
    Ok(DoubleDecomposition {
        d,
        gamma,
        outer,
        inner,
        stats,
    })
}

impl DoubleDecomposition {
    pub fn universe_size(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn outer(&self) -> &MonotoneDecomposition {
        &self.outer
    }

    pub fn inner(&self, outer_idx: usize) -> &MonotoneDecomposition {
        &self.inner[outer_idx]
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    /// Total number of pieces.
    pub fn len(&self) -> usize {
        self.inner.iter().map(|i| i.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pairs(&self) -> impl Iterator<Item = PairKey> + '_ {
        (0..self.outer.len()).flat_map(move |outer| {
            (0..self.inner[outer].len()).map(move |inner| PairKey { outer, inner })
        })
    }

    /// Pair keys sorted by `(B, C)` bucket masks; canonical iteration order.
    pub fn sorted_pairs(&self) -> Vec<PairKey> {
        let mut keys: Vec<PairKey> = self.pairs().collect();
        keys.sort_by(|a, b| {
            self.outer
                .node(a.outer)
                .bucket
                .cmp(&self.outer.node(b.outer).bucket)
                .then_with(|| {
                    self.inner[a.outer]
                        .node(a.inner)
                        .bucket
                        .cmp(&self.inner[b.outer].node(b.inner).bucket)
                })
        });
        keys
    }

    pub fn bucket_masks(&self, key: PairKey) -> (&SubsetMask, &SubsetMask) {
        (
            &self.outer.node(key.outer).bucket,
            &self.inner[key.outer].node(key.inner).bucket,
        )
    }

    pub fn pair_by_masks(&self, b: &SubsetMask, c: &SubsetMask) -> Result<PairKey> {
        let outer = self.outer.node_by_bucket(b)?;
        let inner = self.inner[outer].node_by_bucket(c)?;
        Ok(PairKey { outer, inner })
    }

    /// Route a query: outer bucket on `S` directly, inner bucket on the
    /// complement of `S` inside the outer admissible set.
    pub fn route(&self, s: &SubsetMask) -> Result<PairKey> {
        let outer = self.outer.route(s)?;
        let reflected = self.outer.node(outer).admissible.difference(s);
        let inner = self.inner[outer].route(&reflected)?;
        Ok(PairKey { outer, inner })
    }

    /// `T(B,C)`: union of the outer and inner rejected sets.
    pub fn rejected_set(&self, key: PairKey) -> SubsetMask {
        self.outer
            .node(key.outer)
            .rejected
            .union(&self.inner[key.outer].node(key.inner).rejected)
    }

    /// `V(B,C)`: intersection of the outer and inner admissible sets.
    pub fn admissible_set(&self, key: PairKey) -> SubsetMask {
        self.outer
            .node(key.outer)
            .admissible
            .intersection(&self.inner[key.outer].node(key.inner).admissible)
    }

    /// The box of queries routed to this pair, in query coordinates. The
    /// inner decomposition acts on reflected arguments, so its bucket is
    /// forced out of the query and its rejected set forced in.
    pub fn cell(&self, key: PairKey) -> RoutingCell {
        let b = self.outer.node(key.outer);
        let c = self.inner[key.outer].node(key.inner);
        let forced_in = b
            .bucket
            .union(&b.admissible.difference(&c.admissible))
            .union(&c.rejected);
        let forced_out = b
            .rejected
            .union(&c.bucket)
            .union(&b.admissible.complement());
        RoutingCell {
            forced_in,
            forced_out,
        }
    }

    /// The piece answering queries routed to this pair: a doubly-reflected
    /// restriction of `f` that agrees with `f` on the pair's cell.
    pub fn piece(&self, key: PairKey) -> Result<ValueOracle> {
        let inner_dec = &self.inner[key.outer];
        let c = inner_dec.node(key.inner);
        inner_dec.piece(key.inner)?.complemented_within(&c.admissible)
    }

    pub fn to_doc(&self) -> DoubleDoc {
        let outer_doc = self.outer.to_doc();
        // Inner documents follow the sorted order of the outer buckets.
        let order = self.outer.sorted_indices();
        let inner_docs = order.iter().map(|&i| self.inner[i].to_doc()).collect();
        DoubleDoc {
            format_version: FORMAT_VERSION,
            gamma: self.gamma,
            universe_size: self.d,
            stats: self.stats,
            outer: outer_doc,
            inner: inner_docs,
        }
    }

    pub fn from_doc(doc: &DoubleDoc) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported decomposition format version {}",
                doc.format_version
            )));
        }
        let outer = MonotoneDecomposition::from_doc(&doc.outer)?;
        if doc.inner.len() != outer.len() {
            return Err(Error::Parse(format!(
                "expected {} inner decompositions, found {}",
                outer.len(),
                doc.inner.len()
            )));
        }
        // Documents are stored in sorted outer-bucket order; realign with the
        // loaded node order.
        let order = outer.sorted_indices();
        let mut inner: Vec<Option<MonotoneDecomposition>> = vec![None; outer.len()];
        for (doc_pos, &node_idx) in order.iter().enumerate() {
            let dec = MonotoneDecomposition::from_doc(&doc.inner[doc_pos])?;
            if dec.domain() != &outer.node(node_idx).admissible {
                return Err(Error::Parse(format!(
                    "inner decomposition domain mismatch for bucket {}",
                    outer.node(node_idx).bucket
                )));
            }
            inner[node_idx] = Some(dec);
        }
        Ok(DoubleDecomposition {
            d: doc.universe_size,
            gamma: doc.gamma,
            outer,
            inner: inner.into_iter().map(|x| x.unwrap()).collect(),
            stats: doc.stats,
        })
    }
}

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketDoc {
    pub b: String,
    pub v: String,
    pub dom: String,
    pub t: String,
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneDoc {
    pub format_version: u32,
    pub mode: DecompositionMode,
    pub gamma: f64,
    pub universe_size: usize,
    pub ordering: Vec<usize>,
    pub domain: String,
    pub stats: BuildStats,
    pub buckets: Vec<BucketDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoubleDoc {
    pub format_version: u32,
    pub gamma: f64,
    pub universe_size: usize,
    pub stats: BuildStats,
    pub outer: MonotoneDoc,
    pub inner: Vec<MonotoneDoc>,
}
