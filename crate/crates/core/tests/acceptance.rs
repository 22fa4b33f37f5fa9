//! Acceptance suite: one test per criterion, each printing a PASS line once
//! all of its asserts hold. Run with `cargo test --test acceptance --
//! --nocapture` to see the lines.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use submod_release::approximator::{
    concentration_tails, error_census, exact_mean, gamma_for, CensusDistribution, CensusMode,
    ProductDistribution,
};
use submod_release::decomposition::{
    decompose_general, decompose_monotone, decompose_tolerant, DecompositionMode,
};
use submod_release::mask::SubsetMask;
use submod_release::mw::{
    agreement, mw_release, relative_entropy, ExactSqOracle, ExhaustiveReleaser,
    ExhaustiveWeakLearner, LabeledMixture, MonotoneConjunctions, MwConfig, TableLabeledOracle,
    WeightedDistribution, ConceptFamily,
};
use submod_release::mw::{mw_update, release_to_agnostic};
use submod_release::oracle::{check_lipschitz_over, ValueOracle};
use submod_release::privacy::{laplace_sample, min_database_size, PrivacyBudget};
use submod_release::queries::{
    conjunction_value, cut_oracle, release_conjunctions, release_disjunctions, BitDataset,
    CoverageFunction, Graph, PrivacyMode,
};

fn pass(number: u32, name: &str) {
    println!("criterion {} ({}): PASS", number, name);
}

fn coverage_fixture(seed: u64) -> CoverageFunction {
    CoverageFunction::random(10, 24, 0.25, seed).unwrap()
}

/// Exhaustively confirm that routing boxes tile the cube: every mask lands
/// in the cell of its routed bucket and in no other.
fn assert_unique_tiling<I>(d: usize, route: impl Fn(&SubsetMask) -> usize, cells: &[I])
where
    I: Fn(&SubsetMask) -> bool,
{
    for mask in SubsetMask::enumerate_all(d).unwrap() {
        let routed = route(&mask);
        for (idx, cell_contains) in cells.iter().enumerate() {
            assert_eq!(
                cell_contains(&mask),
                idx == routed,
                "mask {} routed to {} but cell {} membership disagrees",
                mask,
                routed,
                idx
            );
        }
    }
}

#[test]
fn criterion_1_decomposition_structural_suite() {
    let d = 10;
    for run in 0..50u64 {
        let started = Instant::now();
        let coverage = coverage_fixture(run);
        let oracle = coverage.oracle();
        for &gamma in &[0.2, 0.3, 0.5] {
            let dec = decompose_monotone(&oracle, gamma).unwrap();
            let depth_cap = (1.0 / gamma).ceil() as usize;
            let size_cap = (d as u128).pow(depth_cap as u32);
            assert!(dec.len() as u128 <= size_cap);
            for node in dec.nodes() {
                assert!(node.depth() <= depth_cap);
                assert_eq!(node.bucket().len(), node.depth());
            }
            // Completeness: the routed piece reproduces f bit-exactly.
            for mask in SubsetMask::enumerate_all(d).unwrap() {
                let idx = dec.route(&mask).unwrap();
                let node = dec.node(idx);
                assert!(node.bucket().is_subset_of(&mask));
                assert!(mask.is_subset_of(node.admissible()));
                let piece = dec.piece(idx).unwrap();
                assert_eq!(
                    piece.eval(&mask).unwrap(),
                    oracle.eval(&mask).unwrap(),
                    "completeness broke at {}",
                    mask
                );
            }
            // Uniqueness: cells tile the cube.
            let cells: Vec<_> = (0..dec.len()).map(|i| dec.cell(i)).collect();
            let contains: Vec<_> = cells
                .iter()
                .map(|c| {
                    let c = c.clone();
                    move |s: &SubsetMask| c.contains(s)
                })
                .collect();
            assert_unique_tiling(d, |s| dec.route(s).unwrap(), &contains);
        }
        assert!(
            started.elapsed().as_secs() < 60,
            "function {} exceeded the time budget",
            run
        );
    }
    pass(1, "decomposition structural suite");
}

#[test]
fn criterion_2_lipschitz_suite() {
    // One-sided bound for every piece of the coverage decompositions.
    for run in 0..50u64 {
        let coverage = coverage_fixture(run);
        let oracle = coverage.oracle();
        for &gamma in &[0.2, 0.3, 0.5] {
            let dec = decompose_monotone(&oracle, gamma).unwrap();
            for idx in 0..dec.len() {
                let piece = dec.piece(idx).unwrap();
                assert!(
                    check_lipschitz_over(&piece, dec.node(idx).admissible(), gamma, false)
                        .unwrap(),
                    "one-sided bound failed: run {} gamma {} bucket {}",
                    run,
                    gamma,
                    dec.node(idx).bucket()
                );
            }
        }
    }
    // Two-sided bound for every piece of the cut decompositions.
    let gamma = 0.12;
    for seed in 0..20u64 {
        let graph = Graph::random(10, 0.5, seed).unwrap();
        let oracle = cut_oracle(&graph);
        let dec = decompose_general(&oracle, gamma).unwrap();
        for key in dec.pairs() {
            let piece = dec.piece(key).unwrap();
            let domain = dec.admissible_set(key);
            assert!(
                check_lipschitz_over(&piece, &domain, gamma, true).unwrap(),
                "two-sided bound failed: graph {} pair {:?}",
                seed,
                dec.bucket_masks(key)
            );
        }
    }
    pass(2, "lipschitz suite");
}

#[test]
fn criterion_3_tolerant_oracle_suite() {
    let d = 10;
    let gamma: f64 = 0.3;
    let tau = gamma / 12.0;
    let depth_cap = (6.0 / gamma).ceil() as usize;
    for seed in 0..20u64 {
        let coverage = coverage_fixture(1000 + seed);
        let exact = coverage.oracle();
        let value = {
            let c = coverage.clone();
            move |s: &SubsetMask| c.value(s)
        };
        let noisy = ValueOracle::tolerant(d, tau, seed, value);
        let dec = decompose_tolerant(&noisy, gamma).unwrap();
        assert_eq!(dec.mode(), DecompositionMode::Tolerant);

        // Size and depth bounds.
        assert!(dec.len() as u128 <= (d as u128).pow(depth_cap as u32));
        for node in dec.nodes() {
            assert!(node.depth() <= depth_cap, "depth {}", node.depth());
        }

        // Lipschitz of the *true* function over each admissible set.
        for idx in 0..dec.len() {
            let node = dec.node(idx);
            let true_piece = exact.restricted_shift(node.bucket(), node.admissible());
            assert!(check_lipschitz_over(&true_piece, node.admissible(), gamma, false).unwrap());
        }

        // Completeness against the true function, and uniqueness tiling.
        for mask in SubsetMask::enumerate_all(d).unwrap() {
            let idx = dec.route(&mask).unwrap();
            let node = dec.node(idx);
            assert!(node.bucket().is_subset_of(&mask));
            assert!(mask.is_subset_of(node.admissible()));
            assert!(mask.is_disjoint_from(node.rejected()));
            let true_piece = exact.restricted_shift(node.bucket(), node.admissible());
            assert_eq!(true_piece.eval(&mask).unwrap(), exact.eval(&mask).unwrap());
        }
        let cells: Vec<_> = (0..dec.len()).map(|i| dec.cell(i)).collect();
        let contains: Vec<_> = cells
            .iter()
            .map(|c| {
                let c = c.clone();
                move |s: &SubsetMask| c.contains(s)
            })
            .collect();
        assert_unique_tiling(d, |s| dec.route(s).unwrap(), &contains);
    }
    pass(3, "tolerant oracle suite");
}

#[test]
fn criterion_4_approximation_census() {
    let started = Instant::now();
    let d = 12;
    let (alpha, beta) = (0.25, 0.1);
    let data = BitDataset::random(200, d, 0.5, 20260810).unwrap();
    let dist = ProductDistribution::uniform(d);
    let out = release_conjunctions(&data, alpha, beta, PrivacyMode::NoiseOff, &dist, 7).unwrap();
    let truth = {
        let data = data.clone();
        ValueOracle::exact(d, move |s| conjunction_value(&data, s).unwrap())
    };
    let report = error_census(
        &out.structure,
        &truth,
        CensusDistribution::Product(&dist),
        CensusMode::Exhaustive,
    )
    .unwrap();
    assert_eq!(report.points, 1 << d);
    assert!((report.total_mass - 1.0).abs() < 1e-9);
    assert!(
        report.prob_exceeding_alpha <= beta,
        "Pr[err > {}] = {} exceeds {}",
        alpha,
        report.prob_exceeding_alpha,
        beta
    );
    assert!(
        started.elapsed().as_secs() < 120,
        "census fixture exceeded the time budget"
    );
    pass(4, "approximation census");
}

#[test]
fn criterion_5_concentration_check() {
    let gamma = 0.2;
    let coverage = coverage_fixture(5);
    let oracle = coverage.oracle();
    let dec = decompose_monotone(&oracle, gamma).unwrap();
    let dist = ProductDistribution::uniform(10);
    for idx in 0..dec.len() {
        let piece = dec.piece(idx).unwrap();
        let restricted = dist.restrict_to_cell(&dec.cell(idx)).unwrap();
        let mu = exact_mean(&piece, &restricted).unwrap();
        let seed = dec.node(idx).bucket().fingerprint(42);
        let tails =
            concentration_tails(&piece, &restricted, gamma, mu, &[2.0, 4.0, 6.0], 100_000, seed)
                .unwrap();
        for tail in tails {
            assert!(
                tail.passes(),
                "bucket {} t={} empirical {} bound {} slack {}",
                dec.node(idx).bucket(),
                tail.t,
                tail.empirical,
                tail.bound,
                tail.slack
            );
        }
    }
    pass(5, "concentration check");
}

#[test]
fn criterion_6_privacy_mechanism() {
    // Kolmogorov-Smirnov distance of 1e5 draws against the exact CDF.
    let mut rng = ChaCha12Rng::seed_from_u64(606);
    let n = 100_000usize;
    let mut draws: Vec<f64> = (0..n)
        .map(|_| laplace_sample(1.0, &mut rng).unwrap())
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cdf = |x: f64| {
        if x < 0.0 {
            0.5 * x.exp()
        } else {
            1.0 - 0.5 * (-x).exp()
        }
    };
    let mut ks: f64 = 0.0;
    for (i, x) in draws.iter().enumerate() {
        ks = ks.max((cdf(*x) - i as f64 / n as f64).abs());
        ks = ks.max((cdf(*x) - (i + 1) as f64 / n as f64).abs());
    }
    assert!(ks <= 0.01, "ks distance {}", ks);

    // Budget counter across a full noisy release pipeline.
    let d = 4;
    let (alpha, beta) = (0.9, 0.9);
    let tau = gamma_for(alpha, beta) / 12.0;
    let k = 1u64 << d;
    let epsilon = 1.0;
    let needed = min_database_size(k, tau, beta, epsilon).unwrap();
    let data = BitDataset::random(needed as usize, d, 0.5, 66).unwrap();
    let dist = ProductDistribution::uniform(d);
    let out = release_disjunctions(
        &data,
        alpha,
        beta,
        PrivacyMode::Laplace { epsilon },
        &dist,
        9,
    )
    .unwrap();
    assert!(!out.budget.noise_off);
    assert!(out.budget.used_queries > 0);
    assert!(out.budget.used_queries <= out.budget.declared_queries);

    // Size bound and tail bound agree on random parameter tuples.
    let mut rng = ChaCha12Rng::seed_from_u64(607);
    for _ in 0..100 {
        let k = rng.gen_range(1u64..1000);
        let tau = rng.gen_range(0.0005..0.5);
        let beta = rng.gen_range(0.005..0.95);
        let eps = rng.gen_range(0.05..10.0);
        let n = min_database_size(k, tau, beta, eps).unwrap();
        let budget = PrivacyBudget::new(eps, k, n).unwrap();
        assert!(budget.tail_check(tau, beta));
    }
    pass(6, "privacy mechanism");
}

#[test]
fn criterion_7_mw_release() {
    let started = Instant::now();
    let family = Arc::new(MonotoneConjunctions::new(8).unwrap());
    let n_points = family.n_points();
    let alpha = 0.2;
    let cfg = MwConfig::for_exhaustive_release(alpha, n_points).unwrap();
    // tau = beta / 8 by construction.
    assert!((cfg.tau - cfg.beta / 8.0).abs() < 1e-15);
    let cap = (8.0 * (n_points as f64).ln() / (cfg.beta * cfg.beta)).ceil() as usize + 1;
    assert_eq!(cfg.rounds_cap, cap);

    // Data concentrated on 40 points.
    let mut rng = ChaCha12Rng::seed_from_u64(707);
    let data = WeightedDistribution::empirical(
        n_points,
        (0..40).map(|_| rng.gen_range(0..n_points)),
    )
    .unwrap();
    let sq = ExactSqOracle::new(Arc::clone(&family), data.clone());
    let out = mw_release(
        family.as_ref(),
        &ExhaustiveWeakLearner,
        &sq,
        &cfg,
        n_points,
        Some(&data),
    )
    .unwrap();
    assert!(out.rounds <= cfg.rounds_cap);

    // Final answers within alpha of the truth for every concept.
    let mut sup: f64 = 0.0;
    for c in 0..family.len() {
        let truth = data.expectation(|x| family.eval(c, x));
        sup = sup.max((out.answers[c] - truth).abs());
    }
    assert!(sup <= alpha, "sup error {}", sup);

    // Potential drops by at least beta^2/4 on every update round.
    let floor = cfg.beta * cfg.beta / 4.0;
    for t in &out.trace {
        if t.updated {
            let drop = t.potential_drop.unwrap();
            assert!(drop >= floor - 1e-12, "round {} drop {}", t.round, drop);
        }
    }

    // Mixture agreement identity against exact expectations, to 1e-12.
    let mut synth = WeightedDistribution::uniform(n_points);
    for round in 0..6 {
        synth = mw_update(&synth, |x| x % (round + 2) == 0, cfg.eta);
        let plus = LabeledMixture {
            synthetic: &synth,
            data_label: true,
        };
        for c in (0..family.len()).step_by(17) {
            let reported = agreement(family.as_ref(), c, &plus, &sq).unwrap();
            let e_data = data.expectation(|x| family.eval(c, x));
            let e_syn = synth.expectation(|x| family.eval(c, x));
            assert!((reported - (0.5 + 0.5 * (e_data - e_syn))).abs() < 1e-12);
        }
    }

    // Termination soundness: the relative entropy trace is consistent.
    let final_potential = relative_entropy(&data, &out.final_dist).unwrap();
    assert!(final_potential >= 0.0);
    assert!(
        started.elapsed().as_secs() < 60,
        "mw fixture exceeded the time budget"
    );
    pass(7, "mw release");
}

#[test]
fn criterion_8_reverse_reduction() {
    let family = Arc::new(MonotoneConjunctions::new(8).unwrap());
    let n_points = family.n_points();
    let alpha = 0.05;
    // Answer noise of alpha/2 keeps every released value within alpha, so
    // the argmax concept is within 2*alpha of optimal.
    let answer_noise = alpha / 2.0;
    for instance in 0..20u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(808 + instance);
        // Planted conjunction of weight 2..4 with 10% label noise.
        let weight = rng.gen_range(2usize..=4);
        let mut planted = 0usize;
        while planted.count_ones() < weight as u32 {
            planted |= 1 << rng.gen_range(0..8);
        }
        let flip = 0.1;
        let mut pos = vec![0.0; n_points];
        let mut neg = vec![0.0; n_points];
        let w = 1.0 / n_points as f64;
        for x in 0..n_points {
            let label_one_prob = if family.eval(planted, x) {
                1.0 - flip
            } else {
                flip
            };
            pos[x] = w * label_one_prob;
            neg[x] = w * (1.0 - label_one_prob);
        }
        let oracle =
            TableLabeledOracle::new(Arc::clone(&family), pos, neg, answer_noise, instance).unwrap();
        let pick = release_to_agnostic(&ExhaustiveReleaser, family.len(), &oracle).unwrap();
        assert!(pick.sq_calls <= 2 * family.len() as u64);
        let best = (0..family.len())
            .map(|c| oracle.true_agreement(c))
            .fold(f64::NEG_INFINITY, f64::max);
        let picked = oracle.true_agreement(pick.concept);
        assert!(
            picked >= best - 2.0 * alpha - 1e-12,
            "instance {}: picked {} best {}",
            instance,
            picked,
            best
        );
    }
    pass(8, "reverse reduction");
}

#[test]
fn criterion_9_graph_cut_bucket_bound() {
    let gamma = 0.1;
    for seed in 0..20u64 {
        let graph = Graph::random(16, 0.3, seed).unwrap();
        let oracle = cut_oracle(&graph);
        let dec = decompose_general(&oracle, gamma).unwrap();
        // Only vertices with degree above (gamma/3)|V|^2 can expand.
        let high = graph.high_influence_vertices(gamma / 3.0);
        for key in dec.pairs() {
            let (b, c) = dec.bucket_masks(key);
            assert!(b.is_subset_of(&high), "graph {} bucket {}", seed, b);
            assert!(c.is_subset_of(&high), "graph {} bucket {}", seed, c);
        }
        let m = high.len() as u32;
        assert!(dec.len() as u128 <= 4u128.pow(m));
        // The same bound in the function's own degree scale.
        if !graph.edges().is_empty() {
            let v2 = (16 * 16) as f64;
            let gamma_scaled = (gamma / 6.0) * v2 / graph.edges().len() as f64;
            let exponent = (2.0 / gamma_scaled).min(62.0);
            assert!((dec.len() as f64).log2() <= exponent);
        }
    }
    pass(9, "graph cut bucket bound");
}
