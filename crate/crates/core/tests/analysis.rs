mod common;

use genex::analysis::{
    brute_force_opt, check_surrogate_bound, check_greedy_bound, estimate_partial_monotonicity, estimate_weak_submodularity,
    measure_constants, SetFunction,
};
use genex::error::GenexError;
use genex::features::FeatureSet;
use genex::uncertainty::DeltaMode;

const TOL: f64 = 1e-9;

fn all_sets(n: usize) -> Vec<Vec<usize>> {
    (0..1usize << n).map(|m| (0..n).filter(|j| m >> j & 1 == 1).collect()).collect()
}

/// Direct evaluation of the submodularity ratio range over all disjoint
/// pairs, written against plain index vectors.
fn gamma_range(n: usize, g: impl Fn(&[usize]) -> f64) -> (f64, f64, usize) {
    gamma_range_within(n, n, n + 1, g)
}

fn gamma_range_within(n: usize, max_s: usize, max_t: usize, g: impl Fn(&[usize]) -> f64) -> (f64, f64, usize) {
    let sets = all_sets(n);
    let (mut lo, mut hi, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for t in sets.iter().filter(|t| t.len() < max_t) {
        for s in &sets {
            if s.is_empty() || s.len() > max_s || s.iter().any(|u| t.contains(u)) {
                continue;
            }
            let gt = g(t);
            let singles: f64 = s
                .iter()
                .map(|&u| {
                    let mut tu = t.clone();
                    tu.push(u);
                    g(&tu) - gt
                })
                .sum();
            let mut ts = t.clone();
            ts.extend(s);
            let joint = g(&ts) - gt;
            if joint.abs() > TOL {
                lo = lo.min(singles / joint.abs());
                hi = hi.max(singles / joint.abs());
                count += 1;
            }
        }
    }
    (lo, hi, count)
}

#[test]
fn decreasing_cardinality_ratio_range() {
    let g = (3, |s: &FeatureSet| 10.0 - s.len() as f64);
    let m = estimate_partial_monotonicity(&g, 0, 0).unwrap();
    assert!((m.m_min - 0.7).abs() < TOL);
    assert!((m.m_max - 1.0).abs() < TOL);
    assert_eq!(m.pairs, 27);
    assert!(m.exhaustive);
}

#[test]
fn zero_function_has_unit_ratios_and_no_defined_gamma() {
    let g = (4, |_: &FeatureSet| 0.0);
    let m = estimate_partial_monotonicity(&g, 0, 0).unwrap();
    assert_eq!((m.m_min, m.m_max), (1.0, 1.0));
    let s = estimate_weak_submodularity(&g, 0, TOL, 0).unwrap();
    assert_eq!((s.gamma_min, s.gamma_max), (None, None));
    assert_eq!(s.pairs, 0);
}

#[test]
fn negative_modular_function_has_ratio_minus_one() {
    let g = (4, |s: &FeatureSet| -(s.len() as f64));
    let s = estimate_weak_submodularity(&g, 0, TOL, 0).unwrap();
    assert!((s.gamma_min.unwrap() + 1.0).abs() < TOL);
    assert!((s.gamma_max.unwrap() + 1.0).abs() < TOL);
    assert_eq!(s.skipped, 0);
}

#[test]
fn submodular_ratio_matches_direct_enumeration() {
    let w = [0.3, 1.1, 0.7, 2.0];
    let f = |idx: &[usize]| -idx.iter().map(|&j| w[j]).sum::<f64>().sqrt() + 0.1 * idx.len() as f64;
    let g = (4, |s: &FeatureSet| f(&s.iter().collect::<Vec<_>>()));
    let got = estimate_weak_submodularity(&g, 0, TOL, 0).unwrap();
    let (lo, hi, count) = gamma_range(4, f);
    assert!((got.gamma_min.unwrap() - lo).abs() < 1e-12);
    assert!((got.gamma_max.unwrap() - hi).abs() < 1e-12);
    assert_eq!(got.pairs, count);
}

#[test]
fn greedy_pair_ranges_match_restricted_enumeration() {
    let w = [0.3, 1.1, 0.7, 2.0, 0.2];
    let f = |idx: &[usize]| 5.0 - idx.iter().map(|&j| w[j]).sum::<f64>().sqrt() + 0.4 * (idx.len() as f64 - 2.0).powi(2);
    let g = (5, |s: &FeatureSet| f(&s.iter().collect::<Vec<_>>()));
    let (m, got) = genex::analysis::proof_pair_ranges(&g, 2, TOL).unwrap();
    let (lo, hi, count) = gamma_range_within(5, 2, 2, f);
    assert!((got.gamma_min.unwrap() - lo).abs() < 1e-12);
    assert!((got.gamma_max.unwrap() - hi).abs() < 1e-12);
    assert_eq!(got.pairs, count);
    let mut ratios = Vec::new();
    for t in all_sets(5).into_iter().filter(|t| t.len() <= 3) {
        for s in all_sets(5).into_iter().filter(|s| s.iter().all(|u| t.contains(u))) {
            ratios.push(f(&t) / f(&s));
        }
    }
    assert_eq!(m.pairs, ratios.len());
    assert!((m.m_min - ratios.iter().copied().fold(f64::INFINITY, f64::min)).abs() < 1e-12);
    assert!((m.m_max - ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)).abs() < 1e-12);
}

#[test]
fn optimum_prefers_the_smallest_tied_set() {
    let g = (4, |s: &FeatureSet| -(s.len().min(2) as f64));
    let (set, value) = brute_force_opt(&g, 2).unwrap();
    assert_eq!(set, FeatureSet::from_iter([0, 1]));
    assert_eq!(value, -2.0);
    let flat = (5, |_: &FeatureSet| 1.0);
    assert_eq!(brute_force_opt(&flat, 3).unwrap().0, FeatureSet::empty());
}

#[test]
fn optimum_finds_the_best_pair() {
    let w = [0.5, -2.0, 0.1, -1.5, -0.2];
    let g = (5, |s: &FeatureSet| s.iter().map(|j| w[j]).sum::<f64>());
    let (set, value) = brute_force_opt(&g, 2).unwrap();
    assert_eq!(set, FeatureSet::from_iter([1, 3]));
    assert!((value + 3.5).abs() < TOL);
}

#[test]
fn optimum_refuses_oversized_searches() {
    let g = (40, |_: &FeatureSet| 0.0);
    assert!(matches!(brute_force_opt(&g, 5), Err(GenexError::BudgetExceeded { .. })));
}

#[test]
fn approximation_bound_on_cardinality_function() {
    // m in [0.7, 1], gamma = -1 everywhere, OPT = 8, G(empty) = 10
    let c = check_greedy_bound(8.0, 8.0, 10.0, 0.7, 1.0, -1.0, -1.0, 2).unwrap();
    let m_f = 2.0 / 0.7;
    let expected = m_f * 8.0 - 0.25 * (m_f * 8.0 - 10.0);
    assert!((c.m_f - m_f).abs() < TOL);
    assert_eq!(c.gamma_f, 1.0);
    assert!((c.bound - expected).abs() < TOL);
    assert!(c.pass && !c.degenerate);
    assert!(!check_greedy_bound(30.0, 8.0, 10.0, 0.7, 1.0, -1.0, -1.0, 2).unwrap().pass);
}

#[test]
fn approximation_bound_flags_degenerate_inputs() {
    assert!(check_greedy_bound(1.0, 1.0, 1.0, 0.5, 1.0, 0.2, 0.5, 0).is_err());
    assert!(check_greedy_bound(1.0, 1.0, 2.0, 0.0, 1.0, 0.2, 0.5, 2).unwrap().degenerate);
    assert!(check_greedy_bound(1.0, 1.0, 2.0, 0.5, 1.0, 0.0, 0.0, 2).unwrap().degenerate);
}

fn small_context(mode: DeltaMode, seed: u64) -> genex::setfn::GfContext {
    let d = common::bucket(5, 8, 2, 1, seed);
    let models = common::pretrained(&d, 10, seed);
    common::gf(&d, &models, mode, 16, seed)
}

#[test]
fn surrogate_bound_with_certain_classifier_is_the_oracle_minimum() {
    let ctx = small_context(DeltaMode::Constant(1.0), 3);
    let c = check_surrogate_bound(&ctx, 2, 1_000_000).unwrap();
    let d = ctx.data();
    let clf = &ctx.models().classifier;
    let loss = |u: &FeatureSet| -> f64 {
        d.instances
            .iter()
            .map(|inst| -clf.probs_encoded(&inst.input_with(u).encoded())[inst.label].ln())
            .sum()
    };
    let best = all_sets(5)
        .into_iter()
        .filter(|s| s.len() <= 2)
        .map(|s| loss(&s.into_iter().collect()))
        .fold(f64::INFINITY, f64::min);
    assert!((c.rhs - best).abs() < 1e-6, "{} vs {best}", c.rhs);
    assert!(c.lhs <= c.rhs + TOL);
    assert!(c.pass);
}

#[test]
fn surrogate_bound_without_budget() {
    let ctx = small_context(DeltaMode::MonteCarlo, 5);
    let c = check_surrogate_bound(&ctx, 0, 1_000_000).unwrap();
    assert_eq!(c.rhs_set, FeatureSet::empty());
    assert!(c.lhs <= c.rhs + TOL);
    assert!(c.pass);
}

#[test]
fn constants_vanish_for_exact_copies_and_constant_uncertainty() {
    let d = common::bucket(5, 30, 2, 1, 8);
    let models = common::pretrained(&d, 5, 8);
    let copy = common::with_copy(&models, 5, FeatureSet::full(5), 0.0);
    let deltas = common::table(&models, &d, DeltaMode::Constant(0.6), 8);
    let c = measure_constants(&d, &copy, &deltas, 4, 200, 1).unwrap();
    assert_eq!(c.eps_x, 0.0);
    assert_eq!(c.eps_delta, 0.0);
    assert_eq!((c.delta_min, c.delta_max), (0.6, 0.6));
    assert!(c.loss_min <= c.loss_max && c.lipschitz_x > 0.0);
    assert_eq!(c, measure_constants(&d, &copy, &deltas, 4, 200, 1).unwrap());
}

#[test]
fn set_function_tuple_reports_its_ground_size() {
    let g = (7, |_: &FeatureSet| 0.0);
    assert_eq!(g.ground_size(), 7);
}
