//! Hand-checkable values for every module, frozen from independent
//! evaluation of the defining formulas.

use pattern_entropy::bounds::*;
use pattern_entropy::coder::*;
use pattern_entropy::distributions::*;
use pattern_entropy::grids::*;
use pattern_entropy::numeric::binary_entropy;
use pattern_entropy::oracle::*;
use pattern_entropy::patterns::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn pv(p: &[f64]) -> ParamVector {
    ParamVector::new(p).unwrap()
}

#[test]
fn source_families() {
    let u = make_distribution(
        &SourceSpec::Uniform {
            k: Some(4),
            nu: None,
        },
        None,
    )
    .unwrap();
    assert_eq!(u.theta.expand(10).unwrap(), vec![0.25; 4]);
    let ex1 = make_distribution(
        &SourceSpec::Uniform {
            k: None,
            nu: Some(0.5),
        },
        Some(100),
    )
    .unwrap();
    assert_eq!(ex1.theta.expand(100).unwrap(), vec![0.1; 10]);
    let two = make_distribution(
        &SourceSpec::TwoLevel {
            phi0: 0.5,
            mu: 1.0,
            nu: 0.5,
        },
        Some(100),
    )
    .unwrap();
    let levels = two.theta.levels();
    assert_eq!(levels[0].count, 5000);
    assert!(close(levels[0].prob, 1e-4, 1e-18));
    let total: f64 = levels.iter().map(|l| l.prob * l.count as f64).sum();
    assert!(close(total, 1.0, 1e-12));
    assert!(ParamVector::new(&[0.3, 0.6]).is_err());
}

#[test]
fn entropies() {
    assert!(close(iid_entropy(&pv(&[0.25; 4])), 2.0, 1e-15));
    assert_eq!(iid_entropy(&pv(&[1.0])), 0.0);
    assert!(close(
        iid_entropy(&pv(&[0.25, 0.75])),
        0.811_278_124_459_132_8,
        1e-15
    ));
    assert_eq!(binary_entropy(0.5), 1.0);
    assert_eq!(binary_entropy(0.0), 0.0);
    assert!(close(binary_entropy(0.11), 0.499_915_958_164_528, 1e-14));
}

#[test]
fn sampling() {
    assert_eq!(sample_sequence(&pv(&[1.0]), 5, 9).unwrap(), vec![1; 5]);
    let theta = pv(&[0.2, 0.3, 0.5]);
    assert_eq!(
        sample_sequence(&theta, 50, 4).unwrap(),
        sample_sequence(&theta, 50, 4).unwrap()
    );
    let x = sample_sequence(&pv(&[0.5, 0.5]), 100_000, 17).unwrap();
    let ones = x.iter().filter(|&&s| s == 1).count() as f64 / 1e5;
    assert!((ones - 0.5).abs() <= 0.01, "{ones}");
}

#[test]
fn grid_examples() {
    let tau = build_grid(GridKind::Tau, 100, 0.0).unwrap();
    let xi = build_grid(GridKind::Xi, 100, 0.0).unwrap();
    assert_eq!(tau.points, xi.points);
    assert_eq!((tau.last_index, tau.half_index), (10, 7));
    assert_eq!(bin_index(&tau, 0.05).unwrap(), 2);
    assert_eq!(bin_index(&tau, 0.04).unwrap(), 1);
    assert_eq!(bin_index(&tau, 1.0).unwrap(), tau.num_bins() - 1);

    let eta = build_grid(GridKind::Eta, 10_000, 0.25).unwrap();
    assert_eq!(eta.shift, 31);
    assert!(close(eta.points[3], 32.0 * 32.0 / 1e6, 1e-18));
}

#[test]
fn bin_statistics() {
    // k = n = 4 uniform: one populated bin with occupancy 4 (1 - (3/4)^4)
    let g = build_grid(GridKind::Tau, 4, 0.0).unwrap();
    let s = bin_stats(&pv(&[0.25; 4]), &g).unwrap();
    assert_eq!(s.bins.len(), 1);
    assert!(close(s.bins[0].occupancy, 2.734_375, 1e-14));

    // two letters in xi bin 2, one in bin 3: each neighborhood holds three
    let g = build_grid(GridKind::Xi, 100, 0.0).unwrap();
    let s = bin_stats(&pv(&[0.05, 0.06, 0.1, 0.79]), &g).unwrap();
    assert_eq!((s.count(2), s.count(3)), (2, 1));
    assert_eq!((s.neighborhood_count(2), s.neighborhood_count(3)), (3, 3));

    // isolated singletons: every neighborhood holds at most one letter
    let s = bin_stats(&pv(&[0.02, 0.17, 0.81]), &g).unwrap();
    assert!((1..=g.half_index).all(|b| s.neighborhood_count(b) <= 1));
}

#[test]
fn occurrence_examples() {
    let s = occurrence_stats(0.5, 2).unwrap();
    assert_eq!(s.p_absent, 0.25);
    assert!(close(s.p_absent_lo, 0.223_130_160_148_429_8, 1e-15));
    assert!(close(s.p_absent_hi, 0.367_879_441_171_442_3, 1e-15));
    let s = occurrence_stats(0.7, 3).unwrap();
    assert_eq!(s.p_absent_lo, 0.0);
    assert!(close(s.p_absent, 0.027, 1e-15));
    let s = occurrence_stats(0.001, 100).unwrap();
    let small = s.small.unwrap();
    let pairs = 4950.0 * 1e-6;
    let triples = 161_700.0 * 1e-9;
    assert!(close(small.mean_reoccur_hi, pairs, 1e-15));
    assert!(close(small.mean_reoccur_lo, pairs - triples, 1e-15));
    assert!(small.mean_reoccur_lo <= s.mean_reoccur && s.mean_reoccur <= small.mean_reoccur_hi);
}

#[test]
fn pattern_examples() {
    let lossless: Vec<char> = "lossless".chars().collect();
    let sellsoll: Vec<char> = "sellsoll".chars().collect();
    assert_eq!(extract_pattern(&lossless).unwrap().to_string(), "12331433");
    assert_eq!(extract_pattern(&sellsoll).unwrap().to_string(), "12331433");
    assert_eq!(extract_pattern(&[7; 5]).unwrap().to_string(), "11111");

    let all = |n, k| {
        enumerate_patterns(n, k, DEFAULT_PATTERN_CAP)
            .unwrap()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(all(2, 2), ["11", "12"]);
    assert_eq!(all(3, 3), ["111", "112", "121", "122", "123"]);
    assert_eq!(all(3, 1), ["111"]);

    let theta = pv(&[0.25, 0.75]);
    let p = |s: &[u32]| pattern_probability(&theta, &Pattern::new(s.to_vec()).unwrap()).unwrap();
    assert!(close(p(&[1, 2]), 0.375, 1e-15));
    assert!(close(p(&[1, 1]), 0.625, 1e-15));
    assert!(close(p(&[1]), 1.0, 1e-15));

    let g = build_grid(GridKind::Tau, 100, 0.0).unwrap();
    assert_eq!(
        bin_sequence(&pv(&[0.05, 0.95]), &g, &[2, 1]).unwrap(),
        vec![9, 2]
    );
    assert_eq!(bin_sequence(&pv(&[0.05, 0.95]), &g, &[2]).unwrap(), vec![9]);
}

#[test]
fn exact_oracle_examples() {
    let g = build_grid(GridKind::Eta, 2, 0.5).unwrap();
    let e = exact_entropies(&pv(&[0.5, 0.5]), &g).unwrap();
    assert!(close(e.h_pattern, 1.0, 1e-14) && close(e.h_x_block, 2.0, 1e-14));
    let e = exact_entropies(&pv(&[0.25, 0.75]), &g).unwrap();
    assert!(close(e.h_pattern, 0.954_434_002_924_965, 1e-14));
    let g = build_grid(GridKind::Eta, 6, 0.5).unwrap();
    let e = exact_entropies(&pv(&[1.0]), &g).unwrap();
    assert_eq!(
        (e.h_pattern, e.h_joint, e.h_x_block, e.expected_codelength),
        (0.0, 0.0, 0.0, 0.0)
    );
}

#[test]
fn monte_carlo_examples() {
    let mc = mc_pattern_entropy(&pv(&[0.5, 0.5]), 2, 100_000, 3).unwrap();
    assert!((mc.mean - 1.0).abs() <= 3.0 * mc.std_error, "{mc:?}");
    let mc = mc_pattern_entropy(&pv(&[1.0]), 7, 1000, 3).unwrap();
    assert_eq!((mc.mean, mc.std_error), (0.0, 0.0));
}

#[test]
fn permutation_counts() {
    assert_eq!(brute_force_permutation_count(&[0, 0, 1, 1]).unwrap(), 4);
    assert_eq!(brute_force_permutation_count(&[0, 1, 2, 3]).unwrap(), 1);
    assert_eq!(brute_force_permutation_count(&[0, 0, 0, 1, 1]).unwrap(), 12);
    assert!(brute_force_permutation_count(&[0; 9]).is_err());
}

#[test]
fn packed_and_simple() {
    let theta = pv(&[0.05, 0.1, 0.35, 0.5]);
    let p = packed_entropies(&theta, 4, 0.0).unwrap();
    assert!(close(p.h01, 1.440_645_449_615_346_2, 1e-14));
    let p = packed_entropies(&theta, 10, 0.2).unwrap();
    assert!(close(p.h0_1, iid_entropy(&theta), 1e-14));

    let (lo, hi) = simple_bounds(&pv(&[0.5, 0.5]), 2).unwrap();
    assert_eq!((lo.value, hi.value), (1.0, 2.0));
    let (lo, hi) = simple_bounds(&pv(&[1.0]), 9).unwrap();
    assert_eq!((lo.value, hi.value), (0.0, 0.0));
    let (lo, hi) = simple_bounds(&pv(&[1.0 / 3.0; 3]), 2).unwrap();
    assert!(close(lo.value, 0.584_962_500_721_156_1, 1e-12));
    assert!(close(hi.value, 3.169_925_001_442_312, 1e-12));
}

#[test]
fn large_letter_bounds() {
    // isolated singletons above 1/n^(1-eps): no permutation gain
    let theta = pv(&[0.2, 0.3, 0.5]);
    let r = permutation_upper(&theta, 1000, 0.3, false).unwrap();
    assert_eq!(r.term("bin_permutations").unwrap(), 0.0);

    let theta = pv(&[0.05, 0.06, 0.1, 0.79]);
    let (_, b) = permutation_lower(&theta, 100, 0.0).unwrap();
    assert!(close(b.value, 99.878_318_442_401_65, 1e-10), "{}", b.value);
    let theta = pv(&[0.02, 0.17, 0.81]);
    let (a, b) = permutation_lower(&theta, 100, 0.0).unwrap();
    let nh = 100.0 * iid_entropy(&theta);
    assert!(close(a.value, nh - 3.0 * 3f64.log2(), 1e-10));
    assert!(close(b.value, nh, 1e-10));
}

#[test]
fn contribution_examples() {
    // half the mass in 200 letters of 0.0025, below 1/n^1.2 at n = 100
    let mut probs = vec![0.0025; 200];
    probs.push(0.5);
    let c = contribution_limits(&pv(&probs), 100, 0.2, 1.0).unwrap();
    assert!(
        close(c.part2.value, 103.660_363_959_600_79, 1e-9),
        "{}",
        c.part2.value
    );

    let c = contribution_limits(&pv(&[0.5, 0.5]), 100, 0.2, 1.0).unwrap();
    assert_eq!((c.part1.value, c.part2.value), (0.0, 0.0));

    let n = 1e6;
    let ratio =
        contribution_part1(2.0 * n, 0.2, 0.3, 2.0 * n).0 / contribution_part1(n, 0.2, 0.3, n).0;
    assert!(close(ratio, 2.0 * (1.0 + 1.0 / n.log2()), 1e-12));
}

#[test]
fn lower_bound_with_single_small_letter() {
    // the only small letter carries all of the small mass, so its weight is log 1
    let n = 1000u64;
    let theta = pv(&[1e-3, 0.4, 0.599]);
    let r = small_letter_lower(&theta, n, 0.2, &SmallLetterOptions::default()).unwrap();
    assert_eq!(r.term("small_reoccurrences").unwrap(), 0.0);
}

#[test]
fn stirling_examples() {
    let s = stirling_bounds(1.0).unwrap();
    assert!(close(s.ln_lower.exp(), 0.922_137_008_895_789_1, 1e-15));
    assert!(close(s.ln_upper.exp(), 1.002_274_449_182_226_6, 1e-15));
    let s = stirling_bounds(10.0).unwrap();
    let ln10 = 3_628_800f64.ln();
    assert!(s.ln_lower <= ln10 && ln10 <= s.ln_upper);
}

#[test]
fn gamma_matches_bisection() {
    let c = 11.0;
    let (mut lo, mut hi) = (2.0f64, 50.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid - ((mid - 1.0).powi(2) / mid.powi(3)).ln() - c < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g = gamma_fixed_point(c).unwrap();
    assert!(close(g, lo, 1e-10));
    assert!(close(g, 8.60, 5e-3));
}

#[test]
fn range_branches() {
    let (n, eps, n_eps1) = (1e6f64, 0.2, 20.0);
    let threshold = n.powf(1.0 / 3.0 + eps);
    let below = range_decrease(threshold * 0.99, n, eps, n_eps1).unwrap();
    assert_eq!(
        (below.upper_decrease, below.upper_decrease_asymptotic),
        (0.0, 0.0)
    );
    let at = range_decrease(threshold, n, eps, n_eps1).unwrap();
    assert!(at.upper_decrease_raw.is_finite() && at.upper_decrease_asymptotic > 0.0);
    let far = range_decrease(20_000.0, n, eps, n_eps1).unwrap();
    assert!(far.upper_decrease > 0.0 && far.lower_decrease > far.upper_decrease);
}

#[test]
fn staircase_source_meets_the_upper_edge() {
    // d letters at each xi point b^2/n^(1-eps), b = 1..beta
    let (n, eps, d) = (1e12f64, 0.1, 50u64);
    let scale = n.powf(1.0 - eps);
    let beta = ((3.0 * scale / d as f64).cbrt()) as u64;
    let levels: Vec<Level> = (1..=beta)
        .map(|b| Level {
            prob: (b * b) as f64 / scale,
            count: d,
        })
        .collect();
    let mass: f64 = levels.iter().map(|l| l.prob * l.count as f64).sum();
    let levels = levels
        .into_iter()
        .map(|l| Level {
            prob: l.prob / mass,
            count: l.count,
        })
        .collect();
    let theta = ParamVector::from_levels(levels).unwrap();
    let k = theta.k() as f64;
    let deduction = beta as f64 * pattern_entropy::numeric::log2_factorial(d as f64);
    let edge = 1.5
        * k
        * (k / (std::f64::consts::E.powf(2.0 / 3.0) * n.powf((1.0 - eps) / 3.0) * 3f64.cbrt()))
            .log2();
    assert!(
        (deduction - edge).abs() / edge < 0.1,
        "{deduction} vs {edge}"
    );
}

#[test]
fn coder_examples() {
    // three letters of 1/3 share one bin above 1/n^(1-eps)
    let theta = pv(&[1.0 / 3.0; 3]);
    let g = build_grid(GridKind::Eta, 10, 0.5).unwrap();
    let model = CoderModel::new(&theta, &g).unwrap();
    let b = bin_index(&g, 1.0 / 3.0).unwrap();
    assert!(b >= 2);
    let mut st = CoderState::new(&model);
    assert!(close(
        next_symbol_prob(&model, &st, 1, b).unwrap().prob,
        1.0,
        1e-15
    ));
    st.update(&model, 1, b).unwrap();
    assert!(close(
        next_symbol_prob(&model, &st, 1, b).unwrap().prob,
        1.0 / 3.0,
        1e-15
    ));
    assert!(close(
        next_symbol_prob(&model, &st, 2, b).unwrap().prob,
        2.0 / 3.0,
        1e-15
    ));
    assert_eq!(next_symbol_prob(&model, &st, 1, b + 1).unwrap().prob, 0.0);
    let cl = |s: &[u32]| {
        sequence_codelength(
            &model,
            &Pattern::new(s.to_vec()).unwrap(),
            &vec![b; s.len()],
        )
        .unwrap()
        .bits
    };
    assert!(close(cl(&[1, 1]), 3f64.log2(), 1e-12));
    assert!(close(cl(&[1, 2]), 1.5f64.log2(), 1e-12));

    let one = pv(&[1.0]);
    let g = build_grid(GridKind::Eta, 20, 0.5).unwrap();
    let model = CoderModel::new(&one, &g).unwrap();
    let psi = Pattern::new(vec![1; 20]).unwrap();
    let bits = encode(&model, &psi, &[bin_index(&g, 1.0).unwrap(); 20]).unwrap();
    assert!(bits.len() <= 2);
}
