use proptest::prelude::*;
use qlwave::nullform::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn speeds(c: &[f64]) -> SpeedVector {
    SpeedVector::new(c.to_vec()).unwrap()
}

/// Q0 = X_0^2 - c^2 |X'|^2 placed in `b_{ll}^{i}`.
fn q0(coeffs: &mut CoefficientSet, i: usize, l: usize, c: f64) {
    coeffs.set(Tensor::B, &[i, l, l, 0, 0], 1.0).unwrap();
    coeffs.set(Tensor::B, &[i, l, l, 1, 1], -c * c).unwrap();
    coeffs.set(Tensor::B, &[i, l, l, 2, 2], -c * c).unwrap();
}

fn random_set(rng: &mut ChaCha8Rng, m: usize, entries: usize) -> CoefficientSet {
    let mut out = CoefficientSet::new(m);
    for _ in 0..entries {
        let tensor = [Tensor::A, Tensor::B, Tensor::C, Tensor::D][rng.gen_range(0..4)];
        let (nc, ng) = tensor.arity();
        let mut idx: Vec<usize> = (0..nc).map(|_| rng.gen_range(0..m)).collect();
        idx.extend((0..ng).map(|_| rng.gen_range(0..3)));
        out.set(tensor, &idx, rng.gen_range(-1.0..1.0)).unwrap();
    }
    out
}

/// Largest `|form|` over random cone points `(sigma c_l, cos, sin)`, scaled by
/// the coefficient magnitude so the decision is relative.
fn sampled_cone_max(
    coeffs: &CoefficientSet,
    s: &SpeedVector,
    kind: FormKind,
    pairs: &[(usize, usize)],
    n: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let &(i, l) = &pairs[rng.gen_range(0..pairs.len())];
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let sigma = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let x = [sigma * s.get(l), th.cos(), th.sin()];
        worst = worst.max(eval_form(kind, coeffs, i, l, x).unwrap().abs());
    }
    worst
}

fn all_pairs(m: usize, mode: NullMode) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|i| (0..m).map(move |l| (i, l)))
        .filter(|&(i, l)| mode == NullMode::Strong || i == l)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forms_are_homogeneous(seed in any::<u64>(), lambda in 0.1f64..5.0, x in prop::array::uniform3(-2.0f64..2.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = random_set(&mut rng, 2, 12);
        for kind in FormKind::ALL {
            for (i, l) in all_pairs(2, NullMode::Strong) {
                let base = eval_form(kind, &coeffs, i, l, x).unwrap();
                let scaled = eval_form(kind, &coeffs, i, l, x.map(|v| lambda * v)).unwrap();
                let expect = lambda.powi(kind.degree() as i32) * base;
                prop_assert!((scaled - expect).abs() <= 1e-10 * (1.0 + expect.abs()), "{kind:?} {scaled} vs {expect}");
            }
        }
    }

    #[test]
    fn exact_decision_agrees_with_cone_sampling(seed in any::<u64>(), null_like in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = speeds(&[1.0, 1.7]);
        let coeffs = if null_like {
            let mut c = CoefficientSet::new(2);
            q0(&mut c, 0, 0, 1.0);
            q0(&mut c, 1, 1, 1.7);
            q0(&mut c, 0, 1, 1.7);
            c
        } else {
            random_set(&mut rng, 2, 6)
        };
        for kind in FormKind::ALL {
            for mode in [NullMode::Strong, NullMode::Standard] {
                let report = check_null(&coeffs, &s, kind, mode).unwrap();
                prop_assert_eq!(report.holds, report.witnesses.is_empty());
                let sampled = sampled_cone_max(&coeffs, &s, kind, &all_pairs(2, mode), 1000, seed ^ 7);
                prop_assert_eq!(report.holds, sampled <= 1e-9, "{:?} {:?} sampled {}", kind, mode, sampled);
            }
        }
    }

    #[test]
    fn strong_implies_standard(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = speeds(&[1.0, 2.0]);
        let mut coeffs = CoefficientSet::new(2);
        q0(&mut coeffs, 0, 0, 1.0);
        q0(&mut coeffs, 1, 1, 2.0);
        if rng.gen_bool(0.5) {
            q0(&mut coeffs, 0, 1, 2.0);
        } else {
            coeffs.set(Tensor::B, &[0, 1, 1, 0, 0], rng.gen_range(0.1..1.0)).unwrap();
        }
        let strong = check_null(&coeffs, &s, FormKind::Psi, NullMode::Strong).unwrap();
        let standard = check_null(&coeffs, &s, FormKind::Psi, NullMode::Standard).unwrap();
        prop_assert!(!strong.holds || standard.holds);
        // the diagonal parts are Q0 forms for their own speed
        prop_assert!(standard.holds);
    }

    #[test]
    fn structure_and_symmetry_ignore_insertion_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = random_set(&mut rng, 2, 10);
        let mut records = coeffs.to_records();
        records.reverse();
        let rebuilt = CoefficientSet::from_records(2, &records).unwrap();
        prop_assert_eq!(check_structure(&coeffs), check_structure(&rebuilt));
        prop_assert_eq!(check_symmetry(&coeffs, 1e-12), check_symmetry(&rebuilt, 1e-12));
    }
}

#[test]
fn mixed_speed_q0_witness_has_the_cone_value() {
    let s = speeds(&[1.0, 2.0]);
    let mut coeffs = CoefficientSet::new(2);
    q0(&mut coeffs, 0, 1, 1.0);
    let report = check_null(&coeffs, &s, FormKind::Psi, NullMode::Strong).unwrap();
    assert!(!report.holds);
    for w in report.witnesses.iter().filter(|w| w.sign > 0) {
        assert_eq!((w.i, w.l), (0, 1));
        assert!((w.value - 3.0).abs() < 1e-12, "{w:?}");
    }
    let standard = check_null(&coeffs, &s, FormKind::Psi, NullMode::Standard).unwrap();
    assert!(standard.holds);
}

#[test]
fn symmetrized_cross_coupling_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut coeffs = CoefficientSet::new(2);
    for j in 0..2 {
        for ga in 0..3 {
            for al in 0..3 {
                for be in al..3 {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    for (p, q) in [(al, be), (be, al)] {
                        coeffs.set(Tensor::A, &[0, 1, j, p, q, ga], v).unwrap();
                        coeffs.set(Tensor::A, &[1, 0, j, p, q, ga], v).unwrap();
                    }
                }
            }
        }
    }
    // brute-force index loop over the required identities
    let mut symmetric = true;
    for i in 0..2 {
        for l in 0..2 {
            for j in 0..2 {
                for ga in 0..3 {
                    for al in 0..3 {
                        for be in 0..3 {
                            let v = coeffs.get(Tensor::A, &[i, l, j, al, be, ga]);
                            symmetric &= v == coeffs.get(Tensor::A, &[l, i, j, al, be, ga]);
                            symmetric &= v == coeffs.get(Tensor::A, &[l, i, j, be, al, ga]);
                        }
                    }
                }
            }
        }
    }
    assert!(symmetric);
    assert!(check_symmetry(&coeffs, 1e-12));
    coeffs.set(Tensor::A, &[0, 1, 0, 0, 1, 2], 5.0).unwrap();
    assert!(!check_symmetry(&coeffs, 1e-12));
}

#[test]
fn smallness_matches_brute_force_sample() {
    let s = speeds(&[1.0]);
    let mut coeffs = CoefficientSet::new(1);
    coeffs.set(Tensor::A, &[0, 0, 0, 0, 0, 0], 1.0).unwrap();
    // A^{00} = a^{000} v_0, so the sampled supremum is the bound itself
    let sup = (0..=64)
        .map(|k| (-1.0 + 2.0 * k as f64 / 64.0) * 0.01)
        .fold(0.0f64, |a, v: f64| a.max(v.abs()));
    assert!((sup - 0.01).abs() < 1e-15);
    assert!(sup < smallness_threshold(&s));
    assert!(check_smallness(&coeffs, &s, 0.01));
    assert!(!check_smallness(&coeffs, &s, 1.0));
}
