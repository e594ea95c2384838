use proptest::prelude::*;
use robustcov::diagnostics::{f_stat_bruteforce, f_stat_greedy_path};
use robustcov::directions::DirectionSet;
use robustcov::scalar::{epsilon_lower_bound, trimmed_mean, DiscreteDistribution};
use robustcov::simulation::contamination::{budget, changed_rows, contaminate};
use robustcov::simulation::{sample_gaussian, Adversary, ContaminationSpec};
use robustcov::truncation::{capped_second_moment, norm_truncate, psi, psi_band};
use robustcov::{psd_project, sample_covariance, Exec, PsdMatrix, Sample, SymMatrix};

fn finite() -> impl Strategy<Value = f64> {
    -1e6f64..1e6
}

fn sym_matrix(d: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-10.0f64..10.0, d * d).prop_map(move |v| {
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] = 0.5 * (v[i * d + j] + v[j * d + i]);
            }
        }
        SymMatrix::from_row_major(d, m).unwrap()
    })
}

fn adversary() -> impl Strategy<Value = Adversary> {
    prop_oneof![
        Just(Adversary::None),
        (1.0f64..1e3).prop_map(|m| Adversary::FixedOutlier { magnitude: m, direction: None, relative_to_trace: false }),
        prop_oneof![0.01f64..0.9, 1.1f64..50.0].prop_map(|f| Adversary::VarianceInflation { factor: f }),
        Just(Adversary::QuantileReplace),
    ]
}

proptest! {
    #[test]
    fn psi_odd_bounded_lipschitz(x in finite(), y in finite()) {
        prop_assert_eq!(psi(-x), -psi(x));
        prop_assert!(psi(x).abs() <= 1.0);
        prop_assert!((psi(x) - psi(y)).abs() <= (x - y).abs());
    }

    #[test]
    fn band_with_equal_levels_is_rescaled_psi(x in finite(), l in 1e-3f64..1e3) {
        let a = psi(l * x) / l;
        let b = psi_band(x, l, l).unwrap();
        prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }

    #[test]
    fn capped_moment_is_monotone_in_cap(p in prop::collection::vec(-10.0f64..10.0, 1..50), c in 0.0f64..50.0, dc in 0.0f64..50.0) {
        let lo = capped_second_moment(&p, c);
        let hi = capped_second_moment(&p, c + dc);
        prop_assert!(lo <= hi + 1e-12);
        prop_assert!(lo <= c + 1e-12);
    }

    #[test]
    fn norm_truncation_bounds_rows(seed in 0u64..1000, r in 0.5f64..5.0) {
        let s = sample_gaussian(&PsdMatrix::identity(3), 40, seed).unwrap();
        let t = norm_truncate(&s, r).unwrap();
        for (a, b) in s.rows().zip(t.rows()) {
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na > r {
                prop_assert!(b.iter().all(|x| *x == 0.0));
            } else {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn psd_projection_is_psd_and_idempotent(m in sym_matrix(4)) {
        let p = psd_project(&m);
        prop_assert!(p.eigen().values.iter().all(|&l| l >= -1e-9));
        let pp = psd_project(&p);
        prop_assert!(pp.max_abs_diff(&p) <= 1e-9 * (1.0 + p.op_norm()));
        // Nearest in operator norm among PSD matrices: the distance is the
        // most negative eigenvalue.
        let neg = m.eigen().values.iter().fold(0.0f64, |a, &l| a.max(-l));
        prop_assert!((m.sub(&p).op_norm() - neg).abs() <= 1e-9 * (1.0 + m.op_norm()));
    }

    #[test]
    fn contamination_modifies_exactly_the_budget(seed in 0u64..500, eta in 0.0f64..0.5, n in 10usize..200, adv in adversary()) {
        let s = sample_gaussian(&PsdMatrix::identity(3), n, seed).unwrap();
        let spec = ContaminationSpec { adversary: adv.clone(), eta };
        let c = contaminate(&s, &spec, seed + 1).unwrap();
        let expected = if adv == Adversary::None { 0 } else { budget(eta, n) };
        prop_assert_eq!(changed_rows(&s, &c), expected);
    }

    #[test]
    fn trimmed_mean_permutation_invariant(v in prop::collection::vec(-100.0f64..100.0, 20), seed in any::<u64>()) {
        let base = trimmed_mean(&v, 0.1).unwrap();
        let (first, second) = v.split_at(10);
        let mut f = first.to_vec();
        let mut s = second.to_vec();
        let k = (seed % 10) as usize;
        f.rotate_left(k);
        s.reverse();
        let mut w = f;
        w.extend(s);
        prop_assert!((trimmed_mean(&w, 0.1).unwrap() - base).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn trimmed_mean_monotone(v in prop::collection::vec(-100.0f64..100.0, 20), i in 0usize..20, bump in 0.0f64..50.0) {
        let mut w = v.clone();
        w[i] += bump;
        prop_assert!(trimmed_mean(&w, 0.15).unwrap() >= trimmed_mean(&v, 0.15).unwrap() - 1e-12);
    }

    #[test]
    fn lower_bound_is_homogeneous(c in 0.01f64..100.0, eta in 0.01f64..0.25) {
        let d = DiscreteDistribution::new(vec![(-3.0, 0.05), (-1.0, 0.4), (0.5, 0.45), (7.0, 0.1)]).unwrap();
        let a = epsilon_lower_bound(&d.scaled(c), eta).unwrap();
        let b = c * epsilon_lower_bound(&d, eta).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn f_stat_monotone_and_greedy_below_brute(seed in 0u64..200) {
        let s = sample_gaussian(&PsdMatrix::identity(3), 9, seed).unwrap();
        let greedy = f_stat_greedy_path(&s, 4).unwrap();
        let mut prev = 0.0;
        for k in 1..=4 {
            let b = f_stat_bruteforce(&s, k, Exec::Sequential).unwrap();
            prop_assert!(b >= prev);
            prop_assert!(greedy[k - 1] <= b);
            prev = b;
        }
        prop_assert!(greedy.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn direction_set_dedups_up_to_sign(v in prop::collection::vec(-5.0f64..5.0, 3), c in 0.1f64..10.0) {
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let mut ds = DirectionSet::new(3, vec![v.clone()], 0).unwrap();
        let neg: Vec<f64> = v.iter().map(|x| -c * x).collect();
        prop_assert!(!ds.push(neg).unwrap());
        prop_assert_eq!(ds.len(), 1);
    }

    #[test]
    fn sample_covariance_is_psd_and_scales_quadratically(seed in 0u64..300, t in 0.1f64..10.0) {
        let s = sample_gaussian(&PsdMatrix::identity(3), 30, seed).unwrap();
        let a = sample_covariance(&s);
        let b = sample_covariance(&s.scaled(t));
        prop_assert!(b.max_abs_diff(&a.scaled(t * t)) <= 1e-10 * t * t * (1.0 + a.op_norm()));
        prop_assert!(a.eigen().values.iter().all(|&l| l >= -1e-12));
    }
}

#[test]
fn psi_grid_properties() {
    let grid: Vec<f64> = (0..100_000).map(|i| -50.0 + 100.0 * i as f64 / 99_999.0).collect();
    for w in grid.windows(2) {
        assert!(psi(w[1]) >= psi(w[0]));
        assert!((psi(w[1]) - psi(w[0])).abs() <= (w[1] - w[0]) + 1e-15);
    }
    let s = Sample::zeros(4, 2);
    assert!(s.is_zero());
}
