use proptest::prelude::*;
use texdcn::kmeans;
use texdcn::linker::{fit_lasso, lasso_objective, soft_threshold, spearman};
use texdcn::signature::Signature;
use texdcn::synth::score_labels;
use texdcn::volume_io::patch_shares;

fn points(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 3..max_n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signature_proportions_sum_to_one(counts in prop::collection::vec(0usize..500, 2..16)) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        let s = Signature::from_counts("c", &counts).unwrap();
        prop_assert!((s.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(s.proportions.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert_eq!(s.window_count, counts.iter().sum::<usize>());
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero(z in -100.0f64..100.0, gamma in 0.0f64..50.0) {
        let s = soft_threshold(z, gamma);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        prop_assert!((s.abs() - (z.abs() - gamma).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn patch_shares_are_balanced(total in 0usize..100_000, cases in 1usize..64) {
        let shares = patch_shares(total, cases);
        prop_assert_eq!(shares.len(), cases);
        prop_assert_eq!(shares.iter().sum::<usize>(), total);
        prop_assert!(shares.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
    }

    #[test]
    fn lloyd_cost_never_increases(pts in points(40), k in 2usize..4, seed in any::<u64>()) {
        prop_assume!(pts.len() >= k);
        let init = kmeans::kmeans_pp_seed(&pts, k, seed).unwrap();
        let fit = kmeans::lloyd(&pts, &init, kmeans::DEFAULT_MAX_ITER, 0.0).unwrap();
        prop_assert!(fit.cost_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(fit.assignment.len(), pts.len());
        prop_assert!(fit.assignment.iter().all(|&a| a < k));
    }

    #[test]
    fn lasso_objective_is_monotone(
        x in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 6..20),
        w in prop::collection::vec(-2.0f64..2.0, 3),
        alpha in 0.0f64..1.0,
    ) {
        let y: Vec<f64> = x.iter().map(|r| r.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        let m = fit_lasso(&x, &y, alpha, 100_000, 1e-10).unwrap();
        prop_assert!(m.objective_history.windows(2).all(|h| h[1] <= h[0] + 1e-12 * h[0].abs().max(1.0)));
        prop_assert!(lasso_objective(&m, &x, &y).is_finite());
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..30),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Some(r) = spearman(&a, &b) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((spearman(&b, &a).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn nmi_is_label_permutation_invariant(
        labels in prop::collection::vec((0u8..2, 0usize..5), 10..200),
    ) {
        let (truth, pred): (Vec<u8>, Vec<usize>) = labels.into_iter().unzip();
        let a = score_labels(&truth, &pred).unwrap();
        let renamed: Vec<usize> = pred.iter().map(|p| 4 - p).collect();
        let b = score_labels(&truth, &renamed).unwrap();
        prop_assert!((a.nmi - b.nmi).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a.nmi));
        prop_assert!((0.0..=1.0).contains(&a.purity));
    }
}

#[test]
fn identical_labelings_have_unit_nmi() {
    let truth: Vec<u8> = (0..60).map(|i| (i % 2) as u8).collect();
    let pred: Vec<usize> = truth.iter().map(|&t| t as usize).collect();
    let s = score_labels(&truth, &pred).unwrap();
    assert!((s.nmi - 1.0).abs() < 1e-12);
    assert_eq!(s.purity, 1.0);
}
