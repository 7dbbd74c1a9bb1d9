use fsar_core::stats::{cohens_d_paired, compare, paired_t, wilcoxon_signed_rank, WILCOXON_EXACT_MAX};
use proptest::prelude::*;

#[path = "support/oracle.rs"]
mod oracle;
use oracle::{normal_pdf, oracle, simpson, DATASETS};

#[test]
fn fixed_datasets_match_literal_oracle() {
    for (xs, ys) in DATASETS {
        let o = oracle(&xs, &ys);
        let (t, p) = paired_t(&xs, &ys).unwrap();
        let d = cohens_d_paired(&xs, &ys).unwrap();
        let (w, wp) = wilcoxon_signed_rank(&xs, &ys).unwrap();
        assert!((t - o.t).abs() < 1e-9, "t {t} vs {}", o.t);
        assert!((p - o.p).abs() < 1e-9, "p {p} vs {}", o.p);
        assert!((d - o.d).abs() < 1e-9, "d {d} vs {}", o.d);
        assert!((w - o.w).abs() < 1e-9, "w {w} vs {}", o.w);
        assert!((wp - o.wp).abs() < 1e-9, "wilcoxon p {wp} vs {}", o.wp);
    }
}

#[test]
fn identical_input_gives_null_result() {
    let xs = [0.4, 0.1, 0.9, 0.3];
    let r = compare(&xs, &xs).unwrap();
    assert_eq!(r.t_statistic, 0.0);
    assert_eq!(r.p_value, 1.0);
    assert_eq!(r.cohens_d, 0.0);
}

#[test]
fn large_sample_uses_corrected_normal_approximation() {
    let n = WILCOXON_EXACT_MAX + 5;
    // Distinct magnitudes, so no tie correction applies.
    let xs: Vec<f64> = (0..n).map(|i| (i + 1) as f64 * if i % 3 == 0 { -0.1 } else { 0.1 }).collect();
    let ys = vec![0.0; n];
    let (w, p) = wilcoxon_signed_rank(&xs, &ys).unwrap();

    let nz: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let m = nz.len() as f64;
    let ranks: Vec<f64> = nz
        .iter()
        .map(|d| {
            let less = nz.iter().filter(|o| o.abs() < d.abs()).count() as f64;
            let equal = nz.iter().filter(|o| o.abs() == d.abs()).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    assert!((w - w_plus.min(m * (m + 1.0) / 2.0 - w_plus)).abs() < 1e-9);
    let mean = m * (m + 1.0) / 4.0;
    let sd = (m * (m + 1.0) * (2.0 * m + 1.0) / 24.0).sqrt();
    let z = ((w_plus - mean).abs() - 0.5) / sd;
    let expected = 1.0 - 2.0 * simpson(normal_pdf, 0.0, z, 200_000);
    assert!((p - expected).abs() < 1e-9, "{p} vs {expected}");
}

proptest! {
    #[test]
    fn results_are_well_formed(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40)) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = compare(&xs, &ys).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!((0.0..=1.0).contains(&r.wilcoxon_p));
        prop_assert!(r.cohens_d >= 0.0);
        let swapped = compare(&ys, &xs).unwrap();
        prop_assert_eq!(swapped.sign, -r.sign);
        prop_assert!((swapped.cohens_d - r.cohens_d).abs() < 1e-12);
        prop_assert!((swapped.p_value - r.p_value).abs() < 1e-12);
        prop_assert!((swapped.wilcoxon_p - r.wilcoxon_p).abs() < 1e-12);
    }
}
