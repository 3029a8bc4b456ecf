use passivate::signal::{
    dissipation_margin, dissipation_margin_all, inner_product, l2_norm_sq, SignalTrace, SupplyRateSpec,
};
use proptest::prelude::*;

fn trace(values: Vec<f64>, dt: f64) -> SignalTrace {
    SignalTrace::scalar(0.0, dt, values).unwrap()
}

fn paired(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|len| {
        (
            prop::collection::vec(-10.0..10.0f64, len),
            prop::collection::vec(-10.0..10.0f64, len),
        )
    })
}

proptest! {
    #[test]
    fn norm_is_nonnegative_and_monotone(values in prop::collection::vec(-5.0..5.0f64, 2..200)) {
        let x = trace(values, 0.01);
        let mut prev = 0.0;
        for k in 0..x.len() {
            let e = l2_norm_sq(&x, x.time(k)).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert!(e >= prev - 1e-12);
            prev = e;
        }
    }

    #[test]
    fn inner_product_is_symmetric((a, b) in paired(2..100), frac in 0.0..1.0f64) {
        let (x, y) = (trace(a, 0.01), trace(b, 0.01));
        let t = frac * x.end_time();
        let xy = inner_product(&x, &y, t).unwrap();
        let yx = inner_product(&y, &x, t).unwrap();
        prop_assert_eq!(xy, yx);
    }

    #[test]
    fn inner_product_is_bilinear((a, b) in paired(2..100), c in -3.0..3.0f64) {
        let n = a.len();
        let x = trace(a.clone(), 0.01);
        let y = trace(b.clone(), 0.01);
        let z = trace((0..n).map(|k| c * a[k] + b[k]).collect(), 0.01);
        let w = trace(b.iter().rev().copied().collect(), 0.01);
        let t = x.end_time();
        let lhs = inner_product(&z, &w, t).unwrap();
        let rhs = c * inner_product(&x, &w, t).unwrap() + inner_product(&y, &w, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn passive_margin_is_min_inner_product((a, b) in paired(2..80)) {
        let (u, y) = (trace(a, 0.05), trace(b, 0.05));
        let direct = (0..u.len())
            .map(|k| inner_product(&u, &y, u.time(k)).unwrap())
            .fold(f64::INFINITY, f64::min);
        let margin = dissipation_margin_all(&u, &y, SupplyRateSpec::PASSIVE).unwrap();
        prop_assert!((margin - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn coarser_grid_never_lowers_margin(
        (a, b) in paired(4..80),
        keep in prop::collection::vec(any::<bool>(), 80),
        eps in -1.0..1.0f64,
        delta in -1.0..1.0f64,
    ) {
        let (u, y) = (trace(a, 0.02), trace(b, 0.02));
        let spec = SupplyRateSpec::new(eps, delta);
        let fine: Vec<f64> = (0..u.len()).map(|k| u.time(k)).collect();
        let mut coarse: Vec<f64> = fine.iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| *t).collect();
        if coarse.is_empty() {
            coarse.push(fine[0]);
        }
        let m_fine = dissipation_margin(&u, &y, spec, &fine).unwrap();
        let m_coarse = dissipation_margin(&u, &y, spec, &coarse).unwrap();
        prop_assert!(m_coarse >= m_fine);
    }
}

#[test]
fn quadrature_error_shrinks_quadratically() {
    // On [0, 1]: ∫ sin·cos = sin²(1)/2 and ∫ sin² = 1/2 − sin(2)/4.
    let sc = 1f64.sin().powi(2) / 2.0;
    let ss = 0.5 - 2f64.sin() / 4.0;
    let err = |n: usize| {
        let dt = 1.0 / n as f64;
        let s = SignalTrace::from_fn(0.0, dt, n + 1, f64::sin).unwrap();
        let c = SignalTrace::from_fn(0.0, dt, n + 1, f64::cos).unwrap();
        let t = s.end_time();
        let e1 = (inner_product(&s, &c, t).unwrap() - sc).abs();
        let e2 = (inner_product(&s, &s, t).unwrap() - ss).abs();
        e1.max(e2)
    };
    let (coarse, fine) = (err(100), err(200));
    assert!(fine <= 1e-5, "error {fine}");
    let ratio = coarse / fine;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}
