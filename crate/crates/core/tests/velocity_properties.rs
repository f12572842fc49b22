use edgefs_core::velocity_estimator::{
    compute_metrics, fit_velocity, fit_velocity_robust, median_filter_velocity, FitPoint, VelocityEstimate,
};
use proptest::prelude::*;

fn est(vx: f64, vy: f64) -> VelocityEstimate<f64> {
    VelocityEstimate {
        vx_m_s: vx,
        vy_m_s: vy,
        n_points: 30,
        residual_rms: 0.0,
        timestamp_s: 0.0,
        valid: true,
    }
}

proptest! {
    #[test]
    fn planted_line_recovered(vx in -2.0f64..2.0, vy in -2.0f64..2.0, n in 20usize..100) {
        let pts: Vec<FitPoint<f64>> = (0..n)
            .map(|i| {
                let x = -0.5 + i as f64 / n as f64;
                FitPoint { x_norm: x, y_scaled: vx * x - vy }
            })
            .collect();
        let e = fit_velocity(&pts, 20, 0.0);
        prop_assert!(e.valid);
        prop_assert!((e.vx_m_s - vx).abs() < 1e-12);
        prop_assert!((e.vy_m_s - vy).abs() < 1e-12);
        prop_assert!(e.residual_rms >= 0.0 && e.residual_rms < 1e-12);
    }

    #[test]
    fn median_bounded_by_window(vals in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..=5)) {
        let window: Vec<_> = vals.iter().map(|&(a, b)| est(a, b)).collect();
        let m = median_filter_velocity(&window).unwrap();
        let lo = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m.vx_m_s >= lo && m.vx_m_s <= hi);
    }

    #[test]
    fn median_idempotent_on_constant(v in -3.0f64..3.0, n in 1usize..=5) {
        let m = median_filter_velocity(&vec![est(v, -v); n]).unwrap();
        prop_assert_eq!(m.vx_m_s, v);
        prop_assert_eq!(m.vy_m_s, -v);
    }

    #[test]
    fn self_correlation_is_one(xs in proptest::collection::vec(-5.0f64..5.0, 2..60)) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        let r = compute_metrics(&xs, &xs).unwrap();
        prop_assert_eq!(r.mse, 0.0);
        prop_assert!((r.nmxm.unwrap() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.25).collect();
        let r = compute_metrics(&shifted, &xs).unwrap();
        prop_assert!(r.mse >= 0.0 && (r.mse - 0.0625).abs() < 1e-12);
        prop_assert!(r.var.abs() < 1e-12);
    }

    #[test]
    fn robust_fit_ignores_gross_outliers(
        vx in -1.0f64..1.0,
        vy in -1.0f64..1.0,
        n in 40usize..100,
        bad in proptest::collection::vec((0usize..100, -5.0f64..5.0), 0..10),
    ) {
        let mut pts: Vec<FitPoint<f64>> = (0..n)
            .map(|i| {
                let x = -0.4 + 0.8 * i as f64 / n as f64;
                // small deterministic jitter so the MAD is not zero
                let jitter = 1e-3 * ((i * 7919) % 13) as f64 / 13.0;
                FitPoint { x_norm: x, y_scaled: vx * x - vy + jitter }
            })
            .collect();
        for (i, off) in &bad {
            let p = &mut pts[i % n];
            p.y_scaled += if off.abs() < 0.5 { 0.5f64.copysign(*off) } else { *off };
        }
        let e = fit_velocity_robust(&pts, 20, 0.0);
        prop_assert!(e.valid);
        prop_assert!((e.vx_m_s - vx).abs() < 5e-3, "vx {} vs {}", e.vx_m_s, vx);
        prop_assert!((e.vy_m_s - vy).abs() < 5e-3, "vy {} vs {}", e.vy_m_s, vy);
    }

    #[test]
    fn robust_fit_matches_ols_on_clean_line(vx in -2.0f64..2.0, vy in -2.0f64..2.0, n in 20usize..100) {
        let pts: Vec<FitPoint<f64>> = (0..n)
            .map(|i| {
                let x = -0.5 + i as f64 / n as f64;
                FitPoint { x_norm: x, y_scaled: vx * x - vy }
            })
            .collect();
        let a = fit_velocity(&pts, 20, 0.0);
        let b = fit_velocity_robust(&pts, 20, 0.0);
        prop_assert_eq!(b.n_points, n);
        prop_assert!((a.vx_m_s - b.vx_m_s).abs() < 1e-9 && (a.vy_m_s - b.vy_m_s).abs() < 1e-9);
    }
}

#[test]
fn robust_fit_counts_inliers_only() {
    let mut pts: Vec<FitPoint<f64>> = (0..30)
        .map(|i| {
            let x = -0.3 + 0.02 * i as f64;
            FitPoint {
                x_norm: x,
                y_scaled: 0.2 * x - 0.3 + 1e-4 * (i % 3) as f64,
            }
        })
        .collect();
    for k in 0..5 {
        pts.push(FitPoint {
            x_norm: -0.25 + 0.1 * k as f64,
            y_scaled: 4.0,
        });
    }
    let e = fit_velocity_robust(&pts, 20, 1.0);
    assert!(e.valid);
    assert_eq!(e.n_points, 30);
    assert!((e.vx_m_s - 0.2).abs() < 1e-3 && (e.vy_m_s - 0.3).abs() < 1e-3);
    assert_eq!(e.timestamp_s, 1.0);

    // too few points is invalid regardless of quality
    let e = fit_velocity_robust(&pts[..19], 20, 0.0);
    assert!(!e.valid);
    assert_eq!(e.n_points, 19);
}
