use msecg_demo::ops::{degrade, filter_response, scan_impulse, DEMO_FS, DEMO_SECONDS};

#[test]
fn filter_response_hits_minus_3db_at_cutoffs() {
    let fs = 500.0;
    let points = 501; // 0.5 Hz spacing
    let g = filter_response(1.0, 45.0, fs, 2, points).unwrap();
    assert_eq!(g.len(), points);
    let at = |f: f64| g[(f / 0.5).round() as usize];
    assert!((at(1.0) + 3.0103).abs() < 0.01, "{}", at(1.0));
    assert!((at(45.0) + 3.0103).abs() < 0.01, "{}", at(45.0));
    assert!(at(10.0).abs() < 0.1);
    assert!(g[0].is_nan() || g[0] <= -100.0, "DC gain {}", g[0]);
    assert!(filter_response(1.0, 45.0, fs, 2, 1).is_err());
    assert!(filter_response(45.0, 1.0, fs, 2, 10).is_err());
}

#[test]
fn clean_degradation_keeps_knots_and_lengths() {
    let d = degrade(7, 10, "none", 0.0).unwrap();
    let n = (DEMO_FS * DEMO_SECONDS) as usize;
    let (gt, lr, li) = (d.gt(), d.lr(), d.li());
    assert_eq!((gt.len(), lr.len(), li.len()), (n, n / 10, n));
    for k in 0..lr.len() {
        assert_eq!(lr[k], gt[10 * k]);
        assert_eq!(li[10 * k], lr[k]);
    }
    let mse = gt.iter().zip(&li).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    assert!((d.mse() - mse).abs() <= 1e-15 * mse.max(1.0));
    assert!(d.snr_db().is_finite() && d.cos() > 0.5 && d.mad() > 0.0);
}

#[test]
fn noise_lowers_snr_and_bad_kinds_fail() {
    let clean = degrade(7, 10, "none", 0.0).unwrap();
    for kind in ["BW", "ma", "Em"] {
        let noisy = degrade(7, 10, kind, -5.0).unwrap();
        assert!(noisy.snr_db() < clean.snr_db(), "{kind}");
        assert_eq!(noisy.gt(), clean.gt());
    }
    assert!(degrade(7, 10, "xx", 0.0).is_err());
    assert!(degrade(7, 0, "none", 0.0).is_err());
}

#[test]
fn impulse_response_matches_closed_form() {
    let (ds, delta, len) = (4, 0.1, 300);
    for zoh in [false, true] {
        let r = scan_impulse(ds, delta, len, zoh).unwrap();
        assert!(r.max_abs_diff() < 1e-12);
        for (n, y) in r.sequential().iter().enumerate() {
            let want: f64 = (1..=ds)
                .map(|s| {
                    let a = -(s as f64);
                    let b0 = if zoh { ((delta * a).exp() - 1.0) / a } else { delta };
                    b0 * (delta * a * n as f64).exp()
                })
                .sum();
            assert!((y - want).abs() < 1e-12, "zoh={zoh} n={n}: {y} vs {want}");
        }
    }
    assert!(scan_impulse(0, 0.1, 10, false).is_err());
    assert!(scan_impulse(2, -0.1, 10, false).is_err());
}
