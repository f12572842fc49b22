use edgefs_core::block_matcher::{block_cost, match_profiles, MatchConfig, MatchProfile};
use edgefs_core::edge_distribution::EdgeDistribution;
use edgefs_core::oracles::exhaustive_match_1d;
use proptest::prelude::*;

fn dist(v: Vec<u32>) -> EdgeDistribution {
    EdgeDistribution::new(v, 0.0)
}

/// Moves content `k` columns right (negative: left); vacated cells take `fill`.
fn shifted(v: &[u32], k: i32, fill: &[u32]) -> Vec<u32> {
    let n = v.len() as i32;
    (0..n)
        .map(|i| {
            let src = i - k;
            if (0..n).contains(&src) {
                v[src as usize]
            } else {
                fill[i as usize % fill.len()]
            }
        })
        .collect()
}

fn config() -> impl Strategy<Value = MatchConfig> {
    (1usize..=6, 1usize..=12, any::<bool>()).prop_map(|(hw, r, sub)| MatchConfig::new(2 * hw + 1, r).with_subpixel(sub))
}

fn assert_same(a: &MatchProfile<f64>, b: &MatchProfile<f64>) {
    assert_eq!(a.valid, b.valid);
    assert_eq!(a.low_confidence, b.low_confidence);
    for i in 0..a.width() {
        if a.searched(i) || b.searched(i) {
            assert_eq!(a.integer_px[i], b.integer_px[i], "column {i}");
            assert_eq!(a.cost[i], b.cost[i], "column {i}");
            assert_eq!(
                a.displacement_px[i].to_bits(),
                b.displacement_px[i].to_bits(),
                "column {i}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    // small alphabets force many equal-cost ties
    #[test]
    fn agrees_with_exhaustive_search(
        len in 40usize..140,
        alphabet in prop_oneof![Just(3u32), Just(50u32), Just(5000u32)],
        seed in proptest::collection::vec(any::<u32>(), 280),
        shift_seed in proptest::collection::vec(-4i32..=4, 140),
        use_shift in any::<bool>(),
        cfg in config(),
    ) {
        prop_assume!(len > 2 * cfg.excluded_border());
        let r: Vec<u32> = seed[..len].iter().map(|s| s % alphabet).collect();
        let t: Vec<u32> = seed[140..140 + len].iter().map(|s| s % alphabet).collect();
        let shifts: Vec<i32> = if use_shift { shift_seed[..len].to_vec() } else { vec![0; len] };
        let fast: MatchProfile<f64> = match_profiles(&dist(r.clone()), &dist(t.clone()), &cfg, &shifts).unwrap();
        let slow: MatchProfile<f64> = exhaustive_match_1d(&dist(r), &dist(t), &cfg, &shifts).unwrap();
        assert_same(&fast, &slow);
    }

    #[test]
    fn agrees_with_exhaustive_search_asymmetric_bounds(
        seed in proptest::collection::vec(0u32..400, 192),
        lo in -10i32..=0,
        hi in 0i32..=10,
    ) {
        let cfg = MatchConfig::new(7, 10).with_search_bounds(lo, hi);
        let (r, t) = (dist(seed[..96].to_vec()), dist(seed[96..].to_vec()));
        let fast: MatchProfile<f64> = match_profiles(&r, &t, &cfg, &[0; 96]).unwrap();
        let slow: MatchProfile<f64> = exhaustive_match_1d(&r, &t, &cfg, &[0; 96]).unwrap();
        assert_same(&fast, &slow);
    }

    #[test]
    fn shift_covariance(
        base in proptest::collection::vec(0u32..1000, 128),
        fill in proptest::collection::vec(0u32..1000, 16),
        k in -15i32..=15,
    ) {
        let cfg = MatchConfig::default();
        let target = shifted(&base, k, &fill);
        let p: MatchProfile<f64> = match_profiles(&dist(base), &dist(target), &cfg, &[0; 128]).unwrap();
        prop_assert!(p.valid_count() > 0);
        for i in (0..128).filter(|&i| p.valid[i]) {
            prop_assert_eq!(p.integer_px[i], k);
            prop_assert_eq!(p.displacement_px[i], f64::from(k));
        }
    }

    #[test]
    fn swapping_inputs_negates_displacement(
        base in proptest::collection::vec(0u32..1000, 128),
        fill in proptest::collection::vec(0u32..1000, 16),
        k in -12i32..=12,
    ) {
        let cfg = MatchConfig::default();
        let a = dist(base.clone());
        let b = dist(shifted(&base, k, &fill));
        let fwd: MatchProfile<f64> = match_profiles(&a, &b, &cfg, &[0; 128]).unwrap();
        let back: MatchProfile<f64> = match_profiles(&b, &a, &cfg, &[0; 128]).unwrap();
        let mut checked = 0;
        for i in 0..128i32 {
            let j = i + fwd.integer_px[i as usize];
            if fwd.valid[i as usize] && (0..128).contains(&j) && back.valid[j as usize] {
                prop_assert_eq!(back.integer_px[j as usize], -fwd.integer_px[i as usize]);
                checked += 1;
            }
        }
        prop_assert!(checked > 0);
    }

    #[test]
    fn wider_window_costs_at_least_as_much(
        r in proptest::collection::vec(any::<u16>(), 64),
        t in proptest::collection::vec(any::<u16>(), 64),
        center in 10usize..54,
        offset in -4isize..=4,
        hw in 1usize..=4,
    ) {
        let r: Vec<u32> = r.into_iter().map(u32::from).collect();
        let t: Vec<u32> = t.into_iter().map(u32::from).collect();
        let small = block_cost(&r, &t, center, offset, 2 * hw + 1).unwrap();
        let large = block_cost(&r, &t, center, offset, 2 * hw + 3).unwrap();
        prop_assert!(large >= small);
    }

    #[test]
    fn displacement_bounded_and_border_invalid(
        seed in proptest::collection::vec(0u32..2000, 256),
        cfg in config(),
    ) {
        let (r, t) = (dist(seed[..128].to_vec()), dist(seed[128..].to_vec()));
        let p: MatchProfile<f64> = match_profiles(&r, &t, &cfg, &[0; 128]).unwrap();
        let border = cfg.excluded_border();
        for i in 0..128 {
            if i < border || i >= 128 - border {
                prop_assert!(!p.valid[i]);
            }
            if p.valid[i] {
                prop_assert!(p.displacement_px[i].abs() <= cfg.search_range_px as f64 + 0.5);
            }
        }
    }
}

#[test]
fn shifted_impulse_train_by_seven() {
    let mut base = vec![0u32; 128];
    let mut pos = 2;
    let mut gap = 3;
    while pos < 128 {
        base[pos] = 40 + (pos as u32 * 37) % 200;
        pos += gap;
        gap = 3 + (gap * 5 + 1) % 7;
    }
    let target = shifted(&base, 7, &[0]);
    let p: MatchProfile<f64> = match_profiles(&dist(base), &dist(target), &MatchConfig::default(), &[0; 128]).unwrap();
    assert!(p.valid_count() > 50);
    assert!((0..128).filter(|&i| p.valid[i]).all(|i| p.displacement_px[i] == 7.0));
}
